use chrono::{DateTime, FixedOffset};

use quickcount::bayes::credibility_level;
use quickcount::bootstrap::bootstrap_chamber;
use quickcount::io::{read_arrivals, write_arrivals};
use quickcount::mi::ImputationConfig;
use quickcount::poststrat::{build_hierarchy, profiles_from_returns};
use quickcount::replay::{replay, simulate_arrival, ArrivalBias, Method, ReplayConfig};
use quickcount::sampleframe::{StationReturn, StratifiedSample};
use quickcount::synth::{generate, SynthConfig, SynthElection};

fn start() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2021-06-06T18:30:00-05:00").unwrap()
}

fn election(seed: u64) -> (SynthElection, StratifiedSample) {
    let mut e = generate(&SynthConfig { strata: 12, stations: (30, 50), ..SynthConfig::default() }, seed).unwrap();
    let sample = e.plan_sample(&[6; 12], seed).unwrap();
    (e, sample)
}

fn returns(sample: &StratifiedSample) -> Vec<StationReturn> {
    sample.iter().cloned().collect()
}

#[test]
fn replay_accumulates_and_is_reproducible() {
    let (e, sample) = election(11);
    let all: Vec<StationReturn> = e.population.iter().cloned().collect();
    let hierarchy = build_hierarchy(&profiles_from_returns(&all, &e.catalog, 12).unwrap(), &[3, 6]).unwrap();
    let log = simulate_arrival(&e.frame, &returns(&sample), ArrivalBias::default(), start(), 2).unwrap();
    let config = ReplayConfig {
        cadence: chrono::Duration::minutes(30),
        seed: 5,
        draws: 500,
        bootstrap_reps: 50,
        imputation: ImputationConfig { m: 3, ..ImputationConfig::default() },
        ..ReplayConfig::default()
    };
    let series = replay(&log, &e.frame, &e.catalog, &hierarchy, &config).unwrap();
    assert!(series.ticks.len() > 2);
    assert!(series.audit.is_empty(), "{:?}", series.audit);
    assert!(series.ticks.windows(2).all(|w| w[0].received < w[1].received && w[0].timestamp < w[1].timestamp));
    let last = series.ticks.last().unwrap();
    assert_eq!(last.received, 72);
    for t in &series.ticks {
        let level = credibility_level(t.received, t.planned);
        for est in t.estimates.iter().filter(|x| x.method == Method::Bayes) {
            assert_eq!(est.level, level);
            assert!(est.lower <= est.upper);
        }
        assert!(t.estimates.iter().any(|x| x.method == Method::Mi), "tick {} lacks MI: {:?}", t.index, t.warnings);
    }
    let again = replay(&log, &e.frame, &e.catalog, &hierarchy, &config).unwrap();
    assert_eq!(again.ticks, series.ticks);

    let width = |t: &quickcount::replay::Tick| -> u32 {
        t.estimates.iter().filter(|x| x.method == Method::Bayes).map(|x| x.upper - x.lower).sum()
    };
    assert!(width(last) <= width(&series.ticks[0]));
}

#[test]
fn replay_audits_bad_events() {
    let (e, sample) = election(12);
    let all: Vec<StationReturn> = e.population.iter().cloned().collect();
    let hierarchy = build_hierarchy(&profiles_from_returns(&all, &e.catalog, 12).unwrap(), &[3, 6]).unwrap();
    let mut log = simulate_arrival(&e.frame, &returns(&sample), ArrivalBias::default(), start(), 3).unwrap();
    let dup = log[0].clone();
    log.push(dup);
    let stranger = e.population.iter().find(|r| e.frame.station(r.key()).is_some_and(|m| !m.sampled)).unwrap();
    log.push(quickcount::io::ArrivalEvent { timestamp: start(), ret: stranger.clone() });
    let config = ReplayConfig { methods: vec![Method::Bayes], draws: 200, ..ReplayConfig::default() };
    let series = replay(&log, &e.frame, &e.catalog, &hierarchy, &config).unwrap();
    let rejected: Vec<&String> = series.audit.iter().filter(|a| a.contains("rejected")).collect();
    assert_eq!(rejected.len(), 2, "{:?}", series.audit);
    assert!(rejected[0].contains("duplicate") && rejected[1].contains("not in the planned sample"));
    assert_eq!(series.ticks.last().unwrap().received, 72);
}

#[test]
fn arrival_log_round_trips() {
    let (e, sample) = election(13);
    let log = simulate_arrival(&e.frame, &returns(&sample), ArrivalBias::default(), start(), 4).unwrap();
    let mut buf = Vec::new();
    write_arrivals(&mut buf, &e.catalog, &log).unwrap();
    let back = read_arrivals(buf.as_slice(), &e.catalog, &e.frame).unwrap();
    assert_eq!(back, log);
}

#[test]
fn arrival_bias_orders_stations() {
    let (e, sample) = election(14);
    let r = returns(&sample);
    let rural = ArrivalBias { spread: 60.0, list: 0.0, rural: 1000.0, west: 0.0 };
    let log = simulate_arrival(&e.frame, &r, rural, start(), 1).unwrap();
    let urban = |ev: &quickcount::io::ArrivalEvent| e.frame.station(ev.ret.key()).unwrap().urban;
    let first_rural = log.iter().position(|ev| !urban(ev)).unwrap_or(log.len());
    assert!(log[first_rural..].iter().all(|ev| !urban(ev)));

    let none = ArrivalBias { spread: 0.0, list: 0.0, rural: 0.0, west: 0.0 };
    let flat = simulate_arrival(&e.frame, &r, none, start(), 1).unwrap();
    assert!(flat.iter().all(|ev| ev.timestamp == start()));

    // Larger lists arrive later on average under a positive list delay.
    let list_bias = ArrivalBias { spread: 240.0, list: 120.0, rural: 0.0, west: 0.0 };
    let median = {
        let mut lists: Vec<u32> = r.iter().map(|x| x.nominal_list).collect();
        lists.sort_unstable();
        lists[lists.len() / 2]
    };
    let (mut big, mut small) = (0.0, 0.0);
    for seed in 0..1000 {
        let log = simulate_arrival(&e.frame, &r, list_bias, start(), seed).unwrap();
        for ev in &log {
            let minutes = (ev.timestamp - start()).num_milliseconds() as f64 / 60_000.0;
            if ev.ret.nominal_list > median {
                big += minutes;
            } else {
                small += minutes;
            }
        }
    }
    let n_big = r.iter().filter(|x| x.nominal_list > median).count() as f64;
    let n_small = r.len() as f64 - n_big;
    assert!(big / n_big > small / n_small);
}

#[test]
fn thread_count_does_not_change_results() {
    let (e, sample) = election(15);
    let many = bootstrap_chamber(&sample, &e.frame, &e.catalog, 64, 9).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| bootstrap_chamber(&sample, &e.frame, &e.catalog, 64, 9).unwrap());
    assert_eq!(many.replicates, one.replicates);
}
