//! Election-night replay: rebuild the received sample at every update and
//! run the Bayesian and multiple-imputation pipelines on it.

use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, Duration, FixedOffset};
use log::{info, warn};
use rand::Rng;

use crate::bayes::{bayes_chamber, credibility_level, sufficient_stats};
use crate::bootstrap::{bootstrap_chamber, summarize};
use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::io::ArrivalEvent;
use crate::mi::{mi_chamber, ImputationConfig};
use crate::poststrat::{impute_missing_strata, ClusteringHierarchy, IMPUTATION_LIST};
use crate::rng::{self, domain};
use crate::sampleframe::{Frame, PartialSample, StationReturn, StratifiedSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Bayes,
    Mi,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bayes => "bayes",
            Method::Mi => "mi",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bayes" => Ok(Method::Bayes),
            "mi" | "freq" => Ok(Method::Mi),
            other => Err(Error::Input(format!("unknown method {other:?}"))),
        }
    }
}

/// Parses `5m`, `90s`, `1h` or a bare number of minutes.
pub fn parse_cadence(raw: &str) -> Result<Duration> {
    let raw = raw.trim();
    let bad = || Error::Input(format!("bad cadence {raw:?}"));
    let (num, unit) = match raw.char_indices().find(|(_, c)| c.is_ascii_alphabetic()) {
        Some((i, _)) => (&raw[..i], &raw[i..]),
        None => (raw, "m"),
    };
    let n: i64 = num.parse().map_err(|_| bad())?;
    let d = match unit {
        "s" => Duration::seconds(n),
        "m" | "min" => Duration::minutes(n),
        "h" => Duration::hours(n),
        _ => return Err(bad()),
    };
    if d <= Duration::zero() {
        return Err(bad());
    }
    Ok(d)
}

#[derive(Clone, Debug)]
pub struct ReplayConfig {
    pub cadence: Duration,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub draws: usize,
    pub bootstrap_reps: usize,
    pub imputation: ImputationConfig,
    /// Level of the frequentist intervals.
    pub level: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            cadence: Duration::minutes(5),
            methods: vec![Method::Bayes, Method::Mi],
            seed: 0,
            draws: 10_000,
            bootstrap_reps: 300,
            imputation: ImputationConfig::default(),
            level: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub method: Method,
    pub force: usize,
    pub lower: u32,
    pub upper: u32,
    pub point: f64,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tick {
    pub index: usize,
    pub timestamp: DateTime<FixedOffset>,
    pub received: usize,
    pub planned: usize,
    pub strata_with_data: usize,
    pub estimates: Vec<Estimate>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct EstimateSeries {
    pub ticks: Vec<Tick>,
    /// Rejected events and failed estimations.
    pub audit: Vec<String>,
}

/// Both pipelines on one received sample. A sample equal to the complete
/// planned sample makes the frequentist path the plain bootstrap.
pub fn estimate_tick(
    received: &StratifiedSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    hierarchy: &ClusteringHierarchy,
    config: &ReplayConfig,
) -> (Vec<Estimate>, Vec<String>) {
    let mut estimates = Vec::new();
    let mut notes = Vec::new();
    let planned = frame.planned_total();
    for &method in &config.methods {
        let result = match method {
            Method::Bayes => bayes_estimates(received, frame, catalog, hierarchy, config),
            Method::Mi => {
                if received.len() == planned && received.is_complete() {
                    bootstrap_chamber(received, frame, catalog, config.bootstrap_reps, config.seed).map(|run| {
                        (summarize(&run.replicates, catalog, config.level)
                            .into_iter()
                            .map(|s| Estimate {
                                method,
                                force: s.force,
                                lower: s.lower,
                                upper: s.upper,
                                point: s.point,
                                level: s.level,
                            })
                            .collect(), Vec::new())
                    })
                } else {
                    PartialSample::new(received.clone(), frame).and_then(|partial| {
                        mi_chamber(
                            &partial,
                            frame,
                            catalog,
                            &config.imputation,
                            config.bootstrap_reps,
                            config.seed,
                            config.level,
                        )
                    })
                    .map(|r| {
                        (r.forces
                            .into_iter()
                            .map(|f| Estimate {
                                method,
                                force: f.force,
                                lower: f.lower,
                                upper: f.upper,
                                point: f.pooled.q_bar,
                                level: f.pooled.level,
                            })
                            .collect(), r.warnings)
                    })
                }
            }
        };
        match result {
            Ok((e, w)) => {
                estimates.extend(e);
                notes.extend(w.into_iter().map(|w| format!("{}: {w}", method.as_str())));
            }
            Err(e) => notes.push(format!("{}: estimation failed: {e}", method.as_str())),
        }
    }
    (estimates, notes)
}

fn bayes_estimates(
    received: &StratifiedSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    hierarchy: &ClusteringHierarchy,
    config: &ReplayConfig,
) -> Result<(Vec<Estimate>, Vec<String>)> {
    let mut notes = Vec::new();
    let mut stats = Vec::with_capacity(received.strata.len());
    for stratum in &received.strata {
        let complete: Vec<StationReturn> = stratum.iter().filter(|r| r.is_complete()).cloned().collect();
        if complete.len() < stratum.len() {
            notes.push(format!("{} returns with missing cells left out", stratum.len() - complete.len()));
        }
        stats.push(sufficient_stats(&complete, catalog)?);
    }
    let stats = impute_missing_strata(&stats, hierarchy, IMPUTATION_LIST)?;
    let level = credibility_level(received.len(), frame.planned_total());
    let run = bayes_chamber(&stats, frame, catalog, config.draws, config.seed, level)?;
    let estimates = run
        .summaries
        .into_iter()
        .map(|s| Estimate {
            method: Method::Bayes,
            force: s.force,
            lower: s.lower,
            upper: s.upper,
            point: s.point,
            level: s.level,
        })
        .collect();
    Ok((estimates, notes))
}

/// Replays `log` at the configured cadence. Events for stations outside the
/// planned sample, and repeated stations, are rejected into the audit trail.
pub fn replay(
    log: &[ArrivalEvent],
    frame: &Frame,
    catalog: &ElectionCatalog,
    hierarchy: &ClusteringHierarchy,
    config: &ReplayConfig,
) -> Result<EstimateSeries> {
    if hierarchy.n_strata() != frame.n_strata() {
        return Err(Error::Input("hierarchy and frame disagree on the number of strata".into()));
    }
    let mut series = EstimateSeries::default();
    let mut events: Vec<&ArrivalEvent> = Vec::with_capacity(log.len());
    let mut seen = HashSet::new();
    if log.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        series.audit.push("log timestamps out of order; events sorted by time".into());
    }
    for e in log {
        let key = e.ret.key();
        let planned = frame.station(key).is_some_and(|s| s.sampled);
        if !planned {
            series.audit.push(format!("{}: rejected station {key:?}: not in the planned sample", e.timestamp));
        } else if e.ret.votes.len() != catalog.n_options() {
            series.audit.push(format!("{}: rejected station {key:?}: wrong number of vote cells", e.timestamp));
        } else if !seen.insert(key) {
            series.audit.push(format!("{}: rejected station {key:?}: duplicate report", e.timestamp));
        } else {
            events.push(e);
        }
    }
    events.sort_by_key(|e| e.timestamp);
    let Some(first) = events.first() else {
        return Ok(series);
    };
    let start = first.timestamp;
    let mut received = StratifiedSample::empty(frame.n_strata());
    let mut next = 0;
    let mut boundary = start;
    while next < events.len() {
        let before = next;
        while next < events.len() && events[next].timestamp <= boundary {
            let mut ret = events[next].ret.clone();
            ret.nominal_list = frame.station(ret.key()).expect("validated").nominal_list;
            received.push(ret)?;
            next += 1;
        }
        if next > before {
            let index = series.ticks.len();
            info!("tick {index} at {boundary}: {} stations received", received.len());
            let (estimates, warnings) = estimate_tick(&received, frame, catalog, hierarchy, config);
            for w in &warnings {
                warn!("tick {index}: {w}");
            }
            series.audit.extend(
                warnings.iter().filter(|w| w.contains("failed")).map(|w| format!("tick {index}: {w}")),
            );
            series.ticks.push(Tick {
                index,
                timestamp: boundary,
                received: received.len(),
                planned: frame.planned_total(),
                strata_with_data: received.strata_with_data(),
                estimates,
                warnings,
            });
        }
        boundary += config.cadence;
    }
    Ok(series)
}

/// Long-format series: one row per tick × method × force.
pub fn write_series<W: Write>(writer: W, series: &EstimateSeries, catalog: &ElectionCatalog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "tick", "timestamp", "received", "planned", "strata_with_data", "method", "force", "lower", "upper", "point",
        "level",
    ])?;
    for t in &series.ticks {
        for e in &t.estimates {
            w.write_record([
                t.index.to_string(),
                t.timestamp.to_rfc3339(),
                t.received.to_string(),
                t.planned.to_string(),
                t.strata_with_data.to_string(),
                e.method.as_str().to_string(),
                catalog.forces[e.force].id.clone(),
                e.lower.to_string(),
                e.upper.to_string(),
                format!("{:.4}", e.point),
                e.level.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Arrival delays in minutes: a uniform spread plus per-covariate terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalBias {
    pub spread: f64,
    /// Extra delay for a full (max-size) nominal list, scaled linearly.
    pub list: f64,
    pub rural: f64,
    /// Extra delay per hour west of the central zone.
    pub west: f64,
}

impl Default for ArrivalBias {
    fn default() -> Self {
        Self { spread: 240.0, list: 30.0, rural: 45.0, west: 40.0 }
    }
}

/// `spread=240,list=30,rural=45,west=40`; omitted keys keep their defaults.
impl FromStr for ArrivalBias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bias = ArrivalBias::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || Error::Input(format!("bad bias parameter {part:?}"));
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            if v.is_nan() || v < 0.0 {
                return Err(bad());
            }
            match k.trim() {
                "spread" => bias.spread = v,
                "list" => bias.list = v,
                "rural" => bias.rural = v,
                "west" | "tz" => bias.west = v,
                _ => return Err(bad()),
            }
        }
        Ok(bias)
    }
}

/// Synthetic arrival log for `sample`, sorted by time. Station covariates
/// come from the frame.
pub fn simulate_arrival(
    frame: &Frame,
    sample: &[StationReturn],
    bias: ArrivalBias,
    start: DateTime<FixedOffset>,
    seed: u64,
) -> Result<Vec<ArrivalEvent>> {
    let max_list = sample.iter().map(|r| r.nominal_list).max().unwrap_or(1).max(1) as f64;
    let max_list = max_list.max(750.0);
    let mut events = sample
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let meta = frame
                .station(r.key())
                .ok_or_else(|| Error::Input(format!("station {:?} not in the frame", r.key())))?;
            let mut rng = rng::stream(seed, domain::ARRIVAL, i as u64);
            let base = if bias.spread > 0.0 { rng.random_range(0.0..bias.spread) } else { 0.0 };
            let minutes = base
                + bias.list * f64::from(meta.nominal_list) / max_list
                + if meta.urban { 0.0 } else { bias.rural }
                + bias.west * f64::from((-meta.tz_offset).max(0));
            let at = start + Duration::milliseconds((minutes * 60_000.0).round() as i64);
            Ok(ArrivalEvent { timestamp: at, ret: r.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.ret.key().cmp(&b.ret.key())));
    Ok(events)
}
