use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use quickcount::bayes::{bayes_chamber, credibility_level, sufficient_stats};
use quickcount::bootstrap::{bootstrap_chamber, summarize, winner_probabilities, SeatSummary};
use quickcount::catalog::ElectionCatalog;
use quickcount::design::{allocate_sample, default_rules, simulate_error_bounds, AugmentationRule, Estimator};
use quickcount::io;
use quickcount::mi::{mi_chamber, ImputationConfig};
use quickcount::poststrat::{
    build_hierarchy, impute_missing_strata, profiles_from_returns, read_hierarchy, write_hierarchy, StratumProfile,
    IMPUTATION_LIST,
};
use quickcount::replay::{parse_cadence, replay, simulate_arrival, write_series, ArrivalBias, Method, ReplayConfig};
use quickcount::sampleframe::{draw_sample, Frame, StationReturn, StratifiedSample};
use quickcount::synth::{generate, SynthConfig};

/// Quick-count estimation of a 500-seat chamber from a stratified sample of
/// polling stations.
#[derive(Parser)]
#[command(name = "quickcount", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mirror-match bootstrap on a complete sample.
    EstimateFreq(FreqArgs),
    /// Conjugate normal-gamma posterior with post-stratified imputation.
    EstimateBayes(BayesArgs),
    /// Multiple imputation of missing stations, bootstrap, Rubin pooling.
    EstimateMi(MiArgs),
    /// Complete-linkage hierarchy of strata from historic results.
    Cluster(ClusterArgs),
    /// Simulated 95% bounds on seat errors for candidate sample sizes.
    Design(DesignArgs),
    /// Sample sizes per stratum from a base size and augmentation rules.
    Allocate(AllocateArgs),
    /// Replays an arrival log and estimates at every update.
    Replay(ReplayArgs),
    /// Synthetic arrival log for a sample.
    SimulateArrival(ArrivalArgs),
    /// Synthetic election: catalog, frame and full population of returns.
    Synth(SynthArgs),
    /// Stratified simple random sample from a population file.
    DrawSample(DrawArgs),
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    returns: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
}

#[derive(Args)]
struct FreqArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long = "B", default_value_t = 300)]
    b: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BayesArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MiArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 15)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    donors: usize,
    /// Option ids used as predictors; defaults to the four largest parties.
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    #[arg(long = "B", default_value_t = 300)]
    b: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Historic returns (needs --catalog) or a stratum_id + feature table.
    #[arg(long)]
    historic: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20,50,100,200,300")]
    k: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// Every station's returns.
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Frame with covariates; built from the population when omitted.
    #[arg(long)]
    frame: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value = "freq")]
    estimator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    frame: PathBuf,
    #[arg(long, default_value_t = 20)]
    base: usize,
    /// Rules such as `tz:-2=10`, `state:Guerrero=10`, `region:north:1;2;3=4`.
    /// The default rules apply when none are given.
    #[arg(long = "rule")]
    rules: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long, default_value = "5m")]
    cadence: String,
    #[arg(long, value_delimiter = ',', default_value = "bayes,mi")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long = "B", default_value_t = 300)]
    b: usize,
    #[arg(long, default_value_t = 15)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ArrivalArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Returns of the planned sample.
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// `spread=240,list=30,rural=45,west=40` (minutes).
    #[arg(long, default_value = "")]
    bias: String,
    /// First possible arrival, RFC 3339.
    #[arg(long, default_value = "2021-06-06T18:30:00-05:00")]
    start: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    strata: usize,
    #[arg(long, default_value_t = 40)]
    min_stations: usize,
    #[arg(long, default_value_t = 80)]
    max_stations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving catalog.toml, frame.csv and population.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DrawArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Same size in every stratum.
    #[arg(long, conflicts_with = "allocation")]
    per_stratum: Option<usize>,
    /// `stratum_id,n_h` table as written by `allocate`.
    #[arg(long)]
    allocation: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample returns.
    #[arg(long)]
    out: PathBuf,
    /// Copy of the frame with the `sampled` column set.
    #[arg(long)]
    frame_out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::EstimateFreq(a) => estimate_freq(a),
        Command::EstimateBayes(a) => estimate_bayes(a),
        Command::EstimateMi(a) => estimate_mi(a),
        Command::Cluster(a) => cluster(a),
        Command::Design(a) => design(a),
        Command::Allocate(a) => allocate(a),
        Command::Replay(a) => run_replay(a),
        Command::SimulateArrival(a) => arrival(a),
        Command::Synth(a) => synth(a),
        Command::DrawSample(a) => draw(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_catalog(path: &Path) -> Result<ElectionCatalog> {
    ElectionCatalog::load(path).with_context(|| format!("loading catalog {}", path.display()))
}

fn load_frame(path: &Path, catalog: &ElectionCatalog) -> Result<Frame> {
    io::read_frame(io::open(path)?, catalog.constants.max_nominal_list)
        .with_context(|| format!("reading frame {}", path.display()))
}

fn load_returns(path: &Path, catalog: &ElectionCatalog, frame: Option<&Frame>) -> Result<Vec<StationReturn>> {
    io::read_returns(io::open(path)?, catalog, frame).with_context(|| format!("reading returns {}", path.display()))
}

/// Catalog, frame and returns; a frame without a `sampled` column takes the
/// received stations as the planned sample.
fn load_inputs(inputs: &Inputs) -> Result<(ElectionCatalog, Frame, StratifiedSample)> {
    let catalog = load_catalog(&inputs.catalog)?;
    let mut frame = load_frame(&inputs.frame, &catalog)?;
    let returns = load_returns(&inputs.returns, &catalog, Some(&frame))?;
    if frame.planned_total() == 0 {
        frame.set_planned(returns.iter().map(StationReturn::key))?;
    }
    let sample = StratifiedSample::from_returns(frame.n_strata(), returns)?;
    info!("{} returns of {} planned, {} strata with data", sample.len(), frame.planned_total(), sample.strata_with_data());
    Ok((catalog, frame, sample))
}

fn write_summaries(
    path: &Path,
    catalog: &ElectionCatalog,
    summaries: &[SeatSummary],
    win: &[Vec<f64>],
) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "party,lower,upper,point,level")?;
    for h in 1..=win.len() {
        write!(w, ",p_win_{h}")?;
    }
    writeln!(w)?;
    for s in summaries {
        write!(w, "{},{},{},{:.4},{}", catalog.forces[s.force].id, s.lower, s.upper, s.point, s.level)?;
        for row in win {
            write!(w, ",{:.4}", row[s.force])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn estimate_freq(a: FreqArgs) -> Result<()> {
    let (catalog, frame, sample) = load_inputs(&a.inputs)?;
    if !sample.is_complete() || sample.len() < frame.planned_total() {
        bail!("the bootstrap needs the complete planned sample; use estimate-mi for partial returns");
    }
    let run = bootstrap_chamber(&sample, &frame, &catalog, a.b, a.seed)?;
    let summaries = summarize(&run.replicates, &catalog, a.level);
    write_summaries(&a.out, &catalog, &summaries, &winner_probabilities(&run.replicates, catalog.n_forces()))
}

fn estimate_bayes(a: BayesArgs) -> Result<()> {
    let (catalog, frame, sample) = load_inputs(&a.inputs)?;
    let hierarchy = read_hierarchy(io::open(&a.clusters)?)?;
    if hierarchy.n_strata() != frame.n_strata() {
        bail!("hierarchy has {} strata, frame has {}", hierarchy.n_strata(), frame.n_strata());
    }
    let mut stats = Vec::with_capacity(sample.strata.len());
    for s in &sample.strata {
        let complete: Vec<StationReturn> = s.iter().filter(|r| r.is_complete()).cloned().collect();
        if complete.len() < s.len() {
            warn!("{} returns with missing cells left out", s.len() - complete.len());
        }
        stats.push(sufficient_stats(&complete, &catalog)?);
    }
    let stats = impute_missing_strata(&stats, &hierarchy, IMPUTATION_LIST)?;
    let level = credibility_level(sample.len(), frame.planned_total());
    info!("credibility level {level}");
    let run = bayes_chamber(&stats, &frame, &catalog, a.draws, a.seed, level)?;
    write_summaries(&a.out, &catalog, &run.summaries, &winner_probabilities(&run.outcomes, catalog.n_forces()))
}

fn estimate_mi(a: MiArgs) -> Result<()> {
    let (catalog, frame, sample) = load_inputs(&a.inputs)?;
    let predictors = a
        .predictors
        .map(|ids| {
            ids.iter()
                .map(|id| catalog.option_index(id).with_context(|| format!("unknown option {id:?}")))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let config = ImputationConfig { m: a.m, iterations: a.iters, donors: a.donors, predictors };
    let partial = quickcount::sampleframe::PartialSample::new(sample, &frame)?;
    let result = mi_chamber(&partial, &frame, &catalog, &config, a.b, a.seed, a.level)?;
    for w in &result.warnings {
        warn!("{w}");
    }
    let mut w = create(&a.out)?;
    writeln!(w, "party,lower,upper,point,level,within_var,between_var,total_var,df")?;
    for f in &result.forces {
        let p = &f.pooled;
        writeln!(
            w,
            "{},{},{},{:.4},{},{:.4},{:.4},{:.4},{:.2}",
            catalog.forces[f.force].id, f.lower, f.upper, p.q_bar, p.level, p.w_bar, p.b_var, p.t_var, p.df
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `stratum_id` followed by numeric feature columns.
fn read_profiles(path: &Path) -> Result<Vec<StratumProfile>> {
    let mut rdr = csv::Reader::from_reader(io::open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut fields = rec.iter().map(str::trim);
        let stratum = fields.next().unwrap_or("").parse().context("bad stratum_id")?;
        let features = fields.map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().context("bad feature")?;
        out.push(StratumProfile { stratum, features });
    }
    Ok(out)
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let profiles = match &a.catalog {
        Some(path) => {
            let catalog = load_catalog(path)?;
            let returns = load_returns(&a.historic, &catalog, None)?;
            let l = returns.iter().map(|r| r.stratum).max().unwrap_or(0) as usize;
            profiles_from_returns(&returns, &catalog, l)?
        }
        None => read_profiles(&a.historic)?,
    };
    let k: Vec<usize> = a.k.iter().copied().filter(|&k| k <= profiles.len()).collect();
    if k.len() < a.k.len() {
        warn!("cut levels above {} strata dropped", profiles.len());
    }
    let hierarchy = build_hierarchy(&profiles, &k)?;
    write_hierarchy(create(&a.out)?, &hierarchy)?;
    Ok(())
}

fn design(a: DesignArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let estimator: Estimator = a.estimator.parse()?;
    let frame = match &a.frame {
        Some(p) => load_frame(p, &catalog)?,
        None => io::frame_from_returns(&load_returns(&a.population, &catalog, None)?, catalog.constants.max_nominal_list)?,
    };
    let population = StratifiedSample::from_returns(frame.n_strata(), load_returns(&a.population, &catalog, Some(&frame))?)?;
    let bounds = simulate_error_bounds(&population, &frame, &catalog, &a.n, a.reps, estimator, a.seed)?;
    let mut w = create(&a.out)?;
    writeln!(w, "n,n_h,eps1,eps2,level,reps")?;
    for b in bounds {
        writeln!(w, "{},{},{:.4},{},{},{}", b.n_total, b.n_h, b.eps1, b.eps2, b.level, b.reps)?;
    }
    w.flush()?;
    Ok(())
}

fn allocate(a: AllocateArgs) -> Result<()> {
    let frame = io::read_frame(io::open(&a.frame)?, u32::MAX)?;
    let rules: Vec<AugmentationRule> = if a.rules.is_empty() {
        default_rules()
    } else {
        a.rules.iter().map(|r| r.parse()).collect::<quickcount::Result<_>>()?
    };
    let sizes = allocate_sample(&frame, a.base, &rules)?;
    info!("total sample size {}", sizes.iter().sum::<usize>());
    let mut w = create(&a.out)?;
    writeln!(w, "stratum_id,n_h")?;
    for (s, n) in frame.strata.iter().zip(&sizes) {
        writeln!(w, "{},{n}", s.id)?;
    }
    w.flush()?;
    Ok(())
}

fn run_replay(a: ReplayArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let frame = load_frame(&a.frame, &catalog)?;
    if frame.planned_total() == 0 {
        bail!("the frame marks no planned stations (column `sampled`)");
    }
    let hierarchy = read_hierarchy(io::open(&a.clusters)?)?;
    let log = io::read_arrivals(io::open(&a.log)?, &catalog, &frame)?;
    let methods = a.methods.iter().map(|m| m.parse()).collect::<quickcount::Result<Vec<Method>>>()?;
    let config = ReplayConfig {
        cadence: parse_cadence(&a.cadence)?,
        methods,
        seed: a.seed,
        draws: a.draws,
        bootstrap_reps: a.b,
        imputation: ImputationConfig { m: a.m, ..ImputationConfig::default() },
        ..ReplayConfig::default()
    };
    let series = replay(&log, &frame, &catalog, &hierarchy, &config)?;
    for t in &series.ticks {
        info!("tick {} at {}: {}/{} stations", t.index, t.timestamp, t.received, t.planned);
        for n in &t.warnings {
            warn!("tick {}: {n}", t.index);
        }
    }
    for entry in &series.audit {
        warn!("audit: {entry}");
    }
    write_series(create(&a.out)?, &series, &catalog)?;
    Ok(())
}

fn arrival(a: ArrivalArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let frame = load_frame(&a.frame, &catalog)?;
    let sample = load_returns(&a.sample, &catalog, Some(&frame))?;
    let bias: ArrivalBias = a.bias.parse()?;
    let start = io::parse_timestamp(&a.start)?;
    let events = simulate_arrival(&frame, &sample, bias, start, a.seed)?;
    io::write_arrivals(create(&a.out)?, &catalog, &events)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig { strata: a.strata, stations: (a.min_stations, a.max_stations), ..SynthConfig::default() };
    let e = generate(&cfg, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("catalog.toml"), e.catalog.to_toml_string())?;
    io::write_frame(create(&a.out.join("frame.csv"))?, &e.frame)?;
    io::write_returns(create(&a.out.join("population.csv"))?, &e.catalog, e.population.iter())?;
    info!("{} strata, {} stations", e.frame.n_strata(), e.frame.stations.len());
    Ok(())
}

fn read_allocation(path: &Path, frame: &Frame) -> Result<Vec<usize>> {
    let mut sizes = vec![0; frame.n_strata()];
    let mut rdr = csv::Reader::from_reader(io::open(path)?);
    for rec in rdr.deserialize() {
        let (h, n): (usize, usize) = rec?;
        if h == 0 || h > sizes.len() {
            bail!("allocation names unknown stratum {h}");
        }
        sizes[h - 1] = n;
    }
    Ok(sizes)
}

fn draw(a: DrawArgs) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let mut frame = load_frame(&a.frame, &catalog)?;
    let population = StratifiedSample::from_returns(frame.n_strata(), load_returns(&a.population, &catalog, Some(&frame))?)?;
    let sizes = match (&a.allocation, a.per_stratum) {
        (Some(p), _) => read_allocation(p, &frame)?,
        (None, Some(n)) => vec![n; frame.n_strata()],
        (None, None) => bail!("give --per-stratum or --allocation"),
    };
    let sample = draw_sample(&population, &sizes, a.seed)?;
    io::write_returns(create(&a.out)?, &catalog, sample.iter())?;
    if let Some(path) = &a.frame_out {
        frame.set_planned(sample.iter().map(StationReturn::key))?;
        io::write_frame(create(path)?, &frame)?;
    }
    Ok(())
}
