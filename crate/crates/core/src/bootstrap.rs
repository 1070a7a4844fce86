//! Mirror-match stratified bootstrap for complete samples.
//!
//! Within stratum h (f = n/N, k = 1/f, m = f·n) each replicate concatenates
//! k independent SRSWOR draws of m stations from the n sampled ones and
//! expands the resample mean by N. When k and m are integers the resampling
//! variance equals the design variance N²(1−f)S²/n exactly.
//!
//! Otherwise the design is randomized per stratum and replicate:
//!
//! * m' ∈ {⌊m⌋, ⌈m⌉} (kept within [1, n−1]) with P(m' = ⌊m⌋) = ⌈m⌉ − m;
//! * given m', the matching repetition count is
//!   k* = (n − m') / (m'(1 − f)), which makes N²(1 − m'/n)S²/(m'k*) equal
//!   the design variance;
//! * k' ∈ {⌊k*⌋, ⌈k*⌉} with P(k' = ⌊k*⌋) = (1/k* − 1/⌈k*⌉) / (1/⌊k*⌋ − 1/⌈k*⌉),
//!   so that E[1/k'] = 1/k*.
//!
//! The resample has k'·m' stations and its mean is unbiased for the sample
//! mean under every realized design, so the expanded total is unbiased and
//! its variance matches the design variance in expectation.

use rand::seq::index;
use rand::Rng;

use crate::apportionment::{compose_chamber, ChamberOutcome, DistrictTotals};
use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::interval::{mean, seat_interval};
use crate::par;
use crate::rng::{self, domain, StreamRng};
use crate::sampleframe::{Frame, StationReturn, StratifiedSample};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirrorMatchParams {
    pub n: usize,
    pub population: usize,
    pub f: f64,
    pub k: f64,
    pub m: f64,
    /// Both k and m are integers; no randomization needed.
    pub integer: bool,
}

pub fn mirror_match_params(n: usize, population: usize) -> Result<MirrorMatchParams> {
    if n == 0 || n > population {
        return Err(Error::Input(format!(
            "mirror-match needs 1 <= n_h <= N_h, got n_h = {n}, N_h = {population}"
        )));
    }
    let f = n as f64 / population as f64;
    let integer = population.is_multiple_of(n) && (n * n).is_multiple_of(population);
    Ok(MirrorMatchParams {
        n,
        population,
        f,
        k: population as f64 / n as f64,
        m: (n * n) as f64 / population as f64,
        integer,
    })
}

impl MirrorMatchParams {
    /// Draws the realized (m', k') for one replicate.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let n = self.n;
        if n == self.population || n == 1 {
            return (n, 1);
        }
        if self.integer {
            return (self.m as usize, self.k as usize);
        }
        let lo = (self.m.floor() as usize).clamp(1, n - 1);
        let hi = (self.m.ceil() as usize).clamp(1, n - 1);
        let m = if hi > lo && rng.random::<f64>() >= hi as f64 - self.m { hi } else { lo };
        let mut k_star = (n - m) as f64 / (m as f64 * (1.0 - self.f));
        if k_star < 1.0 {
            log::warn!("mirror-match: k* = {k_star:.3} < 1 for n = {n}, clamped to 1");
            k_star = 1.0;
        }
        let k1 = k_star.floor();
        let k2 = k_star.ceil();
        let k = if k2 > k1 {
            let p1 = (1.0 / k_star - 1.0 / k2) / (1.0 / k1 - 1.0 / k2);
            if rng.random::<f64>() < p1 { k1 } else { k2 }
        } else {
            k1
        };
        (m, k as usize)
    }

    /// Indices into the stratum sample for one resample.
    pub fn resample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let (m, k) = self.realize(rng);
        let mut out = Vec::with_capacity(m * k);
        for _ in 0..k {
            out.extend(index::sample(rng, self.n, m).iter());
        }
        out
    }
}

/// One mirror-match resample of a stratum.
pub fn mirror_match_resample<R: Rng + ?Sized>(
    returns: &[StationReturn],
    params: &MirrorMatchParams,
    rng: &mut R,
) -> Vec<StationReturn> {
    params
        .resample_indices(rng)
        .into_iter()
        .map(|i| returns[i].clone())
        .collect()
}

/// A complete sample prepared for resampling.
#[derive(Clone, Debug)]
pub struct BootstrapDesign {
    strata: Vec<PreparedStratum>,
}

#[derive(Clone, Debug)]
struct PreparedStratum {
    params: MirrorMatchParams,
    /// Station-major vote values.
    values: Vec<Vec<f64>>,
}

impl BootstrapDesign {
    pub fn new(sample: &StratifiedSample, frame: &Frame) -> Result<Self> {
        if sample.strata.len() != frame.n_strata() {
            return Err(Error::Input(format!(
                "sample has {} strata, frame has {}",
                sample.strata.len(),
                frame.n_strata()
            )));
        }
        let strata = sample
            .strata
            .iter()
            .zip(&frame.strata)
            .map(|(returns, info)| {
                if returns.is_empty() {
                    return Err(Error::MissingStratum(info.id));
                }
                let values = returns
                    .iter()
                    .map(|r| {
                        r.values().ok_or_else(|| {
                            Error::Input(format!("station {:?} has missing cells; impute first", r.key()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PreparedStratum {
                    params: mirror_match_params(returns.len(), info.population)?,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { strata })
    }

    pub fn params(&self) -> Vec<MirrorMatchParams> {
        self.strata.iter().map(|s| s.params).collect()
    }

    /// Expansion estimates from the full sample (no resampling).
    pub fn point_totals(&self) -> Vec<DistrictTotals> {
        self.strata
            .iter()
            .map(|s| expand(&s.values, 0..s.values.len(), s.params.population))
            .collect()
    }

    /// Bootstrap district totals for one replicate drawn from `rng`.
    pub fn replicate_totals(&self, rng: &mut StreamRng) -> Vec<DistrictTotals> {
        self.strata
            .iter()
            .map(|s| {
                let idx = s.params.resample_indices(rng);
                expand(&s.values, idx.into_iter(), s.params.population)
            })
            .collect()
    }
}

fn expand(values: &[Vec<f64>], idx: impl Iterator<Item = usize>, population: usize) -> Vec<f64> {
    let mut sums = vec![0.0; values[0].len()];
    let mut count = 0usize;
    for i in idx {
        for (acc, v) in sums.iter_mut().zip(&values[i]) {
            *acc += v;
        }
        count += 1;
    }
    let factor = population as f64 / count as f64;
    sums.iter_mut().for_each(|s| *s *= factor);
    sums
}

#[derive(Clone, Debug)]
pub struct BootstrapRun {
    pub seed: u64,
    pub replicates: Vec<ChamberOutcome>,
}

/// B mirror-match replicates of the chamber. Replicate `b` uses stream
/// `(seed, b)`, so the run is identical for any worker count.
pub fn bootstrap_chamber(
    sample: &StratifiedSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapRun> {
    let design = BootstrapDesign::new(sample, frame)?;
    let replicates = par::try_map_indexed(replicates, |b| {
        let mut rng = rng::stream(seed, domain::BOOTSTRAP, b as u64);
        compose_chamber(catalog, &design.replicate_totals(&mut rng))
    })?;
    Ok(BootstrapRun { seed, replicates })
}

/// Per-force seat summary of a set of simulated chambers.
#[derive(Clone, Debug, PartialEq)]
pub struct SeatSummary {
    pub force: usize,
    pub lower: u32,
    pub upper: u32,
    pub point: f64,
    pub level: f64,
}

/// Percentile intervals for every party and independent.
pub fn summarize(outcomes: &[ChamberOutcome], catalog: &ElectionCatalog, level: f64) -> Vec<SeatSummary> {
    catalog
        .forces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_valid_vote())
        .map(|(j, _)| {
            let seats: Vec<u32> = outcomes.iter().map(|o| o.composition.total(j)).collect();
            let (lower, upper) = seat_interval(&seats, level);
            let as_f: Vec<f64> = seats.iter().map(|&s| s as f64).collect();
            SeatSummary { force: j, lower, upper, point: mean(&as_f), level }
        })
        .collect()
}

/// P(force holds district h) across outcomes, as `[district][force]`.
pub fn winner_probabilities(outcomes: &[ChamberOutcome], n_forces: usize) -> Vec<Vec<f64>> {
    let Some(first) = outcomes.first() else { return Vec::new() };
    let mut counts = vec![vec![0usize; n_forces]; first.winners.len()];
    for o in outcomes {
        for (h, w) in o.winners.iter().enumerate() {
            counts[h][w.seat_holder] += 1;
        }
    }
    let n = outcomes.len() as f64;
    counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
        .collect()
}
