//! Conjugate Bayesian estimation per stratum × force.
//!
//! Votes at station r are modeled as N(l_r θ, precision τ/l_r). With a
//! Ga(a₀, b₀) prior on τ and a uniform prior on θ ∈ (0,1) the posterior
//! factorizes as
//!
//! ```text
//! θ | τ ~ N(T/v, precision τ·v) truncated to (0,1)
//! τ     ~ Ga(a₀ + (n−1)/2, b₀ + (U − T²/v)/2)
//! ```
//!
//! with T = Σx, U = Σx²/l, v = Σl. For the default prior Ga(0.5, 0.05) the
//! gamma parameters are (n/2, ½{1/10 + U − T²/v}).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::erf::{erfc, erfc_inv};

use crate::apportionment::{compose_chamber, shares_from_totals, ChamberOutcome, NationalShares};
use crate::bootstrap::{summarize, SeatSummary};
use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, domain};
use crate::sampleframe::{Frame, StationReturn};

/// Sufficient statistics of one stratum × force.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForceStats {
    /// T = Σ x.
    pub t: f64,
    /// U = Σ x²/l.
    pub u: f64,
    /// v = Σ l.
    pub v: f64,
    pub n: usize,
    pub imputed: bool,
}

/// Statistics of one stratum, indexed by force.
pub type StratumStats = Vec<ForceStats>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Self { shape: 0.5, rate: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorParams {
    /// T/v, the location of the truncated normal.
    pub mean: f64,
    /// v; θ has precision τ·v.
    pub precision_scale: f64,
    pub shape: f64,
    pub rate: f64,
}

/// Sufficient statistics of a stratum's returns, after splitting coalition
/// combinations station by station. The abstention force gets l − ballots.
pub fn sufficient_stats(returns: &[StationReturn], catalog: &ElectionCatalog) -> Result<StratumStats> {
    let mut stats = vec![ForceStats::default(); catalog.n_forces()];
    let abstention = catalog.abstention_force();
    for r in returns {
        if r.nominal_list == 0 {
            return Err(Error::Input(format!("station {:?} has a zero nominal list", r.key())));
        }
        let values = r
            .values()
            .ok_or_else(|| Error::Input(format!("station {:?} has missing cells", r.key())))?;
        let mut forces = catalog.split_district(&values);
        forces[abstention] = r.abstentions() as f64;
        let l = r.nominal_list as f64;
        for (s, x) in stats.iter_mut().zip(forces) {
            s.t += x;
            s.u += x * x / l;
            s.v += l;
            s.n += 1;
        }
    }
    Ok(stats)
}

pub fn posterior_params(stats: &ForceStats, prior: Prior) -> Result<PosteriorParams> {
    if stats.n == 0 {
        return Err(Error::Input("posterior needs at least one station; impute empty strata first".into()));
    }
    let mut residual = stats.u - stats.t * stats.t / stats.v;
    if residual < 0.0 {
        // Cauchy–Schwarz makes this non-negative; anything below is rounding.
        debug_assert!(residual > -1e-9 * stats.u.max(1.0), "residual {residual}");
        residual = 0.0;
    }
    let rate = prior.rate + 0.5 * residual;
    assert!(rate > 0.0, "gamma rate must be positive");
    Ok(PosteriorParams {
        mean: stats.t / stats.v,
        precision_scale: stats.v,
        shape: prior.shape + 0.5 * (stats.n as f64 - 1.0),
        rate,
    })
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Exact draw from N(mean, sd²) truncated to the open interval (0, 1).
///
/// Inverse CDF, evaluated from whichever tail keeps precision. When the
/// interval carries less than 1e-6 of the untruncated mass (very diffuse
/// normals) it switches to rejection from a uniform proposal, whose
/// acceptance rate is then close to one.
pub fn truncated_unit_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let alpha = -mean / sd;
    let beta = (1.0 - mean) / sd;
    let (cdf_a, cdf_b) = (std_normal_cdf(alpha), std_normal_cdf(beta));
    let (sf_a, sf_b) = (std_normal_sf(alpha), std_normal_sf(beta));
    let mass = if alpha > 0.0 { sf_a - sf_b } else { cdf_b - cdf_a };
    if mass.is_nan() || mass < 1e-6 || !sd.is_finite() {
        let peak = mean.clamp(0.0, 1.0);
        loop {
            let x: f64 = rng.random();
            if x <= 0.0 {
                continue;
            }
            let accept = if sd.is_finite() {
                (-((x - mean).powi(2) - (peak - mean).powi(2)) / (2.0 * sd * sd)).exp()
            } else {
                1.0
            };
            if rng.random::<f64>() < accept {
                return x;
            }
        }
    }
    loop {
        let u: f64 = rng.random();
        let c = cdf_a + u * (cdf_b - cdf_a);
        let z = if c < 0.5 {
            std_normal_quantile(c)
        } else {
            let s = sf_b + (1.0 - u) * (sf_a - sf_b);
            -std_normal_quantile(s)
        };
        let x = mean + sd * z;
        if x > 0.0 && x < 1.0 {
            return x;
        }
    }
}

/// One joint draw of (θ, τ).
pub fn draw_theta<R: Rng + ?Sized>(params: &PosteriorParams, rng: &mut R) -> (f64, f64) {
    let gamma = Gamma::new(params.shape, 1.0 / params.rate).expect("valid gamma parameters");
    let tau = gamma.sample(rng);
    let sd = 1.0 / (tau * params.precision_scale).sqrt();
    (truncated_unit_normal(params.mean, sd, rng), tau)
}

/// `draws` independent θ draws for one stratum × force.
pub fn sample_posterior<R: Rng + ?Sized>(params: &PosteriorParams, draws: usize, rng: &mut R) -> Vec<f64> {
    (0..draws).map(|_| draw_theta(params, rng).0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NationalAggregate {
    /// θ_j = Σ_h (l_h/l) θ_{h,j}.
    pub theta: Vec<f64>,
    pub shares: NationalShares,
}

/// National proportions of one posterior draw `theta[h][j]`.
pub fn national_aggregate(theta: &[Vec<f64>], frame: &Frame, catalog: &ElectionCatalog) -> Result<NationalAggregate> {
    let l = frame.nominal_list_total() as f64;
    let mut national = vec![0.0; catalog.n_forces()];
    for (row, info) in theta.iter().zip(&frame.strata) {
        let w = info.nominal_list as f64 / l;
        for (acc, t) in national.iter_mut().zip(row) {
            *acc += w * t;
        }
    }
    let shares = shares_from_totals(catalog, national.clone())?;
    Ok(NationalAggregate { theta: national, shares })
}

#[derive(Clone, Debug)]
pub struct BayesRun {
    pub level: f64,
    pub outcomes: Vec<ChamberOutcome>,
    pub summaries: Vec<SeatSummary>,
}

/// Chamber conformations over `draws` posterior draws.
///
/// Every stratum × force needs statistics (observed or imputed). Draw `d`
/// uses stream `(seed, d)`; district totals are θ_{h,j}·l_h, so the district
/// winner is the force (or coalition) with the largest θ.
pub fn bayes_chamber(
    stats: &[StratumStats],
    frame: &Frame,
    catalog: &ElectionCatalog,
    draws: usize,
    seed: u64,
    level: f64,
) -> Result<BayesRun> {
    bayes_chamber_with_prior(stats, frame, catalog, draws, seed, level, Prior::default())
}

pub fn bayes_chamber_with_prior(
    stats: &[StratumStats],
    frame: &Frame,
    catalog: &ElectionCatalog,
    draws: usize,
    seed: u64,
    level: f64,
    prior: Prior,
) -> Result<BayesRun> {
    if stats.len() != frame.n_strata() {
        return Err(Error::Input(format!(
            "statistics for {} strata, frame has {}",
            stats.len(),
            frame.n_strata()
        )));
    }
    let params: Vec<Vec<PosteriorParams>> = stats
        .iter()
        .zip(&frame.strata)
        .map(|(s, info)| {
            s.iter()
                .map(|fs| posterior_params(fs, prior).map_err(|_| Error::MissingStratum(info.id)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let outcomes = par::try_map_indexed(draws, |d| {
        let mut rng = rng::stream(seed, domain::POSTERIOR, d as u64);
        let districts: Vec<Vec<f64>> = params
            .iter()
            .zip(&frame.strata)
            .map(|(row, info)| {
                let l_h = info.nominal_list as f64;
                let forces: Vec<f64> = row.iter().map(|p| draw_theta(p, &mut rng).0 * l_h).collect();
                catalog.option_votes_from_forces(&forces)
            })
            .collect();
        compose_chamber(catalog, &districts)
    })?;
    let summaries = summarize(&outcomes, catalog, level);
    Ok(BayesRun { level, outcomes, summaries })
}

/// Credible level by share of the planned sample received:
/// [0,60) → 0.99, [60,70) → 0.98, [70,80) → 0.97, [80,90) → 0.96, [90,100] → 0.95.
pub fn credibility_adjust(p: f64) -> f64 {
    let pct = p * 100.0;
    // Half-ulp guard so 0.7 and 70/100 land in the same bucket.
    let pct = pct + 1e-9;
    if pct < 60.0 {
        0.99
    } else if pct < 70.0 {
        0.98
    } else if pct < 80.0 {
        0.97
    } else if pct < 90.0 {
        0.96
    } else {
        0.95
    }
}

/// Same table, evaluated exactly on counts.
pub fn credibility_level(received: usize, planned: usize) -> f64 {
    if planned == 0 {
        return 0.99;
    }
    let tenths = |d: usize| received * 10 < planned * d;
    if tenths(6) {
        0.99
    } else if tenths(7) {
        0.98
    } else if tenths(8) {
        0.97
    } else if tenths(9) {
        0.96
    } else {
        0.95
    }
}
