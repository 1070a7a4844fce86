//! Sample allocation and simulated error bounds for a sampling design.

use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::apportionment::compose_chamber;
use crate::bayes::sufficient_stats;
use crate::catalog::{ElectionCatalog, ForceKind};
use crate::error::{Error, Result};
use crate::interval::nearest_rank;
use crate::par;
use crate::rng::{derive_seed, domain};
use crate::sampleframe::{draw_sample, stratum_estimator, Frame, StratifiedSample};
use crate::synth::census_totals;

/// Federal districts per state with their clock offset from the central zone
/// on a June election day.
const STATES: [(&str, usize, i32); 32] = [
    ("Aguascalientes", 3, 0),
    ("Baja California", 8, -2),
    ("Baja California Sur", 2, -1),
    ("Campeche", 2, 0),
    ("Coahuila", 7, 0),
    ("Colima", 2, 0),
    ("Chiapas", 13, 0),
    ("Chihuahua", 9, -1),
    ("Ciudad de Mexico", 24, 0),
    ("Durango", 4, 0),
    ("Guanajuato", 15, 0),
    ("Guerrero", 9, 0),
    ("Hidalgo", 7, 0),
    ("Jalisco", 20, 0),
    ("Mexico", 41, 0),
    ("Michoacan", 12, 0),
    ("Morelos", 5, 0),
    ("Nayarit", 3, -1),
    ("Nuevo Leon", 12, 0),
    ("Oaxaca", 10, 0),
    ("Puebla", 15, 0),
    ("Queretaro", 5, 0),
    ("Quintana Roo", 4, 0),
    ("San Luis Potosi", 7, 0),
    ("Sinaloa", 7, -1),
    ("Sonora", 7, -2),
    ("Tabasco", 6, 0),
    ("Tamaulipas", 9, 0),
    ("Tlaxcala", 3, 0),
    ("Veracruz", 20, 0),
    ("Yucatan", 5, 0),
    ("Zacatecas", 4, 0),
];

/// (state, tz offset) for each of 300 districts, in state order.
pub fn reference_district_layout() -> Vec<(String, i32)> {
    STATES
        .iter()
        .flat_map(|&(s, n, tz)| std::iter::repeat_n((s.to_string(), tz), n))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Matcher {
    State(String),
    TzOffset(i32),
    Region { name: String, strata: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationRule {
    pub matcher: Matcher,
    pub extra: usize,
}

impl AugmentationRule {
    fn matches(&self, stratum: &crate::sampleframe::StratumInfo) -> bool {
        match &self.matcher {
            Matcher::State(s) => stratum.state.eq_ignore_ascii_case(s),
            Matcher::TzOffset(tz) => stratum.tz_offset == *tz,
            Matcher::Region { strata, .. } => strata.contains(&stratum.id),
        }
    }
}

/// `tz:-2=10`, `state:Guerrero=10` or `region:coast:4;5;6=3`.
impl FromStr for AugmentationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("bad augmentation rule {s:?}"));
        let (lhs, extra) = s.rsplit_once('=').ok_or_else(bad)?;
        let extra = extra.trim().parse().map_err(|_| bad())?;
        let (kind, rest) = lhs.split_once(':').ok_or_else(bad)?;
        let matcher = match kind.trim() {
            "tz" => Matcher::TzOffset(rest.trim().parse().map_err(|_| bad())?),
            "state" => Matcher::State(rest.trim().to_string()),
            "region" => {
                let (name, ids) = rest.split_once(':').ok_or_else(bad)?;
                let strata = ids
                    .split(';')
                    .map(|x| x.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                Matcher::Region { name: name.to_string(), strata }
            }
            _ => return Err(bad()),
        };
        Ok(Self { matcher, extra })
    }
}

impl fmt::Display for AugmentationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.matcher {
            Matcher::State(s) => write!(f, "state:{s}={}", self.extra),
            Matcher::TzOffset(tz) => write!(f, "tz:{tz}={}", self.extra),
            Matcher::Region { name, strata } => {
                let ids: Vec<String> = strata.iter().map(u32::to_string).collect();
                write!(f, "region:{name}:{}={}", ids.join(";"), self.extra)
            }
        }
    }
}

/// Two-hour western zone +10, one-hour zone +5, Guerrero +10.
pub fn default_rules() -> Vec<AugmentationRule> {
    vec![
        AugmentationRule { matcher: Matcher::TzOffset(-2), extra: 10 },
        AugmentationRule { matcher: Matcher::TzOffset(-1), extra: 5 },
        AugmentationRule { matcher: Matcher::State("Guerrero".into()), extra: 10 },
    ]
}

/// n_h = base + matching extras, capped at N_h.
pub fn allocate_sample(frame: &Frame, base: usize, rules: &[AugmentationRule]) -> Result<Vec<usize>> {
    let total: usize = frame.strata.iter().map(|s| s.population).sum();
    if base * frame.n_strata() > total {
        return Err(Error::Design(format!(
            "base {base} × {} strata exceeds the {total} installed stations",
            frame.n_strata()
        )));
    }
    Ok(frame
        .strata
        .iter()
        .map(|s| {
            let extra: usize = rules.iter().filter(|r| r.matches(s)).map(|r| r.extra).sum();
            (base + extra).min(s.population)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Stratified expansion estimator of every option total.
    Frequentist,
    /// Posterior location T/v scaled by the stratum nominal list.
    Bayesian,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freq" | "frequentist" => Ok(Self::Frequentist),
            "bayes" | "bayesian" => Ok(Self::Bayesian),
            _ => Err(Error::Input(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBounds {
    pub n_total: usize,
    pub n_h: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub level: f64,
    pub reps: usize,
}

/// Seat errors of one sample: (mean over parties and independents, max).
fn seat_errors(
    sample: &StratifiedSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    estimator: Estimator,
    truth: &[u32],
) -> Result<(f64, f64)> {
    let districts: Vec<Vec<f64>> = sample
        .strata
        .iter()
        .zip(&frame.strata)
        .map(|(s, info)| match estimator {
            Estimator::Frequentist => stratum_estimator(info.id, s, info.population),
            Estimator::Bayesian => {
                if s.is_empty() {
                    return Err(Error::MissingStratum(info.id));
                }
                let stats = sufficient_stats(s, catalog)?;
                let l_h = info.nominal_list as f64;
                let forces: Vec<f64> = stats.iter().map(|f| f.t / f.v * l_h).collect();
                Ok(catalog.option_votes_from_forces(&forces))
            }
        })
        .collect::<Result<_>>()?;
    let seats = compose_chamber(catalog, &districts)?.composition.totals();
    let errs: Vec<f64> = catalog
        .forces
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f.kind, ForceKind::Party | ForceKind::Independent))
        .map(|(j, _)| (f64::from(seats[j]) - f64::from(truth[j])).abs())
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let max = errs.iter().copied().fold(0.0, f64::max);
    Ok((mean, max))
}

/// Empirical 95% bounds on the average and maximum seat error under equal
/// allocation n_h = n / L, for every total in `n_list`.
pub fn simulate_error_bounds(
    population: &StratifiedSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    n_list: &[usize],
    reps: usize,
    estimator: Estimator,
    seed: u64,
) -> Result<Vec<ErrorBounds>> {
    if reps < 100 {
        return Err(Error::Design(format!("at least 100 repetitions are needed, got {reps}")));
    }
    let truth = compose_chamber(catalog, &census_totals(population, catalog.n_options()))?
        .composition
        .totals();
    let l = frame.n_strata();
    let mut out = Vec::new();
    for &n in n_list {
        let n_h = n / l;
        if n_h == 0 {
            warn!("n = {n} gives no station per stratum; skipped");
            continue;
        }
        if let Some(s) = frame.strata.iter().find(|s| s.population < n_h) {
            warn!("n_h = {n_h} exceeds N_h = {} in stratum {}; n = {n} skipped", s.population, s.id);
            continue;
        }
        let sizes = vec![n_h; l];
        let errors = par::try_map_indexed(reps, |r| {
            let sample = draw_sample(population, &sizes, derive_seed(seed, domain::DESIGN, r as u64))?;
            seat_errors(&sample, frame, catalog, estimator, &truth)
        })?;
        let mut e1: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let mut e2: Vec<f64> = errors.iter().map(|e| e.1).collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        out.push(ErrorBounds {
            n_total: n_h * l,
            n_h,
            eps1: nearest_rank(&e1, 0.95),
            eps2: nearest_rank(&e2, 0.95),
            level: 0.95,
            reps,
        });
    }
    Ok(out)
}
