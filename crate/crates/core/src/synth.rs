//! Synthetic elections for simulation studies, benchmarks and demos.
//!
//! Vote shares are drawn hierarchically: a Dirichlet per stratum around the
//! national option shares, then a Dirichlet per station around the stratum
//! shares. Ballots follow a multinomial on the station shares.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::apportionment::{compose_chamber, ChamberOutcome, DistrictTotals};
use crate::catalog::{
    CatalogConfig, CoalitionConfig, ElectionCatalog, ElectoralConstants, ForceConfig, ForceKind, OptionConfig,
};
use crate::design::reference_district_layout;
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::sampleframe::{draw_sample, Frame, StationMeta, StationReturn, StratifiedSample};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub strata: usize,
    /// Inclusive range of installed stations per stratum.
    pub stations: (usize, usize),
    /// Relative national weights of the parties, in catalog order.
    pub party_shares: Vec<f64>,
    /// Zero-based party indices running as one coalition in every district.
    pub coalition: Vec<usize>,
    /// Fraction of each coalition member's vote cast on the combination option.
    pub combination_share: f64,
    /// Independent candidate `i` runs only in stratum `i + 1`.
    pub independents: usize,
    pub independent_share: f64,
    pub null_share: f64,
    pub turnout: (f64, f64),
    pub list_range: (u32, u32),
    pub urban_fraction: f64,
    pub stratum_concentration: f64,
    pub station_concentration: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            strata: 30,
            stations: (40, 80),
            party_shares: vec![0.34, 0.18, 0.17, 0.07, 0.06, 0.045, 0.03, 0.025, 0.02],
            coalition: vec![1, 2],
            combination_share: 0.05,
            independents: 1,
            independent_share: 0.35,
            null_share: 0.03,
            turnout: (0.45, 0.65),
            list_range: (100, 750),
            urban_fraction: 0.7,
            stratum_concentration: 60.0,
            station_concentration: 150.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthElection {
    pub catalog: ElectionCatalog,
    pub frame: Frame,
    pub population: StratifiedSample,
}

impl SynthElection {
    /// Exact per-stratum option totals of the whole population.
    pub fn census_totals(&self) -> Vec<DistrictTotals> {
        census_totals(&self.population, self.catalog.n_options())
    }

    pub fn true_outcome(&self) -> Result<ChamberOutcome> {
        compose_chamber(&self.catalog, &self.census_totals())
    }

    /// Draws a stratified sample of the given sizes and marks it as the
    /// planned sample in the frame.
    pub fn plan_sample(&mut self, sizes: &[usize], seed: u64) -> Result<StratifiedSample> {
        let sample = draw_sample(&self.population, sizes, seed)?;
        self.frame.set_planned(sample.iter().map(StationReturn::key))?;
        Ok(sample)
    }
}

pub fn census_totals(population: &StratifiedSample, n_options: usize) -> Vec<DistrictTotals> {
    population
        .strata
        .iter()
        .map(|s| {
            let mut acc = vec![0.0; n_options];
            for r in s {
                for (a, v) in acc.iter_mut().zip(&r.votes) {
                    *a += v.unwrap_or(0) as f64;
                }
            }
            acc
        })
        .collect()
}

/// Catalog for `cfg`: parties P1.., independents I1.., NUL, ABS; one coalition
/// whose seat agreement alternates among its members by district.
pub fn synth_catalog(cfg: &SynthConfig) -> Result<ElectionCatalog> {
    let constants = if cfg.strata == 300 {
        ElectoralConstants::default()
    } else {
        ElectoralConstants::scaled(cfg.strata as u32)
    };
    let party = |i: usize| format!("P{}", i + 1);
    let mut forces: Vec<ForceConfig> = (0..cfg.party_shares.len())
        .map(|i| ForceConfig { id: party(i), kind: ForceKind::Party })
        .collect();
    forces.extend((0..cfg.independents).map(|i| ForceConfig { id: format!("I{}", i + 1), kind: ForceKind::Independent }));
    forces.push(ForceConfig { id: "NUL".into(), kind: ForceKind::NullUnregistered });
    forces.push(ForceConfig { id: "ABS".into(), kind: ForceKind::Abstention });

    let mut coalitions = Vec::new();
    let mut options = Vec::new();
    if cfg.coalition.len() >= 2 {
        let members: Vec<String> = cfg.coalition.iter().map(|&i| party(i)).collect();
        let seat_agreement: BTreeMap<String, String> = (1..=cfg.strata)
            .map(|d| (d.to_string(), members[d % members.len()].clone()))
            .collect();
        coalitions.push(CoalitionConfig {
            id: members.join("+"),
            members: members.clone(),
            districts: None,
            default_seat_holder: None,
            seat_agreement,
        });
        for mask in 1u32..(1 << members.len()) {
            if mask.count_ones() >= 2 {
                let parties: Vec<String> =
                    (0..members.len()).filter(|b| mask & (1 << b) != 0).map(|b| members[b].clone()).collect();
                options.push(OptionConfig { id: parties.join("_"), parties });
            }
        }
    }
    ElectionCatalog::from_config(&CatalogConfig { constants, forces, coalitions, options })
}

fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| if a > 0.0 { Gamma::new(a, 1.0).expect("positive shape").sample(rng) } else { 0.0 })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.into_iter().map(|d| d / total).collect()
    } else {
        let positive = alpha.iter().filter(|&&a| a > 0.0).count() as f64;
        alpha.iter().map(|&a| if a > 0.0 { 1.0 / positive } else { 0.0 }).collect()
    }
}

fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let last = probs.iter().rposition(|&p| p > 0.0);
    let mut left = n;
    let mut mass = 1.0;
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if left == 0 || p <= 0.0 {
                return 0;
            }
            let q = if Some(i) == last { 1.0 } else { (p / mass).clamp(0.0, 1.0) };
            let x = Binomial::new(left, q).expect("probability in [0,1]").sample(rng);
            left -= x;
            mass -= p;
            x
        })
        .collect()
}

/// National option shares for stratum `h` (1-based), before perturbation.
fn base_option_shares(cfg: &SynthConfig, catalog: &ElectionCatalog, h: usize) -> Vec<f64> {
    let mut shares = vec![0.0; catalog.n_options()];
    let party_total: f64 = cfg.party_shares.iter().sum();
    let mut remaining = 1.0 - cfg.null_share;
    let home_independent = (h <= cfg.independents).then_some(h - 1);
    if home_independent.is_some() {
        remaining -= cfg.independent_share;
    }
    for (i, &w) in cfg.party_shares.iter().enumerate() {
        let o = catalog.single_option(i).expect("party option");
        shares[o] = remaining * w / party_total;
    }
    if cfg.coalition.len() >= 2 {
        let combos: Vec<usize> = (0..catalog.n_options()).filter(|&o| catalog.options[o].members.len() > 1).collect();
        let moved: f64 = cfg
            .coalition
            .iter()
            .map(|&i| {
                let o = catalog.single_option(i).expect("party option");
                let m = shares[o] * cfg.combination_share;
                shares[o] -= m;
                m
            })
            .sum();
        for &o in &combos {
            shares[o] = moved / combos.len() as f64;
        }
    }
    if let Some(i) = home_independent {
        let f = cfg.party_shares.len() + i;
        shares[catalog.single_option(f).expect("independent option")] = cfg.independent_share;
    }
    shares[catalog.single_option(catalog.null_force()).expect("null option")] = cfg.null_share;
    shares
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthElection> {
    if cfg.strata == 0 || cfg.stations.0 == 0 || cfg.stations.0 > cfg.stations.1 {
        return Err(Error::Input("synthetic election needs strata and stations".into()));
    }
    if cfg.independents > cfg.strata {
        return Err(Error::Input("more independents than strata".into()));
    }
    let catalog = synth_catalog(cfg)?;
    let layout = reference_district_layout();
    let mut stations = Vec::new();
    let mut population = StratifiedSample::empty(cfg.strata);
    for h in 1..=cfg.strata {
        let mut rng = rng::stream(seed, domain::SYNTH, h as u64);
        let (state, tz) = &layout[(h - 1) * layout.len() / cfg.strata];
        let base = base_option_shares(cfg, &catalog, h);
        let alpha: Vec<f64> = base.iter().map(|s| s * cfg.stratum_concentration).collect();
        let stratum_shares = dirichlet(&alpha, &mut rng);
        let stratum_turnout = rng.random_range(cfg.turnout.0..=cfg.turnout.1);
        let n = rng.random_range(cfg.stations.0..=cfg.stations.1);
        for s in 1..=n as u32 {
            let list = rng.random_range(cfg.list_range.0..=cfg.list_range.1);
            let mut meta = StationMeta::new(h as u32, s, list);
            meta.urban = rng.random_bool(cfg.urban_fraction);
            meta.state = state.clone();
            meta.tz_offset = *tz;
            let alpha: Vec<f64> = stratum_shares.iter().map(|p| p * cfg.station_concentration).collect();
            let shares = dirichlet(&alpha, &mut rng);
            let turnout = (stratum_turnout + rng.random_range(-0.08..=0.08)).clamp(0.05, 1.0);
            let ballots = (list as f64 * turnout).round() as u64;
            let votes = multinomial(ballots, &shares, &mut rng);
            population.strata[h - 1].push(StationReturn::complete(h as u32, s, list, votes));
            stations.push(meta);
        }
    }
    let frame = Frame::new(stations, catalog.constants.max_nominal_list)?;
    Ok(SynthElection { catalog, frame, population })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_election_is_consistent() {
        let e = generate(&SynthConfig::default(), 3).unwrap();
        assert_eq!(e.frame.n_strata(), 30);
        assert_eq!(e.catalog.constants.majority_seats, 30);
        assert_eq!(e.population.len(), e.frame.stations.len());
        for r in e.population.iter() {
            assert_eq!(r.votes.len(), e.catalog.n_options());
            assert!(r.ballots() <= u64::from(r.nominal_list));
            assert!((100..=750).contains(&r.nominal_list));
        }
        let outcome = e.true_outcome().unwrap();
        assert_eq!(outcome.composition.seats(), e.catalog.constants.total_seats);
        let again = generate(&SynthConfig::default(), 3).unwrap();
        assert_eq!(again.population.strata, e.population.strata);
    }

    #[test]
    fn multinomial_conserves() {
        let mut rng = rng::stream(1, 0, 0);
        for n in [0u64, 1, 17, 750] {
            let x = multinomial(n, &[0.2, 0.5, 0.0, 0.3], &mut rng);
            assert_eq!(x.iter().sum::<u64>(), n);
            assert_eq!(x[2], 0);
        }
    }

    #[test]
    fn plan_marks_frame() {
        let mut e = generate(&SynthConfig { strata: 4, ..SynthConfig::default() }, 8).unwrap();
        let s = e.plan_sample(&[3, 3, 3, 3], 1).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(e.frame.planned_total(), 12);
    }
}
