//! Multiple imputation of missing station returns by chained predictive mean
//! matching, followed by the stratified bootstrap on every completed dataset
//! and Rubin's pooling rules.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::bootstrap::bootstrap_chamber;
use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::interval::{mean, sample_variance};
use crate::par;
use crate::rng::{self, domain};
use crate::sampleframe::{Frame, PartialSample, StationReturn, StratifiedSample};

/// Ridge added to the diagonal of XᵀX, relative to that diagonal, when the
/// normal equations are singular.
pub const RIDGE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct ImputationConfig {
    pub m: usize,
    pub iterations: usize,
    pub donors: usize,
    /// Voting-option columns used as predictors; `None` picks the four
    /// largest parties by observed votes.
    pub predictors: Option<Vec<usize>>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self { m: 15, iterations: 5, donors: 5, predictors: None }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.iterations < 1 || self.donors < 1 {
            return Err(Error::Input(format!(
                "imputation needs m ≥ 2, iterations ≥ 1 and a donor pool (got {}, {}, {})",
                self.m, self.iterations, self.donors
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledEstimate {
    pub q_bar: f64,
    pub w_bar: f64,
    pub b_var: f64,
    pub t_var: f64,
    /// Infinite when the between-imputation variance is zero.
    pub df: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Rubin's rules for m point estimates and their within-imputation variances.
pub fn rubin_pool(q: &[f64], u: &[f64], level: f64) -> Result<PooledEstimate> {
    let m = q.len();
    if m < 2 || u.len() != m {
        return Err(Error::Input("pooling needs m ≥ 2 paired estimates".into()));
    }
    if u.iter().any(|&x| x < 0.0) {
        return Err(Error::Input("negative within-imputation variance".into()));
    }
    let mf = m as f64;
    let q_bar = mean(q);
    let w_bar = mean(u);
    let b_var = sample_variance(q);
    let inflated = (1.0 + 1.0 / mf) * b_var;
    let t_var = w_bar + inflated;
    let p = (1.0 + level) / 2.0;
    let (df, quantile) = if b_var > 0.0 {
        let df = (mf - 1.0) * (1.0 + w_bar / inflated).powi(2);
        let t = StudentsT::new(0.0, 1.0, df).expect("positive df");
        (df, t.inverse_cdf(p))
    } else {
        (f64::INFINITY, Normal::standard().inverse_cdf(p))
    };
    let half = quantile * t_var.sqrt();
    Ok(PooledEstimate { q_bar, w_bar, b_var, t_var, df, level, lower: q_bar - half, upper: q_bar + half })
}

/// Indices of the `k` observed predictions closest to `target`, ties by index.
pub fn select_donors(target: f64, observed: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..observed.len()).collect();
    idx.sort_by(|&a, &b| {
        (observed[a] - target)
            .abs()
            .total_cmp(&(observed[b] - target).abs())
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

fn design_matrix(rows: &[usize], predictors: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), predictors.len() + 1, |i, c| {
        if c == 0 {
            1.0
        } else {
            predictors[c - 1][rows[i]]
        }
    })
}

fn inverse_normal_equations(xtx: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(inv) = xtx.clone().cholesky().map(|c| c.inverse()) {
        return inv;
    }
    let p = xtx.nrows();
    let mut ridged = xtx.clone();
    for i in 0..p {
        ridged[(i, i)] += RIDGE * xtx[(i, i)].abs().max(1.0);
    }
    ridged.cholesky().expect("ridge makes XᵀX positive definite").inverse()
}

/// One PMM pass over `target`; `missing[i]` marks cells to (re)impute.
/// Predictors must be complete. Returns the completed column.
pub fn pmm_impute_column<R: Rng + ?Sized>(
    target: &[f64],
    missing: &[bool],
    predictors: &[Vec<f64>],
    donors: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let obs: Vec<usize> = (0..target.len()).filter(|&i| !missing[i]).collect();
    let mis: Vec<usize> = (0..target.len()).filter(|&i| missing[i]).collect();
    if mis.is_empty() {
        return Ok(target.to_vec());
    }
    if obs.is_empty() {
        return Err(Error::Input("column has no observed cells".into()));
    }
    let k = donors.min(obs.len());
    if k < donors {
        warn!("only {} observed rows; donor pool shrunk from {donors} to {k}", obs.len());
    }

    let x_obs = design_matrix(&obs, predictors);
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|&i| target[i]));
    let xtx = x_obs.transpose() * &x_obs;
    let v = inverse_normal_equations(&xtx);
    let beta_hat = &v * (x_obs.transpose() * &y);
    let resid = &y - &x_obs * &beta_hat;
    let df = (obs.len() as f64 - xtx.nrows() as f64).max(1.0);
    let chi: f64 = ChiSquared::new(df).expect("positive df").sample(rng);
    let sigma_star = (resid.norm_squared() / chi).sqrt();
    let z = DVector::from_iterator(xtx.nrows(), (0..xtx.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let chol = v
        .clone()
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::from_diagonal(&v.diagonal().map(|d| d.max(0.0).sqrt())));
    let beta_star = &beta_hat + chol * z * sigma_star;

    let pred_obs: Vec<f64> = (&x_obs * &beta_hat).iter().copied().collect();
    let pred_mis = design_matrix(&mis, predictors) * &beta_star;
    let mut out = target.to_vec();
    for (&row, &yhat) in mis.iter().zip(pred_mis.iter()) {
        let pool = select_donors(yhat, &pred_obs, k);
        let pick = pool[rng.random_range(0..pool.len())];
        out[row] = target[obs[pick]];
    }
    Ok(out)
}

/// Planned-sample rows: received returns, then all-missing rows for planned
/// stations not yet received (nominal list taken from the frame).
pub fn planned_rows(partial: &PartialSample, frame: &Frame, n_options: usize) -> Result<Vec<StationReturn>> {
    let mut received = std::collections::HashMap::new();
    for r in partial.received.iter() {
        match frame.station(r.key()) {
            Some(meta) if meta.sampled => {
                received.insert(r.key(), r.clone());
            }
            _ => return Err(Error::Input(format!("station {:?} is not in the planned sample", r.key()))),
        }
    }
    Ok(frame
        .planned_stations()
        .map(|s| {
            received.remove(&s.key()).unwrap_or_else(|| StationReturn {
                stratum: s.stratum,
                station: s.station,
                nominal_list: s.nominal_list,
                votes: vec![None; n_options],
            })
        })
        .collect())
}

/// Default predictor set: single-party options of the four parties with the
/// most observed votes.
pub fn default_predictors(rows: &[StationReturn], catalog: &ElectionCatalog) -> Vec<usize> {
    let mut parties: Vec<(f64, usize)> = catalog
        .parties()
        .filter_map(|j| catalog.single_option(j))
        .map(|o| (rows.iter().filter_map(|r| r.votes[o]).sum::<u64>() as f64, o))
        .collect();
    parties.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = parties.into_iter().take(4).map(|(_, o)| o).collect();
    chosen.sort_unstable();
    chosen
}

#[derive(Clone, Debug)]
pub struct ImputedData {
    pub datasets: Vec<Vec<StationReturn>>,
    pub warnings: Vec<String>,
}

/// m completed copies of `rows`; chain i uses its own counter stream.
pub fn chained_impute(rows: &[StationReturn], predictors: &[usize], config: &ImputationConfig, seed: u64) -> Result<ImputedData> {
    config.validate()?;
    let n_cols = rows.first().map_or(0, |r| r.votes.len());
    if rows.iter().any(|r| r.votes.len() != n_cols) {
        return Err(Error::Input("ragged returns".into()));
    }
    let missing: Vec<Vec<bool>> = (0..n_cols)
        .map(|c| rows.iter().map(|r| r.votes[c].is_none()).collect())
        .collect();
    let mut warnings = Vec::new();
    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(n_cols);
    for c in 0..n_cols {
        let observed: Vec<f64> = rows.iter().filter_map(|r| r.votes[c]).map(|v| v as f64).collect();
        if observed.is_empty() && !rows.is_empty() {
            let msg = format!("column {c} has no observed cells; imputed as zeros");
            warn!("{msg}");
            warnings.push(msg);
        }
        let fill = if observed.is_empty() { 0.0 } else { mean(&observed) };
        initial.push(rows.iter().map(|r| r.votes[c].map_or(fill, |v| v as f64)).collect());
    }
    let fully_missing: Vec<bool> = missing.iter().map(|m| m.iter().all(|&x| x)).collect();
    let list: Vec<f64> = rows.iter().map(|r| r.nominal_list as f64).collect();
    let smallest_observed = (0..n_cols)
        .filter(|&c| !fully_missing[c] && missing[c].iter().any(|&x| x))
        .map(|c| missing[c].iter().filter(|&&x| !x).count())
        .min();
    if let Some(n) = smallest_observed.filter(|&n| n < config.donors) {
        let msg = format!("only {n} observed rows in some column; donor pool smaller than {}", config.donors);
        warn!("{msg}");
        warnings.push(msg);
    }

    let datasets = par::try_map_indexed(config.m, |i| {
        let mut rng = rng::stream(seed, domain::IMPUTATION, i as u64);
        let mut current = initial.clone();
        for c in 0..n_cols {
            if fully_missing[c] {
                current[c].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        for _ in 0..config.iterations {
            for c in 0..n_cols {
                if fully_missing[c] || !missing[c].iter().any(|&x| x) {
                    continue;
                }
                let mut preds: Vec<Vec<f64>> =
                    predictors.iter().filter(|&&p| p != c).map(|&p| current[p].clone()).collect();
                preds.push(list.clone());
                current[c] = pmm_impute_column(&current[c], &missing[c], &preds, config.donors, &mut rng)?;
            }
        }
        Ok::<Vec<StationReturn>, Error>(rows
            .iter()
            .enumerate()
            .map(|(r, row)| StationReturn {
                votes: (0..n_cols).map(|c| Some(row.votes[c].unwrap_or(current[c][r].round() as u64))).collect(),
                ..row.clone()
            })
            .collect())
    })?;
    Ok(ImputedData { datasets, warnings })
}

/// Bootstrap seed for completed dataset `i`.
pub fn dataset_seed(seed: u64, i: usize) -> u64 {
    rng::derive_seed(seed, domain::MI_BOOTSTRAP, i as u64)
}

#[derive(Clone, Debug)]
pub struct ForcePooled {
    pub force: usize,
    pub pooled: PooledEstimate,
    /// Seat bounds rounded outward and clamped to the chamber.
    pub lower: u32,
    pub upper: u32,
}

#[derive(Clone, Debug)]
pub struct MiResult {
    pub forces: Vec<ForcePooled>,
    pub warnings: Vec<String>,
    pub received: usize,
    pub planned: usize,
}

/// Impute the planned sample m times, bootstrap each completion with `b`
/// replicates and pool seats per force.
pub fn mi_chamber(
    partial: &PartialSample,
    frame: &Frame,
    catalog: &ElectionCatalog,
    config: &ImputationConfig,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<MiResult> {
    config.validate()?;
    if b < 2 {
        return Err(Error::Input("the bootstrap needs at least two replicates".into()));
    }
    let rows = planned_rows(partial, frame, catalog.n_options())?;
    if partial.received_count() == 0 {
        return Err(Error::NoData);
    }
    let predictors = match &config.predictors {
        Some(p) => p.clone(),
        None => default_predictors(&rows, catalog),
    };
    if let Some(&bad) = predictors.iter().find(|&&p| p >= catalog.n_options()) {
        return Err(Error::Input(format!("predictor column {bad} out of range")));
    }
    let mut warnings = Vec::new();
    let received = partial.received_count();
    if received < 2 * (predictors.len() + 2) {
        warnings.push(format!(
            "data-sufficiency: {received} stations received for a {}-parameter imputation model",
            predictors.len() + 2
        ));
    }
    let empty_strata = frame.n_strata() - partial.received.strata_with_data();
    if empty_strata > 0 {
        warnings.push(format!("data-sufficiency: {empty_strata} strata have no returns yet"));
    }
    let imputed = chained_impute(&rows, &predictors, config, seed)?;
    warnings.extend(imputed.warnings);
    for w in &warnings {
        warn!("{w}");
    }

    let mut per_dataset: Vec<Vec<Vec<f64>>> = Vec::with_capacity(config.m);
    for (i, data) in imputed.datasets.into_iter().enumerate() {
        let sample = StratifiedSample::from_returns(frame.n_strata(), data)?;
        let run = bootstrap_chamber(&sample, frame, catalog, b, dataset_seed(seed, i))?;
        let seats: Vec<Vec<f64>> = (0..catalog.n_forces())
            .map(|j| run.replicates.iter().map(|o| o.composition.total(j) as f64).collect())
            .collect();
        per_dataset.push(seats);
    }
    let total = catalog.constants.total_seats as f64;
    let forces = catalog
        .forces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_valid_vote())
        .map(|(j, _)| {
            let q: Vec<f64> = per_dataset.iter().map(|d| mean(&d[j])).collect();
            let u: Vec<f64> = per_dataset.iter().map(|d| sample_variance(&d[j])).collect();
            let pooled = rubin_pool(&q, &u, level)?;
            let lower = (pooled.lower - 1e-9).floor().clamp(0.0, total) as u32;
            let upper = (pooled.upper + 1e-9).ceil().clamp(0.0, total) as u32;
            Ok(ForcePooled { force: j, pooled, lower, upper })
        })
        .collect::<Result<_>>()?;
    Ok(MiResult { forces, warnings, received, planned: partial.planned })
}
