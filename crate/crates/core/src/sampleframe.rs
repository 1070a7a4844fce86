//! Population frame, station returns and stratified samples.

use std::collections::HashMap;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// Station key: (stratum id, station id within the stratum).
pub type StationKey = (u32, u32);

#[derive(Clone, Debug, PartialEq)]
pub struct StationMeta {
    pub stratum: u32,
    pub station: u32,
    pub nominal_list: u32,
    pub urban: bool,
    pub state: String,
    pub tz_offset: i32,
    /// Member of the planned sample.
    pub sampled: bool,
}

impl StationMeta {
    pub fn new(stratum: u32, station: u32, nominal_list: u32) -> Self {
        Self {
            stratum,
            station,
            nominal_list,
            urban: true,
            state: String::new(),
            tz_offset: 0,
            sampled: false,
        }
    }

    pub fn key(&self) -> StationKey {
        (self.stratum, self.station)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StratumInfo {
    pub id: u32,
    /// N_h, installed stations.
    pub population: usize,
    /// Planned n_h.
    pub planned: usize,
    /// l_h, nominal list over every installed station.
    pub nominal_list: u64,
    pub state: String,
    pub tz_offset: i32,
}

/// The sampling frame: every installed station, grouped into strata `1..=L`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub strata: Vec<StratumInfo>,
    pub stations: Vec<StationMeta>,
    index: HashMap<StationKey, usize>,
}

impl Frame {
    pub fn new(stations: Vec<StationMeta>, max_nominal_list: u32) -> Result<Self> {
        let n_strata = stations.iter().map(|s| s.stratum).max().unwrap_or(0);
        let mut strata: Vec<StratumInfo> = (1..=n_strata)
            .map(|id| StratumInfo {
                id,
                population: 0,
                planned: 0,
                nominal_list: 0,
                state: String::new(),
                tz_offset: 0,
            })
            .collect();
        let mut index = HashMap::with_capacity(stations.len());
        for (i, s) in stations.iter().enumerate() {
            if s.stratum == 0 {
                return Err(Error::Frame("stratum ids start at 1".into()));
            }
            if s.nominal_list == 0 || s.nominal_list > max_nominal_list {
                return Err(Error::Frame(format!(
                    "station {:?}: nominal list {} outside [1, {max_nominal_list}]",
                    s.key(),
                    s.nominal_list
                )));
            }
            if index.insert(s.key(), i).is_some() {
                return Err(Error::Frame(format!("duplicate station {:?}", s.key())));
            }
            let info = &mut strata[s.stratum as usize - 1];
            if info.population == 0 {
                info.state = s.state.clone();
                info.tz_offset = s.tz_offset;
            }
            info.population += 1;
            info.planned += usize::from(s.sampled);
            info.nominal_list += u64::from(s.nominal_list);
        }
        if let Some(empty) = strata.iter().find(|s| s.population == 0) {
            return Err(Error::Frame(format!("stratum {} has no stations", empty.id)));
        }
        Ok(Self { strata, stations, index })
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn station(&self, key: StationKey) -> Option<&StationMeta> {
        self.index.get(&key).map(|&i| &self.stations[i])
    }

    pub fn planned_total(&self) -> usize {
        self.strata.iter().map(|s| s.planned).sum()
    }

    /// National nominal list l.
    pub fn nominal_list_total(&self) -> u64 {
        self.strata.iter().map(|s| s.nominal_list).sum()
    }

    pub fn planned_stations(&self) -> impl Iterator<Item = &StationMeta> {
        self.stations.iter().filter(|s| s.sampled)
    }

    /// Marks the given stations as the planned sample (clearing any other mark).
    pub fn set_planned(&mut self, keys: impl IntoIterator<Item = StationKey>) -> Result<()> {
        for s in &mut self.stations {
            s.sampled = false;
        }
        for info in &mut self.strata {
            info.planned = 0;
        }
        for key in keys {
            let &i = self
                .index
                .get(&key)
                .ok_or_else(|| Error::Frame(format!("unknown station {key:?}")))?;
            if !self.stations[i].sampled {
                self.stations[i].sampled = true;
                self.strata[key.0 as usize - 1].planned += 1;
            }
        }
        Ok(())
    }
}

/// Votes of one polling station, one cell per voting option. `None` marks a
/// missing cell, which is distinct from zero votes.
#[derive(Clone, Debug, PartialEq)]
pub struct StationReturn {
    pub stratum: u32,
    pub station: u32,
    pub nominal_list: u32,
    pub votes: Vec<Option<u64>>,
}

impl StationReturn {
    pub fn complete(stratum: u32, station: u32, nominal_list: u32, votes: Vec<u64>) -> Self {
        Self {
            stratum,
            station,
            nominal_list,
            votes: votes.into_iter().map(Some).collect(),
        }
    }

    pub fn key(&self) -> StationKey {
        (self.stratum, self.station)
    }

    pub fn is_complete(&self) -> bool {
        self.votes.iter().all(Option::is_some)
    }

    /// Vote vector as floats; `None` if any cell is missing.
    pub fn values(&self) -> Option<Vec<f64>> {
        self.votes.iter().map(|v| v.map(|x| x as f64)).collect()
    }

    /// Ballots cast (missing cells count as zero).
    pub fn ballots(&self) -> u64 {
        self.votes.iter().flatten().sum()
    }

    /// l − ballots, clamped at zero.
    pub fn abstentions(&self) -> u64 {
        u64::from(self.nominal_list).saturating_sub(self.ballots())
    }
}

/// Returns grouped by stratum; slot `h` holds stratum `h + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StratifiedSample {
    pub strata: Vec<Vec<StationReturn>>,
}

impl StratifiedSample {
    pub fn empty(n_strata: usize) -> Self {
        Self { strata: vec![Vec::new(); n_strata] }
    }

    pub fn from_returns(n_strata: usize, returns: impl IntoIterator<Item = StationReturn>) -> Result<Self> {
        let mut s = Self::empty(n_strata);
        for r in returns {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, r: StationReturn) -> Result<()> {
        let h = r.stratum as usize;
        if h == 0 || h > self.strata.len() {
            return Err(Error::Input(format!("stratum {} outside 1..={}", r.stratum, self.strata.len())));
        }
        self.strata[h - 1].push(r);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.strata.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strata_with_data(&self) -> usize {
        self.strata.iter().filter(|s| !s.is_empty()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.strata.iter().flatten().all(StationReturn::is_complete)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StationReturn> {
        self.strata.iter().flatten()
    }
}

/// The received part of a planned sample.
#[derive(Clone, Debug)]
pub struct PartialSample {
    pub received: StratifiedSample,
    pub planned: usize,
}

impl PartialSample {
    pub fn new(received: StratifiedSample, frame: &Frame) -> Result<Self> {
        for (h, stratum) in received.strata.iter().enumerate() {
            if stratum.len() > frame.strata[h].planned {
                return Err(Error::Input(format!(
                    "stratum {} has {} returns but only {} planned",
                    h + 1,
                    stratum.len(),
                    frame.strata[h].planned
                )));
            }
        }
        Ok(Self { received, planned: frame.planned_total() })
    }

    pub fn received_count(&self) -> usize {
        self.received.len()
    }

    /// p = received / planned.
    pub fn received_fraction(&self) -> f64 {
        if self.planned == 0 {
            0.0
        } else {
            self.received.len() as f64 / self.planned as f64
        }
    }
}

/// Stratified SRSWOR: `n_h` stations from each stratum of `population`,
/// independently per stratum, reproducible from `seed`.
pub fn draw_sample(population: &StratifiedSample, sizes: &[usize], seed: u64) -> Result<StratifiedSample> {
    if sizes.len() != population.strata.len() {
        return Err(Error::Design(format!(
            "{} sizes for {} strata",
            sizes.len(),
            population.strata.len()
        )));
    }
    let mut out = StratifiedSample::empty(sizes.len());
    for (h, (stratum, &n)) in population.strata.iter().zip(sizes).enumerate() {
        if n > stratum.len() {
            return Err(Error::Design(format!(
                "stratum {}: n_h = {n} exceeds N_h = {}",
                h + 1,
                stratum.len()
            )));
        }
        let mut rng = rng::stream(seed, domain::SAMPLE, h as u64);
        let mut picks = index::sample(&mut rng, stratum.len(), n).into_vec();
        picks.sort_unstable();
        out.strata[h] = picks.into_iter().map(|i| stratum[i].clone()).collect();
    }
    Ok(out)
}

/// Expansion estimator (N_h / n_h)·Σ x per voting option.
pub fn stratum_estimator(stratum: u32, returns: &[StationReturn], population: usize) -> Result<Vec<f64>> {
    let first = returns.first().ok_or(Error::MissingStratum(stratum))?;
    let mut sums = vec![0.0; first.votes.len()];
    for r in returns {
        for (acc, v) in sums.iter_mut().zip(&r.votes) {
            *acc += v.ok_or_else(|| {
                Error::Input(format!("station {:?} has missing cells", r.key()))
            })? as f64;
        }
    }
    let factor = population as f64 / returns.len() as f64;
    Ok(sums.into_iter().map(|s| s * factor).collect())
}
