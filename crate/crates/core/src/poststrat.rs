//! Dynamic post-stratification: a fixed hierarchy of stratum groupings and
//! imputation of sufficient statistics for strata without returns.

use std::io::{Read, Write};

use log::warn;

use crate::bayes::{ForceStats, StratumStats};
use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::sampleframe::StationReturn;

pub const DEFAULT_K_LIST: [usize; 7] = [1, 10, 20, 50, 100, 200, 300];

/// Nominal list of the pseudo-station that stands in for an empty stratum.
pub const IMPUTATION_LIST: f64 = 750.0;

#[derive(Clone, Debug, PartialEq)]
pub struct StratumProfile {
    pub stratum: u32,
    pub features: Vec<f64>,
}

/// Nested partitions of strata `1..=L`, one per cut level.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringHierarchy {
    /// Ascending group counts; always contains 1 and L.
    pub ks: Vec<usize>,
    /// `labels[i][h]` is the 1-based group of stratum `h + 1` in the
    /// partition with `ks[i]` groups, numbered by first appearance.
    pub labels: Vec<Vec<usize>>,
}

impl ClusteringHierarchy {
    pub fn n_strata(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    /// Zero-based strata sharing stratum `h`'s group at level `level`.
    pub fn group(&self, level: usize, h: usize) -> Vec<usize> {
        let row = &self.labels[level];
        (0..row.len()).filter(|&g| row[g] == row[h]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.n_strata();
        if l == 0 {
            return Err(Error::Input("empty hierarchy".into()));
        }
        if self.ks.first() != Some(&1) || self.ks.last() != Some(&l) {
            return Err(Error::Input(format!("hierarchy levels must run from 1 to L = {l}")));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("hierarchy levels must be strictly increasing".into()));
        }
        for (k, row) in self.ks.iter().zip(&self.labels) {
            if row.len() != l {
                return Err(Error::Input("ragged hierarchy".into()));
            }
            let mut seen = row.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != *k {
                return Err(Error::Input(format!("level k = {k} has {} groups", seen.len())));
            }
        }
        // Nesting: a finer group never straddles two coarser groups.
        for i in 1..self.labels.len() {
            let (coarse, fine) = (&self.labels[i - 1], &self.labels[i]);
            for a in 0..l {
                for b in (a + 1)..l {
                    if fine[a] == fine[b] && coarse[a] != coarse[b] {
                        return Err(Error::Input(format!(
                            "levels {} and {} are not nested",
                            self.ks[i - 1],
                            self.ks[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-force shares of ballots cast (after splitting combinations) plus
/// turnout, one profile per stratum `1..=n_strata`.
pub fn profiles_from_returns(
    returns: &[StationReturn],
    catalog: &ElectionCatalog,
    n_strata: usize,
) -> Result<Vec<StratumProfile>> {
    let abstention = catalog.abstention_force();
    let mut votes = vec![vec![0.0; catalog.n_forces()]; n_strata];
    let mut lists = vec![0.0; n_strata];
    for r in returns {
        let h = r.stratum as usize;
        if h == 0 || h > n_strata {
            return Err(Error::Input(format!("historic return for unknown stratum {h}")));
        }
        let values = r
            .values()
            .ok_or_else(|| Error::Input(format!("historic station {:?} has missing cells", r.key())))?;
        for (acc, x) in votes[h - 1].iter_mut().zip(catalog.split_district(&values)) {
            *acc += x;
        }
        lists[h - 1] += r.nominal_list as f64;
    }
    votes
        .into_iter()
        .zip(lists)
        .enumerate()
        .map(|(h, (v, list))| {
            let ballots: f64 = v.iter().enumerate().filter(|&(j, _)| j != abstention).map(|(_, x)| x).sum();
            if ballots <= 0.0 || list <= 0.0 {
                return Err(Error::Input(format!("no historic votes for stratum {}", h + 1)));
            }
            let mut features: Vec<f64> = v
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != abstention)
                .map(|(_, x)| x / ballots)
                .collect();
            features.push(ballots / list);
            Ok(StratumProfile { stratum: h as u32 + 1, features })
        })
        .collect()
}

fn standardize(profiles: &[StratumProfile]) -> Result<Vec<Vec<f64>>> {
    let dim = profiles[0].features.len();
    if profiles.iter().any(|p| p.features.len() != dim || p.features.iter().any(|x| !x.is_finite())) {
        return Err(Error::Input("profiles must be finite and of equal length".into()));
    }
    let n = profiles.len() as f64;
    let mut columns = Vec::new();
    for f in 0..dim {
        let col: Vec<f64> = profiles.iter().map(|p| p.features[f]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if var <= 1e-24 {
            warn!("profile feature {f} is constant; dropped");
            continue;
        }
        let sd = var.sqrt();
        columns.push(col.into_iter().map(|x| (x - mean) / sd).collect::<Vec<_>>());
    }
    Ok((0..profiles.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect())
}

fn first_appearance(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|r| {
            let next = map.len() + 1;
            *map.entry(*r).or_insert(next)
        })
        .collect()
}

/// Complete-linkage agglomeration on standardized Euclidean distance, cut
/// at every k in `k_list` (1 and L are always added). Equal merge distances
/// go to the pair with the smallest ids, a cluster's id being its smallest
/// member.
pub fn build_hierarchy(profiles: &[StratumProfile], k_list: &[usize]) -> Result<ClusteringHierarchy> {
    let l = profiles.len();
    if l == 0 {
        return Err(Error::Input("no stratum profiles".into()));
    }
    let mut ordered = profiles.to_vec();
    ordered.sort_by_key(|p| p.stratum);
    if ordered.iter().enumerate().any(|(i, p)| p.stratum as usize != i + 1) {
        return Err(Error::Input("need exactly one profile per stratum 1..=L".into()));
    }
    let mut ks: Vec<usize> = k_list.to_vec();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > l) {
        return Err(Error::Input(format!("cut level {bad} outside [1, {l}]")));
    }
    ks.extend([1, l]);
    ks.sort_unstable();
    ks.dedup();

    let x = standardize(&ordered)?;
    let mut dist = vec![vec![0.0f64; l]; l];
    for a in 0..l {
        for b in (a + 1)..l {
            let d = x[a].iter().zip(&x[b]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            dist[a][b] = d;
            dist[b][a] = d;
        }
    }

    // Each live cluster is indexed by its smallest member.
    let mut assign: Vec<usize> = (0..l).collect();
    let mut alive = vec![true; l];
    let mut cuts: Vec<Option<Vec<usize>>> = vec![None; ks.len()];
    let mut clusters = l;
    loop {
        if let Ok(i) = ks.binary_search(&clusters) {
            cuts[i] = Some(first_appearance(&assign));
        }
        if clusters == 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..l).filter(|&a| alive[a]) {
            for b in ((a + 1)..l).filter(|&b| alive[b]) {
                if best.is_none_or(|(d, _, _)| dist[a][b] < d) {
                    best = Some((dist[a][b], a, b));
                }
            }
        }
        let (_, a, b) = best.expect("two live clusters");
        for c in (0..l).filter(|&c| alive[c] && c != a && c != b) {
            let d = dist[a][c].max(dist[b][c]);
            dist[a][c] = d;
            dist[c][a] = d;
        }
        alive[b] = false;
        for s in assign.iter_mut().filter(|s| **s == b) {
            *s = a;
        }
        clusters -= 1;
    }
    let labels = cuts.into_iter().map(|c| c.expect("every level is visited")).collect();
    Ok(ClusteringHierarchy { ks, labels })
}

/// Largest cut level whose group containing zero-based stratum `h` has data.
/// Returns the level index into `hierarchy.ks` and the group members.
pub fn find_kstar(h: usize, hierarchy: &ClusteringHierarchy, has_data: &[bool]) -> Result<(usize, Vec<usize>)> {
    find_kstar_below(h, hierarchy, has_data, hierarchy.ks.len())
}

fn find_kstar_below(
    h: usize,
    hierarchy: &ClusteringHierarchy,
    has_data: &[bool],
    below: usize,
) -> Result<(usize, Vec<usize>)> {
    for level in (0..below).rev() {
        let group = hierarchy.group(level, h);
        if group.iter().any(|&g| has_data[g]) {
            return Ok((level, group));
        }
    }
    Err(Error::NoData)
}

fn observed(s: &StratumStats) -> bool {
    s.first().is_some_and(|f| f.n > 0 && !f.imputed)
}

/// Fills strata without observed returns from the data-bearing strata of
/// their k* group; observed strata are returned unchanged.
pub fn impute_missing_strata(stats: &[StratumStats], hierarchy: &ClusteringHierarchy, l0: f64) -> Result<Vec<StratumStats>> {
    if hierarchy.n_strata() != stats.len() {
        return Err(Error::Input(format!(
            "hierarchy covers {} strata, statistics cover {}",
            hierarchy.n_strata(),
            stats.len()
        )));
    }
    let has_data: Vec<bool> = stats.iter().map(observed).collect();
    if !has_data.iter().any(|&d| d) {
        return Err(Error::NoData);
    }
    let mut out = stats.to_vec();
    for h in (0..stats.len()).filter(|&h| !has_data[h]) {
        let mut below = hierarchy.ks.len();
        out[h] = loop {
            let (level, group) = find_kstar_below(h, hierarchy, &has_data, below)?;
            let donors: Vec<&StratumStats> = group.iter().filter(|&&g| has_data[g]).map(|&g| &stats[g]).collect();
            let imputed: Option<StratumStats> = (0..stats[h].len())
                .map(|j| {
                    let (t, u, v) = donors
                        .iter()
                        .fold((0.0, 0.0, 0.0), |(t, u, v), s| (t + s[j].t, u + s[j].u, v + s[j].v));
                    (v > 0.0).then(|| ForceStats {
                        t: l0 * t / v,
                        u: l0 * u / v,
                        v: l0,
                        n: 1,
                        imputed: true,
                    })
                })
                .collect();
            match imputed {
                Some(s) => break s,
                None => below = level,
            }
        };
    }
    Ok(out)
}

pub fn write_hierarchy<W: Write>(writer: W, hierarchy: &ClusteringHierarchy) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["stratum_id".to_string()];
    header.extend(hierarchy.ks.iter().map(|k| format!("k{k}")));
    w.write_record(&header)?;
    for h in 0..hierarchy.n_strata() {
        let mut row = vec![(h + 1).to_string()];
        row.extend(hierarchy.labels.iter().map(|l| l[h].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hierarchy<R: Read>(reader: R) -> Result<ClusteringHierarchy> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("stratum_id") {
        return Err(Error::Input("hierarchy file must start with stratum_id".into()));
    }
    let ks: Vec<usize> = headers
        .iter()
        .skip(1)
        .map(|h| {
            let h = h.trim();
            h.strip_prefix('k')
                .unwrap_or(h)
                .parse()
                .map_err(|_| Error::Input(format!("bad hierarchy column {h:?}")))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parsed: Vec<usize> = rec
            .iter()
            .map(|c| c.trim().parse().map_err(|_| Error::Input(format!("bad hierarchy cell {c:?}"))))
            .collect::<Result<_>>()?;
        rows.push((parsed[0], parsed[1..].to_vec()));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i + 1) {
        return Err(Error::Input("hierarchy rows must cover strata 1..=L once".into()));
    }
    let labels = (0..ks.len())
        .map(|i| first_appearance(&rows.iter().map(|r| r.1[i]).collect::<Vec<_>>()))
        .collect();
    let h = ClusteringHierarchy { ks, labels };
    h.validate()?;
    Ok(h)
}
