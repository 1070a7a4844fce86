//! Votes to seats: district winners, national shares, the capped iterative
//! proportional-representation allocation and largest-remainder rounding.

use crate::catalog::{ElectionCatalog, ElectoralConstants, ForceKind};
use crate::error::{Error, Result};

/// District-level totals per voting option, indexed by option. Slice
/// position `h` holds district `h + 1`.
pub type DistrictTotals = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Candidacy {
    Force(usize),
    Coalition(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistrictWinner {
    pub candidacy: Candidacy,
    /// Party (or independent) that takes the seat.
    pub seat_holder: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NationalShares {
    /// National totals per force after splitting combinations.
    pub nu: Vec<f64>,
    /// Share of valid votes (parties and independents); 0 for the rest.
    pub lambda: Vec<f64>,
    /// Share among parties above the threshold; 0 for the rest.
    pub eta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChamberComposition {
    pub majority: Vec<u32>,
    pub pr: Vec<u32>,
    /// PR seats left over when every remaining party hit its cap. Only
    /// non-zero when a single party qualifies and its cap binds.
    pub unassigned_pr: u32,
}

impl ChamberComposition {
    pub fn total(&self, force: usize) -> u32 {
        self.majority[force] + self.pr[force]
    }

    pub fn totals(&self) -> Vec<u32> {
        self.majority.iter().zip(&self.pr).map(|(a, b)| a + b).collect()
    }

    pub fn seats(&self) -> u32 {
        self.majority.iter().sum::<u32>() + self.pr.iter().sum::<u32>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamberOutcome {
    pub composition: ChamberComposition,
    pub winners: Vec<DistrictWinner>,
    pub shares: NationalShares,
}

/// Simple-majority winner of one district.
///
/// Coalitions running in the district compete with the sum of every option
/// inside the coalition; other parties and independents compete with their
/// own option. Ties go to the candidacy whose lowest force index is smallest.
pub fn district_winner(catalog: &ElectionCatalog, district: u32, votes: &[f64]) -> Result<DistrictWinner> {
    let running: Vec<usize> = (0..catalog.coalitions.len())
        .filter(|&c| catalog.coalitions[c].runs_in(district))
        .collect();
    let mut best: Option<(f64, usize, Candidacy)> = None;
    let mut consider = |v: f64, key: usize, cand: Candidacy| {
        let better = match best {
            None => true,
            Some((bv, bk, _)) => v > bv || (v == bv && key < bk),
        };
        if better {
            best = Some((v, key, cand));
        }
    };
    for &c in &running {
        let coalition = &catalog.coalitions[c];
        consider(
            catalog.coalition_district_total(c, votes),
            coalition.members[0],
            Candidacy::Coalition(c),
        );
    }
    for (f, force) in catalog.forces.iter().enumerate() {
        if !force.is_valid_vote() {
            continue;
        }
        if running.iter().any(|&c| catalog.coalitions[c].members.contains(&f)) {
            continue;
        }
        let v = catalog.single_option(f).map_or(0.0, |o| votes[o]);
        consider(v, f, Candidacy::Force(f));
    }
    match best {
        Some((v, _, cand)) if v > 0.0 => {
            let seat_holder = match cand {
                Candidacy::Force(f) => f,
                Candidacy::Coalition(c) => catalog.coalitions[c]
                    .seat_holder(district)
                    .ok_or_else(|| Error::Catalog(format!("no seat agreement for district {district}")))?,
            };
            Ok(DistrictWinner { candidacy: cand, seat_holder })
        }
        _ => Err(Error::DegenerateDistrict(district)),
    }
}

/// λ and η from national per-force totals.
pub fn shares_from_totals(catalog: &ElectionCatalog, nu: Vec<f64>) -> Result<NationalShares> {
    let valid_total: f64 = catalog
        .forces
        .iter()
        .zip(&nu)
        .filter(|(f, _)| f.is_valid_vote())
        .map(|(_, &v)| v)
        .sum();
    if valid_total.is_nan() || valid_total <= 0.0 {
        return Err(Error::NoValidVotes);
    }
    let lambda: Vec<f64> = catalog
        .forces
        .iter()
        .zip(&nu)
        .map(|(f, &v)| if f.is_valid_vote() { v / valid_total } else { 0.0 })
        .collect();
    let threshold = catalog.constants.threshold;
    let qualifies = |j: usize| {
        catalog.forces[j].kind == ForceKind::Party && lambda[j] > threshold + 1e-12
    };
    let qual_total: f64 = (0..nu.len()).filter(|&j| qualifies(j)).map(|j| nu[j]).sum();
    let eta: Vec<f64> = (0..nu.len())
        .map(|j| if qualifies(j) && qual_total > 0.0 { nu[j] / qual_total } else { 0.0 })
        .collect();
    Ok(NationalShares { nu, lambda, eta })
}

/// ν, λ, η from district totals (combinations split district by district).
pub fn national_shares(catalog: &ElectionCatalog, districts: &[DistrictTotals]) -> Result<NationalShares> {
    let mut nu = vec![0.0; catalog.n_forces()];
    for d in districts {
        for (acc, v) in nu.iter_mut().zip(catalog.split_district(d)) {
            *acc += v;
        }
    }
    shares_from_totals(catalog, nu)
}

/// Hamilton apportionment of `seats` over `weights`.
///
/// Floors of the quotas first, then one seat each by decreasing fractional
/// part; ties go to the larger weight, then the lower index.
pub fn largest_remainder(seats: u32, weights: &[f64]) -> Result<Vec<u32>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Input(format!("negative or non-finite weight {w}")));
    }
    if weights.is_empty() {
        return if seats == 0 {
            Ok(Vec::new())
        } else {
            Err(Error::Input("no weights to apportion over".into()))
        };
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("weights sum to {sum}, expected 1")));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| seats as f64 * w).collect();
    // Quotas within 1e-9 of an integer are that integer, and fractional parts
    // are compared on a 1e-9 grid, so rational ties stay ties after rounding.
    let floor_of = |q: f64| {
        let r = q.round();
        if (q - r).abs() <= 1e-9 { r } else { q.floor() }
    };
    let frac_key = |q: f64| ((q - floor_of(q)).max(0.0) * 1e9).round() as i64;
    let mut alloc: Vec<u32> = quotas.iter().map(|&q| floor_of(q) as u32).collect();
    let given: u32 = alloc.iter().sum();
    let mut left = seats.saturating_sub(given);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        frac_key(quotas[b])
            .cmp(&frac_key(quotas[a]))
            .then(weights[b].total_cmp(&weights[a]))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    Ok(alloc)
}

/// Cap M_j = min(seat_cap, ⌊total_seats·(η_j + margin)⌋).
pub fn seat_cap(eta: f64, constants: &ElectoralConstants) -> u32 {
    let x = constants.total_seats as f64 * (eta + constants.overrepresentation_margin);
    let r = x.round();
    // Guard band: values a hair under an integer are float noise.
    let floored = if (x - r).abs() <= 1e-12 * x.abs().max(1.0) { r } else { x.floor() };
    (floored.max(0.0) as u32).min(constants.seat_cap)
}

/// Iterative capped PR allocation.
///
/// PR seats go by largest remainder over the qualifying parties' votes. If
/// any party then exceeds its cap, the one with the largest excess has its PR
/// seats fixed at `cap - majority` (0 when majority seats alone exceed the
/// cap), leaves the pool with its votes, and the remaining seats are
/// redistributed. Each round removes a party, so the loop terminates.
pub fn allocate_pr(
    catalog: &ElectionCatalog,
    majority: &[u32],
    shares: &NationalShares,
) -> Result<ChamberComposition> {
    let constants = &catalog.constants;
    let n = catalog.n_forces();
    let mut pool: Vec<usize> = (0..n).filter(|&j| shares.eta[j] > 0.0).collect();
    if pool.is_empty() {
        return Err(Error::NoQualifyingParties(constants.pr_seats));
    }
    let caps: Vec<u32> = shares.eta.iter().map(|&e| seat_cap(e, constants)).collect();
    let mut pr = vec![0u32; n];
    let mut remaining = constants.pr_seats;
    loop {
        if pool.is_empty() {
            break;
        }
        let pool_votes: f64 = pool.iter().map(|&j| shares.nu[j]).sum();
        let weights: Vec<f64> = pool.iter().map(|&j| shares.nu[j] / pool_votes).collect();
        let alloc = largest_remainder(remaining, &weights)?;
        let worst = pool
            .iter()
            .zip(&alloc)
            .filter_map(|(&j, &a)| {
                let total = majority[j] + a;
                (total > caps[j]).then(|| (total - caps[j], j))
            })
            .fold(None::<(u32, usize)>, |best, (excess, j)| match best {
                Some((be, bj)) if be > excess || (be == excess && bj < j) => Some((be, bj)),
                _ => Some((excess, j)),
            });
        match worst {
            None => {
                for (&j, &a) in pool.iter().zip(&alloc) {
                    pr[j] = a;
                }
                remaining = 0;
                break;
            }
            Some((_, j)) => {
                let fixed = caps[j].saturating_sub(majority[j]);
                pr[j] = fixed;
                remaining -= fixed;
                pool.retain(|&p| p != j);
            }
        }
    }
    Ok(ChamberComposition {
        majority: majority.to_vec(),
        pr,
        unassigned_pr: remaining,
    })
}

/// Full pipeline: winners, shares, PR allocation.
pub fn compose_chamber(catalog: &ElectionCatalog, districts: &[DistrictTotals]) -> Result<ChamberOutcome> {
    let expected = catalog.constants.majority_seats as usize;
    if districts.len() != expected {
        return Err(Error::Input(format!(
            "expected totals for {expected} districts, got {}",
            districts.len()
        )));
    }
    let mut majority = vec![0u32; catalog.n_forces()];
    let mut winners = Vec::with_capacity(districts.len());
    for (h, votes) in districts.iter().enumerate() {
        let w = district_winner(catalog, h as u32 + 1, votes)?;
        majority[w.seat_holder] += 1;
        winners.push(w);
    }
    let shares = national_shares(catalog, districts)?;
    let composition = allocate_pr(catalog, &majority, &shares)?;
    Ok(ChamberOutcome { composition, winners, shares })
}
