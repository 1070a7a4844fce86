//! Electoral universe: political forces, coalitions, valid voting options and
//! the statutory constants, plus the coalition vote arithmetic.
//!
//! Forces are addressed by their registration index. Every force except the
//! abstention category gets an implicit single-force voting option with the
//! same id; multi-party combinations are declared explicitly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKind {
    Party,
    Independent,
    NullUnregistered,
    Abstention,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoliticalForce {
    pub id: String,
    pub kind: ForceKind,
}

impl PoliticalForce {
    /// Parties and independents: the forces that compete for seats.
    pub fn is_valid_vote(&self) -> bool {
        matches!(self.kind, ForceKind::Party | ForceKind::Independent)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coalition {
    pub id: String,
    /// Member party indices, ascending.
    pub members: Vec<usize>,
    /// Districts where the coalition registers a candidate; `None` means all.
    pub districts: Option<BTreeSet<u32>>,
    pub seat_agreement: BTreeMap<u32, usize>,
    pub default_seat_holder: Option<usize>,
}

impl Coalition {
    pub fn runs_in(&self, district: u32) -> bool {
        self.districts.as_ref().is_none_or(|d| d.contains(&district))
    }

    pub fn seat_holder(&self, district: u32) -> Option<usize> {
        self.seat_agreement
            .get(&district)
            .copied()
            .or(self.default_seat_holder)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VotingOption {
    pub id: String,
    /// Force indices, ascending. Length 1 for single-force options.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectoralConstants {
    pub total_seats: u32,
    pub majority_seats: u32,
    pub pr_seats: u32,
    pub seat_cap: u32,
    pub overrepresentation_margin: f64,
    pub threshold: f64,
    pub max_nominal_list: u32,
}

impl Default for ElectoralConstants {
    fn default() -> Self {
        Self {
            total_seats: 500,
            majority_seats: 300,
            pr_seats: 200,
            seat_cap: 300,
            overrepresentation_margin: 0.08,
            threshold: 0.03,
            max_nominal_list: 750,
        }
    }
}

impl ElectoralConstants {
    /// A chamber scaled down to `districts` majority seats, keeping the 3:2
    /// majority/PR split and the cap at 60% of the chamber.
    pub fn scaled(districts: u32) -> Self {
        let pr = districts * 2 / 3;
        let total = districts + pr;
        Self {
            total_seats: total,
            majority_seats: districts,
            pr_seats: pr,
            seat_cap: total * 3 / 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_seats != self.majority_seats + self.pr_seats {
            return Err(Error::Catalog(format!(
                "total_seats {} != majority_seats {} + pr_seats {}",
                self.total_seats, self.majority_seats, self.pr_seats
            )));
        }
        for (name, v) in [
            ("overrepresentation_margin", self.overrepresentation_margin),
            ("threshold", self.threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Catalog(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.max_nominal_list == 0 {
            return Err(Error::Catalog("max_nominal_list must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Config file representation

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CatalogConfig {
    #[serde(default)]
    pub constants: ElectoralConstants,
    pub forces: Vec<ForceConfig>,
    #[serde(default)]
    pub coalitions: Vec<CoalitionConfig>,
    /// Multi-party voting combinations.
    #[serde(default)]
    pub options: Vec<OptionConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForceConfig {
    pub id: String,
    pub kind: ForceKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoalitionConfig {
    pub id: String,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub districts: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_seat_holder: Option<String>,
    /// District id (as a string key) to the party that takes a won seat.
    #[serde(default)]
    pub seat_agreement: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptionConfig {
    pub id: String,
    pub parties: Vec<String>,
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ElectionCatalog {
    pub forces: Vec<PoliticalForce>,
    pub options: Vec<VotingOption>,
    pub coalitions: Vec<Coalition>,
    pub constants: ElectoralConstants,
    single_option: Vec<Option<usize>>,
    option_coalition: Vec<Option<usize>>,
    null_force: usize,
    abstention_force: usize,
}

impl ElectionCatalog {
    pub fn from_config(cfg: &CatalogConfig) -> Result<Self> {
        cfg.constants.validate()?;
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut forces = Vec::with_capacity(cfg.forces.len());
        for (i, f) in cfg.forces.iter().enumerate() {
            if index.insert(f.id.as_str(), i).is_some() {
                return Err(Error::Catalog(format!("duplicate force id {}", f.id)));
            }
            forces.push(PoliticalForce { id: f.id.clone(), kind: f.kind });
        }
        let find_kind = |k: ForceKind| -> Result<usize> {
            let hits: Vec<usize> = (0..forces.len()).filter(|&i| forces[i].kind == k).collect();
            match hits.as_slice() {
                [one] => Ok(*one),
                _ => Err(Error::Catalog(format!(
                    "exactly one force of kind {k:?} required, found {}",
                    hits.len()
                ))),
            }
        };
        let null_force = find_kind(ForceKind::NullUnregistered)?;
        let abstention_force = find_kind(ForceKind::Abstention)?;

        let lookup_party = |id: &str| -> Result<usize> {
            let &i = index
                .get(id)
                .ok_or_else(|| Error::Catalog(format!("unknown party {id}")))?;
            if forces[i].kind != ForceKind::Party {
                return Err(Error::Catalog(format!("{id} is not a party")));
            }
            Ok(i)
        };

        let mut coalitions = Vec::new();
        for c in &cfg.coalitions {
            let mut members = c
                .members
                .iter()
                .map(|m| lookup_party(m))
                .collect::<Result<Vec<_>>>()?;
            members.sort_unstable();
            members.dedup();
            if members.len() < 2 {
                return Err(Error::Catalog(format!("coalition {} needs at least two parties", c.id)));
            }
            let mut seat_agreement = BTreeMap::new();
            for (d, p) in &c.seat_agreement {
                let d: u32 = d
                    .trim()
                    .parse()
                    .map_err(|_| Error::Catalog(format!("coalition {}: bad district key {d}", c.id)))?;
                let p = lookup_party(p)?;
                if !members.contains(&p) {
                    return Err(Error::Catalog(format!(
                        "coalition {}: seat holder {} is not a member",
                        c.id, forces[p].id
                    )));
                }
                seat_agreement.insert(d, p);
            }
            let default_seat_holder = match &c.default_seat_holder {
                Some(p) => {
                    let p = lookup_party(p)?;
                    if !members.contains(&p) {
                        return Err(Error::Catalog(format!(
                            "coalition {}: default seat holder is not a member",
                            c.id
                        )));
                    }
                    Some(p)
                }
                None => None,
            };
            let districts = c.districts.as_ref().map(|d| d.iter().copied().collect::<BTreeSet<_>>());
            let coalition = Coalition {
                id: c.id.clone(),
                members,
                districts,
                seat_agreement,
                default_seat_holder,
            };
            let covered_districts: Vec<u32> = match &coalition.districts {
                Some(d) => d.iter().copied().collect(),
                None => (1..=cfg.constants.majority_seats).collect(),
            };
            if let Some(d) = covered_districts.iter().find(|&&d| coalition.seat_holder(d).is_none()) {
                return Err(Error::Catalog(format!(
                    "coalition {}: no seat agreement for district {d}",
                    c.id
                )));
            }
            coalitions.push(coalition);
        }
        for (a, ca) in coalitions.iter().enumerate() {
            for cb in &coalitions[a + 1..] {
                if ca.members.iter().any(|m| cb.members.contains(m)) {
                    return Err(Error::Catalog(format!(
                        "coalitions {} and {} share a member",
                        ca.id, cb.id
                    )));
                }
            }
        }

        let mut options = Vec::new();
        let mut single_option = vec![None; forces.len()];
        let mut option_coalition = Vec::new();
        let mut option_ids: HashMap<String, usize> = HashMap::new();
        for (i, f) in forces.iter().enumerate() {
            if f.kind == ForceKind::Abstention {
                continue;
            }
            single_option[i] = Some(options.len());
            option_ids.insert(f.id.clone(), options.len());
            option_coalition.push(coalitions.iter().position(|c| c.members.contains(&i)));
            options.push(VotingOption { id: f.id.clone(), members: vec![i] });
        }
        for o in &cfg.options {
            let mut members = o
                .parties
                .iter()
                .map(|m| lookup_party(m))
                .collect::<Result<Vec<_>>>()?;
            members.sort_unstable();
            members.dedup();
            if members.len() < 2 {
                return Err(Error::Catalog(format!(
                    "option {} must combine at least two parties",
                    o.id
                )));
            }
            let owners: Vec<usize> = coalitions
                .iter()
                .enumerate()
                .filter(|(_, c)| members.iter().all(|m| c.members.contains(m)))
                .map(|(i, _)| i)
                .collect();
            if owners.len() != 1 {
                return Err(Error::Catalog(format!(
                    "option {} is not a subset of exactly one coalition",
                    o.id
                )));
            }
            if option_ids.insert(o.id.clone(), options.len()).is_some() {
                return Err(Error::Catalog(format!("duplicate option id {}", o.id)));
            }
            option_coalition.push(Some(owners[0]));
            options.push(VotingOption { id: o.id.clone(), members });
        }

        Ok(Self {
            forces,
            options,
            coalitions,
            constants: cfg.constants.clone(),
            single_option,
            option_coalition,
            null_force,
            abstention_force,
        })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CatalogConfig = toml::from_str(s)?;
        Self::from_config(&cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Reconstructs the config form (useful to write synthetic catalogs).
    pub fn to_config(&self) -> CatalogConfig {
        CatalogConfig {
            constants: self.constants.clone(),
            forces: self
                .forces
                .iter()
                .map(|f| ForceConfig { id: f.id.clone(), kind: f.kind })
                .collect(),
            coalitions: self
                .coalitions
                .iter()
                .map(|c| CoalitionConfig {
                    id: c.id.clone(),
                    members: c.members.iter().map(|&m| self.forces[m].id.clone()).collect(),
                    districts: c.districts.as_ref().map(|d| d.iter().copied().collect()),
                    default_seat_holder: c.default_seat_holder.map(|p| self.forces[p].id.clone()),
                    seat_agreement: c
                        .seat_agreement
                        .iter()
                        .map(|(d, &p)| (d.to_string(), self.forces[p].id.clone()))
                        .collect(),
                })
                .collect(),
            options: self
                .options
                .iter()
                .filter(|o| o.members.len() > 1)
                .map(|o| OptionConfig {
                    id: o.id.clone(),
                    parties: o.members.iter().map(|&m| self.forces[m].id.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_config()).expect("catalog config serializes")
    }

    pub fn n_forces(&self) -> usize {
        self.forces.len()
    }

    pub fn n_options(&self) -> usize {
        self.options.len()
    }

    pub fn null_force(&self) -> usize {
        self.null_force
    }

    pub fn abstention_force(&self) -> usize {
        self.abstention_force
    }

    pub fn parties(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.forces.len()).filter(|&i| self.forces[i].kind == ForceKind::Party)
    }

    pub fn force_index(&self, id: &str) -> Option<usize> {
        self.forces.iter().position(|f| f.id == id)
    }

    pub fn option_index(&self, id: &str) -> Option<usize> {
        self.options.iter().position(|o| o.id == id)
    }

    /// The single-force option of a force (`None` for abstention).
    pub fn single_option(&self, force: usize) -> Option<usize> {
        self.single_option[force]
    }

    pub fn option_coalition(&self, option: usize) -> Option<usize> {
        self.option_coalition[option]
    }

    /// Splits `votes` cast for `option` among its members.
    ///
    /// Equal shares of `floor(votes / k)`; the remainder goes entirely to the
    /// member with the most individual votes (lowest index on ties). Works on
    /// integral and expanded (non-integral) totals alike.
    pub fn split_combination_votes(
        &self,
        option: usize,
        votes: f64,
        individual_totals: &[f64],
    ) -> Vec<(usize, f64)> {
        split_equal_with_remainder(&self.options[option].members, votes, individual_totals)
    }

    /// Sum of every voting option whose composition lies within the coalition.
    pub fn coalition_district_total(&self, coalition: usize, option_votes: &[f64]) -> f64 {
        let members = &self.coalitions[coalition].members;
        self.options
            .iter()
            .zip(option_votes)
            .filter(|(o, _)| o.members.iter().all(|m| members.contains(m)))
            .map(|(_, &v)| v)
            .sum()
    }

    /// Individual (single-option) votes per force in one district.
    pub fn individual_votes(&self, option_votes: &[f64]) -> Vec<f64> {
        (0..self.forces.len())
            .map(|f| self.single_option[f].map_or(0.0, |o| option_votes[o]))
            .collect()
    }

    /// Per-force votes of one district after splitting every combination.
    pub fn split_district(&self, option_votes: &[f64]) -> Vec<f64> {
        let individual = self.individual_votes(option_votes);
        let mut out = vec![0.0; self.forces.len()];
        for (o, &v) in option_votes.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let members = &self.options[o].members;
            if members.len() == 1 {
                out[members[0]] += v;
            } else {
                for (f, share) in split_equal_with_remainder(members, v, &individual) {
                    out[f] += share;
                }
            }
        }
        out
    }

    /// Inverse of a force-level view: places per-force totals on the
    /// single-force options, leaving combinations at zero.
    pub fn option_votes_from_forces(&self, force_votes: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.options.len()];
        for (f, &v) in force_votes.iter().enumerate() {
            if let Some(o) = self.single_option[f] {
                out[o] = v;
            }
        }
        out
    }
}

fn split_equal_with_remainder(members: &[usize], votes: f64, individual: &[f64]) -> Vec<(usize, f64)> {
    if members.len() == 1 {
        return vec![(members[0], votes)];
    }
    let k = members.len() as f64;
    let share = (votes / k).floor();
    let remainder = votes - share * k;
    let top = members
        .iter()
        .copied()
        .fold(None::<usize>, |best, m| match best {
            Some(b) if individual[b] > individual[m] || (individual[b] == individual[m] && b < m) => {
                Some(b)
            }
            _ => Some(m),
        })
        .expect("non-empty composition");
    members
        .iter()
        .map(|&m| (m, if m == top { share + remainder } else { share }))
        .collect()
}
