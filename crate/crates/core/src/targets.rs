//! Named probability targets shared by the quantum fit and the classical
//! feasibility search.
//!
//! A target file is a JSON object mapping keys such as `"p_d_a"` (meaning
//! `p(d|a)`) to either a bare number or `{"value": x, "weight": w}`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ProbabilityReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("target {key} = {value} outside [0, 1]")]
    OutOfRange { key: TargetKey, value: f64 },
    #[error("target {key} has invalid weight {weight}")]
    BadWeight { key: TargetKey, weight: f64 },
    #[error("target {key} needs a model with {needed} condition(s), got {got}")]
    WrongArity {
        key: TargetKey,
        needed: usize,
        got: usize,
    },
    #[error("target table is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKey {
    PD,
    PA,
    PB,
    PC,
    PDA,
    PDB,
    PDC,
    PDAb,
    PDAbc,
    PAbD,
    PAbNotD,
    PAbcD,
    PAbcNotD,
}

impl TargetKey {
    pub const ALL: [TargetKey; 13] = [
        TargetKey::PD,
        TargetKey::PA,
        TargetKey::PB,
        TargetKey::PC,
        TargetKey::PDA,
        TargetKey::PDB,
        TargetKey::PDC,
        TargetKey::PDAb,
        TargetKey::PDAbc,
        TargetKey::PAbD,
        TargetKey::PAbNotD,
        TargetKey::PAbcD,
        TargetKey::PAbcNotD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetKey::PD => "p_d",
            TargetKey::PA => "p_a",
            TargetKey::PB => "p_b",
            TargetKey::PC => "p_c",
            TargetKey::PDA => "p_d_a",
            TargetKey::PDB => "p_d_b",
            TargetKey::PDC => "p_d_c",
            TargetKey::PDAb => "p_d_ab",
            TargetKey::PDAbc => "p_d_abc",
            TargetKey::PAbD => "p_ab_d",
            TargetKey::PAbNotD => "p_ab_not_d",
            TargetKey::PAbcD => "p_abc_d",
            TargetKey::PAbcNotD => "p_abc_not_d",
        }
    }

    /// Event and optional conditioning event, as conjunctions over `a, b, c, d`.
    pub fn events(self) -> (&'static str, Option<&'static str>) {
        match self {
            TargetKey::PD => ("d", None),
            TargetKey::PA => ("a", None),
            TargetKey::PB => ("b", None),
            TargetKey::PC => ("c", None),
            TargetKey::PDA => ("d", Some("a")),
            TargetKey::PDB => ("d", Some("b")),
            TargetKey::PDC => ("d", Some("c")),
            TargetKey::PDAb => ("d", Some("a & b")),
            TargetKey::PDAbc => ("d", Some("a & b & c")),
            TargetKey::PAbD => ("a & b", Some("d")),
            TargetKey::PAbNotD => ("a & b", Some("!d")),
            TargetKey::PAbcD => ("a & b & c", Some("d")),
            TargetKey::PAbcNotD => ("a & b & c", Some("!d")),
        }
    }

    /// Events mentioned by this key.
    pub fn labels(self) -> Vec<&'static str> {
        let (e, g) = self.events();
        let text = format!("{e} {}", g.unwrap_or(""));
        ["a", "b", "c", "d"]
            .into_iter()
            .filter(|l| text.contains(l))
            .collect()
    }

    /// Number of condition projectors a quantum model needs to define this key.
    fn arity(self) -> Option<usize> {
        match self {
            TargetKey::PB | TargetKey::PDB => Some(2),
            TargetKey::PDAb | TargetKey::PAbD | TargetKey::PAbNotD => Some(2),
            TargetKey::PC | TargetKey::PDC => Some(3),
            TargetKey::PDAbc | TargetKey::PAbcD | TargetKey::PAbcNotD => Some(3),
            _ => None,
        }
    }

    /// Reads this key from a quantum report of a model with `conditions`
    /// condition projectors. `Ok(None)` marks an undefined conditional.
    pub fn from_report(
        self,
        r: &ProbabilityReport,
        conditions: usize,
    ) -> Result<Option<f64>, TargetError> {
        let exact_joint = matches!(
            self,
            TargetKey::PDAb
                | TargetKey::PAbD
                | TargetKey::PAbNotD
                | TargetKey::PDAbc
                | TargetKey::PAbcD
                | TargetKey::PAbcNotD
        );
        if let Some(needed) = self.arity() {
            let ok = if exact_joint {
                needed == conditions
            } else {
                conditions >= needed
            };
            if !ok {
                return Err(TargetError::WrongArity {
                    key: self,
                    needed,
                    got: conditions,
                });
            }
        }
        Ok(match self {
            TargetKey::PD => Some(r.p_d),
            TargetKey::PA => Some(r.p_a),
            TargetKey::PB => r.p_b,
            TargetKey::PC => r.p_c,
            TargetKey::PDA => r.p_d_given_a,
            TargetKey::PDB => r.p_d_given_b,
            TargetKey::PDC => r.p_d_given_c,
            TargetKey::PDAb | TargetKey::PDAbc => r.p_d_given_joint,
            TargetKey::PAbD | TargetKey::PAbcD => r.p_joint_given_d,
            TargetKey::PAbNotD | TargetKey::PAbcNotD => r.p_joint_given_not_d,
        })
    }
}

impl fmt::Display for TargetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub value: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Bare(f64),
    Full(TargetEntry),
}

/// Target probabilities with weights, keyed in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TargetTable {
    entries: BTreeMap<TargetKey, TargetEntry>,
}

impl<'de> Deserialize<'de> for TargetTable {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<TargetKey, RawEntry>::deserialize(de)?;
        let entries = raw
            .into_iter()
            .map(|(k, e)| {
                let entry = match e {
                    RawEntry::Bare(value) => TargetEntry { value, weight: 1.0 },
                    RawEntry::Full(entry) => entry,
                };
                (k, entry)
            })
            .collect();
        TargetTable::new(entries).map_err(serde::de::Error::custom)
    }
}

impl TargetTable {
    pub fn new(entries: BTreeMap<TargetKey, TargetEntry>) -> Result<Self, TargetError> {
        if entries.is_empty() {
            return Err(TargetError::Empty);
        }
        for (&key, e) in &entries {
            if !(0.0..=1.0).contains(&e.value) {
                return Err(TargetError::OutOfRange {
                    key,
                    value: e.value,
                });
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(TargetError::BadWeight {
                    key,
                    weight: e.weight,
                });
            }
        }
        Ok(Self { entries })
    }

    /// Unit-weight table from `(key, value)` pairs.
    pub fn from_values(values: &[(TargetKey, f64)]) -> Result<Self, TargetError> {
        Self::new(
            values
                .iter()
                .map(|&(k, value)| (k, TargetEntry { value, weight: 1.0 }))
                .collect(),
        )
    }

    /// The five averaged survey answers: prior, the three single-symptom
    /// conditionals, and the all-symptoms conditional.
    pub fn survey() -> Self {
        Self::from_values(&[
            (TargetKey::PD, 0.57),
            (TargetKey::PDA, 0.69),
            (TargetKey::PDB, 0.63),
            (TargetKey::PDC, 0.73),
            (TargetKey::PDAbc, 0.55),
        ])
        .expect("constant table is valid")
    }

    pub fn iter(&self) -> impl Iterator<Item = (TargetKey, TargetEntry)> + '_ {
        self.entries.iter().map(|(&k, &e)| (k, e))
    }

    pub fn get(&self, key: TargetKey) -> Option<TargetEntry> {
        self.entries.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_weights(mut self, weight: f64) -> Self {
        for e in self.entries.values_mut() {
            e.weight = weight;
        }
        self
    }

    /// Event labels referenced by any key, in `a, b, c, d` order.
    pub fn labels(&self) -> Vec<&'static str> {
        let used: Vec<&str> = self.entries.keys().flat_map(|k| k.labels()).collect();
        ["a", "b", "c", "d"]
            .into_iter()
            .filter(|l| used.contains(l))
            .collect()
    }

    /// Whether `fitted` reproduces every strict ordering between `p_d` and
    /// another target (or between all pairs when `p_d` is not a target).
    pub fn ordering_matches(&self, fitted: &BTreeMap<TargetKey, Option<f64>>) -> bool {
        let keys: Vec<TargetKey> = self.entries.keys().copied().collect();
        let pairs: Vec<(TargetKey, TargetKey)> = if self.entries.contains_key(&TargetKey::PD) {
            keys.iter()
                .filter(|&&k| k != TargetKey::PD)
                .map(|&k| (TargetKey::PD, k))
                .collect()
        } else {
            keys.iter()
                .enumerate()
                .flat_map(|(i, &a)| keys[i + 1..].iter().map(move |&b| (a, b)))
                .collect()
        };
        pairs.into_iter().all(|(x, y)| {
            let tx = self.entries[&x].value;
            let ty = self.entries[&y].value;
            match (
                fitted.get(&x).copied().flatten(),
                fitted.get(&y).copied().flatten(),
            ) {
                (Some(fx), Some(fy)) => tx.total_cmp(&ty) == fx.total_cmp(&fy) || tx == ty,
                _ => false,
            }
        })
    }
}
