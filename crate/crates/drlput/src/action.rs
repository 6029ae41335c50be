//! Discretized, grouped hyperparameter space for the ranking utility.
//!
//! Each group holds one or more engagement weights that always share a value,
//! plus one reserved group for the reserve price. A group's range is split
//! into `m` equally spaced values, so the whole space has `m^g` actions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Engagement-weight names understood by the utility function.
pub const WEIGHT_NAMES: [&str; 3] = ["w_click", "w_click30", "w_conversion"];

/// One group of engagement weights sharing a single grid value.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    /// Engagement-weight names whose values are tied together.
    pub members: Vec<String>,
    pub min: f64,
    pub max: f64,
}

/// Inclusive value range for the reserve-price group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

/// The discretized action space: weight groups plus the reserve group,
/// each taking one of `values_per_group` equally spaced values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionGrid {
    pub weight_groups: Vec<GroupSpec>,
    pub reserve: Bounds,
    pub values_per_group: usize,
}

/// One point of the grid, identified both by per-group indices and by the
/// flat index used by the policy's output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    /// One index per group, most-significant group first; the reserve group
    /// is last.
    pub group_indices: Vec<usize>,
    pub flat_index: usize,
}

/// Decoded hyperparameters: the reserve price and per-engagement weights.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityParams {
    pub reserve: f64,
    pub weights: BTreeMap<String, f64>,
}

impl ActionGrid {
    /// Validates ranges, membership, and sizes. Every engagement-weight name
    /// must appear in exactly one group.
    pub fn validate(&self) -> Result<()> {
        if self.values_per_group < 2 {
            return Err(Error::Config(format!(
                "grid: values_per_group must be >= 2, got {}",
                self.values_per_group
            )));
        }
        if self.weight_groups.is_empty() {
            return Err(Error::Config("grid: at least one weight group required".into()));
        }
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for g in &self.weight_groups {
            if !(g.max > g.min) || g.min < 0.0 {
                return Err(Error::Config(format!(
                    "grid: group '{}' needs 0 <= min < max, got [{}, {}]",
                    g.name, g.min, g.max
                )));
            }
            if g.members.is_empty() {
                return Err(Error::Config(format!("grid: group '{}' has no members", g.name)));
            }
            for m in &g.members {
                if !WEIGHT_NAMES.contains(&m.as_str()) {
                    return Err(Error::Config(format!(
                        "grid: unknown engagement weight '{m}' in group '{}'",
                        g.name
                    )));
                }
                if let Some(other) = seen.insert(m.as_str(), g.name.as_str()) {
                    return Err(Error::Config(format!(
                        "grid: weight '{m}' appears in groups '{other}' and '{}'",
                        g.name
                    )));
                }
            }
        }
        if !(self.reserve.max > self.reserve.min) || self.reserve.min < 0.0 {
            return Err(Error::Config(format!(
                "grid: reserve needs 0 <= min < max, got [{}, {}]",
                self.reserve.min, self.reserve.max
            )));
        }
        Ok(())
    }

    /// Number of groups, including the reserve group.
    pub fn num_groups(&self) -> usize {
        self.weight_groups.len() + 1
    }

    /// Total action count `m^g`.
    pub fn num_actions(&self) -> usize {
        self.values_per_group.pow(self.num_groups() as u32)
    }

    /// Value bounds `(min, max)` of a group; the reserve group comes last.
    pub fn group_bounds(&self, group: usize) -> (f64, f64) {
        self.bounds(group)
    }

    fn bounds(&self, group: usize) -> (f64, f64) {
        if group < self.weight_groups.len() {
            let g = &self.weight_groups[group];
            (g.min, g.max)
        } else {
            (self.reserve.min, self.reserve.max)
        }
    }

    /// The `idx`-th grid value of a group: `min + idx * (max - min) / (m - 1)`,
    /// with both endpoints exact.
    pub fn grid_value(&self, group: usize, idx: usize) -> f64 {
        let (min, max) = self.bounds(group);
        let m = self.values_per_group;
        debug_assert!(idx < m);
        if idx == 0 {
            min
        } else if idx == m - 1 {
            max
        } else {
            min + idx as f64 * (max - min) / (m - 1) as f64
        }
    }

    /// Index of the grid value closest to `x`, clamped to the endpoints.
    pub fn nearest_index(&self, group: usize, x: f64) -> usize {
        let (min, max) = self.bounds(group);
        let m = self.values_per_group;
        let step = (max - min) / (m - 1) as f64;
        let k = ((x - min) / step).round();
        if k <= 0.0 {
            0
        } else if k >= (m - 1) as f64 {
            m - 1
        } else {
            k as usize
        }
    }

    /// Builds an [`Action`] from per-group indices.
    pub fn action_from_indices(&self, group_indices: Vec<usize>) -> Result<Action> {
        let g = self.num_groups();
        let m = self.values_per_group;
        if group_indices.len() != g {
            return Err(Error::Config(format!(
                "action: expected {g} group indices, got {}",
                group_indices.len()
            )));
        }
        let mut flat = 0usize;
        for &idx in &group_indices {
            if idx >= m {
                return Err(Error::Config(format!("action: group index {idx} out of range [0, {m})")));
            }
            flat = flat * m + idx;
        }
        Ok(Action { group_indices, flat_index: flat })
    }

    /// Builds an [`Action`] from a flat index.
    pub fn action_from_flat(&self, flat_index: usize) -> Result<Action> {
        let g = self.num_groups();
        let m = self.values_per_group;
        if flat_index >= self.num_actions() {
            return Err(Error::Config(format!(
                "action: flat index {flat_index} out of range [0, {})",
                self.num_actions()
            )));
        }
        let mut indices = vec![0usize; g];
        let mut rest = flat_index;
        for j in (0..g).rev() {
            indices[j] = rest % m;
            rest /= m;
        }
        Ok(Action { group_indices: indices, flat_index })
    }

    /// Decodes an action into utility hyperparameters: every member weight of
    /// a group is assigned the group's grid value, and the reserve group
    /// becomes the reserve price.
    pub fn decode(&self, action: &Action) -> Result<UtilityParams> {
        if action.group_indices.len() != self.num_groups()
            || action.group_indices.iter().any(|&i| i >= self.values_per_group)
        {
            return Err(Error::Config(format!(
                "action: indices {:?} invalid for this grid",
                action.group_indices
            )));
        }
        let mut weights = BTreeMap::new();
        for (j, group) in self.weight_groups.iter().enumerate() {
            let v = self.grid_value(j, action.group_indices[j]);
            for name in &group.members {
                weights.insert(name.clone(), v);
            }
        }
        let reserve = self.grid_value(self.weight_groups.len(), *action.group_indices.last().unwrap());
        Ok(UtilityParams { reserve, weights })
    }

    /// The production-default action: the midpoint index of every group.
    pub fn midpoint_action(&self) -> Action {
        let mid = (self.values_per_group - 1) / 2;
        self.action_from_indices(vec![mid; self.num_groups()])
            .expect("midpoint indices are always in range")
    }

    /// Default grid: click weights and conversion weight in separate groups
    /// over [0, 2], reserve over [0, 1], `m` values per group.
    pub fn default_grid(values_per_group: usize) -> ActionGrid {
        ActionGrid {
            weight_groups: vec![
                GroupSpec {
                    name: "click".into(),
                    members: vec!["w_click".into(), "w_click30".into()],
                    min: 0.0,
                    max: 2.0,
                },
                GroupSpec {
                    name: "conversion".into(),
                    members: vec!["w_conversion".into()],
                    min: 0.0,
                    max: 2.0,
                },
            ],
            reserve: Bounds { min: 0.0, max: 1.0 },
            values_per_group,
        }
    }
}
