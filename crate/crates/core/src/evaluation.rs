//! Representativeness of synthetic blocks against the base distribution:
//! projection of household types to coarse labels, base frequencies `p`,
//! expected and sampled frequencies `q` and `q̂`, total variation, and two
//! ways of reweighting the base distribution.
//!
//! Frequencies over several blocks pool households: a label's frequency is
//! its expected (or sampled) household count summed over blocks, divided by
//! the total household count. [`BlockWeighting::Blocks`] instead averages
//! per-block frequencies with equal block weights.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{exact_posterior, neumaier_sum};
use crate::error::{Error, Result};
use crate::instance::{Instance, Solution};

pub type TypeLabel = Vec<i64>;

pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// A label for every column index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeProjection {
    pub labels: Vec<TypeLabel>,
}

impl TypeProjection {
    pub fn identity(n: usize) -> Self {
        TypeProjection {
            labels: (0..n).map(|i| vec![i as i64]).collect(),
        }
    }

    pub fn all_to_one(n: usize) -> Self {
        TypeProjection {
            labels: vec![vec![0]; n],
        }
    }

    /// Labels each column by its entries at the given attribute coordinates.
    pub fn from_coordinates(inst: &Instance, coords: &[usize]) -> Result<Self> {
        if let Some(&bad) = coords.iter().find(|&&c| c >= inst.dim()) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {bad} out of range for dimension {}",
                inst.dim()
            )));
        }
        Ok(TypeProjection {
            labels: inst
                .columns()
                .iter()
                .map(|col| coords.iter().map(|&c| col[c] as i64).collect())
                .collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &TypeLabel {
        &self.labels[i]
    }

    fn check(&self, inst: &Instance) -> Result<()> {
        if self.len() != inst.num_types() {
            return Err(Error::InvalidArgument(format!(
                "projection labels {} columns, instance has {}",
                self.len(),
                inst.num_types()
            )));
        }
        Ok(())
    }
}

/// A probability map over type labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub weights: BTreeMap<TypeLabel, f64>,
}

impl TypeDistribution {
    /// Normalizes nonnegative masses; errors when they sum to zero.
    pub fn from_masses(masses: BTreeMap<TypeLabel, Vec<f64>>) -> Result<Self> {
        let summed: BTreeMap<TypeLabel, f64> = masses
            .into_iter()
            .map(|(label, parts)| (label, neumaier_sum(parts)))
            .collect();
        let total = neumaier_sum(summed.values().copied());
        if total <= 0.0 {
            return Err(Error::InvalidArgument("distribution has no mass".into()));
        }
        Ok(TypeDistribution {
            weights: summed.into_iter().map(|(l, w)| (l, w / total)).collect(),
        })
    }

    pub fn get(&self, label: &TypeLabel) -> f64 {
        self.weights.get(label).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.weights.values().copied())
    }

    /// Masses in label order, for printing.
    pub fn to_csv_rows(&self) -> Vec<(String, f64)> {
        self.weights.iter().map(|(l, &w)| (label_string(l), w)).collect()
    }
}

pub fn label_string(label: &TypeLabel) -> String {
    label.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(":")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockWeighting {
    /// Every household counts once.
    #[default]
    Households,
    /// Every block counts once.
    Blocks,
}

/// Frequencies with the number of blocks left out for having no households
/// or no exact solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub distribution: TypeDistribution,
    pub excluded_blocks: usize,
}

fn accumulate(masses: &mut BTreeMap<TypeLabel, Vec<f64>>, proj: &TypeProjection, counts: &[f64], scale: f64) {
    for (i, &c) in counts.iter().enumerate() {
        masses.entry(proj.label(i).clone()).or_default().push(c * scale);
    }
}

/// Expected label frequencies under each block's posterior, computed from a
/// complete enumeration of every block (at most `limit` solutions each).
pub fn expected_frequencies_q(
    instances: &[Instance],
    proj: &TypeProjection,
    weighting: BlockWeighting,
    limit: usize,
) -> Result<FrequencyEstimate> {
    let mut masses = BTreeMap::new();
    let mut excluded = 0;
    for inst in instances {
        proj.check(inst)?;
        let m = inst.households();
        let posterior = exact_posterior(inst, limit).map_err(|e| match e {
            Error::IncompleteEnumeration(msg) => {
                Error::IncompleteEnumeration(format!("{msg}; use sampled frequencies for this block instead"))
            }
            other => other,
        })?;
        if m == 0 || posterior.is_empty() {
            excluded += 1;
            continue;
        }
        let mut expected = vec![0.0; inst.num_types()];
        for (sol, p) in &posterior {
            for (e, &x) in expected.iter_mut().zip(&sol.x) {
                *e += p * x as f64;
            }
        }
        let scale = match weighting {
            BlockWeighting::Households => 1.0,
            BlockWeighting::Blocks => 1.0 / m as f64,
        };
        accumulate(&mut masses, proj, &expected, scale);
    }
    Ok(FrequencyEstimate {
        distribution: TypeDistribution::from_masses(masses)?,
        excluded_blocks: excluded,
    })
}

/// Label frequencies of one sampled solution per block.
pub fn empirical_frequencies_qhat(
    sampled: &[(&Instance, &Solution)],
    proj: &TypeProjection,
    weighting: BlockWeighting,
) -> Result<FrequencyEstimate> {
    let mut masses = BTreeMap::new();
    let mut excluded = 0;
    for (inst, sol) in sampled {
        proj.check(inst)?;
        inst.check_len(sol)?;
        if !inst.is_exact(sol) {
            return Err(Error::NotExact);
        }
        let m = inst.households();
        if m == 0 {
            excluded += 1;
            continue;
        }
        let counts: Vec<f64> = sol.x.iter().map(|&v| v as f64).collect();
        let scale = match weighting {
            BlockWeighting::Households => 1.0,
            BlockWeighting::Blocks => 1.0 / m as f64,
        };
        accumulate(&mut masses, proj, &counts, scale);
    }
    Ok(FrequencyEstimate {
        distribution: TypeDistribution::from_masses(masses)?,
        excluded_blocks: excluded,
    })
}

/// Base-distribution mass of each label.
pub fn pums_frequencies_p(probs: &[f64], proj: &TypeProjection) -> Result<TypeDistribution> {
    if probs.len() != proj.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probabilities for {} labels",
            probs.len(),
            proj.len()
        )));
    }
    let mut masses = BTreeMap::new();
    accumulate(&mut masses, proj, probs, 1.0);
    TypeDistribution::from_masses(masses)
}

/// `½ Σ_ℓ |a_ℓ − b_ℓ|`, with missing labels as 0.
pub fn tvd(a: &TypeDistribution, b: &TypeDistribution) -> f64 {
    let labels: BTreeSet<&TypeLabel> = a.weights.keys().chain(b.weights.keys()).collect();
    0.5 * neumaier_sum(labels.into_iter().map(|l| (a.get(l) - b.get(l)).abs()))
}

/// `probs[i] · (p_ℓ + λ)/(q̂_ℓ + λ)` with `ℓ = ℓ_i`, renormalized.
pub fn reweight_lambda(
    probs: &[f64],
    proj: &TypeProjection,
    p: &TypeDistribution,
    qhat: &TypeDistribution,
    lambda: f64,
) -> Result<Vec<f64>> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    if probs.len() != proj.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probabilities for {} labels",
            probs.len(),
            proj.len()
        )));
    }
    let raw: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &pr)| {
            let l = proj.label(i);
            pr * (p.get(l) + lambda) / (qhat.get(l) + lambda)
        })
        .collect();
    let total = neumaier_sum(raw.iter().copied());
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Rescales `p` within each class so that class masses match `qhat`.
pub fn reweight_partition(
    p: &TypeDistribution,
    qhat: &TypeDistribution,
    partition: &BTreeMap<TypeLabel, i64>,
) -> Result<TypeDistribution> {
    let class_of = |l: &TypeLabel| -> Result<i64> {
        partition
            .get(l)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("label {} has no class", label_string(l))))
    };
    let mut p_mass: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut q_mass: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (l, &w) in &p.weights {
        p_mass.entry(class_of(l)?).or_default().push(w);
    }
    for (l, &w) in &qhat.weights {
        q_mass.entry(class_of(l)?).or_default().push(w);
    }
    let p_mass: BTreeMap<i64, f64> = p_mass.into_iter().map(|(c, v)| (c, neumaier_sum(v))).collect();
    let q_mass: BTreeMap<i64, f64> = q_mass.into_iter().map(|(c, v)| (c, neumaier_sum(v))).collect();
    for (c, &q) in &q_mass {
        if q > 0.0 && p_mass.get(c).copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "class {c} has sampled mass {q} but no base mass"
            )));
        }
    }
    let mut weights = BTreeMap::new();
    for (l, &w) in &p.weights {
        let c = class_of(l)?;
        let pm = p_mass[&c];
        let qm = q_mass.get(&c).copied().unwrap_or(0.0);
        weights.insert(l.clone(), if pm > 0.0 { w * qm / pm } else { 0.0 });
    }
    Ok(TypeDistribution { weights })
}

/// Total mass per class.
pub fn class_masses(dist: &TypeDistribution, partition: &BTreeMap<TypeLabel, i64>) -> BTreeMap<i64, f64> {
    let mut out: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (l, &w) in &dist.weights {
        if let Some(&c) = partition.get(l) {
            out.entry(c).or_default().push(w);
        }
    }
    out.into_iter().map(|(c, v)| (c, neumaier_sum(v))).collect()
}
