//! Instances `(V, c, D)`, solutions, and the weight functions shared by every
//! sampler.
//!
//! An instance holds `n` distinct household-type columns `v_i ∈ Z≥0^d`, a base
//! distribution over them, a target count vector `c`, and a coordinate on which
//! every column equals 1 (so `c` at that coordinate is the household count `m`).
//! Weights are kept in log space throughout.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ probs = 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Unnormalized log weight; `f64::NEG_INFINITY` encodes weight zero.
pub type LogWeight = f64;

/// Which unnormalized distribution over exact solutions the samplers target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `f(x) = multinomial(‖x‖₁; x) · Π probs[i]^x[i]`, the i.i.d.-draw posterior.
    #[default]
    Multinomial,
    /// `f(x) = 1` on every exact solution.
    Uniform,
}

impl TargetKind {
    fn is_default(&self) -> bool {
        *self == TargetKind::Multinomial
    }
}

/// On-disk instance layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub d: usize,
    pub n: usize,
    pub columns: Vec<Vec<i64>>,
    pub probs: Vec<f64>,
    pub c: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_coord: Option<usize>,
    #[serde(default, skip_serializing_if = "TargetKind::is_default")]
    pub target: TargetKind,
}

/// A validated instance. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    columns: Vec<Vec<u32>>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    target: Vec<u32>,
    count_coord: usize,
    target_kind: TargetKind,
    ln_fact: Vec<f64>,
}

/// A multiset of household types, stored as multiplicities per column.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<u32>,
}

impl Solution {
    pub fn new(x: Vec<u32>) -> Self {
        Solution { x }
    }

    pub fn zeros(n: usize) -> Self {
        Solution { x: vec![0; n] }
    }

    /// `‖x‖₁`.
    pub fn households(&self) -> u64 {
        self.x.iter().map(|&v| v as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.x
    }
}

impl From<Vec<u32>> for Solution {
    fn from(x: Vec<u32>) -> Self {
        Solution { x }
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.x.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// `c − V·x`, signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Residual {
    pub values: Vec<i64>,
}

impl Residual {
    pub fn l1(&self) -> i64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0)
    }
}

impl Instance {
    /// Builds an instance, detecting the count coordinate as the first row on
    /// which every column is 1.
    pub fn new(columns: Vec<Vec<u32>>, probs: Vec<f64>, target: Vec<u32>) -> Result<Self> {
        let raw = InstanceFile {
            d: target.len(),
            n: columns.len(),
            columns: columns.iter().map(|c| c.iter().map(|&v| v as i64).collect()).collect(),
            probs,
            c: target.iter().map(|&v| v as i64).collect(),
            count_coord: None,
            target: TargetKind::Multinomial,
        };
        validate_instance(raw)
    }

    /// Uniform base probabilities over the given columns.
    pub fn uniform(columns: Vec<Vec<u32>>, target: Vec<u32>) -> Result<Self> {
        let n = columns.len();
        if n == 0 {
            return Err(Error::InvalidInstance("no columns".into()));
        }
        Instance::new(columns, vec![1.0 / n as f64; n], target)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: InstanceFile = serde_json::from_str(s)?;
        validate_instance(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Instance::from_json_str(&text)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            d: self.dim(),
            n: self.num_types(),
            columns: self
                .columns
                .iter()
                .map(|c| c.iter().map(|&v| v as i64).collect())
                .collect(),
            probs: self.probs.clone(),
            c: self.target.iter().map(|&v| v as i64).collect(),
            count_coord: Some(self.count_coord),
            target: self.target_kind,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn num_types(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &[u32] {
        &self.columns[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn target(&self) -> &[u32] {
        &self.target
    }

    pub fn count_coord(&self) -> usize {
        self.count_coord
    }

    /// The household count `m = c[count_coord]`.
    pub fn households(&self) -> u32 {
        self.target[self.count_coord]
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn with_target_kind(mut self, kind: TargetKind) -> Self {
        self.target_kind = kind;
        self
    }

    /// Same columns and target, new base distribution.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        let mut raw = self.to_file();
        raw.probs = probs;
        validate_instance(raw)
    }

    /// Same columns and probabilities, new target vector.
    pub fn with_target(&self, target: Vec<u32>) -> Result<Self> {
        let mut raw = self.to_file();
        raw.c = target.iter().map(|&v| v as i64).collect();
        validate_instance(raw)
    }

    /// Keeps only the listed columns (in the given order), renormalizing probs.
    pub fn restrict_columns(&self, keep: &[usize]) -> Result<Self> {
        let total: f64 = keep.iter().map(|&i| self.probs[i]).sum();
        let mut raw = self.to_file();
        raw.columns = keep.iter().map(|&i| raw.columns[i].clone()).collect();
        raw.probs = keep.iter().map(|&i| self.probs[i] / total).collect();
        raw.n = keep.len();
        validate_instance(raw)
    }

    /// Columns `v_i ⪯ c`; the only ones that can appear in a feasible solution.
    pub fn eligible_columns(&self) -> Vec<usize> {
        (0..self.num_types())
            .filter(|&i| self.columns[i].iter().zip(&self.target).all(|(v, c)| v <= c))
            .collect()
    }

    /// `V·x` in the attribute space.
    pub fn aggregate(&self, x: &[u32]) -> Vec<u64> {
        let mut out = vec![0u64; self.dim()];
        for (col, &mult) in self.columns.iter().zip(x) {
            if mult == 0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(col) {
                *o += v as u64 * mult as u64;
            }
        }
        out
    }

    pub fn check_len(&self, x: &Solution) -> Result<()> {
        if x.len() != self.num_types() {
            return Err(Error::SolutionLength {
                expected: self.num_types(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn is_feasible(&self, x: &Solution) -> bool {
        x.len() == self.num_types() && residual(self, x).is_nonnegative()
    }

    pub fn is_exact(&self, x: &Solution) -> bool {
        x.len() == self.num_types() && residual(self, x).is_zero()
    }

    /// `ln(k!)`, tabulated up to the household count.
    pub fn ln_factorial(&self, k: u64) -> f64 {
        match self.ln_fact.get(k as usize) {
            Some(&v) => v,
            None => {
                let top = self.ln_fact.len() as u64 - 1;
                let mut acc = self.ln_fact[top as usize];
                for j in top + 1..=k {
                    acc += (j as f64).ln();
                }
                acc
            }
        }
    }

    /// Log of the sampling target at `x`, without feasibility checks.
    pub fn log_weight(&self, x: &[u32]) -> LogWeight {
        match self.target_kind {
            TargetKind::Multinomial => self.log_multinomial_weight(x),
            TargetKind::Uniform => 0.0,
        }
    }

    fn log_multinomial_weight(&self, x: &[u32]) -> LogWeight {
        let total: u64 = x.iter().map(|&v| v as u64).sum();
        let mut acc = self.ln_factorial(total);
        for (&mult, &lp) in x.iter().zip(&self.log_probs) {
            if mult == 0 {
                continue;
            }
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += mult as f64 * lp - self.ln_factorial(mult as u64);
        }
        acc
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

/// Checks every instance invariant and returns the validated instance.
pub fn validate_instance(raw: InstanceFile) -> Result<Instance> {
    let InstanceFile {
        d,
        n,
        columns,
        probs,
        c,
        count_coord,
        target,
    } = raw;
    if d == 0 || n == 0 {
        return Err(invalid("d and n must be positive"));
    }
    if columns.len() != n {
        return Err(invalid(format!("expected {n} columns, found {}", columns.len())));
    }
    if probs.len() != n {
        return Err(invalid(format!("expected {n} probabilities, found {}", probs.len())));
    }
    if c.len() != d {
        return Err(invalid(format!("target c has length {}, expected {d}", c.len())));
    }
    let mut cols = Vec::with_capacity(n);
    for (i, col) in columns.iter().enumerate() {
        if col.len() != d {
            return Err(invalid(format!("column {i} has length {}, expected {d}", col.len())));
        }
        let mut out = Vec::with_capacity(d);
        for (j, &v) in col.iter().enumerate() {
            if v < 0 {
                return Err(invalid(format!("negative entry {v} in column {i} at coordinate {j}")));
            }
            out.push(u32::try_from(v).map_err(|_| invalid(format!("entry {v} too large")))?);
        }
        cols.push(out);
    }
    let mut tgt = Vec::with_capacity(d);
    for (j, &v) in c.iter().enumerate() {
        if v < 0 {
            return Err(invalid(format!("negative target entry {v} at coordinate {j}")));
        }
        tgt.push(u32::try_from(v).map_err(|_| invalid(format!("target entry {v} too large")))?);
    }
    let mut seen = HashSet::with_capacity(n);
    for (i, col) in cols.iter().enumerate() {
        if !seen.insert(col) {
            return Err(invalid(format!("duplicate column {i}")));
        }
    }
    for (i, &p) in probs.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
            return Err(invalid(format!("probability {p} of column {i} not in (0, 1]")));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(invalid(format!("probabilities sum to {sum}, not 1")));
    }
    let is_count_row = |j: usize| cols.iter().all(|col| col[j] == 1);
    let count_coord = match count_coord {
        Some(j) if j >= d => return Err(invalid(format!("count coordinate {j} out of range"))),
        Some(j) if !is_count_row(j) => return Err(invalid(format!("no count coordinate: row {j} is not all ones"))),
        Some(j) => j,
        None => (0..d)
            .find(|&j| is_count_row(j))
            .ok_or_else(|| invalid("no count coordinate: no row is all ones"))?,
    };
    let m = tgt[count_coord] as usize;
    let mut ln_fact = Vec::with_capacity(m + 1);
    let mut acc = 0.0f64;
    ln_fact.push(0.0);
    for k in 1..=m {
        acc += (k as f64).ln();
        ln_fact.push(acc);
    }
    Ok(Instance {
        log_probs: probs.iter().map(|p| p.ln()).collect(),
        columns: cols,
        probs,
        target: tgt,
        count_coord,
        target_kind: target,
        ln_fact,
    })
}

/// `log f(x)` for the multinomial posterior; errors when `x` is infeasible.
pub fn log_f(inst: &Instance, x: &Solution) -> Result<LogWeight> {
    inst.check_len(x)?;
    let r = residual(inst, x);
    if let Some(coord) = r.values.iter().position(|&v| v < 0) {
        return Err(Error::Infeasible { coord });
    }
    Ok(inst.log_multinomial_weight(&x.x))
}

/// `L(x) = Σ x[i]·log probs[i]`: `log f` without the multinomial coefficient.
pub fn linear_score(inst: &Instance, x: &Solution) -> f64 {
    x.x.iter()
        .zip(inst.log_probs())
        .filter(|(&m, _)| m > 0)
        .map(|(&m, &lp)| m as f64 * lp)
        .sum()
}

pub fn residual(inst: &Instance, x: &Solution) -> Residual {
    let agg = inst.aggregate(&x.x);
    Residual {
        values: inst
            .target()
            .iter()
            .zip(agg)
            .map(|(&c, a)| c as i64 - a as i64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example2() -> Instance {
        let cols = vec![vec![3, 0, 0, 1], vec![0, 3, 0, 1], vec![0, 0, 3, 1], vec![1, 1, 1, 1]];
        Instance::uniform(cols, vec![3, 3, 3, 3]).unwrap()
    }

    fn block_b() -> Instance {
        let cols = vec![vec![0, 2, 1], vec![1, 1, 1], vec![2, 0, 1]];
        Instance::new(cols, vec![0.25, 0.5, 0.25], vec![2, 2, 2]).unwrap()
    }

    #[test]
    fn example2_validates() {
        let inst = example2();
        assert_eq!(inst.count_coord(), 3);
        assert_eq!(inst.households(), 3);
    }

    #[test]
    fn rejects_unnormalized_probs() {
        let err = Instance::new(vec![vec![1, 1], vec![2, 1]], vec![0.5, 0.6], vec![2, 1]).unwrap_err();
        assert!(err.to_string().contains("sum to 1.1"), "{err}");
    }

    #[test]
    fn rejects_missing_count_coordinate() {
        let err = Instance::new(vec![vec![1, 2], vec![2, 1]], vec![0.5, 0.5], vec![2, 2]).unwrap_err();
        assert!(err.to_string().contains("no count coordinate"), "{err}");
    }

    #[test]
    fn rejects_negative_and_duplicate() {
        let mut raw = example2().to_file();
        raw.columns[0][0] = -1;
        assert!(validate_instance(raw).unwrap_err().to_string().contains("negative"));
        let mut raw = example2().to_file();
        raw.columns[1] = raw.columns[0].clone();
        assert!(validate_instance(raw).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_declared_count_coord_that_is_not_ones() {
        let mut raw = example2().to_file();
        raw.count_coord = Some(0);
        assert!(validate_instance(raw).is_err());
    }

    #[test]
    fn log_f_block_b() {
        let inst = block_b();
        let two_mixed = Solution::new(vec![0, 2, 0]);
        let split = Solution::new(vec![1, 0, 1]);
        assert!((log_f(&inst, &two_mixed).unwrap() - 0.25f64.ln()).abs() < 1e-14);
        assert!((log_f(&inst, &split).unwrap() - 0.125f64.ln()).abs() < 1e-14);
        assert_eq!(log_f(&inst, &Solution::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn log_f_rejects_infeasible() {
        let inst = block_b();
        assert!(matches!(
            log_f(&inst, &Solution::new(vec![0, 3, 0])),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn linear_score_block_b() {
        let inst = block_b();
        assert_eq!(linear_score(&inst, &Solution::zeros(3)), 0.0);
        let a = linear_score(&inst, &Solution::new(vec![0, 2, 0]));
        let b = linear_score(&inst, &Solution::new(vec![1, 0, 1]));
        assert!((a - 2.0 * 0.5f64.ln()).abs() < 1e-14);
        assert!((b - 2.0 * 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn residuals_example2() {
        let inst = example2();
        let r = residual(&inst, &Solution::new(vec![1, 1, 1, 0]));
        assert!(r.is_zero());
        let r = residual(&inst, &Solution::zeros(4));
        assert_eq!(r.values, vec![3, 3, 3, 3]);
        assert_eq!(r.l1(), 12);
        let r = residual(&inst, &Solution::new(vec![0, 0, 0, 1]));
        assert_eq!(r.values, vec![2, 2, 2, 2]);
        assert_eq!(r.l1(), 8);
    }

    #[test]
    fn block_b_posterior_is_one_third_two_thirds() {
        let inst = block_b();
        let a = log_f(&inst, &Solution::new(vec![1, 0, 1])).unwrap().exp();
        let b = log_f(&inst, &Solution::new(vec![0, 2, 0])).unwrap().exp();
        assert!((a / (a + b) - 1.0 / 3.0).abs() < 1e-14);
        assert!((b / (a + b) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let inst = block_b().with_target_kind(TargetKind::Uniform);
        let back = Instance::from_json_str(&inst.to_json_string()).unwrap();
        assert_eq!(back, inst);
        let sol: Solution = serde_json::from_str(r#"{"x":[1,0,1]}"#).unwrap();
        assert_eq!(sol.x, vec![1, 0, 1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // log f − L is the log multinomial coefficient, never negative.
            #[test]
            fn log_f_dominates_linear_score(a in 0u32..3, b in 0u32..3, c in 0u32..3) {
                let inst = block_b().with_target(vec![6, 6, 6]).unwrap();
                let x = Solution::new(vec![a, b, c]);
                prop_assume!(inst.is_feasible(&x));
                let gap = log_f(&inst, &x).unwrap() - linear_score(&inst, &x);
                prop_assert!(gap >= -1e-12);
            }

            #[test]
            fn residual_sign_matches_feasibility(a in 0u32..4, b in 0u32..4, c in 0u32..4, d in 0u32..4) {
                let inst = example2();
                let x = Solution::new(vec![a, b, c, d]);
                let r = residual(&inst, &x);
                prop_assert_eq!(r.is_nonnegative(), inst.is_feasible(&x));
                prop_assert_eq!(r.is_zero(), inst.is_exact(&x));
            }
        }
    }
}
