//! Explicit transition matrices on small state spaces and what can be read
//! off them: reversibility, second eigenvalue and relaxation time, mixing
//! iteration bounds, conductance of a cut, connectivity, and the limit law of
//! a reducible chain.
//!
//! Targets are passed as unnormalized log weights aligned with
//! `KernelMatrix::states`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{ln_binomial, ChainConfig, Sampler};
use crate::enumeration::{enumerate_exact, enumerate_feasible, SwapCache};
use crate::error::{Error, Result};
use crate::instance::{residual, Instance, Solution};

pub const SIMPLE_STATE_CAP: usize = 200_000;
pub const REDUCED_STATE_CAP: usize = 50_000;
/// Largest kernel handed to the dense eigensolver.
pub const DENSE_EIGEN_CAP: usize = 5_000;
/// Detailed-balance violation above which a kernel counts as non-reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-9;
/// Relative perturbation of `λ₂` used when comparing measured mixing times to
/// the eigenvalue bounds.
pub const EIGEN_REL_TOL: f64 = 1e-6;

/// The conventional accuracy `ε = 1/(2e)`.
pub fn default_epsilon() -> f64 {
    1.0 / (2.0 * std::f64::consts::E)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Simple { gamma: f64 },
    Reduced { k: usize },
    Truncated { gamma: f64, omega: u64 },
}

impl KernelKind {
    fn gamma(&self) -> f64 {
        match *self {
            KernelKind::Simple { gamma } | KernelKind::Truncated { gamma, .. } => gamma,
            KernelKind::Reduced { .. } => 0.0,
        }
    }

    fn omega(&self) -> Option<u64> {
        match *self {
            KernelKind::Truncated { omega, .. } => Some(omega),
            _ => None,
        }
    }

    pub fn is_reduced(&self) -> bool {
        matches!(self, KernelKind::Reduced { .. })
    }
}

/// A row-stochastic matrix over an enumerated state space, stored by rows as
/// `(column, probability)` pairs sorted by column.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub kind: KernelKind,
    pub states: Vec<Solution>,
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Whether each state is an exact solution.
    pub exact: Vec<bool>,
    index: HashMap<Solution, usize>,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, x: &Solution) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map(|pos| row[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }

    /// Largest `|Σ_j P(i, j) − 1|`.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| (row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.len()).map(|i| self.entry(i, i)).fold(f64::INFINITY, f64::min)
    }

    pub fn min_entry(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|row| row.iter().map(|&(_, p)| p))
            .fold(f64::INFINITY, f64::min)
    }

    /// `μ·P` for a row vector `μ`.
    pub fn step_distribution(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            if mu[i] == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += mu[i] * p;
            }
        }
        out
    }

    /// `μ·P^t`.
    pub fn distribution_after(&self, mu: &[f64], t: u64) -> Vec<f64> {
        let mut cur = mu.to_vec();
        for _ in 0..t {
            cur = self.step_distribution(&cur);
        }
        cur
    }

    /// Classes of the undirected graph of positive off-diagonal entries, each
    /// sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if j != i && p > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }
}

fn residual_l1(inst: &Instance, x: &[u32]) -> i64 {
    residual(inst, &Solution::new(x.to_vec())).l1()
}

/// Unnormalized log target of the chain: `log f − γ‖Vx − c‖₁` for the simple
/// kernels (`−∞` outside `Y_ω` when truncated), `log f` for the reduced one.
pub fn target_log_weights(inst: &Instance, kind: &KernelKind, states: &[Solution]) -> Vec<f64> {
    states.iter().map(|s| state_log_weight(inst, kind, &s.x)).collect()
}

fn state_log_weight(inst: &Instance, kind: &KernelKind, x: &[u32]) -> f64 {
    let base = inst.log_weight(x);
    if kind.is_reduced() {
        return base;
    }
    let r = residual_l1(inst, x);
    if matches!(kind.omega(), Some(w) if r > w as i64) {
        return f64::NEG_INFINITY;
    }
    base - kind.gamma() * r as f64
}

/// `exp(w − logsumexp(w))`.
pub fn normalize_log(weights: &[f64]) -> Vec<f64> {
    let top = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return vec![0.0; weights.len()];
    }
    let exps: Vec<f64> = weights.iter().map(|w| (w - top).exp()).collect();
    let total = neumaier_sum(exps.iter().copied());
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(weights: impl IntoIterator<Item = f64>) -> f64 {
    let weights: Vec<f64> = weights.into_iter().collect();
    let top = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + neumaier_sum(weights.iter().map(|w| (w - top).exp())).ln()
}

/// Compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn build_kernel(inst: &Instance, kind: KernelKind) -> Result<KernelMatrix> {
    let cap = if kind.is_reduced() {
        REDUCED_STATE_CAP
    } else {
        SIMPLE_STATE_CAP
    };
    build_kernel_capped(inst, kind, cap)
}

pub fn build_kernel_capped(inst: &Instance, kind: KernelKind, cap: usize) -> Result<KernelMatrix> {
    if let KernelKind::Reduced { k } = kind {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("k = {k} must be at least 2")));
        }
    }
    let states = state_space(inst, &kind, cap)?;
    let index: HashMap<Solution, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let rows: Vec<Vec<(usize, f64)>> = match kind {
        KernelKind::Reduced { k } => states
            .par_iter()
            .map_init(SwapCache::new, |cache, x| reduced_row(inst, k, x, &index, cache))
            .collect::<Result<_>>()?,
        _ => {
            let eligible = inst.eligible_columns();
            states
                .par_iter()
                .map(|x| simple_row(inst, &kind, &eligible, x, &index))
                .collect::<Result<_>>()?
        }
    };
    let exact = states.iter().map(|s| inst.is_exact(s)).collect();
    Ok(KernelMatrix {
        kind,
        states,
        rows,
        exact,
        index,
    })
}

fn state_space(inst: &Instance, kind: &KernelKind, cap: usize) -> Result<Vec<Solution>> {
    match *kind {
        KernelKind::Reduced { .. } => {
            let set = enumerate_exact(inst, cap)?;
            if !set.complete {
                return Err(Error::StateCapExceeded { cap });
            }
            Ok(set.solutions)
        }
        KernelKind::Simple { .. } => enumerate_feasible(inst, cap),
        KernelKind::Truncated { omega, .. } => Ok(enumerate_feasible(inst, cap)?
            .into_iter()
            .filter(|s| residual(inst, s).l1() <= omega as i64)
            .collect()),
    }
}

/// Turns accumulated off-diagonal mass into a sorted row with the diagonal
/// completing it to 1.
fn finish_row(me: usize, off: BTreeMap<usize, f64>) -> Vec<(usize, f64)> {
    let leaving = neumaier_sum(off.values().copied());
    let mut row: Vec<(usize, f64)> = off.into_iter().filter(|&(_, p)| p > 0.0).collect();
    row.push((me, 1.0 - leaving));
    row.sort_by_key(|&(j, _)| j);
    row
}

fn lookup(index: &HashMap<Solution, usize>, x: Vec<u32>) -> Result<usize> {
    let sol = Solution::new(x);
    index
        .get(&sol)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("transition leaves the state space at {sol}")))
}

fn simple_row(
    inst: &Instance,
    kind: &KernelKind,
    eligible: &[usize],
    x: &Solution,
    index: &HashMap<Solution, usize>,
) -> Result<Vec<(usize, f64)>> {
    let me = index[x];
    let mut off = BTreeMap::new();
    let pick = 1.0 / (2.0 * eligible.len().max(1) as f64);
    for &i in eligible {
        let mut base = x.x.clone();
        base[i] = 0;
        let agg = inst.aggregate(&base);
        let gmax = inst
            .column(i)
            .iter()
            .zip(inst.target().iter().zip(&agg))
            .filter(|(&v, _)| v > 0)
            .map(|(&v, (&c, &a))| (c as u64 - a) / v as u64)
            .min()
            .unwrap_or(0) as u32;
        let candidates: Vec<Vec<u32>> = (0..=gmax)
            .map(|g| {
                let mut y = base.clone();
                y[i] = g;
                y
            })
            .collect();
        let weights: Vec<f64> = candidates.iter().map(|y| state_log_weight(inst, kind, y)).collect();
        let probs = normalize_log(&weights);
        for (y, p) in candidates.into_iter().zip(probs) {
            if p == 0.0 || y == x.x {
                continue;
            }
            *off.entry(lookup(index, y)?).or_insert(0.0) += pick * p;
        }
    }
    Ok(finish_row(me, off))
}

/// Every sub-multiset of `x` with exactly `k` elements.
fn sub_multisets(x: &[u32], k: u32) -> Vec<Vec<u32>> {
    fn go(x: &[u32], pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == x.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let remaining: u32 = x[pos..].iter().sum();
        if remaining < left {
            return;
        }
        for z in 0..=x[pos].min(left) {
            cur[pos] = z;
            go(x, pos + 1, left - z, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; x.len()];
    go(x, 0, k, &mut cur, &mut out);
    out
}

fn reduced_row(
    inst: &Instance,
    k: usize,
    x: &Solution,
    index: &HashMap<Solution, usize>,
    cache: &mut SwapCache,
) -> Result<Vec<(usize, f64)>> {
    let me = index[x];
    let m = x.households();
    let mut off = BTreeMap::new();
    if m < k as u64 {
        return Ok(finish_row(me, off));
    }
    let per_fragment = 0.5 * (-ln_binomial(inst, m, k as u64)).exp();
    for z in sub_multisets(&x.x, k as u32) {
        let class = cache.swaps(inst, &Solution::new(z.clone()))?;
        if class.len() < 2 {
            continue;
        }
        let targets: Vec<Vec<u32>> = class
            .iter()
            .map(|zp| x.x.iter().zip(&z).zip(&zp.x).map(|((&a, &b), &c)| a - b + c).collect())
            .collect();
        let weights: Vec<f64> = targets.iter().map(|y| inst.log_weight(y)).collect();
        let probs = normalize_log(&weights);
        for (y, p) in targets.into_iter().zip(probs) {
            if p == 0.0 || y == x.x {
                continue;
            }
            *off.entry(lookup(index, y)?).or_insert(0.0) += per_fragment * p;
        }
    }
    Ok(finish_row(me, off))
}

/// `max_{x,x'} |σ(x)P(x,x') − σ(x')P(x',x)|` with `σ` normalized.
pub fn verify_detailed_balance(kernel: &KernelMatrix, log_target: &[f64]) -> f64 {
    let sigma = normalize_log(log_target);
    let mut worst = 0.0f64;
    for (i, row) in kernel.rows.iter().enumerate() {
        for &(j, p) in row {
            if j <= i {
                continue;
            }
            let v = (sigma[i] * p - sigma[j] * kernel.entry(j, i)).abs();
            worst = worst.max(v);
        }
    }
    worst
}

/// Where a chain starts, for the iteration bounds.
#[derive(Clone, Debug, PartialEq)]
pub enum StartSpec {
    /// The empty multiset for the simple kernels, the heaviest state for the
    /// reduced kernel.
    Default,
    State(Solution),
    /// A start drawn from the target restricted to these states.
    Set(Vec<Solution>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub states: usize,
    pub components: usize,
    pub lambda2: Option<f64>,
    pub tau_rel: Option<f64>,
    /// Target mass of the exact solutions (simple kernels only).
    pub p_star: Option<f64>,
    pub n_lower: Option<f64>,
    pub n_upper: Option<f64>,
    /// Target mass of the start state or set.
    pub start_mass: Option<f64>,
    pub epsilon: f64,
}

/// Second largest eigenvalue of a reversible kernel, via the symmetric matrix
/// `D^{1/2} P D^{−1/2}` with `D` the normalized target.
pub fn second_eigenvalue(kernel: &KernelMatrix, log_target: &[f64]) -> Result<f64> {
    let n = kernel.len();
    if n > DENSE_EIGEN_CAP {
        return Err(Error::StateCapExceeded { cap: DENSE_EIGEN_CAP });
    }
    if n < 2 {
        return Ok(0.0);
    }
    let mut a = DMatrix::zeros(n, n);
    for (i, row) in kernel.rows.iter().enumerate() {
        for &(j, p) in row {
            a[(i, j)] = p * ((log_target[i] - log_target[j]) / 2.0).exp();
        }
    }
    let sym = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values[1].clamp(0.0, 1.0))
}

pub fn relaxation_time(lambda2: f64) -> f64 {
    1.0 / (1.0 - lambda2)
}

/// Target mass of the exact states.
pub fn p_star(kernel: &KernelMatrix, log_target: &[f64]) -> f64 {
    let sigma = normalize_log(log_target);
    neumaier_sum(sigma.iter().zip(&kernel.exact).filter(|(_, &e)| e).map(|(&s, _)| s))
}

/// Lower and upper iteration bounds for the reduced chain at accuracy `eps`
/// from a start of target mass `pi0`.
pub fn reduced_bounds(tau: f64, pi0: f64, eps: f64) -> (f64, f64) {
    ((tau - 1.0) * (1.0 / (2.0 * eps)).ln(), tau * (1.0 / (eps * pi0)).ln())
}

/// Lower and upper bounds on the expected iterations per exact sample of the
/// restarted simple chain.
pub fn simple_bounds(tau: f64, p_star: f64, pi0: f64, eps: f64) -> (f64, f64) {
    let lower = (tau - 1.0) * (3.0 / (4.0 * eps * p_star)).ln() / ((1.0 + 2.0 * eps / 3.0) * p_star);
    let upper = tau * (3.0 / (2.0 * eps * p_star * pi0)).ln() / ((1.0 - 2.0 * eps / 3.0) * p_star);
    (lower, upper)
}

/// Iterations sufficient for accuracy `eps` from a start drawn from the target
/// restricted to a set of mass `mass`.
pub fn set_start_bound(tau: f64, mass: f64, eps: f64) -> f64 {
    tau * (1.0 / (2.0 * eps * mass.sqrt())).ln()
}

fn indices_of(kernel: &KernelMatrix, states: &[Solution]) -> Result<Vec<usize>> {
    states
        .iter()
        .map(|s| {
            kernel
                .index_of(s)
                .ok_or_else(|| Error::InvalidArgument(format!("{s} is not a state of the kernel")))
        })
        .collect()
}

fn default_start(kernel: &KernelMatrix, log_target: &[f64]) -> usize {
    if kernel.kind.is_reduced() {
        let mut best = 0;
        for (i, &w) in log_target.iter().enumerate() {
            if w > log_target[best] {
                best = i;
            }
        }
        best
    } else {
        kernel
            .states
            .iter()
            .position(|s| s.x.iter().all(|&v| v == 0))
            .unwrap_or(0)
    }
}

pub fn spectral_report(kernel: &KernelMatrix, log_target: &[f64], start: &StartSpec) -> Result<SpectralReport> {
    spectral_report_eps(kernel, log_target, start, default_epsilon())
}

pub fn spectral_report_eps(
    kernel: &KernelMatrix,
    log_target: &[f64],
    start: &StartSpec,
    eps: f64,
) -> Result<SpectralReport> {
    let violation = verify_detailed_balance(kernel, log_target);
    if violation > REVERSIBILITY_TOL {
        return Err(Error::NonReversible { violation });
    }
    let sigma = normalize_log(log_target);
    let p_star = (!kernel.kind.is_reduced()).then(|| p_star(kernel, log_target));
    let components = kernel.components().len();
    let start_mass = match start {
        StartSpec::Default => sigma[default_start(kernel, log_target)],
        StartSpec::State(s) => sigma[indices_of(kernel, std::slice::from_ref(s))?[0]],
        StartSpec::Set(set) => neumaier_sum(indices_of(kernel, set)?.into_iter().map(|i| sigma[i])),
    };
    let mut report = SpectralReport {
        states: kernel.len(),
        components,
        lambda2: None,
        tau_rel: None,
        p_star,
        n_lower: None,
        n_upper: None,
        start_mass: Some(start_mass),
        epsilon: eps,
    };
    if components != 1 {
        return Ok(report);
    }
    let lambda2 = second_eigenvalue(kernel, log_target)?;
    let tau = relaxation_time(lambda2);
    report.lambda2 = Some(lambda2);
    report.tau_rel = Some(tau);
    let (lower, upper) = match (p_star, start) {
        (Some(ps), _) if ps <= 0.0 => (f64::INFINITY, f64::INFINITY),
        (Some(ps), _) => simple_bounds(tau, ps, start_mass, eps),
        (None, StartSpec::Set(_)) => (reduced_bounds(tau, 1.0, eps).0, set_start_bound(tau, start_mass, eps)),
        (None, _) => reduced_bounds(tau, start_mass, eps),
    };
    report.n_lower = Some(lower);
    report.n_upper = Some(upper);
    Ok(report)
}

/// `Φ(S) = Σ_{x∈S, x'∉S} σ(x)P(x,x') / σ(S)` and the Cheeger lower bound
/// `1 − 2Φ` on `λ₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conductance {
    pub phi: f64,
    pub cheeger_lower: f64,
    pub mass: f64,
}

pub fn conductance_of_cut(kernel: &KernelMatrix, log_target: &[f64], set: &[Solution]) -> Result<Conductance> {
    let members = indices_of(kernel, set)?;
    let sigma = normalize_log(log_target);
    let mut inside = vec![false; kernel.len()];
    for &i in &members {
        inside[i] = true;
    }
    let mass = neumaier_sum(members.iter().map(|&i| sigma[i]));
    if !(mass > 0.0 && mass <= 0.5 + 1e-12) {
        return Err(Error::InvalidArgument(format!("cut mass {mass} outside (0, 1/2]")));
    }
    let flow = neumaier_sum(members.iter().flat_map(|&i| {
        let sigma = &sigma;
        let inside = &inside;
        kernel.rows[i]
            .iter()
            .filter(move |&&(j, _)| !inside[j])
            .map(move |&(_, p)| sigma[i] * p)
    }));
    let phi = flow / mass;
    Ok(Conductance {
        phi,
        cheeger_lower: 1.0 - 2.0 * phi,
        mass,
    })
}

/// Limit of `π₀·P^t`: within each component the target, scaled to the mass
/// `π₀` puts on that component.
pub fn stationary_of_components(kernel: &KernelMatrix, log_target: &[f64], pi0: &[f64]) -> Result<Vec<f64>> {
    if pi0.len() != kernel.len() {
        return Err(Error::InvalidArgument(format!(
            "start distribution has {} entries, kernel has {} states",
            pi0.len(),
            kernel.len()
        )));
    }
    let mut out = vec![0.0; kernel.len()];
    for comp in kernel.components() {
        let start_mass = neumaier_sum(comp.iter().map(|&i| pi0[i]));
        let local: Vec<f64> = comp.iter().map(|&i| log_target[i]).collect();
        for (&i, w) in comp.iter().zip(normalize_log(&local)) {
            out[i] = start_mass * w;
        }
    }
    Ok(out)
}

/// Iterations sufficient from a start drawn from the target restricted to
/// `set`, at accuracy `eps`.
pub fn mixing_bound_from_set(kernel: &KernelMatrix, log_target: &[f64], set: &[Solution], eps: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("start set is empty".into()));
    }
    let components = kernel.components().len();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let sigma = normalize_log(log_target);
    let mass = neumaier_sum(indices_of(kernel, set)?.into_iter().map(|i| sigma[i]));
    let tau = relaxation_time(second_eigenvalue(kernel, log_target)?);
    Ok(set_start_bound(tau, mass, eps))
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// `π` over a completely enumerated `X`, in enumeration order.
pub fn exact_posterior(inst: &Instance, limit: usize) -> Result<Vec<(Solution, f64)>> {
    let set = enumerate_exact(inst, limit)?;
    if !set.complete {
        return Err(Error::IncompleteEnumeration(format!(
            "more than {limit} exact solutions"
        )));
    }
    let weights: Vec<f64> = set.solutions.iter().map(|s| inst.log_weight(&s.x)).collect();
    Ok(set.solutions.into_iter().zip(normalize_log(&weights)).collect())
}

/// Total variation between the histogram of `num_samples` sampler outputs and
/// `reference`. Solutions absent from `reference` count as reference mass 0.
pub fn empirical_tvd(
    inst: &Instance,
    cfg: &ChainConfig,
    reference: &[(Solution, f64)],
    num_samples: usize,
    start: Option<Solution>,
) -> Result<f64> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut sampler = match start {
        Some(s) => Sampler::with_start(inst, cfg, s)?,
        None => Sampler::new(inst, cfg)?,
    };
    let mut counts: HashMap<Solution, usize> = HashMap::new();
    for _ in 0..num_samples {
        *counts.entry(sampler.draw()?.solution).or_insert(0) += 1;
    }
    Ok(histogram_tvd(&counts, num_samples, reference))
}

pub fn histogram_tvd(counts: &HashMap<Solution, usize>, total: usize, reference: &[(Solution, f64)]) -> f64 {
    let mut diff = 0.0;
    let mut seen = 0usize;
    for (sol, p) in reference {
        let c = counts.get(sol).copied().unwrap_or(0);
        seen += c;
        diff += (c as f64 / total as f64 - p).abs();
    }
    // Mass on solutions the reference does not list.
    diff += (total - seen) as f64 / total as f64;
    0.5 * diff
}

/// `p*_γ`, the mass of `X` under `f·exp(−γ‖Vx − c‖₁)` on `Y`, for each `γ`.
pub fn p_star_curve(inst: &Instance, gammas: &[f64], cap: usize) -> Result<Vec<(f64, f64)>> {
    let y = enumerate_feasible(inst, cap)?;
    let base: Vec<(f64, i64)> = y
        .iter()
        .map(|s| (inst.log_weight(&s.x), residual(inst, s).l1()))
        .collect();
    Ok(gammas
        .iter()
        .map(|&gamma| {
            let all = log_sum_exp(base.iter().map(|&(w, r)| w - gamma * r as f64));
            let exact = log_sum_exp(base.iter().filter(|&&(_, r)| r == 0).map(|&(w, _)| w));
            (gamma, (exact - all).exp())
        })
        .collect())
}

/// Exact solutions grouped by the k-swap graph.
pub fn connected_components(inst: &Instance, k: usize) -> Result<Vec<Vec<Solution>>> {
    let kernel = build_kernel(inst, KernelKind::Reduced { k })?;
    Ok(kernel
        .components()
        .into_iter()
        .map(|c| c.into_iter().map(|i| kernel.states[i].clone()).collect())
        .collect())
}

/// Measured mixing of one start state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingMeasurement {
    /// First `t` with `d_TV(δ_x0 P^t, σ)` at most the threshold.
    pub t_star: u64,
    /// Mass on exact states at `t_star`.
    pub exact_mass: f64,
    /// Iterations per exact sample: `t_star / exact_mass`.
    pub iterations: f64,
}

/// Propagates a point mass until it is within `threshold` of the target.
pub fn measure_mixing(
    kernel: &KernelMatrix,
    log_target: &[f64],
    start: usize,
    threshold: f64,
    max_t: u64,
) -> Option<MixingMeasurement> {
    let sigma = normalize_log(log_target);
    let mut mu = vec![0.0; kernel.len()];
    mu[start] = 1.0;
    for t in 0..=max_t {
        if tv_distance(&mu, &sigma) <= threshold {
            let exact_mass = neumaier_sum(mu.iter().zip(&kernel.exact).filter(|(_, &e)| e).map(|(&m, _)| m));
            return Some(MixingMeasurement {
                t_star: t,
                exact_mass,
                iterations: t as f64 / exact_mass,
            });
        }
        mu = kernel.step_distribution(&mu);
    }
    None
}

/// Measured mixing from every start compared with the eigenvalue bounds,
/// with `λ₂` perturbed by [`EIGEN_REL_TOL`] in the lenient direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lambda2: f64,
    pub n_lower: f64,
    /// Slowest start's measured iterations.
    pub worst_measured: f64,
    /// `(measured, upper bound)` per start state.
    pub per_start: Vec<(f64, f64)>,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        self.worst_measured >= self.n_lower && self.per_start.iter().all(|&(m, u)| m <= u)
    }
}

pub fn mixing_sandwich(kernel: &KernelMatrix, log_target: &[f64], max_t: u64) -> Result<Sandwich> {
    let eps = default_epsilon();
    let components = kernel.components().len();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let lambda2 = second_eigenvalue(kernel, log_target)?;
    let tau_lo = relaxation_time((lambda2 * (1.0 - EIGEN_REL_TOL)).clamp(0.0, 1.0 - 1e-15));
    let tau_hi = relaxation_time((lambda2 * (1.0 + EIGEN_REL_TOL)).clamp(0.0, 1.0 - 1e-15));
    let sigma = normalize_log(log_target);
    let (threshold, simple) = if kernel.kind.is_reduced() {
        (eps, None)
    } else {
        let ps = p_star(kernel, log_target);
        (2.0 * ps * eps / 3.0, Some(ps))
    };
    let n_lower = match simple {
        Some(ps) => simple_bounds(tau_lo, ps, 1.0, eps).0,
        None => reduced_bounds(tau_lo, 1.0, eps).0,
    };
    let mut per_start = Vec::with_capacity(kernel.len());
    let mut worst = 0.0f64;
    for (start, &mass) in sigma.iter().enumerate() {
        let m = measure_mixing(kernel, log_target, start, threshold, max_t)
            .ok_or_else(|| Error::InvalidArgument(format!("no mixing within {max_t} steps from state {start}")))?;
        let measured = if simple.is_some() {
            m.iterations
        } else {
            m.t_star as f64
        };
        let upper = match simple {
            Some(ps) => simple_bounds(tau_hi, ps, mass, eps).1,
            None => reduced_bounds(tau_hi, mass, eps).1,
        };
        worst = worst.max(measured);
        per_start.push((measured, upper));
    }
    Ok(Sandwich {
        lambda2,
        n_lower,
        worst_measured: worst,
        per_start,
    })
}

/// One line of an `analyze` sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: KernelKind,
    pub report: SpectralReport,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "kernel,gamma,k,omega,states,components,lambda2,tau_rel,p_star,n_lower,n_upper";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        let (name, gamma, k, omega) = match self.kind {
            KernelKind::Simple { gamma } => ("simple", Some(gamma), None, None),
            KernelKind::Reduced { k } => ("reduced", None, Some(k), None),
            KernelKind::Truncated { gamma, omega } => ("truncated", Some(gamma), None, Some(omega)),
        };
        format!(
            "{name},{},{},{},{},{},{},{},{},{},{}",
            gamma.map(|g| g.to_string()).unwrap_or_default(),
            k.map(|k| k.to_string()).unwrap_or_default(),
            omega.map(|w| w.to_string()).unwrap_or_default(),
            self.report.states,
            self.report.components,
            opt(self.report.lambda2),
            opt(self.report.tau_rel),
            opt(self.report.p_star),
            opt(self.report.n_lower),
            opt(self.report.n_upper),
        )
    }
}

pub fn analyze_sweep(inst: &Instance, kinds: &[KernelKind]) -> Result<Vec<SweepRow>> {
    kinds
        .iter()
        .map(|&kind| {
            let kernel = build_kernel(inst, kind)?;
            let target = target_log_weights(inst, &kind, &kernel.states);
            let report = spectral_report(&kernel, &target, &StartSpec::Default)?;
            Ok(SweepRow { kind, report })
        })
        .collect()
}
