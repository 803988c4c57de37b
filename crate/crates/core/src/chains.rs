//! Samplers for the posterior over exact solutions.
//!
//! - Rejection: i.i.d. draws from the base distribution until the block
//!   matches exactly.
//! - Simple chain `P_γ`: lazy single-coordinate resampling on the feasible set
//!   `Y`, targeting `f(x)·exp(−γ‖Vx − c‖₁)`, wrapped in restart-until-exact.
//! - Truncated simple chain: as above on `Y_ω`, the states with residual L1 at
//!   most `ω`.
//! - Reduced chain `P_k`: lazy k-swap moves within `X`.
//! - Hybrid: top-N enumeration by `L`, a start drawn from `π` restricted to
//!   those, then `t` reduced-chain steps (none when the enumeration is
//!   complete).
//!
//! All randomness comes from a seeded ChaCha8 stream, so identical
//! `(instance, config)` pairs give identical reports.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enumeration::{enumerate_top_n, SolutionSet, SwapCache};
use crate::error::{Error, Result};
use crate::instance::{Instance, Solution, TargetKind};

pub type ChainRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const DEFAULT_REJECTION_RESTARTS: u64 = 1_000_000;
pub const DEFAULT_SIMPLE_RESTARTS: u64 = 1_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rejection,
    Simple,
    Reduced,
    #[default]
    Hybrid,
    TruncatedSimple,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub algorithm: Algorithm,
    /// Inverse temperature of the simple chains.
    pub gamma: f64,
    /// Swap size of the reduced chain.
    pub k: usize,
    /// MCMC iterations per sample.
    pub t: u64,
    /// Solutions enumerated by the hybrid sampler.
    pub top_n: usize,
    /// Residual slack of the truncated chain.
    pub omega: u64,
    pub seed: u64,
    /// Rounds before giving up; `None` picks the per-algorithm default.
    pub max_restarts: Option<u64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            algorithm: Algorithm::Hybrid,
            gamma: 1.0,
            k: 2,
            t: 1000,
            top_n: 5000,
            omega: 0,
            seed: 0,
            max_restarts: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k = {} must be at least 2", self.k)));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidArgument("top_n must be positive".into()));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        if self.max_restarts == Some(0) {
            return Err(Error::InvalidArgument("max_restarts must be positive".into()));
        }
        Ok(())
    }

    pub fn restarts_cap(&self) -> u64 {
        self.max_restarts.unwrap_or(match self.algorithm {
            Algorithm::Rejection => DEFAULT_REJECTION_RESTARTS,
            _ => DEFAULT_SIMPLE_RESTARTS,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub solution: Solution,
    pub iterations_used: u64,
    pub restarts: u64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_state: Option<Solution>,
    /// The sample was drawn from `π` over a completely enumerated `X`.
    pub exact_enumeration: bool,
    pub rng_seed: u64,
}

/// Index of `argmax_j (w_j + G_j)` with i.i.d. Gumbel noise `G_j`, i.e. a draw
/// with probability proportional to `exp(w_j)`. Entries equal to `−∞` are
/// never chosen.
pub fn gumbel_argmax(log_weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut best = None;
    let mut best_key = f64::NEG_INFINITY;
    for (j, &w) in log_weights.iter().enumerate() {
        if w == f64::NEG_INFINITY {
            continue;
        }
        let u: f64 = rng.random::<f64>();
        // u ∈ [0, 1); shift away from 0 so the logs stay finite.
        let u = u.max(f64::MIN_POSITIVE);
        let key = w - (-u.ln()).ln();
        if best.is_none() || key > best_key {
            best = Some(j);
            best_key = key;
        }
    }
    best.expect("at least one finite weight")
}

/// Exact i.i.d. sampler: draws households from the base distribution,
/// abandoning a round as soon as the residual goes negative.
pub struct RejectionSampler<'a> {
    inst: &'a Instance,
    pick: Option<WeightedIndex<f64>>,
}

impl<'a> RejectionSampler<'a> {
    pub fn new(inst: &'a Instance) -> Result<Self> {
        let pick = if inst.households() == 0 {
            None
        } else {
            Some(WeightedIndex::new(inst.probs()).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        };
        Ok(RejectionSampler { inst, pick })
    }

    /// Returns the accepted solution and the number of rejected rounds.
    pub fn draw(&self, max_restarts: u64, rng: &mut impl Rng) -> Result<(Solution, u64)> {
        let n = self.inst.num_types();
        let Some(pick) = &self.pick else {
            return Ok((Solution::zeros(n), 0));
        };
        let target: Vec<i64> = self.inst.target().iter().map(|&v| v as i64).collect();
        for round in 0..max_restarts {
            let mut r = target.clone();
            let mut x = vec![0u32; n];
            loop {
                let i = pick.sample(rng);
                x[i] += 1;
                let mut negative = false;
                for (rt, &v) in r.iter_mut().zip(self.inst.column(i)) {
                    *rt -= v as i64;
                    negative |= *rt < 0;
                }
                if negative {
                    break;
                }
                if r.iter().all(|&v| v == 0) {
                    return Ok((Solution::new(x), round));
                }
            }
        }
        Err(Error::RestartCapExceeded { cap: max_restarts })
    }
}

pub fn rejection_sample(inst: &Instance, cfg: &ChainConfig) -> Result<SampleReport> {
    let mut rng = rng_from_seed(cfg.seed);
    let (solution, restarts) = RejectionSampler::new(inst)?.draw(cfg.restarts_cap(), &mut rng)?;
    Ok(SampleReport {
        solution,
        iterations_used: 0,
        restarts,
        accepted: true,
        start_state: None,
        exact_enumeration: false,
        rng_seed: cfg.seed,
    })
}

/// A state of the simple chain together with its residual `c − V·x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub x: Vec<u32>,
    pub residual: Vec<i64>,
}

impl ChainState {
    pub fn new(inst: &Instance, x: &Solution) -> Result<Self> {
        inst.check_len(x)?;
        let agg = inst.aggregate(&x.x);
        let residual: Vec<i64> = inst
            .target()
            .iter()
            .zip(&agg)
            .map(|(&c, &a)| c as i64 - a as i64)
            .collect();
        if let Some(coord) = residual.iter().position(|&r| r < 0) {
            return Err(Error::Infeasible { coord });
        }
        Ok(ChainState {
            x: x.x.clone(),
            residual,
        })
    }

    pub fn zeros(inst: &Instance) -> Self {
        ChainState {
            x: vec![0; inst.num_types()],
            residual: inst.target().iter().map(|&v| v as i64).collect(),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.residual.iter().all(|&r| r == 0)
    }

    pub fn residual_l1(&self) -> i64 {
        self.residual.iter().sum()
    }

    pub fn solution(&self) -> Solution {
        Solution::new(self.x.clone())
    }
}

/// The lazy Gibbs kernel `P_γ`, optionally truncated to residual L1 `≤ ω`.
#[derive(Clone, Debug)]
pub struct SimpleChain<'a> {
    inst: &'a Instance,
    gamma: f64,
    omega: Option<u64>,
    eligible: Vec<usize>,
    col_l1: Vec<i64>,
}

impl<'a> SimpleChain<'a> {
    pub fn new(inst: &'a Instance, gamma: f64) -> Self {
        SimpleChain {
            inst,
            gamma,
            omega: None,
            eligible: inst.eligible_columns(),
            col_l1: inst
                .columns()
                .iter()
                .map(|c| c.iter().map(|&v| v as i64).sum())
                .collect(),
        }
    }

    pub fn truncated(inst: &'a Instance, gamma: f64, omega: u64) -> Self {
        SimpleChain {
            omega: Some(omega),
            ..SimpleChain::new(inst, gamma)
        }
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    /// Log weights of `x[i] ← g` for `g = 0..=g_max`, up to a constant shared
    /// by all `g`.
    fn resample_weights(&self, state: &ChainState, i: usize) -> Vec<f64> {
        let col = self.inst.column(i);
        let xi = state.x[i];
        let freed: Vec<i64> = state
            .residual
            .iter()
            .zip(col)
            .map(|(&r, &v)| r + xi as i64 * v as i64)
            .collect();
        let gmax = col
            .iter()
            .zip(&freed)
            .filter(|(&v, _)| v > 0)
            .map(|(&v, &r)| r / v as i64)
            .min()
            .unwrap_or(0);
        let freed_l1: i64 = freed.iter().sum();
        let others: u64 = state.x.iter().map(|&v| v as u64).sum::<u64>() - xi as u64;
        let lp = self.inst.log_probs()[i];
        (0..=gmax)
            .map(|g| {
                let res_l1 = freed_l1 - g * self.col_l1[i];
                if matches!(self.omega, Some(w) if res_l1 > w as i64) {
                    return f64::NEG_INFINITY;
                }
                let base = match self.inst.target_kind() {
                    TargetKind::Multinomial => {
                        let g = g as u64;
                        self.inst.ln_factorial(others + g) - self.inst.ln_factorial(g)
                            + if g > 0 { g as f64 * lp } else { 0.0 }
                    }
                    TargetKind::Uniform => 0.0,
                };
                base - self.gamma * res_l1 as f64
            })
            .collect()
    }

    /// One step of the kernel. Returns whether the state changed.
    pub fn step(&self, state: &mut ChainState, rng: &mut impl Rng) -> bool {
        if rng.random_bool(0.5) || self.eligible.is_empty() {
            return false;
        }
        let i = self.eligible[rng.random_range(0..self.eligible.len())];
        let weights = self.resample_weights(state, i);
        let g = gumbel_argmax(&weights, rng) as u32;
        let old = state.x[i];
        if g == old {
            return false;
        }
        let delta = old as i64 - g as i64;
        for (r, &v) in state.residual.iter_mut().zip(self.inst.column(i)) {
            *r += delta * v as i64;
        }
        state.x[i] = g;
        true
    }
}

/// One step of `P_γ` from a feasible `x`.
pub fn simple_chain_step(inst: &Instance, gamma: f64, x: &Solution, rng: &mut impl Rng) -> Result<Solution> {
    let mut state = ChainState::new(inst, x)?;
    SimpleChain::new(inst, gamma).step(&mut state, rng);
    Ok(state.solution())
}

/// One step of the truncated kernel from `x ∈ Y_ω`.
pub fn truncated_simple_step(
    inst: &Instance,
    gamma: f64,
    omega: u64,
    x: &Solution,
    rng: &mut impl Rng,
) -> Result<Solution> {
    let mut state = ChainState::new(inst, x)?;
    if state.residual_l1() > omega as i64 {
        return Err(Error::InvalidArgument(format!(
            "start state has residual {} above omega = {omega}",
            state.residual_l1()
        )));
    }
    SimpleChain::truncated(inst, gamma, omega).step(&mut state, rng);
    Ok(state.solution())
}

/// Restart-until-exact wrapper: each round runs `t` steps from `start`.
fn restart_until_exact(
    chain: &SimpleChain,
    start: &ChainState,
    t: u64,
    max_restarts: u64,
    rng: &mut impl Rng,
) -> Result<(Solution, u64, u64)> {
    let mut iterations = 0u64;
    for round in 0..max_restarts {
        let mut state = start.clone();
        for _ in 0..t {
            chain.step(&mut state, rng);
        }
        iterations += t;
        if state.is_exact() {
            return Ok((state.solution(), iterations, round));
        }
    }
    Err(Error::RestartCapExceeded { cap: max_restarts })
}

pub fn simple_chain_sample(inst: &Instance, cfg: &ChainConfig) -> Result<SampleReport> {
    let mut cfg = cfg.clone();
    cfg.algorithm = Algorithm::Simple;
    Sampler::new(inst, &cfg)?.draw()
}

/// Start state of the truncated chain: the empty multiset when it lies in
/// `Y_ω`, otherwise the best exact solution by `L`.
pub fn truncated_start(inst: &Instance, omega: u64) -> Result<ChainState> {
    let zero = ChainState::zeros(inst);
    if zero.residual_l1() <= omega as i64 {
        return Ok(zero);
    }
    let top = enumerate_top_n(inst, 1)?;
    let best = top
        .solutions
        .first()
        .ok_or_else(|| Error::InvalidArgument("instance has no exact solution".into()))?;
    ChainState::new(inst, best)
}

/// The lazy k-swap kernel `P_k` on `X`, with its replacement-class cache.
#[derive(Debug)]
pub struct ReducedChain<'a> {
    inst: &'a Instance,
    k: usize,
    cache: SwapCache,
    warned: bool,
}

impl<'a> ReducedChain<'a> {
    pub fn new(inst: &'a Instance, k: usize) -> Self {
        ReducedChain {
            inst,
            k,
            cache: SwapCache::new(),
            warned: false,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// One step from an exact `x`. Returns whether the state changed.
    pub fn step(&mut self, x: &mut Solution, rng: &mut impl Rng) -> Result<bool> {
        let m = x.households() as usize;
        if m < self.k {
            if !self.warned {
                log::warn!("reduced chain with m = {m} < k = {}: no moves possible", self.k);
                self.warned = true;
            }
            return Ok(false);
        }
        if rng.random_bool(0.5) {
            return Ok(false);
        }
        // k distinct household positions, mapped to their types.
        let mut positions = rand::seq::index::sample(rng, m, self.k).into_vec();
        positions.sort_unstable();
        let mut z = vec![0u32; x.len()];
        let mut type_idx = 0usize;
        let mut upto = x.x[0] as usize;
        for p in positions {
            while p >= upto {
                type_idx += 1;
                upto += x.x[type_idx] as usize;
            }
            z[type_idx] += 1;
        }
        // Positional draws overcount a multiset by Π C(x_i, z_i); thin to
        // make every distinct fragment equally likely.
        let ln_overcount: f64 =
            x.x.iter()
                .zip(&z)
                .filter(|(_, &zi)| zi > 0)
                .map(|(&xi, &zi)| ln_binomial(self.inst, xi as u64, zi as u64))
                .sum();
        if ln_overcount > 0.0 && !rng.random_bool((-ln_overcount).exp()) {
            return Ok(false);
        }
        let z = Solution::new(z);
        let class = self.cache.swaps(self.inst, &z)?;
        if class.len() == 1 {
            return Ok(false);
        }
        let base: Vec<u32> = x.x.iter().zip(&z.x).map(|(&a, &b)| a - b).collect();
        let candidates: Vec<Vec<u32>> = class
            .iter()
            .map(|zp| base.iter().zip(&zp.x).map(|(&a, &b)| a + b).collect())
            .collect();
        let weights: Vec<f64> = candidates.iter().map(|c| self.inst.log_weight(c)).collect();
        let pick = gumbel_argmax(&weights, rng);
        let next = Solution::new(candidates[pick].clone());
        let moved = next != *x;
        *x = next;
        Ok(moved)
    }

    pub fn cached_classes(&self) -> usize {
        self.cache.len()
    }
}

pub(crate) fn ln_binomial(inst: &Instance, n: u64, k: u64) -> f64 {
    inst.ln_factorial(n) - inst.ln_factorial(k) - inst.ln_factorial(n - k)
}

/// One step of `P_k` from an exact `x`.
pub fn reduced_chain_step(inst: &Instance, k: usize, x: &Solution, rng: &mut impl Rng) -> Result<Solution> {
    if !inst.is_exact(x) {
        return Err(Error::NotExact);
    }
    let mut next = x.clone();
    ReducedChain::new(inst, k).step(&mut next, rng)?;
    Ok(next)
}

/// `cfg.t` reduced-chain steps from `x0`.
pub fn reduced_chain_sample(inst: &Instance, cfg: &ChainConfig, x0: &Solution) -> Result<SampleReport> {
    let mut cfg = cfg.clone();
    cfg.algorithm = Algorithm::Reduced;
    Sampler::with_start(inst, &cfg, x0.clone())?.draw()
}

pub fn hybrid_sample(inst: &Instance, cfg: &ChainConfig) -> Result<SampleReport> {
    let mut cfg = cfg.clone();
    cfg.algorithm = Algorithm::Hybrid;
    Sampler::new(inst, &cfg)?.draw()
}

/// Draws from `π` restricted to an enumerated set of exact solutions.
#[derive(Clone, Debug)]
pub struct EnumeratedDraw {
    pub set: Arc<SolutionSet>,
    pick: WeightedIndex<f64>,
}

impl EnumeratedDraw {
    pub fn new(inst: &Instance, set: SolutionSet) -> Result<Self> {
        if set.solutions.is_empty() {
            return Err(Error::InvalidArgument("instance has no exact solution".into()));
        }
        let logw: Vec<f64> = set.solutions.iter().map(|s| inst.log_weight(&s.x)).collect();
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logw.iter().map(|w| (w - top).exp()).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(EnumeratedDraw {
            set: Arc::new(set),
            pick,
        })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Solution {
        self.set.solutions[self.pick.sample(rng)].clone()
    }
}

enum Engine<'a> {
    Rejection(RejectionSampler<'a>),
    Simple {
        chain: SimpleChain<'a>,
        start: ChainState,
    },
    Reduced {
        chain: ReducedChain<'a>,
        start: Solution,
    },
    Hybrid {
        chain: ReducedChain<'a>,
        starts: EnumeratedDraw,
    },
}

/// Repeated draws for one instance and configuration from a single seeded
/// stream. Enumeration and swap classes are computed once and reused.
pub struct Sampler<'a> {
    cfg: ChainConfig,
    rng: ChainRng,
    engine: Engine<'a>,
}

impl<'a> Sampler<'a> {
    pub fn new(inst: &'a Instance, cfg: &ChainConfig) -> Result<Self> {
        Sampler::build(inst, cfg, None)
    }

    /// Like [`Sampler::new`], with an explicit start state for the reduced
    /// and simple chains.
    pub fn with_start(inst: &'a Instance, cfg: &ChainConfig, start: Solution) -> Result<Self> {
        Sampler::build(inst, cfg, Some(start))
    }

    fn build(inst: &'a Instance, cfg: &ChainConfig, start: Option<Solution>) -> Result<Self> {
        cfg.validate()?;
        let engine = match cfg.algorithm {
            Algorithm::Rejection => Engine::Rejection(RejectionSampler::new(inst)?),
            Algorithm::Simple => Engine::Simple {
                chain: SimpleChain::new(inst, cfg.gamma),
                start: match start {
                    Some(s) => ChainState::new(inst, &s)?,
                    None => ChainState::zeros(inst),
                },
            },
            Algorithm::TruncatedSimple => {
                let start = match start {
                    Some(s) => ChainState::new(inst, &s)?,
                    None => truncated_start(inst, cfg.omega)?,
                };
                if start.residual_l1() > cfg.omega as i64 {
                    return Err(Error::InvalidArgument("start state lies outside Y_omega".into()));
                }
                Engine::Simple {
                    chain: SimpleChain::truncated(inst, cfg.gamma, cfg.omega),
                    start,
                }
            }
            Algorithm::Reduced => {
                let start = match start {
                    Some(s) => s,
                    None => enumerate_top_n(inst, 1)?
                        .solutions
                        .into_iter()
                        .next()
                        .ok_or_else(|| Error::InvalidArgument("instance has no exact solution".into()))?,
                };
                inst.check_len(&start)?;
                if !inst.is_exact(&start) {
                    return Err(Error::NotExact);
                }
                Engine::Reduced {
                    chain: ReducedChain::new(inst, cfg.k),
                    start,
                }
            }
            Algorithm::Hybrid => Engine::Hybrid {
                chain: ReducedChain::new(inst, cfg.k),
                starts: EnumeratedDraw::new(inst, enumerate_top_n(inst, cfg.top_n)?)?,
            },
        };
        Ok(Sampler {
            cfg: cfg.clone(),
            rng: rng_from_seed(cfg.seed),
            engine,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    /// Whether draws come straight from a complete enumeration of `X`.
    pub fn is_exact_mode(&self) -> bool {
        matches!(&self.engine, Engine::Hybrid { starts, .. } if starts.set.complete)
    }

    pub fn draw(&mut self) -> Result<SampleReport> {
        let seed = self.cfg.seed;
        let t = self.cfg.t;
        let cap = self.cfg.restarts_cap();
        let rng = &mut self.rng;
        let report = |solution, iterations_used, restarts, start_state, exact_enumeration| SampleReport {
            solution,
            iterations_used,
            restarts,
            accepted: true,
            start_state,
            exact_enumeration,
            rng_seed: seed,
        };
        match &mut self.engine {
            Engine::Rejection(sampler) => {
                let (sol, restarts) = sampler.draw(cap, rng)?;
                Ok(report(sol, 0, restarts, None, false))
            }
            Engine::Simple { chain, start } => {
                let (sol, iters, restarts) = restart_until_exact(chain, start, t, cap, rng)?;
                Ok(report(sol, iters, restarts, Some(start.solution()), false))
            }
            Engine::Reduced { chain, start } => {
                let mut x = start.clone();
                for _ in 0..t {
                    chain.step(&mut x, rng)?;
                }
                Ok(report(x, t, 0, Some(start.clone()), false))
            }
            Engine::Hybrid { chain, starts } => {
                let x0 = starts.draw(rng);
                if starts.set.complete {
                    return Ok(report(x0.clone(), 0, 0, Some(x0), true));
                }
                let mut x = x0.clone();
                for _ in 0..t {
                    chain.step(&mut x, rng)?;
                }
                Ok(report(x, t, 0, Some(x0), false))
            }
        }
    }
}

/// One draw with the configured algorithm.
pub fn sample(inst: &Instance, cfg: &ChainConfig) -> Result<SampleReport> {
    Sampler::new(inst, cfg)?.draw()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_disconnected_example, gen_example1};

    fn cfg(algorithm: Algorithm) -> ChainConfig {
        ChainConfig {
            algorithm,
            seed: 7,
            ..ChainConfig::default()
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c: ChainConfig = serde_json::from_str(r#"{"algorithm":"truncated_simple","omega":3}"#).unwrap();
        assert_eq!(c.algorithm, Algorithm::TruncatedSimple);
        assert_eq!(c.omega, 3);
        assert!(serde_json::from_str::<ChainConfig>(r#"{"bogus":1}"#).is_err());
        assert!(ChainConfig { k: 1, ..c.clone() }.validate().is_err());
        assert_eq!(
            "truncated-simple".parse::<Algorithm>().unwrap(),
            Algorithm::TruncatedSimple
        );
        assert_eq!(cfg(Algorithm::Rejection).restarts_cap(), DEFAULT_REJECTION_RESTARTS);
        assert_eq!(cfg(Algorithm::Simple).restarts_cap(), DEFAULT_SIMPLE_RESTARTS);
    }

    #[test]
    fn gumbel_frequencies() {
        let mut rng = rng_from_seed(1);
        let w = [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()];
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[gumbel_argmax(&w, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let frac = counts[2] as f64 / 40_000.0;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }

    #[test]
    fn rejection_block_b() {
        let [a, b, _] = gen_example1();
        let mut sampler = Sampler::new(&b, &cfg(Algorithm::Rejection)).unwrap();
        let n = 20_000;
        let doubles = (0..n)
            .filter(|_| sampler.draw().unwrap().solution.x == vec![0, 2, 0])
            .count();
        assert!((doubles as f64 / n as f64 - 2.0 / 3.0).abs() < 0.015);
        let mut sampler = Sampler::new(&a, &cfg(Algorithm::Rejection)).unwrap();
        for _ in 0..100 {
            assert_eq!(sampler.draw().unwrap().solution.x, vec![1, 0, 0]);
        }
    }

    #[test]
    fn rejection_empty_block_and_cap() {
        let inst = gen_disconnected_example().with_target(vec![0, 0, 0, 0]).unwrap();
        let r = rejection_sample(&inst, &cfg(Algorithm::Rejection)).unwrap();
        assert_eq!(r.solution, Solution::zeros(4));
        assert_eq!(r.restarts, 0);
        let infeasible = gen_disconnected_example().with_target(vec![1, 0, 0, 1]).unwrap();
        let c = ChainConfig {
            max_restarts: Some(50),
            ..cfg(Algorithm::Rejection)
        };
        assert_eq!(
            rejection_sample(&infeasible, &c),
            Err(Error::RestartCapExceeded { cap: 50 })
        );
    }

    #[test]
    fn simple_step_single_column() {
        // v = (1, 1), c = (2, 2): f(g) = p^g with p = 1, so γ = 0 resamples
        // g uniformly from {0, 1, 2}.
        let inst = Instance::uniform(vec![vec![1, 1]], vec![2, 2]).unwrap();
        let chain = SimpleChain::new(&inst, 0.0);
        let state = ChainState::new(&inst, &Solution::new(vec![2])).unwrap();
        let probs = crate::diagnostics::normalize_log(&chain.resample_weights(&state, 0));
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let hot = SimpleChain::new(&inst, 40.0).resample_weights(&state, 0);
        assert!(hot[2] - hot[1] > 30.0);
    }

    #[test]
    fn simple_resample_matches_direct_weights() {
        // Conditional law of x[i] from the full-state weights f·exp(−γ‖r‖₁).
        let [_, b, _] = gen_example1();
        let gamma = 0.7;
        let chain = SimpleChain::new(&b, gamma);
        let state = ChainState::new(&b, &Solution::new(vec![1, 0, 0])).unwrap();
        for i in 0..3 {
            let got = crate::diagnostics::normalize_log(&chain.resample_weights(&state, i));
            let direct: Vec<f64> = (0..got.len() as u32)
                .map(|g| {
                    let mut x = state.x.clone();
                    x[i] = g;
                    let s = Solution::new(x);
                    crate::instance::log_f(&b, &s).unwrap() - gamma * crate::instance::residual(&b, &s).l1() as f64
                })
                .collect();
            let want = crate::diagnostics::normalize_log(&direct);
            for (a, w) in got.iter().zip(&want) {
                assert!((a - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simple_step_is_lazy_and_feasible() {
        let [_, b, _] = gen_example1();
        let chain = SimpleChain::new(&b, 0.5);
        let mut rng = rng_from_seed(3);
        let mut state = ChainState::zeros(&b);
        let mut stays = 0;
        let steps = 20_000;
        for _ in 0..steps {
            let before = state.clone();
            chain.step(&mut state, &mut rng);
            if state == before {
                stays += 1;
            }
            assert!(state.residual.iter().all(|&r| r >= 0));
        }
        assert!(stays as f64 / steps as f64 >= 0.5 - 3.0 * (0.25 / steps as f64).sqrt());
    }

    #[test]
    fn simple_sample_zero_steps() {
        let [_, b, _] = gen_example1();
        let c = ChainConfig {
            t: 0,
            max_restarts: Some(5),
            ..cfg(Algorithm::Simple)
        };
        assert!(matches!(
            simple_chain_sample(&b, &c),
            Err(Error::RestartCapExceeded { .. })
        ));
        let empty = b.with_target(vec![0, 0, 0]).unwrap();
        assert_eq!(simple_chain_sample(&empty, &c).unwrap().solution, Solution::zeros(3));
    }

    #[test]
    fn reduced_example2() {
        let inst = gen_disconnected_example();
        let start = Solution::new(vec![1, 1, 1, 0]);
        let mut rng = rng_from_seed(5);
        let mut chain = ReducedChain::new(&inst, 2);
        let mut x = start.clone();
        for _ in 0..500 {
            chain.step(&mut x, &mut rng).unwrap();
            assert_eq!(x, start);
        }
        let mut chain = ReducedChain::new(&inst, 3);
        let mut moved = false;
        for _ in 0..50 {
            let mut x = start.clone();
            if chain.step(&mut x, &mut rng).unwrap() {
                assert_eq!(x, Solution::new(vec![0, 0, 0, 3]));
                moved = true;
            }
        }
        assert!(moved);
    }

    #[test]
    fn reduced_small_m_is_noop() {
        let [a, _, _] = gen_example1();
        let mut rng = rng_from_seed(0);
        let x = Solution::new(vec![1, 0, 0]);
        assert_eq!(reduced_chain_step(&a, 2, &x, &mut rng).unwrap(), x);
        assert_eq!(
            reduced_chain_step(&a, 2, &Solution::new(vec![0, 1, 0]), &mut rng),
            Err(Error::NotExact)
        );
    }

    #[test]
    fn reduced_sample_zero_steps_returns_start() {
        let inst = gen_disconnected_example();
        let x0 = Solution::new(vec![0, 0, 0, 3]);
        let c = ChainConfig {
            t: 0,
            k: 3,
            ..cfg(Algorithm::Reduced)
        };
        assert_eq!(reduced_chain_sample(&inst, &c, &x0).unwrap().solution, x0);
    }

    #[test]
    fn hybrid_modes() {
        let [_, b, _] = gen_example1();
        let r = hybrid_sample(&b, &cfg(Algorithm::Hybrid)).unwrap();
        assert!(r.exact_enumeration);
        assert_eq!(r.iterations_used, 0);
        let inst = gen_disconnected_example();
        let c = ChainConfig {
            top_n: 1,
            k: 3,
            t: 10,
            ..cfg(Algorithm::Hybrid)
        };
        let r = hybrid_sample(&inst, &c).unwrap();
        assert!(!r.exact_enumeration);
        assert_eq!(r.start_state, Some(Solution::new(vec![0, 0, 0, 3])));
        assert!(inst.is_exact(&r.solution));
    }

    #[test]
    fn seeds_are_deterministic() {
        let inst = gen_disconnected_example();
        for alg in [
            Algorithm::Rejection,
            Algorithm::Simple,
            Algorithm::Reduced,
            Algorithm::Hybrid,
            Algorithm::TruncatedSimple,
        ] {
            let c = ChainConfig {
                top_n: 1,
                k: 3,
                t: 50,
                omega: 12,
                ..cfg(alg)
            };
            assert_eq!(sample(&inst, &c).unwrap(), sample(&inst, &c).unwrap(), "{alg:?}");
        }
    }

    #[test]
    fn truncated_zero_omega_never_moves() {
        let inst = gen_disconnected_example();
        let x = Solution::new(vec![1, 1, 1, 0]);
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            assert_eq!(truncated_simple_step(&inst, 1.0, 0, &x, &mut rng).unwrap(), x);
        }
        assert!(truncated_simple_step(&inst, 1.0, 0, &Solution::zeros(4), &mut rng).is_err());
    }
}
