//! Exact combinatorial engine: feasibility, full enumeration of `X`, top-N
//! enumeration by the linear score `L`, counting `Y`, and the k-swap
//! replacement classes `Z(z)` used by the reduced chain.
//!
//! Everything is a depth-first or best-first search over multiplicities, one
//! column at a time. A partial assignment at search position `pos` with
//! residual `r` and household budget `b = r[count_coord]` is pruned whenever
//! some coordinate cannot be matched by `b` more households drawn from the
//! columns that remain, using per-coordinate suffix maxima and minima.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{linear_score, Instance, Solution};

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Values of `L` closer than this are treated as ties in top-N ordering.
pub const TIE_TOL: f64 = 1e-9;

const DEAD_MEMO_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub solutions: Vec<Solution>,
    /// True iff the search exhausted `X`.
    pub complete: bool,
    /// Upper bound on `L` of any solution not returned, minus the smallest `L`
    /// returned. Absent when complete.
    pub bound_gap: Option<f64>,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// Cache key for replacement classes: the aggregate `V·z` of a k-fragment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SwapKey {
    pub removed_sum: Vec<u64>,
    pub k: u64,
}

/// Per-coordinate bounds of the columns at or after each search position.
struct Coverage {
    suffix_max: Vec<Vec<u32>>,
    suffix_min: Vec<Vec<u32>>,
}

impl Coverage {
    fn new(inst: &Instance, order: &[usize]) -> Self {
        let d = inst.dim();
        let n = order.len();
        let mut suffix_max = vec![vec![0u32; d]; n + 1];
        let mut suffix_min = vec![vec![u32::MAX; d]; n + 1];
        for pos in (0..n).rev() {
            let col = inst.column(order[pos]);
            for t in 0..d {
                suffix_max[pos][t] = suffix_max[pos + 1][t].max(col[t]);
                suffix_min[pos][t] = suffix_min[pos + 1][t].min(col[t]);
            }
        }
        Coverage { suffix_max, suffix_min }
    }

    /// Can `b = r[count]` households from columns at `pos..` produce `r`?
    fn admissible(&self, pos: usize, r: &[u32], count: usize) -> bool {
        let b = r[count] as u64;
        if pos == self.suffix_max.len() - 1 {
            return r.iter().all(|&v| v == 0);
        }
        let hi = &self.suffix_max[pos];
        let lo = &self.suffix_min[pos];
        r.iter()
            .enumerate()
            .all(|(t, &v)| (v as u64) <= b * hi[t] as u64 && (v as u64) >= b * lo[t] as u64)
    }
}

fn max_multiplicity(col: &[u32], r: &[u32]) -> u32 {
    col.iter()
        .zip(r)
        .filter(|(&v, _)| v > 0)
        .map(|(&v, &rv)| rv / v)
        .min()
        .unwrap_or(0)
}

fn subtract(r: &[u32], col: &[u32], g: u32) -> Vec<u32> {
    r.iter().zip(col).map(|(&rv, &v)| rv - v * g).collect()
}

/// Depth-first enumeration of `{x : V·x = target}` in lexicographic order.
struct ExactSearch<'a> {
    inst: &'a Instance,
    coverage: Coverage,
    count: usize,
    nodes: u64,
    budget: u64,
    limit: usize,
    dead: HashSet<(usize, Vec<u32>)>,
    found: Vec<Solution>,
    x: Vec<u32>,
}

impl<'a> ExactSearch<'a> {
    fn new(inst: &'a Instance, limit: usize, budget: u64) -> Self {
        let order: Vec<usize> = (0..inst.num_types()).collect();
        ExactSearch {
            inst,
            coverage: Coverage::new(inst, &order),
            count: inst.count_coord(),
            nodes: 0,
            budget,
            limit,
            dead: HashSet::new(),
            found: Vec::new(),
            x: vec![0; inst.num_types()],
        }
    }

    fn run(mut self, target: &[u32]) -> Result<(Vec<Solution>, bool)> {
        let exhausted = if self.coverage.admissible(0, target, self.count) {
            self.descend(0, target.to_vec())?
        } else {
            true
        };
        Ok((self.found, exhausted))
    }

    /// Returns `Ok(false)` when the limit stopped the search early.
    fn descend(&mut self, pos: usize, r: Vec<u32>) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::NodeBudgetExceeded { budget: self.budget });
        }
        let n = self.inst.num_types();
        if pos == n {
            self.found.push(Solution::new(self.x.clone()));
            return Ok(self.found.len() < self.limit);
        }
        if self.dead.contains(&(pos, r.clone())) {
            return Ok(true);
        }
        let before = self.found.len();
        let col = self.inst.column(pos);
        let gmax = max_multiplicity(col, &r);
        for g in 0..=gmax {
            let next = subtract(&r, col, g);
            if !self.coverage.admissible(pos + 1, &next, self.count) {
                continue;
            }
            self.x[pos] = g;
            let go_on = self.descend(pos + 1, next)?;
            self.x[pos] = 0;
            if !go_on {
                return Ok(false);
            }
        }
        if self.found.len() == before && self.dead.len() < DEAD_MEMO_CAP {
            self.dead.insert((pos, r));
        }
        Ok(true)
    }
}

/// Is `X` nonempty?
pub fn decide_mms(inst: &Instance) -> Result<bool> {
    decide_mms_with_budget(inst, DEFAULT_NODE_BUDGET)
}

pub fn decide_mms_with_budget(inst: &Instance, budget: u64) -> Result<bool> {
    let (found, _) = ExactSearch::new(inst, 1, budget).run(inst.target())?;
    Ok(!found.is_empty())
}

/// Up to `limit` exact solutions, lexicographically smallest first.
pub fn enumerate_exact(inst: &Instance, limit: usize) -> Result<SolutionSet> {
    enumerate_exact_with_budget(inst, limit, DEFAULT_NODE_BUDGET)
}

pub fn enumerate_exact_with_budget(inst: &Instance, limit: usize, budget: u64) -> Result<SolutionSet> {
    if limit == 0 {
        return Err(Error::InvalidArgument("limit must be positive".into()));
    }
    let probe = limit.saturating_add(1);
    let (mut found, _) = ExactSearch::new(inst, probe, budget).run(inst.target())?;
    let complete = found.len() <= limit;
    found.truncate(limit);
    Ok(SolutionSet {
        solutions: found,
        complete,
        bound_gap: None,
    })
}

/// All size-k fragments `z'` with `V·z' = V·z`, including `z` itself.
pub fn enumerate_swaps(inst: &Instance, z: &Solution) -> Result<Vec<Solution>> {
    inst.check_len(z)?;
    if z.households() == 0 {
        return Err(Error::InvalidArgument("swap fragment must be nonempty".into()));
    }
    let agg = inst.aggregate(&z.x);
    let target: Vec<u32> = agg.iter().map(|&v| v as u32).collect();
    let (found, _) = ExactSearch::new(inst, usize::MAX, DEFAULT_NODE_BUDGET).run(&target)?;
    Ok(found)
}

/// Replacement classes keyed by `(V·z, k)`. Owned by a single chain.
#[derive(Debug, Default)]
pub struct SwapCache {
    classes: HashMap<SwapKey, Arc<Vec<Solution>>>,
}

impl SwapCache {
    pub fn new() -> Self {
        SwapCache::default()
    }

    pub fn key(inst: &Instance, z: &Solution) -> SwapKey {
        SwapKey {
            removed_sum: inst.aggregate(&z.x),
            k: z.households(),
        }
    }

    pub fn swaps(&mut self, inst: &Instance, z: &Solution) -> Result<Arc<Vec<Solution>>> {
        let key = SwapCache::key(inst, z);
        if let Some(hit) = self.classes.get(&key) {
            return Ok(hit.clone());
        }
        let class = Arc::new(enumerate_swaps(inst, z)?);
        self.classes.insert(key, class.clone());
        Ok(class)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Outcome of a capped count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Count {
    Exact(u64),
    AtLeast(u64),
}

impl Count {
    pub fn value(self) -> u64 {
        match self {
            Count::Exact(v) | Count::AtLeast(v) => v,
        }
    }
}

/// `|Y|` for `Y = {x : V·x ⪯ c}`, saturating at `cap`.
pub fn count_feasible(inst: &Instance, cap: u64) -> Count {
    fn go(inst: &Instance, pos: usize, r: Vec<u32>, cap: u64, memo: &mut HashMap<(usize, Vec<u32>), u64>) -> u64 {
        if pos == inst.num_types() {
            return 1;
        }
        if let Some(&v) = memo.get(&(pos, r.clone())) {
            return v;
        }
        let col = inst.column(pos);
        let gmax = max_multiplicity(col, &r);
        let mut total = 0u64;
        for g in 0..=gmax {
            total = total.saturating_add(go(inst, pos + 1, subtract(&r, col, g), cap, memo));
            if total >= cap {
                total = cap;
                break;
            }
        }
        memo.insert((pos, r), total);
        total
    }
    let mut memo = HashMap::new();
    let total = go(inst, 0, inst.target().to_vec(), cap, &mut memo);
    if total >= cap {
        Count::AtLeast(cap)
    } else {
        Count::Exact(total)
    }
}

/// Every feasible `x` (the simple chain's state space), lexicographic.
pub fn enumerate_feasible(inst: &Instance, cap: usize) -> Result<Vec<Solution>> {
    fn go(inst: &Instance, pos: usize, r: &[u32], x: &mut Vec<u32>, out: &mut Vec<Solution>, cap: usize) -> Result<()> {
        if pos == inst.num_types() {
            if out.len() >= cap {
                return Err(Error::StateCapExceeded { cap });
            }
            out.push(Solution::new(x.clone()));
            return Ok(());
        }
        let col = inst.column(pos);
        let gmax = max_multiplicity(col, r);
        for g in 0..=gmax {
            x[pos] = g;
            go(inst, pos + 1, &subtract(r, col, g), x, out, cap)?;
        }
        x[pos] = 0;
        Ok(())
    }
    let mut out = Vec::new();
    let mut x = vec![0; inst.num_types()];
    go(inst, 0, inst.target(), &mut x, &mut out, cap)?;
    Ok(out)
}

/// Search order for top-N: descending `log probs`, ties by column vector.
pub fn score_order(inst: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.num_types()).collect();
    order.sort_by(|&a, &b| {
        inst.log_probs()[b]
            .total_cmp(&inst.log_probs()[a])
            .then_with(|| inst.column(a).cmp(inst.column(b)))
    });
    order
}

struct Node {
    bound: f64,
    score: f64,
    pos: usize,
    residual: Vec<u32>,
    x: Vec<u32>,
    seq: u64,
}

impl Node {
    fn is_complete(&self, n: usize) -> bool {
        self.pos == n
    }
}

struct HeapNode {
    node: Node,
    complete: bool,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapNode {}

impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapNode {
    // Max-heap: larger bound first; at equal bound, partial nodes first; then
    // lexicographically smaller assignment; then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        self.node
            .bound
            .total_cmp(&other.node.bound)
            .then_with(|| other.complete.cmp(&self.complete))
            .then_with(|| other.node.x.cmp(&self.node.x))
            .then_with(|| other.node.seq.cmp(&self.node.seq))
    }
}

fn tie_key(score: f64) -> i64 {
    (score / TIE_TOL).round() as i64
}

/// The `n_best` exact solutions with largest `L`, via best-first search with
/// the admissible bound `L(partial) + budget · max eligible log prob`.
pub fn enumerate_top_n(inst: &Instance, n_best: usize) -> Result<SolutionSet> {
    enumerate_top_n_with_budget(inst, n_best, DEFAULT_NODE_BUDGET)
}

pub fn enumerate_top_n_with_budget(inst: &Instance, n_best: usize, budget: u64) -> Result<SolutionSet> {
    if n_best == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let n = inst.num_types();
    let count = inst.count_coord();
    let order = score_order(inst);
    let coverage = Coverage::new(inst, &order);
    let lp = inst.log_probs();

    // Best log prob among columns at positions >= pos that fit in r.
    let best_eligible = |pos: usize, r: &[u32]| -> Option<f64> {
        order[pos..]
            .iter()
            .find(|&&i| inst.column(i).iter().zip(r).all(|(v, rv)| v <= rv))
            .map(|&i| lp[i])
    };
    let bound_of = |score: f64, pos: usize, r: &[u32]| -> Option<f64> {
        let b = r[count];
        if b == 0 {
            return Some(score);
        }
        best_eligible(pos, r).map(|best| score + b as f64 * best)
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut nodes = 0u64;
    if coverage.admissible(0, inst.target(), count) {
        if let Some(bound) = bound_of(0.0, 0, inst.target()) {
            heap.push(HeapNode {
                complete: n == 0,
                node: Node {
                    bound,
                    score: 0.0,
                    pos: 0,
                    residual: inst.target().to_vec(),
                    x: vec![0; n],
                    seq,
                },
            });
        }
    }

    let mut found: Vec<(f64, Vec<u32>)> = Vec::new();
    while let Some(top) = heap.peek() {
        if found.len() >= n_best {
            let nth = found[n_best - 1].0;
            if top.node.bound < nth - TIE_TOL {
                break;
            }
        }
        let HeapNode { node, .. } = heap.pop().expect("peeked");
        if node.is_complete(n) {
            found.push((node.score, node.x));
            continue;
        }
        let i = order[node.pos];
        let col = inst.column(i);
        let gmax = max_multiplicity(col, &node.residual);
        for g in 0..=gmax {
            let r = subtract(&node.residual, col, g);
            let pos = node.pos + 1;
            if !coverage.admissible(pos, &r, count) {
                continue;
            }
            let score = node.score + if g > 0 { g as f64 * lp[i] } else { 0.0 };
            let Some(bound) = bound_of(score, pos, &r) else {
                continue;
            };
            nodes += 1;
            if nodes > budget {
                return Err(Error::NodeBudgetExceeded { budget });
            }
            let mut x = node.x.clone();
            x[i] = g;
            seq += 1;
            heap.push(HeapNode {
                complete: pos == n,
                node: Node {
                    bound,
                    score,
                    pos,
                    residual: r,
                    x,
                    seq,
                },
            });
        }
    }

    // Canonical scores, then ties broken lexicographically.
    let mut ranked: Vec<(f64, Solution)> = found
        .into_iter()
        .map(|(_, x)| {
            let sol = Solution::new(x);
            (linear_score(inst, &sol), sol)
        })
        .collect();
    ranked.sort_by(|a, b| tie_key(b.0).cmp(&tie_key(a.0)).then_with(|| a.1.cmp(&b.1)));
    let exhausted = heap.is_empty();
    let complete = exhausted && ranked.len() <= n_best;
    let bound_gap = if complete {
        None
    } else {
        let min_returned = ranked[..n_best.min(ranked.len())]
            .iter()
            .map(|(s, _)| *s)
            .fold(f64::INFINITY, f64::min);
        let frontier = heap.peek().map(|h| h.node.bound).unwrap_or(f64::NEG_INFINITY);
        let leftover = ranked.get(n_best).map(|(s, _)| *s).unwrap_or(f64::NEG_INFINITY);
        Some(frontier.max(leftover) - min_returned)
    };
    ranked.truncate(n_best);
    Ok(SolutionSet {
        solutions: ranked.into_iter().map(|(_, s)| s).collect(),
        complete,
        bound_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    fn brute_force_exact(inst: &Instance) -> Vec<Solution> {
        // All multisets of exactly m columns, checked directly.
        fn go(inst: &Instance, start: usize, left: u32, x: &mut Vec<u32>, out: &mut Vec<Solution>) {
            if left == 0 {
                let s = Solution::new(x.clone());
                if inst.is_exact(&s) {
                    out.push(s);
                }
                return;
            }
            for i in start..inst.num_types() {
                x[i] += 1;
                go(inst, i, left - 1, x, out);
                x[i] -= 1;
            }
        }
        let mut out = Vec::new();
        let mut x = vec![0; inst.num_types()];
        go(inst, 0, inst.households(), &mut x, &mut out);
        out.sort();
        out
    }

    #[test]
    fn example2_solutions() {
        let inst = generators::gen_disconnected_example();
        let set = enumerate_exact(&inst, 10).unwrap();
        assert!(set.complete);
        assert_eq!(
            set.solutions,
            vec![Solution::new(vec![0, 0, 0, 3]), Solution::new(vec![1, 1, 1, 0])]
        );
        assert!(decide_mms(&inst).unwrap());
    }

    #[test]
    fn example2_small_target_infeasible() {
        let inst = generators::gen_disconnected_example()
            .with_target(vec![1, 0, 0, 1])
            .unwrap();
        assert!(!decide_mms(&inst).unwrap());
        assert!(brute_force_exact(&inst).is_empty());
    }

    #[test]
    fn limit_truncates_and_clears_complete() {
        let inst = generators::gen_disconnected_example();
        let set = enumerate_exact(&inst, 1).unwrap();
        assert_eq!(set.len(), 1);
        assert!(!set.complete);
        let set = enumerate_exact(&inst, 2).unwrap();
        assert!(set.complete);
    }

    #[test]
    fn block_b_top_n() {
        let [_, b, _] = generators::gen_example1();
        let top = enumerate_top_n(&b, 1).unwrap();
        assert_eq!(top.solutions, vec![Solution::new(vec![0, 2, 0])]);
        assert!(!top.complete);
        assert!(top.bound_gap.unwrap() < 0.0);
        let all = enumerate_top_n(&b, 5).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.complete);
        assert!(all.bound_gap.is_none());
    }

    #[test]
    fn example2_top1_tie_is_lexicographic() {
        let inst = generators::gen_disconnected_example();
        let top = enumerate_top_n(&inst, 1).unwrap();
        assert_eq!(top.solutions, vec![Solution::new(vec![0, 0, 0, 3])]);
        // Tied frontier: nothing certified beyond the tie.
        assert!(top.bound_gap.unwrap().abs() < 1e-9);
    }

    #[test]
    fn swaps_example2() {
        let inst = generators::gen_disconnected_example();
        let z = Solution::new(vec![0, 0, 0, 3]);
        let class = enumerate_swaps(&inst, &z).unwrap();
        assert_eq!(class, vec![z.clone(), Solution::new(vec![1, 1, 1, 0])]);
        for i in 0..4 {
            let mut single = vec![0; 4];
            single[i] = 1;
            let s = Solution::new(single);
            assert_eq!(enumerate_swaps(&inst, &s).unwrap(), vec![s]);
        }
    }

    #[test]
    fn swaps_block_b() {
        let [_, b, _] = generators::gen_example1();
        let class = enumerate_swaps(&b, &Solution::new(vec![0, 2, 0])).unwrap();
        assert_eq!(class, vec![Solution::new(vec![0, 2, 0]), Solution::new(vec![1, 0, 1])]);
    }

    #[test]
    fn swap_cache_reuses_classes() {
        let [_, b, _] = generators::gen_example1();
        let mut cache = SwapCache::new();
        let a = cache.swaps(&b, &Solution::new(vec![0, 2, 0])).unwrap();
        let c = cache.swaps(&b, &Solution::new(vec![1, 0, 1])).unwrap();
        assert!(Arc::ptr_eq(&a, &c));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn counts_of_y() {
        let inst = generators::gen_disconnected_example();
        let y = enumerate_feasible(&inst, 1000).unwrap();
        assert_eq!(count_feasible(&inst, u64::MAX), Count::Exact(y.len() as u64));
        assert!(y.len() >= 2);
        assert!(y.iter().all(|x| inst.is_feasible(x)));
        let empty = inst.with_target(vec![0, 0, 0, 0]).unwrap();
        assert_eq!(count_feasible(&empty, 10), Count::Exact(1));
        assert_eq!(count_feasible(&inst, 3), Count::AtLeast(3));
        assert!(matches!(
            enumerate_feasible(&inst, 3),
            Err(Error::StateCapExceeded { .. })
        ));
    }

    #[test]
    fn node_budget_is_an_error() {
        let inst = generators::gen_disconnected_example();
        assert!(matches!(
            decide_mms_with_budget(&inst, 2),
            Err(Error::NodeBudgetExceeded { .. })
        ));
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        for seed in 0..40u64 {
            let n = 2 + (seed % 5) as usize;
            let m = (seed % 6) as u32;
            let inst = generators::gen_random(seed, n, 3, m, 1.0).unwrap();
            let expected = brute_force_exact(&inst);
            let got = enumerate_exact(&inst, usize::MAX - 1).unwrap();
            assert!(got.complete);
            assert_eq!(got.solutions, expected, "seed {seed}");
            assert_eq!(decide_mms(&inst).unwrap(), !expected.is_empty());
        }
    }

    #[test]
    fn top_n_dominates_complement() {
        for seed in 0..30u64 {
            let inst = generators::gen_random(seed, 5, 3, 4, 1.0).unwrap();
            let all = enumerate_exact(&inst, 100_000).unwrap().solutions;
            for n_best in 1..=3 {
                let top = enumerate_top_n(&inst, n_best).unwrap();
                assert_eq!(top.len(), n_best.min(all.len()));
                let min_top = top
                    .solutions
                    .iter()
                    .map(|s| linear_score(&inst, s))
                    .fold(f64::INFINITY, f64::min);
                for s in all.iter().filter(|s| !top.solutions.contains(s)) {
                    assert!(linear_score(&inst, s) <= min_top + TIE_TOL, "seed {seed}");
                }
                if let Some(gap) = top.bound_gap {
                    assert!(gap <= TIE_TOL);
                }
            }
        }
    }
}
