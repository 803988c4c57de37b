//! Instance generators: random blocks, full lattices, the small worked
//! examples, the slow-mixing family `V_ℓ`, and the 3SAT reduction.
//!
//! Unless stated otherwise the household-count coordinate is the last row.

use std::collections::{BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::chains::rng_from_seed;
use crate::error::{Error, Result};
use crate::instance::{Instance, TargetKind};

pub const HYPERRECTANGLE_CAP: u64 = 10_000;
pub const HIGH_MIXING_MAX_ELL: usize = 5;

/// Knobs of [`gen_random_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomOptions {
    /// Non-count entries are drawn from `0..=max_entry`.
    pub max_entry: u32,
    /// Symmetric Dirichlet concentration for `probs`.
    pub concentration: f64,
    /// Column draws attempted per requested column before giving up.
    pub attempts_per_column: usize,
}

impl Default for RandomOptions {
    fn default() -> Self {
        RandomOptions {
            max_entry: 4,
            concentration: 1.0,
            attempts_per_column: 1000,
        }
    }
}

/// What to generate, as read from the command line or a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Random {
        seed: u64,
        n: usize,
        d: usize,
        m: u32,
        #[serde(default = "one")]
        density: f64,
    },
    Hyperrectangle {
        seed: u64,
        ranges: Vec<(u32, u32)>,
        m: u32,
    },
    DisconnectedExample,
    HighMixingFamily {
        ell: usize,
    },
    Threesat {
        formula: CnfFormula,
    },
    /// One of the three blocks of the small three-type example (0, 1 or 2).
    Example1 {
        block: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Instance> {
        match self {
            GeneratorSpec::Random { seed, n, d, m, density } => gen_random(*seed, *n, *d, *m, *density),
            GeneratorSpec::Hyperrectangle { seed, ranges, m } => gen_hyperrectangle(*seed, ranges, *m),
            GeneratorSpec::DisconnectedExample => Ok(gen_disconnected_example()),
            GeneratorSpec::HighMixingFamily { ell } => gen_high_mixing_family(*ell),
            GeneratorSpec::Threesat { formula } => encode_3sat(formula),
            GeneratorSpec::Example1 { block } => {
                let blocks = gen_example1();
                blocks
                    .get(*block)
                    .cloned()
                    .ok_or_else(|| Error::Generator(format!("example block {block} out of range 0..3")))
            }
        }
    }
}

fn dirichlet(rng: &mut impl Rng, n: usize, alpha: f64) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Generator(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && draws.iter().all(|&g| g > 0.0) {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

/// Target `c = Σ` of `m` columns drawn i.i.d. from `probs`.
fn sampled_target(rng: &mut impl Rng, columns: &[Vec<u32>], probs: &[f64], m: u32) -> Result<Vec<u32>> {
    let d = columns[0].len();
    let mut c = vec![0u32; d];
    if m == 0 {
        return Ok(c);
    }
    let pick = WeightedIndex::new(probs).map_err(|e| Error::Generator(e.to_string()))?;
    for _ in 0..m {
        let col = &columns[pick.sample(rng)];
        for (ct, &v) in c.iter_mut().zip(col) {
            *ct += v;
        }
    }
    Ok(c)
}

/// `n` distinct random columns of dimension `d` (last row is the count row),
/// Dirichlet probabilities, and a target built from `m` i.i.d. draws.
pub fn gen_random(seed: u64, n: usize, d: usize, m: u32, density: f64) -> Result<Instance> {
    gen_random_with(seed, n, d, m, density, &RandomOptions::default())
}

pub fn gen_random_with(seed: u64, n: usize, d: usize, m: u32, density: f64, opts: &RandomOptions) -> Result<Instance> {
    if n == 0 || d == 0 {
        return Err(Error::Generator("n and d must be at least 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Generator(format!("density {density} outside (0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while columns.len() < n {
        attempts += 1;
        if attempts > opts.attempts_per_column.saturating_mul(n) {
            return Err(Error::Generator(format!(
                "could not draw {n} distinct columns of dimension {d}"
            )));
        }
        let mut col: Vec<u32> = (0..d - 1)
            .map(|_| {
                if rng.random_bool(density) {
                    rng.random_range(0..=opts.max_entry)
                } else {
                    0
                }
            })
            .collect();
        col.push(1);
        if seen.insert(col.clone()) {
            columns.push(col);
        }
    }
    let probs = dirichlet(&mut rng, n, opts.concentration)?;
    let target = sampled_target(&mut rng, &columns, &probs, m)?;
    Instance::new(columns, probs, target)
}

/// Every lattice point of `A₁ × … × A_d` (inclusive integer ranges) as a
/// column, plus a count row. Uniform probabilities.
pub fn gen_hyperrectangle(seed: u64, ranges: &[(u32, u32)], m: u32) -> Result<Instance> {
    gen_hyperrectangle_capped(seed, ranges, m, HYPERRECTANGLE_CAP)
}

pub fn gen_hyperrectangle_capped(seed: u64, ranges: &[(u32, u32)], m: u32, cap: u64) -> Result<Instance> {
    if ranges.is_empty() {
        return Err(Error::Generator("need at least one range".into()));
    }
    let mut size = 1u64;
    for &(lo, hi) in ranges {
        if lo > hi {
            return Err(Error::Generator(format!("empty range {lo}..={hi}")));
        }
        size = size.saturating_mul((hi - lo + 1) as u64);
    }
    if size > cap {
        return Err(Error::Generator(format!(
            "hyperrectangle has {size} points, cap is {cap}"
        )));
    }
    let mut columns: Vec<Vec<u32>> = vec![Vec::new()];
    for &(lo, hi) in ranges {
        columns = columns
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    for col in &mut columns {
        col.push(1);
    }
    let n = columns.len();
    let probs = vec![1.0 / n as f64; n];
    let mut rng = rng_from_seed(seed);
    let target = sampled_target(&mut rng, &columns, &probs, m)?;
    Instance::new(columns, probs, target)
}

/// Four columns whose two exact solutions differ by a 3-swap only.
pub fn gen_disconnected_example() -> Instance {
    Instance::uniform(
        vec![vec![3, 0, 0, 1], vec![0, 3, 0, 1], vec![0, 0, 3, 1], vec![1, 1, 1, 1]],
        vec![3, 3, 3, 3],
    )
    .expect("fixed instance is valid")
}

/// The three one-attribute-pair blocks over household types
/// `(white, Black, households)`: `(0,2,1)`, `(1,1,1)`, `(2,0,1)` with
/// probabilities `(1/4, 1/2, 1/4)`. Returns blocks `[A, B, C]`.
pub fn gen_example1() -> [Instance; 3] {
    let columns = vec![vec![0, 2, 1], vec![1, 1, 1], vec![2, 0, 1]];
    let probs = vec![0.25, 0.5, 0.25];
    let block = |c: Vec<u32>| Instance::new(columns.clone(), probs.clone(), c).expect("fixed instance is valid");
    [block(vec![0, 2, 1]), block(vec![2, 2, 2]), block(vec![2, 0, 1])]
}

/// Upper blocks `M_ℓ`, `0`, `S_ℓ`, `T_ℓ` of the slow-mixing family, in order.
fn high_mixing_left(ell: usize) -> Vec<Vec<u32>> {
    let l = ell as u32;
    let unit =
        |rows: &[usize], v: u32| -> Vec<u32> { (0..ell).map(|r| if rows.contains(&r) { v } else { 0 }).collect() };
    let mut left = Vec::new();
    for i in 0..ell {
        left.push(unit(&[i], 2 * l));
    }
    for i in 0..ell {
        for j in i + 1..ell {
            left.push(unit(&[i, j], l));
        }
    }
    left.push(vec![0; ell]);
    for i in 1..ell - 1 {
        left.push((0..ell).map(|r| if r <= i { 2 * l } else { 0 }).collect());
    }
    for i in 1..2 * l {
        left.push(vec![i + 1; ell]);
    }
    left
}

/// The slow-mixing family `V_ℓ` with `c = 2ℓ` everywhere and a uniform
/// target over exact solutions.
///
/// Columns are the left block stacked over ones, one all-ones column, then
/// ones stacked over the left block. A final all-ones row with target `2ℓ`
/// serves as the household count.
pub fn gen_high_mixing_family(ell: usize) -> Result<Instance> {
    if !(3..=HIGH_MIXING_MAX_ELL).contains(&ell) {
        return Err(Error::Generator(format!(
            "ell = {ell} outside 3..={HIGH_MIXING_MAX_ELL}"
        )));
    }
    let left = high_mixing_left(ell);
    let ones = vec![1u32; ell];
    let mut columns = Vec::with_capacity(2 * left.len() + 1);
    for v in &left {
        columns.push([v.as_slice(), &ones, &[1]].concat());
    }
    columns.push(vec![1u32; 2 * ell + 1]);
    for v in &left {
        columns.push([ones.as_slice(), v, &[1]].concat());
    }
    let target = vec![2 * ell as u32; 2 * ell + 1];
    Ok(Instance::uniform(columns, target)?.with_target_kind(TargetKind::Uniform))
}

/// Number of leading columns whose exact solutions are the cycle collections
/// counted by `a(ℓ)`: the mixed-pair block plus the zero column.
pub fn high_mixing_cycle_prefix(ell: usize) -> usize {
    ell + ell * (ell - 1) / 2 + 1
}

/// Number of leading columns spanning the left side `X_L` of the bottleneck
/// cut: `M_ℓ`, the zero column, and `S_ℓ`.
pub fn high_mixing_left_prefix(ell: usize) -> usize {
    2 * ell + ell * (ell - 1) / 2 - 1
}

/// A 3-CNF formula; literals are nonzero, `+v` for variable `v` and `-v`
/// for its negation, with variables numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<[i32; 3]>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<[i32; 3]>) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::Generator("formula needs at least one variable".into()));
        }
        for clause in &clauses {
            for &lit in clause {
                if lit == 0 || lit.unsigned_abs() as usize > num_vars {
                    return Err(Error::Generator(format!(
                        "literal {lit} out of range for {num_vars} variables"
                    )));
                }
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    /// Parses DIMACS CNF. Every clause must have exactly three literals.
    pub fn from_dimacs(text: &str) -> Result<Self> {
        let mut num_vars = None;
        let mut declared_clauses = None;
        let mut clauses = Vec::new();
        let mut current: Vec<i32> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if line.starts_with('%') {
                break;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(Error::Parse(format!("bad problem line: {line}")));
                }
                num_vars = Some(parse_num::<usize>(parts[1])?);
                declared_clauses = Some(parse_num::<usize>(parts[2])?);
                continue;
            }
            for tok in line.split_whitespace() {
                let lit = parse_num::<i32>(tok)?;
                if lit == 0 {
                    let clause: [i32; 3] = current
                        .as_slice()
                        .try_into()
                        .map_err(|_| Error::Parse(format!("clause with {} literals, expected 3", current.len())))?;
                    clauses.push(clause);
                    current.clear();
                } else {
                    current.push(lit);
                }
            }
        }
        if !current.is_empty() {
            return Err(Error::Parse("last clause is not terminated by 0".into()));
        }
        let num_vars = num_vars.ok_or_else(|| Error::Parse("missing 'p cnf' line".into()))?;
        if declared_clauses != Some(clauses.len()) {
            log::warn!(
                "header declares {:?} clauses, found {}",
                declared_clauses,
                clauses.len()
            );
        }
        CnfFormula::new(num_vars, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for [a, b, c] in &self.clauses {
            out.push_str(&format!("{a} {b} {c} 0\n"));
        }
        out
    }

    pub fn is_satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|clause| {
            clause.iter().any(|&lit| {
                let value = assignment[lit.unsigned_abs() as usize - 1];
                if lit > 0 {
                    value
                } else {
                    !value
                }
            })
        })
    }

    /// Tries all `2^num_vars` assignments.
    pub fn brute_force_satisfiable(&self) -> bool {
        assert!(self.num_vars <= 24, "brute force limited to 24 variables");
        let mut assignment = vec![false; self.num_vars];
        (0u64..1 << self.num_vars).any(|mask| {
            for (v, slot) in assignment.iter_mut().enumerate() {
                *slot = mask >> v & 1 == 1;
            }
            self.is_satisfied_by(&assignment)
        })
    }

    /// Uniformly random clauses over distinct variables with random signs.
    pub fn random(seed: u64, num_vars: usize, num_clauses: usize) -> Result<Self> {
        if num_vars < 3 {
            return Err(Error::Generator("random 3-CNF needs at least 3 variables".into()));
        }
        let mut rng = rng_from_seed(seed);
        let clauses = (0..num_clauses)
            .map(|_| {
                let vars = rand::seq::index::sample(&mut rng, num_vars, 3);
                let mut clause = [0i32; 3];
                for (slot, v) in clause.iter_mut().zip(vars.iter()) {
                    let lit = v as i32 + 1;
                    *slot = if rng.random_bool(0.5) { lit } else { -lit };
                }
                clause
            })
            .collect();
        CnfFormula::new(num_vars, clauses)
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse(format!("not a number: {tok}")))
}

/// Reduction from 3SAT: `X` is nonempty iff the formula is satisfiable.
///
/// Rows are one per variable, one per clause, then a count row. Each variable
/// contributes a positive- and a negative-literal column (1 on its own row and
/// on the rows of clauses containing that literal); each clause contributes
/// slack columns with 4, 5 and 6 on its row. The target is 1 on variable rows,
/// 7 on clause rows and `num_vars + num_clauses` on the count row. When the two
/// literal columns of a variable coincide, only the positive one is kept.
pub fn encode_3sat(formula: &CnfFormula) -> Result<Instance> {
    let nv = formula.num_vars;
    let nc = formula.clauses.len();
    let d = nv + nc + 1;
    let count = d - 1;
    let literal_column = |var: usize, positive: bool| -> Vec<u32> {
        let mut col = vec![0u32; d];
        col[var] = 1;
        let lit = if positive { var as i32 + 1 } else { -(var as i32 + 1) };
        for (j, clause) in formula.clauses.iter().enumerate() {
            if clause.contains(&lit) {
                col[nv + j] = 1;
            }
        }
        col[count] = 1;
        col
    };
    let mut columns = Vec::with_capacity(2 * nv + 3 * nc);
    for var in 0..nv {
        let pos = literal_column(var, true);
        let neg = literal_column(var, false);
        let same = pos == neg;
        columns.push(pos);
        if !same {
            columns.push(neg);
        }
    }
    for j in 0..nc {
        for slack in [4u32, 5, 6] {
            let mut col = vec![0u32; d];
            col[nv + j] = slack;
            col[count] = 1;
            columns.push(col);
        }
    }
    let mut target = vec![1u32; nv];
    target.extend(std::iter::repeat_n(7u32, nc));
    target.push((nv + nc) as u32);
    Instance::uniform(columns, target)
}

/// Reads the truth assignment encoded by an exact solution of the reduction.
pub fn assignment_from_solution(formula: &CnfFormula, inst: &Instance, x: &[u32]) -> Vec<bool> {
    let nv = formula.num_vars;
    let mut assignment = vec![false; nv];
    let used: BTreeSet<usize> = x.iter().enumerate().filter(|(_, &g)| g > 0).map(|(i, _)| i).collect();
    for i in used {
        let col = inst.column(i);
        if let Some(var) = (0..nv).find(|&v| col[v] == 1) {
            let lit = var as i32 + 1;
            let clause_rows_match = formula
                .clauses
                .iter()
                .enumerate()
                .all(|(j, clause)| (col[nv + j] == 1) == clause.contains(&lit));
            assignment[var] = clause_rows_match;
        }
    }
    assignment
}
