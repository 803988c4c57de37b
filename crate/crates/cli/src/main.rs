//! `mms`: generate, enumerate, sample, analyze and evaluate multiset-sum
//! instances from the command line.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on usage errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mms::batch::{block_files, read_samples, run_batch, samples_path, BatchOptions};
use mms::chains::Sampler;
use mms::diagnostics::{analyze_sweep, KernelKind, SweepRow};
use mms::enumeration::{count_feasible, enumerate_exact, enumerate_feasible, enumerate_top_n, Count};
use mms::evaluation::{
    empirical_frequencies_qhat, expected_frequencies_q, label_string, pums_frequencies_p, reweight_lambda,
    reweight_partition, tvd, BlockWeighting, TypeDistribution, TypeLabel, TypeProjection, DEFAULT_LAMBDA,
};
use mms::generators::{CnfFormula, GeneratorSpec};
use mms::{Algorithm, ChainConfig, Instance, Solution};

#[derive(Parser, Debug)]
#[command(name = "mms", version, about = "Multiset-sum enumeration, sampling and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated instance as JSON.
    Gen(GenArgs),
    /// List exact (or feasible) solutions as JSON lines with a footer record.
    Enumerate(EnumerateArgs),
    /// Draw solutions, one JSON sample report per line.
    Sample(SampleArgs),
    /// Spectral sweep over kernel parameters, as CSV.
    Analyze(AnalyzeArgs),
    /// Type frequencies and distances of sampled blocks, as CSV.
    Evaluate(EvaluateArgs),
    /// Sample every block in a directory on a worker pool.
    Batch(BatchArgs),
}

/// Seed handling shared by randomized subcommands.
#[derive(Args, Debug, Clone)]
struct SeedArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Run with a time-derived seed, printed to stderr.
    #[arg(long, conflicts_with = "seed")]
    ephemeral: bool,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum GenKind {
    Random,
    Hyperrectangle,
    #[value(alias = "disconnected-example")]
    DisconnectedExample,
    #[value(alias = "high-mixing-family")]
    HighMixingFamily,
    Threesat,
    Example1,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, required_unless_present = "config")]
    kind: Option<GenKind>,
    /// Generator spec as JSON, in place of the flags below.
    #[arg(long, conflicts_with = "kind")]
    config: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArgs,
    /// Number of column types.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Dimension including the count row.
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Households in the target.
    #[arg(long, default_value_t = 4)]
    m: u32,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Inclusive ranges per attribute, e.g. `0-2,1-3`.
    #[arg(long, value_delimiter = ',', value_parser = parse_range)]
    ranges: Vec<(u32, u32)>,
    #[arg(long, default_value_t = 3)]
    ell: usize,
    /// DIMACS CNF file; a random formula is drawn when absent.
    #[arg(long)]
    cnf: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    vars: usize,
    #[arg(long, default_value_t = 20)]
    clauses: usize,
    /// Block of the three-block example: a, b or c.
    #[arg(long, default_value = "b", value_parser = parse_block)]
    block: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    instance: PathBuf,
    /// Stop after this many exact solutions.
    #[arg(long, default_value_t = 100_000)]
    limit: usize,
    /// List the N highest-scoring exact solutions instead.
    #[arg(long, conflicts_with = "feasible")]
    top_n: Option<usize>,
    /// List the feasible set Y instead of X.
    #[arg(long)]
    feasible: bool,
    /// Largest feasible set to list.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
    #[command(flatten)]
    out: OutArg,
}

/// Sampler flags; each overrides the config file when given.
#[derive(Args, Debug)]
struct ChainArgs {
    /// Chain settings as JSON; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<u64>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    omega: Option<u64>,
    #[arg(long)]
    max_restarts: Option<u64>,
    #[command(flatten)]
    seed: SeedArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    instance: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AnalyzeKind {
    Simple,
    Reduced,
    Truncated,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "reduced")]
    kind: AnalyzeKind,
    /// Inverse temperatures to sweep, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
    gamma: Vec<f64>,
    /// Swap sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    omega: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Weighting {
    Households,
    Blocks,
}

impl From<Weighting> for BlockWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Households => BlockWeighting::Households,
            Weighting::Blocks => BlockWeighting::Blocks,
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of block instance files.
    #[arg(long)]
    blocks: PathBuf,
    /// Directory holding `<block>.samples.jsonl` files.
    #[arg(long)]
    samples: PathBuf,
    /// JSON projection `{"labels": [[..], ..]}`; identity when absent.
    #[arg(long)]
    projection: Option<PathBuf>,
    /// JSON list of `[label, class]` pairs for the class-matched table.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "households")]
    weighting: Weighting,
    /// Also compute exact expected frequencies, enumerating up to this many
    /// solutions per block.
    #[arg(long)]
    exact_limit: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct BatchArgs {
    /// Directory of block instance files.
    dir: PathBuf,
    /// Directory for sample files and the manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[command(flatten)]
    chain: ChainArgs,
}

/// Errors that should exit with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (lo, hi) = s.split_once('-').ok_or_else(|| format!("range '{s}' is not lo-hi"))?;
    let lo = lo.trim().parse().map_err(|e| format!("range '{s}': {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("range '{s}': {e}"))?;
    Ok((lo, hi))
}

fn parse_block(s: &str) -> Result<usize, String> {
    match s.to_ascii_lowercase().as_str() {
        "a" | "0" => Ok(0),
        "b" | "1" => Ok(1),
        "c" | "2" => Ok(2),
        _ => Err(format!("block '{s}' is not one of a, b, c")),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|e| e.to_string())
}

impl SeedArgs {
    /// The explicit seed, a fresh one under `--ephemeral`, or a usage error.
    fn resolve(&self, fallback: Option<u64>) -> anyhow::Result<u64> {
        if let Some(seed) = self.seed.or(fallback) {
            return Ok(seed);
        }
        if self.ephemeral {
            let nanos = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            let seed = nanos ^ ((std::process::id() as u64) << 32);
            eprintln!("ephemeral seed: {seed}");
            return Ok(seed);
        }
        Err(usage("a --seed is required for randomized runs (or pass --ephemeral)"))
    }
}

impl ChainArgs {
    fn resolve(&self) -> anyhow::Result<ChainConfig> {
        let (mut cfg, config_seed) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let seed = value.get("seed").and_then(|s| s.as_u64());
                let cfg: ChainConfig =
                    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                (cfg, seed)
            }
            None => (ChainConfig::default(), None),
        };
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(t) = self.t {
            cfg.t = t;
        }
        if let Some(n) = self.top_n {
            cfg.top_n = n;
        }
        if let Some(w) = self.omega {
            cfg.omega = w;
        }
        if self.max_restarts.is_some() {
            cfg.max_restarts = self.max_restarts;
        }
        cfg.seed = self.seed.resolve(config_seed)?;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Writes to `--out` or stdout.
fn emit(out: &OutArg, text: &str) -> anyhow::Result<()> {
    match &out.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Instance::load(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    let spec = match (&args.config, args.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(kind)) => match kind {
            GenKind::Random => GeneratorSpec::Random {
                seed: args.seed.resolve(None)?,
                n: args.n,
                d: args.d,
                m: args.m,
                density: args.density,
            },
            GenKind::Hyperrectangle => {
                if args.ranges.is_empty() {
                    return Err(usage("hyperrectangle needs --ranges"));
                }
                GeneratorSpec::Hyperrectangle {
                    seed: args.seed.resolve(None)?,
                    ranges: args.ranges.clone(),
                    m: args.m,
                }
            }
            GenKind::DisconnectedExample => GeneratorSpec::DisconnectedExample,
            GenKind::HighMixingFamily => GeneratorSpec::HighMixingFamily { ell: args.ell },
            GenKind::Threesat => {
                let formula = match &args.cnf {
                    Some(path) => {
                        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                        CnfFormula::from_dimacs(&text)?
                    }
                    None => CnfFormula::random(args.seed.resolve(None)?, args.vars, args.clauses)?,
                };
                GeneratorSpec::Threesat { formula }
            }
            GenKind::Example1 => GeneratorSpec::Example1 { block: args.block },
        },
        (None, None) => return Err(usage("gen needs --kind or --config")),
    };
    let inst = spec.generate()?;
    emit(&args.out, &(inst.to_json_string() + "\n"))
}

fn solution_line(s: &Solution) -> anyhow::Result<String> {
    Ok(serde_json::to_string(s)? + "\n")
}

fn cmd_enumerate(args: &EnumerateArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.instance)?;
    let mut text = String::new();
    let footer = if args.feasible {
        let count = count_feasible(&inst, args.cap as u64);
        let complete = matches!(count, Count::Exact(_));
        let listed = if complete {
            enumerate_feasible(&inst, args.cap)?
        } else {
            Vec::new()
        };
        for s in &listed {
            text += &solution_line(s)?;
        }
        serde_json::json!({ "set": "feasible", "count": listed.len(), "complete": complete, "at_least": count.value() })
    } else {
        let set = match args.top_n {
            Some(n) => enumerate_top_n(&inst, n)?,
            None => enumerate_exact(&inst, args.limit)?,
        };
        for s in &set.solutions {
            text += &solution_line(s)?;
        }
        serde_json::json!({ "set": "exact", "count": set.len(), "complete": set.complete, "bound_gap": set.bound_gap })
    };
    text += &(serde_json::to_string(&serde_json::json!({ "footer": footer }))? + "\n");
    emit(&args.out, &text)
}

fn cmd_sample(args: &SampleArgs) -> anyhow::Result<()> {
    let cfg = args.chain.resolve()?;
    let inst = load_instance(&args.instance)?;
    let mut sampler = Sampler::new(&inst, &cfg)?;
    let mut text = String::new();
    for _ in 0..args.samples {
        text += &(serde_json::to_string(&sampler.draw()?)? + "\n");
    }
    emit(&args.out, &text)
}

fn cmd_analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.instance)?;
    let kinds: Vec<KernelKind> = match args.kind {
        AnalyzeKind::Simple => args.gamma.iter().map(|&gamma| KernelKind::Simple { gamma }).collect(),
        AnalyzeKind::Reduced => args.k.iter().map(|&k| KernelKind::Reduced { k }).collect(),
        AnalyzeKind::Truncated => args
            .gamma
            .iter()
            .map(|&gamma| KernelKind::Truncated {
                gamma,
                omega: args.omega,
            })
            .collect(),
    };
    let rows = analyze_sweep(&inst, &kinds)?;
    let mut text = String::from(SweepRow::CSV_HEADER) + "\n";
    for row in &rows {
        text += &(row.to_csv() + "\n");
    }
    emit(&args.out, &text)
}

fn load_partition(path: &Path) -> anyhow::Result<BTreeMap<TypeLabel, i64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let pairs: Vec<(TypeLabel, i64)> =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(pairs.into_iter().collect())
}

fn push_table(text: &mut String, table: &str, dist: &TypeDistribution) {
    for (label, value) in dist.to_csv_rows() {
        text.push_str(&format!("{table},{label},{value:.12e}\n"));
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let files = block_files(&args.blocks)?;
    if files.is_empty() {
        bail!("no block files in {}", args.blocks.display());
    }
    let instances: Vec<Instance> = files.iter().map(|f| load_instance(f)).collect::<anyhow::Result<_>>()?;
    let mut reports = Vec::with_capacity(files.len());
    for f in &files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let path = samples_path(&args.samples, &name);
        reports.push(read_samples(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let datasets = reports.iter().map(Vec::len).min().unwrap_or(0);
    if datasets == 0 {
        bail!("some block has no samples");
    }
    let proj = match &args.projection {
        Some(path) => TypeProjection::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => TypeProjection::identity(instances[0].num_types()),
    };
    let probs = instances[0].probs().to_vec();
    if instances.iter().any(|i| i.probs() != probs.as_slice()) {
        bail!("blocks do not share one base distribution");
    }
    let weighting = BlockWeighting::from(args.weighting);
    let p = pums_frequencies_p(&probs, &proj)?;

    // One dataset is the r-th sample of every block.
    let mut sums: BTreeMap<TypeLabel, Vec<f64>> = BTreeMap::new();
    let mut distances = Vec::with_capacity(datasets);
    let mut excluded = 0;
    for r in 0..datasets {
        let pairs: Vec<(&Instance, &Solution)> = instances
            .iter()
            .zip(&reports)
            .map(|(i, rep)| (i, &rep[r].solution))
            .collect();
        let est = empirical_frequencies_qhat(&pairs, &proj, weighting)?;
        excluded = excluded.max(est.excluded_blocks);
        distances.push(tvd(&p, &est.distribution));
        for (label, &w) in &est.distribution.weights {
            sums.entry(label.clone()).or_default().push(w / datasets as f64);
        }
    }
    let qhat = TypeDistribution::from_masses(sums)?;
    let new_probs = reweight_lambda(&probs, &proj, &p, &qhat, args.lambda)?;

    let mut text = String::from("table,label,value\n");
    push_table(&mut text, "p", &p);
    push_table(&mut text, "qhat", &qhat);
    if let Some(path) = &args.partition {
        let adjusted = reweight_partition(&p, &qhat, &load_partition(path)?)?;
        push_table(&mut text, "ptilde", &adjusted);
    }
    for (i, w) in new_probs.iter().enumerate() {
        text.push_str(&format!("d_lambda,{},{w:.12e}\n", label_string(&vec![i as i64])));
    }
    let mut summary = vec![
        ("datasets".to_string(), datasets as f64),
        ("excluded_blocks".to_string(), excluded as f64),
        ("tvd_mean".to_string(), distances.iter().sum::<f64>() / datasets as f64),
        ("tvd_max".to_string(), distances.iter().cloned().fold(0.0, f64::max)),
        ("tvd_pooled".to_string(), tvd(&p, &qhat)),
    ];
    if let Some(limit) = args.exact_limit {
        let q = expected_frequencies_q(&instances, &proj, weighting, limit)?.distribution;
        push_table(&mut text, "q", &q);
        summary.push(("tvd_p_q".to_string(), tvd(&p, &q)));
    }
    for (name, value) in summary {
        text.push_str(&format!("summary,{name},{value:.12e}\n"));
    }
    emit(&args.out, &text)
}

fn cmd_batch(args: &BatchArgs) -> anyhow::Result<()> {
    let cfg = args.chain.resolve()?;
    if args.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let opts = BatchOptions {
        workers: args.workers,
        samples: args.samples,
        command_line: std::env::args().collect(),
    };
    let manifest = run_batch(&args.dir, &cfg, &opts, &args.out)?;
    for b in &manifest.blocks {
        eprintln!("{}: {}", b.file, b.status);
    }
    if manifest.any_failed() {
        return Err(anyhow!(
            "some blocks failed; see {}",
            args.out.join("manifest.json").display()
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Batch(a) => cmd_batch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
