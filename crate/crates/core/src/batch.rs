//! Independent sampling of every block file in a directory on a worker pool.
//!
//! Each block gets its own seed, `base_seed XOR fnv1a64(file name)`, so the
//! output of a block does not depend on which worker ran it or when.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{Algorithm, ChainConfig, SampleReport, Sampler};
use crate::error::{Error, Result};
use crate::instance::Instance;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn block_seed(base_seed: u64, block_id: &str) -> u64 {
    base_seed ^ fnv1a64(block_id.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub file: String,
    pub seed: u64,
    /// `sampled`, `enumerated-exact`, or `failed:<reason>`.
    pub status: String,
    pub samples: usize,
}

impl BlockEntry {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed:")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: ChainConfig,
    pub samples_per_block: usize,
    pub workers: usize,
    pub base_seed: u64,
    pub tool_version: String,
    pub started_at: u64,
    pub finished_at: u64,
    pub blocks: Vec<BlockEntry>,
}

impl RunManifest {
    pub fn any_failed(&self) -> bool {
        self.blocks.iter().any(BlockEntry::failed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOptions {
    pub workers: usize,
    pub samples: usize,
    pub command_line: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Block files: `*.json` directly inside `dir`, sorted by name.
pub fn block_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn block_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn samples_path(out_dir: &Path, block_file: &str) -> PathBuf {
    let stem = block_file.strip_suffix(".json").unwrap_or(block_file);
    out_dir.join(format!("{stem}.samples.jsonl"))
}

fn run_block(path: &Path, cfg: &ChainConfig, samples: usize, out_dir: &Path) -> BlockEntry {
    let file = block_id(path);
    let seed = block_seed(cfg.seed, &file);
    let result = (|| -> Result<bool> {
        let inst = Instance::load(path)?;
        let block_cfg = ChainConfig { seed, ..cfg.clone() };
        let mut sampler = Sampler::new(&inst, &block_cfg)?;
        let exact = sampler.is_exact_mode();
        let mut out = String::new();
        for _ in 0..samples {
            let report: SampleReport = sampler.draw()?;
            out.push_str(&serde_json::to_string(&report)?);
            out.push('\n');
        }
        std::fs::write(samples_path(out_dir, &file), out)?;
        Ok(exact)
    })();
    let (status, written) = match result {
        Ok(true) => ("enumerated-exact".to_string(), samples),
        Ok(false) => ("sampled".to_string(), samples),
        Err(e) => (format!("failed:{e}"), 0),
    };
    BlockEntry {
        file,
        seed,
        status,
        samples: written,
    }
}

/// Samples every block in `dir`, writing `<block>.samples.jsonl` and
/// `manifest.json` to `out_dir`.
pub fn run_batch(dir: &Path, cfg: &ChainConfig, opts: &BatchOptions, out_dir: &Path) -> Result<RunManifest> {
    if opts.workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started_at = unix_now();
    let files = block_files(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let blocks: Vec<BlockEntry> = pool.install(|| {
        files
            .par_iter()
            .map(|p| run_block(p, cfg, opts.samples, out_dir))
            .collect()
    });
    let manifest = RunManifest {
        command_line: opts.command_line.clone(),
        config: cfg.clone(),
        samples_per_block: opts.samples,
        workers: opts.workers,
        base_seed: cfg.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: unix_now(),
        blocks,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Reads back the reports written for one block.
pub fn read_samples(path: &Path) -> Result<Vec<SampleReport>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Default configuration for exact-when-possible batch runs.
pub fn hybrid_config(seed: u64) -> ChainConfig {
    ChainConfig {
        algorithm: Algorithm::Hybrid,
        seed,
        ..ChainConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
        assert_eq!(block_seed(0, "a"), fnv1a64(b"a"));
    }

    #[test]
    fn samples_path_strips_extension() {
        assert_eq!(
            samples_path(Path::new("/o"), "b1.json"),
            PathBuf::from("/o/b1.samples.jsonl")
        );
    }
}
