//! Solving and sampling the nonnegative multidimensional multiset-sum problem.
//!
//! Given distinct integer columns `V`, a target `c` and a base distribution
//! over columns, find multiplicity vectors `x ≥ 0` with `V·x = c` and sample
//! them from the posterior induced by i.i.d. draws conditioned on the target.
//!
//! - [`instance`]: instances, solutions, log weights.
//! - [`generators`]: random, lattice, worked-example and reduction instances.
//! - [`enumeration`]: feasibility, exact and top-N enumeration, swap classes.
//! - [`chains`]: rejection, simple, reduced, truncated and hybrid samplers.
//! - [`diagnostics`]: explicit kernels, spectra, conductance, mixing bounds.
//! - [`evaluation`]: type frequencies, total variation, reweighting.
//! - [`batch`]: deterministic parallel runs over a directory of blocks.

pub mod batch;
pub mod chains;
pub mod diagnostics;
pub mod enumeration;
pub mod error;
pub mod evaluation;
pub mod generators;
pub mod instance;

pub use chains::{Algorithm, ChainConfig, SampleReport};
pub use enumeration::{SolutionSet, SwapKey};
pub use error::{Error, Result};
pub use instance::{linear_score, log_f, residual, validate_instance, Instance, Solution, TargetKind};
