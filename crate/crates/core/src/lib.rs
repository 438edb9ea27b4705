//! Decomposition of noisy matrix stacks into a shared low-rank background
//! plus sparse anomalies, where entry noise follows a one-parameter
//! exponential family (Poisson, Bernoulli, Exponential, or Gaussian with
//! known variance).
//!
//! The solvers run ADMM with closed-form proximal steps: singular value
//! thresholding for the background, soft thresholding for the anomalies, and
//! decoupled per-entry likelihood updates for the parameter matrix. A
//! squared-error RPCA baseline, a seeded simulation generator, a benchmark
//! runner, and hyperparameter tuning are included.
//!
//! ```
//! use erpca::{expfam::DistributionKind, simgen, solver};
//!
//! let spec = simgen::SimSpec::preset(DistributionKind::Bernoulli, 8, 40, 1, 7);
//! let truth = simgen::make_ground_truth(&spec)?;
//! let stacks = simgen::sample_stack(&truth, &spec)?;
//! let stack = &stacks.groups()[0];
//! let fit = solver::fit(stack, &solver::default_config(stack))?;
//! assert_eq!(fit.l.dim(), (8, 8));
//! assert!(fit.final_residual < 1e-6);
//! # Ok::<(), erpca::Error>(())
//! ```

pub mod baseline;
pub mod bench;
pub mod error;
pub mod expfam;
pub mod io;
pub mod multi;
pub mod prox;
pub mod simgen;
pub mod solver;
pub mod stack;
pub mod tune;

pub use error::{Error, Result};
pub use expfam::{clamp_to_domain, DistributionKind, LinkMode, ParamDomain};
pub use multi::{fit_multi, MultiConfig, MultiDecomposition};
pub use prox::{soft_threshold, svt, thin_svd, ThinSvd};
pub use simgen::{GroundTruth, SimSpec};
pub use solver::{default_config, fit, Decomposition, SolverConfig};
pub use stack::{GroupedStacks, MatrixStack};
pub use tune::{tune, TuneOutcome, TuneSpec};
