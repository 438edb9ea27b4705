//! Comparison method: RPCA with a squared-error data term whose scale is a
//! pooled standard deviation estimated from the stack. This is the Gaussian
//! instance of the main solver, so it shares the ADMM loop; everything here
//! is the surrounding estimation and data plumbing.

use crate::error::{Error, Result};
use crate::expfam::DistributionKind;
use crate::solver::{self, Decomposition, SolverConfig, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::stack::MatrixStack;
use ndarray::Array2;

/// How the noise scale is estimated from the stack. The entrywise form
/// removes the spread of the parameter matrix itself; the global form is the
/// plain standard deviation of all entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SigmaMode {
    #[default]
    Entrywise,
    Global,
}

/// Configuration for the baseline fit. `lambda` and `mu` fall back to
/// `1/sqrt(max(p, q))` and `pq / (4 ||Theta_hat||_1)` when unset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineConfig {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub init_rank: Option<usize>,
    /// Replace every observation by its reciprocal before fitting (intended
    /// for rate-parameterized exponential data).
    pub inverse_transform: bool,
    pub sigma_mode: SigmaMode,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            lambda: None,
            mu: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init_rank: None,
            inverse_transform: false,
            sigma_mode: SigmaMode::Entrywise,
        }
    }
}

/// Baseline result: the decomposition plus the noise-scale estimate used.
#[derive(Clone, Debug)]
pub struct BaselineFit {
    pub decomposition: Decomposition,
    /// Pooled standard deviation the squared-error term was scaled by.
    pub sigma_hat: f64,
    /// Set when the data were constant and `sigma_hat` was floored to 1e-8.
    pub sigma_floored: bool,
    pub lambda: f64,
    pub mu: f64,
}

/// Pooled standard deviation of the stack: the square root of the average
/// over cells of the per-cell sample variance across observations (divisor
/// `n - 1`). A single-matrix stack falls back to the variance of all entries
/// around the global mean with the global count as divisor.
pub fn pooled_stddev(stack: &MatrixStack) -> f64 {
    pooled_stddev_of(stack.matrices())
}

fn pooled_stddev_of(matrices: &[Array2<f64>]) -> f64 {
    let n = matrices.len();
    let (p, q) = matrices[0].dim();
    if n == 1 {
        let m = &matrices[0];
        let count = (p * q) as f64;
        let mean = m.sum() / count;
        let var = m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        return var.sqrt();
    }
    let mut mean = Array2::<f64>::zeros((p, q));
    for m in matrices {
        mean += m;
    }
    mean /= n as f64;
    let mut var_sum = 0.0;
    for (j, k) in (0..p).flat_map(|j| (0..q).map(move |k| (j, k))) {
        let cell_mean = mean[[j, k]];
        let ss: f64 = matrices
            .iter()
            .map(|m| {
                let d = m[[j, k]] - cell_mean;
                d * d
            })
            .sum();
        var_sum += ss / (n - 1) as f64;
    }
    (var_sum / (p * q) as f64).sqrt()
}

/// Standard deviation of all stack entries around their grand mean
/// (divisor `count - 1`).
pub fn global_stddev(stack: &MatrixStack) -> f64 {
    let count = (stack.n() * stack.p() * stack.q()) as f64;
    if count < 2.0 {
        return 0.0;
    }
    let grand: f64 = stack.matrices().iter().map(|m| m.sum()).sum::<f64>() / count;
    let ss: f64 = stack
        .matrices()
        .iter()
        .map(|m| m.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>())
        .sum();
    (ss / (count - 1.0)).sqrt()
}

/// Entrywise reciprocal of every observation; requires strictly positive
/// entries. Applying it twice recovers the original data up to one rounding
/// of each entry.
pub fn inverse_transform(stack: &MatrixStack) -> Result<MatrixStack> {
    let mut matrices = Vec::with_capacity(stack.n());
    for (i, m) in stack.matrices().iter().enumerate() {
        if let Some(((j, k), &v)) = m.indexed_iter().find(|(_, &v)| v <= 0.0) {
            return Err(Error::Domain(format!(
                "inverse transform requires positive entries; matrix {i} entry ({j}, {k}) = {v}"
            )));
        }
        matrices.push(m.mapv(|v| 1.0 / v));
    }
    MatrixStack::new(matrices, stack.kind(), stack.link())
}

/// Fit the squared-error RPCA baseline.
///
/// The data (optionally reciprocal transformed) are refit under a Gaussian
/// working model with variance `sigma_hat^2`, unit nuclear penalty, and l1
/// penalty `lambda`; the ADMM loop is exactly the single-group solver's.
pub fn fit_rpca(stack: &MatrixStack, config: &BaselineConfig) -> Result<BaselineFit> {
    let working = if config.inverse_transform {
        inverse_transform(stack)?
    } else {
        stack.clone()
    };

    let raw_sigma = match config.sigma_mode {
        SigmaMode::Entrywise => pooled_stddev(&working),
        SigmaMode::Global => global_stddev(&working),
    };
    let sigma_floored = raw_sigma == 0.0;
    let sigma_hat = if sigma_floored { 1e-8 } else { raw_sigma };

    let lambda = config
        .lambda
        .unwrap_or_else(|| 1.0 / (stack.p().max(stack.q()) as f64).sqrt());
    // Step-size default from the entrywise MLE of the data actually fitted:
    // the plain mean after the reciprocal transform (Gaussian working model),
    // otherwise the MLE under the stack's own distribution.
    let mu = config.mu.unwrap_or_else(|| {
        if config.inverse_transform {
            solver::default_mu(working.mean(), DistributionKind::Gaussian { sigma2: 1.0 })
        } else {
            solver::default_mu(working.mean(), working.kind())
        }
    });

    let gaussian = MatrixStack::new(
        working.matrices().to_vec(),
        DistributionKind::Gaussian {
            sigma2: sigma_hat * sigma_hat,
        },
        crate::expfam::LinkMode::Mean,
    )?;
    let solver_config = SolverConfig {
        alpha: 1.0,
        beta: lambda,
        mu,
        tol: config.tol,
        max_iter: config.max_iter,
        init_rank: config.init_rank,
    };
    let decomposition = solver::fit(&gaussian, &solver_config)?;
    Ok(BaselineFit {
        decomposition,
        sigma_hat,
        sigma_floored,
        lambda,
        mu,
    })
}
