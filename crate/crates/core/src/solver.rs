//! Single-group decomposition: one low-rank background plus one sparse
//! anomaly matrix fitted to a stack by ADMM with closed-form prox steps and
//! per-entry likelihood updates.

use crate::error::{Error, Result};
use crate::expfam::{self, clamp_to_domain, DistributionKind, LinkMode};
use crate::prox::{l1_norm, nuclear_norm, soft_threshold, svt_with_values};
use crate::stack::MatrixStack;
use ndarray::{Array2, Zip};
use rayon::prelude::*;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Penalties, step size, and stopping rules for the single-group solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Nuclear-norm penalty on the background.
    pub alpha: f64,
    /// l1 penalty on the anomalies.
    pub beta: f64,
    /// Multiplier step size (fixed across iterations).
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Rank of the truncated-SVD initialization; `None` = ceil(min(p,q)/5).
    pub init_rank: Option<usize>,
}

impl SolverConfig {
    pub fn validate(&self, p: usize, q: usize) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mu", self.mu),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let Some(r) = self.init_rank {
            if r == 0 || r > p.min(q) {
                return Err(Error::Config(format!(
                    "init_rank {r} outside 1..={}",
                    p.min(q)
                )));
            }
        }
        Ok(())
    }
}

/// Recovered `(L, S, Theta)` triple with solver diagnostics.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub kind: DistributionKind,
    pub link: LinkMode,
    pub l: Array2<f64>,
    pub s: Array2<f64>,
    pub theta: Array2<f64>,
    /// Final Lagrange multiplier matrix.
    pub multiplier: Array2<f64>,
    pub iterations: usize,
    /// `||Theta - L - S||_F / max(1, ||Theta||_F)` at the last iteration.
    pub final_residual: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
}

impl Decomposition {
    /// Theta on the observation scale: identity for the mean link, the
    /// logistic transform of the natural parameter for the canonical link.
    pub fn theta_observation_scale(&self) -> Array2<f64> {
        match self.link {
            LinkMode::Mean => self.theta.clone(),
            LinkMode::Canonical => self.theta.mapv(expfam::sigmoid),
        }
    }
}

/// Initial iterates for the ADMM loop.
#[derive(Clone, Debug)]
pub struct InitState {
    pub l: Array2<f64>,
    pub s: Array2<f64>,
    pub y: Array2<f64>,
    pub theta: Array2<f64>,
}

pub(crate) fn default_init_rank(p: usize, q: usize) -> usize {
    (p.min(q)).div_ceil(5).max(1)
}

/// Entrywise maximum-likelihood parameter estimate from the stack mean,
/// clamped into the parameter domain. The exponential family here is rate
/// parameterized, so its MLE is the reciprocal mean.
pub(crate) fn theta0_mle(mean: &Array2<f64>, kind: DistributionKind) -> Array2<f64> {
    match kind {
        DistributionKind::Exponential => {
            mean.mapv(|m| clamp_to_domain(kind, LinkMode::Mean, 1.0 / m))
        }
        _ => mean.mapv(|m| clamp_to_domain(kind, LinkMode::Mean, m)),
    }
}

pub(crate) fn default_mu(mean: &Array2<f64>, kind: DistributionKind) -> f64 {
    let theta0 = theta0_mle(mean, kind);
    let l1 = l1_norm(&theta0);
    let (p, q) = mean.dim();
    if l1 == 0.0 {
        1.0
    } else {
        (p * q) as f64 / (4.0 * l1)
    }
}

/// Recommended defaults: `alpha = 1`, `beta = 1/sqrt(max(p, q))`,
/// `mu = pq / (4 ||Theta0||_1)` with `Theta0` the clamped entrywise MLE.
pub fn default_config(stack: &MatrixStack) -> SolverConfig {
    SolverConfig {
        alpha: 1.0,
        beta: 1.0 / (stack.p().max(stack.q()) as f64).sqrt(),
        mu: default_mu(stack.mean(), stack.kind()),
        tol: DEFAULT_TOL,
        max_iter: DEFAULT_MAX_ITER,
        init_rank: None,
    }
}

fn clamped_mean_matrix(mean: &Array2<f64>, kind: DistributionKind, link: LinkMode) -> Array2<f64> {
    match link {
        LinkMode::Mean => mean.mapv(|m| clamp_to_domain(kind, LinkMode::Mean, m)),
        // Natural-parameter scale: logit of the clamped mean.
        LinkMode::Canonical => mean.mapv(|m| {
            let p = clamp_to_domain(DistributionKind::Bernoulli, LinkMode::Mean, m);
            (p / (1.0 - p)).ln()
        }),
    }
}

pub(crate) fn init_from_mean(
    mean: &Array2<f64>,
    kind: DistributionKind,
    link: LinkMode,
    config: &SolverConfig,
) -> Result<InitState> {
    let (p, q) = mean.dim();
    let theta = clamped_mean_matrix(mean, kind, link);
    let k = config.init_rank.unwrap_or_else(|| default_init_rank(p, q));
    let l = crate::prox::low_rank_approx(&theta, k)?;
    Ok(InitState {
        l,
        s: Array2::zeros((p, q)),
        y: Array2::zeros((p, q)),
        theta,
    })
}

/// Starting iterates: `Theta0` is the clamped entrywise mean (link mapped),
/// `L0` its best rank-`init_rank` approximation, `S0 = Y0 = 0`.
pub fn init_state(stack: &MatrixStack, config: &SolverConfig) -> Result<InitState> {
    config.validate(stack.p(), stack.q())?;
    init_from_mean(stack.mean(), stack.kind(), stack.link(), config)
}

/// Which per-entry objective the theta step minimizes.
#[derive(Clone, Copy, Debug)]
pub(crate) enum ThetaModel {
    MeanLink(DistributionKind),
    /// Bernoulli on the natural-parameter scale.
    Canonical,
}

impl ThetaModel {
    pub(crate) fn new(kind: DistributionKind, link: LinkMode) -> Result<Self> {
        match link {
            LinkMode::Mean => Ok(ThetaModel::MeanLink(kind)),
            LinkMode::Canonical => {
                if matches!(kind, DistributionKind::Bernoulli) {
                    Ok(ThetaModel::Canonical)
                } else {
                    Err(Error::Config(
                        "canonical link supported for bernoulli only".into(),
                    ))
                }
            }
        }
    }

    #[inline]
    pub(crate) fn update_entry(&self, mean: f64, l: f64, s: f64, y: f64, mu: f64) -> Result<f64> {
        match self {
            ThetaModel::MeanLink(kind) => {
                expfam::theta_update_closed_form(*kind, mean, l, s, y, mu)
            }
            ThetaModel::Canonical => expfam::theta_update_canonical(mean, l, s, y, mu),
        }
    }

    #[inline]
    pub(crate) fn entry_mean_nll(&self, theta: f64, mean: f64) -> f64 {
        match self {
            ThetaModel::MeanLink(kind) => match kind {
                DistributionKind::Poisson => theta - mean * theta.ln(),
                DistributionKind::Bernoulli => {
                    -mean * theta.ln() - (1.0 - mean) * (1.0 - theta).ln()
                }
                DistributionKind::Exponential => theta * mean - theta.ln(),
                DistributionKind::Gaussian { sigma2 } => {
                    (0.5 * theta * theta - theta * mean) / sigma2
                }
            },
            ThetaModel::Canonical => -mean * theta + expfam::softplus(theta),
        }
    }
}

fn nll_term(model: &ThetaModel, theta: &Array2<f64>, mean: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    Zip::from(theta).and(mean).for_each(|&t, &m| {
        sum += model.entry_mean_nll(t, m);
    });
    sum
}

/// Penalized objective `sum mean_nll + alpha ||L||_* + beta ||S||_1`.
pub fn objective(
    theta: &Array2<f64>,
    l: &Array2<f64>,
    s: &Array2<f64>,
    stack: &MatrixStack,
    config: &SolverConfig,
) -> Result<f64> {
    let model = ThetaModel::new(stack.kind(), stack.link())?;
    Ok(nll_term(&model, theta, stack.mean())
        + config.alpha * nuclear_norm(l)?
        + config.beta * l1_norm(s))
}

pub(crate) fn relative_residual(theta: &Array2<f64>, l: &Array2<f64>, s: &Array2<f64>) -> f64 {
    let mut gap = 0.0;
    let mut norm = 0.0;
    Zip::from(theta).and(l).and(s).for_each(|&t, &a, &b| {
        let d = t - a - b;
        gap += d * d;
        norm += t * t;
    });
    gap.sqrt() / norm.sqrt().max(1.0)
}

fn check_iterates_finite(iteration: usize, mats: &[&Array2<f64>]) -> Result<()> {
    for m in mats {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite iterate at iteration {iteration}"
            )));
        }
    }
    Ok(())
}

/// Fit `(L, S, Theta)` to a stack.
///
/// Each iteration performs, in order: singular value thresholding of
/// `Theta - S + Y/mu` at `alpha/mu`, soft thresholding of `Theta - L + Y/mu`
/// at `beta/mu`, the decoupled per-entry theta updates against the stack
/// mean, and the multiplier step `Y += mu (Theta - L - S)`. Stops once the
/// relative primal residual and the relative `(L, S)` change both drop below
/// `tol`, or at `max_iter`. Deterministic given its inputs, at any thread
/// count.
pub fn fit(stack: &MatrixStack, config: &SolverConfig) -> Result<Decomposition> {
    config.validate(stack.p(), stack.q())?;
    fit_from_mean(stack.mean(), stack.kind(), stack.link(), config)
}

pub(crate) fn fit_from_mean(
    mean: &Array2<f64>,
    kind: DistributionKind,
    link: LinkMode,
    config: &SolverConfig,
) -> Result<Decomposition> {
    let model = ThetaModel::new(kind, link)?;
    let state = init_from_mean(mean, kind, link, config)?;
    let InitState {
        mut l,
        mut s,
        mut y,
        mut theta,
    } = state;
    let mu = config.mu;

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut final_residual = relative_residual(&theta, &l, &s);

    for t in 1..=config.max_iter {
        let l_prev = l.clone();
        let s_prev = s.clone();

        // L step: prox of the nuclear norm.
        let xl = &theta - &s + &y / mu;
        let (l_new, l_sigmas) = svt_with_values(&xl, config.alpha / mu)
            .map_err(|e| Error::Numeric(format!("iteration {t}: {e}")))?;
        l = l_new;

        // S step: prox of the l1 norm.
        let xs = &theta - &l + &y / mu;
        s = soft_threshold(&xs, config.beta / mu)?;

        // Theta step: decoupled per-entry minimizations (cells independent,
        // so parallel execution cannot change the result).
        theta_step(&model, &mut theta, mean, &l, &s, &y, mu)
            .map_err(|e| Error::Numeric(format!("iteration {t}: {e}")))?;

        // Multiplier step.
        Zip::from(&mut y).and(&theta).and(&l).and(&s).for_each(|yv, &t, &a, &b| {
            *yv += mu * (t - a - b);
        });

        check_iterates_finite(t, &[&l, &s, &theta, &y])?;

        final_residual = relative_residual(&theta, &l, &s);
        residual_trace.push(final_residual);
        objective_trace
            .push(nll_term(&model, &theta, mean) + config.alpha * l_sigmas.sum() + config.beta * l1_norm(&s));
        iterations = t;

        let change = iterate_change(&l, &l_prev, &s, &s_prev);
        if final_residual < config.tol && change < config.tol {
            converged = true;
            break;
        }
    }

    Ok(Decomposition {
        kind,
        link,
        l,
        s,
        theta,
        multiplier: y,
        iterations,
        final_residual,
        converged,
        objective_trace,
        residual_trace,
    })
}

/// Relative Frobenius change of the stacked pair `(L, S)`.
fn iterate_change(
    l: &Array2<f64>,
    l_prev: &Array2<f64>,
    s: &Array2<f64>,
    s_prev: &Array2<f64>,
) -> f64 {
    let mut delta = 0.0;
    let mut base = 0.0;
    Zip::from(l).and(l_prev).for_each(|&a, &b| {
        delta += (a - b) * (a - b);
        base += b * b;
    });
    Zip::from(s).and(s_prev).for_each(|&a, &b| {
        delta += (a - b) * (a - b);
        base += b * b;
    });
    delta.sqrt() / base.sqrt().max(1.0)
}

pub(crate) fn theta_step(
    model: &ThetaModel,
    theta: &mut Array2<f64>,
    mean: &Array2<f64>,
    l: &Array2<f64>,
    s: &Array2<f64>,
    y: &Array2<f64>,
    mu: f64,
) -> Result<()> {
    let t = theta.as_slice_mut().expect("theta is standard layout");
    let m = mean.as_slice().expect("mean is standard layout");
    let ls = l.as_slice().expect("l is standard layout");
    let ss = s.as_slice().expect("s is standard layout");
    let ys = y.as_slice().expect("y is standard layout");
    t.par_iter_mut().enumerate().try_for_each(|(i, cell)| {
        *cell = model.update_entry(m[i], ls[i], ss[i], ys[i], mu)?;
        Ok::<(), Error>(())
    })
}
