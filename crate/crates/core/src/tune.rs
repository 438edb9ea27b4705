//! Hyperparameter search driven by a rank cap on the background and a
//! sparsity cap on the anomalies: refit, then push the corresponding penalty
//! up by `eta * sqrt(round)` while a cap is violated.

use crate::error::{Error, Result};
use crate::prox::effective_rank;
use crate::solver::{default_config, fit, Decomposition, SolverConfig};
use crate::stack::MatrixStack;
use ndarray::Array2;

pub const DEFAULT_MAX_ROUNDS: usize = 20;
pub const DEFAULT_ETA_ALPHA: f64 = 0.5;

/// Targets and step sizes for the search. Step sizes left as `None` resolve
/// to `eta_alpha = 0.5` and `eta_beta = 0.25 / sqrt(max(p, q))` (a quarter of
/// the default `beta`, so the sparsity penalty moves on its own scale).
#[derive(Clone, Copy, Debug)]
pub struct TuneSpec {
    /// Accept once `rank(L) <= rank_cap` ...
    pub rank_cap: usize,
    /// ... and the fraction of non-zero entries of `S` is `< sparsity_cap`.
    pub sparsity_cap: f64,
    pub eta_alpha: Option<f64>,
    pub eta_beta: Option<f64>,
    pub max_rounds: usize,
}

impl TuneSpec {
    pub fn new(rank_cap: usize, sparsity_cap: f64) -> Self {
        TuneSpec {
            rank_cap,
            sparsity_cap,
            eta_alpha: None,
            eta_beta: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.rank_cap == 0 || self.rank_cap > p.min(q) {
            return Err(Error::Config(format!(
                "rank cap {} outside 1..={}",
                self.rank_cap,
                p.min(q)
            )));
        }
        if !(self.sparsity_cap > 0.0 && self.sparsity_cap < 1.0) {
            return Err(Error::Config(format!(
                "sparsity cap {} outside (0, 1)",
                self.sparsity_cap
            )));
        }
        for (name, v) in [("eta_alpha", self.eta_alpha), ("eta_beta", self.eta_beta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of the search: the accepted configuration and fit, plus how the
/// loop ended.
#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub config: SolverConfig,
    pub decomposition: Decomposition,
    /// Adjustment rounds performed (0 when the first fit already passed).
    pub rounds: usize,
    /// Both caps hold for the returned fit.
    pub satisfied: bool,
    pub rank_l: usize,
    pub pct_nz_s: f64,
    /// Penalty values after each fit, first entry the starting point.
    pub alpha_trace: Vec<f64>,
    pub beta_trace: Vec<f64>,
}

/// Fraction of entries that are exactly non-zero (soft thresholding produces
/// exact zeros, so no tolerance is involved).
pub fn pct_nonzero(s: &Array2<f64>) -> f64 {
    let nz = s.iter().filter(|&&v| v != 0.0).count();
    nz as f64 / s.len() as f64
}

/// Search for penalties meeting the caps, starting from the defaults.
///
/// Each round refits, then raises `alpha` by `eta_alpha * sqrt(round)` if the
/// rank cap is violated and `beta` by `eta_beta * sqrt(round)` if the
/// sparsity cap is violated (both may move in the same round). Stops when
/// both caps hold, when neither penalty changed in a round, or after
/// `max_rounds` rounds.
pub fn tune(stack: &MatrixStack, spec: &TuneSpec) -> Result<TuneOutcome> {
    spec.validate(stack.p(), stack.q())?;
    let eta_alpha = spec.eta_alpha.unwrap_or(DEFAULT_ETA_ALPHA);
    let eta_beta = spec
        .eta_beta
        .unwrap_or(0.25 / (stack.p().max(stack.q()) as f64).sqrt());

    let mut config = default_config(stack);
    let mut alpha_trace = vec![config.alpha];
    let mut beta_trace = vec![config.beta];
    let mut dec = fit(stack, &config)?;
    let mut rank_l = rank_of(&dec)?;
    let mut pct = pct_nonzero(&dec.s);
    let mut rounds = 0;
    let mut satisfied = rank_l <= spec.rank_cap && pct < spec.sparsity_cap;

    for round in 1..=spec.max_rounds {
        if satisfied {
            break;
        }
        let mut changed = false;
        if rank_l > spec.rank_cap {
            config.alpha += eta_alpha * (round as f64).sqrt();
            changed = true;
        }
        if pct > spec.sparsity_cap {
            config.beta += eta_beta * (round as f64).sqrt();
            changed = true;
        }
        if !changed {
            // Caps sit exactly on their boundaries: no move is possible.
            break;
        }
        dec = fit(stack, &config)?;
        rank_l = rank_of(&dec)?;
        pct = pct_nonzero(&dec.s);
        rounds = round;
        alpha_trace.push(config.alpha);
        beta_trace.push(config.beta);
        satisfied = rank_l <= spec.rank_cap && pct < spec.sparsity_cap;
    }

    Ok(TuneOutcome {
        config,
        decomposition: dec,
        rounds,
        satisfied,
        rank_l,
        pct_nz_s: pct,
        alpha_trace,
        beta_trace,
    })
}

fn rank_of(dec: &Decomposition) -> Result<usize> {
    effective_rank(&dec.l)
}
