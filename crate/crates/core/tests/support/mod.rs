//! Shared helpers for the integration suites: independent minimization
//! oracles and seeded random inputs. Nothing here touches the closed-form
//! update paths it is used to check.

#![allow(dead_code)]

use erpca::expfam::DistributionKind;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Golden-section search for the minimizer of a unimodal function on
/// `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Bisection for the root of an increasing function on `[lo, hi]`.
pub fn bisect_increasing(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central finite difference of `f` at `x`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn random_matrix(rng: &mut ChaCha12Rng, p: usize, q: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, q), |_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
}

/// A random tuple `(mean, l, s, y, mu)` with the mean drawn from the valid
/// interior range for the distribution.
pub fn random_tuple(rng: &mut ChaCha12Rng, kind: DistributionKind) -> (f64, f64, f64, f64, f64) {
    let mean = match kind {
        DistributionKind::Poisson => rng.random::<f64>() * 10.0,
        DistributionKind::Bernoulli => rng.random::<f64>(),
        DistributionKind::Exponential => 0.05 + rng.random::<f64>() * 5.0,
        DistributionKind::Gaussian { .. } => (rng.random::<f64>() - 0.5) * 10.0,
    };
    let l = (rng.random::<f64>() - 0.5) * 4.0;
    let s = (rng.random::<f64>() - 0.5) * 4.0;
    let y = (rng.random::<f64>() - 0.5) * 4.0;
    let mu = 0.1 + rng.random::<f64>() * 5.0;
    (mean, l, s, y, mu)
}

/// Bracket guaranteed to contain the minimizer of the per-entry objective
/// over the (clamped) parameter domain.
pub fn zeta_bracket(kind: DistributionKind, mean: f64, l: f64, s: f64, y: f64, mu: f64) -> (f64, f64) {
    let eps = 1e-6;
    let c = l + s - y / mu;
    match kind {
        DistributionKind::Bernoulli => (eps, 1.0 - eps),
        DistributionKind::Poisson | DistributionKind::Exponential => {
            // Beyond c + (mean + 2)/mu the quadratic term dominates and the
            // derivative is positive, so the minimizer sits below this cap.
            let hi = c.max(0.0) + (mean.abs() + 2.0) / mu + mean.abs() + 10.0;
            (eps, hi)
        }
        DistributionKind::Gaussian { sigma2 } => {
            // The minimizer is a convex combination of the mean and c.
            let w = (1.0 / sigma2) / (1.0 / sigma2 + mu);
            let lo = (w * mean + (1.0 - w) * c).min(mean.min(c)) - 1.0;
            let hi = mean.max(c) + 1.0;
            (lo, hi)
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
