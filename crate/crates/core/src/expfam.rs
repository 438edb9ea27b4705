//! One-parameter exponential family models: negative log-likelihoods,
//! parameter domains, and the per-entry parameter updates that the ADMM
//! solvers call once per cell per iteration.
//!
//! All likelihood values drop the data-only `b(m)` term. It is constant in
//! the parameter, so no minimizer or residual changes; reported objective
//! values are therefore comparable only within a run.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Margin kept between clamped values and finite domain endpoints.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

/// Absolute derivative tolerance for the canonical-link Newton solve.
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_STEPS: usize = 200;

/// Noise distribution governing the entries of an observed stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Poisson,
    Bernoulli,
    Exponential,
    /// Gaussian with known variance `sigma2`.
    Gaussian { sigma2: f64 },
}

impl DistributionKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistributionKind::Poisson => "poisson",
            DistributionKind::Bernoulli => "bernoulli",
            DistributionKind::Exponential => "exponential",
            DistributionKind::Gaussian { .. } => "gaussian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DistributionKind::Gaussian { sigma2 } = self {
            if !(*sigma2 > 0.0 && sigma2.is_finite()) {
                return Err(Error::Config(format!(
                    "gaussian sigma2 must be positive and finite, got {sigma2}"
                )));
            }
        }
        Ok(())
    }

    /// Whether `m` is a valid single observation for this distribution.
    pub fn valid_observation(&self, m: f64) -> bool {
        match self {
            DistributionKind::Poisson => m.is_finite() && m >= 0.0 && m.fract() == 0.0,
            DistributionKind::Bernoulli => m == 0.0 || m == 1.0,
            DistributionKind::Exponential => m.is_finite() && m > 0.0,
            DistributionKind::Gaussian { .. } => m.is_finite(),
        }
    }
}

/// Scale on which the low-rank plus sparse decomposition is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Decompose the mean-scale parameter matrix directly.
    Mean,
    /// Decompose the natural parameter (logit scale); Bernoulli only.
    Canonical,
}

impl LinkMode {
    pub fn name(&self) -> &'static str {
        match self {
            LinkMode::Mean => "mean",
            LinkMode::Canonical => "canonical",
        }
    }
}

/// Open interval the parameter must stay inside, with the clamp margin used
/// when projecting values back in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamDomain {
    pub lower: f64,
    pub upper: f64,
    pub clamp_eps: f64,
}

impl ParamDomain {
    fn new(lower: f64, upper: f64) -> Self {
        ParamDomain {
            lower,
            upper,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }

    /// Domain of the parameter for a distribution under a link choice.
    pub fn for_model(kind: DistributionKind, link: LinkMode) -> Self {
        match (kind, link) {
            (DistributionKind::Bernoulli, LinkMode::Canonical) => {
                ParamDomain::new(f64::NEG_INFINITY, f64::INFINITY)
            }
            (DistributionKind::Poisson, _) | (DistributionKind::Exponential, _) => {
                ParamDomain::new(0.0, f64::INFINITY)
            }
            (DistributionKind::Bernoulli, LinkMode::Mean) => ParamDomain::new(0.0, 1.0),
            (DistributionKind::Gaussian { .. }, _) => {
                ParamDomain::new(f64::NEG_INFINITY, f64::INFINITY)
            }
        }
    }

    /// True when `value` lies strictly inside the open interval.
    pub fn contains(&self, value: f64) -> bool {
        value > self.lower && value < self.upper
    }

    /// Project into `[lower + eps, upper - eps]`, leaving infinite sides alone.
    pub fn clamp(&self, value: f64) -> f64 {
        let mut v = value;
        if self.lower.is_finite() {
            v = v.max(self.lower + self.clamp_eps);
        }
        if self.upper.is_finite() {
            v = v.min(self.upper - self.clamp_eps);
        }
        v
    }
}

/// Project `value` into the clamped parameter domain for `(kind, link)`.
pub fn clamp_to_domain(kind: DistributionKind, link: LinkMode, value: f64) -> f64 {
    ParamDomain::for_model(kind, link).clamp(value)
}

fn check_theta(kind: DistributionKind, theta: f64) -> Result<()> {
    let domain = ParamDomain::for_model(kind, LinkMode::Mean);
    if !theta.is_finite() || !domain.contains(theta) {
        return Err(Error::Domain(format!(
            "parameter {theta} outside the open domain ({}, {}) for {}",
            domain.lower,
            domain.upper,
            kind.name()
        )));
    }
    Ok(())
}

fn check_observation(kind: DistributionKind, m: f64) -> Result<()> {
    if !kind.valid_observation(m) {
        return Err(Error::Domain(format!(
            "observation {m} is not valid for {}",
            kind.name()
        )));
    }
    Ok(())
}

fn check_mean(kind: DistributionKind, mean: f64) -> Result<()> {
    if !mean.is_finite() {
        return Err(Error::Numeric(format!("non-finite sample mean {mean}")));
    }
    let ok = match kind {
        DistributionKind::Poisson => mean >= 0.0,
        DistributionKind::Bernoulli => (0.0..=1.0).contains(&mean),
        DistributionKind::Exponential => mean >= 0.0,
        DistributionKind::Gaussian { .. } => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "sample mean {mean} is not valid for {}",
            kind.name()
        )))
    }
}

/// Negative log density/mass at a single observation, `b(m)` dropped.
pub fn nll(kind: DistributionKind, theta: f64, m: f64) -> Result<f64> {
    kind.validate()?;
    check_theta(kind, theta)?;
    check_observation(kind, m)?;
    Ok(nll_unchecked(kind, theta, m))
}

fn nll_unchecked(kind: DistributionKind, theta: f64, m: f64) -> f64 {
    match kind {
        DistributionKind::Poisson => theta - m * theta.ln(),
        DistributionKind::Bernoulli => -m * theta.ln() - (1.0 - m) * (1.0 - theta).ln(),
        DistributionKind::Exponential => theta * m - theta.ln(),
        DistributionKind::Gaussian { sigma2 } => (0.5 * theta * theta - theta * m) / sigma2,
    }
}

/// Average negative log-likelihood of a sample summarized by its mean.
///
/// For every supported family the sufficient statistic is the observation
/// itself, so the average NLL depends on the data only through the sample
/// mean: this equals `(1/n) sum_i nll(kind, theta, m_i)` exactly once the
/// `b(m)` terms are dropped.
pub fn mean_nll(kind: DistributionKind, theta: f64, sample_mean: f64) -> Result<f64> {
    kind.validate()?;
    check_theta(kind, theta)?;
    check_mean(kind, sample_mean)?;
    Ok(nll_unchecked(kind, theta, sample_mean))
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("mu must be positive, got {mu}")));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input".into()));
    }
    Ok(())
}

/// Per-entry objective: `mean_nll + (mu/2)(theta - l - s + y/mu)^2`.
pub fn zeta(
    kind: DistributionKind,
    theta: f64,
    sample_mean: f64,
    l: f64,
    s: f64,
    y: f64,
    mu: f64,
) -> Result<f64> {
    check_mu(mu)?;
    let d = theta - l - s + y / mu;
    Ok(mean_nll(kind, theta, sample_mean)? + 0.5 * mu * d * d)
}

/// Analytic derivative of [`zeta`] in `theta`.
pub fn zeta_deriv(
    kind: DistributionKind,
    theta: f64,
    sample_mean: f64,
    l: f64,
    s: f64,
    y: f64,
    mu: f64,
) -> Result<f64> {
    kind.validate()?;
    check_mu(mu)?;
    check_theta(kind, theta)?;
    check_mean(kind, sample_mean)?;
    Ok(zeta_deriv_unchecked(kind, theta, sample_mean, l, s, y, mu))
}

fn zeta_deriv_unchecked(
    kind: DistributionKind,
    theta: f64,
    mean: f64,
    l: f64,
    s: f64,
    y: f64,
    mu: f64,
) -> f64 {
    let quad = mu * (theta - l - s) + y;
    match kind {
        DistributionKind::Poisson => 1.0 - mean / theta + quad,
        DistributionKind::Bernoulli => -mean / theta + (1.0 - mean) / (1.0 - theta) + quad,
        DistributionKind::Exponential => mean - 1.0 / theta + quad,
        DistributionKind::Gaussian { sigma2 } => (theta - mean) / sigma2 + quad,
    }
}

fn zeta_second_deriv_unchecked(kind: DistributionKind, theta: f64, mean: f64, mu: f64) -> f64 {
    match kind {
        DistributionKind::Poisson => mean / (theta * theta) + mu,
        DistributionKind::Bernoulli => {
            let r = 1.0 - theta;
            mean / (theta * theta) + (1.0 - mean) / (r * r) + mu
        }
        DistributionKind::Exponential => 1.0 / (theta * theta) + mu,
        DistributionKind::Gaussian { sigma2 } => 1.0 / sigma2 + mu,
    }
}

/// Degenerate sample means (Bernoulli 0/1, Poisson/Exponential 0) make the
/// unclamped minimizer sit on the domain boundary; pull them inside first.
fn clamp_degenerate_mean(kind: DistributionKind, mean: f64) -> f64 {
    match kind {
        DistributionKind::Bernoulli
        | DistributionKind::Poisson
        | DistributionKind::Exponential => clamp_to_domain(kind, LinkMode::Mean, mean),
        DistributionKind::Gaussian { .. } => mean,
    }
}

/// Minimize [`zeta`] over the mean-scale parameter domain in closed form.
///
/// The stationarity condition is polynomial once cleared of denominators:
/// linear for Gaussian, quadratic for Poisson and Exponential, cubic for
/// Bernoulli. All real roots inside the open domain are polished with a few
/// Newton steps on the analytic derivative, zeta is evaluated at each root
/// and at the clamped finite boundaries, and the smallest value wins.
pub fn theta_update_closed_form(
    kind: DistributionKind,
    sample_mean: f64,
    l: f64,
    s: f64,
    y: f64,
    mu: f64,
) -> Result<f64> {
    kind.validate()?;
    check_mu(mu)?;
    check_finite(&[sample_mean, l, s, y])?;
    check_mean(kind, sample_mean)?;

    let mean = clamp_degenerate_mean(kind, sample_mean);
    let c = l + s - y / mu;

    if let DistributionKind::Gaussian { sigma2 } = kind {
        return Ok((mean / sigma2 + mu * (l + s) - y) / (1.0 / sigma2 + mu));
    }

    let roots = match kind {
        // mu*t^2 + (1 - mu*c)*t - mean = 0
        DistributionKind::Poisson => quadratic_roots(mu, 1.0 - mu * c, -mean),
        // mu*t^2 + (mean - mu*c)*t - 1 = 0
        DistributionKind::Exponential => quadratic_roots(mu, mean - mu * c, -1.0),
        // -mu*t^3 + mu*(1 + c)*t^2 + (1 - mu*c)*t - mean = 0
        DistributionKind::Bernoulli => {
            cubic_roots(-mu, mu * (1.0 + c), 1.0 - mu * c, -mean).to_vec()
        }
        DistributionKind::Gaussian { .. } => unreachable!(),
    };

    let domain = ParamDomain::for_model(kind, LinkMode::Mean);
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |theta: f64| {
        if !theta.is_finite() || !domain.contains(theta) {
            return;
        }
        let d = theta - c;
        let value = nll_unchecked(kind, theta, mean) + 0.5 * mu * d * d;
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((theta, value));
        }
    };

    for root in roots {
        consider(polish_root(kind, root, mean, l, s, y, mu, &domain));
    }
    // Clamped boundaries cover the no-interior-root case and ties.
    if domain.lower.is_finite() {
        consider(domain.lower + domain.clamp_eps);
    }
    if domain.upper.is_finite() {
        consider(domain.upper - domain.clamp_eps);
    }

    best.map(|(theta, _)| theta).ok_or_else(|| {
        Error::Numeric(format!(
            "no admissible stationary point for {} update",
            kind.name()
        ))
    })
}

/// A few Newton steps on the analytic derivative; the polynomial root is
/// already in the right basin, this just tightens it to stationarity.
fn polish_root(
    kind: DistributionKind,
    root: f64,
    mean: f64,
    l: f64,
    s: f64,
    y: f64,
    mu: f64,
    domain: &ParamDomain,
) -> f64 {
    let lo = if domain.lower.is_finite() {
        domain.lower + 1e-12
    } else {
        f64::NEG_INFINITY
    };
    let hi = if domain.upper.is_finite() {
        domain.upper - 1e-12
    } else {
        f64::INFINITY
    };
    let mut theta = root.clamp(lo, hi);
    if !domain.contains(theta) {
        return root;
    }
    for _ in 0..3 {
        let g = zeta_deriv_unchecked(kind, theta, mean, l, s, y, mu);
        let h = zeta_second_deriv_unchecked(kind, theta, mean, mu);
        let next = (theta - g / h).clamp(lo, hi);
        if !next.is_finite() {
            break;
        }
        theta = next;
    }
    theta
}

/// Real roots of `a*x^2 + b*x + c = 0` (stable two-branch formula).
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    if b == 0.0 && c == 0.0 {
        return vec![0.0];
    }
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = Vec::with_capacity(2);
    if a != 0.0 {
        roots.push(q / a);
    }
    if q != 0.0 {
        roots.push(c / q);
    }
    roots
}

/// Real roots of `a3*x^3 + a2*x^2 + a1*x + a0 = 0` via the depressed-cubic
/// trigonometric/Cardano formulas, each tightened by one Newton step.
fn cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    debug_assert!(a3 != 0.0);
    // Monic: x^3 + b*x^2 + c*x + d.
    let b = a2 / a3;
    let c = a1 / a3;
    let d = a0 / a3;
    // Depressed: t^3 + p*t + q with x = t - b/3.
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;

    let mut roots = Vec::with_capacity(3);
    let disc = -4.0 * p * p * p - 27.0 * q * q;
    if disc > 0.0 {
        // Three distinct real roots.
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        for k in 0..3 {
            let t = m * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos();
            roots.push(t - shift);
        }
    } else {
        // One real root (Cardano), plus the double root when disc == 0.
        let half_q = q / 2.0;
        let r = (half_q * half_q + p * p * p / 27.0).max(0.0).sqrt();
        let t = (-half_q + r).cbrt() + (-half_q - r).cbrt();
        roots.push(t - shift);
        if disc == 0.0 && p != 0.0 {
            roots.push(-t / 2.0 - shift);
        }
    }
    for x in &mut roots {
        // One Newton step on the cubic itself removes the trig/cbrt rounding.
        let f = ((a3 * *x + a2) * *x + a1) * *x + a0;
        let df = (3.0 * a3 * *x + 2.0 * a2) * *x + a1;
        if df != 0.0 {
            let next = *x - f / df;
            if next.is_finite() {
                *x = next;
            }
        }
    }
    roots
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-entry objective on the natural-parameter (logit) scale; Bernoulli only.
pub fn canonical_zeta(eta: f64, sample_mean: f64, l: f64, s: f64, y: f64, mu: f64) -> f64 {
    let d = eta - l - s + y / mu;
    -sample_mean * eta + softplus(eta) + 0.5 * mu * d * d
}

/// Derivative of [`canonical_zeta`] in `eta`.
pub fn canonical_zeta_deriv(eta: f64, sample_mean: f64, l: f64, s: f64, y: f64, mu: f64) -> f64 {
    sigmoid(eta) - sample_mean + mu * (eta - l - s) + y
}

/// Minimize [`canonical_zeta`] over the real line by safeguarded Newton.
///
/// The derivative is strictly increasing, so the stationary point is unique;
/// Newton steps that leave the current sign-change bracket fall back to
/// bisection.
pub fn theta_update_canonical(sample_mean: f64, l: f64, s: f64, y: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    check_finite(&[sample_mean, l, s, y])?;
    if !(0.0..=1.0).contains(&sample_mean) {
        return Err(Error::Domain(format!(
            "bernoulli sample mean {sample_mean} outside [0, 1]"
        )));
    }

    let c = l + s - y / mu;
    // g(a) <= 1 + mu*(a - c) and g(b) >= -1 + mu*(b - c) bound the root.
    let mut lo = c - 2.0 / mu - 1.0;
    let mut hi = c + 2.0 / mu + 1.0;
    let g = |eta: f64| canonical_zeta_deriv(eta, sample_mean, l, s, y, mu);
    debug_assert!(g(lo) <= 0.0 && g(hi) >= 0.0);

    let mut eta = 0.5 * (lo + hi);
    for _ in 0..NEWTON_MAX_STEPS {
        let grad = g(eta);
        if grad.abs() <= NEWTON_TOL {
            return Ok(eta);
        }
        if grad > 0.0 {
            hi = eta;
        } else {
            lo = eta;
        }
        let sig = sigmoid(eta);
        let hess = sig * (1.0 - sig) + mu;
        let newton = eta - grad / hess;
        eta = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Numeric(
        "canonical parameter update did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const GAUSS1: DistributionKind = DistributionKind::Gaussian { sigma2: 1.0 };

    #[test]
    fn nll_matches_hand_values() {
        assert_abs_diff_eq!(
            nll(DistributionKind::Bernoulli, 0.5, 1.0).unwrap(),
            -(0.5f64.ln()),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            nll(DistributionKind::Exponential, 1.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            nll(DistributionKind::Poisson, 2.0, 3.0).unwrap(),
            2.0 - 3.0 * 2.0f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn poisson_nll_is_log_pmf_up_to_factorial() {
        // pmf(3; 2) = e^-2 * 2^3 / 3!
        let pmf = (-2.0f64).exp() * 8.0 / 6.0;
        let full = -(pmf.ln());
        let got = nll(DistributionKind::Poisson, 2.0, 3.0).unwrap();
        assert_abs_diff_eq!(got + 6.0f64.ln(), full, epsilon = 1e-12);
    }

    #[test]
    fn mean_nll_equals_average_of_pointwise_nll() {
        // Poisson sample with mean 3.
        let sample = [1.0, 2.0, 3.0, 4.0, 5.0];
        let theta = 2.0;
        let avg: f64 = sample
            .iter()
            .map(|&m| nll(DistributionKind::Poisson, theta, m).unwrap())
            .sum::<f64>()
            / sample.len() as f64;
        let direct = mean_nll(DistributionKind::Poisson, theta, 3.0).unwrap();
        assert_abs_diff_eq!(avg, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(direct, 2.0 - 3.0 * 2.0f64.ln(), epsilon = 1e-12);

        // Bernoulli sample {0, 1}.
        let bern: f64 = [0.0, 1.0]
            .iter()
            .map(|&m| nll(DistributionKind::Bernoulli, 0.3, m).unwrap())
            .sum::<f64>()
            / 2.0;
        let expect = -0.5 * 0.3f64.ln() - 0.5 * 0.7f64.ln();
        assert_abs_diff_eq!(bern, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(
            mean_nll(DistributionKind::Bernoulli, 0.3, 0.5).unwrap(),
            expect,
            epsilon = 1e-12
        );

        assert_abs_diff_eq!(mean_nll(GAUSS1, 0.0, 0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zeta_hand_values() {
        assert_abs_diff_eq!(
            zeta(GAUSS1, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap(),
            -0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            zeta(DistributionKind::Exponential, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Quadratic term vanishes at theta = l + s - y/mu.
        let theta = 0.4 + 0.1 - 0.2 / 2.0;
        let z = zeta(DistributionKind::Bernoulli, theta, 0.5, 0.4, 0.1, 0.2, 2.0).unwrap();
        let m = mean_nll(DistributionKind::Bernoulli, theta, 0.5).unwrap();
        assert_abs_diff_eq!(z, m, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_hand_values() {
        assert_abs_diff_eq!(
            theta_update_closed_form(GAUSS1, 1.0, 0.5, 0.5, 0.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            theta_update_closed_form(DistributionKind::Bernoulli, 0.5, 0.25, 0.25, 0.0, 1.0)
                .unwrap(),
            0.5,
            epsilon = 1e-10
        );
        let expect = 0.5 * (1.0 + 13.0f64.sqrt());
        assert_abs_diff_eq!(
            theta_update_closed_form(DistributionKind::Poisson, 3.0, 1.0, 1.0, 0.0, 1.0).unwrap(),
            expect,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            theta_update_closed_form(DistributionKind::Exponential, 1.0, 1.0, 0.0, 0.0, 1.0)
                .unwrap(),
            1.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn closed_form_general_gaussian_variance() {
        // theta* = (mean/s2 + mu*(l+s) - y) / (1/s2 + mu)
        let s2 = 4.0;
        let got = theta_update_closed_form(
            DistributionKind::Gaussian { sigma2: s2 },
            2.0,
            1.0,
            0.5,
            0.25,
            2.0,
        )
        .unwrap();
        let expect = (2.0 / s2 + 2.0 * 1.5 - 0.25) / (1.0 / s2 + 2.0);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_is_stationary() {
        let cases = [
            (DistributionKind::Poisson, 3.0),
            (DistributionKind::Exponential, 0.7),
            (DistributionKind::Bernoulli, 0.42),
        ];
        for (kind, mean) in cases {
            let theta = theta_update_closed_form(kind, mean, 0.3, -0.1, 0.05, 1.7).unwrap();
            let g = zeta_deriv(kind, theta, mean, 0.3, -0.1, 0.05, 1.7).unwrap();
            assert!(
                g.abs() <= 1e-6 * (1.0 + theta.abs()),
                "{}: derivative {g} at {theta}",
                kind.name()
            );
        }
    }

    #[test]
    fn degenerate_means_are_clamped_not_rejected() {
        let t = theta_update_closed_form(DistributionKind::Bernoulli, 0.0, 0.5, 0.0, 0.0, 1.0)
            .unwrap();
        assert!(t > 0.0 && t < 1.0);
        let t = theta_update_closed_form(DistributionKind::Bernoulli, 1.0, 0.5, 0.0, 0.0, 1.0)
            .unwrap();
        assert!(t > 0.0 && t < 1.0);
        let t =
            theta_update_closed_form(DistributionKind::Poisson, 0.0, 0.5, 0.0, 0.0, 1.0).unwrap();
        assert!(t > 0.0);
        let t = theta_update_closed_form(DistributionKind::Exponential, 0.0, 2.0, 0.0, 0.0, 1.0)
            .unwrap();
        assert!(t > 0.0);
    }

    fn bisect_canonical(mean: f64, l: f64, s: f64, y: f64, mu: f64) -> f64 {
        let mut lo = -50.0;
        let mut hi = 50.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if canonical_zeta_deriv(mid, mean, l, s, y, mu) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn canonical_update_matches_bisection() {
        assert_abs_diff_eq!(
            theta_update_canonical(0.5, 0.0, 0.0, 0.0, 1.0).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        let root = bisect_canonical(1.0, 0.0, 0.0, 0.0, 1.0);
        let got = theta_update_canonical(1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(got, root, epsilon = 1e-9);
        // eta -> -eta under mean -> 1 - mean.
        let neg = theta_update_canonical(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(neg, -root, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_survives_extreme_inputs() {
        let kinds = [
            DistributionKind::Poisson,
            DistributionKind::Bernoulli,
            DistributionKind::Exponential,
            GAUSS1,
        ];
        for kind in kinds {
            let domain = ParamDomain::for_model(kind, LinkMode::Mean);
            let means: &[f64] = match kind {
                DistributionKind::Bernoulli => &[0.0, 1e-6, 0.5, 1.0 - 1e-6, 1.0],
                DistributionKind::Poisson => &[0.0, 1e-6, 1.0, 1e4],
                DistributionKind::Exponential => &[0.0, 1e-6, 1.0, 1e4],
                DistributionKind::Gaussian { .. } => &[-1e4, 0.0, 1e4],
            };
            for &mu in &[1e-3, 1.0, 1e3] {
                for &c in &[-100.0, -1.0, 0.0, 1.0, 100.0] {
                    for &mean in means {
                        let theta = theta_update_closed_form(kind, mean, c, 0.0, 0.0, mu)
                            .unwrap_or_else(|e| {
                                panic!("{} mean={mean} c={c} mu={mu}: {e}", kind.name())
                            });
                        assert!(theta.is_finite());
                        assert!(
                            theta >= domain.lower && theta <= domain.upper,
                            "{} returned {theta} outside [{}, {}]",
                            kind.name(),
                            domain.lower,
                            domain.upper
                        );
                    }
                }
            }
        }
        // Canonical solve under the same extremes.
        for &mu in &[1e-3, 1.0, 1e3] {
            for &c in &[-100.0, 0.0, 100.0] {
                for &mean in &[0.0, 0.5, 1.0] {
                    let eta = theta_update_canonical(mean, c, 0.0, 0.0, mu).unwrap();
                    assert!(eta.is_finite());
                    assert!(canonical_zeta_deriv(eta, mean, c, 0.0, 0.0, mu).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(
            clamp_to_domain(DistributionKind::Bernoulli, LinkMode::Mean, 1.2),
            1.0 - 1e-6
        );
        assert_eq!(
            clamp_to_domain(DistributionKind::Poisson, LinkMode::Mean, -0.5),
            1e-6
        );
        assert_eq!(clamp_to_domain(GAUSS1, LinkMode::Mean, 7.0), 7.0);
        assert_eq!(
            clamp_to_domain(DistributionKind::Bernoulli, LinkMode::Canonical, -40.0),
            -40.0
        );
    }

    #[test]
    fn domain_errors() {
        assert!(nll(DistributionKind::Bernoulli, 1.5, 1.0).is_err());
        assert!(nll(DistributionKind::Poisson, 1.0, 2.5).is_err());
        assert!(nll(DistributionKind::Exponential, 1.0, 0.0).is_err());
        assert!(theta_update_closed_form(GAUSS1, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(theta_update_closed_form(GAUSS1, f64::NAN, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(theta_update_canonical(1.2, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(DistributionKind::Gaussian { sigma2: 0.0 }.validate().is_err());
    }
}
