//! Proximal operators (entrywise soft thresholding, singular value
//! thresholding) and the thin-SVD utility behind them.

use crate::error::{Error, Result};
use faer::Mat;
use ndarray::{Array1, Array2};

/// Singular values below `REL_RANK_TOL * sigma_max` count as zero when
/// reporting rank.
pub const REL_RANK_TOL: f64 = 1e-12;

/// Thin singular value decomposition `X = U diag(s) V^T` with
/// `r = min(p, q)` columns in `U` and `V`.
///
/// Column signs are not normalized; only `U diag(s) V^T` products are
/// guaranteed, which is all the thresholding operators consume.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl ThinSvd {
    /// `U diag(s) V^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let r = self.singular_values.len();
        let mut scaled = self.u.clone();
        for (j, sigma) in self.singular_values.iter().enumerate().take(r) {
            scaled.column_mut(j).mapv_inplace(|x| x * sigma);
        }
        scaled.dot(&self.v.t())
    }

    /// Number of singular values above `REL_RANK_TOL * sigma_max`.
    pub fn rank(&self) -> usize {
        let max = self.singular_values.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > REL_RANK_TOL * max)
            .count()
    }
}

fn check_finite(x: &Array2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix contains non-finite entries".into()));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "threshold must be nonnegative, got {tau}"
        )));
    }
    Ok(())
}

/// Entrywise shrinkage `sgn(x) * max(|x| - tau, 0)`; the proximal map of
/// `tau * ||.||_1`.
pub fn soft_threshold(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    check_tau(tau)?;
    Ok(x.mapv(|v| soft_threshold_scalar(v, tau)))
}

#[inline]
pub(crate) fn soft_threshold_scalar(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Thin SVD with singular values sorted nonincreasing.
pub fn thin_svd(x: &Array2<f64>) -> Result<ThinSvd> {
    check_finite(x)?;
    let (p, q) = x.dim();
    let m = Mat::<f64>::from_fn(p, q, |i, j| x[[i, j]]);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD failed for a {p}x{q} matrix: {e:?}")))?;
    let r = p.min(q);
    let u = svd.U();
    let v = svd.V();
    let s = svd.S();
    Ok(ThinSvd {
        u: Array2::from_shape_fn((p, r), |(i, j)| u[(i, j)]),
        singular_values: Array1::from_iter((0..r).map(|i| s[i])),
        v: Array2::from_shape_fn((q, r), |(i, j)| v[(i, j)]),
    })
}

/// Singular value thresholding `U S_tau(Sigma) V^T`; the proximal map of
/// `tau * ||.||_*`.
pub fn svt(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    Ok(svt_with_values(x, tau)?.0)
}

/// As [`svt`], also returning the thresholded singular values (handy when the
/// caller needs the nuclear norm of the result without a second SVD).
pub fn svt_with_values(x: &Array2<f64>, tau: f64) -> Result<(Array2<f64>, Array1<f64>)> {
    check_tau(tau)?;
    let mut svd = thin_svd(x)?;
    svd.singular_values.mapv_inplace(|s| (s - tau).max(0.0));
    Ok((svd.reconstruct(), svd.singular_values))
}

/// Best rank-`k` approximation (truncated SVD).
pub fn low_rank_approx(x: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    let mut svd = thin_svd(x)?;
    for (i, s) in svd.singular_values.iter_mut().enumerate() {
        if i >= k {
            *s = 0.0;
        }
    }
    Ok(svd.reconstruct())
}

/// Sum of singular values.
pub fn nuclear_norm(x: &Array2<f64>) -> Result<f64> {
    Ok(thin_svd(x)?.singular_values.sum())
}

/// Rank with singular values below `REL_RANK_TOL * sigma_max` treated as zero.
pub fn effective_rank(x: &Array2<f64>) -> Result<usize> {
    Ok(thin_svd(x)?.rank())
}

pub fn frobenius_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l1_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}
