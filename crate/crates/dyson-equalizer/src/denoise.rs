//! Low-rank signal recovery: spectral truncation after equalization, the
//! oracle thresholding/shrinkage baselines it is compared against, and the
//! weighted loss underlying the maximum-likelihood interpretation.

use crate::equalizer::{equalize, EtaPolicy};
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, DenseMatrix, SvdFactors};
use crate::spectrum::rank_from_singular_values;
use crate::dyson::VarianceMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMethod {
    EqualizedSvt,
    RawSvt,
    OracleSvt,
    OracleShrinkage,
}

/// A rank-limited signal estimate.
#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub x_bar: DenseMatrix,
    pub r_used: usize,
    pub method: DenoiseMethod,
}

/// SVD of `a` in whichever orientation has `rows <= cols`; the flag records
/// whether the factors describe the transpose.
fn oriented_svd(a: &DenseMatrix) -> Result<(SvdFactors, bool)> {
    if a.rows() <= a.cols() {
        Ok((thin_svd(a)?, false))
    } else {
        Ok((thin_svd(&a.transposed())?, true))
    }
}

fn truncate_from_factors(f: &SvdFactors, r: usize) -> Result<DenseMatrix> {
    let u = f.u.to_na();
    let v = f.v.to_na();
    let mut ur = u.columns(0, r).into_owned();
    for k in 0..r {
        ur.column_mut(k).scale_mut(f.sigma[k]);
    }
    let vr = v.columns(0, r).into_owned();
    DenseMatrix::from_na(&(ur * vr.transpose()))
}

/// Best rank-`r` approximation in Frobenius norm. `r = min(m, n)` returns the
/// input unchanged and `r = 0` the zero matrix, both exactly.
pub fn truncate_svd(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let max = a.rows().min(a.cols());
    if r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    if r == 0 {
        return DenseMatrix::zeros(a.rows(), a.cols());
    }
    if r == max {
        return Ok(a.clone());
    }
    let (f, transposed) = oriented_svd(a)?;
    let t = truncate_from_factors(&f, r)?;
    Ok(if transposed { t.transposed() } else { t })
}

/// Plain truncation at a caller-chosen rank, tagged as the unnormalized
/// baseline.
pub fn raw_svt(y: &DenseMatrix, r: usize) -> Result<DenoiseResult> {
    Ok(DenoiseResult {
        x_bar: truncate_svd(y, r)?,
        r_used: r,
        method: DenoiseMethod::RawSvt,
    })
}

/// Equalize, truncate the normalized matrix at the given rank (or at the
/// threshold-estimated rank when `rank` is `None`), then unscale:
/// `x_bar = D{x}^{1/2} T_r(y_hat) D{y}^{1/2}`.
pub fn denoise_equalized(
    y: &DenseMatrix,
    policy: EtaPolicy,
    rank: Option<usize>,
) -> Result<DenoiseResult> {
    let max = y.rows().min(y.cols());
    if let Some(r) = rank {
        if r > max {
            return Err(Error::RankOutOfRange { rank: r, max });
        }
    }
    let eq = equalize(y, policy)?;
    let (f, transposed) = oriented_svd(&eq.y_hat)?;
    let r_used = match rank {
        Some(r) => r,
        None => rank_from_singular_values(&f.sigma, y.rows(), y.cols(), 0.0)?.r_hat,
    };
    let t_hat = if r_used == max {
        eq.y_hat.clone()
    } else if r_used == 0 {
        DenseMatrix::zeros(y.rows(), y.cols())?
    } else {
        let t = truncate_from_factors(&f, r_used)?;
        if transposed {
            t.transposed()
        } else {
            t
        }
    };
    let x_bar = t_hat.scale_rows_cols(&eq.factors.x, &eq.factors.y, 0.5)?;
    Ok(DenoiseResult {
        x_bar,
        r_used,
        method: DenoiseMethod::EqualizedSvt,
    })
}

/// Projection coefficients `c_k = u_k^T X v_k` of the truth onto the
/// singular pairs of the data.
fn projection_coefficients(f: &SvdFactors, x_true: &DenseMatrix) -> Vec<f64> {
    let xv = x_true.to_na() * f.v.to_na();
    let u = f.u.to_na();
    (0..f.sigma.len())
        .map(|k| u.column(k).dot(&xv.column(k)))
        .collect()
}

/// Oracle singular value thresholding: truncates `y` at the rank that
/// minimizes the Frobenius error against the provided truth.
///
/// Uses the expansion `||T_r(Y) - X||_F^2 = ||X||_F^2 +
/// sum_{k<=r} (sigma_k^2 - 2 sigma_k c_k)` so the scan over all ranks costs
/// one SVD and one projection.
pub fn oracle_svt(y: &DenseMatrix, x_true: &DenseMatrix) -> Result<DenoiseResult> {
    if y.shape() != x_true.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            got: x_true.shape(),
        });
    }
    if y.rows() > y.cols() {
        let r = oracle_svt(&y.transposed(), &x_true.transposed())?;
        return Ok(DenoiseResult {
            x_bar: r.x_bar.transposed(),
            ..r
        });
    }
    let f = thin_svd(y)?;
    let c = projection_coefficients(&f, x_true);
    let mut best_r = 0usize;
    let mut best = 0.0_f64; // error^2 minus the constant ||X||_F^2
    let mut acc = 0.0_f64;
    for k in 0..f.sigma.len() {
        acc += f.sigma[k] * f.sigma[k] - 2.0 * f.sigma[k] * c[k];
        if acc < best {
            best = acc;
            best_r = k + 1;
        }
    }
    Ok(DenoiseResult {
        x_bar: truncate_svd(y, best_r)?,
        r_used: best_r,
        method: DenoiseMethod::OracleSvt,
    })
}

/// Oracle singular value shrinkage at rank `r`: per-component least-squares
/// coefficients `theta_k = max(0, u_k^T X v_k)` on the singular pairs of `y`.
pub fn oracle_shrinkage(y: &DenseMatrix, x_true: &DenseMatrix, r: usize) -> Result<DenoiseResult> {
    if y.shape() != x_true.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            got: x_true.shape(),
        });
    }
    let max = y.rows().min(y.cols());
    if r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    if y.rows() > y.cols() {
        let res = oracle_shrinkage(&y.transposed(), &x_true.transposed(), r)?;
        return Ok(DenoiseResult {
            x_bar: res.x_bar.transposed(),
            ..res
        });
    }
    let f = thin_svd(y)?;
    let c = projection_coefficients(&f, x_true);
    let u = f.u.to_na();
    let v = f.v.to_na();
    let mut acc = nalgebra::DMatrix::<f64>::zeros(y.rows(), y.cols());
    for k in 0..r {
        let theta = c[k].max(0.0);
        if theta > 0.0 {
            acc += theta * u.column(k) * v.column(k).transpose();
        }
    }
    Ok(DenoiseResult {
        x_bar: DenseMatrix::from_na(&acc)?,
        r_used: r,
        method: DenoiseMethod::OracleShrinkage,
    })
}

/// Variance-weighted squared error `sum_ij (theta_ij - y_ij)^2 / s_ij`.
pub fn weighted_loss(theta: &DenseMatrix, y: &DenseMatrix, s: &VarianceMatrix) -> Result<f64> {
    if theta.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            got: theta.shape(),
        });
    }
    if s.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            got: s.shape(),
        });
    }
    let sv = s.matrix().values();
    Ok(theta
        .values()
        .iter()
        .zip(y.values())
        .zip(sv)
        .map(|((t, yv), svv)| (t - yv) * (t - yv) / svv)
        .sum())
}
