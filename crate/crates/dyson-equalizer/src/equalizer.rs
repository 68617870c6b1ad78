//! Data-driven noise equalization: spectral-shift selection, resolvent
//! diagonal estimation, scaling-factor estimation, and the normalized matrix.

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, DenseMatrix, SvdFactors};
use serde::Serialize;

/// Policy for the imaginary shift `eta`.
///
/// The default takes the median singular value; any other quantile strictly
/// inside (0, 1) adapts the same way to the global noise scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPolicy(EtaMode);

#[derive(Debug, Clone, Copy, PartialEq)]
enum EtaMode {
    Quantile(f64),
    Fixed(f64),
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy(EtaMode::Quantile(0.5))
    }
}

impl EtaPolicy {
    /// Quantile of the singular values, `0 < q < 1`.
    pub fn quantile(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidInput(format!(
                "quantile must lie strictly inside (0, 1), got {q}"
            )));
        }
        Ok(EtaPolicy(EtaMode::Quantile(q)))
    }

    /// Fixed positive shift.
    pub fn fixed(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "fixed eta must be positive and finite, got {value}"
            )));
        }
        Ok(EtaPolicy(EtaMode::Fixed(value)))
    }

    /// Resolves the shift for a spectrum (descending singular values).
    pub fn eta_for(&self, sigma_desc: &[f64]) -> Result<f64> {
        match self.0 {
            EtaMode::Fixed(v) => Ok(v),
            EtaMode::Quantile(q) => {
                let mut asc: Vec<f64> = sigma_desc.to_vec();
                asc.reverse();
                let eta = quantile_lower_midpoint(&asc, q);
                if eta > 0.0 {
                    Ok(eta)
                } else {
                    Err(Error::DegenerateMatrix(format!(
                        "quantile {q} of the singular values is not positive ({eta})"
                    )))
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self.0 {
            EtaMode::Quantile(q) => format!("quantile({q})"),
            EtaMode::Fixed(v) => format!("fixed({v})"),
        }
    }
}

/// Lower-midpoint quantile on ascending values: at interior integer cut
/// points `q*len` the two adjacent order statistics are averaged, otherwise
/// the next order statistic is taken. Matches the usual median for odd
/// lengths and averages the two middle values for even lengths.
pub fn quantile_lower_midpoint(ascending: &[f64], q: f64) -> f64 {
    let m = ascending.len();
    assert!(m > 0, "quantile of empty slice");
    let h = q * m as f64;
    let k = h.round();
    if (h - k).abs() < 1e-9 && k >= 1.0 && k <= (m - 1) as f64 {
        let k = k as usize;
        0.5 * (ascending[k - 1] + ascending[k])
    } else {
        let idx = h.ceil().max(1.0).min(m as f64) as usize;
        ascending[idx - 1]
    }
}

/// Imaginary part of the data-resolvent diagonal at shift `i eta`, split into
/// the row block `g1` (length m) and column block `g2` (length n).
///
/// Both blocks lie in `(0, 1/eta]`, with equality exactly on all-zero
/// rows/columns.
#[derive(Debug, Clone)]
pub struct ResolventDiagonal {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub eta: f64,
}

/// Convention tag recording how a factor pair's scalar ambiguity was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Estimated from data with the alpha = 1 normalization built in.
    EstimatedAlphaOne,
    /// Sinkhorn output with equal geometric means of the two factors.
    SinkhornGeoMean,
    /// Normalized so both factors have equal inner product with the
    /// rank-one surrogate resolvent solution.
    DysonNormalized,
}

/// A pair of positive row/column scaling factors.
#[derive(Debug, Clone)]
pub struct ScalingFactors {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub convention: Convention,
}

impl ScalingFactors {
    pub fn new(x: Vec<f64>, y: Vec<f64>, convention: Convention) -> Result<Self> {
        for (name, v) in [("x", &x), ("y", &y)] {
            if v.is_empty() {
                return Err(Error::EmptyInput);
            }
            if v.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "scaling factor {name} has a negative or non-finite entry"
                )));
            }
        }
        Ok(Self { x, y, convention })
    }
}

/// Output of [`equalize`].
#[derive(Debug, Clone)]
pub struct EqualizeResult {
    /// Normalized matrix in the input orientation.
    pub y_hat: DenseMatrix,
    /// Estimated factors; `x` matches input rows, `y` matches input columns.
    pub factors: ScalingFactors,
    /// Resolvent diagonal, aligned with the input orientation.
    pub gdiag: ResolventDiagonal,
    pub eta: f64,
    /// `rows - eta * ||g1||_1` in the input orientation.
    pub denom1: f64,
    /// `cols - eta * ||g2||_1` in the input orientation.
    pub denom2: f64,
    /// Whether the input was transposed internally to enforce m <= n.
    pub transposed: bool,
}

/// Resolvent diagonal from the SVD of the (m <= n) data matrix.
///
/// Writing the weight as `1/eta - sigma^2 / (eta (sigma^2 + eta^2))` keeps
/// the all-zero-row case exact: rows supported only on null singular
/// directions get `g = 1/eta` with no rounding.
pub fn resolvent_diagonal(svd: &SvdFactors, eta: f64) -> Result<ResolventDiagonal> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!("eta must be positive and finite, got {eta}")));
    }
    let m = svd.sigma.len();
    let n = svd.v.rows();
    let inv_eta = 1.0 / eta;
    let coeff: Vec<f64> = svd
        .sigma
        .iter()
        .map(|&s| s * s / (eta * (s * s + eta * eta)))
        .collect();

    let weighted_square_sum = |mat: &DenseMatrix| -> Vec<f64> {
        (0..mat.rows())
            .map(|i| {
                let row = mat.row(i);
                let mut acc = 0.0;
                for k in 0..m {
                    acc += coeff[k] * row[k] * row[k];
                }
                inv_eta - acc
            })
            .collect()
    };

    let g1 = weighted_square_sum(&svd.u);
    let g2 = weighted_square_sum(&svd.v);
    debug_assert_eq!(g1.len(), m);
    debug_assert_eq!(g2.len(), n);
    Ok(ResolventDiagonal { g1, g2, eta })
}

/// Scaling factors from the resolvent diagonal (alpha = 1 convention).
///
/// `tol_denom = 1e-12 * max(m, n)` guards the denominators against the
/// numerically-zero-matrix case.
pub fn estimate_factors(gdiag: &ResolventDiagonal, m: usize, n: usize) -> Result<ScalingFactors> {
    if gdiag.g1.len() != m || gdiag.g2.len() != n {
        return Err(Error::InvalidInput(format!(
            "resolvent diagonal has lengths ({}, {}), expected ({m}, {n})",
            gdiag.g1.len(),
            gdiag.g2.len()
        )));
    }
    let eta = gdiag.eta;
    let tol_denom = 1e-12 * m.max(n) as f64;
    let denom1 = m as f64 - eta * gdiag.g1.iter().sum::<f64>();
    let denom2 = n as f64 - eta * gdiag.g2.iter().sum::<f64>();
    if denom1 <= tol_denom || denom2 <= tol_denom {
        return Err(Error::DegenerateMatrix(format!(
            "factor denominators ({denom1:.3e}, {denom2:.3e}) below tolerance {tol_denom:.3e}; \
             the matrix is numerically zero"
        )));
    }
    let scale1 = denom1.sqrt().recip();
    let scale2 = denom2.sqrt().recip();
    let x: Vec<f64> = gdiag.g1.iter().map(|&g| (1.0 / g - eta).max(0.0) * scale1).collect();
    let y: Vec<f64> = gdiag.g2.iter().map(|&g| (1.0 / g - eta).max(0.0) * scale2).collect();
    ScalingFactors::new(x, y, Convention::EstimatedAlphaOne)
}

/// Runs the full equalization: shift selection, resolvent diagonal, factor
/// estimation, and `y_hat = D{x}^{-1/2} . Y . D{y}^{-1/2}`.
///
/// Inputs with more rows than columns are transposed internally and the
/// results transposed back, with `transposed` set.
pub fn equalize(y: &DenseMatrix, policy: EtaPolicy) -> Result<EqualizeResult> {
    let (rows, cols) = y.shape();
    let (zero_rows, zero_cols) = y.zero_rows_cols();
    if !zero_rows.is_empty() || !zero_cols.is_empty() {
        return Err(Error::ZeroRowOrColumn {
            rows: zero_rows,
            cols: zero_cols,
        });
    }

    let transposed = rows > cols;
    let work;
    let input = if transposed {
        work = y.transposed();
        &work
    } else {
        y
    };
    let (m, n) = input.shape();

    let svd = thin_svd(input)?;
    let eta = policy.eta_for(&svd.sigma)?;
    let gdiag = resolvent_diagonal(&svd, eta)?;
    let factors = estimate_factors(&gdiag, m, n)?;
    let denom1 = m as f64 - eta * gdiag.g1.iter().sum::<f64>();
    let denom2 = n as f64 - eta * gdiag.g2.iter().sum::<f64>();
    let y_hat_work = input.scale_rows_cols(&factors.x, &factors.y, -0.5)?;

    if transposed {
        Ok(EqualizeResult {
            y_hat: y_hat_work.transposed(),
            factors: ScalingFactors::new(factors.y, factors.x, Convention::EstimatedAlphaOne)?,
            gdiag: ResolventDiagonal {
                g1: gdiag.g2,
                g2: gdiag.g1,
                eta,
            },
            eta,
            denom1: denom2,
            denom2: denom1,
            transposed,
        })
    } else {
        Ok(EqualizeResult {
            y_hat: y_hat_work,
            factors,
            gdiag,
            eta,
            denom1,
            denom2,
            transposed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn quantile_convention() {
        let odd = [1.0, 2.0, 10.0];
        assert_eq!(quantile_lower_midpoint(&odd, 0.5), 2.0);
        let even = [1.0, 2.0, 4.0, 10.0];
        assert_eq!(quantile_lower_midpoint(&even, 0.5), 3.0);
        assert_eq!(quantile_lower_midpoint(&even, 0.25), 1.5);
        assert_eq!(quantile_lower_midpoint(&even, 0.75), 7.0);
        assert_eq!(quantile_lower_midpoint(&even, 0.1), 1.0);
        assert_eq!(quantile_lower_midpoint(&even, 0.9), 10.0);
    }

    #[test]
    fn eta_policy_validation() {
        assert!(EtaPolicy::quantile(0.0).is_err());
        assert!(EtaPolicy::quantile(1.0).is_err());
        assert!(EtaPolicy::fixed(0.0).is_err());
        assert!(EtaPolicy::fixed(-1.0).is_err());
        assert!(EtaPolicy::quantile(0.5).is_ok());
    }

    #[test]
    fn resolvent_diagonal_scalar() {
        let y = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        let svd = thin_svd(&y).unwrap();
        let g = resolvent_diagonal(&svd, 1.0).unwrap();
        assert!((g.g1[0] - 0.2).abs() < 1e-14);
        assert!((g.g2[0] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn resolvent_diagonal_zero_row_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut y = DenseMatrix::from_fn(4, 6, |_, _| rng.random::<f64>() + 0.5).unwrap();
        for j in 0..6 {
            y.set(2, j, 0.0);
        }
        let svd = thin_svd(&y).unwrap();
        let eta = 0.8;
        let g = resolvent_diagonal(&svd, eta).unwrap();
        assert_eq!(g.g1[2], 1.0 / eta);
        for (i, &gi) in g.g1.iter().enumerate() {
            if i != 2 {
                assert!(gi < 1.0 / eta);
                assert!(gi > 0.0);
            }
        }
    }

    #[test]
    fn factors_scalar_example() {
        let y = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        let svd = thin_svd(&y).unwrap();
        let g = resolvent_diagonal(&svd, 1.0).unwrap();
        let f = estimate_factors(&g, 1, 1).unwrap();
        let expect = 4.0 / 0.8_f64.sqrt();
        assert!((f.x[0] - expect).abs() < 1e-12);
        assert!((f.y[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn factors_zero_matrix_is_degenerate() {
        let y = DenseMatrix::zeros(2, 3).unwrap();
        let svd = thin_svd(&y).unwrap();
        let g = resolvent_diagonal(&svd, 1.0).unwrap();
        assert!(matches!(
            estimate_factors(&g, 2, 3),
            Err(Error::DegenerateMatrix(_))
        ));
    }

    #[test]
    fn equalize_scalar_example() {
        let y = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        let r = equalize(&y, EtaPolicy::fixed(1.0).unwrap()).unwrap();
        assert!((r.y_hat.get(0, 0) - 0.447_213_595_499_958).abs() < 1e-12);
        assert!(!r.transposed);
        assert!(r.denom1 > 0.0 && r.denom2 > 0.0);
    }

    #[test]
    fn equalize_rejects_zero_rows_and_columns() {
        let y = DenseMatrix::new(2, 3, vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        match equalize(&y, EtaPolicy::default()) {
            Err(Error::ZeroRowOrColumn { rows, cols }) => {
                assert_eq!(rows, vec![1]);
                assert_eq!(cols, vec![1]);
            }
            other => panic!("expected ZeroRowOrColumn, got {other:?}"),
        }
    }

    #[test]
    fn equalize_transpose_swaps_factors_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y = DenseMatrix::from_fn(4, 7, |_, _| rng.random::<f64>() + 0.1).unwrap();
        let a = equalize(&y, EtaPolicy::default()).unwrap();
        let b = equalize(&y.transposed(), EtaPolicy::default()).unwrap();
        assert!(b.transposed);
        assert_eq!(a.factors.x, b.factors.y);
        assert_eq!(a.factors.y, b.factors.x);
        assert_eq!(a.eta, b.eta);
        assert_eq!(a.y_hat, b.y_hat.transposed());
    }

    #[test]
    fn equalize_homoskedastic_factors_are_nearly_constant() {
        let (m, n) = (500usize, 1000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scale = (n as f64).sqrt().recip();
        let y = DenseMatrix::from_fn(m, n, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .unwrap();
        let r = equalize(&y, EtaPolicy::default()).unwrap();
        let mean = r.factors.x.iter().sum::<f64>() / m as f64;
        let max_rel = r
            .factors
            .x
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max((v / mean - 1.0).abs()));
        assert!(max_rel < 0.2, "max relative deviation {max_rel}");
    }
}
