//! Marchenko-Pastur law utilities, empirical spectral distributions,
//! goodness-of-fit, and threshold-based rank estimation.

use crate::error::{Error, Result};
use crate::linalg::{singular_values, DenseMatrix};
use serde::Serialize;

/// Parameters of the MP law for `E E^T / n`-type matrices: the aspect ratio
/// `gamma = m/n` in (0, 1] and the per-entry noise variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpParams {
    pub gamma: f64,
    pub sigma2: f64,
}

impl MpParams {
    pub fn new(gamma: f64, sigma2: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        Ok(Self { gamma, sigma2 })
    }

    /// Unit-variance law for an `m x n` matrix (`gamma = min/max`).
    pub fn from_shape(m: usize, n: usize) -> Result<Self> {
        let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
        Self::new(lo as f64 / hi as f64, 1.0)
    }
}

/// Support edges `beta_minus <= beta_plus` of the MP density,
/// `sigma2 * (1 -+ sqrt(gamma))^2`.
pub fn mp_edges(p: MpParams) -> (f64, f64) {
    let r = p.gamma.sqrt();
    (p.sigma2 * (1.0 - r) * (1.0 - r), p.sigma2 * (1.0 + r) * (1.0 + r))
}

/// MP density at `tau` (zero outside the support).
pub fn mp_pdf(p: MpParams, tau: f64) -> f64 {
    let (bm, bp) = mp_edges(p);
    if tau <= bm || tau >= bp {
        return 0.0;
    }
    ((bp - tau) * (tau - bm)).sqrt() / (2.0 * std::f64::consts::PI * p.sigma2 * p.gamma * tau)
}

/// MP cumulative distribution, by adaptive quadrature of the density with
/// absolute tolerance 1e-8.
///
/// The substitution `tau = beta_- + (beta_+ - beta_-)(1 - cos t)/2` removes
/// the inverse-square-root edge singularities, so plain adaptive Simpson
/// converges quickly even at `gamma = 1` where the lower edge touches zero.
pub fn mp_cdf(p: MpParams, tau: f64) -> f64 {
    let (bm, bp) = mp_edges(p);
    if tau <= bm {
        return 0.0;
    }
    if tau >= bp {
        return 1.0;
    }
    let half = 0.5 * (bp - bm);
    let scale = 1.0 / (2.0 * std::f64::consts::PI * p.sigma2 * p.gamma);
    let integrand = |t: f64| -> f64 {
        let s = t.sin();
        let tau_t = bm + half * (1.0 - t.cos());
        if tau_t <= 0.0 {
            // removable 0/0 at the lower edge when beta_- = 0
            return 2.0 * half * scale;
        }
        half * half * s * s * scale / tau_t
    };
    let t_end = (1.0 - (tau - bm) / half).clamp(-1.0, 1.0).acos();
    adaptive_simpson(&integrand, 0.0, t_end, 1e-8).clamp(0.0, 1.0)
}

/// Inverse of [`mp_cdf`] by bisection; `prob` is clamped to [0, 1].
pub fn mp_quantile(p: MpParams, prob: f64) -> f64 {
    let (bm, bp) = mp_edges(p);
    let prob = prob.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (bm, bp);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mp_cdf(p, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 48)
}

/// Empirical spectral distribution: eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct Esd {
    eigenvalues: Vec<f64>,
}

impl Esd {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Step CDF `F(tau) = #{lambda_i <= tau} / m`.
    pub fn cdf(&self, tau: f64) -> f64 {
        let k = self.eigenvalues.partition_point(|&l| l <= tau);
        k as f64 / self.eigenvalues.len() as f64
    }
}

/// Builds an ESD from a list of eigenvalues, sorting ascending. Tiny negative
/// values from symmetric eigensolvers are clamped to zero.
pub fn esd(eigs: &[f64]) -> Result<Esd> {
    if eigs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = eigs.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut eigenvalues = Vec::with_capacity(eigs.len());
    for &l in eigs {
        if !l.is_finite() {
            return Err(Error::InvalidInput("non-finite eigenvalue".into()));
        }
        if l < -1e-10 * max.max(1.0) {
            return Err(Error::InvalidInput(format!("negative eigenvalue {l}")));
        }
        eigenvalues.push(l.max(0.0));
    }
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Esd { eigenvalues })
}

/// Kolmogorov-Smirnov distance between an ESD and the MP law, evaluated on
/// the eigenvalues plus 512 uniform points across the MP support. A finite
/// grid understates the true supremum by at most the grid modulus; tolerance
/// budgets in callers account for that.
pub fn ks_distance(e: &Esd, p: MpParams) -> f64 {
    let (bm, bp) = mp_edges(p);
    let mut sup: f64 = 0.0;
    for &l in e.eigenvalues() {
        sup = sup.max((e.cdf(l) - mp_cdf(p, l)).abs());
    }
    for k in 0..512 {
        let tau = bm + (bp - bm) * k as f64 / 511.0;
        sup = sup.max((e.cdf(tau) - mp_cdf(p, tau)).abs());
    }
    sup
}

/// Rank estimate from the singular-value threshold rule.
#[derive(Debug, Clone, Serialize)]
pub struct RankEstimate {
    pub r_hat: usize,
    /// Threshold in singular-value units.
    pub threshold: f64,
    /// `sigma_i - threshold`, descending in `sigma_i`.
    pub exceed_margins: Vec<f64>,
    pub epsilon: f64,
}

/// Counts singular values strictly above `sqrt(m) + sqrt(n)` (or, with
/// `epsilon > 0`, above the eigenvalue threshold `(1 + sqrt(m/n))^2 + epsilon`
/// converted to singular-value units).
pub fn estimate_rank(y_hat: &DenseMatrix, epsilon: f64) -> Result<RankEstimate> {
    let sigma = singular_values(y_hat)?;
    rank_from_singular_values(&sigma, y_hat.rows(), y_hat.cols(), epsilon)
}

/// Same rule applied to a precomputed descending spectrum of an `m x n`
/// matrix; lets pipelines that already hold an SVD avoid recomputing it.
pub fn rank_from_singular_values(
    sigma: &[f64],
    m: usize,
    n: usize,
    epsilon: f64,
) -> Result<RankEstimate> {
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "epsilon must be nonnegative and finite, got {epsilon}"
        )));
    }
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    let edge = {
        let r = (lo as f64 / hi as f64).sqrt();
        (1.0 + r) * (1.0 + r) + epsilon
    };
    let threshold = (hi as f64 * edge).sqrt();
    let r_hat = sigma.iter().filter(|&&s| s > threshold).count();
    let exceed_margins = sigma.iter().map(|s| s - threshold).collect();
    Ok(RankEstimate {
        r_hat,
        threshold,
        exceed_margins,
        epsilon,
    })
}

/// Spectral-SNR gain factor
/// `tau = mean(x) mean(1/x) mean(y) mean(1/y)`; always >= 1, with equality
/// exactly when both factors are constant.
pub fn snr_gain_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    for v in [x, y] {
        if v.is_empty() {
            return Err(Error::EmptyInput);
        }
        if v.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput("factors must be strictly positive".into()));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_inv = |v: &[f64]| v.iter().map(|e| 1.0 / e).sum::<f64>() / v.len() as f64;
    Ok(mean(x) * mean_inv(x) * mean(y) * mean_inv(y))
}
