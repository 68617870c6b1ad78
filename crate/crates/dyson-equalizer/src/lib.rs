//! Data-driven equalization of heteroskedastic noise in low-rank matrix
//! models.
//!
//! The core pipeline estimates row and column noise scaling factors directly
//! from the imaginary part of the data resolvent's diagonal, normalizes the
//! matrix so the average noise variance in every row and column is one, and
//! then exploits the resulting Marchenko-Pastur spectral behavior for rank
//! estimation and weighted low-rank denoising.
//!
//! Module map:
//! - [`linalg`]: dense matrix container, thin SVD, complex shifted solves.
//! - [`equalizer`]: the estimation pipeline (shift selection, resolvent
//!   diagonal, factors, normalized matrix).
//! - [`dyson`]: verification oracles (Dyson-equation solvers on the
//!   imaginary axis, Sinkhorn scaling, naive resolvent, incoherence
//!   diagnostics).
//! - [`spectrum`]: Marchenko-Pastur law, empirical spectral distributions,
//!   rank estimation.
//! - [`denoise`]: truncation after equalization plus oracle baselines.
//! - [`simulate`]: seeded generators and experiment sweep runners.
//! - [`io`] / [`report`] / [`cli`]: CSV interchange, machine-readable run
//!   reports, and the command-line surface.

pub mod cli;
pub mod denoise;
pub mod dyson;
pub mod equalizer;
pub mod error;
pub mod io;
pub mod linalg;
pub mod report;
pub mod simulate;
pub mod spectrum;

pub use denoise::{
    denoise_equalized, oracle_shrinkage, oracle_svt, raw_svt, truncate_svd, weighted_loss,
    DenoiseMethod, DenoiseResult,
};
pub use dyson::{
    factors_from_g, incoherence_diagnostics, naive_resolvent_diagonal, normalize_factor_pair,
    sinkhorn, solve_dyson, solve_dyson_rank_one, DoublyRegularScaling, DysonSolution,
    IncoherenceDiagnostics, VarianceMatrix,
};
pub use equalizer::{
    equalize, estimate_factors, resolvent_diagonal, Convention, EqualizeResult, EtaPolicy,
    ResolventDiagonal, ScalingFactors,
};
pub use error::{Error, Result};
pub use linalg::{complex_shift_solve, singular_values, thin_svd, DenseMatrix, SvdFactors};
pub use spectrum::{
    esd, estimate_rank, ks_distance, mp_cdf, mp_edges, mp_pdf, mp_quantile, snr_gain_tau, Esd,
    MpParams, RankEstimate,
};
