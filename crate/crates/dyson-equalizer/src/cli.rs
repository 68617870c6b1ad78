//! Command-line surface: matrix ingestion, the equalize/rank/denoise/mpfit
//! pipelines, and the seeded simulation presets.
//!
//! Exit codes: 0 success, 2 usage or precondition failures, 3 numerical
//! failures. All stochastic commands require an explicit `--seed`. The
//! `DYSON_EQ_THREADS` environment variable caps internal parallelism.

use crate::denoise::{denoise_equalized, DenoiseMethod};
use crate::equalizer::{equalize, EqualizeResult, EtaPolicy};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{singular_values, DenseMatrix};
use crate::report::Report;
use crate::simulate::{
    gen_instance, mix64, presets, run_convergence_sweep, run_mse_sweep, ConvergenceConfig,
    MseConfig,
};
use crate::spectrum::{esd, estimate_rank, ks_distance, mp_edges, mp_pdf, MpParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "dyeq",
    version,
    about = "Noise equalization, rank estimation, and denoising for heteroskedastic data matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate scaling factors and write the normalized matrix.
    Equalize(EqualizeArgs),
    /// Estimate the signal rank of a matrix after equalization.
    Rank(RankArgs),
    /// Low-rank denoising: equalize, truncate, unscale.
    Denoise(DenoiseArgs),
    /// Fit the empirical spectral distribution against the MP law.
    Mpfit(MpfitArgs),
    /// Run a seeded synthetic experiment preset or config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EtaArgs {
    /// Quantile of the singular values used as the imaginary shift.
    #[arg(long, default_value_t = 0.5, conflicts_with = "eta")]
    pub eta_quantile: f64,
    /// Fixed shift value, bypassing the quantile rule.
    #[arg(long)]
    pub eta: Option<f64>,
}

impl EtaArgs {
    pub fn policy(&self) -> Result<EtaPolicy> {
        match self.eta {
            Some(v) => EtaPolicy::fixed(v),
            None => EtaPolicy::quantile(self.eta_quantile),
        }
    }
    fn describe(&self) -> String {
        match self.eta {
            Some(v) => format!("fixed({v})"),
            None => format!("quantile({})", self.eta_quantile),
        }
    }
}

#[derive(Debug, Args)]
pub struct EqualizeArgs {
    /// Input matrix (headerless dense CSV).
    pub input: PathBuf,
    #[command(flatten)]
    pub eta: EtaArgs,
    /// Drop all-zero rows/columns (recorded in the report) instead of failing.
    #[arg(long)]
    pub drop_empty: bool,
    /// Output prefix; writes <out>_yhat.csv, <out>_x.csv, <out>_y.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub eta: EtaArgs,
    /// Threshold slack in eigenvalue units.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long)]
    pub drop_empty: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub eta: EtaArgs,
    /// Truncation rank: a number, "auto" (threshold rule), or "full".
    #[arg(long, default_value = "auto")]
    pub rank: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional ground-truth matrix; adds the relative MSE to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MpfitArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub eta: EtaArgs,
    /// Treat the input as already normalized; skip equalization.
    #[arg(long)]
    pub already_normalized: bool,
    /// Optional prefix for eigenvalue tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    #[value(name = "fig1-outliers")]
    Fig1Outliers,
    #[value(name = "fig2-lognormal")]
    Fig2Lognormal,
    #[value(name = "fig3-rankone")]
    Fig3Rankone,
    #[value(name = "fig4-bernoulli")]
    Fig4Bernoulli,
    #[value(name = "fig5-ranksweep")]
    Fig5Ranksweep,
    #[value(name = "fig7-mse")]
    Fig7Mse,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named experiment preset.
    #[arg(long, value_enum)]
    pub preset: Option<PresetName>,
    /// JSON config file describing a sweep (alternative to --preset).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Base seed; all randomness derives from it.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the short dimension of instance presets.
    #[arg(long)]
    pub m: Option<usize>,
    /// Override the long dimension of instance presets.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the n-grid of convergence presets (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Override the heteroskedasticity grid of the MSE preset.
    #[arg(long, value_delimiter = ',')]
    pub t_list: Option<Vec<f64>>,
    /// Output prefix for CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sweep description accepted by `simulate --config`.
#[derive(Debug, Deserialize)]
#[serde(tag = "job", rename_all = "snake_case")]
pub enum SimulateJob {
    Convergence(ConvergenceConfig),
    Mse(MseConfig),
}

/// Parses arguments, applies the thread cap, runs, prints the report.
/// Returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("DYSON_EQ_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    }
    match run(cli) {
        Ok(report) => {
            println!("{}", report.to_json());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<Report> {
    match cli.command {
        Command::Equalize(args) => cmd_equalize(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Mpfit(args) => cmd_mpfit(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

/// Removes all-zero rows/columns to a fixpoint, returning original indices.
fn drop_empty(y: &DenseMatrix) -> Result<(DenseMatrix, Vec<usize>, Vec<usize>)> {
    let (m, n) = y.shape();
    let mut keep_rows: Vec<bool> = vec![true; m];
    let mut keep_cols: Vec<bool> = vec![true; n];
    loop {
        let mut changed = false;
        for i in 0..m {
            if keep_rows[i]
                && (0..n).all(|j| !keep_cols[j] || y.get(i, j) == 0.0)
            {
                keep_rows[i] = false;
                changed = true;
            }
        }
        for j in 0..n {
            if keep_cols[j]
                && (0..m).all(|i| !keep_rows[i] || y.get(i, j) == 0.0)
            {
                keep_cols[j] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&i| keep_rows[i]).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| keep_cols[j]).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidInput(
            "matrix is entirely zero after dropping empty rows and columns".into(),
        ));
    }
    let reduced = DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| y.get(rows[i], cols[j]))?;
    let dropped_rows = (0..m).filter(|&i| !keep_rows[i]).collect();
    let dropped_cols = (0..n).filter(|&j| !keep_cols[j]).collect();
    Ok((reduced, dropped_rows, dropped_cols))
}

fn load_input(path: &Path, drop: bool) -> Result<(DenseMatrix, Vec<usize>, Vec<usize>)> {
    let y = io::read_matrix(path)?;
    if drop {
        drop_empty(&y)
    } else {
        Ok((y, Vec::new(), Vec::new()))
    }
}

/// Ascending eigenvalues of `Y Y^T / max_dim` from the singular values.
fn eigs_from_sigma(sigma: &[f64], long_dim: usize) -> Vec<f64> {
    let mut eigs: Vec<f64> = sigma.iter().map(|s| s * s / long_dim as f64).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

fn ks_against_unit_mp(y: &DenseMatrix) -> Result<(f64, f64, MpParams)> {
    let params = MpParams::from_shape(y.rows(), y.cols())?;
    let sigma = singular_values(y)?;
    let eigs = eigs_from_sigma(&sigma, y.rows().max(y.cols()));
    let e = esd(&eigs)?;
    let lambda_max = eigs.last().copied().unwrap_or(0.0);
    Ok((ks_distance(&e, params), lambda_max, params))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn write_report_file(prefix: Option<&Path>, report: &Report) -> Result<()> {
    if let Some(prefix) = prefix {
        std::fs::write(with_suffix(prefix, "_report.json"), report.to_json())?;
    }
    Ok(())
}

fn cmd_equalize(args: EqualizeArgs) -> Result<Report> {
    let (y, dropped_rows, dropped_cols) = load_input(&args.input, args.drop_empty)?;
    let policy = args.eta.policy()?;
    let eq = equalize(&y, policy)?;

    let yhat_path = with_suffix(&args.out, "_yhat.csv");
    let x_path = with_suffix(&args.out, "_x.csv");
    let y_path = with_suffix(&args.out, "_y.csv");
    io::write_matrix(&yhat_path, &eq.y_hat)?;
    io::write_vector(&x_path, &eq.factors.x)?;
    io::write_vector(&y_path, &eq.factors.y)?;

    let (pre_ks, pre_lambda_max, params) = ks_against_unit_mp(&y)?;
    let (post_ks, post_lambda_max, _) = ks_against_unit_mp(&eq.y_hat)?;

    let report = Report::new("equalize")
        .input("path", args.input.display().to_string())
        .input("eta_policy", args.eta.describe())
        .input("drop_empty", args.drop_empty)
        .output("m", y.rows())
        .output("n", y.cols())
        .output("eta", eq.eta)
        .output("denom1", eq.denom1)
        .output("denom2", eq.denom2)
        .output("transposed", eq.transposed)
        .output("dropped_rows", &dropped_rows)
        .output("dropped_cols", &dropped_cols)
        .output("gamma", params.gamma)
        .output("pre_ks", pre_ks)
        .output("post_ks", post_ks)
        .output("pre_lambda_max", pre_lambda_max)
        .output("post_lambda_max", post_lambda_max)
        .output(
            "files",
            json!({
                "y_hat": yhat_path.display().to_string(),
                "x": x_path.display().to_string(),
                "y": y_path.display().to_string(),
            }),
        );
    write_report_file(Some(&args.out), &report)?;
    Ok(report)
}

fn cmd_rank(args: RankArgs) -> Result<Report> {
    let (y, dropped_rows, dropped_cols) = load_input(&args.input, args.drop_empty)?;
    let policy = args.eta.policy()?;
    let eq = equalize(&y, policy)?;
    let rank = estimate_rank(&eq.y_hat, args.epsilon)?;
    let top = rank.exceed_margins.iter().take(rank.r_hat + 5).copied().collect::<Vec<_>>();
    Ok(Report::new("rank")
        .input("path", args.input.display().to_string())
        .input("eta_policy", args.eta.describe())
        .input("epsilon", args.epsilon)
        .output("m", y.rows())
        .output("n", y.cols())
        .output("eta", eq.eta)
        .output("r_hat", rank.r_hat)
        .output("threshold", rank.threshold)
        .output("top_margins", top)
        .output("dropped_rows", &dropped_rows)
        .output("dropped_cols", &dropped_cols))
}

fn cmd_denoise(args: DenoiseArgs) -> Result<Report> {
    let y = io::read_matrix(&args.input)?;
    let policy = args.eta.policy()?;
    let max_rank = y.rows().min(y.cols());
    let rank = match args.rank.as_str() {
        "auto" => None,
        "full" => Some(max_rank),
        other => Some(other.parse::<usize>().map_err(|_| {
            Error::InvalidInput(format!(
                "--rank must be \"auto\", \"full\", or a nonnegative integer, got {other:?}"
            ))
        })?),
    };
    let result = denoise_equalized(&y, policy, rank)?;
    let xbar_path = with_suffix(&args.out, "_xbar.csv");
    io::write_matrix(&xbar_path, &result.x_bar)?;

    let mut report = Report::new("denoise")
        .input("path", args.input.display().to_string())
        .input("eta_policy", args.eta.describe())
        .input("rank", &args.rank)
        .output("m", y.rows())
        .output("n", y.cols())
        .output("r_used", result.r_used)
        .output("method", result.method)
        .output("files", json!({ "x_bar": xbar_path.display().to_string() }));
    if let Some(truth_path) = &args.truth {
        let truth = io::read_matrix(truth_path)?;
        if truth.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: y.shape(),
                got: truth.shape(),
            });
        }
        let num: f64 = result
            .x_bar
            .values()
            .iter()
            .zip(truth.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = truth.values().iter().map(|v| v * v).sum();
        report = report.output("rel_mse", num / den);
    }
    write_report_file(Some(&args.out), &report)?;
    Ok(report)
}

fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<usize>) {
    let edges: Vec<f64> = (0..=bins)
        .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    (edges, counts)
}

fn cmd_mpfit(args: MpfitArgs) -> Result<Report> {
    let y = io::read_matrix(&args.input)?;
    let mut report = Report::new("mpfit")
        .input("path", args.input.display().to_string())
        .input("already_normalized", args.already_normalized)
        .input("eta_policy", args.eta.describe());

    let target = if args.already_normalized {
        y.clone()
    } else {
        let eq = equalize(&y, args.eta.policy()?)?;
        let (pre_ks, pre_lambda_max, _) = ks_against_unit_mp(&y)?;
        report = report
            .output("eta", eq.eta)
            .output("pre_ks", pre_ks)
            .output("pre_lambda_max", pre_lambda_max);
        eq.y_hat
    };

    let params = MpParams::from_shape(target.rows(), target.cols())?;
    let (beta_minus, beta_plus) = mp_edges(params);
    let sigma = singular_values(&target)?;
    let eigs = eigs_from_sigma(&sigma, target.rows().max(target.cols()));
    let e = esd(&eigs)?;
    let ks = ks_distance(&e, params);
    let lambda_max = *eigs.last().unwrap();

    let hist_hi = 1.02 * lambda_max.max(beta_plus);
    let (edges, counts) = histogram(&eigs, 64, 0.0, hist_hi);
    let density: Vec<(f64, f64)> = (0..=256)
        .map(|k| {
            let tau = beta_minus + (beta_plus - beta_minus) * k as f64 / 256.0;
            (tau, mp_pdf(params, tau))
        })
        .collect();

    if let Some(out) = &args.out {
        let rows: Vec<Vec<String>> = eigs.iter().map(|v| vec![io::format_value(*v)]).collect();
        io::write_table(&with_suffix(out, "_eigs.csv"), &["eigenvalue"], &rows)?;
    }

    Ok(report
        .output("m", target.rows())
        .output("n", target.cols())
        .output("gamma", params.gamma)
        .output("ks", ks)
        .output("lambda_max", lambda_max)
        .output("beta_plus", beta_plus)
        .output("edge_gap", lambda_max - beta_plus)
        .output("histogram", json!({ "edges": edges, "counts": counts }))
        .output("mp_density", density))
}

fn cmd_simulate(args: SimulateArgs) -> Result<Report> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let job: SimulateJob = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("config {}: {e}", path.display()),
        })?;
        return match job {
            SimulateJob::Convergence(mut config) => {
                config.base_seed = args.seed;
                convergence_report("config-convergence", config, args.out.as_deref(), args.seed)
            }
            SimulateJob::Mse(mut config) => {
                config.base_seed = args.seed;
                mse_report("config-mse", config, args.out.as_deref(), args.seed)
            }
        };
    }
    let preset = args.preset.ok_or_else(|| {
        Error::InvalidInput(
            "simulate requires --preset (fig1-outliers, fig2-lognormal, fig3-rankone, \
             fig4-bernoulli, fig5-ranksweep, fig7-mse) or --config"
                .into(),
        )
    })?;
    let m = args.m.unwrap_or(presets::DEFAULT_M);
    let n = args.n.unwrap_or(presets::DEFAULT_N);
    if m > n {
        return Err(Error::InvalidInput(format!("preset requires m <= n, got m={m}, n={n}")));
    }
    match preset {
        PresetName::Fig1Outliers => {
            sim_fig1(m, n, args.trials.unwrap_or(10), args.seed, args.out.as_deref())
        }
        PresetName::Fig2Lognormal => {
            sim_fig2(m, n, args.trials.unwrap_or(5), args.seed, args.out.as_deref())
        }
        PresetName::Fig3Rankone => {
            let config = presets::convergence_rank_one(
                args.n_list.unwrap_or_else(|| vec![500, 1000, 2000]),
                args.trials.unwrap_or(10),
                args.seed,
            );
            convergence_report("fig3-rankone", config, args.out.as_deref(), args.seed)
        }
        PresetName::Fig4Bernoulli => {
            let config = presets::convergence_bernoulli(
                args.n_list.unwrap_or_else(|| vec![500, 1000, 2000]),
                args.trials.unwrap_or(10),
                args.seed,
            );
            convergence_report("fig4-bernoulli", config, args.out.as_deref(), args.seed)
        }
        PresetName::Fig5Ranksweep => {
            sim_fig5(m, n, args.trials.unwrap_or(10), args.seed, args.out.as_deref())
        }
        PresetName::Fig7Mse => {
            let config = presets::mse_hetero_sweep(
                m,
                n,
                args.t_list.unwrap_or_else(|| vec![0.0, 1.0, 2.0]),
                args.trials.unwrap_or(10),
                args.seed,
            );
            mse_report("fig7-mse", config, args.out.as_deref(), args.seed)
        }
    }
}

fn spectrum_counts(eq: &EqualizeResult, y: &DenseMatrix) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
    let (m, n) = y.shape();
    let long = m.max(n);
    let params = MpParams::from_shape(m, n)?;
    let (_, beta_plus) = mp_edges(params);
    let pre = eigs_from_sigma(&singular_values(y)?, long);
    let post = eigs_from_sigma(&singular_values(&eq.y_hat)?, long);
    let above_pre = pre.iter().filter(|&&l| l > beta_plus).count();
    let above_post = post.iter().filter(|&&l| l > beta_plus).count();
    Ok((above_pre, above_post, pre, post))
}

fn sim_fig1(m: usize, n: usize, trials: usize, seed: u64, out: Option<&Path>) -> Result<Report> {
    let signal = presets::two_tier_signal(m, n);
    let variance = presets::outlier_variance();
    let mut rows = Vec::new();
    let mut csv = Vec::new();
    for trial in 0..trials {
        let trial_seed = mix64(seed, trial as u64, 101);
        let inst = gen_instance(&signal, &variance, trial_seed)?;
        let eq = equalize(&inst.y, EtaPolicy::default())?;
        let (above_pre, above_post, pre, post) = spectrum_counts(&eq, &inst.y)?;
        rows.push(json!({
            "trial": trial,
            "seed": trial_seed,
            "above_pre": above_pre,
            "above_post": above_post,
        }));
        for k in 0..pre.len() {
            csv.push(vec![
                trial.to_string(),
                k.to_string(),
                io::format_value(pre[pre.len() - 1 - k]),
                io::format_value(post[post.len() - 1 - k]),
            ]);
        }
    }
    if let Some(out) = out {
        io::write_table(
            &with_suffix(out, "_eigs.csv"),
            &["trial", "index", "pre_eigenvalue", "post_eigenvalue"],
            &csv,
        )?;
    }
    let report = Report::new("simulate")
        .with_seed(seed)
        .input("preset", "fig1-outliers")
        .input("m", m)
        .input("n", n)
        .input("trials", trials)
        .output("signal_rank", signal.rank)
        .output("trials", rows);
    write_report_file(out, &report)?;
    Ok(report)
}

fn sim_fig2(m: usize, n: usize, trials: usize, seed: u64, out: Option<&Path>) -> Result<Report> {
    let signal = presets::two_tier_signal(m, n);
    let variance = presets::lognormal_rank10_variance();
    let params = MpParams::from_shape(m, n)?;
    let long = m.max(n);
    let mut rows = Vec::new();
    let mut csv = Vec::new();
    for trial in 0..trials {
        let trial_seed = mix64(seed, trial as u64, 102);
        let inst = gen_instance(&signal, &variance, trial_seed)?;
        let eq = equalize(&inst.y, EtaPolicy::default())?;
        let e = inst.noise();
        let e_hat = e.scale_rows_cols(&eq.factors.x, &eq.factors.y, -0.5)?;
        let pre = eigs_from_sigma(&singular_values(&e)?, long);
        let post = eigs_from_sigma(&singular_values(&e_hat)?, long);
        let pre_ks = ks_distance(&esd(&pre)?, params);
        let post_ks = ks_distance(&esd(&post)?, params);
        let rank = estimate_rank(&eq.y_hat, 0.0)?;
        rows.push(json!({
            "trial": trial,
            "seed": trial_seed,
            "noise_pre_ks": pre_ks,
            "noise_post_ks": post_ks,
            "noise_post_lambda_max": post.last().copied().unwrap_or(0.0),
            "r_hat": rank.r_hat,
        }));
        for k in 0..post.len() {
            csv.push(vec![
                trial.to_string(),
                k.to_string(),
                io::format_value(pre[k]),
                io::format_value(post[k]),
            ]);
        }
    }
    if let Some(out) = out {
        io::write_table(
            &with_suffix(out, "_noise_eigs.csv"),
            &["trial", "index", "pre_eigenvalue", "post_eigenvalue"],
            &csv,
        )?;
    }
    let report = Report::new("simulate")
        .with_seed(seed)
        .input("preset", "fig2-lognormal")
        .input("m", m)
        .input("n", n)
        .input("trials", trials)
        .output("beta_plus", mp_edges(params).1)
        .output("trials", rows);
    write_report_file(out, &report)?;
    Ok(report)
}

fn sim_fig5(m: usize, n: usize, trials: usize, seed: u64, out: Option<&Path>) -> Result<Report> {
    let signal = presets::rank_detection_signal(m, n);
    let null_signal = presets::pure_noise_signal(m, n);
    let variance = presets::lognormal_rank30_variance(2.0);
    let mut rows = Vec::new();
    let mut csv = Vec::new();
    for trial in 0..trials {
        let trial_seed = mix64(seed, trial as u64, 105);
        let inst = gen_instance(&signal, &variance, trial_seed)?;
        let eq = equalize(&inst.y, EtaPolicy::default())?;
        let rank = estimate_rank(&eq.y_hat, 0.0)?;
        let null_seed = mix64(seed, trial as u64, 106);
        let null_inst = gen_instance(&null_signal, &variance, null_seed)?;
        let null_eq = equalize(&null_inst.y, EtaPolicy::default())?;
        let null_rank = estimate_rank(&null_eq.y_hat, 0.0)?;
        rows.push(json!({
            "trial": trial,
            "seed": trial_seed,
            "r_hat_signal": rank.r_hat,
            "r_hat_null": null_rank.r_hat,
        }));
        for (k, margin) in rank.exceed_margins.iter().take(15).enumerate() {
            csv.push(vec![trial.to_string(), k.to_string(), io::format_value(*margin)]);
        }
    }
    if let Some(out) = out {
        io::write_table(
            &with_suffix(out, "_margins.csv"),
            &["trial", "index", "margin"],
            &csv,
        )?;
    }
    let hits = rows
        .iter()
        .filter(|r| r["r_hat_signal"] == json!(signal.rank))
        .count();
    let null_zero = rows.iter().filter(|r| r["r_hat_null"] == json!(0)).count();
    let report = Report::new("simulate")
        .with_seed(seed)
        .input("preset", "fig5-ranksweep")
        .input("m", m)
        .input("n", n)
        .input("trials", trials)
        .output("true_rank", signal.rank)
        .output("exact_recoveries", hits)
        .output("null_zero_count", null_zero)
        .output("trials", rows);
    write_report_file(out, &report)?;
    Ok(report)
}

fn convergence_report(
    name: &str,
    config: ConvergenceConfig,
    out: Option<&Path>,
    seed: u64,
) -> Result<Report> {
    let table = run_convergence_sweep(&config)?;
    if let Some(out) = out {
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.m.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    io::format_value(r.err_x),
                    io::format_value(r.err_y),
                ]
            })
            .collect();
        io::write_table(
            &with_suffix(out, "_errors.csv"),
            &["n", "m", "trial", "seed", "err_x", "err_y"],
            &rows,
        )?;
    }
    let report = Report::new("simulate")
        .with_seed(seed)
        .input("preset", name)
        .input("config", serde_json::to_value(&config).expect("config serializes"))
        .output("medians", table.medians())
        .output("rows", table.rows.len());
    write_report_file(out, &report)?;
    Ok(report)
}

fn mse_report(name: &str, config: MseConfig, out: Option<&Path>, seed: u64) -> Result<Report> {
    let table = run_mse_sweep(&config)?;
    if let Some(out) = out {
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    io::format_value(r.control_value),
                    format!("{:?}", r.method),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    io::format_value(r.rel_mse),
                    r.r_used.to_string(),
                ]
            })
            .collect();
        io::write_table(
            &with_suffix(out, "_mse.csv"),
            &["control_value", "method", "trial", "seed", "rel_mse", "r_used"],
            &rows,
        )?;
    }
    let mut summary = Vec::new();
    let mut values: Vec<f64> = table.rows.iter().map(|r| r.control_value).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    for v in values {
        for method in [
            DenoiseMethod::EqualizedSvt,
            DenoiseMethod::OracleSvt,
            DenoiseMethod::OracleShrinkage,
        ] {
            if let Some(mean) = table.mean_rel_mse(method, v) {
                summary.push(json!({
                    "control_value": v,
                    "method": method,
                    "mean_rel_mse": mean,
                }));
            }
        }
    }
    let report = Report::new("simulate")
        .with_seed(seed)
        .input("preset", name)
        .input("config", serde_json::to_value(&config).expect("config serializes"))
        .output("summary", summary)
        .output("rows", table.rows.len());
    write_report_file(out, &report)?;
    Ok(report)
}
