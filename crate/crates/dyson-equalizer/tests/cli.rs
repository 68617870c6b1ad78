//! End-to-end tests of the `dyeq` binary: file formats, exit codes, report
//! schema, and determinism.

use dyson_equalizer::io::{read_matrix, write_matrix};
use dyson_equalizer::linalg::DenseMatrix;
use dyson_equalizer::simulate::{gen_instance, presets, SignalSpec, Localization};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn dyeq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyeq"))
}

fn run_ok(cmd: &mut Command) -> Value {
    let out = cmd.output().expect("spawn dyeq");
    assert!(
        out.status.success(),
        "command failed: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is valid JSON")
}

fn run_err(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn dyeq");
    assert!(!out.status.success());
    out
}

#[test]
fn equalize_scalar_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    std::fs::write(&input, "2\n").unwrap();
    let prefix = dir.path().join("out");
    let report = run_ok(dyeq().arg("equalize").arg(&input).arg("--eta").arg("1").arg("--out").arg(&prefix));
    assert_eq!(report["command"], "equalize");
    assert_eq!(report["outputs"]["m"], 1);
    assert!((report["outputs"]["eta"].as_f64().unwrap() - 1.0).abs() < 1e-15);

    let y_hat = read_matrix(&dir.path().join("out_yhat.csv")).unwrap();
    assert!((y_hat.get(0, 0) - 0.447_213_595_499_958).abs() < 1e-12);
    let x = read_matrix(&dir.path().join("out_x.csv")).unwrap();
    assert!((x.get(0, 0) - 4.0 / 0.8f64.sqrt()).abs() < 1e-12);
    assert!(dir.path().join("out_report.json").exists());
}

#[test]
fn equalize_zero_column_exits_2_and_names_index() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    std::fs::write(&input, "1.0,0.0,2.0\n3.0,0.0,4.0\n").unwrap();
    let out = run_err(dyeq().arg("equalize").arg(&input).arg("--out").arg(dir.path().join("o")));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("columns [1]"), "stderr: {stderr}");
}

#[test]
fn equalize_drop_empty_records_indices() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    std::fs::write(&input, "1.0,0.0,2.0\n0.0,0.0,0.0\n3.0,0.0,4.0\n").unwrap();
    let prefix = dir.path().join("out");
    let report = run_ok(
        dyeq()
            .arg("equalize")
            .arg(&input)
            .arg("--drop-empty")
            .arg("--out")
            .arg(&prefix),
    );
    assert_eq!(report["outputs"]["dropped_rows"], serde_json::json!([1]));
    assert_eq!(report["outputs"]["dropped_cols"], serde_json::json!([1]));
    assert_eq!(report["outputs"]["m"], 2);
    assert_eq!(report["outputs"]["n"], 2);
}

#[test]
fn equalize_header_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    std::fs::write(&input, "a,b\n1.0,2.0\n2.5,0.5\n").unwrap();
    let report = run_ok(dyeq().arg("equalize").arg(&input).arg("--out").arg(dir.path().join("o")));
    assert_eq!(report["outputs"]["m"], 2);
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("y.csv");
    std::fs::write(&input, "1.0,2.0\nnot,numbers\n").unwrap();
    let out = run_err(dyeq().arg("rank").arg(&input));
    assert_eq!(out.status.code(), Some(2));
}

/// Writes a simulated spiked instance to CSV and returns the truth matrix.
fn spiked_instance(dir: &Path, m: usize, n: usize, rank: usize, seed: u64) -> DenseMatrix {
    let signal = SignalSpec {
        m,
        n,
        rank,
        singular_values: vec![(50.0 * n as f64).sqrt(); rank],
        localization: Localization::Delocalized,
    };
    let inst = gen_instance(&signal, &presets::rank_one_uniform_variance(), seed).unwrap();
    write_matrix(&dir.join("y.csv"), &inst.y).unwrap();
    inst.x_signal
}

#[test]
fn rank_detects_strong_spikes_and_epsilon_suppresses() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 40, 80, 2, 7);
    let input = dir.path().join("y.csv");
    let report = run_ok(dyeq().arg("rank").arg(&input));
    assert_eq!(report["outputs"]["r_hat"], 2);
    let margins = report["outputs"]["top_margins"].as_array().unwrap();
    assert!(margins.len() <= 7);

    let report = run_ok(dyeq().arg("rank").arg(&input).arg("--epsilon").arg("1000"));
    assert_eq!(report["outputs"]["r_hat"], 0);
}

#[test]
fn denoise_full_rank_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 10, 16, 1, 3);
    let input = dir.path().join("y.csv");
    let prefix = dir.path().join("d");
    let report = run_ok(
        dyeq()
            .arg("denoise")
            .arg(&input)
            .arg("--rank")
            .arg("full")
            .arg("--out")
            .arg(&prefix),
    );
    assert_eq!(report["outputs"]["r_used"], 10);
    let original = read_matrix(&input).unwrap();
    let xbar = read_matrix(&dir.path().join("d_xbar.csv")).unwrap();
    assert!(xbar.max_abs_diff(&original).unwrap() < 1e-10);
}

#[test]
fn denoise_rank_zero_gives_zero_matrix() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 8, 12, 1, 4);
    let prefix = dir.path().join("d");
    run_ok(
        dyeq()
            .arg("denoise")
            .arg(dir.path().join("y.csv"))
            .arg("--rank")
            .arg("0")
            .arg("--out")
            .arg(&prefix),
    );
    let xbar = read_matrix(&dir.path().join("d_xbar.csv")).unwrap();
    assert_eq!(xbar.max_abs(), 0.0);
}

#[test]
fn denoise_with_truth_reports_rel_mse() {
    let dir = tempfile::tempdir().unwrap();
    let x = spiked_instance(dir.path(), 40, 80, 2, 11);
    write_matrix(&dir.path().join("x.csv"), &x).unwrap();
    let report = run_ok(
        dyeq()
            .arg("denoise")
            .arg(dir.path().join("y.csv"))
            .arg("--rank")
            .arg("auto")
            .arg("--truth")
            .arg(dir.path().join("x.csv"))
            .arg("--out")
            .arg(dir.path().join("d")),
    );
    let rel = report["outputs"]["rel_mse"].as_f64().unwrap();
    assert!(rel < 0.2, "relative MSE {rel}");
}

#[test]
fn denoise_bad_rank_arg_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 6, 9, 1, 5);
    let out = run_err(
        dyeq()
            .arg("denoise")
            .arg(dir.path().join("y.csv"))
            .arg("--rank")
            .arg("many")
            .arg("--out")
            .arg(dir.path().join("d")),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mpfit_reports_fit_statistics() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 60, 120, 1, 9);
    let report = run_ok(dyeq().arg("mpfit").arg(dir.path().join("y.csv")));
    let outputs = &report["outputs"];
    assert!(outputs["ks"].as_f64().unwrap() < 0.25);
    assert!(outputs["pre_ks"].as_f64().is_some());
    assert!(outputs["histogram"]["counts"].as_array().unwrap().len() == 64);
    assert!(outputs["mp_density"].as_array().unwrap().len() == 257);
    assert!((outputs["beta_plus"].as_f64().unwrap() - (1.0 + 0.5f64.sqrt()).powi(2)).abs() < 1e-12);
}

#[test]
fn mpfit_already_normalized_skips_equalize() {
    let dir = tempfile::tempdir().unwrap();
    spiked_instance(dir.path(), 30, 60, 1, 13);
    let report = run_ok(
        dyeq()
            .arg("mpfit")
            .arg(dir.path().join("y.csv"))
            .arg("--already-normalized"),
    );
    assert!(report["outputs"]["pre_ks"].is_null());
    assert!(report["outputs"]["ks"].as_f64().is_some());
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |prefix: &Path| {
        run_ok(
            dyeq()
                .arg("simulate")
                .arg("--preset")
                .arg("fig3-rankone")
                .arg("--trials")
                .arg("1")
                .arg("--seed")
                .arg("1")
                .arg("--n-list")
                .arg("60,90")
                .arg("--out")
                .arg(prefix),
        )
    };
    let r1 = run(&dir.path().join("a"));
    let r2 = run(&dir.path().join("b"));
    assert_eq!(r1["outputs"], r2["outputs"]);
    let a = std::fs::read(dir.path().join("a_errors.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b_errors.csv")).unwrap();
    assert_eq!(a, b, "CSV outputs differ between identical runs");
}

#[test]
fn simulate_unknown_preset_exits_2_with_choices() {
    let out = run_err(
        dyeq()
            .arg("simulate")
            .arg("--preset")
            .arg("fig9-nonsense")
            .arg("--seed")
            .arg("1"),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fig1-outliers"), "stderr: {stderr}");
}

#[test]
fn simulate_requires_seed() {
    let out = run_err(dyeq().arg("simulate").arg("--preset").arg("fig3-rankone"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_fig5_small_smoke() {
    let report = run_ok(
        dyeq()
            .arg("simulate")
            .arg("--preset")
            .arg("fig5-ranksweep")
            .arg("--seed")
            .arg("2")
            .arg("--trials")
            .arg("2")
            .arg("--m")
            .arg("80")
            .arg("--n")
            .arg("160"),
    );
    assert_eq!(report["outputs"]["true_rank"], 10);
    assert_eq!(report["outputs"]["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_config_file_runs_mse_job() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("job.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "job": "mse",
            "m": 16,
            "n": 24,
            "rank": 2,
            "inner_rank": 4,
            "trials": 1,
            "base_seed": 0,
            "localization": {"kind": "delocalized"},
            "control": {"kind": "heteroskedasticity", "t_values": [0.0], "signal_coeff": 3.0}
        })
        .to_string(),
    )
    .unwrap();
    let report = run_ok(
        dyeq()
            .arg("simulate")
            .arg("--config")
            .arg(&config)
            .arg("--seed")
            .arg("5"),
    );
    assert_eq!(report["seed"], 5);
    assert_eq!(report["outputs"]["rows"], 3);
}
