use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn casimir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casimir"))
        .args(args)
        .env_remove("CASIMIR_THREADS")
        .output()
        .expect("spawn casimir")
}

fn ok(args: &[&str]) -> String {
    let out = casimir(args);
    assert!(
        out.status.success(),
        "casimir {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn header(csv: &str) -> Vec<String> {
    csv.lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_dataset(path: &Path, rows: &[(f64, f64, f64)]) {
    let mut s = String::from("d_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n");
    for (d, f, sig) in rows {
        s.push_str(&format!("{d},{f},{sig},50,0.1\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn force_curve_has_requested_rows() {
    let csv = ok(&["force", "--model", "drude", "--d-min", "0.5", "--d-max", "6", "--points", "50"]);
    assert_eq!(header(&csv), ["d_um", "F_udyne"]);
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 50);
    assert!((rows[0][0] - 0.5).abs() < 1e-12 && (rows[49][0] - 6.0).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    for key in ["# casimir ", "# config_sha256: ", "# model: drude"] {
        assert!(csv.contains(key), "missing header {key}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["correct", "--beta", "215", "--emit", "fig1", "-o", p(&a)]);
    let out = Command::new(env!("CARGO_BIN_EXE_casimir"))
        .args(["correct", "--beta", "215", "--emit", "fig1", "-o", p(&b)])
        .env("CASIMIR_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let stdout = ok(&["correct", "--beta", "215", "--emit", "fig1"]);
    assert_eq!(stdout.as_bytes(), fs::read(&a).unwrap());

    let sim = ["simulate", "--delta-rms", "0.05", "--seed", "3", "--trials", "10"];
    assert_eq!(ok(&sim), ok(&sim));
}

#[test]
fn exit_codes() {
    assert_eq!(casimir(&["--help"]).status.code(), Some(0));
    assert_eq!(casimir(&["force", "--bogus"]).status.code(), Some(1));
    assert_eq!(casimir(&["force", "--d-min", "-1"]).status.code(), Some(1));
    assert_eq!(casimir(&["force", "--model", "tabulated"]).status.code(), Some(1));
    assert_eq!(casimir(&["chi2", "--data", "/nonexistent.csv", "--theory", "x.csv"]).status.code(), Some(1));
    let out = casimir(&["force", "--points", "3", "--matsubara-max-terms", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    // PFA breakdown is bad input, not a numerical failure.
    assert_eq!(casimir(&["force", "--radius-cm", "0.00001", "--points", "3"]).status.code(), Some(1));
}

#[test]
fn invalid_rows_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(
        &data,
        "# comment\nd_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n1,2,3,4,0.1\n2,x,3,4,0.1\n",
    )
    .unwrap();
    let out = casimir(&["fit-beta", "--data", p(&data)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn fig1_columns_and_offset() {
    let csv = ok(&["correct", "--model", "drude", "--beta", "215", "--delta-rms", "0.1", "--emit", "fig1"]);
    let h = header(&csv);
    assert_eq!(h.len(), 8);
    assert_eq!(h[0], "d_um");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 55);
    // Far from the plates the shift tends to βδ² plus the small Casimir share.
    let last = &rows[54];
    assert!(last[6] > 2.15 && last[6] < 2.25, "{last:?}");
    for r in &rows {
        assert!((r[5] / 33.7649 - 1.0).abs() < 1e-4);
    }
}

#[test]
fn corrected_curve_and_subtracted_background() {
    let full = ok(&["correct", "--beta", "215", "--points", "5", "--delta-rms", "0.1"]);
    let sub = ok(&["correct", "--beta", "215", "--points", "5", "--delta-rms", "0.1", "--subtract-background"]);
    assert_eq!(
        header(&full),
        ["d_um", "F_udyne", "F_apparent_udyne", "delta_rms_um", "sigma_inflation_udyne"]
    );
    for (a, b) in data_rows(&full).iter().zip(data_rows(&sub)) {
        let fe = 215.0 / a[0];
        assert!((a[1] - b[1] - fe).abs() < 1e-9 * a[1]);
        assert!((a[2] - b[2] - fe).abs() < 1e-9 * a[2]);
        assert_eq!(a[3], 0.1);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"model": "plasma", "points": 4, "d_min_um": 1.0, "d_max_um": 2.0}"#).unwrap();
    let from_cfg = ok(&["--config", p(&cfg), "force"]);
    assert!(from_cfg.contains("# model: plasma"));
    assert_eq!(data_rows(&from_cfg).len(), 4);
    assert!(from_cfg.contains(&format!("# input {} sha256: ", p(&cfg))));
    let flagged = ok(&["--config", p(&cfg), "force", "--model", "drude", "--points", "3"]);
    assert!(flagged.contains("# model: drude"));
    assert_eq!(data_rows(&flagged).len(), 3);

    fs::write(&cfg, r#"{"modle": "plasma"}"#).unwrap();
    assert_eq!(casimir(&["--config", p(&cfg), "force"]).status.code(), Some(1));
}

#[test]
fn chi2_with_dof_override() {
    let dir = tempfile::tempdir().unwrap();
    let theory = dir.path().join("theory.csv");
    let mut t = String::from("# synthetic\nd_um,F_udyne\n");
    let f = |d: f64| 100.0 / (d * d);
    for i in 0..20 {
        let d = 0.5 + 0.5 * i as f64;
        t.push_str(&format!("{d},{}\n", f(d)));
    }
    fs::write(&theory, t).unwrap();
    // Data on theory nodes, so the spline is exact there.
    let resid = [1.0, -0.5, 2.0, 0.0, -1.5, 0.5, 1.0];
    let rows: Vec<(f64, f64, f64)> = resid
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d = 1.0 + i as f64;
            (d, f(d) + r * 0.2, 0.2)
        })
        .collect();
    let data = dir.path().join("data.csv");
    write_dataset(&data, &rows);
    let out = dir.path().join("chi2.json");
    ok(&["chi2", "--data", p(&data), "--theory", p(&theory), "--dof", "6", "-o", p(&out)]);
    let v: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let expect: f64 = resid.iter().map(|r| r * r).sum();
    assert!((v["chi2"].as_f64().unwrap() - expect).abs() < 1e-9 * expect);
    assert_eq!(v["dof"], 6);
    assert!((v["reduced"].as_f64().unwrap() - expect / 6.0).abs() < 1e-9);
    // k = 6: e^{-x/2}(1 + x/2 + x²/8).
    let h = expect / 2.0;
    let p_exact = (-h).exp() * (1.0 + h + h * h / 2.0);
    assert!((v["p_value"].as_f64().unwrap() - p_exact).abs() < 1e-12);
    assert_eq!(v["residuals"].as_array().unwrap().len(), 7);
    assert_eq!(v["theory_column"], "F_udyne");
    assert_eq!(v["provenance"]["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_beta_recovers_background() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let rows: Vec<(f64, f64, f64)> = (0..20).map(|i| 2.5 + 0.5 * i as f64).map(|d| (d, 215.0 / (d - 0.1), 1.0)).collect();
    write_dataset(&data, &rows);
    let v: Value = serde_json::from_str(&ok(&["fit-beta", "--data", p(&data)])).unwrap();
    assert!((v["beta_udyne_um"].as_f64().unwrap() / 215.0 - 1.0).abs() < 1e-8, "{v}");
    assert!((v["d0_um"].as_f64().unwrap() - 0.1).abs() < 1e-8);
    assert_eq!(v["points_used"], 20);
    assert_eq!(v["dof"], 18);
    let fixed: Value = serde_json::from_str(&ok(&["fit-beta", "--data", p(&data), "--fix-d0"])).unwrap();
    assert_eq!(fixed["d0_um"], 0.0);
    assert_eq!(fixed["dof"], 19);
}

#[test]
fn scan_delta_finds_the_generating_fluctuation() {
    let dir = tempfile::tempdir().unwrap();
    let curve = ok(&[
        "correct", "--beta", "215", "--delta-rms", "0.08", "--d-min", "0.7", "--d-max", "1.9", "--points", "7",
        "--subtract-background",
    ]);
    let rows: Vec<(f64, f64, f64)> = data_rows(&curve).iter().map(|r| (r[0], r[2], 0.5)).collect();
    let data = dir.path().join("data.csv");
    write_dataset(&data, &rows);
    let scan = ok(&[
        "scan-delta", "--data", p(&data), "--beta", "215", "--subtract-background", "--delta-min", "0", "--delta-max",
        "0.2", "--delta-steps", "21",
    ]);
    assert_eq!(header(&scan), ["delta_um", "chi2", "reduced", "p"]);
    let rows = data_rows(&scan);
    assert_eq!(rows.len(), 21);
    let best = rows.iter().min_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!((best[0] - 0.08).abs() < 1e-9, "{best:?}");
    assert!(best[1] < 1e-12);
    assert!(scan.contains("# best: delta_um=0.08"));
}

#[test]
fn simulate_reports_verdicts() {
    let v: Value = serde_json::from_str(&ok(&["simulate", "--delta-rms", "0.1", "--trials", "10"])).unwrap();
    assert_eq!(v["n_trials"], 10);
    let t = &v["trials"][0];
    for key in ["seed", "d_um", "delta_rms_um", "mc_mean", "analytic_mean", "mc_sigma", "analytic_sigma", "verdicts"] {
        assert!(t.get(key).is_some(), "missing {key}");
    }
    assert!((t["analytic_mean"].as_f64().unwrap() - 217.15).abs() < 1e-9);
    assert_eq!(v["passes"], 10);

    // δ/d beyond the expansion's range is a failed verdict, not an error.
    let v: Value = serde_json::from_str(&ok(&["simulate", "--delta-rms", "0.2", "--trials", "10"])).unwrap();
    assert_eq!(v["passes"], 0);
    assert_eq!(v["trials"][0]["verdicts"]["expansion_breakdown"], true);

    assert_eq!(casimir(&["simulate", "--trials", "3"]).status.code(), Some(1));
}

#[test]
fn tilt_estimate_readings() {
    let v: Value = serde_json::from_str(&ok(&["tilt-estimate"])).unwrap();
    assert_eq!(v["unattenuated_nm"], 400.0);
    let expect = 400.0 / 20f64.powf(0.25);
    assert!((v["delta_rms_nm"].as_f64().unwrap() - expect).abs() < 1e-9);
    let v: Value = serde_json::from_str(&ok(&["tilt-estimate", "--mode-freq-ratio", &40f64.sqrt().to_string()])).unwrap();
    assert!((v["delta_rms_nm"].as_f64().unwrap() - 159.05).abs() < 0.01);
}

#[test]
fn kk_output_feeds_the_tabulated_model() {
    let dir = tempfile::tempdir().unwrap();
    let (wp, g) = (9.0f64, 0.035f64);
    let mut abs = String::from("omega_ev,eps_imag\n");
    for i in 0..1500 {
        let w = 1e-3 * 1e6f64.powf(i as f64 / 1499.0);
        abs.push_str(&format!("{w},{}\n", wp * wp * g / (w * (w * w + g * g))));
    }
    let abs_path = dir.path().join("abs.csv");
    fs::write(&abs_path, abs).unwrap();
    let eps_path = dir.path().join("eps.csv");
    ok(&["kk", "--absorption", p(&abs_path), "--xi-min", "0.05", "--xi-max", "10", "--points", "60", "-o", p(&eps_path)]);
    let eps = fs::read_to_string(&eps_path).unwrap();
    assert_eq!(header(&eps), ["xi_ev", "eps"]);
    for r in data_rows(&eps) {
        let exact = 1.0 + wp * wp / (r[0] * (r[0] + g));
        assert!((r[1] / exact - 1.0).abs() < 5e-3, "{r:?}");
    }

    let args = ["force", "--d-min", "0.5", "--d-max", "3", "--points", "6"];
    let drude = data_rows(&ok(&args));
    let mut tab_args = args.to_vec();
    tab_args.extend(["--model", "tabulated", "--eps-table", p(&eps_path)]);
    let tab = ok(&tab_args);
    assert!(tab.contains(&format!("# input {} sha256: ", p(&eps_path))));
    for (a, b) in drude.iter().zip(data_rows(&tab)) {
        assert!((b[1] / a[1] - 1.0).abs() < 5e-3, "{a:?} vs {b:?}");
    }
}

#[test]
fn out_path_replaced_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("curve.csv");
    fs::write(&out, "stale").unwrap();
    ok(&["force", "--points", "3", "-o", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# casimir "));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}
