use std::path::{Path, PathBuf};

use noisecal::analysis::SpectralResult;
use noisecal::cli::run;
use noisecal::io::{read_curves_file, read_json_file};
use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn noisecal(args: &[&str]) -> i32 {
    run(std::iter::once("noisecal").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_temperature_scenario_writes_two_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    assert_eq!(noisecal(&["simulate", "--config", s(&scenarios().join("two_temperatures.json")), "--out", s(&out)]), 0);
    let cold = read_curves_file(&out.join("curves_0.csv")).unwrap();
    let warm = read_curves_file(&out.join("curves_1.csv")).unwrap();
    assert_eq!(cold[0].len(), 41);
    // rounding at low bias only for the warm junction
    assert!(warm[0].outputs[20] > cold[0].outputs[20]);
    let truth: Value = read_json_file(&out.join("ground_truth.json")).unwrap();
    assert_eq!(truth["ground_truth"][0]["g_sys"], 1e9);
    assert_eq!(truth["curves"][1]["source"]["electron_temperature"], 0.1);
}

#[test]
fn simulate_then_fit_recovers_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    noisecal(&["simulate", "--config", s(&scenarios().join("two_temperatures.json")), "--out", s(&sim)]);
    let code = noisecal(&["fit", "--input", s(&sim.join("curves_1.csv")), "--model", "single_input", "--out", s(&fit)]);
    assert_eq!(code, 0);
    let spectrum: SpectralResult = read_json_file(&fit.join("spectrum.json")).unwrap();
    let e = spectrum.bins[0].estimate.as_ref().unwrap();
    assert!((e.g_sys / 1e9 - 1.0).abs() < 1e-6);
    assert!((e.n_sys - 1.0).abs() < 1e-6);
    assert!((e.t_e.unwrap() - 0.1).abs() < 1e-6);
    let residuals = std::fs::read_to_string(fit.join("residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 42);
    assert!(residuals.starts_with("frequency_hz,setpoint,residual\n"));
}

#[test]
fn single_input_fit_of_two_input_data_warns() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("two.json");
    std::fs::write(
        &scenario,
        r#"{"model": {"kind": "two_input", "g_sys": 1e9, "n_sys_ex": 0.6},
            "sources": [{"kind": "sntj", "electron_temperature": 0.05}],
            "setpoint_grid": {"start": -2e-3, "stop": 2e-3, "points": 41},
            "frequencies_hz": [6e9]}"#,
    )
    .unwrap();
    let config = dir.path().join("fit.json");
    std::fs::write(
        &config,
        r#"{"model": {"kind": "single_input", "fixed": {"t_e": 0.05}}, "reference_g_sys": 1e9}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    assert_eq!(noisecal(&["simulate", "--config", s(&scenario), "--out", s(&sim)]), 0);
    assert_eq!(
        noisecal(&["fit", "--input", s(&sim.join("curves_0.csv")), "--config", s(&config), "--out", s(&fit)]),
        0
    );
    let results: Value = read_json_file(&fit.join("fit_results.json")).unwrap();
    let warnings = results[0]["result"]["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("slope ratio 2.0000")), "{warnings:?}");
}

#[test]
fn saturated_scenario_with_lambda_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("sat.json");
    let bias: Vec<f64> = (0..81).map(|i| -4e-4 + 1e-5 * i as f64).collect();
    let lambda: Vec<f64> = bias.iter().map(|v| 1.0 / (1.0 + (v / 2e-4f64).powi(2))).collect();
    let doc = serde_json::json!({
        "model": {"kind": "saturated", "g_sys": 1e9, "g1_tilde": 240.0, "n_ex_tilde": 0.3, "n2_tilde": 33.0,
                  "compression": {"bias_volt": bias, "lambda": lambda}},
        "sources": [{"kind": "sntj", "electron_temperature": 0.02}],
        "setpoint_grid": {"start": -3e-4, "stop": 3e-4, "points": 61},
        "frequencies_hz": [6e9]
    });
    std::fs::write(&scenario, doc.to_string()).unwrap();
    let config = dir.path().join("fit.json");
    std::fs::write(
        &config,
        r#"{"model": {"kind": "two_input", "fixed": {"t_e": 0.02}}, "saturation": {"n2_tilde": 33.0, "g1_small_signal": 240.0}}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    assert_eq!(noisecal(&["simulate", "--config", s(&scenario), "--out", s(&sim)]), 0);
    let curves = sim.join("curves_0.csv");
    // saturated model without a compression curve
    assert_eq!(noisecal(&["fit", "--input", s(&curves), "--model", "two_input_saturated", "--out", s(&fit)]), 2);
    let code = noisecal(&[
        "fit",
        "--input",
        s(&curves),
        "--config",
        s(&config),
        "--lambda",
        s(&sim.join("lambda.csv")),
        "--out",
        s(&fit),
    ]);
    assert_eq!(code, 0);
    let spectrum: SpectralResult = read_json_file(&fit.join("spectrum.json")).unwrap();
    assert_eq!(spectrum.model, noisecal::fitting::ModelKind::TwoInputSaturated);
    let e = spectrum.bins[0].estimate.as_ref().unwrap();
    assert!((e.noise - 0.3).abs() < 1e-6, "{}", e.noise);

    let sweep = dir.path().join("sweep");
    let code = noisecal(&[
        "sweep",
        "--input",
        s(&curves),
        "--config",
        s(&config),
        "--lambda",
        s(&sim.join("lambda.csv")),
        "--widths",
        "1,2,3",
        "--out",
        s(&sweep),
    ]);
    assert_eq!(code, 0);
    let table = std::fs::read_to_string(sweep.join("window_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn identical_spectra_give_unit_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    let rep = dir.path().join("rep");
    noisecal(&["simulate", "--config", s(&scenarios().join("jtwpa_far.json")), "--out", s(&sim)]);
    noisecal(&[
        "fit",
        "--input",
        s(&sim.join("curves_0.csv")),
        "--config",
        s(&scenarios().join("fit_two_input.json")),
        "--out",
        s(&fit),
    ]);
    let spec = fit.join("spectrum.json");
    assert_eq!(noisecal(&["report", "--near", s(&spec), "--far", s(&spec), "--out", s(&rep)]), 0);
    let eff = std::fs::read_to_string(rep.join("efficiency.csv")).unwrap();
    for line in eff.lines().skip(1) {
        assert_eq!(line.split(',').nth(1), Some("1"), "{line}");
    }
    let corrected = std::fs::read_to_string(rep.join("corrected.csv")).unwrap();
    for line in corrected.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let measured: f64 = cells[1].parse().unwrap();
        let moved: f64 = cells[5].parse().unwrap();
        assert_eq!(measured, moved);
    }
}

#[test]
fn report_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"{"model": "two_input", "bins": [{"frequency_hz": 5e9, "estimate": null, "error": "x"}]}"#).unwrap();
    std::fs::write(&b, r#"{"model": "two_input", "bins": [{"frequency_hz": 6e9, "estimate": null, "error": "x"}]}"#).unwrap();
    let out = dir.path().join("o");
    assert_eq!(noisecal(&["report", "--near", s(&a), "--far", s(&b), "--out", s(&out)]), 2);
    assert_eq!(noisecal(&["report", "--near", s(&a), "--out", s(&out)]), 2);
}

#[test]
fn hemt_scenario_band() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    noisecal(&["simulate", "--config", s(&scenarios().join("hemt.json")), "--out", s(&sim)]);
    assert_eq!(
        noisecal(&["fit", "--input", s(&sim.join("curves_0.csv")), "--model", "single_input", "--out", s(&fit)]),
        0
    );
    let spectrum: SpectralResult = read_json_file(&fit.join("spectrum.json")).unwrap();
    assert_eq!(spectrum.bins.len(), 9);
    for n in spectrum.n_sys() {
        assert!((30.0..=50.0).contains(&n.unwrap()));
    }
}

#[test]
fn limits_and_ps_model_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let lim = dir.path().join("limits.csv");
    assert_eq!(
        noisecal(&["limits", "--frequency-hz", "6e9", "--t-e", "0.05", "--bias", "-1e-3,0,1e-3", "--out", s(&lim)]),
        0
    );
    let text = std::fs::read_to_string(&lim).unwrap();
    assert_eq!(text.lines().count(), 4);
    let rep = dir.path().join("rep");
    assert_eq!(noisecal(&["report", "--config", s(&scenarios().join("report.json")), "--out", s(&rep)]), 0);
    let ps = std::fs::read_to_string(rep.join("ps_model.csv")).unwrap();
    let middle = ps.lines().nth(91).unwrap();
    assert!(middle.starts_with("0,"), "{middle}");
    let n_min: f64 = middle.rsplit(',').next().unwrap().parse().unwrap();
    assert!((n_min - 0.43).abs() < 1e-12, "{middle}");
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"model\": {\"kind\": \"linear\", \"g_sys\": 1, \"n_sys\": 1},\n \"sourcez\": []}").unwrap();
    assert_eq!(noisecal(&["simulate", "--config", s(&bad), "--out", s(dir.path())]), 2);
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "frequency_hz,setpoint\n1,2\n").unwrap();
    assert_eq!(noisecal(&["fit", "--input", s(&csv), "--model", "single_input", "--out", s(dir.path())]), 2);
    assert_eq!(noisecal(&["fit", "--input", s(&csv), "--model", "nonsense", "--out", s(dir.path())]), 2);
}
