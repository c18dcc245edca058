//! End-to-end pipeline tests at reduced scale plus binary-level checks of
//! argument handling and exit codes.

use std::process::Command;

use spdefind_cli::config::ExperimentConfig;
use spdefind_cli::pipeline::{
    cmd_discover, cmd_evaluate, cmd_simulate, DIFFUSION_SPM, DIFFUSION_STLSQ_SPM, DRIFT_SPM,
    DRIFT_STLSQ_SPM, PREDICTION_FILE, REPORT_FILE,
};
use spdefind_core::io::{read_field, read_model, write_model, Component, SpmModel, SpmTerm};
use spdefind_core::Boundary;

fn small_config(case: &str, ensembles: usize) -> ExperimentConfig {
    let mut config = ExperimentConfig::preset(case).unwrap();
    config.ensembles = ensembles;
    config
}

#[test]
fn simulate_discover_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("heat", 150);
    let data = dir.path().join("data.fld");
    let header = cmd_simulate(&config, &data).unwrap();
    assert_eq!(header.n_ensembles, 150);
    assert_eq!(header.n_steps, 401);
    assert_eq!(header.n_nodes, 64);
    assert_eq!(header.dt, 0.0025);

    let back = read_field(&data, Boundary::Periodic).unwrap();
    assert_eq!(back.n_ensembles(), 150);

    let out = cmd_discover(&data, &config, dir.path()).unwrap();
    assert!(!out.drift_vb.terms.is_empty());
    for f in [DRIFT_SPM, DIFFUSION_SPM, DRIFT_STLSQ_SPM, DIFFUSION_STLSQ_SPM, REPORT_FILE] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let drift = read_model(dir.path().join(DRIFT_SPM)).unwrap();
    assert_eq!(drift.component, Component::Drift);
    assert_eq!(drift.method, "vb");
    let baseline = read_model(dir.path().join(DRIFT_STLSQ_SPM)).unwrap();
    assert_eq!(baseline.method, "stlsq");

    let report_path = dir.path().join(REPORT_FILE);
    let eval = cmd_evaluate(dir.path(), &config, &report_path).unwrap();
    assert!(eval.metrics_vb.l2_stacked.is_finite());
    let report_text = std::fs::read_to_string(&report_path).unwrap();
    assert!(report_text.contains("[metrics vb]"));
    assert!(report_text.contains("[config]"));
    // reduced scale still recovers the heat structure
    assert!(report_text.contains("term u_xx"));
}

#[test]
fn field_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("heat", 5);
    let a = dir.path().join("a.fld");
    let b = dir.path().join("b.fld");
    cmd_simulate(&config, &a).unwrap();
    cmd_simulate(&config, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn perfect_model_scores_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("allen-cahn", 10);
    let perfect_drift = SpmModel {
        component: Component::Drift,
        method: "vb".into(),
        terms: vec![
            SpmTerm { name: "u".into(), pip: 1.0, mean: 1.0, std: 0.0 },
            SpmTerm { name: "u^3".into(), pip: 1.0, mean: -1.0, std: 0.0 },
            SpmTerm { name: "u_xx".into(), pip: 1.0, mean: 1.0, std: 0.0 },
        ],
        elbo: 0.0,
        iters: 1,
    };
    let perfect_diffusion = SpmModel {
        component: Component::Diffusion,
        method: "vb".into(),
        terms: vec![SpmTerm { name: "1".into(), pip: 1.0, mean: 1.0, std: 0.0 }],
        elbo: 0.0,
        iters: 1,
    };
    write_model(dir.path().join(DRIFT_SPM), &perfect_drift).unwrap();
    write_model(dir.path().join(DIFFUSION_SPM), &perfect_diffusion).unwrap();
    write_model(dir.path().join(DRIFT_STLSQ_SPM), &perfect_drift).unwrap();
    write_model(dir.path().join(DIFFUSION_STLSQ_SPM), &perfect_diffusion).unwrap();
    let eval = cmd_evaluate(dir.path(), &config, &dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(eval.metrics_vb.l2_stacked, 0.0);
    assert_eq!(eval.metrics_vb.fpr_drift, 0.0);
    assert_eq!(eval.metrics_vb.fpr_diffusion, 0.0);
    assert_eq!(eval.metrics_vb.diffusion_amplitude, 1.0);
    assert!(dir.path().join(PREDICTION_FILE).exists());
    let csv = std::fs::read_to_string(dir.path().join(PREDICTION_FILE)).unwrap();
    assert!(csv.starts_with("x,t,mean,std"));
    // one row per (time, node) point plus the header
    assert_eq!(csv.lines().count(), 1 + 401 * 64);
}

#[test]
fn zero_noise_heat_has_negligible_diffusion() {
    // sigma = 0 leaves only the O(dt) squared deterministic increment
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config("heat", 3);
    config.model.sigma = 0.0;
    let data = dir.path().join("data.fld");
    cmd_simulate(&config, &data).unwrap();
    let out = cmd_discover(&data, &config, dir.path()).unwrap();
    let diffusion = &out.diffusion_vb;
    let amplitude = diffusion
        .terms
        .iter()
        .find(|t| t.name == "1")
        .map(|t| t.mean.max(0.0).sqrt())
        .unwrap_or(0.0);
    assert!(
        amplitude < 0.032,
        "zero-noise diffusion amplitude {amplitude} too large"
    );
}

#[test]
fn single_trajectory_field_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("heat", 1);
    let data = dir.path().join("one.fld");
    let header = cmd_simulate(&config, &data).unwrap();
    assert_eq!(header.n_ensembles, 1);
    let field = read_field(&data, Boundary::Periodic).unwrap();
    assert_eq!(field.n_ensembles(), 1);
}

#[test]
fn preset_fields_stay_inside_the_sanity_band() {
    // reduced-ensemble probe of the empirical |u| < 10 stability band
    for case in spdefind_cli::PRESET_NAMES {
        let config = small_config(case, 40);
        let field = spdefind_core::simulate_ensemble(
            &config.build_model().unwrap(),
            &config.build_grid().unwrap(),
            &config.build_time().unwrap(),
            config.ensembles,
            &config.model.ic.build(),
            config.seed,
        )
        .unwrap();
        let max = field.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max < 10.0, "{case}: max |u| = {max}");
    }
}

#[test]
fn run_paper_all_produces_three_report_directories() {
    let dir = tempfile::tempdir().unwrap();
    let outcomes =
        spdefind_cli::cmd_run_paper("all", dir.path(), Some(3), Some(25)).unwrap();
    assert_eq!(outcomes.len(), 3);
    for case in spdefind_cli::PRESET_NAMES {
        for f in [DRIFT_SPM, DIFFUSION_SPM, REPORT_FILE] {
            assert!(
                dir.path().join(case).join(f).exists(),
                "{case}/{f} missing"
            );
        }
        // at this tiny ensemble count discovery may select terms outside the
        // simulatable family; the report then carries the skip notice instead
        let report = std::fs::read_to_string(dir.path().join(case).join(REPORT_FILE)).unwrap();
        assert!(
            dir.path().join(case).join(PREDICTION_FILE).exists()
                || report.contains("prediction export skipped"),
            "{case}: neither prediction nor skip notice"
        );
    }
    assert!(dir.path().join("table.txt").exists());
    let table = std::fs::read_to_string(dir.path().join("table.txt")).unwrap();
    assert!(table.contains("nagumo"));
}

#[test]
fn binary_reports_config_errors_with_exit_code_2() {
    let bin = env!("CARGO_BIN_EXE_spdefind");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset = heat\nunknown.key = 1\n").unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("x.fld"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_reports_missing_files_with_exit_code_4() {
    let bin = env!("CARGO_BIN_EXE_spdefind");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.cfg");
    std::fs::write(&cfg, "preset = heat\nensembles = 2\n").unwrap();
    let out = Command::new(bin)
        .args(["discover", "--data"])
        .arg(dir.path().join("missing.fld"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_reports_blow_up_with_exit_code_3() {
    let bin = env!("CARGO_BIN_EXE_spdefind");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("explode.cfg");
    // du = 1000 u^3 dt from u0 = 5 exceeds the blow-up bound within the run
    std::fs::write(
        &cfg,
        "model.name = explode\nmodel.epsilon = 0\nmodel.sigma = 0\n\
         model.drift_poly = 3:1000\nmodel.ic = constant:5\n\
         grid.length = 10\ngrid.nx = 8\ntime.horizon = 1\ntime.dt = 0.1\n\
         ensembles = 1\nseed = 0\n",
    )
    .unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("x.fld"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn binary_runs_a_tiny_simulation() {
    let bin = env!("CARGO_BIN_EXE_spdefind");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, "preset = heat\nensembles = 2\ntime.horizon = 0.05\n").unwrap();
    let fld = dir.path().join("tiny.fld");
    let out = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&fld)
        .env("SPDEFIND_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let field = read_field(&fld, Boundary::Periodic).unwrap();
    assert_eq!(field.n_ensembles(), 2);
    assert_eq!(field.time.n_steps(), 21);
}
