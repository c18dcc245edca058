//! The simulate -> discover -> evaluate pipeline and the benchmark harness.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use ndarray::Array2;

use spdefind_core::io::{
    read_model, write_model, Component, FldHeader, FldReader, FldWriter, SpmModel, SpmTerm,
};
use spdefind_core::{
    diffusion_amplitude, fpr, relative_l2, simulate_streaming, stlsq, term_name,
    vb_fit_with_terms, Dictionary, DictionaryAccumulator, Error, Grid1d, GroundTruth,
    InitialCondition, Result, SparsePosterior, SpdeModel, StlsqFit, TargetAccumulator, TimeSpec,
    DEFAULT_BLOWUP_BOUND,
};

use crate::config::ExperimentConfig;
use crate::report::{Metrics, RunReport, Timings};

/// Prediction ensembles drawn from a discovered model during evaluation.
pub const PREDICTION_ENSEMBLES: usize = 200;

/// Simulate the configured ensemble straight into a field file.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<FldHeader> {
    config.validate()?;
    let grid = config.build_grid()?;
    let time = config.build_time()?;
    let model = config.build_model()?;
    let header = FldHeader {
        n_ensembles: config.ensembles,
        n_steps: time.n_steps(),
        n_nodes: grid.n_nodes(),
        dt: time.step(),
        dx: grid.spacing(),
        seed: config.seed,
    };
    let mut writer = FldWriter::create(out, header)?;
    simulate_streaming(
        &model,
        &grid,
        &time,
        config.ensembles,
        &config.model.ic.build(),
        config.seed,
        DEFAULT_BLOWUP_BOUND,
        |_, traj| writer.write_ensemble(traj),
    )?;
    writer.finish()?;
    println!(
        "simulated ns={} nt={} nx={} -> {}",
        header.n_ensembles,
        header.n_steps,
        header.n_nodes,
        out.display()
    );
    Ok(header)
}

/// Discovered drift and diffusion models plus everything the report needs.
pub struct DiscoveryOutput {
    pub dictionary_terms: Vec<spdefind_core::TermDescriptor>,
    pub drift_vb: SpmModel,
    pub diffusion_vb: SpmModel,
    pub drift_stlsq: SpmModel,
    pub diffusion_stlsq: SpmModel,
    pub drift_posterior: SparsePosterior,
    pub diffusion_posterior: SparsePosterior,
    pub drift_stlsq_fit: StlsqFit,
    pub diffusion_stlsq_fit: StlsqFit,
}

fn spm_from_posterior(
    component: Component,
    post: &SparsePosterior,
    names: &[String],
) -> SpmModel {
    let terms = post
        .selected_indices
        .iter()
        .map(|&i| SpmTerm {
            name: names[i].clone(),
            pip: post.pip[i],
            mean: post.coef_mean[i],
            std: post.coef_std(i),
        })
        .collect();
    SpmModel {
        component,
        method: "vb".to_string(),
        terms,
        elbo: post.elbo_final,
        iters: post.n_sweeps,
    }
}

fn spm_from_stlsq(component: Component, fit: &StlsqFit, names: &[String]) -> SpmModel {
    let terms = fit
        .support()
        .iter()
        .map(|&i| SpmTerm {
            name: names[i].clone(),
            pip: 1.0,
            mean: fit.coef[i],
            std: 0.0,
        })
        .collect();
    SpmModel {
        component,
        method: "stlsq".to_string(),
        terms,
        elbo: 0.0,
        iters: fit.n_iters,
    }
}

/// Map an STLSQ support onto the warm-start inclusion probabilities.
fn stlsq_warm_start(fit: &StlsqFit) -> DVector<f64> {
    DVector::from_iterator(
        fit.active.len(),
        fit.active.iter().map(|&a| if a { 0.99 } else { 0.01 }),
    )
}

fn fit_component(
    component: Component,
    dict: &Dictionary,
    target: &DVector<f64>,
    config: &ExperimentConfig,
    timings: &mut Timings,
) -> Result<(SpmModel, SpmModel, SparsePosterior, StlsqFit)> {
    let label = component.as_str();
    let t0 = Instant::now();
    let baseline = stlsq(&dict.matrix, target, &config.stlsq)?;
    timings.record(&format!("stlsq_{label}"), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let init_cfg = config.stlsq_init();
    let init_fit = if init_cfg == config.stlsq {
        baseline.clone()
    } else {
        stlsq(&dict.matrix, target, &init_cfg)?
    };
    let w0 = stlsq_warm_start(&init_fit);
    let (_, mut posterior) =
        vb_fit_with_terms(&dict.matrix, target, &config.hyper, &w0, &dict.terms)?;
    timings.record(&format!("vb_{label}"), t1.elapsed().as_secs_f64());

    if dict.standardization.is_some() {
        posterior.coef_mean = dict.destandardize_coefficients(&posterior.coef_mean);
        posterior.coef_cov = dict.destandardize_covariance(&posterior.coef_cov);
    }
    let names = dict.term_names();
    let mut baseline_out = baseline.clone();
    if dict.standardization.is_some() {
        baseline_out.coef = dict.destandardize_coefficients(&baseline.coef);
    }
    let vb = spm_from_posterior(component, &posterior, &names);
    let st = spm_from_stlsq(component, &baseline_out, &names);
    Ok((vb, st, posterior, baseline_out))
}

/// Build dictionary and targets from a field file (streamed, one trajectory
/// in memory at a time), then run the baseline and VB fits for drift and
/// diffusion.
pub fn discover_from_field(
    data_path: &Path,
    config: &ExperimentConfig,
    timings: &mut Timings,
) -> Result<DiscoveryOutput> {
    config.validate()?;
    let t0 = Instant::now();
    let mut reader = FldReader::open(data_path)?;
    let header = *reader.header();
    let grid = header.grid(config.grid.boundary)?;
    let terms = config.dictionary_terms();
    let n_rows = header.n_steps - 1;
    let mut dict_acc = DictionaryAccumulator::new(&terms, &grid, n_rows)?;
    let mut target_acc = TargetAccumulator::new(n_rows, grid.n_nodes(), header.dt)?;
    while let Some(block) = reader.next_ensemble()? {
        let view = block.view();
        dict_acc.add_ensemble(view)?;
        target_acc.add_ensemble(view)?;
    }
    let mut dict = dict_acc.finish()?;
    if config.dictionary.standardize {
        dict.standardize();
    }
    let targets = target_acc.finish()?;
    timings.record("assemble", t0.elapsed().as_secs_f64());

    let (drift_vb, drift_stlsq, drift_posterior, drift_stlsq_fit) =
        fit_component(Component::Drift, &dict, &targets.drift, config, timings)?;
    let (diffusion_vb, diffusion_stlsq, diffusion_posterior, diffusion_stlsq_fit) =
        fit_component(Component::Diffusion, &dict, &targets.diffusion, config, timings)?;

    Ok(DiscoveryOutput {
        dictionary_terms: terms,
        drift_vb,
        diffusion_vb,
        drift_stlsq,
        diffusion_stlsq,
        drift_posterior,
        diffusion_posterior,
        drift_stlsq_fit,
        diffusion_stlsq_fit,
    })
}

/// Model file names inside a discovery output directory.
pub const DRIFT_SPM: &str = "drift.spm";
pub const DIFFUSION_SPM: &str = "diffusion.spm";
pub const DRIFT_STLSQ_SPM: &str = "drift_stlsq.spm";
pub const DIFFUSION_STLSQ_SPM: &str = "diffusion_stlsq.spm";
pub const REPORT_FILE: &str = "report.txt";
pub const TIMINGS_FILE: &str = "timings.txt";
pub const PREDICTION_FILE: &str = "prediction.csv";

fn write_discovery_artifacts(
    out_dir: &Path,
    config: &ExperimentConfig,
    output: &DiscoveryOutput,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_model(out_dir.join(DRIFT_SPM), &output.drift_vb)?;
    write_model(out_dir.join(DIFFUSION_SPM), &output.diffusion_vb)?;
    write_model(out_dir.join(DRIFT_STLSQ_SPM), &output.drift_stlsq)?;
    write_model(out_dir.join(DIFFUSION_STLSQ_SPM), &output.diffusion_stlsq)?;
    let report = RunReport {
        case_name: config
            .preset
            .clone()
            .unwrap_or_else(|| config.model.name.clone()),
        drift_vb: output.drift_vb.clone(),
        diffusion_vb: output.diffusion_vb.clone(),
        drift_stlsq: output.drift_stlsq.clone(),
        diffusion_stlsq: output.diffusion_stlsq.clone(),
        metrics_vb: None,
        metrics_stlsq: None,
        notes: convergence_notes(output),
        config_echo: config.serialize(),
    };
    std::fs::write(out_dir.join(REPORT_FILE), report.render())?;
    Ok(())
}

/// Run discovery on a field file and write model files plus the report.
pub fn cmd_discover(
    data_path: &Path,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<DiscoveryOutput> {
    let mut timings = Timings::default();
    let output = discover_from_field(data_path, config, &mut timings)?;
    write_discovery_artifacts(out_dir, config, &output)?;
    std::fs::write(out_dir.join(TIMINGS_FILE), timings.render())?;
    print!("{}", timings.render());
    for line in summary_lines(&output) {
        println!("{line}");
    }
    Ok(output)
}

fn convergence_notes(output: &DiscoveryOutput) -> Vec<String> {
    let mut notes = Vec::new();
    if !output.drift_posterior.converged {
        notes.push("drift fit hit the sweep budget before the ELBO tolerance".into());
    }
    if !output.diffusion_posterior.converged {
        notes.push("diffusion fit hit the sweep budget before the ELBO tolerance".into());
    }
    if output.drift_stlsq_fit.rank_deficient || output.diffusion_stlsq_fit.rank_deficient {
        notes.push("baseline least squares was rank-deficient (minimum-norm fallback)".into());
    }
    notes
}

fn summary_lines(output: &DiscoveryOutput) -> Vec<String> {
    let fmt = |m: &SpmModel| -> String {
        let names: Vec<&str> = m.terms.iter().map(|t| t.name.as_str()).collect();
        format!("{{{}}}", names.join(", "))
    };
    vec![
        format!("drift vb: {}", fmt(&output.drift_vb)),
        format!("diffusion vb: {}", fmt(&output.diffusion_vb)),
        format!("drift stlsq: {}", fmt(&output.drift_stlsq)),
        format!("diffusion stlsq: {}", fmt(&output.diffusion_stlsq)),
    ]
}

/// Dense coefficient and support vectors of a model file over the dictionary.
pub fn model_to_dense(
    model: &SpmModel,
    terms: &[spdefind_core::TermDescriptor],
) -> Result<(DVector<f64>, Vec<bool>)> {
    let names: Vec<String> = terms.iter().map(term_name).collect();
    let mut coef = DVector::zeros(terms.len());
    let mut mask = vec![false; terms.len()];
    for t in &model.terms {
        let idx = names.iter().position(|n| n == &t.name).ok_or_else(|| {
            Error::InvalidInput(format!(
                "model term '{}' is not in the configured dictionary",
                t.name
            ))
        })?;
        coef[idx] = t.mean;
        mask[idx] = true;
    }
    Ok((coef, mask))
}

fn metrics_for(
    truth: &GroundTruth,
    drift: &SpmModel,
    diffusion: &SpmModel,
    terms: &[spdefind_core::TermDescriptor],
) -> Result<Metrics> {
    let (drift_coef, drift_mask) = model_to_dense(drift, terms)?;
    let (diff_coef, diff_mask) = model_to_dense(diffusion, terms)?;
    let stacked_truth = truth.stacked();
    let stacked_hat = spdefind_core::metrics::stack(&drift_coef, &diff_coef);
    let const_idx = terms
        .iter()
        .position(|t| t.poly_power == 0 && t.deriv_order == 0)
        .ok_or_else(|| Error::InvalidInput("dictionary has no constant term".into()))?;
    Ok(Metrics {
        l2_stacked: relative_l2(&stacked_truth, &stacked_hat)?,
        l2_drift: relative_l2(&truth.drift, &drift_coef)?,
        fpr_drift: fpr(&drift_mask, &truth.drift_support())?,
        fpr_diffusion: fpr(&diff_mask, &truth.diffusion_support())?,
        diffusion_amplitude: diffusion_amplitude(diff_coef[const_idx])?,
    })
}

/// Interpret a discovered model pair as a simulatable SPDE: the drift may
/// hold u_xx plus polynomial terms, the diffusion a constant. Anything else
/// (the simulator only supports additive noise) returns None.
pub fn discovered_spde(drift: &SpmModel, diffusion: &SpmModel) -> Option<SpdeModel> {
    let mut epsilon = 0.0;
    let mut poly = Vec::new();
    for t in &drift.terms {
        let desc = spdefind_core::parse_term_name(&t.name)?;
        if desc.poly_power == 0 && desc.deriv_order == 2 {
            epsilon = t.mean;
        } else if desc.deriv_order == 0 && desc.poly_power > 0 {
            poly.push((desc.poly_power, t.mean));
        } else {
            return None;
        }
    }
    let mut sigma2 = 0.0;
    for t in &diffusion.terms {
        let desc = spdefind_core::parse_term_name(&t.name)?;
        if desc.poly_power == 0 && desc.deriv_order == 0 {
            sigma2 = t.mean;
        } else {
            return None;
        }
    }
    if epsilon < 0.0 || sigma2 < -1e-6 {
        return None;
    }
    SpdeModel::new(
        "discovered",
        epsilon.max(0.0),
        sigma2.max(0.0).sqrt(),
        poly,
    )
    .ok()
}

/// Mean/std prediction surfaces from a batch of trajectories of the model.
fn prediction_surfaces(
    model: &SpdeModel,
    grid: &Grid1d,
    time: &TimeSpec,
    ic: &InitialCondition,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let nt = time.n_steps();
    let nx = grid.n_nodes();
    let mut sum = Array2::<f64>::zeros((nt, nx));
    let mut sumsq = Array2::<f64>::zeros((nt, nx));
    simulate_streaming(
        model,
        grid,
        time,
        PREDICTION_ENSEMBLES,
        ic,
        seed,
        DEFAULT_BLOWUP_BOUND,
        |_, traj| {
            sum.zip_mut_with(&traj, |a, &b| *a += b);
            sumsq.zip_mut_with(&traj, |a, &b| *a += b * b);
            Ok(())
        },
    )?;
    let n = PREDICTION_ENSEMBLES as f64;
    let mean = sum / n;
    let var = sumsq / n - &mean * &mean;
    let std = var.mapv(|v| v.max(0.0).sqrt());
    Ok((mean, std))
}

fn write_prediction_csv(
    path: &Path,
    grid: &Grid1d,
    time: &TimeSpec,
    mean: &Array2<f64>,
    std: &Array2<f64>,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,t,mean,std")?;
    let xs = grid.node_positions();
    for n in 0..time.n_steps() {
        let t = n as f64 * time.step();
        for (j, &x) in xs.iter().enumerate() {
            writeln!(w, "{x},{t},{},{}", mean[(n, j)], std[(n, j)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evaluation product: metrics for both methods plus the updated report.
pub struct EvaluationOutput {
    pub metrics_vb: Metrics,
    pub metrics_stlsq: Metrics,
    pub report: RunReport,
}

/// Score model files in `models_dir` against the preset ground truth, export
/// prediction surfaces from the discovered model, and write the report.
pub fn cmd_evaluate(
    models_dir: &Path,
    config: &ExperimentConfig,
    report_path: &Path,
) -> Result<EvaluationOutput> {
    config.validate()?;
    let truth = config.ground_truth()?;
    let terms = config.dictionary_terms();
    let drift_vb = read_model(models_dir.join(DRIFT_SPM))?;
    let diffusion_vb = read_model(models_dir.join(DIFFUSION_SPM))?;
    let drift_stlsq = read_model(models_dir.join(DRIFT_STLSQ_SPM))?;
    let diffusion_stlsq = read_model(models_dir.join(DIFFUSION_STLSQ_SPM))?;

    let metrics_vb = metrics_for(&truth, &drift_vb, &diffusion_vb, &terms)?;
    let metrics_stlsq = metrics_for(&truth, &drift_stlsq, &diffusion_stlsq, &terms)?;

    let mut notes = Vec::new();
    match discovered_spde(&drift_vb, &diffusion_vb) {
        Some(model) => {
            let grid = config.build_grid()?;
            let time = config.build_time()?;
            // fixed derived seed keeps prediction exports reproducible
            let (mean, std) = prediction_surfaces(
                &model,
                &grid,
                &time,
                &config.model.ic.build(),
                config.seed.wrapping_add(1),
            )?;
            let path = models_dir.join(PREDICTION_FILE);
            write_prediction_csv(&path, &grid, &time, &mean, &std)?;
            notes.push(format!(
                "prediction surfaces from {PREDICTION_ENSEMBLES} ensembles of the discovered model"
            ));
        }
        None => {
            notes.push(
                "discovered model has terms outside the simulatable family; prediction export skipped"
                    .into(),
            );
        }
    }

    let report = RunReport {
        case_name: config
            .preset
            .clone()
            .unwrap_or_else(|| config.model.name.clone()),
        drift_vb,
        diffusion_vb,
        drift_stlsq,
        diffusion_stlsq,
        metrics_vb: Some(metrics_vb.clone()),
        metrics_stlsq: Some(metrics_stlsq.clone()),
        notes,
        config_echo: config.serialize(),
    };
    std::fs::write(report_path, report.render())?;
    println!(
        "vb: L2 {:.4} fpr {:.2}%/{:.2}% | stlsq: L2 {:.4} fpr {:.2}%/{:.2}%",
        metrics_vb.l2_stacked,
        metrics_vb.fpr_drift,
        metrics_vb.fpr_diffusion,
        metrics_stlsq.l2_stacked,
        metrics_stlsq.fpr_drift,
        metrics_stlsq.fpr_diffusion
    );
    Ok(EvaluationOutput {
        metrics_vb,
        metrics_stlsq,
        report,
    })
}

/// One fully evaluated benchmark case.
pub struct CaseOutcome {
    pub case: String,
    pub dir: PathBuf,
    pub evaluation: EvaluationOutput,
    pub timings: Timings,
}

/// Chain simulate -> discover -> evaluate for one preset.
pub fn run_case(
    case: &str,
    out_dir: &Path,
    seed: Option<u64>,
    ensembles: Option<usize>,
) -> Result<CaseOutcome> {
    let mut config = ExperimentConfig::preset(case)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(n) = ensembles {
        config.ensembles = n;
    }
    let case_dir = out_dir.join(case);
    std::fs::create_dir_all(&case_dir)?;
    let mut timings = Timings::default();

    let data_path = case_dir.join("data.fld");
    let t0 = Instant::now();
    cmd_simulate(&config, &data_path)?;
    timings.record("simulate", t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let output = discover_from_field(&data_path, &config, &mut timings)?;
    write_discovery_artifacts(&case_dir, &config, &output)?;
    timings.record("discover", t1.elapsed().as_secs_f64());
    for line in summary_lines(&output) {
        println!("{line}");
    }

    let t2 = Instant::now();
    let evaluation = cmd_evaluate(&case_dir, &config, &case_dir.join(REPORT_FILE))?;
    timings.record("evaluate", t2.elapsed().as_secs_f64());

    std::fs::write(case_dir.join(TIMINGS_FILE), timings.render())?;
    Ok(CaseOutcome {
        case: case.to_string(),
        dir: case_dir,
        evaluation,
        timings,
    })
}

/// Run one benchmark case or all three, then emit the comparison table of
/// L2 errors, false positive rates and wall times for both methods.
pub fn cmd_run_paper(
    case: &str,
    out_dir: &Path,
    seed: Option<u64>,
    ensembles: Option<usize>,
) -> Result<Vec<CaseOutcome>> {
    let cases: Vec<&str> = match case {
        "all" => crate::config::PRESET_NAMES.to_vec(),
        other => vec![other],
    };
    let mut outcomes = Vec::new();
    for c in cases {
        outcomes.push(run_case(c, out_dir, seed, ensembles)?);
    }
    let table = comparison_table(&outcomes);
    std::fs::write(out_dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(outcomes)
}

fn comparison_table(outcomes: &[CaseOutcome]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>12} {:>12} {:>10} {:>10} {:>12} {:>12}",
        "case", "L2 e-SINDy", "L2 VB", "FPR e-S(%)", "FPR VB(%)", "time e-S(s)", "time VB(s)"
    );
    for o in outcomes {
        let m_vb = &o.evaluation.metrics_vb;
        let m_st = &o.evaluation.metrics_stlsq;
        let fpr_vb = m_vb.fpr_drift.max(m_vb.fpr_diffusion);
        let fpr_st = m_st.fpr_drift.max(m_st.fpr_diffusion);
        let sum_stage = |prefix: &str| -> f64 {
            o.timings
                .entries()
                .iter()
                .filter(|(s, _)| s.starts_with(prefix))
                .map(|(_, t)| *t)
                .sum()
        };
        let _ = writeln!(
            out,
            "{:<12} {:>12.4} {:>12.4} {:>10.4} {:>10.4} {:>12.3} {:>12.3}",
            o.case,
            m_st.l2_stacked,
            m_vb.l2_stacked,
            fpr_st,
            fpr_vb,
            sum_stage("stlsq_"),
            sum_stage("vb_")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovered_spde_maps_supported_terms() {
        let drift = SpmModel {
            component: Component::Drift,
            method: "vb".into(),
            terms: vec![
                SpmTerm { name: "u_xx".into(), pip: 1.0, mean: 0.95, std: 0.01 },
                SpmTerm { name: "u".into(), pip: 1.0, mean: 1.01, std: 0.05 },
                SpmTerm { name: "u^3".into(), pip: 1.0, mean: -1.0, std: 0.05 },
            ],
            elbo: 0.0,
            iters: 5,
        };
        let diffusion = SpmModel {
            component: Component::Diffusion,
            method: "vb".into(),
            terms: vec![SpmTerm { name: "1".into(), pip: 1.0, mean: 0.93, std: 0.001 }],
            elbo: 0.0,
            iters: 4,
        };
        let model = discovered_spde(&drift, &diffusion).unwrap();
        assert_eq!(model.diffusivity(), 0.95);
        assert_eq!(model.drift_poly(), &[(1, 1.01), (3, -1.0)]);
        assert!((model.noise_amplitude() - 0.93f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unsupported_terms_block_prediction() {
        let drift = SpmModel {
            component: Component::Drift,
            method: "vb".into(),
            terms: vec![SpmTerm { name: "u*u_x".into(), pip: 1.0, mean: 1.0, std: 0.1 }],
            elbo: 0.0,
            iters: 2,
        };
        let diffusion = SpmModel {
            component: Component::Diffusion,
            method: "vb".into(),
            terms: vec![],
            elbo: 0.0,
            iters: 2,
        };
        assert!(discovered_spde(&drift, &diffusion).is_none());
    }
}
