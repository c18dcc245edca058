//! Run report: discovered terms, metrics and the config echo.
//!
//! The report file is deterministic for a given (config, seed) so repeated
//! runs can be compared byte for byte; wall-clock timings go to stdout and a
//! separate timings file instead.

use std::fmt::Write as _;

use spdefind_core::io::SpmModel;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub l2_stacked: f64,
    pub l2_drift: f64,
    pub fpr_drift: f64,
    pub fpr_diffusion: f64,
    pub diffusion_amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub case_name: String,
    pub drift_vb: SpmModel,
    pub diffusion_vb: SpmModel,
    pub drift_stlsq: SpmModel,
    pub diffusion_stlsq: SpmModel,
    pub metrics_vb: Option<Metrics>,
    pub metrics_stlsq: Option<Metrics>,
    pub notes: Vec<String>,
    pub config_echo: String,
}

fn push_model(out: &mut String, title: &str, model: &SpmModel) {
    let _ = writeln!(out, "[{title}]");
    for t in &model.terms {
        let _ = writeln!(out, "term {} {} {} {}", t.name, t.pip, t.mean, t.std);
    }
    let _ = writeln!(out, "elbo {}", model.elbo);
    let _ = writeln!(out, "iters {}", model.iters);
    let _ = writeln!(out);
}

fn push_metrics(out: &mut String, title: &str, m: &Metrics) {
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "l2_stacked {}", m.l2_stacked);
    let _ = writeln!(out, "l2_drift {}", m.l2_drift);
    let _ = writeln!(out, "fpr_drift {}", m.fpr_drift);
    let _ = writeln!(out, "fpr_diffusion {}", m.fpr_diffusion);
    let _ = writeln!(out, "diffusion_amplitude {}", m.diffusion_amplitude);
    let _ = writeln!(out);
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "SPDEFIND REPORT 1");
        let _ = writeln!(out, "version {TOOL_VERSION}");
        let _ = writeln!(out, "case {}", self.case_name);
        let _ = writeln!(out);
        push_model(&mut out, "drift vb", &self.drift_vb);
        push_model(&mut out, "diffusion vb", &self.diffusion_vb);
        push_model(&mut out, "drift stlsq", &self.drift_stlsq);
        push_model(&mut out, "diffusion stlsq", &self.diffusion_stlsq);
        if let Some(m) = &self.metrics_vb {
            push_metrics(&mut out, "metrics vb", m);
        }
        if let Some(m) = &self.metrics_stlsq {
            push_metrics(&mut out, "metrics stlsq", m);
        }
        for note in &self.notes {
            let _ = writeln!(out, "note {note}");
        }
        if !self.notes.is_empty() {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "[config]");
        out.push_str(&self.config_echo);
        let _ = writeln!(out, "end");
        out
    }
}

/// Wall-clock accounting per pipeline stage.
#[derive(Debug, Default)]
pub struct Timings {
    entries: Vec<(String, f64)>,
}

impl Timings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.entries.push((stage.to_string(), seconds));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (stage, secs) in &self.entries {
            let _ = writeln!(out, "{stage} {secs:.3}s");
        }
        out
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}
