//! Experiment configuration: flat key-value text with dotted section keys.
//!
//! ```text
//! # comment
//! preset = allen-cahn
//! grid.nx = 64
//! hyper.inclusion_prior = 0.1
//! ```
//!
//! A `preset` line loads one of the three benchmark setups; any later key
//! overrides the preset value. Parse -> serialize -> parse is the identity
//! on every field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use spdefind_core::{Boundary, Error, Grid1d, Result, SpdeModel, SsHyperparams, StlsqConfig, TimeSpec};

/// Initial condition selector.
#[derive(Debug, Clone, PartialEq)]
pub enum IcSpec {
    /// The benchmark front profile 1 / (1 + exp(-(2 - x) / sqrt(2))).
    Sigmoid,
    Zero,
    Constant(f64),
}

impl IcSpec {
    fn as_string(&self) -> String {
        match self {
            IcSpec::Sigmoid => "sigmoid".into(),
            IcSpec::Zero => "zero".into(),
            IcSpec::Constant(v) => format!("constant:{v}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == "sigmoid" {
            Ok(IcSpec::Sigmoid)
        } else if s == "zero" {
            Ok(IcSpec::Zero)
        } else if let Some(v) = s.strip_prefix("constant:") {
            Ok(IcSpec::Constant(v.parse().map_err(|_| {
                Error::InvalidInput(format!("bad constant initial condition '{s}'"))
            })?))
        } else {
            Err(Error::InvalidInput(format!("unknown initial condition '{s}'")))
        }
    }

    pub fn build(&self) -> spdefind_core::InitialCondition {
        match self {
            IcSpec::Sigmoid => spdefind_core::InitialCondition::from_fn(|x| {
                1.0 / (1.0 + ((x - 2.0) / 2.0_f64.sqrt()).exp())
            }),
            IcSpec::Zero => spdefind_core::InitialCondition::Constant(0.0),
            IcSpec::Constant(v) => spdefind_core::InitialCondition::Constant(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub epsilon: f64,
    pub sigma: f64,
    pub drift_poly: Vec<(u32, f64)>,
    pub scale_noise_by_sqrt_dx: bool,
    pub ic: IcSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub length: f64,
    pub nx: usize,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryConfig {
    pub poly_max: u32,
    pub deriv_max: u32,
    pub products: bool,
    pub standardize: bool,
}

/// Full experiment description; one file drives simulate, discover and
/// evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub ensembles: usize,
    pub seed: u64,
    pub dictionary: DictionaryConfig,
    pub hyper: SsHyperparams,
    /// Baseline comparator settings (also the initializer unless
    /// `stlsq_init_ridge` differs from the baseline ridge).
    pub stlsq: StlsqConfig,
    /// Ridge used only for the warm-start run that seeds the VB inclusion
    /// probabilities. Ensemble-averaged dictionaries carry near-collinear
    /// column bundles whose unregularized least squares hands the VB large
    /// canceling coefficients; a mild ridge keeps the warm start clean while
    /// the recorded baseline stays plain.
    pub stlsq_init_ridge: f64,
    pub output_dir: Option<String>,
}

pub const PRESET_NAMES: [&str; 3] = ["heat", "allen-cahn", "nagumo"];

/// Warm-start ridge used by the benchmark presets.
pub const PRESET_INIT_RIDGE: f64 = 3e-5;

impl ExperimentConfig {
    /// The three benchmark setups. Shared pieces: unit diffusivity and noise,
    /// x in [0, 20) periodic with 64 nodes, one second of data, 2000
    /// ensembles, the sigmoid front initial condition, seed 42.
    pub fn preset(name: &str) -> Result<Self> {
        let (drift_poly, dt, poly_max, deriv_max) = match name {
            "heat" => (vec![], 0.0025, 6, 5),
            "allen-cahn" => (vec![(1, 1.0), (3, -1.0)], 0.0025, 6, 5),
            "nagumo" => (vec![(1, 0.5), (2, 0.5), (3, -1.0)], 0.001, 6, 4),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown preset '{other}' (expected one of {PRESET_NAMES:?})"
                )))
            }
        };
        Ok(ExperimentConfig {
            preset: Some(name.to_string()),
            model: ModelConfig {
                name: name.to_string(),
                epsilon: 1.0,
                sigma: 1.0,
                drift_poly,
                scale_noise_by_sqrt_dx: false,
                ic: IcSpec::Sigmoid,
            },
            grid: GridConfig {
                length: 20.0,
                nx: 64,
                boundary: Boundary::Periodic,
            },
            time: TimeConfig { horizon: 1.0, dt },
            ensembles: 2000,
            seed: 42,
            dictionary: DictionaryConfig {
                poly_max,
                deriv_max,
                products: true,
                standardize: false,
            },
            hyper: SsHyperparams::default(),
            stlsq: StlsqConfig::default(),
            stlsq_init_ridge: PRESET_INIT_RIDGE,
            output_dir: None,
        })
    }

    /// STLSQ settings for the warm-start run.
    pub fn stlsq_init(&self) -> StlsqConfig {
        StlsqConfig {
            ridge: self.stlsq_init_ridge,
            ..self.stlsq.clone()
        }
    }

    pub fn build_grid(&self) -> Result<Grid1d> {
        Grid1d::new(self.grid.length, self.grid.nx, self.grid.boundary)
    }

    pub fn build_time(&self) -> Result<TimeSpec> {
        TimeSpec::new(self.time.horizon, self.time.dt)
    }

    pub fn build_model(&self) -> Result<SpdeModel> {
        Ok(SpdeModel::new(
            self.model.name.clone(),
            self.model.epsilon,
            self.model.sigma,
            self.model.drift_poly.clone(),
        )?
        .with_noise_scaled_by_sqrt_dx(self.model.scale_noise_by_sqrt_dx))
    }

    pub fn dictionary_terms(&self) -> Vec<spdefind_core::TermDescriptor> {
        spdefind_core::generate_terms(
            self.dictionary.poly_max,
            self.dictionary.deriv_max,
            self.dictionary.products,
        )
    }

    /// Ground truth over the dictionary terms; only presets carry one.
    pub fn ground_truth(&self) -> Result<spdefind_core::GroundTruth> {
        let preset = self.preset.as_deref().ok_or_else(|| {
            Error::InvalidInput("config has no preset ground truth".into())
        })?;
        if !PRESET_NAMES.contains(&preset) {
            return Err(Error::InvalidInput(format!("unknown preset '{preset}'")));
        }
        let terms = self.dictionary_terms();
        let k = terms.len();
        let mut drift = nalgebra::DVector::zeros(k);
        let mut diffusion = nalgebra::DVector::zeros(k);
        for (i, t) in terms.iter().enumerate() {
            // the Laplacian term eps * u_xx
            if t.poly_power == 0 && t.deriv_order == 2 {
                drift[i] = self.model.epsilon;
            }
            for &(p, c) in &self.model.drift_poly {
                if t.poly_power == p && t.deriv_order == 0 {
                    drift[i] = c;
                }
            }
            // additive noise: g^2 = sigma^2 on the constant term
            if t.poly_power == 0 && t.deriv_order == 0 {
                diffusion[i] = self.model.sigma * self.model.sigma;
            }
        }
        Ok(spdefind_core::GroundTruth { drift, diffusion })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.preset {
            let _ = writeln!(s, "preset = {p}");
        }
        let _ = writeln!(s, "model.name = {}", self.model.name);
        let _ = writeln!(s, "model.epsilon = {}", self.model.epsilon);
        let _ = writeln!(s, "model.sigma = {}", self.model.sigma);
        let poly: Vec<String> = self
            .model
            .drift_poly
            .iter()
            .map(|(p, c)| format!("{p}:{c}"))
            .collect();
        let _ = writeln!(s, "model.drift_poly = {}", poly.join(","));
        let _ = writeln!(
            s,
            "model.scale_noise_by_sqrt_dx = {}",
            self.model.scale_noise_by_sqrt_dx
        );
        let _ = writeln!(s, "model.ic = {}", self.model.ic.as_string());
        let _ = writeln!(s, "grid.length = {}", self.grid.length);
        let _ = writeln!(s, "grid.nx = {}", self.grid.nx);
        let _ = writeln!(s, "grid.boundary = {}", self.grid.boundary.as_str());
        let _ = writeln!(s, "time.horizon = {}", self.time.horizon);
        let _ = writeln!(s, "time.dt = {}", self.time.dt);
        let _ = writeln!(s, "ensembles = {}", self.ensembles);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "dictionary.poly_max = {}", self.dictionary.poly_max);
        let _ = writeln!(s, "dictionary.deriv_max = {}", self.dictionary.deriv_max);
        let _ = writeln!(s, "dictionary.products = {}", self.dictionary.products);
        let _ = writeln!(s, "dictionary.standardize = {}", self.dictionary.standardize);
        let _ = writeln!(s, "hyper.slab_variance = {}", self.hyper.slab_variance);
        let _ = writeln!(s, "hyper.inclusion_prior = {}", self.hyper.inclusion_prior);
        let _ = writeln!(s, "hyper.noise_shape = {}", self.hyper.noise_shape);
        let _ = writeln!(s, "hyper.noise_rate = {}", self.hyper.noise_rate);
        let _ = writeln!(s, "hyper.tau_init = {}", self.hyper.tau_init);
        let _ = writeln!(s, "hyper.elbo_tol = {}", self.hyper.elbo_tol);
        let _ = writeln!(s, "hyper.pip_threshold = {}", self.hyper.pip_threshold);
        let _ = writeln!(s, "hyper.max_iters = {}", self.hyper.max_iters);
        let _ = writeln!(s, "stlsq.threshold = {}", self.stlsq.threshold);
        let _ = writeln!(s, "stlsq.max_iters = {}", self.stlsq.max_iters);
        let _ = writeln!(s, "stlsq.ridge = {}", self.stlsq.ridge);
        let _ = writeln!(s, "stlsq.init_ridge = {}", self.stlsq_init_ridge);
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(s, "output.dir = {dir}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        // a preset line seeds the defaults; anything after overrides
        let mut config = if let Some((_, name)) = pairs.iter().find(|(k, _)| k == "preset") {
            ExperimentConfig::preset(name)?
        } else {
            ExperimentConfig::preset("heat")?.with_no_preset()
        };
        let mut seen = BTreeMap::new();
        for (key, value) in &pairs {
            if let Some(prev) = seen.insert(key.clone(), value.clone()) {
                if &prev != value {
                    return Err(Error::InvalidInput(format!(
                        "key '{key}' set twice with different values"
                    )));
                }
            }
            config.apply(key, value)?;
        }
        Ok(config)
    }

    fn with_no_preset(mut self) -> Self {
        self.preset = None;
        self
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidInput(format!("cannot parse '{value}' for key '{key}'")))
        }
        match key {
            "preset" => self.preset = Some(value.to_string()),
            "model.name" => self.model.name = value.to_string(),
            "model.epsilon" => self.model.epsilon = num(key, value)?,
            "model.sigma" => self.model.sigma = num(key, value)?,
            "model.drift_poly" => {
                let mut poly = Vec::new();
                if !value.is_empty() {
                    for item in value.split(',') {
                        let (p, c) = item.trim().split_once(':').ok_or_else(|| {
                            Error::InvalidInput(format!("bad drift_poly item '{item}'"))
                        })?;
                        poly.push((num::<u32>(key, p.trim())?, num::<f64>(key, c.trim())?));
                    }
                }
                self.model.drift_poly = poly;
            }
            "model.scale_noise_by_sqrt_dx" => {
                self.model.scale_noise_by_sqrt_dx = num(key, value)?
            }
            "model.ic" => self.model.ic = IcSpec::parse(value)?,
            "grid.length" => self.grid.length = num(key, value)?,
            "grid.nx" => self.grid.nx = num(key, value)?,
            "grid.boundary" => self.grid.boundary = value.parse()?,
            "time.horizon" => self.time.horizon = num(key, value)?,
            "time.dt" => self.time.dt = num(key, value)?,
            "ensembles" => self.ensembles = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dictionary.poly_max" => self.dictionary.poly_max = num(key, value)?,
            "dictionary.deriv_max" => self.dictionary.deriv_max = num(key, value)?,
            "dictionary.products" => self.dictionary.products = num(key, value)?,
            "dictionary.standardize" => self.dictionary.standardize = num(key, value)?,
            "hyper.slab_variance" => self.hyper.slab_variance = num(key, value)?,
            "hyper.inclusion_prior" => self.hyper.inclusion_prior = num(key, value)?,
            "hyper.noise_shape" => self.hyper.noise_shape = num(key, value)?,
            "hyper.noise_rate" => self.hyper.noise_rate = num(key, value)?,
            "hyper.tau_init" => self.hyper.tau_init = num(key, value)?,
            "hyper.elbo_tol" => self.hyper.elbo_tol = num(key, value)?,
            "hyper.pip_threshold" => self.hyper.pip_threshold = num(key, value)?,
            "hyper.max_iters" => self.hyper.max_iters = num(key, value)?,
            "stlsq.threshold" => self.stlsq.threshold = num(key, value)?,
            "stlsq.max_iters" => self.stlsq.max_iters = num(key, value)?,
            "stlsq.ridge" => self.stlsq.ridge = num(key, value)?,
            "stlsq.init_ridge" => self.stlsq_init_ridge = num(key, value)?,
            "output.dir" => self.output_dir = Some(value.to_string()),
            other => {
                return Err(Error::InvalidInput(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.build_grid()?;
        self.build_time()?;
        self.build_model()?;
        self.hyper.validate()?;
        self.stlsq.validate()?;
        self.stlsq_init().validate()?;
        if self.ensembles == 0 {
            return Err(Error::InvalidInput("ensembles must be positive".into()));
        }
        if self.dictionary.poly_max < 1 || self.dictionary.deriv_max < 1 {
            return Err(Error::InvalidInput(
                "dictionary orders must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let config = Self::parse(&text)?;
        config.validate()?;
        Ok(config)
    }
}
