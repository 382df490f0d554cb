//! Experiment configuration: a TOML (or manifest JSON) document with every
//! field defaulted, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, InverseTemperature, SpectralParams, SpinSystem};
use crate::error::{Error, Result};
use crate::heom::PropagatorConfig;
use crate::matrix::Mat2;
use crate::modes::{FitOptions, ModeSet};

/// Target spacing of recorded samples when `record_stride` is not given.
pub const DEFAULT_SAMPLE_SPACING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Heom,
    RedfieldPlus,
    Redfield,
    Niba,
    ExtractKernel,
    Rates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            epsilon: 0.0,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathConfig {
    pub alpha: f64,
    pub s: f64,
    pub omega_c: f64,
    /// Zero selects the zero-temperature limit.
    pub temperature: f64,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            alpha: 0.1,
            s: 0.5,
            omega_c: 20.0,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Up,
    Down,
}

impl InitialState {
    pub fn density(self) -> Mat2 {
        match self {
            InitialState::Up => Mat2::up(),
            InitialState::Down => Mat2::down(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Hierarchy truncation tiers for the `heom` task.
    pub levels: Vec<usize>,
    /// Resolved from the stiffness rule when absent.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Resolved to give samples about 0.01 apart when absent.
    pub record_stride: Option<usize>,
    pub initial: InitialState,
    pub exploit_symmetry: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            levels: vec![1],
            dt: None,
            t_final: 10.0,
            record_stride: None,
            initial: InitialState::Up,
            exploit_symmetry: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Tier of the trajectory the exact kernel is extracted from; defaults to
    /// the largest entry of `run.levels`.
    pub level: Option<usize>,
    /// Extract the 2×2 kernel from runs started in both states.
    pub matrix: bool,
    /// Absolute accuracy of the NIBA pair-interaction quadrature.
    pub quad_tol: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            level: None,
            matrix: false,
            quad_tol: 1e-10,
        }
    }
}

/// Parameter lists for `sweep`; exactly one may be non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub fit: FitOptions,
    pub run: RunConfig,
    pub kernel: KernelConfig,
    pub sweep: SweepConfig,
    pub tasks: Vec<Task>,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            bath: BathConfig::default(),
            fit: FitOptions::default(),
            run: RunConfig::default(),
            kernel: KernelConfig::default(),
            sweep: SweepConfig::default(),
            tasks: Vec::new(),
            output: PathBuf::from("out"),
        }
    }
}

fn config_error(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {reason}"))
}

/// Parses and validates a TOML document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a TOML config, or the `config` entry of a run manifest (`.json`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let inner = doc.get("config").cloned().unwrap_or(doc);
        let cfg: ExperimentConfig =
            serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    } else {
        parse_config(&text)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(config_error(key, "must be finite"))
            }
        };
        finite("system.epsilon", self.system.epsilon)?;
        if !(self.system.delta > 0.0 && self.system.delta.is_finite()) {
            return Err(config_error(
                "system.delta",
                format!("must be > 0, got {}", self.system.delta),
            ));
        }
        let b = &self.bath;
        if !(b.temperature >= 0.0 && b.temperature.is_finite()) {
            return Err(config_error(
                "bath.temperature",
                format!("must be >= 0, got {}", b.temperature),
            ));
        }
        SpectralParams::new(b.alpha, b.s, b.omega_c).map_err(|e| config_error("bath", e))?;
        self.fit.validate().map_err(|e| config_error("fit", e))?;
        let r = &self.run;
        if !(r.t_final > 0.0 && r.t_final.is_finite()) {
            return Err(config_error(
                "run.t_final",
                format!("must be > 0, got {}", r.t_final),
            ));
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_error("run.dt", format!("must be > 0, got {dt}")));
            }
        }
        if r.record_stride == Some(0) {
            return Err(config_error("run.record_stride", "must be >= 1"));
        }
        if r.levels.iter().any(|&l| l > u8::MAX as usize) {
            return Err(config_error(
                "run.levels",
                "tiers above 255 are not supported",
            ));
        }
        if self.tasks.contains(&Task::Heom) && r.levels.is_empty() {
            return Err(config_error(
                "run.levels",
                "the heom task needs at least one tier",
            ));
        }
        if self.needs_exact_kernel() && self.kernel_level().is_none() {
            return Err(config_error("kernel.level", "set it or give run.levels"));
        }
        if !(self.kernel.quad_tol > 0.0) {
            return Err(config_error("kernel.quad_tol", "must be > 0"));
        }
        if !self.sweep.s.is_empty() && !self.sweep.alpha.is_empty() {
            return Err(config_error("sweep", "give either s or alpha, not both"));
        }
        for &s in &self.sweep.s {
            SpectralParams::new(b.alpha, s, b.omega_c).map_err(|e| config_error("sweep.s", e))?;
        }
        for &a in &self.sweep.alpha {
            SpectralParams::new(a, b.s, b.omega_c).map_err(|e| config_error("sweep.alpha", e))?;
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SpinSystem> {
        SpinSystem::new(self.system.epsilon, self.system.delta)
    }

    pub fn bath(&self) -> Result<BathSpec> {
        let p = SpectralParams::new(self.bath.alpha, self.bath.s, self.bath.omega_c)?;
        BathSpec::new(
            p,
            InverseTemperature::from_temperature(self.bath.temperature)?,
        )
    }

    pub fn has(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }

    pub fn needs_exact_kernel(&self) -> bool {
        self.has(Task::ExtractKernel) || self.has(Task::Rates)
    }

    pub fn kernel_level(&self) -> Option<usize> {
        self.kernel
            .level
            .or_else(|| self.run.levels.iter().copied().max())
    }

    /// Step and stride for `modes`, filled in from the defaults when absent.
    /// The recorded grid must end exactly at `t_final`.
    pub fn resolve_propagator(&self, modes: &ModeSet) -> Result<PropagatorConfig> {
        let r = &self.run;
        let sys = self.system()?;
        let (dt, stride) = match (r.dt, r.record_stride) {
            (Some(dt), Some(k)) => (dt, k),
            (Some(dt), None) => (dt, ((DEFAULT_SAMPLE_SPACING / dt).round() as usize).max(1)),
            (None, stride) => {
                let h = PropagatorConfig::default_step(&sys, modes);
                let spacing = r.t_final / (r.t_final / DEFAULT_SAMPLE_SPACING).ceil();
                let k = stride.unwrap_or_else(|| (spacing / h).ceil() as usize);
                let dt = match stride {
                    Some(k) => {
                        let samples = (r.t_final / (k as f64 * h)).ceil();
                        r.t_final / (samples * k as f64)
                    }
                    None => spacing / k as f64,
                };
                (dt, k)
            }
        };
        let samples = r.t_final / (dt * stride as f64);
        if (samples - samples.round()).abs() > 1e-9 * samples.max(1.0) {
            return Err(config_error(
                "run",
                format!(
                    "t_final = {} is not a multiple of dt·record_stride = {}",
                    r.t_final,
                    dt * stride as f64
                ),
            ));
        }
        let mut cfg = PropagatorConfig::new(dt, r.t_final, stride, modes)
            .map_err(|e| config_error("run.dt", e))?;
        cfg.exploit_symmetry = r.exploit_symmetry;
        Ok(cfg)
    }

    /// The sweep points as `(label, config)` pairs.
    pub fn sweep_points(&self) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::new();
        for &s in &self.sweep.s {
            let mut c = self.clone();
            c.bath.s = s;
            c.sweep = SweepConfig::default();
            out.push((format!("s{s}"), c));
        }
        for &a in &self.sweep.alpha {
            let mut c = self.clone();
            c.bath.alpha = a;
            c.sweep = SweepConfig::default();
            out.push((format!("alpha{a}"), c));
        }
        out
    }
}
