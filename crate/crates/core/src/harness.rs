//! Run configuration, built-in presets, orchestration of single runs and
//! parameter sweeps, reference comparison, and solution output.
//!
//! A `RunConfig` is simultaneously the TOML file format and the validated
//! in-memory configuration: loading a file, applying CLI overrides, and
//! serializing back are all the same struct, so a round trip through TOML
//! is lossless.

use crate::antiderivative::AntiderivativeOperator;
use crate::damping::{DampingConfig, DampingError, DampingMode, GammaKind};
use crate::evolution::{
    compare_fields_on_window, compare_on_window, evolve, EvolveError, EvolveSpec,
};
use crate::ic::{ic_by_name, Expression};
use crate::linkdv::{
    damped_heuristic_periodic_many, exact_solution, undamped_lattice_error_bound,
    undamped_periodic_many, LinkdvError, WavePacketParams,
};
use crate::models::{model_by_name, ModelError, PdeModel, RiemannContext, MODEL_NAMES};
use crate::spectral::{Grid, SpectralError, SpectralField};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("reference file {0}: {1}")]
    BadReferenceFile(PathBuf, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Analysis(#[from] LinkdvError),
}

/// Damping parameters as they appear in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampingSettings {
    /// none | exp | heat | both.
    pub mode: String,
    /// Decay mask shape: right | even.
    pub gamma: String,
    /// Sponge diffusion strength.
    pub k1: f64,
    /// Steps between sponge applications.
    pub f1: usize,
    /// Steps between decay-mask applications.
    pub f2: usize,
    pub cg_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iters: Option<usize>,
}

impl Default for DampingSettings {
    fn default() -> Self {
        DampingSettings {
            mode: "none".into(),
            gamma: "right".into(),
            k1: 1.0,
            f1: 1,
            f2: 1000,
            cg_tol: 1e-10,
            cg_max_iters: None,
        }
    }
}

/// Cross-product sweep axes. `grid` carries paired (L, m) rows and is
/// mutually exclusive with the separate `L` / `m` axes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<(f64, usize)>>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub half_width: Option<Vec<f64>>,
    #[serde(rename = "m", skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f2: Option<Vec<usize>>,
}

impl SweepAxes {
    fn is_empty(&self) -> bool {
        self.grid.is_none()
            && self.half_width.is_none()
            && self.modes.is_none()
            && self.dt.is_none()
            && self.t_final.is_none()
            && self.mode.is_none()
            && self.f2.is_none()
    }
}

fn default_reference() -> String {
    "none".into()
}

/// One complete run description. Scalar fields first so TOML serialization
/// emits plain keys before the damping and sweep tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Domain half-width; the grid covers [-L, L).
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Grid size, a power of two.
    #[serde(rename = "m")]
    pub modes: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Initial condition: a named preset, `expr:<formula>`, or
    /// `gaussian-spectrum` (linkdv only).
    pub initial: String,
    /// none | analytic | auto | path to a solution CSV.
    #[serde(default = "default_reference")]
    pub reference: String,
    /// Domain growth factor for the auto reference (default 5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_scale: Option<f64>,
    #[serde(rename = "reference_L", default, skip_serializing_if = "Option::is_none")]
    pub reference_half_width: Option<f64>,
    #[serde(rename = "reference_m", default, skip_serializing_if = "Option::is_none")]
    pub reference_modes: Option<usize>,
    /// Time step for the auto reference (defaults to dt).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dt: Option<f64>,
    /// Dispersion coefficient for the small-dispersion model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Output directory for solution CSVs and run records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Comparison window [lo, hi]; defaults to the trusted region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// 2/3-rule guard band; off by default so runs match the plain method.
    #[serde(default)]
    pub dealias: bool,
    #[serde(default)]
    pub damping: DampingSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
}

impl RunConfig {
    /// Check every field and report all violations at once.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs: Vec<String> = Vec::new();

        if !MODEL_NAMES.contains(&self.model.as_str()) {
            errs.push(format!(
                "unknown model '{}' (expected one of {})",
                self.model,
                MODEL_NAMES.join("|")
            ));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            errs.push(format!(
                "L must be positive and finite, got {}",
                self.half_width
            ));
        }
        if self.modes < 8 || !self.modes.is_power_of_two() {
            errs.push(format!("m must be a power of two >= 8, got {}", self.modes));
        }
        let dt_ok = self.dt.is_finite() && self.dt > 0.0;
        if !dt_ok {
            errs.push(format!("dt must be positive and finite, got {}", self.dt));
        }
        let t_ok = self.t_final.is_finite() && self.t_final > 0.0;
        if !t_ok {
            errs.push(format!(
                "t_final must be positive and finite, got {}",
                self.t_final
            ));
        }
        if dt_ok && t_ok {
            let steps = self.t_final / self.dt;
            if (steps - steps.round()).abs() > 1e-6 * steps.round().max(1.0) {
                errs.push(format!(
                    "t_final = {} is not an integer multiple of dt = {}",
                    self.t_final, self.dt
                ));
            }
        }

        let derivative_model = matches!(self.model.as_str(), "riemann-kdv" | "kawahara");
        if let Some(src) = self.initial.strip_prefix("expr:") {
            if let Err(e) = Expression::parse(src) {
                errs.push(format!("initial expression: {e}"));
            }
            if derivative_model {
                errs.push(format!(
                    "model '{}' integrates its initial data; use a preset with a stored antiderivative",
                    self.model
                ));
            }
        } else if self.initial == "gaussian-spectrum" {
            if self.model != "linkdv" {
                errs.push("initial 'gaussian-spectrum' only pairs with the linkdv model".into());
            }
        } else {
            match ic_by_name(&self.initial) {
                None => errs.push(format!("unknown initial condition '{}'", self.initial)),
                Some(p) => {
                    if derivative_model && p.primitive_left(self.half_width).is_none() {
                        errs.push(format!(
                            "model '{}' needs an initial condition with a stored antiderivative; '{}' has none",
                            self.model, self.initial
                        ));
                    }
                }
            }
        }

        let mode = self.damping.mode.parse::<DampingMode>();
        if let Err(e) = &mode {
            errs.push(e.clone());
        }
        if let Err(e) = self.damping.gamma.parse::<GammaKind>() {
            errs.push(e);
        }
        if !(self.damping.k1.is_finite() && self.damping.k1 >= 0.0) {
            errs.push(format!(
                "k1 must be finite and nonnegative, got {}",
                self.damping.k1
            ));
        }
        if self.damping.f1 == 0 || self.damping.f2 == 0 {
            errs.push("f1 and f2 must be at least 1".into());
        }
        if !(self.damping.cg_tol.is_finite() && self.damping.cg_tol > 0.0) {
            errs.push(format!(
                "cg_tol must be positive and finite, got {}",
                self.damping.cg_tol
            ));
        }
        if self.damping.cg_max_iters == Some(0) {
            errs.push("cg_max_iters must be at least 1".into());
        }
        if let Ok(m) = mode {
            if m != DampingMode::None && self.half_width <= 20.0 {
                errs.push(format!(
                    "L = {} is too small for the standard damping layout (needs > 20)",
                    self.half_width
                ));
            }
        }

        if let Some([lo, hi]) = self.window {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                errs.push(format!("window [{lo}, {hi}] is empty or not finite"));
            } else if lo < -self.half_width || hi > self.half_width {
                errs.push(format!(
                    "window [{lo}, {hi}] exceeds the domain [{}, {}]",
                    -self.half_width, self.half_width
                ));
            }
        }

        match self.reference.as_str() {
            "none" | "auto" => {}
            "analytic" => {
                if analytic_reference(&self.model, &self.initial).is_none() {
                    errs.push(format!(
                        "no analytic solution registered for model '{}' with initial '{}'",
                        self.model, self.initial
                    ));
                }
            }
            path => {
                if !Path::new(path).is_file() {
                    errs.push(format!("reference file '{path}' does not exist"));
                }
            }
        }
        if self.reference == "auto" {
            if let Some(s) = self.reference_scale {
                if !(s.is_finite() && s >= 1.0) {
                    errs.push(format!("reference_scale must be >= 1, got {s}"));
                }
            }
            if let Some(l) = self.reference_half_width {
                if !(l.is_finite() && l >= self.half_width) {
                    errs.push(format!(
                        "reference_L must cover the run domain (L = {}), got {l}",
                        self.half_width
                    ));
                }
            }
            if let Some(m) = self.reference_modes {
                if m < self.modes || !m.is_power_of_two() {
                    errs.push(format!(
                        "reference_m must be a power of two >= m = {}, got {m}",
                        self.modes
                    ));
                }
            }
            if let Some(dt) = self.reference_dt {
                if !(dt.is_finite() && dt > 0.0) {
                    errs.push(format!(
                        "reference_dt must be positive and finite, got {dt}"
                    ));
                }
            }
        } else if self.reference_scale.is_some()
            || self.reference_half_width.is_some()
            || self.reference_modes.is_some()
            || self.reference_dt.is_some()
        {
            errs.push(
                "reference_scale / reference_L / reference_m / reference_dt only apply when \
                 reference = \"auto\""
                    .into(),
            );
        }

        if let Some(e) = self.epsilon {
            if self.model != "riemann-kdv" {
                errs.push("epsilon only applies to the riemann-kdv model".into());
            } else if !(e.is_finite() && e > 0.0) {
                errs.push(format!("epsilon must be positive and finite, got {e}"));
            }
        }

        if self.workers == Some(0) {
            errs.push("workers must be at least 1".into());
        }

        if let Some(axes) = &self.sweep {
            if axes.is_empty() {
                errs.push("sweep declared with no axes".into());
            }
            if axes.grid.is_some() && (axes.half_width.is_some() || axes.modes.is_some()) {
                errs.push("sweep grid pairs and separate L / m axes are mutually exclusive".into());
            }
            let empties = [
                ("grid", axes.grid.as_ref().map(Vec::is_empty)),
                ("L", axes.half_width.as_ref().map(Vec::is_empty)),
                ("m", axes.modes.as_ref().map(Vec::is_empty)),
                ("dt", axes.dt.as_ref().map(Vec::is_empty)),
                ("t_final", axes.t_final.as_ref().map(Vec::is_empty)),
                ("mode", axes.mode.as_ref().map(Vec::is_empty)),
                ("f2", axes.f2.as_ref().map(Vec::is_empty)),
            ];
            for (name, empty) in empties {
                if empty == Some(true) {
                    errs.push(format!("sweep axis '{name}' is empty"));
                }
            }
            if let Some(modes) = &axes.mode {
                for m in modes {
                    if let Err(e) = m.parse::<DampingMode>() {
                        errs.push(format!("sweep axis 'mode': {e}"));
                    }
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }
}

/// CLI-level overrides applied on top of a file or preset configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub half_width: Option<f64>,
    pub modes: Option<usize>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub initial: Option<String>,
    pub mode: Option<String>,
    pub gamma: Option<String>,
    pub k1: Option<f64>,
    pub f1: Option<usize>,
    pub f2: Option<usize>,
    pub cg_tol: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub reference: Option<String>,
    pub reference_scale: Option<f64>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub label: Option<String>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = &self.model {
            config.model = v.clone();
        }
        if let Some(v) = self.half_width {
            config.half_width = v;
        }
        if let Some(v) = self.modes {
            config.modes = v;
        }
        if let Some(v) = self.dt {
            config.dt = v;
        }
        if let Some(v) = self.t_final {
            config.t_final = v;
        }
        if let Some(v) = &self.initial {
            config.initial = v.clone();
        }
        if let Some(v) = &self.mode {
            config.damping.mode = v.clone();
        }
        if let Some(v) = &self.gamma {
            config.damping.gamma = v.clone();
        }
        if let Some(v) = self.k1 {
            config.damping.k1 = v;
        }
        if let Some(v) = self.f1 {
            config.damping.f1 = v;
        }
        if let Some(v) = self.f2 {
            config.damping.f2 = v;
        }
        if let Some(v) = self.cg_tol {
            config.damping.cg_tol = v;
        }
        if let Some(v) = self.window {
            config.window = Some(v);
        }
        if let Some(v) = &self.reference {
            config.reference = v.clone();
        }
        if let Some(v) = self.reference_scale {
            config.reference_scale = Some(v);
        }
        if let Some(v) = self.epsilon {
            config.epsilon = Some(v);
        }
        if let Some(v) = &self.out {
            config.out = Some(v.clone());
        }
        if let Some(v) = self.workers {
            config.workers = Some(v);
        }
        if let Some(v) = &self.label {
            config.label = Some(v.clone());
        }
    }
}

/// Resolve a configuration from a file or a preset (exactly one), apply
/// overrides, and validate.
pub fn load_config(
    file: Option<&Path>,
    preset_name: Option<&str>,
    overrides: &Overrides,
) -> Result<RunConfig, HarnessError> {
    let mut config = match (file, preset_name) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::Invalid(vec![
                "give a config file or a preset, not both".into(),
            ]))
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))?
        }
        (None, Some(name)) => {
            preset(name).ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?
        }
        // No file and no preset: a run can still be fully described by
        // flags alone if every required field is present.
        (None, None) => {
            let missing: Vec<&str> = [
                ("model", overrides.model.is_some()),
                ("L", overrides.half_width.is_some()),
                ("m", overrides.modes.is_some()),
                ("dt", overrides.dt.is_some()),
                ("t-final", overrides.t_final.is_some()),
                ("initial", overrides.initial.is_some()),
            ]
            .iter()
            .filter(|(_, present)| !present)
            .map(|(name, _)| *name)
            .collect();
            if !missing.is_empty() {
                return Err(HarnessError::Invalid(vec![format!(
                    "no config file or preset given, and flags are missing: {}",
                    missing.join(", ")
                )]));
            }
            base_config(
                overrides.model.as_deref().unwrap(),
                overrides.half_width.unwrap(),
                overrides.modes.unwrap(),
                overrides.dt.unwrap(),
                overrides.t_final.unwrap(),
                overrides.initial.as_deref().unwrap(),
            )
        }
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn base_config(
    model: &str,
    half_width: f64,
    modes: usize,
    dt: f64,
    t_final: f64,
    initial: &str,
) -> RunConfig {
    RunConfig {
        model: model.into(),
        half_width,
        modes,
        dt,
        t_final,
        initial: initial.into(),
        reference: "none".into(),
        reference_scale: None,
        reference_half_width: None,
        reference_modes: None,
        reference_dt: None,
        epsilon: None,
        workers: None,
        label: None,
        out: None,
        window: None,
        dealias: false,
        damping: DampingSettings::default(),
        sweep: None,
    }
}

fn damped(mode: &str, gamma: &str, f2: usize) -> DampingSettings {
    DampingSettings {
        mode: mode.into(),
        gamma: gamma.into(),
        f2,
        ..DampingSettings::default()
    }
}

/// Built-in preset names with one-line descriptions, in listing order.
pub fn preset_names() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "kdv-soliton",
            "KdV soliton on [-30, 30] to t = 1 against the analytic solution",
        ),
        (
            "nls-soliton",
            "Cubic Schroedinger bright soliton on [-30, 30] to t = 1 against the analytic solution",
        ),
        (
            "kdv-t150",
            "Damped KdV Gaussian on [-600, 600] to t = 150 with a pinned large-domain reference",
        ),
        (
            "kdv-two-soliton",
            "Damped KdV two-soliton field on [-200, 200] to t = 5",
        ),
        (
            "kdv-table1",
            "KdV Gaussian domain-size sweep to t = 150, undamped and damped cells",
        ),
        (
            "nls-t150",
            "Damped cubic Schroedinger wave packet on [-1200, 1200] to t = 150",
        ),
        (
            "linkdv-table2",
            "Heat-damped linear KdV wave packet on [-200, 200] to t = 150",
        ),
        (
            "eckhaus",
            "Damped Eckhaus Gaussian on [-200, 200] to t = 10",
        ),
        (
            "riemann-kdv-t25",
            "Small-dispersion KdV step data on [-40, 40] to t = 25",
        ),
        (
            "riemann-sech",
            "Small-dispersion KdV sech trough on [-40, 40] to t = 5",
        ),
        (
            "riemann-soliton-shelf",
            "Small-dispersion KdV step plus soliton bump on [-40, 40] to t = 5",
        ),
        (
            "kawahara-t24",
            "Damped fifth-order step data on [-1000, 1000] to t = 24",
        ),
        (
            "kawahara-reference",
            "Undamped fifth-order reference domain (runs for many hours)",
        ),
    ]
}

/// Build a named preset configuration, or None if the name is unknown.
pub fn preset(name: &str) -> Option<RunConfig> {
    let mut c = match name {
        "kdv-soliton" => {
            let mut c = base_config("kdv", 30.0, 1024, 1e-3, 1.0, "kdv-soliton");
            c.reference = "analytic".into();
            c
        }
        "nls-soliton" => {
            let mut c = base_config("nls", 30.0, 1024, 1e-3, 1.0, "nls-soliton");
            c.reference = "analytic".into();
            c
        }
        "kdv-t150" => {
            let mut c = base_config("kdv", 600.0, 4096, 0.01, 150.0, "gaussian-1.3");
            c.damping = damped("both", "right", 1000);
            c.window = Some([-99.85, 100.05]);
            c.reference = "auto".into();
            c.reference_half_width = Some(10000.0);
            c.reference_modes = Some(1 << 16);
            c
        }
        "kdv-two-soliton" => {
            let mut c = base_config("kdv", 200.0, 2048, 1e-3, 5.0, "two-soliton-gaussian");
            c.damping = damped("both", "right", 1000);
            c
        }
        "kdv-table1" => {
            let mut c = base_config("kdv", 100.0, 512, 0.01, 150.0, "gaussian-1.3");
            c.damping = damped("both", "right", 1000);
            c.reference = "auto".into();
            c.sweep = Some(SweepAxes {
                grid: Some(vec![
                    (100.0, 512),
                    (200.0, 1024),
                    (600.0, 4096),
                    (1200.0, 8192),
                ]),
                mode: Some(vec!["none".into(), "both".into()]),
                ..SweepAxes::default()
            });
            c
        }
        "nls-t150" => {
            let mut c = base_config("nls", 1200.0, 8192, 0.01, 150.0, "nls-packet");
            c.damping = damped("exp", "even", 1000);
            c.window = Some([-100.0, 100.0]);
            c.reference = "auto".into();
            c
        }
        "linkdv-table2" => {
            let mut c = base_config("linkdv", 200.0, 1024, 0.01, 150.0, "gaussian-spectrum");
            c.damping = damped("heat", "right", 1000);
            c
        }
        "eckhaus" => {
            let mut c = base_config("eckhaus", 200.0, 1024, 0.01, 10.0, "gaussian");
            c.damping = damped("exp", "even", 1000);
            c
        }
        "riemann-kdv-t25" => {
            // The shock's spectral content reaches the grid cutoff, so this
            // run needs the guard band and a one-time-unit mask cadence to
            // absorb wrap-around radiation before it re-enters the window.
            let mut c = base_config("riemann-kdv", 40.0, 4096, 0.01, 25.0, "riemann-logistic");
            c.damping = damped("exp", "even", 100);
            c.epsilon = Some(10f64.powf(-1.5));
            c.dealias = true;
            c
        }
        "riemann-sech" => {
            let mut c = base_config("riemann-kdv", 40.0, 4096, 1e-3, 5.0, "riemann-sech");
            c.damping = damped("exp", "even", 1000);
            c.epsilon = Some(10f64.powf(-1.5));
            c
        }
        "riemann-soliton-shelf" => {
            let mut c = base_config("riemann-kdv", 40.0, 4096, 1e-3, 5.0, "riemann-shelf");
            c.damping = damped("exp", "even", 1000);
            c.epsilon = Some(10f64.powf(-1.5));
            c
        }
        "kawahara-t24" => {
            let mut c = base_config("kawahara", 1000.0, 1 << 15, 0.01, 24.0, "kawahara-logistic");
            c.damping = damped("exp", "even", 100);
            c
        }
        "kawahara-reference" => base_config("kawahara", 1e5, 1 << 22, 5e-4, 24.0, "kawahara-logistic"),
        _ => return None,
    };
    c.label = Some(name.to_string());
    Some(c)
}

/// Outcome of one finished (or failed) run. `max_window_error` is present
/// only when a reference was configured and the run completed; for models
/// that evolve a derivative it is measured on the evolved field (both sides
/// are periodic), while the emitted solution file carries the reconstructed
/// antiderivative.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_window_error: Option<f64>,
    pub wall_seconds: f64,
    pub steps: usize,
    pub cg_iterations: usize,
    pub blew_up: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_sha256: Option<String>,
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn effective_label(config: &RunConfig) -> String {
    sanitize_label(config.label.as_deref().unwrap_or(&config.model))
}

/// Physical initial samples for a configuration on the given grid. The grid
/// may be larger than the configured domain (auto references resample the
/// same initial data there).
pub fn initial_samples(config: &RunConfig, grid: &Grid) -> Result<Vec<Complex64>, HarnessError> {
    if config.initial == "gaussian-spectrum" {
        let wp = WavePacketParams::gaussian(grid.half_width())?;
        let two_l = 2.0 * grid.half_width();
        let coeffs: Vec<Complex64> = grid
            .wavenumbers()
            .iter()
            .map(|&k| wp.q0_hat(k) / two_l)
            .collect();
        return Ok(SpectralField::from_coeffs(grid, coeffs)?.to_physical());
    }
    if let Some(src) = config.initial.strip_prefix("expr:") {
        let e = Expression::parse(src)
            .map_err(|err| HarnessError::Invalid(vec![format!("initial expression: {err}")]))?;
        return Ok(e.sample(grid));
    }
    match ic_by_name(&config.initial) {
        Some(p) => Ok(p.sample(grid)),
        None => Err(HarnessError::Invalid(vec![format!(
            "unknown initial condition '{}'",
            config.initial
        )])),
    }
}

/// Instantiate the configured model on a grid. Derivative-form models take
/// their left pin from the initial condition's stored antiderivative at the
/// grid's own left edge.
pub fn build_model(config: &RunConfig, grid: &Grid) -> Result<PdeModel, HarnessError> {
    let c_minus = ic_by_name(&config.initial)
        .and_then(|p| p.primitive_left(grid.half_width()))
        .unwrap_or(0.0);
    let ctx = RiemannContext {
        c_minus,
        epsilon: config
            .epsilon
            .unwrap_or_else(|| RiemannContext::default().epsilon),
    };
    Ok(model_by_name(&config.model, grid, &ctx)?)
}

/// Translate the damping settings into a runnable configuration.
pub fn build_damping(config: &RunConfig, grid: &Grid) -> Result<DampingConfig, HarnessError> {
    let mode: DampingMode = config
        .damping
        .mode
        .parse()
        .map_err(|e: String| HarnessError::Invalid(vec![e]))?;
    if mode == DampingMode::None {
        return Ok(DampingConfig::none(grid));
    }
    let kind: GammaKind = config
        .damping
        .gamma
        .parse()
        .map_err(|e: String| HarnessError::Invalid(vec![e]))?;
    let mut d = DampingConfig::standard(grid, mode, kind)?;
    d.k1 = config.damping.k1;
    d.f1 = config.damping.f1;
    d.f2 = config.damping.f2;
    d.cg_tol = config.damping.cg_tol;
    if let Some(n) = config.damping.cg_max_iters {
        d.cg_max_iters = n;
    }
    d.validate(grid)?;
    Ok(d)
}

/// The physical-space solution of record for a finished run: the evolved
/// field itself, or its mean-aware antiderivative for derivative-form
/// models.
pub fn solution_samples(
    model: &PdeModel,
    field: &SpectralField,
) -> Result<Vec<Complex64>, HarnessError> {
    match model.primitive_left() {
        Some(left) => Ok(AntiderivativeOperator::new(model.grid(), left).apply(field)?),
        None => Ok(field.to_physical()),
    }
}

enum AnalyticRef {
    Pointwise(Box<dyn Fn(f64, f64) -> Complex64 + Send + Sync>),
    LinkdvLattice,
}

fn analytic_reference(model: &str, initial: &str) -> Option<AnalyticRef> {
    match (model, initial) {
        ("kdv", "kdv-soliton") => Some(AnalyticRef::Pointwise(Box::new(|x, t| {
            let s = 1.0 / (x - 4.0 * t).cosh();
            Complex64::new(2.0 * s * s, 0.0)
        }))),
        ("nls", "nls-soliton") => Some(AnalyticRef::Pointwise(Box::new(|x, t| {
            Complex64::new(0.0, x).exp() / (x - 2.0 * t).cosh()
        }))),
        ("linkdv", "gaussian-spectrum") => Some(AnalyticRef::LinkdvLattice),
        _ => None,
    }
}

fn default_window(config: &RunConfig, damping: &DampingConfig) -> (f64, f64) {
    if damping.mode == DampingMode::None {
        (-config.half_width, config.half_width)
    } else {
        let r = damping.profile.comparison_half_width();
        (-r, r)
    }
}

fn auto_reference_field(config: &RunConfig) -> Result<SpectralField, HarnessError> {
    let scale = config.reference_scale.unwrap_or(5.0);
    let ref_l = config
        .reference_half_width
        .unwrap_or(scale * config.half_width);
    let ref_m = config.reference_modes.unwrap_or_else(|| {
        ((config.modes as f64 * scale).ceil() as usize).next_power_of_two()
    });
    let ref_grid = Grid::new(ref_l, ref_m)?;
    let model = build_model(config, &ref_grid)?;
    let initial = initial_samples(config, &ref_grid)?;
    let spec = EvolveSpec::new(
        model,
        config.reference_dt.unwrap_or(config.dt),
        config.t_final,
        DampingConfig::none(&ref_grid),
    );
    Ok(evolve(&initial, &spec)?.final_field)
}

fn reference_error(
    config: &RunConfig,
    grid: &Grid,
    model: &PdeModel,
    final_field: &SpectralField,
    damping: &DampingConfig,
) -> Result<Option<f64>, HarnessError> {
    let window = config
        .window
        .map(|[lo, hi]| (lo, hi))
        .unwrap_or_else(|| default_window(config, damping));
    match config.reference.as_str() {
        "none" => Ok(None),
        "analytic" => {
            let reference = analytic_reference(&config.model, &config.initial)
                .expect("validated before running");
            let phys = final_field.to_physical();
            let t = config.t_final;
            let in_window =
                |x: f64| -> bool { window.0 <= x && x <= window.1 };
            let max = match reference {
                AnalyticRef::Pointwise(f) => {
                    let mut max = 0.0f64;
                    let mut seen = false;
                    for (&x, &v) in grid.points().iter().zip(&phys) {
                        if in_window(x) {
                            seen = true;
                            max = max.max((v - f(x, t)).norm());
                        }
                    }
                    if !seen {
                        return Err(HarnessError::Evolve(EvolveError::BadWindow {
                            lo: window.0,
                            hi: window.1,
                        }));
                    }
                    max
                }
                AnalyticRef::LinkdvLattice => {
                    let wp = WavePacketParams::gaussian(grid.half_width())?;
                    let mut xs = Vec::new();
                    let mut ours = Vec::new();
                    for (&x, &v) in grid.points().iter().zip(&phys) {
                        if in_window(x) {
                            xs.push(x);
                            ours.push(v);
                        }
                    }
                    if xs.is_empty() {
                        return Err(HarnessError::Evolve(EvolveError::BadWindow {
                            lo: window.0,
                            hi: window.1,
                        }));
                    }
                    let exact = undamped_periodic_many(&xs, t, &wp);
                    ours.iter()
                        .zip(&exact)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                }
            };
            Ok(Some(max))
        }
        "auto" => {
            let reference = auto_reference_field(config)?;
            Ok(Some(compare_fields_on_window(
                final_field,
                &reference,
                window,
            )?))
        }
        path => {
            let path = PathBuf::from(path);
            let (xs, vals) = read_solution_csv(&path)?;
            if xs.len() != grid.modes() {
                return Err(HarnessError::BadReferenceFile(
                    path,
                    format!("expected {} rows, got {}", grid.modes(), xs.len()),
                ));
            }
            for (i, (&a, &b)) in xs.iter().zip(grid.points()).enumerate() {
                if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
                    return Err(HarnessError::BadReferenceFile(
                        path,
                        format!("grid mismatch at row {}: {} vs {}", i + 2, a, b),
                    ));
                }
            }
            let ours = solution_samples(model, final_field)?;
            Ok(Some(compare_on_window(&ours, &vals, grid, window)?))
        }
    }
}

/// Write physical samples as a `x,re,im` CSV and return the file's sha256.
/// Values print in shortest round-trip form, so re-emitting the same field
/// reproduces the file and the digest bit for bit.
pub fn emit_solution(
    grid: &Grid,
    samples: &[Complex64],
    path: &Path,
) -> Result<String, HarnessError> {
    if samples.len() != grid.modes() {
        return Err(HarnessError::Spectral(SpectralError::LengthMismatch {
            expected: grid.modes(),
            got: samples.len(),
        }));
    }
    let mut text = String::with_capacity(32 * samples.len() + 8);
    text.push_str("x,re,im\n");
    for (&x, v) in grid.points().iter().zip(samples) {
        let _ = writeln!(text, "{},{},{}", x, v.re, v.im);
    }
    fs::write(path, &text)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Read a solution CSV back as grid points and complex samples.
pub fn read_solution_csv(path: &Path) -> Result<(Vec<f64>, Vec<Complex64>), HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x,re,im") {
        return Err(HarnessError::BadReferenceFile(
            path.to_path_buf(),
            "missing x,re,im header".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = i + 2;
        let mut parts = line.split(',');
        let mut field = |name: &str| -> Result<f64, HarnessError> {
            parts
                .next()
                .ok_or(())
                .and_then(|s| s.parse::<f64>().map_err(|_| ()))
                .map_err(|_| {
                    HarnessError::BadReferenceFile(
                        path.to_path_buf(),
                        format!("bad {name} value at row {row}"),
                    )
                })
        };
        let x = field("x")?;
        let re = field("re")?;
        let im = field("im")?;
        xs.push(x);
        vals.push(Complex64::new(re, im));
    }
    Ok((xs, vals))
}

/// Run one configuration to completion. Numerical failures (blow-up, a
/// stalled sponge solve) come back as a record with `failure` set rather
/// than an error; everything else is a hard error.
pub fn run(config: &RunConfig) -> Result<RunRecord, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let grid = Grid::new(config.half_width, config.modes)?;
    let model = build_model(config, &grid)?;
    let initial = initial_samples(config, &grid)?;
    let damping = build_damping(config, &grid)?;
    let mut spec = EvolveSpec::new(model.clone(), config.dt, config.t_final, damping.clone());
    spec.dealias = config.dealias;
    let label = effective_label(config);

    let mut record = RunRecord {
        label: label.clone(),
        config: config.clone(),
        max_window_error: None,
        wall_seconds: 0.0,
        steps: 0,
        cg_iterations: 0,
        blew_up: false,
        failure: None,
        solution_path: None,
        solution_sha256: None,
    };

    match evolve(&initial, &spec) {
        Ok(result) => {
            record.steps = result.steps_taken;
            record.cg_iterations = result.cg_iterations_total;
            record.max_window_error =
                reference_error(config, &grid, &model, &result.final_field, &damping)?;
            if let Some(dir) = &config.out {
                fs::create_dir_all(dir)?;
                let samples = solution_samples(&model, &result.final_field)?;
                let csv_path = dir.join(format!("{label}.csv"));
                let digest = emit_solution(&grid, &samples, &csv_path)?;
                record.solution_path = Some(csv_path.to_string_lossy().into_owned());
                record.solution_sha256 = Some(digest);
            }
        }
        Err(EvolveError::BlowUp { step, time }) => {
            record.blew_up = true;
            record.steps = step;
            record.failure = Some(format!("solution blew up at step {step} (t = {time})"));
        }
        Err(EvolveError::Cg { step, time, source }) => {
            record.steps = step;
            record.failure = Some(format!(
                "heat damping failed at step {step} (t = {time}): {source}"
            ));
        }
        Err(other) => return Err(other.into()),
    }
    record.wall_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&record).expect("record serializes");
        fs::write(dir.join(format!("{label}.json")), json)?;
    }
    Ok(record)
}

fn apply_axis<T>(
    cells: Vec<RunConfig>,
    values: &[T],
    set: &dyn Fn(&mut RunConfig, &T) -> String,
) -> Vec<RunConfig> {
    cells
        .into_iter()
        .flat_map(|cell| {
            values.iter().map(move |v| {
                let mut next = cell.clone();
                let piece = set(&mut next, v);
                let base = next.label.take().unwrap_or_default();
                next.label = Some(if base.is_empty() {
                    piece
                } else {
                    format!("{base}-{piece}")
                });
                next
            })
        })
        .collect()
}

/// Expand the sweep axes into fully labelled single-run cells (the config
/// itself, unchanged, when no sweep is declared). Every cell re-validates,
/// so an axis value that breaks an invariant is reported with its label.
pub fn expand_sweep(config: &RunConfig) -> Result<Vec<RunConfig>, HarnessError> {
    let axes = match &config.sweep {
        Some(a) => a.clone(),
        None => return Ok(vec![config.clone()]),
    };
    let mut seed = config.clone();
    seed.sweep = None;
    seed.label = Some(effective_label(config));
    let mut cells = vec![seed];

    if let Some(grid) = &axes.grid {
        cells = apply_axis(cells, grid, &|c, &(l, m)| {
            c.half_width = l;
            c.modes = m;
            format!("L{l}-m{m}")
        });
    }
    if let Some(ls) = &axes.half_width {
        cells = apply_axis(cells, ls, &|c, &l| {
            c.half_width = l;
            format!("L{l}")
        });
    }
    if let Some(ms) = &axes.modes {
        cells = apply_axis(cells, ms, &|c, &m| {
            c.modes = m;
            format!("m{m}")
        });
    }
    if let Some(dts) = &axes.dt {
        cells = apply_axis(cells, dts, &|c, &dt| {
            c.dt = dt;
            format!("dt{dt}")
        });
    }
    if let Some(ts) = &axes.t_final {
        cells = apply_axis(cells, ts, &|c, &t| {
            c.t_final = t;
            format!("T{t}")
        });
    }
    if let Some(modes) = &axes.mode {
        cells = apply_axis(cells, modes, &|c, m| {
            c.damping.mode = m.clone();
            m.clone()
        });
    }
    if let Some(f2s) = &axes.f2 {
        cells = apply_axis(cells, f2s, &|c, &f2| {
            c.damping.f2 = f2;
            format!("f2-{f2}")
        });
    }

    for cell in &mut cells {
        cell.label = Some(sanitize_label(cell.label.as_deref().unwrap_or_default()));
        cell.validate().map_err(|e| match e {
            HarnessError::Invalid(msgs) => HarnessError::Invalid(
                msgs.into_iter()
                    .map(|m| format!("cell {}: {m}", cell.label.as_deref().unwrap_or("?")))
                    .collect(),
            ),
            other => other,
        })?;
    }
    Ok(cells)
}

/// Run every sweep cell (in parallel when `workers` allows) and return the
/// records sorted by label. With an output directory set, each cell writes
/// its own files and the sorted collection lands in sweep.json.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let cells = expand_sweep(config)?;
    let outcome: Result<Vec<RunRecord>, HarnessError> = match config.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Invalid(vec![format!("worker pool: {e}")]))?;
            pool.install(|| cells.par_iter().map(run).collect())
        }
        None => cells.par_iter().map(run).collect(),
    };
    let mut records = outcome?;
    records.sort_by(|a, b| a.label.cmp(&b.label));
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&records).expect("records serialize");
        fs::write(dir.join("sweep.json"), json)?;
    }
    Ok(records)
}

/// Domain-size ladder for the damped-heuristic check: (half-width, modes,
/// expected sup deviation between the damped solver and the heuristic).
pub const HEURISTIC_LADDER: [(f64, usize, f64); 4] = [
    (100.0, 512, 0.02),
    (200.0, 1024, 0.01),
    (600.0, 4096, 0.007),
    (1200.0, 8192, 0.003),
];

/// One measured deviation between the heat-damped linear solver and the
/// damped spectral heuristic, taken over the grid points clear of the
/// sponge.
#[derive(Clone, Debug, Serialize)]
pub struct HeuristicCheck {
    pub half_width: f64,
    pub modes: usize,
    /// Grid points in the comparison set (sigma <= 1e-6).
    pub window_points: usize,
    pub measured: f64,
}

/// Evolve the Gaussian-spectrum wave packet under heat damping and compare
/// against the damped heuristic on the sponge-free grid points.
pub fn heuristic_deviation(
    half_width: f64,
    modes: usize,
    dt: f64,
    t_final: f64,
) -> Result<HeuristicCheck, HarnessError> {
    let grid = Grid::new(half_width, modes)?;
    let wp = WavePacketParams::gaussian(half_width)?;
    let two_l = 2.0 * half_width;
    let coeffs: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|&k| wp.q0_hat(k) / two_l)
        .collect();
    let initial = SpectralField::from_coeffs(&grid, coeffs)?.to_physical();
    let model = crate::models::linkdv(&grid);
    let damping = DampingConfig::standard(&grid, DampingMode::Heat, GammaKind::Right)?;
    let sigma = damping.profile.sigma().to_vec();
    let spec = EvolveSpec::new(model, dt, t_final, damping);
    let result = evolve(&initial, &spec)?;
    let phys = result.final_field.to_physical();

    let mut xs = Vec::new();
    let mut solver = Vec::new();
    for ((&x, &s), &v) in grid.points().iter().zip(&sigma).zip(&phys) {
        if s <= 1e-6 {
            xs.push(x);
            solver.push(v);
        }
    }
    let heuristic = damped_heuristic_periodic_many(&xs, t_final, &wp);
    let measured = solver
        .iter()
        .zip(&heuristic)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(HeuristicCheck {
        half_width,
        modes,
        window_points: xs.len(),
        measured,
    })
}

/// Measured versus bounded lattice truncation error at one operating point.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub t: f64,
    pub half_width: f64,
    pub measured: f64,
    pub bound: f64,
}

/// For each (t, L) pair, the sup over sampled comparison points of
/// |exact - lattice| next to the a-priori bound that must dominate it.
pub fn undamped_bound_sweep(
    ts: &[f64],
    half_widths: &[f64],
    delta: f64,
    comparison_half_width: f64,
    points_per_interval: usize,
) -> Result<Vec<BoundCheck>, HarnessError> {
    let n = points_per_interval.max(2);
    let r = comparison_half_width;
    let xs: Vec<f64> = (0..n)
        .map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64)
        .collect();
    let mut out = Vec::new();
    for &t in ts {
        for &l in half_widths {
            let wp = WavePacketParams::gaussian(l)?.with_comparison_half_width(r)?;
            let lattice = undamped_periodic_many(&xs, t, &wp);
            let mut measured = 0.0f64;
            for (&x, &lat) in xs.iter().zip(&lattice) {
                let exact = exact_solution(x, t, &wp)?;
                measured = measured.max((exact - lat).norm());
            }
            let bound = undamped_lattice_error_bound(t, delta, &wp)?;
            out.push(BoundCheck {
                t,
                half_width: l,
                measured,
                bound,
            });
        }
    }
    Ok(out)
}
