//! Experiment configuration: TOML parsing, defaults, validation and the
//! built-in presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Thresholds;
use crate::dynamics::{SimulationConfig, Variant, MAX_DT};
use crate::error::{Error, Result};
use crate::measure::InitialMeasure;
use crate::potential::TrigPotential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialPreset {
    /// `V = 0`.
    Uniform,
    /// `V = a cos(4 pi x1) + b sin(2 pi x1) + c cos(2 pi x2)`.
    Separable,
    /// `V = h cos(4 pi x1) + c cos(2 pi x2) + gamma cos(2 pi (x1 - x2))`.
    DoubleWell,
    /// `V = amplitude cos(2 pi x1)`.
    Cosine,
}

impl PotentialPreset {
    pub fn name(self) -> &'static str {
        match self {
            PotentialPreset::Uniform => "uniform",
            PotentialPreset::Separable => "separable",
            PotentialPreset::DoubleWell => "double-well",
            PotentialPreset::Cosine => "cosine",
        }
    }

    fn default_beta(self) -> f64 {
        match self {
            PotentialPreset::DoubleWell => 4.0,
            _ => 1.0,
        }
    }

    fn accepts(self, key: &str) -> bool {
        matches!(
            (self, key),
            (PotentialPreset::Separable, "a" | "b" | "c")
                | (PotentialPreset::DoubleWell, "h" | "c" | "gamma")
                | (PotentialPreset::Cosine, "amplitude")
        )
    }
}

/// Preset parameters. Unset entries take the preset defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

impl PotentialParams {
    fn entries(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("h", self.h),
            ("gamma", self.gamma),
            ("amplitude", self.amplitude),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub epsilon: f64,
    pub floor_delta: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            floor_delta: 0.01,
        }
    }
}

/// Linear checkpoints plus an optional geometric ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointConfig {
    pub linear: usize,
    pub geometric_start: f64,
    pub per_e_fold: usize,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        Self {
            linear: 100,
            geometric_start: 1.0,
            per_e_fold: 10,
        }
    }
}

/// Fixed bias for the frozen variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrozenBias {
    #[default]
    Zero,
    AInfinity,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Quadrature points per dimension; `None` picks by dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_points: Option<usize>,
    pub profile_resolution: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            quadrature_points: None,
            profile_resolution: 512,
        }
    }
}

/// Diagnostics evaluated after the runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub thresholds: Thresholds,
    /// Batches for batch-means standard errors.
    pub batches: usize,
    /// Bins for the flat-histogram check.
    pub histogram_bins: usize,
    /// Standard errors allowed for the reweighting estimator.
    pub reweight_max_z: f64,
    /// Binomial bands allowed for the flat-histogram check.
    pub histogram_max_z: f64,
    /// APT window start points `s`.
    pub apt_s: Vec<f64>,
    pub apt_window: f64,
    pub apt_band: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            batches: 20,
            histogram_bins: 64,
            reweight_max_z: 4.0,
            histogram_max_z: 3.0,
            apt_s: vec![2.0, 3.0, 4.0, 5.0],
            apt_window: 1.0,
            apt_band: 0.02,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_total_time() -> f64 {
    1e3
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Abp]
}
fn default_family() -> usize {
    40
}
fn default_histogram() -> usize {
    256
}
fn default_refresh() -> usize {
    10
}
fn default_one() -> f64 {
    1.0
}
fn default_step_cap() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub preset: PotentialPreset,
    #[serde(default)]
    pub potential: PotentialParams,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizon `T` in the integrator clock of each variant.
    #[serde(default = "default_total_time")]
    pub total_time: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub checkpoints: CheckpointConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_family")]
    pub family_size: usize,
    #[serde(default = "default_histogram")]
    pub histogram_size: usize,
    #[serde(default = "default_refresh")]
    pub refresh_every: usize,
    #[serde(default = "default_one")]
    pub prior_weight: f64,
    #[serde(default = "default_step_cap")]
    pub step_cap: f64,
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_measure: InitialMeasure,
    #[serde(default)]
    pub frozen_bias: FrozenBias,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

/// Parse TOML text, fill defaults and validate. Errors name the key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::config(if path == "." { String::new() } else { path }, inner.message().to_string())
    })?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// A config with every default applied for `preset`.
    pub fn new(preset: PotentialPreset) -> Self {
        parse_config(&format!("preset = \"{}\"", preset.name())).expect("defaults are valid")
    }

    /// Built-in experiments: `uniform-smoke` and `double-well-acceptance`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "uniform-smoke" => UNIFORM_SMOKE,
            "double-well-acceptance" => DOUBLE_WELL_ACCEPTANCE,
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown experiment preset `{other}` (known: uniform-smoke, double-well-acceptance)"),
                ))
            }
        };
        parse_config(text)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["uniform-smoke", "double-well-acceptance"]
    }

    fn fill_defaults(&mut self) {
        if self.name.is_empty() {
            self.name = self.preset.name().to_string();
        }
        self.d.get_or_insert(2);
        self.m.get_or_insert(1);
        self.beta.get_or_insert(self.preset.default_beta());
        if self.seeds.is_none() {
            self.seeds = Some(vec![self.seed.take().unwrap_or(0)]);
        }
        let p = &mut self.potential;
        match self.preset {
            PotentialPreset::Uniform => {}
            PotentialPreset::Separable => {
                p.a.get_or_insert(1.0);
                p.b.get_or_insert(0.3);
                p.c.get_or_insert(0.5);
            }
            PotentialPreset::DoubleWell => {
                p.h.get_or_insert(1.0);
                p.c.get_or_insert(0.5);
                p.gamma.get_or_insert(0.25);
            }
            PotentialPreset::Cosine => {
                p.amplitude.get_or_insert(1.0);
            }
        }
    }

    pub fn d(&self) -> usize {
        self.d.unwrap_or(2)
    }

    pub fn m(&self) -> usize {
        self.m.unwrap_or(1)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.preset.default_beta())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![0],
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.total_time / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.d(), self.m());
        if d < 2 {
            return Err(Error::config("d", format!("torus dimension must be at least 2 (got {d})")));
        }
        if m < 1 || m > d - 1 {
            return Err(Error::config(
                "m",
                format!("reaction coordinate dimension must satisfy 1 <= m <= d - 1 (got m={m}, d={d})"),
            ));
        }
        if matches!(self.preset, PotentialPreset::Separable | PotentialPreset::DoubleWell) && d != 2 {
            return Err(Error::config(
                "d",
                format!("preset {} is defined on T^2 (got d={d})", self.preset.name()),
            ));
        }
        for (key, value) in self.potential.entries() {
            if let Some(v) = value {
                if !self.preset.accepts(key) {
                    return Err(Error::config(
                        format!("potential.{key}"),
                        format!("not a parameter of preset {}", self.preset.name()),
                    ));
                }
                if !v.is_finite() {
                    return Err(Error::config(format!("potential.{key}"), "must be finite"));
                }
            }
        }
        let beta = self.beta();
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::config("beta", format!("inverse temperature must be positive (got {beta})")));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::config(
                "dt",
                format!("time step {} outside (0, {MAX_DT}] (stability guard)", self.dt),
            ));
        }
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(Error::config("total_time", "horizon must be positive"));
        }
        if self.seed.is_some() && self.seeds.is_some() {
            return Err(Error::config("seeds", "give either `seed` or `seeds`, not both"));
        }
        if self.seeds.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "at least one variant is required"));
        }
        let k = &self.kernel;
        if !(k.epsilon > 0.0 && k.epsilon < 1.0) {
            return Err(Error::config("kernel.epsilon", format!("bandwidth must lie in (0, 1) (got {})", k.epsilon)));
        }
        if !(k.floor_delta > 0.0 && k.floor_delta <= 1.0) {
            return Err(Error::config(
                "kernel.floor_delta",
                format!("floor must lie in (0, 1] (got {})", k.floor_delta),
            ));
        }
        if self.family_size == 0 {
            return Err(Error::config("family_size", "must be positive"));
        }
        if self.histogram_size < 64 {
            return Err(Error::config("histogram_size", "must be at least 64"));
        }
        if self.refresh_every == 0 {
            return Err(Error::config("refresh_every", "must be positive"));
        }
        if !(self.prior_weight > 0.0) {
            return Err(Error::config("prior_weight", "must be positive"));
        }
        if !(self.step_cap > 0.0) {
            return Err(Error::config("step_cap", "must be positive"));
        }
        if let Some(p) = &self.initial_point {
            if p.len() != d {
                return Err(Error::config("initial_point", format!("expected {d} coordinates, got {}", p.len())));
            }
        }
        if let InitialMeasure::PointMass { at } = &self.initial_measure {
            if at.len() != d {
                return Err(Error::config("initial_measure.at", format!("expected {d} coordinates, got {}", at.len())));
            }
        }
        if self.oracle.profile_resolution < 64 {
            return Err(Error::config("oracle.profile_resolution", "must be at least 64"));
        }
        if self.check.batches < 2 {
            return Err(Error::config("check.batches", "need at least two batches"));
        }
        if self.check.histogram_bins == 0 {
            return Err(Error::config("check.histogram_bins", "must be positive"));
        }
        Ok(())
    }

    pub fn potential(&self) -> TrigPotential {
        let p = &self.potential;
        let d = self.d();
        match self.preset {
            PotentialPreset::Uniform => TrigPotential::uniform(d),
            PotentialPreset::Separable => {
                TrigPotential::separable(p.a.unwrap_or(1.0), p.b.unwrap_or(0.3), p.c.unwrap_or(0.5))
            }
            PotentialPreset::DoubleWell => {
                TrigPotential::double_well(p.h.unwrap_or(1.0), p.c.unwrap_or(0.5), p.gamma.unwrap_or(0.25))
            }
            PotentialPreset::Cosine => TrigPotential::cosine(d, p.amplitude.unwrap_or(1.0)),
        }
    }

    /// Integrator config for one variant and seed.
    pub fn simulation(&self, variant: Variant, seed: u64) -> SimulationConfig {
        let mut c = SimulationConfig::new(variant, self.beta(), self.dt, self.n_steps(), seed);
        c.refresh_every = self.refresh_every;
        c.histogram_size = self.histogram_size;
        c.initial_point = self.initial_point.clone();
        c.initial_measure = self.initial_measure.clone();
        c.prior_weight = self.prior_weight;
        c.step_cap = self.step_cap;
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

const UNIFORM_SMOKE: &str = r#"
name = "uniform-smoke"
preset = "uniform"
beta = 1.0
total_time = 100.0
seeds = [1, 2]
variants = ["unbiased", "abp"]
"#;

const DOUBLE_WELL_ACCEPTANCE: &str = r#"
name = "double-well-acceptance"
preset = "double-well"
total_time = 10000.0
seeds = [1, 2, 3, 4, 5, 6, 7, 8]
variants = ["unbiased", "star", "abp", "abp_time_changed", "frozen"]
frozen_bias = "a-infinity"

[checkpoints]
linear = 100
geometric_start = 1.0
per_e_fold = 50
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("preset = \"double-well\"\nseed = 7").unwrap();
        assert_eq!(c.seeds(), vec![7]);
        assert_eq!((c.d(), c.m(), c.beta()), (2, 1, 4.0));
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.kernel, KernelConfig::default());
        assert_eq!(c.potential.h, Some(1.0));
        assert_eq!(c.potential.gamma, Some(0.25));
        assert_eq!(c.variants, vec![Variant::Abp]);
        assert_eq!(c.name, "double-well");
    }

    #[test]
    fn reaction_coordinate_constraint() {
        let e = parse_config("preset = \"uniform\"\nd = 2\nm = 2").unwrap_err();
        match e {
            Error::Config { path, message } => {
                assert_eq!(path, "m");
                assert!(message.contains("1 <= m <= d - 1"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stability_guard() {
        let e = parse_config("preset = \"uniform\"\ndt = 0.5").unwrap_err();
        assert!(matches!(&e, Error::Config { path, message } if path == "dt" && message.contains("stability")));
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let e = parse_config("preset = \"uniform\"\n[kernel]\nepsilon = 0.3\nwidth = 2").unwrap_err();
        match e {
            Error::Config { path, message } => {
                assert_eq!(path, "kernel.width");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let e = parse_config("preset = \"uniform\"\nbogus = 1").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = parse_config("preset = \"uniform\"\n[potential]\nh = 2.0").unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "potential.h"));
        let e = parse_config("preset = \"uniform\"\n[kernel]\nepsilon = \"wide\"").unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "kernel.epsilon"), "{e}");
    }

    #[test]
    fn builtins_parse_and_round_trip() {
        for name in ExperimentConfig::builtin_names() {
            let c = ExperimentConfig::builtin(name).unwrap();
            assert_eq!(&c.name, name);
            let again = parse_config(&c.to_toml()).unwrap();
            assert_eq!(again, c);
            let json = serde_json::to_string(&c).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
        }
        assert!(ExperimentConfig::builtin("nope").is_err());
    }

    #[test]
    fn frozen_bias_forms() {
        let c = parse_config("preset = \"uniform\"\nfrozen_bias = { constant = 0.5 }").unwrap();
        assert_eq!(c.frozen_bias, FrozenBias::Constant(0.5));
        let c = parse_config("preset = \"uniform\"\nfrozen_bias = \"a-infinity\"").unwrap();
        assert_eq!(c.frozen_bias, FrozenBias::AInfinity);
    }

    #[test]
    fn seed_and_seeds_conflict() {
        assert!(parse_config("preset = \"uniform\"\nseed = 1\nseeds = [2]").is_err());
    }
}
