//! Run configuration: a JSON document validated in full before any
//! computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::ThetaDomain;
use crate::grid::{SpatialGrid, TimeGrid};
use crate::ingest::IngestConfig;
use crate::io::FieldFormat;
use crate::predict::ValidationConfig;
use crate::sarh::{SarhSpec, Theta, DEFAULT_BURN_IN};
use crate::spectral::EtaWeight;
use crate::study::{side_of, StudyConfig, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub s1: usize,
    pub s2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub depth: u32,
    pub j0: u32,
}

/// Innovation variances: explicit values or the keyword `"default"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variances {
    Values(Vec<f64>),
    Named(String),
}

impl Default for Variances {
    fn default() -> Self {
        Variances::Named("default".into())
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub eigenvalues1: Vec<f64>,
    pub eigenvalues2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues3: Option<Vec<f64>>,
    #[serde(default)]
    pub innovation_variances: Variances,
    #[serde(default = "yes")]
    pub couple_l3: bool,
    pub truncation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    /// Box over `(θ₁, θ₂, θ₃)`.
    Box,
    /// Box over `(θ₁, θ₂)` with `θ₃ = −θ₁θ₂`.
    FactorizedBox,
    /// Explicit finite candidate set.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub domain_mode: DomainMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[[f64; 2]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub eta: EtaWeight,
    #[serde(default)]
    pub include_cross: bool,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            domain_mode: DomainMode::Box,
            bounds: None,
            grid_points: None,
            eta: EtaWeight::W2W2,
            include_cross: false,
        }
    }
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            burn_in: DEFAULT_BURN_IN,
            seed: 0,
            replications: 1,
        }
    }
}

fn default_radius() -> usize {
    1
}

fn default_period() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_radius")]
    pub neighborhood_radius: usize,
    #[serde(default = "default_period")]
    pub period_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_folds: Option<usize>,
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            neighborhood_radius: default_radius(),
            period_length: default_period(),
            max_folds: None,
        }
    }
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsSection {
    #[serde(default)]
    pub seed: u64,
    /// Physical cell area; Poisson means are `area_scale · Ψ`.
    #[serde(default = "unit")]
    pub area_scale: f64,
}

impl Default for CountsSection {
    fn default() -> Self {
        CountsSection { seed: 0, area_scale: 1.0 }
    }
}

fn default_sizes() -> Vec<usize> {
    vec![100, 900]
}

fn default_slice() -> f64 {
    0.5
}

fn default_target() -> Target {
    Target::PopulationContrast
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_target")]
    pub target: Target,
    /// Time of the contour slice.
    #[serde(default = "default_slice")]
    pub slice_t: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            sample_sizes: default_sizes(),
            replications: 1,
            target: default_target(),
            slice_t: default_slice(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoPaths {
    /// Field file consumed by `dwt`, `estimate`, `predict`, `validate`,
    /// `counts`, `report`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Estimation report consumed by `predict`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    /// Raw observations consumed by `ingest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<String>,
}

fn default_format() -> FieldFormat {
    FieldFormat::Csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(default)]
    pub paths: IoPaths,
    #[serde(default = "default_format")]
    pub format: FieldFormat,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            paths: IoPaths::default(),
            format: FieldFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub model: ModelSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub counts: CountsSection,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub io: IoSection,
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses and validates; schema errors carry the path of the offending
    /// key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid.s1, self.grid.s2).map_err(|e| cfg_err("grid", e.to_string()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.depth).map_err(|e| cfg_err("time.depth", e.to_string()))
    }

    pub fn spec(&self) -> Result<SarhSpec> {
        let m = &self.model;
        let variances = match &m.innovation_variances {
            Variances::Values(v) => Some(v.clone()),
            Variances::Named(name) if name == "default" => None,
            Variances::Named(name) => {
                return Err(cfg_err(
                    "model.innovation_variances",
                    format!("expected an array or \"default\", got \"{name}\""),
                ))
            }
        };
        SarhSpec::new(
            m.eigenvalues1.clone(),
            m.eigenvalues2.clone(),
            m.eigenvalues3.clone(),
            variances,
            m.truncation,
            self.time_grid()?,
            m.couple_l3,
        )
        .map_err(|e| cfg_err("model", e.to_string()))
    }

    pub fn domain(&self) -> Result<ThetaDomain> {
        let e = &self.estimation;
        let bounds = e
            .bounds
            .map(|b| b.map(|[lo, hi]| (lo, hi)))
            .unwrap_or([(-1.0, 1.0); 3]);
        let out = match e.domain_mode {
            DomainMode::Box | DomainMode::FactorizedBox => {
                if e.grid_points.is_some() {
                    return Err(cfg_err("estimation.grid_points", "only valid with domain_mode \"grid\""));
                }
                ThetaDomain::boxed(bounds, e.domain_mode == DomainMode::FactorizedBox)
            }
            DomainMode::Grid => {
                if e.bounds.is_some() {
                    return Err(cfg_err("estimation.bounds", "not valid with domain_mode \"grid\""));
                }
                let points = e
                    .grid_points
                    .as_ref()
                    .ok_or_else(|| cfg_err("estimation.grid_points", "required with domain_mode \"grid\""))?;
                ThetaDomain::finite_grid(points.iter().map(|&[a, b, c]| Theta::new(a, b, c)).collect())
            }
        };
        out.map_err(|err| {
            let key = if e.domain_mode == DomainMode::Grid {
                "estimation.grid_points"
            } else {
                "estimation.bounds"
            };
            cfg_err(key, err.to_string())
        })
    }

    pub fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            neighborhood_radius: self.validation.neighborhood_radius,
            period_length: self.validation.period_length,
            j0: self.time.j0,
            max_folds: self.validation.max_folds,
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            sample_sizes: self.report.sample_sizes.clone(),
            replications: self.report.replications,
            j0: self.time.j0,
            burn_in: self.simulation.burn_in,
            seed: self.simulation.seed,
            target: self.report.target,
        }
    }

    /// Replaces every seed by `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.simulation.seed = seed;
        self.counts.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial_grid()?;
        let time = self.time_grid()?;
        if self.time.j0 > self.time.depth {
            return Err(cfg_err(
                "time.j0",
                format!("j0={} exceeds depth {}", self.time.j0, self.time.depth),
            ));
        }
        for (key, values) in [("eigenvalues1", &self.model.eigenvalues1), ("eigenvalues2", &self.model.eigenvalues2)] {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.abs() < 1.0)) {
                return Err(cfg_err(
                    format!("model.{key}[{i}]"),
                    format!("eigenvalue {v} violates stationarity, |lambda| must be < 1"),
                ));
            }
        }
        if self.model.truncation == 0 || self.model.truncation > time.len() {
            return Err(cfg_err(
                "model.truncation",
                format!("must be in 1..={}, got {}", time.len(), self.model.truncation),
            ));
        }
        self.spec()?;
        self.domain()?;
        if self.simulation.replications == 0 {
            return Err(cfg_err("simulation.replications", "must be at least 1"));
        }
        if self.validation.period_length == 0 {
            return Err(cfg_err("validation.period_length", "must be at least 1"));
        }
        if self.validation.max_folds == Some(0) {
            return Err(cfg_err("validation.max_folds", "must be at least 1"));
        }
        if !(self.counts.area_scale > 0.0 && self.counts.area_scale.is_finite()) {
            return Err(cfg_err("counts.area_scale", "must be positive and finite"));
        }
        if !(self.ingest.power > 0.0 && self.ingest.power.is_finite()) {
            return Err(cfg_err("ingest.power", "must be positive and finite"));
        }
        if self.ingest.neighbours == 0 {
            return Err(cfg_err("ingest.neighbours", "must be at least 1"));
        }
        if let crate::ingest::CountTransform::LogShift { c } = self.ingest.transform {
            if !(c > 0.0 && c.is_finite()) {
                return Err(cfg_err("ingest.transform.c", "must be positive and finite"));
            }
        }
        if self.report.sample_sizes.is_empty() {
            return Err(cfg_err("report.sample_sizes", "must not be empty"));
        }
        for (i, &n) in self.report.sample_sizes.iter().enumerate() {
            side_of(n).map_err(|e| cfg_err(format!("report.sample_sizes[{i}]"), e.to_string()))?;
        }
        if self.report.replications == 0 {
            return Err(cfg_err("report.replications", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.report.slice_t) {
            return Err(cfg_err("report.slice_t", "must lie in [0, 1]"));
        }
        Ok(())
    }
}
