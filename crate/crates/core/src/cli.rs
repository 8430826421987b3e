//! Command-line pipeline. Every command reads the run configuration, writes
//! its outputs under `--out`, and records a `manifest.json` with the config
//! hash and seeds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::cox::{integrated_intensity, intensity, sample_counts};
use crate::error::{Error, Result};
use crate::estimator::{estimate_all, EstimationConfig, EstimationReport};
use crate::grid::{detrend, FunctionalField, MeanCurve};
use crate::ingest::{ingest, read_observations};
use crate::io::{load_field, save_coefficients, save_field, FieldFormat};
use crate::predict::{loo_validate, predict};
use crate::rng::derive_seed;
use crate::sarh::{burn_in_warning, simulate};
use crate::spectral::periodogram;
use crate::study::{run_study, scales, StudyResult};
use crate::wavelet::field_dwt;

#[derive(Debug, Parser)]
#[command(name = "mscox", version, about = "Multiscale spatial functional estimation for log-Gaussian Cox count models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input file; defaults to the matching `io.paths` entry.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate SARH(1) curve fields.
    Simulate,
    /// Detrend and transform a field to wavelet coefficients.
    Dwt {
        #[command(flatten)]
        input: InputArgs,
        /// Also export the periodogram of every coefficient node.
        #[arg(long)]
        periodograms: bool,
    },
    /// Minimum-contrast estimation of the wavelet operator matrices.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Plug-in one-step prediction from an estimation report.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        /// Estimation report (NDJSON); defaults to `io.paths.report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Leave-one-site-out cross-validation.
    Validate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Poisson counts from a log-intensity field.
    Counts {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Interpolate raw site counts onto the configured lattice.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Plot-ready tables: MSE by scale, eigenvalue samples, field slice.
    Report {
        #[command(flatten)]
        input: InputArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Dwt { .. } => "dwt",
            Command::Estimate { .. } => "estimate",
            Command::Predict { .. } => "predict",
            Command::Validate { .. } => "validate",
            Command::Counts { .. } => "counts",
            Command::Ingest { .. } => "ingest",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputRecord>,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct InputRecord {
    name: String,
    sha256: String,
}

fn input_record(path: &Path) -> Result<InputRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputRecord {
        name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
    })
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_owned());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Machine-readable error document printed by the binary on failure.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({"error": {"kind": err.kind(), "message": err.to_string()}}).to_string()
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let path = global.config.as_deref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let config = RunConfig::load(path)?;
    Ok(match global.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    })
}

fn resolve(flag: &Option<PathBuf>, fallback: &Option<String>, key: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| fallback.as_ref().map(PathBuf::from)).ok_or_else(|| Error::Config {
        path: key.into(),
        message: "input path missing (pass --input or set it in the config)".into(),
    })
}

fn read_field(path: &Path) -> Result<FunctionalField> {
    let format = FieldFormat::from_path(path).ok_or_else(|| {
        Error::Validation(format!("cannot infer field format of {}", path.display()))
    })?;
    load_field(path, format)
}

fn write_mean_csv(mean: &MeanCurve, w: &mut impl Write) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["t_index", "t", "mean"])?;
    for (m, v) in mean.values().iter().enumerate() {
        c.write_record([m.to_string(), format!("{:?}", mean.time().point(m)), format!("{v:?}")])?;
    }
    c.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        // A second call within one process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = load_config(&cli.global)?;
    let mut out = Outputs::new(&cli.global.out)?;
    let mut seeds = BTreeMap::new();
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    let paths = &config.io.paths;
    let estimation = EstimationConfig {
        eta: config.estimation.eta,
        include_cross: config.estimation.include_cross,
    };

    match &cli.command {
        Command::Simulate => {
            let spec = config.spec()?;
            let grid = config.spatial_grid()?;
            let sim = &config.simulation;
            warnings.extend(burn_in_warning(&spec, sim.burn_in));
            let ext = config.io.format.extension();
            for r in 0..sim.replications {
                let (name, seed) = if sim.replications == 1 {
                    (format!("field.{ext}"), sim.seed)
                } else {
                    (format!("field_{r:03}.{ext}"), derive_seed(sim.seed, r as u64))
                };
                let field = simulate(&spec, grid, sim.burn_in, seed)?;
                let path = out.path(&name);
                save_field(&field, &path, config.io.format)?;
                seeds.insert(name, seed);
            }
        }
        Command::Dwt { input, periodograms } => {
            let path = resolve(&input.input, &paths.field, "io.paths.field")?;
            inputs.push(input_record(&path)?);
            let (residual, mean) = detrend(&read_field(&path)?);
            let coeffs = field_dwt(&residual, config.time.j0)?;
            let cpath = out.path("coefficients.ndjson");
            save_coefficients(&coeffs, &cpath)?;
            out.write("mean_curve.csv", |w| write_mean_csv(&mean, w))?;
            if *periodograms {
                for a in 0..coeffs.time().len() {
                    let x = coeffs.node_field(a);
                    let table = periodogram(x.view(), x.view())?;
                    out.write(&format!("periodogram_{a:04}.csv"), |w| table.write_csv(w))?;
                }
            }
        }
        Command::Estimate { input } => {
            let path = resolve(&input.input, &paths.field, "io.paths.field")?;
            inputs.push(input_record(&path)?);
            let (residual, mean) = detrend(&read_field(&path)?);
            let coeffs = field_dwt(&residual, config.time.j0)?;
            let report = estimate_all(&coeffs, &config.domain()?, estimation)?;
            out.write("report.ndjson", |w| report.write_ndjson(w))?;
            out.write("eigenvalues.csv", |w| report.write_eigenvalue_csv(w))?;
            out.write("mean_curve.csv", |w| write_mean_csv(&mean, w))?;
        }
        Command::Predict { input, report } => {
            let path = resolve(&input.input, &paths.field, "io.paths.field")?;
            let rpath = resolve(report, &paths.report, "io.paths.report")?;
            inputs.push(input_record(&path)?);
            inputs.push(input_record(&rpath)?);
            let field = read_field(&path)?;
            let file = File::open(&rpath).map_err(|e| Error::io(&rpath, e))?;
            let report = EstimationReport::read_ndjson(BufReader::new(file))?;
            let (residual, mean) = detrend(&field);
            let coeffs = field_dwt(&residual, report.j0)?;
            let result = predict(&coeffs, &report)?.with_mean(&mean)?;
            out.write("prediction.csv", |w| result.write_csv(&field, w))?;
        }
        Command::Validate { input } => {
            let path = resolve(&input.input, &paths.field, "io.paths.field")?;
            inputs.push(input_record(&path)?);
            let field = read_field(&path)?;
            let summary = loo_validate(
                &field,
                &config.validation_config(),
                &config.domain()?,
                config.estimation.eta,
            )?;
            out.write("validation_folds.csv", |w| summary.write_fold_csv(w))?;
            out.write("validation_periods.csv", |w| summary.write_period_csv(w))?;
        }
        Command::Counts { input } => {
            let path = resolve(&input.input, &paths.field, "io.paths.field")?;
            inputs.push(input_record(&path)?);
            let field = read_field(&path)?;
            let lambda = intensity(&field, &MeanCurve::zeros(field.time()))?;
            let means = integrated_intensity(&lambda) * config.counts.area_scale;
            let counts = sample_counts(&means, config.counts.seed)?;
            seeds.insert("counts".into(), config.counts.seed);
            out.write("counts.csv", |w| counts.write_csv(w))?;
        }
        Command::Ingest { input } => {
            let path = resolve(&input.input, &paths.observations, "io.paths.observations")?;
            inputs.push(input_record(&path)?);
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let obs = read_observations(BufReader::new(file))?;
            let field = ingest(&obs, config.spatial_grid()?, config.time_grid()?, &config.ingest)?;
            let name = format!("field.{}", config.io.format.extension());
            let fpath = out.path(&name);
            save_field(&field, &fpath, config.io.format)?;
        }
        Command::Report { input } => {
            let spec = config.spec()?;
            let study = config.study_config();
            seeds.insert("study".into(), study.seed);
            let result = run_study(&spec, &study, &config.domain()?, config.estimation.eta)?;
            let scale_list = scales(config.time.j0, config.time.depth);
            out.write("mse_by_scale.csv", |w| write_mse_csv(&result, &scale_list, w))?;
            out.write("eigenvalue_samples.csv", |w| write_eigen_samples(&result, w))?;
            if let Some(path) = input.input.clone().or_else(|| paths.field.as_ref().map(PathBuf::from)) {
                inputs.push(input_record(&path)?);
                let field = read_field(&path)?;
                let slice = time_slice(&field, config.report.slice_t);
                out.write("slice.csv", |w| write_slice_csv(&slice, config.report.slice_t, w))?;
            }
        }
    }

    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let manifest = Manifest {
        command: cli.command.name(),
        config_hash: config.hash(),
        seeds,
        inputs,
        files: out.files.clone(),
        warnings,
    };
    let mpath = out.dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

/// Field values at time `t`, linearly interpolated between midpoints and
/// held constant beyond the outer ones.
pub fn time_slice(field: &FunctionalField, t: f64) -> Array2<f64> {
    let n = field.time().len();
    let pos = t * n as f64 - 0.5;
    let (i, f) = if pos <= 0.0 {
        (0, 0.0)
    } else if pos >= (n - 1) as f64 {
        (n - 1, 0.0)
    } else {
        (pos.floor() as usize, pos - pos.floor())
    };
    let v = field.values();
    Array2::from_shape_fn((field.grid().rows(), field.grid().cols()), |(p, q)| {
        if f == 0.0 {
            v[[p, q, i]]
        } else {
            v[[p, q, i]] * (1.0 - f) + v[[p, q, i + 1]] * f
        }
    })
}

fn write_slice_csv(slice: &Array2<f64>, t: f64, w: &mut impl Write) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["p", "q", "t", "value"])?;
    for ((p, q), v) in slice.indexed_iter() {
        c.write_record([p.to_string(), q.to_string(), format!("{t:?}"), format!("{v:?}")])?;
    }
    c.flush().map_err(|e| Error::io("<csv>", e))
}

fn write_mse_csv(result: &StudyResult, scale_list: &[u32], w: &mut impl Write) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string()];
    for s in scale_list {
        for op in 1..=3 {
            header.push(format!("scale{s}_theta{op}"));
        }
    }
    c.write_record(&header)?;
    for row in &result.mse {
        let mut rec = vec![row.n.to_string()];
        for s in scale_list {
            let e = row.by_scale.get(s).copied().unwrap_or([f64::NAN; 3]);
            rec.extend(e.iter().map(|v| format!("{v:?}")));
        }
        c.write_record(&rec)?;
    }
    c.flush().map_err(|e| Error::io("<csv>", e))
}

fn write_eigen_samples(result: &StudyResult, w: &mut impl Write) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["n", "replication", "operator", "p", "value"])?;
    for s in &result.eigen_samples {
        c.write_record([
            s.n.to_string(),
            s.replication.to_string(),
            s.operator.to_string(),
            s.p.to_string(),
            format!("{:?}", s.value),
        ])?;
    }
    c.flush().map_err(|e| Error::io("<csv>", e))
}
