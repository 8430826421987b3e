//! Ingestion of irregularly located count series onto a regular lattice and
//! a dyadic time grid.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FunctionalField, SpatialGrid, TimeGrid};

/// Count-to-log-intensity transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountTransform {
    /// `log(x + 1)`.
    Log1p,
    /// `log(x + c)`, `c > 0`.
    LogShift { c: f64 },
}

impl CountTransform {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            CountTransform::Log1p => x.ln_1p(),
            CountTransform::LogShift { c } => (x + c).ln(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CountTransform::LogShift { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Validation(format!("log shift must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

fn default_power() -> f64 {
    2.0
}

fn default_neighbours() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub transform: CountTransform,
    /// Divide counts by the `population` column when it is present.
    #[serde(default)]
    pub rate_by_population: bool,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_neighbours")]
    pub neighbours: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            transform: CountTransform::Log1p,
            rate_by_population: false,
            power: default_power(),
            neighbours: default_neighbours(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub site_id: String,
    pub x: f64,
    pub y: f64,
    pub time_index: usize,
    pub count: f64,
    pub population: Option<f64>,
}

/// Reads `site_id,x,y,time_index,count[,population]`.
pub fn read_observations(input: impl Read) -> Result<Vec<Observation>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required = ["site_id", "x", "y", "time_index", "count"];
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })?;
    }
    let pop = col("population");
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |k: usize| rec.get(k).unwrap_or("").trim();
        let num = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = get(k).parse().map_err(|e| Error::Parse {
                line,
                message: format!("{name}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("{name} is not finite"),
                });
            }
            Ok(v)
        };
        let count = num(idx[4], "count")?;
        if count < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative count {count}"),
            });
        }
        let population = match pop {
            Some(k) => {
                let v = num(k, "population")?;
                if v <= 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("population must be positive, got {v}"),
                    });
                }
                Some(v)
            }
            None => None,
        };
        out.push(Observation {
            site_id: get(idx[0]).to_owned(),
            x: num(idx[1], "x")?,
            y: num(idx[2], "y")?,
            time_index: get(idx[3]).parse().map_err(|e| Error::Parse {
                line,
                message: format!("time_index: {e}"),
            })?,
            count,
            population,
        });
    }
    Ok(out)
}

/// Inverse-distance weighting over the `k` nearest points; a point at
/// distance zero returns its value exactly.
pub fn idw(points: &[(f64, f64, f64)], x: f64, y: f64, power: f64, k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &(px, py, _))| ((px - x).hypot(py - y), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if d[0].0 == 0.0 {
        return points[d[0].1].2;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(dist, i) in d.iter().take(k.max(1)) {
        let w = dist.powf(-power);
        num += w * points[i].2;
        den += w;
    }
    num / den
}

/// Linear interpolation of samples at `τ_i = (i + ½)/T` onto `time`'s
/// midpoints, held constant beyond the end samples.
pub fn resample(series: &[f64], time: TimeGrid) -> Vec<f64> {
    let n = series.len();
    (0..time.len())
        .map(|m| {
            let pos = time.point(m) * n as f64 - 0.5;
            if pos <= 0.0 {
                series[0]
            } else if pos >= (n - 1) as f64 {
                series[n - 1]
            } else {
                let i = pos.floor() as usize;
                let f = pos - i as f64;
                series[i] * (1.0 - f) + series[i + 1] * f
            }
        })
        .collect()
}

/// Lattice coordinates spanning the bounding box of the sites, corners on
/// the extreme coordinates.
pub fn lattice_coordinates(obs: &[Observation], grid: SpatialGrid) -> (Vec<f64>, Vec<f64>) {
    let span = |v: &mut dyn Iterator<Item = f64>| {
        v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (x0, x1) = span(&mut obs.iter().map(|o| o.x));
    let (y0, y1) = span(&mut obs.iter().map(|o| o.y));
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    (axis(x0, x1, grid.rows()), axis(y0, y1, grid.cols()))
}

pub fn ingest(obs: &[Observation], grid: SpatialGrid, time: TimeGrid, config: &IngestConfig) -> Result<FunctionalField> {
    config.transform.validate()?;
    if !(config.power > 0.0 && config.power.is_finite()) || config.neighbours == 0 {
        return Err(Error::Validation("IDW power must be positive and neighbours at least 1".into()));
    }
    if obs.is_empty() {
        return Err(Error::Degenerate("no observations to ingest".into()));
    }
    let mut seen = BTreeSet::new();
    let mut location: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for o in obs {
        if !seen.insert((o.site_id.as_str(), o.time_index)) {
            return Err(Error::Validation(format!(
                "duplicate row for site `{}` at time {}",
                o.site_id, o.time_index
            )));
        }
        let loc = *location.entry(&o.site_id).or_insert((o.x, o.y));
        if loc != (o.x, o.y) {
            return Err(Error::Validation(format!("site `{}` has inconsistent coordinates", o.site_id)));
        }
    }
    let periods = obs.iter().map(|o| o.time_index).max().expect("non-empty") + 1;
    let mut by_time: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); periods];
    for o in obs {
        let rate = match (config.rate_by_population, o.population) {
            (true, Some(pop)) => o.count / pop,
            _ => o.count,
        };
        by_time[o.time_index].push((o.x, o.y, rate));
    }
    if let Some(i) = by_time.iter().position(Vec::is_empty) {
        return Err(Error::Validation(format!("no observation at time index {i}")));
    }
    let (xs, ys) = lattice_coordinates(obs, grid);
    let mut values = Array3::zeros((grid.rows(), grid.cols(), time.len()));
    for (p, &x) in xs.iter().enumerate() {
        for (q, &y) in ys.iter().enumerate() {
            let series: Vec<f64> = by_time
                .iter()
                .map(|pts| config.transform.apply(idw(pts, x, y, config.power, config.neighbours)))
                .collect();
            for (m, v) in resample(&series, time).into_iter().enumerate() {
                values[[p, q, m]] = v;
            }
        }
    }
    FunctionalField::new(grid, time, values)
}
