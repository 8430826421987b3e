//! Log-Gaussian Cox layer: intensities, integrated intensities, Poisson
//! counts, and a Monte Carlo check of the second-moment bound.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FunctionalField, MeanCurve, SpatialGrid, TimeGrid};
use crate::rng::stream_rng;
use crate::sarh::SarhSpec;

/// Largest admissible log-intensity.
pub const LOG_OVERFLOW: f64 = 700.0;

/// Sup-norm constant used in the second-moment bound.
pub const SUP_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    grid: SpatialGrid,
    time: TimeGrid,
    values: Array3<f64>,
}

impl IntensityField {
    pub fn new(grid: SpatialGrid, time: TimeGrid, values: Array3<f64>) -> Result<Self> {
        if values.dim() != (grid.rows(), grid.cols(), time.len()) {
            return Err(Error::Shape(format!(
                "intensity array {:?} does not match ({}, {}, {})",
                values.dim(),
                grid.rows(),
                grid.cols(),
                time.len()
            )));
        }
        if let Some(((p, q, m), v)) = values.indexed_iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Validation(format!(
                "intensity at ({p}, {q}, {m}) must be positive and finite, got {v}"
            )));
        }
        Ok(IntensityField { grid, time, values })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    /// Log-intensity as a functional field.
    pub fn log(&self) -> Result<FunctionalField> {
        FunctionalField::new(self.grid, self.time, self.values.mapv(f64::ln))
    }
}

/// `Λ = exp(X + mean)` elementwise.
pub fn intensity(logfield: &FunctionalField, mean: &MeanCurve) -> Result<IntensityField> {
    if logfield.time() != mean.time() {
        return Err(Error::Shape("mean curve and field use different time grids".into()));
    }
    let mut values = logfield.values().clone();
    for ((p, q, m), v) in values.indexed_iter_mut() {
        let x = *v + mean.values()[m];
        if x > LOG_OVERFLOW {
            return Err(Error::Overflow { p, q, value: x });
        }
        *v = x.exp();
    }
    IntensityField::new(logfield.grid(), logfield.time(), values)
}

/// Per-cell `Ψ = ∫ Λ(t) dt` by the midpoint rule.
pub fn integrated_intensity(intensity: &IntensityField) -> Array2<f64> {
    let w = intensity.time.weight();
    intensity.values.sum_axis(ndarray::Axis(2)) * w
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountGrid {
    grid: SpatialGrid,
    counts: Array2<u64>,
    means: Array2<f64>,
}

impl CountGrid {
    pub fn new(counts: Array2<u64>, means: Array2<f64>) -> Result<Self> {
        if counts.dim() != means.dim() {
            return Err(Error::Shape("counts and means differ in shape".into()));
        }
        let (s1, s2) = counts.dim();
        let grid = SpatialGrid::new(s1, s2)?;
        check_means(&means)?;
        Ok(CountGrid { grid, counts, means })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    /// `Λ(A)` for the cells listed in `region`.
    pub fn region_mean(&self, region: &[(usize, usize)]) -> f64 {
        region.iter().map(|&(p, q)| self.means[[p, q]]).sum()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "q", "count", "mean"])?;
        for ((p, q), c) in self.counts.indexed_iter() {
            w.write_record([
                p.to_string(),
                q.to_string(),
                c.to_string(),
                format!("{:?}", self.means[[p, q]]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["p", "q", "count", "mean"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header p,q,count,mean, got {}", header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let parse_err = |m: String| Error::Parse { line, message: m };
            let p: usize = field(0).parse().map_err(|e| parse_err(format!("p: {e}")))?;
            let q: usize = field(1).parse().map_err(|e| parse_err(format!("q: {e}")))?;
            let c: u64 = field(2).parse().map_err(|e| parse_err(format!("count: {e}")))?;
            let m: f64 = field(3).parse().map_err(|e| parse_err(format!("mean: {e}")))?;
            rows.push((p, q, c, m));
        }
        let s1 = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let s2 = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != s1 * s2 {
            return Err(Error::Shape(format!("{} rows for a {s1}x{s2} grid", rows.len())));
        }
        let mut counts = Array2::zeros((s1, s2));
        let mut means = Array2::from_elem((s1, s2), f64::NAN);
        for (p, q, c, m) in rows {
            if !means[[p, q]].is_nan() {
                return Err(Error::Shape(format!("duplicate cell ({p}, {q})")));
            }
            counts[[p, q]] = c;
            means[[p, q]] = m;
        }
        CountGrid::new(counts, means)
    }
}

fn check_means(means: &Array2<f64>) -> Result<()> {
    if let Some(((p, q), m)) = means.indexed_iter().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::Validation(format!(
            "Poisson mean at ({p}, {q}) must be positive and finite, got {m}"
        )));
    }
    Ok(())
}

/// Independent Poisson counts; cell `(p, q)` draws from its own stream so the
/// result does not depend on evaluation order.
pub fn sample_counts(means: &Array2<f64>, seed: u64) -> Result<CountGrid> {
    check_means(means)?;
    let (s1, s2) = means.dim();
    let flat: Vec<u64> = (0..s1 * s2)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let d = Poisson::new(means[[i / s2, i % s2]]).map_err(|e| Error::Validation(e.to_string()))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect::<Result<_>>()?;
    let counts = Array2::from_shape_vec((s1, s2), flat).map_err(|e| Error::Shape(e.to_string()))?;
    CountGrid::new(counts, means.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub mc_second_moment: f64,
    pub mc_standard_error: f64,
    pub analytic_bound: f64,
    pub pass: bool,
}

/// Monte Carlo `E[Ψ²]` at a single site against `exp(4·trace·M²)`.
///
/// The curve at one site is `Σ_p x_p φ_p(t)` with independent
/// `x_p ~ N(0, Var_p)`, the stationary component variances, so draws come
/// from the exact marginal law.
pub fn moment_bound_check(spec: &SarhSpec, n_mc: usize, seed: u64) -> Result<MomentCheck> {
    if n_mc < 100 {
        return Err(Error::Validation(format!("n_mc must be at least 100, got {n_mc}")));
    }
    let variances = spec.component_variances()?;
    let trace: f64 = variances.iter().sum();
    let basis = spec.basis()?;
    let sd: Array1<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let time = spec.time;
    let draws: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let z: Array1<f64> = (0..sd.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x = basis.t().dot(&(&z * &sd));
            let psi = time.integrate(x.mapv(f64::exp).view());
            psi * psi
        })
        .collect();
    let n = n_mc as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let bound = (4.0 * trace * SUP_CONSTANT * SUP_CONSTANT).exp();
    Ok(MomentCheck {
        mc_second_moment: mean,
        mc_standard_error: se,
        analytic_bound: bound,
        pass: mean <= bound * (1.0 + 3.0 * se),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn field(s: usize, depth: u32, f: impl Fn(usize, usize, usize) -> f64) -> FunctionalField {
        let time = TimeGrid::new(depth).unwrap();
        let grid = SpatialGrid::new(s, s).unwrap();
        FunctionalField::new(grid, time, Array3::from_shape_fn((s, s, time.len()), |(p, q, m)| f(p, q, m))).unwrap()
    }

    #[test]
    fn intensity_of_constants() {
        let x = field(3, 3, |_, _, _| 0.0);
        let lam = intensity(&x, &MeanCurve::zeros(x.time())).unwrap();
        assert!(lam.values().iter().all(|&v| v == 1.0));
        let x = field(3, 3, |_, _, _| 2f64.ln());
        let lam = intensity(&x, &MeanCurve::zeros(x.time())).unwrap();
        assert!(lam.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn log_round_trip() {
        let x = field(4, 4, |p, q, m| (p as f64 - q as f64) * 0.3 + (m as f64).sin());
        let lam = intensity(&x, &MeanCurve::zeros(x.time())).unwrap();
        let back = lam.log().unwrap();
        let again = intensity(&back, &MeanCurve::zeros(x.time())).unwrap();
        for (a, b) in lam.values().iter().zip(again.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn overflow_names_site() {
        let x = field(3, 2, |p, q, _| if (p, q) == (1, 2) { 650.0 } else { 0.0 });
        let mean = MeanCurve::new(x.time(), Array1::from_elem(4, 60.0)).unwrap();
        match intensity(&x, &mean) {
            Err(Error::Overflow { p: 1, q: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integrated_constant_and_linear() {
        let x = field(2, 5, |_, _, _| 3f64.ln());
        let lam = intensity(&x, &MeanCurve::zeros(x.time())).unwrap();
        let psi = integrated_intensity(&lam);
        assert!(psi.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let double = IntensityField::new(lam.grid(), lam.time(), lam.values() * 2.0).unwrap();
        let psi2 = integrated_intensity(&double);
        assert!(psi2.iter().zip(&psi).all(|(a, b)| (a - 2.0 * b).abs() < 1e-12));
    }

    #[test]
    fn integrated_matches_quadrature() {
        // Oracle: composite Simpson on 20001 points of exp(sin(πt)).
        let n = 20000;
        let h = 1.0 / n as f64;
        let g = |t: f64| (std::f64::consts::PI * t).sin().exp();
        let mut simpson = g(0.0) + g(1.0);
        for i in 1..n {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        simpson *= h / 3.0;
        let time = TimeGrid::new(10).unwrap();
        let x = field(2, 10, |_, _, m| (std::f64::consts::PI * time.point(m)).sin());
        let psi = integrated_intensity(&intensity(&x, &MeanCurve::zeros(time)).unwrap());
        assert!((psi[[0, 0]] - simpson).abs() < 1e-4);
    }

    #[test]
    fn counts_deterministic_and_consistent() {
        let means = Array2::from_elem((50, 50), 4.0);
        let a = sample_counts(&means, 11).unwrap();
        let b = sample_counts(&means, 11).unwrap();
        assert_eq!(a.counts(), b.counts());
        let avg = a.counts().iter().sum::<u64>() as f64 / 2500.0;
        assert!((3.8..=4.2).contains(&avg), "{avg}");
        let tiny = sample_counts(&Array2::from_elem((4, 4), 1e-9), 3).unwrap();
        assert!(tiny.counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn nonpositive_mean_rejected() {
        let mut means = Array2::from_elem((3, 3), 1.0);
        means[[1, 1]] = 0.0;
        assert!(matches!(sample_counts(&means, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn count_csv_round_trip() {
        let means = Array2::from_shape_fn((3, 4), |(p, q)| 0.5 + p as f64 + 0.1 * q as f64);
        let grid = sample_counts(&means, 5).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let back = CountGrid::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, grid);
        assert!(String::from_utf8(buf).unwrap().starts_with("p,q,count,mean\n"));
    }

    #[test]
    fn moment_bound_table_design() {
        let spec = SarhSpec::reference(TimeGrid::new(6).unwrap(), 10).unwrap();
        let check = moment_bound_check(&spec, 1000, 2).unwrap();
        assert!((check.analytic_bound - 4f64.exp()).abs() < 1e-9);
        assert!(check.pass);
        assert!(check.mc_second_moment < check.analytic_bound);
        let tiny = spec.scaled(1e-12).unwrap();
        let check = moment_bound_check(&tiny, 200, 2).unwrap();
        assert!((check.mc_second_moment - 1.0).abs() < 1e-4);
        assert!((check.analytic_bound - 1.0).abs() < 1e-9);
        assert!(check.pass);
        assert!(moment_bound_check(&spec, 99, 0).is_err());
    }
}
