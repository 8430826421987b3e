//! Plug-in one-step spatial prediction in the wavelet domain and
//! leave-one-site-out cross-validation.

use std::io::Write;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_all, EstimationConfig, ThetaDomain};
use crate::grid::{add_mean, detrend, FunctionalField, MeanCurve, SpatialGrid};
use crate::sarh::SarhSpec;
use crate::spectral::EtaWeight;
use crate::wavelet::{coefficients_curve, field_dwt, field_idwt, operator_to_wavelet, MultiscaleCoefficients, OperatorWaveletMatrix};

/// Relative tolerance of the block-expansion cross-check.
pub const BLOCK_TOLERANCE: f64 = 1e-12;

/// Predictions on the interior sites `p ≥ 1, q ≥ 1`.
///
/// `predicted` and `residuals` cover the `(s1−1) × (s2−1)` interior block;
/// interior site `(i, j)` is lattice site `(i+1, j+1)`. Sites in the first
/// row or column have no causal neighbours and carry no prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub grid: SpatialGrid,
    pub predicted: FunctionalField,
    pub residuals: FunctionalField,
}

impl PredictionResult {
    pub fn is_predicted(&self, p: usize, q: usize) -> bool {
        p >= 1 && q >= 1 && p < self.grid.rows() && q < self.grid.cols()
    }

    pub fn predicted_curve(&self, p: usize, q: usize) -> Option<ArrayView1<'_, f64>> {
        self.is_predicted(p, q).then(|| self.predicted.curve(p - 1, q - 1))
    }

    pub fn residual_curve(&self, p: usize, q: usize) -> Option<ArrayView1<'_, f64>> {
        self.is_predicted(p, q).then(|| self.residuals.curve(p - 1, q - 1))
    }

    /// Shifts predictions by a mean curve; residuals are unchanged.
    pub fn with_mean(self, mean: &MeanCurve) -> Result<Self> {
        Ok(PredictionResult {
            predicted: add_mean(&self.predicted, mean)?,
            ..self
        })
    }

    /// Per-site CSV `p,q,t_index,observed,predicted,residual,status`; boundary
    /// sites have empty prediction columns and status `boundary`.
    pub fn write_csv(&self, observed: &FunctionalField, out: impl Write) -> Result<()> {
        if observed.grid() != self.grid {
            return Err(Error::Shape("observed field does not match prediction grid".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "q", "t_index", "observed", "predicted", "residual", "status"])?;
        for p in 0..self.grid.rows() {
            for q in 0..self.grid.cols() {
                let obs = observed.curve(p, q);
                for (m, o) in obs.iter().enumerate() {
                    let (pred, res, status) = match (self.predicted_curve(p, q), self.residual_curve(p, q)) {
                        (Some(a), Some(b)) => (format!("{:?}", a[m]), format!("{:?}", b[m]), "ok"),
                        _ => (String::new(), String::new(), "boundary"),
                    };
                    w.write_record([
                        p.to_string(),
                        q.to_string(),
                        m.to_string(),
                        format!("{o:?}"),
                        pred,
                        res,
                        status.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn check_operators(coeffs: &MultiscaleCoefficients, ops: &[OperatorWaveletMatrix; 3]) -> Result<()> {
    let n = coeffs.time().len();
    for (i, op) in ops.iter().enumerate() {
        if op.dim() != n || op.j0 != coeffs.j0() || op.depth != coeffs.depth() {
            return Err(Error::Shape(format!(
                "operator {} has layout (j0={}, depth={}, dim={}), coefficients have (j0={}, depth={}, dim={n})",
                i + 1,
                op.j0,
                op.depth,
                op.dim(),
                coeffs.j0(),
                coeffs.depth()
            )));
        }
    }
    Ok(())
}

/// `x̂_{p,q} = Θ₁x_{p−1,q} + Θ₂x_{p,q−1} + Θ₃x_{p−1,q−1}` for every interior
/// site, as three matrix products over the stacked neighbour coefficients.
pub fn predict_matrix_form(coeffs: &MultiscaleCoefficients, ops: &[OperatorWaveletMatrix; 3]) -> Result<Array3<f64>> {
    check_operators(coeffs, ops)?;
    let c = coeffs.coeffs();
    let (s1, s2, n) = c.dim();
    let stack = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| -> Array2<f64> {
        c.slice(s![rows, cols, ..])
            .to_owned()
            .into_shape_with_order(((s1 - 1) * (s2 - 1), n))
            .expect("contiguous slice")
    };
    let west = stack(0..s1 - 1, 1..s2);
    let south = stack(1..s1, 0..s2 - 1);
    let diag = stack(0..s1 - 1, 0..s2 - 1);
    let out = west.dot(&ops[0].matrix.t()) + south.dot(&ops[1].matrix.t()) + diag.dot(&ops[2].matrix.t());
    Ok(out.into_shape_with_order((s1 - 1, s2 - 1, n)).expect("size preserved"))
}

/// Contiguous ranges of the scaling block and each detail level.
pub fn block_ranges(j0: u32, depth: u32) -> Vec<std::ops::Range<usize>> {
    let mut out = vec![0..1usize << j0];
    for j in j0..depth {
        out.push(1 << j..1 << (j + 1));
    }
    out
}

/// Same predictor summed block by block: each output block of every site
/// accumulates `Θ_i[A, B] · x[B]` over all input blocks `B`.
pub fn predict_block_form(coeffs: &MultiscaleCoefficients, ops: &[OperatorWaveletMatrix; 3]) -> Result<Array3<f64>> {
    check_operators(coeffs, ops)?;
    let c = coeffs.coeffs();
    let (s1, s2, n) = c.dim();
    let blocks = block_ranges(coeffs.j0(), coeffs.depth());
    let mut out = Array3::zeros((s1 - 1, s2 - 1, n));
    for p in 1..s1 {
        for q in 1..s2 {
            let neighbours = [c.slice(s![p - 1, q, ..]), c.slice(s![p, q - 1, ..]), c.slice(s![p - 1, q - 1, ..])];
            for a in &blocks {
                let mut acc = Array1::<f64>::zeros(a.len());
                for (op, x) in ops.iter().zip(&neighbours) {
                    for b in &blocks {
                        let m = op.matrix.slice(s![a.clone(), b.clone()]);
                        acc += &m.dot(&x.slice(s![b.clone()]));
                    }
                }
                out.slice_mut(s![p - 1, q - 1, a.clone()]).assign(&acc);
            }
        }
    }
    Ok(out)
}

/// Predicts from explicit operator matrices, cross-checking the matrix and
/// block evaluations.
pub fn predict_with(coeffs: &MultiscaleCoefficients, ops: &[OperatorWaveletMatrix; 3]) -> Result<PredictionResult> {
    let grid = coeffs.grid();
    let matrix = predict_matrix_form(coeffs, ops)?;
    let blocks = predict_block_form(coeffs, ops)?;
    let scale = 1.0 + matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gap = matrix.iter().zip(&blocks).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if gap > BLOCK_TOLERANCE * scale {
        return Err(Error::Validation(format!(
            "block expansion differs from matrix form by {gap:e}"
        )));
    }
    let inner = SpatialGrid::new(grid.rows() - 1, grid.cols() - 1)?;
    let predicted = field_idwt(&MultiscaleCoefficients::new(inner, coeffs.time(), coeffs.j0(), matrix)?)?;
    let observed = field_idwt(&coeffs.crop(1..grid.rows(), 1..grid.cols())?)?;
    let residuals = FunctionalField::new(inner, coeffs.time(), observed.values() - predicted.values())?;
    Ok(PredictionResult {
        grid,
        predicted,
        residuals,
    })
}

/// Plug-in prediction with the operators of an estimation report.
pub fn predict(coeffs: &MultiscaleCoefficients, report: &crate::estimator::EstimationReport) -> Result<PredictionResult> {
    predict_with(coeffs, &report.operators)
}

/// Predicted curve at one interior site.
pub fn predict_site(
    coeffs: &MultiscaleCoefficients,
    ops: &[OperatorWaveletMatrix; 3],
    p: usize,
    q: usize,
) -> Result<Array1<f64>> {
    check_operators(coeffs, ops)?;
    let grid = coeffs.grid();
    if p == 0 || q == 0 || p >= grid.rows() || q >= grid.cols() {
        return Err(Error::Validation(format!("site ({p}, {q}) has no causal neighbours")));
    }
    let c = coeffs.coeffs();
    let x = ops[0].apply(c.slice(s![p - 1, q, ..]))
        + ops[1].apply(c.slice(s![p, q - 1, ..]))
        + ops[2].apply(c.slice(s![p - 1, q - 1, ..]));
    coefficients_curve(x.view(), coeffs.j0())
}

/// Wavelet matrices of the model's true operators `L₁, L₂, L₃`.
pub fn model_operators(spec: &SarhSpec, j0: u32) -> Result<[OperatorWaveletMatrix; 3]> {
    let basis = spec.basis()?;
    let [e1, e2, e3] = spec.operator_eigenvalues();
    Ok([
        operator_to_wavelet(&e1, &basis, spec.time, j0)?,
        operator_to_wavelet(&e2, &basis, spec.time, j0)?,
        operator_to_wavelet(&e3, &basis, spec.time, j0)?,
    ])
}

/// Sample variance, over interior sites, of the residual projected on each
/// of the first `k` basis functions.
pub fn component_residual_variances(result: &PredictionResult, basis: &Array2<f64>) -> Vec<f64> {
    let time = result.residuals.time();
    let res = result.residuals.values();
    let sites = (res.dim().0 * res.dim().1) as f64;
    basis
        .rows()
        .into_iter()
        .map(|phi| {
            let proj: Vec<f64> = res.lanes(Axis(2)).into_iter().map(|r| time.inner(r, phi)).collect();
            let mean = proj.iter().sum::<f64>() / sites;
            proj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sites - 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Chebyshev radius of the band removed around each held-out site.
    pub neighborhood_radius: usize,
    /// Time samples per period in the per-period table.
    pub period_length: usize,
    pub j0: u32,
    /// Number of held-out sites; `None` uses every interior site, otherwise
    /// evenly spaced sites in row-major order.
    #[serde(default)]
    pub max_folds: Option<usize>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            neighborhood_radius: 1,
            period_length: 12,
            j0: 0,
            max_folds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldError {
    pub fold: usize,
    pub site_p: usize,
    pub site_q: usize,
    pub mafe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodError {
    pub period: usize,
    pub avg_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub folds: Vec<FoldError>,
    pub periods: Vec<PeriodError>,
    /// Mean of the per-fold mean absolute functional errors.
    pub aloocve: f64,
}

impl ValidationSummary {
    pub fn write_fold_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "site_p", "site_q", "mafe"])?;
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.site_p.to_string(),
                f.site_q.to_string(),
                format!("{:?}", f.mafe),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_period_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "avg_error"])?;
        for p in &self.periods {
            w.write_record([p.period.to_string(), format!("{:?}", p.avg_error)])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Ratio of the largest to the smallest per-period error.
    pub fn period_spread(&self) -> f64 {
        let max = self.periods.iter().map(|p| p.avg_error).fold(f64::MIN, f64::max);
        let min = self.periods.iter().map(|p| p.avg_error).fold(f64::MAX, f64::min);
        max / min
    }
}

/// Held-out sites for a grid: all interior sites, or `m` evenly spaced ones.
pub fn fold_sites(grid: SpatialGrid, max_folds: Option<usize>) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (1..grid.rows())
        .flat_map(|p| (1..grid.cols()).map(move |q| (p, q)))
        .collect();
    match max_folds {
        Some(m) if m < all.len() => (0..m).map(|i| all[i * all.len() / m]).collect(),
        _ => all,
    }
}

/// Largest full-width or full-height strip clear of the band of Chebyshev
/// radius `r` around `(p, q)`. Ties resolve in the order top, bottom, left,
/// right.
pub fn training_window(
    grid: SpatialGrid,
    site: (usize, usize),
    r: usize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let (s1, s2) = (grid.rows(), grid.cols());
    let (p, q) = site;
    let candidates = [
        (0..p.saturating_sub(r), 0..s2),
        ((p + r + 1).min(s1)..s1, 0..s2),
        (0..s1, 0..q.saturating_sub(r)),
        (0..s1, (q + r + 1).min(s2)..s2),
    ];
    let mut best = candidates[0].clone();
    for c in candidates.into_iter().skip(1) {
        if c.0.len() * c.1.len() > best.0.len() * best.1.len() {
            best = c;
        }
    }
    best
}

/// Leave-one-site-out validation.
///
/// For each held-out site the operators are re-estimated on the largest
/// strip clear of its neighbourhood band (mean curve from the same strip),
/// and the site's curve is predicted from its observed causal neighbours.
pub fn loo_validate(
    field: &FunctionalField,
    config: &ValidationConfig,
    domain: &ThetaDomain,
    eta: EtaWeight,
) -> Result<ValidationSummary> {
    if config.period_length == 0 {
        return Err(Error::Validation("period_length must be positive".into()));
    }
    let grid = field.grid();
    let time = field.time();
    let sites = fold_sites(grid, config.max_folds);
    if sites.is_empty() {
        return Err(Error::Degenerate("no interior sites to hold out".into()));
    }
    let errors: Vec<Array1<f64>> = sites
        .par_iter()
        .map(|&(p, q)| {
            let (rows, cols) = training_window(grid, (p, q), config.neighborhood_radius);
            if rows.len() < 4 || cols.len() < 4 {
                return Err(Error::Degenerate(format!(
                    "training strip for site ({p}, {q}) is {}x{}, need at least 4x4",
                    rows.len(),
                    cols.len()
                )));
            }
            let (_, mean) = detrend(&field.crop(rows.clone(), cols.clone())?);
            let centred = FunctionalField::new(grid, time, field.values() - mean.values())?;
            let coeffs = field_dwt(&centred, config.j0)?;
            let report = estimate_all(
                &coeffs.crop(rows, cols)?,
                domain,
                EstimationConfig {
                    eta,
                    include_cross: false,
                },
            )?;
            let predicted = predict_site(&coeffs, &report.operators, p, q)?;
            Ok((&centred.curve(p, q) - &predicted).mapv(f64::abs))
        })
        .collect::<Result<_>>()?;

    let folds: Vec<FoldError> = sites
        .iter()
        .zip(&errors)
        .enumerate()
        .map(|(fold, (&(site_p, site_q), e))| FoldError {
            fold,
            site_p,
            site_q,
            mafe: e.mean().unwrap_or(0.0),
        })
        .collect();
    let n = time.len();
    let periods = (0..n.div_ceil(config.period_length))
        .map(|period| {
            let range = period * config.period_length..((period + 1) * config.period_length).min(n);
            let total: f64 = errors.iter().map(|e| e.slice(s![range.clone()]).sum()).sum();
            PeriodError {
                period,
                avg_error: total / (range.len() * errors.len()) as f64,
            }
        })
        .collect();
    let aloocve = folds.iter().map(|f| f.mafe).sum::<f64>() / folds.len() as f64;
    Ok(ValidationSummary {
        folds,
        periods,
        aloocve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::sarh::simulate;
    use ndarray::Array3;

    fn random_coeffs(s: usize, depth: u32, j0: u32) -> MultiscaleCoefficients {
        let time = TimeGrid::new(depth).unwrap();
        let grid = SpatialGrid::new(s, s).unwrap();
        let values = Array3::from_shape_fn((s, s, time.len()), |(p, q, m)| {
            ((p * 31 + q * 17 + m * 7) as f64 * 0.37).sin()
        });
        MultiscaleCoefficients::new(grid, time, j0, values).unwrap()
    }

    fn dense_ops(j0: u32, depth: u32) -> [OperatorWaveletMatrix; 3] {
        let n = 1usize << depth;
        let mk = |k: f64| OperatorWaveletMatrix {
            j0,
            depth,
            matrix: Array2::from_shape_fn((n, n), |(a, b)| ((a * n + b) as f64 * k).cos() * 0.1),
        };
        [mk(0.11), mk(0.23), mk(0.41)]
    }

    #[test]
    fn block_form_equals_matrix_form() {
        let c = random_coeffs(6, 4, 1);
        let ops = dense_ops(1, 4);
        let a = predict_matrix_form(&c, &ops).unwrap();
        let b = predict_block_form(&c, &ops).unwrap();
        let gap = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap < 1e-12, "{gap}");
        // Explicit per-site sum as a third route.
        let x = c.coeffs();
        let n = 16;
        for (p, q) in [(1, 1), (3, 5), (5, 2)] {
            for a_ in 0..n {
                let mut v = 0.0;
                for b_ in 0..n {
                    v += ops[0].matrix[[a_, b_]] * x[[p - 1, q, b_]]
                        + ops[1].matrix[[a_, b_]] * x[[p, q - 1, b_]]
                        + ops[2].matrix[[a_, b_]] * x[[p - 1, q - 1, b_]];
                }
                assert!((v - a[[p - 1, q - 1, a_]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_operators_predict_zero() {
        let c = random_coeffs(5, 3, 0);
        let zero = OperatorWaveletMatrix::zeros(0, 3);
        let r = predict_with(&c, &[zero.clone(), zero.clone(), zero]).unwrap();
        assert!(r.predicted.values().iter().all(|&v| v == 0.0));
        assert!(r.predicted_curve(0, 3).is_none());
        assert!(r.predicted_curve(2, 0).is_none());
    }

    #[test]
    fn identity_copies_west_neighbour() {
        let c = random_coeffs(5, 3, 1);
        let field = field_idwt(&c).unwrap();
        let ops = [
            OperatorWaveletMatrix::identity(1, 3),
            OperatorWaveletMatrix::zeros(1, 3),
            OperatorWaveletMatrix::zeros(1, 3),
        ];
        let r = predict_with(&c, &ops).unwrap();
        for p in 1..5 {
            for q in 1..5 {
                let pred = r.predicted_curve(p, q).unwrap();
                let west = field.curve(p - 1, q);
                assert!(pred.iter().zip(west).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn site_prediction_matches_field_prediction() {
        let c = random_coeffs(6, 4, 2);
        let ops = dense_ops(2, 4);
        let r = predict_with(&c, &ops).unwrap();
        for (p, q) in [(1, 1), (4, 5), (5, 3)] {
            let a = predict_site(&c, &ops, p, q).unwrap();
            let b = r.predicted_curve(p, q).unwrap();
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        assert!(predict_site(&c, &ops, 0, 2).is_err());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let c = random_coeffs(4, 3, 1);
        let ops = dense_ops(0, 3);
        assert!(matches!(predict_with(&c, &ops), Err(Error::Shape(_))));
    }

    #[test]
    fn true_parameter_residuals_match_innovations() {
        let time = TimeGrid::new(5).unwrap();
        let spec = SarhSpec::reference(time, 10).unwrap();
        let field = simulate(&spec, SpatialGrid::new(50, 50).unwrap(), 64, 21).unwrap();
        let coeffs = field_dwt(&field, 2).unwrap();
        let r = predict_with(&coeffs, &model_operators(&spec, 2).unwrap()).unwrap();
        let v = component_residual_variances(&r, &spec.basis().unwrap());
        for (p, (est, s2)) in v.iter().zip(&spec.innovation_variances).enumerate() {
            assert!((est / s2 - 1.0).abs() < 0.1, "component {p}: {est} vs {s2}");
        }
    }

    #[test]
    fn training_window_choice() {
        let g = SpatialGrid::new(10, 10).unwrap();
        assert_eq!(training_window(g, (1, 1), 1), (3..10, 0..10));
        assert_eq!(training_window(g, (8, 8), 1), (0..7, 0..10));
        assert_eq!(training_window(g, (2, 8), 1), (0..10, 0..7));
        assert_eq!(training_window(g, (2, 5), 1), (4..10, 0..10));
        assert_eq!(training_window(g, (5, 2), 1), (0..10, 4..10));
    }

    #[test]
    fn fold_subsets() {
        let g = SpatialGrid::new(5, 5).unwrap();
        assert_eq!(fold_sites(g, None).len(), 16);
        let f = fold_sites(g, Some(4));
        assert_eq!(f, vec![(1, 1), (2, 1), (3, 1), (4, 1)]);
    }

    #[test]
    fn identical_curves_zero_error() {
        let time = TimeGrid::new(4).unwrap();
        let grid = SpatialGrid::new(12, 12).unwrap();
        let values = Array3::from_shape_fn((12, 12, 16), |(_, _, m)| (m as f64 * 0.4).cos());
        let field = FunctionalField::new(grid, time, values).unwrap();
        let domain = ThetaDomain::finite_grid(vec![crate::sarh::Theta::ZERO]).unwrap();
        let cfg = ValidationConfig {
            neighborhood_radius: 1,
            period_length: 4,
            j0: 1,
            max_folds: Some(6),
        };
        let s = loo_validate(&field, &cfg, &domain, EtaWeight::W2W2).unwrap();
        assert!(s.aloocve.abs() < 1e-12);
        assert_eq!(s.periods.len(), 4);
        assert_eq!(s.folds.len(), 6);
    }

    #[test]
    fn degenerate_training_rejected() {
        let time = TimeGrid::new(2).unwrap();
        let grid = SpatialGrid::new(5, 5).unwrap();
        let field = FunctionalField::zeros(grid, time);
        let cfg = ValidationConfig {
            neighborhood_radius: 2,
            period_length: 2,
            j0: 0,
            max_folds: None,
        };
        let r = loo_validate(&field, &cfg, &ThetaDomain::default_box(true), EtaWeight::W2W2);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }
}
