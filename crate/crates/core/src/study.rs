//! Monte Carlo harness for the simulation design: repeated simulation and
//! estimation over a sequence of lattice sizes, with per-scale mean
//! quadratic errors and eigenvalue samples.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_all, EstimationConfig, EstimationReport, Estimator, ThetaDomain};
use crate::grid::{detrend, SpatialGrid};
use crate::rng::derive_seed;
use crate::sarh::{simulate, SarhSpec, Theta};
use crate::spectral::{EtaWeight, FrequencyGrid};
use crate::wavelet::{curve_coefficients, field_dwt, operator_to_wavelet, WaveletIndex};

/// Side of the frequency grid used to evaluate population targets.
pub const TARGET_GRID: usize = 128;

/// Reference value a node estimate is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Diagonal entry `L_i(b)(b)` of the true operator matrices.
    OperatorDiagonal,
    /// Minimizer of the population contrast built from the exact spectral
    /// density of the node's coefficient field.
    PopulationContrast,
}

/// Diagonal entries `(L₁(b)(b), L₂(b)(b), L₃(b)(b))` for every basis function.
pub fn operator_diagonal_targets(spec: &SarhSpec, j0: u32) -> Result<Vec<Theta>> {
    let basis = spec.basis()?;
    let [e1, e2, e3] = spec.operator_eigenvalues();
    let m1 = operator_to_wavelet(&e1, &basis, spec.time, j0)?;
    let m2 = operator_to_wavelet(&e2, &basis, spec.time, j0)?;
    let m3 = operator_to_wavelet(&e3, &basis, spec.time, j0)?;
    Ok((0..spec.time.len())
        .map(|a| Theta::new(m1.matrix[[a, a]], m2.matrix[[a, a]], m3.matrix[[a, a]]))
        .collect())
}

/// Exact spectral density (up to the constant `1/(4π²)`) of the coefficient
/// field at node `a`: `Σ_p v_p[a]² σ²_p |A_p(ϖ)|^{-2}`.
pub fn node_spectral_density(spec: &SarhSpec, j0: u32, freq: &FrequencyGrid) -> Result<Vec<Array2<f64>>> {
    let basis = spec.basis()?;
    let projections: Vec<_> = basis
        .rows()
        .into_iter()
        .map(|phi| curve_coefficients(phi, j0))
        .collect::<Result<_>>()?;
    let (s1, s2) = freq.dims();
    let inv_symbols: Vec<Array2<f64>> = (0..spec.truncation)
        .map(|p| {
            let theta = spec.theta(p);
            let sigma2 = spec.innovation_variances[p];
            Array2::from_shape_fn((s1, s2), |(a, b)| {
                let (w1, w2) = freq.frequency(a, b);
                sigma2 / (4.0 * PI * PI) / theta.symbol_sq(w1, w2)
            })
        })
        .collect();
    Ok((0..spec.time.len())
        .map(|node| {
            let mut g = Array2::zeros((s1, s2));
            for (v, inv) in projections.iter().zip(&inv_symbols) {
                g.scaled_add(v[node] * v[node], inv);
            }
            g
        })
        .collect())
}

/// Population minimum-contrast target of every node.
pub fn population_targets(spec: &SarhSpec, j0: u32, domain: &ThetaDomain, eta: EtaWeight) -> Result<Vec<Theta>> {
    let freq = FrequencyGrid::new(TARGET_GRID, TARGET_GRID);
    let densities = node_spectral_density(spec, j0, &freq)?;
    let estimator = Estimator::new(freq, eta, domain.clone())?;
    densities
        .par_iter()
        .map(|g| Ok(estimator.fit(g.view())?.theta))
        .collect()
}

pub fn targets(spec: &SarhSpec, j0: u32, domain: &ThetaDomain, eta: EtaWeight, target: Target) -> Result<Vec<Theta>> {
    match target {
        Target::OperatorDiagonal => operator_diagonal_targets(spec, j0),
        Target::PopulationContrast => population_targets(spec, j0, domain, eta),
    }
}

/// Simulates one square `side × side` field, detrends it, and estimates the
/// diagonal wavelet parameters.
pub fn replicate(
    spec: &SarhSpec,
    side: usize,
    j0: u32,
    burn_in: usize,
    seed: u64,
    domain: &ThetaDomain,
    eta: EtaWeight,
) -> Result<EstimationReport> {
    let grid = SpatialGrid::new(side, side)?;
    let field = simulate(spec, grid, burn_in, seed)?;
    let (residual, _) = detrend(&field);
    let coeffs = field_dwt(&residual, j0)?;
    estimate_all(
        &coeffs,
        domain,
        EstimationConfig {
            eta,
            include_cross: false,
        },
    )
}

/// Mean quadratic error by scale, per operator, of one report's diagonal
/// estimates.
pub fn squared_errors_by_scale(report: &EstimationReport, targets: &[Theta]) -> BTreeMap<u32, [f64; 3]> {
    let mut sums: BTreeMap<u32, ([f64; 3], usize)> = BTreeMap::new();
    for pair in report.diagonal() {
        let t = targets[pair.row];
        let e = sums.entry(pair.row_index.scale()).or_insert(([0.0; 3], 0));
        let (est, tru) = (pair.theta.as_array(), t.as_array());
        for i in 0..3 {
            e.0[i] += (est[i] - tru[i]).powi(2);
        }
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(scale, (s, n))| (scale, s.map(|v| v / n as f64)))
        .collect()
}

/// Squared error of estimated top eigenvalues against the true eigenvalues,
/// averaged over `p = 1..=k` and the two operators `L₁`, `L₂`.
pub fn eigenvalue_mse(report: &EstimationReport, spec: &SarhSpec) -> f64 {
    let truth = spec.operator_eigenvalues();
    let mut acc = 0.0;
    let mut n = 0;
    for op in 0..2 {
        let mut sorted = truth[op].clone();
        sorted.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        for (est, tru) in report.eigenvalues[op].iter().zip(&sorted) {
            acc += (est - tru).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Lattice sizes `N`; each must be a perfect square.
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub j0: u32,
    pub burn_in: usize,
    pub seed: u64,
    pub target: Target,
}

/// One row of the MSE table: per-scale errors for one `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub n: usize,
    /// scale → per-operator mean quadratic error, averaged over replications.
    pub by_scale: BTreeMap<u32, [f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSample {
    pub n: usize,
    pub replication: usize,
    pub operator: usize,
    pub p: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub mse: Vec<MseRow>,
    pub eigen_samples: Vec<EigenSample>,
    /// Per `N`, the eigenvalue MSE of every replication.
    pub eigen_mse: BTreeMap<usize, Vec<f64>>,
}

pub fn side_of(n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || side < 2 {
        return Err(Error::Validation(format!(
            "sample size {n} is not a square lattice of side >= 2"
        )));
    }
    Ok(side)
}

pub fn replication_seed(root: u64, n: usize, replication: usize) -> u64 {
    derive_seed(derive_seed(root, n as u64), replication as u64)
}

pub fn run_study(
    spec: &SarhSpec,
    config: &StudyConfig,
    domain: &ThetaDomain,
    eta: EtaWeight,
) -> Result<StudyResult> {
    if config.replications == 0 {
        return Err(Error::Validation("replications must be positive".into()));
    }
    let truth = targets(spec, config.j0, domain, eta, config.target)?;
    let mut mse = Vec::new();
    let mut eigen_samples = Vec::new();
    let mut eigen_mse = BTreeMap::new();
    for &n in &config.sample_sizes {
        let side = side_of(n)?;
        let reports: Vec<EstimationReport> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                replicate(
                    spec,
                    side,
                    config.j0,
                    config.burn_in,
                    replication_seed(config.seed, n, r),
                    domain,
                    eta,
                )
            })
            .collect::<Result<_>>()?;
        let mut by_scale: BTreeMap<u32, [f64; 3]> = BTreeMap::new();
        for report in &reports {
            for (scale, e) in squared_errors_by_scale(report, &truth) {
                let acc = by_scale.entry(scale).or_insert([0.0; 3]);
                for i in 0..3 {
                    acc[i] += e[i] / config.replications as f64;
                }
            }
        }
        mse.push(MseRow { n, by_scale });
        eigen_mse.insert(n, reports.iter().map(|r| eigenvalue_mse(r, spec)).collect());
        for (r, report) in reports.iter().enumerate() {
            for (operator, values) in report.eigenvalues.iter().enumerate() {
                for (p, &value) in values.iter().enumerate() {
                    eigen_samples.push(EigenSample {
                        n,
                        replication: r,
                        operator: operator + 1,
                        p: p + 1,
                        value,
                    });
                }
            }
        }
    }
    Ok(StudyResult {
        mse,
        eigen_samples,
        eigen_mse,
    })
}

/// Scale labels present in a layout, in increasing order.
pub fn scales(j0: u32, depth: u32) -> Vec<u32> {
    let mut s: Vec<u32> = WaveletIndex::layout(j0, depth).iter().map(|w| w.scale()).collect();
    s.dedup();
    s
}
