//! Minimum-contrast estimation of per-node autoregressive parameters.
//!
//! Each basis pair of the wavelet layout is fitted independently by
//! minimizing the empirical contrast over a [`ThetaDomain`]: exhaustively on a
//! finite grid, or by an `11³` seeding grid followed by a coordinate pattern
//! search on a box. The fitted triples are assembled into wavelet-domain
//! matrices of `L₁`, `L₂`, `L₃`.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sarh::{stationarity_check, Theta};
use crate::spectral::{empirical_contrast, fdft_table, ContrastKernel, EtaWeight, FrequencyGrid};
use crate::wavelet::{wavelet_to_operator_eigs, MultiscaleCoefficients, OperatorWaveletMatrix, WaveletIndex};

/// Points per axis of the box-mode seeding grid.
pub const SEED_POINTS: usize = 11;
/// Pattern-search stopping step.
pub const THETA_TOLERANCE: f64 = 1e-6;
const MAX_EVALUATIONS: usize = 20_000;
/// Estimates this close (relative) to the stationarity frontier are flagged.
const BOUNDARY_MARGIN: f64 = 0.98;

/// `k_N = ⌊ln N⌋`.
pub fn truncation_for(n: usize) -> usize {
    (n as f64).ln().floor().max(0.0) as usize
}

fn lex(a: &Theta, b: &Theta) -> Ordering {
    a.t1
        .total_cmp(&b.t1)
        .then(a.t2.total_cmp(&b.t2))
        .then(a.t3.total_cmp(&b.t3))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaDomain {
    /// Stationary candidates, sorted lexicographically.
    FiniteGrid(Vec<Theta>),
    /// Per-coordinate bounds intersected with the stationarity region. With
    /// `factorized`, the search runs over `(θ₁, θ₂)` and `θ₃ = −θ₁θ₂`.
    Box {
        bounds: [(f64, f64); 3],
        factorized: bool,
    },
}

impl ThetaDomain {
    pub fn finite_grid(points: Vec<Theta>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("finite theta domain is empty".into()));
        }
        let mut kept: Vec<Theta> = points.into_iter().filter(stationarity_check).collect();
        if kept.is_empty() {
            return Err(Error::Validation(
                "every candidate in the theta domain is non-stationary".into(),
            ));
        }
        kept.sort_by(lex);
        kept.dedup();
        Ok(ThetaDomain::FiniteGrid(kept))
    }

    pub fn boxed(bounds: [(f64, f64); 3], factorized: bool) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Validation(format!(
                    "theta bound {} must satisfy lo < hi, got ({lo}, {hi})",
                    i + 1
                )));
            }
        }
        let domain = ThetaDomain::Box { bounds, factorized };
        if domain.seeds().is_empty() {
            return Err(Error::Validation(
                "theta box contains no stationary seeding point".into(),
            ));
        }
        Ok(domain)
    }

    /// Default box `[−1, 1]³`.
    pub fn default_box(factorized: bool) -> Self {
        ThetaDomain::Box {
            bounds: [(-1.0, 1.0); 3],
            factorized,
        }
    }

    fn feasible(&self, t: &Theta) -> bool {
        match self {
            ThetaDomain::FiniteGrid(points) => points.contains(t),
            ThetaDomain::Box { bounds, factorized } => {
                let coords = t.as_array();
                let dims = if *factorized { 2 } else { 3 };
                coords[..dims]
                    .iter()
                    .zip(bounds)
                    .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
                    && stationarity_check(t)
            }
        }
    }

    /// Seeding candidates in lexicographic order.
    pub fn seeds(&self) -> Vec<Theta> {
        match self {
            ThetaDomain::FiniteGrid(points) => points.clone(),
            ThetaDomain::Box { bounds, factorized } => {
                let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
                    (0..SEED_POINTS)
                        .map(|i| lo + (hi - lo) * i as f64 / (SEED_POINTS - 1) as f64)
                        .collect()
                };
                let (a1, a2, a3) = (axis(bounds[0]), axis(bounds[1]), axis(bounds[2]));
                let mut out = Vec::new();
                for &t1 in &a1 {
                    for &t2 in &a2 {
                        if *factorized {
                            out.push(Theta::factorized(t1, t2));
                        } else {
                            for &t3 in &a3 {
                                out.push(Theta::new(t1, t2, t3));
                            }
                        }
                    }
                }
                out.retain(|t| self.feasible(t));
                out
            }
        }
    }

    fn initial_steps(&self) -> [f64; 3] {
        match self {
            ThetaDomain::FiniteGrid(_) => [0.0; 3],
            ThetaDomain::Box { bounds, .. } => {
                let s = |(lo, hi): (f64, f64)| 0.5 * (hi - lo) / (SEED_POINTS - 1) as f64;
                [s(bounds[0]), s(bounds[1]), s(bounds[2])]
            }
        }
    }
}

/// Result of fitting one basis pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFit {
    pub theta: Theta,
    pub contrast: f64,
    pub evaluations: usize,
    /// The weighted periodogram was identically zero.
    pub degenerate: bool,
}

/// Contrast minimizer bound to one frequency grid and domain, with the
/// seeding candidates' log-symbol tables precomputed.
#[derive(Debug, Clone)]
pub struct Estimator {
    kernel: ContrastKernel,
    domain: ThetaDomain,
    seeds: Vec<Theta>,
    seed_logs: Array2<f64>,
    seed_log_z: Vec<f64>,
}

impl Estimator {
    pub fn new(freq: FrequencyGrid, eta: EtaWeight, domain: ThetaDomain) -> Result<Self> {
        let kernel = ContrastKernel::new(freq, eta)?;
        let seeds = domain.seeds();
        if seeds.is_empty() {
            return Err(Error::Validation("theta domain has no stationary candidate".into()));
        }
        let mut seed_logs = Array2::zeros((seeds.len(), kernel.active_len()));
        let mut seed_log_z = Vec::with_capacity(seeds.len());
        for (i, t) in seeds.iter().enumerate() {
            let (logs, log_z) = kernel.log_tables(t);
            seed_logs.row_mut(i).assign(&ndarray::Array1::from(logs));
            seed_log_z.push(log_z);
        }
        Ok(Estimator {
            kernel,
            domain,
            seeds,
            seed_logs,
            seed_log_z,
        })
    }

    pub fn kernel(&self) -> &ContrastKernel {
        &self.kernel
    }

    pub fn domain(&self) -> &ThetaDomain {
        &self.domain
    }

    /// Minimizes the contrast of a real periodogram table.
    pub fn fit(&self, periodogram: ArrayView2<f64>) -> Result<NodeFit> {
        if periodogram.dim() != self.kernel.freq().dims() {
            return Err(Error::Shape(format!(
                "periodogram shape {:?} does not match frequency grid {:?}",
                periodogram.dim(),
                self.kernel.freq().dims()
            )));
        }
        let weights = self.kernel.weights(periodogram);
        if weights.iter().all(|w| *w == 0.0) {
            let theta = if self.domain.feasible(&Theta::ZERO) {
                Theta::ZERO
            } else {
                self.seeds[0]
            };
            return Ok(NodeFit {
                theta,
                contrast: 0.0,
                evaluations: 0,
                degenerate: true,
            });
        }
        let wsum: f64 = weights.iter().sum();
        let w = ndarray::ArrayView1::from(&weights[..]);
        let scores = self.seed_logs.dot(&w);
        let mut best = 0;
        let mut best_value = f64::INFINITY;
        for (i, (s, lz)) in scores.iter().zip(&self.seed_log_z).enumerate() {
            let v = s + wsum * lz;
            // Seeds are lexicographic, so strict improvement keeps the
            // smallest theta among ties.
            if v < best_value {
                best_value = v;
                best = i;
            }
        }
        let mut theta = self.seeds[best];
        let mut evaluations = self.seeds.len();
        if let ThetaDomain::Box { factorized, .. } = self.domain {
            let (t, v, n) = self.pattern_search(&weights, theta, best_value, factorized);
            theta = t;
            best_value = v;
            evaluations += n;
        }
        debug_assert!(best_value.is_finite());
        Ok(NodeFit {
            theta,
            contrast: best_value,
            evaluations,
            degenerate: false,
        })
    }

    fn pattern_search(&self, weights: &[f64], start: Theta, start_value: f64, factorized: bool) -> (Theta, f64, usize) {
        let dims = if factorized { 2 } else { 3 };
        let mut step = self.domain.initial_steps();
        let mut cur = start.as_array();
        let mut cur_value = start_value;
        let mut evaluations = 0;
        let build = |c: [f64; 3]| {
            if factorized {
                Theta::factorized(c[0], c[1])
            } else {
                Theta::new(c[0], c[1], c[2])
            }
        };
        while step[..dims].iter().any(|s| *s >= THETA_TOLERANCE) && evaluations < MAX_EVALUATIONS {
            let mut improved = false;
            for i in 0..dims {
                for sign in [1.0, -1.0] {
                    let mut cand = cur;
                    cand[i] += sign * step[i];
                    let t = build(cand);
                    if !self.domain.feasible(&t) {
                        continue;
                    }
                    evaluations += 1;
                    let v = self.kernel.contrast(weights, &t);
                    if v < cur_value {
                        cur = cand;
                        cur_value = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        (build(cur), cur_value, evaluations)
    }
}

/// Fits one node; see [`Estimator::fit`]. The reported contrast is
/// re-evaluated through [`empirical_contrast`].
pub fn estimate_node(
    periodogram: ArrayView2<f64>,
    domain: &ThetaDomain,
    eta: EtaWeight,
) -> Result<(Theta, f64)> {
    let (s1, s2) = periodogram.dim();
    let est = Estimator::new(FrequencyGrid::new(s1, s2), eta, domain.clone())?;
    let fit = est.fit(periodogram)?;
    let contrast = empirical_contrast(periodogram, &fit.theta, eta)?;
    Ok((fit.theta, contrast))
}

/// Scale estimates of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Estimate {
    /// `σ̂²(θ) = ∫ I η`, the scale matching `f = σ²(θ) Ψ`.
    pub moment: f64,
    /// Innovation variance implied by the periodogram normalization:
    /// `E[I] = σ²_ε/(4π²)·|A|^{-2}`, so `σ̂²_ε = 4π² σ̂²(θ) / ∫ η |A|^{-2}`.
    pub innovation: f64,
}

pub fn estimate_sigma2(periodogram: ArrayView2<f64>, theta: &Theta, eta: EtaWeight) -> Result<Sigma2Estimate> {
    theta.check_stationary()?;
    let (s1, s2) = periodogram.dim();
    let kernel = ContrastKernel::new(FrequencyGrid::new(s1, s2), eta)?;
    Ok(sigma2_from_kernel(&kernel, &kernel.weights(periodogram), theta))
}

fn sigma2_from_kernel(kernel: &ContrastKernel, weights: &[f64], theta: &Theta) -> Sigma2Estimate {
    let moment: f64 = weights.iter().sum();
    let innovation = 4.0 * std::f64::consts::PI.powi(2) * moment / kernel.weighted_inverse_symbol(theta);
    Sigma2Estimate { moment, innovation }
}

/// Fitted parameters of one basis pair `(row, col)`; `row == col` on the
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub row: usize,
    pub col: usize,
    pub row_index: WaveletIndex,
    pub col_index: WaveletIndex,
    pub theta: Theta,
    pub sigma2: f64,
    pub sigma2_moment: f64,
    pub contrast: f64,
    pub evaluations: usize,
    pub near_boundary: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub eta: EtaWeight,
    pub include_cross: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportHeader {
    s1: usize,
    s2: usize,
    j0: u32,
    depth: u32,
    truncation: usize,
    include_cross: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub s1: usize,
    pub s2: usize,
    pub j0: u32,
    pub depth: u32,
    pub truncation: usize,
    pub include_cross: bool,
    pub pairs: Vec<PairEstimate>,
    /// Wavelet-domain matrices of `L₁`, `L₂`, `L₃`.
    pub operators: [OperatorWaveletMatrix; 3],
    /// Top-`k_N` eigenvalues of each operator matrix.
    pub eigenvalues: [Vec<f64>; 3],
}

impl EstimationReport {
    fn assemble(header: ReportHeader, pairs: Vec<PairEstimate>) -> Result<Self> {
        let n = 1usize << header.depth;
        let mut operators = [
            OperatorWaveletMatrix::zeros(header.j0, header.depth),
            OperatorWaveletMatrix::zeros(header.j0, header.depth),
            OperatorWaveletMatrix::zeros(header.j0, header.depth),
        ];
        for pair in &pairs {
            if pair.row >= n || pair.col >= n {
                return Err(Error::Shape(format!(
                    "pair ({}, {}) outside a {n}x{n} layout",
                    pair.row, pair.col
                )));
            }
            for (op, v) in operators.iter_mut().zip(pair.theta.as_array()) {
                op.matrix[[pair.row, pair.col]] = v;
                op.matrix[[pair.col, pair.row]] = v;
            }
        }
        let k = header.truncation.min(n);
        let eigenvalues = [
            wavelet_to_operator_eigs(&operators[0], k)?,
            wavelet_to_operator_eigs(&operators[1], k)?,
            wavelet_to_operator_eigs(&operators[2], k)?,
        ];
        Ok(EstimationReport {
            s1: header.s1,
            s2: header.s2,
            j0: header.j0,
            depth: header.depth,
            truncation: header.truncation,
            include_cross: header.include_cross,
            pairs,
            operators,
            eigenvalues,
        })
    }

    pub fn diagonal(&self) -> impl Iterator<Item = &PairEstimate> {
        self.pairs.iter().filter(|p| p.row == p.col)
    }

    /// NDJSON: a header line, then one record per basis pair.
    pub fn write_ndjson(&self, out: &mut impl Write) -> Result<()> {
        let header = ReportHeader {
            s1: self.s1,
            s2: self.s2,
            j0: self.j0,
            depth: self.depth,
            truncation: self.truncation,
            include_cross: self.include_cross,
        };
        serde_json::to_writer(&mut *out, &header)?;
        writeln!(out).map_err(|e| Error::io("<report>", e))?;
        for pair in &self.pairs {
            serde_json::to_writer(&mut *out, pair)?;
            writeln!(out).map_err(|e| Error::io("<report>", e))?;
        }
        Ok(())
    }

    pub fn read_ndjson(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: ReportHeader = match lines.next() {
            Some((_, Ok(l))) => serde_json::from_str(&l).map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad report header: {e}"),
            })?,
            Some((_, Err(e))) => return Err(Error::io("<report>", e)),
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty report".into(),
                })
            }
        };
        let mut pairs = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<report>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            pairs.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        EstimationReport::assemble(header, pairs)
    }

    /// CSV `p,lambda1_hat,lambda2_hat,lambda3_hat` (1-based `p`).
    pub fn write_eigenvalue_csv(&self, out: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("<eigenvalues>", e);
        writeln!(out, "p,lambda1_hat,lambda2_hat,lambda3_hat").map_err(io)?;
        for p in 0..self.eigenvalues[0].len() {
            writeln!(
                out,
                "{},{:?},{:?},{:?}",
                p + 1,
                self.eigenvalues[0][p],
                self.eigenvalues[1][p],
                self.eigenvalues[2][p]
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

fn near_boundary(theta: &Theta) -> bool {
    let scaled = Theta::new(
        theta.t1 / BOUNDARY_MARGIN,
        theta.t2 / BOUNDARY_MARGIN,
        theta.t3 / BOUNDARY_MARGIN,
    );
    !stationarity_check(&scaled)
}

/// Estimates every diagonal basis pair (and, with `include_cross`, every
/// off-diagonal pair from the real part of its cross-periodogram) and
/// assembles the operator matrices.
pub fn estimate_all(
    coeffs: &MultiscaleCoefficients,
    domain: &ThetaDomain,
    config: EstimationConfig,
) -> Result<EstimationReport> {
    let grid = coeffs.grid();
    let freq = FrequencyGrid::new(grid.rows(), grid.cols());
    let estimator = Estimator::new(freq, config.eta, domain.clone())?;
    let layout = coeffs.layout();
    let n = layout.len();
    let transforms: Vec<Array2<Complex64>> = (0..n)
        .into_par_iter()
        .map(|a| fdft_table(coeffs.coeffs().index_axis(ndarray::Axis(2), a)))
        .collect();

    let mut jobs: Vec<(usize, usize)> = (0..n).map(|a| (a, a)).collect();
    if config.include_cross {
        for a in 0..n {
            for b in a + 1..n {
                jobs.push((a, b));
            }
        }
    }
    let pairs: Vec<PairEstimate> = jobs
        .into_par_iter()
        .map(|(a, b)| {
            let table: Array2<f64> = if a == b {
                transforms[a].mapv(|z| z.norm_sqr())
            } else {
                ndarray::Zip::from(&transforms[a])
                    .and(&transforms[b])
                    .map_collect(|x, y| (x * y.conj()).re)
            };
            let fit = estimator.fit(table.view())?;
            let weights = estimator.kernel().weights(table.view());
            let s = sigma2_from_kernel(estimator.kernel(), &weights, &fit.theta);
            let contrast = if fit.degenerate {
                0.0
            } else {
                empirical_contrast(table.view(), &fit.theta, config.eta)?
            };
            Ok(PairEstimate {
                row: a,
                col: b,
                row_index: layout[a],
                col_index: layout[b],
                theta: fit.theta,
                sigma2: s.innovation,
                sigma2_moment: s.moment,
                contrast,
                evaluations: fit.evaluations,
                near_boundary: near_boundary(&fit.theta),
                degenerate: fit.degenerate,
            })
        })
        .collect::<Result<_>>()?;

    EstimationReport::assemble(
        ReportHeader {
            s1: grid.rows(),
            s2: grid.cols(),
            j0: coeffs.j0(),
            depth: coeffs.depth(),
            truncation: truncation_for(grid.size()),
            include_cross: config.include_cross,
        },
        pairs,
    )
}
