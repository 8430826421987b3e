//! Orthonormal Haar multiresolution analysis on `[0, 1]`.
//!
//! Coefficient layout for a curve of `2^D` samples analysed down to level
//! `j0`:
//!
//! ```text
//! [ scaling (2^j0) | detail j0 (2^j0) | detail j0+1 (2^(j0+1)) | ... | detail D-1 (2^(D-1)) ]
//! ```
//!
//! so the detail node `(j, k)` sits at position `2^j + k` regardless of `j0`.
//! The layout, not the filter, is the contract: the per-step analysis
//! routine is the only Haar-specific code.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Array3, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FunctionalField, SpatialGrid, TimeGrid};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Scaling,
    Detail,
}

/// A basis function in the layout above. Scaling entries carry `level = j0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletIndex {
    pub kind: WaveletKind,
    pub level: u32,
    pub node: usize,
}

impl WaveletIndex {
    pub fn position(&self) -> usize {
        match self.kind {
            WaveletKind::Scaling => self.node,
            WaveletKind::Detail => (1usize << self.level) + self.node,
        }
    }

    pub fn from_position(position: usize, j0: u32, depth: u32) -> Result<Self> {
        if position >= 1 << depth || j0 > depth {
            return Err(Error::Validation(format!(
                "position {position} outside layout (j0={j0}, depth={depth})"
            )));
        }
        if position < 1 << j0 {
            return Ok(WaveletIndex {
                kind: WaveletKind::Scaling,
                level: j0,
                node: position,
            });
        }
        let level = usize::BITS - 1 - position.leading_zeros();
        Ok(WaveletIndex {
            kind: WaveletKind::Detail,
            level,
            node: position - (1 << level),
        })
    }

    /// All indices in layout order.
    pub fn layout(j0: u32, depth: u32) -> Vec<WaveletIndex> {
        (0..1usize << depth)
            .map(|i| WaveletIndex::from_position(i, j0, depth).expect("in range"))
            .collect()
    }

    /// The scale this entry is reported under: `j0` for the scaling block,
    /// `j` for detail level `j`.
    pub fn scale(&self) -> u32 {
        self.level
    }
}

fn check_len(n: usize, j0: u32) -> Result<u32> {
    if n < 1 || !n.is_power_of_two() {
        return Err(Error::Shape(format!(
            "wavelet transform needs a power-of-two length, got {n}"
        )));
    }
    let depth = n.trailing_zeros();
    if j0 > depth {
        return Err(Error::Validation(format!(
            "coarsest level j0={j0} exceeds depth {depth}"
        )));
    }
    Ok(depth)
}

/// Forward orthonormal Haar transform down to level `j0`.
pub fn dwt(curve: &[f64], j0: u32) -> Result<Vec<f64>> {
    let depth = check_len(curve.len(), j0)?;
    let mut out = curve.to_vec();
    let mut scratch = vec![0.0; curve.len()];
    for level in (j0..depth).rev() {
        let half = 1usize << level;
        for k in 0..half {
            let (a, b) = (out[2 * k], out[2 * k + 1]);
            scratch[k] = (a + b) * SQRT_HALF;
            scratch[half + k] = (a - b) * SQRT_HALF;
        }
        out[..2 * half].copy_from_slice(&scratch[..2 * half]);
    }
    Ok(out)
}

/// Inverse of [`dwt`].
pub fn idwt(coeffs: &[f64], j0: u32) -> Result<Vec<f64>> {
    let depth = check_len(coeffs.len(), j0)?;
    let mut out = coeffs.to_vec();
    let mut scratch = vec![0.0; coeffs.len()];
    for level in j0..depth {
        let half = 1usize << level;
        for k in 0..half {
            let (s, d) = (out[k], out[half + k]);
            scratch[2 * k] = (s + d) * SQRT_HALF;
            scratch[2 * k + 1] = (s - d) * SQRT_HALF;
        }
        out[..2 * half].copy_from_slice(&scratch[..2 * half]);
    }
    Ok(out)
}

/// Function-space coefficients `⟨X, b⟩` of a sampled curve: the vector
/// transform scaled by `2^{-D/2}`, so the sum of squares equals the discrete
/// `L²` norm of the curve.
pub fn curve_coefficients(curve: ArrayView1<f64>, j0: u32) -> Result<Array1<f64>> {
    let scale = (curve.len() as f64).sqrt().recip();
    let c = dwt(&curve.to_vec(), j0)?;
    Ok(Array1::from_iter(c.into_iter().map(|v| v * scale)))
}

/// Inverse of [`curve_coefficients`].
pub fn coefficients_curve(coeffs: ArrayView1<f64>, j0: u32) -> Result<Array1<f64>> {
    let scale = (coeffs.len() as f64).sqrt();
    let x = idwt(&coeffs.to_vec(), j0)?;
    Ok(Array1::from_iter(x.into_iter().map(|v| v * scale)))
}

/// Per-site wavelet coefficients of a curve field, shape `(s1, s2, 2^D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleCoefficients {
    grid: SpatialGrid,
    time: TimeGrid,
    j0: u32,
    coeffs: Array3<f64>,
}

impl MultiscaleCoefficients {
    pub fn new(grid: SpatialGrid, time: TimeGrid, j0: u32, coeffs: Array3<f64>) -> Result<Self> {
        if j0 > time.depth() {
            return Err(Error::Validation(format!(
                "j0={j0} exceeds depth {}",
                time.depth()
            )));
        }
        if coeffs.dim() != (grid.rows(), grid.cols(), time.len()) {
            return Err(Error::Shape(format!(
                "coefficient array has shape {:?}, expected ({}, {}, {})",
                coeffs.dim(),
                grid.rows(),
                grid.cols(),
                time.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite wavelet coefficient".into()));
        }
        Ok(MultiscaleCoefficients {
            grid,
            time,
            j0,
            coeffs,
        })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn j0(&self) -> u32 {
        self.j0
    }

    pub fn depth(&self) -> u32 {
        self.time.depth()
    }

    pub fn coeffs(&self) -> &Array3<f64> {
        &self.coeffs
    }

    pub fn layout(&self) -> Vec<WaveletIndex> {
        WaveletIndex::layout(self.j0, self.depth())
    }

    /// The scalar spatial field of one basis coefficient.
    pub fn node_field(&self, position: usize) -> Array2<f64> {
        self.coeffs.index_axis(Axis(2), position).to_owned()
    }

    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.grid.rows() || cols.end > self.grid.cols() {
            return Err(Error::Shape("crop window exceeds the lattice".into()));
        }
        Ok(MultiscaleCoefficients {
            grid: SpatialGrid::new(rows.len(), cols.len())?,
            time: self.time,
            j0: self.j0,
            coeffs: self.coeffs.slice(ndarray::s![rows, cols, ..]).to_owned(),
        })
    }
}

pub fn field_dwt(field: &FunctionalField, j0: u32) -> Result<MultiscaleCoefficients> {
    check_len(field.time().len(), j0)?;
    let mut coeffs = Array3::zeros(field.values().dim());
    Zip::from(coeffs.lanes_mut(Axis(2)))
        .and(field.values().lanes(Axis(2)))
        .for_each(|mut out, curve| {
            out.assign(&curve_coefficients(curve, j0).expect("length checked"));
        });
    MultiscaleCoefficients::new(field.grid(), field.time(), j0, coeffs)
}

pub fn field_idwt(coeffs: &MultiscaleCoefficients) -> Result<FunctionalField> {
    let mut values = Array3::zeros(coeffs.coeffs.dim());
    Zip::from(values.lanes_mut(Axis(2)))
        .and(coeffs.coeffs.lanes(Axis(2)))
        .for_each(|mut out, c| {
            out.assign(&coefficients_curve(c, coeffs.j0).expect("length checked"));
        });
    FunctionalField::new(coeffs.grid, coeffs.time, values)
}

/// Wavelet-domain matrix of an operator: entry `(a, b)` is `L(b_b)(b_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorWaveletMatrix {
    pub j0: u32,
    pub depth: u32,
    pub matrix: Array2<f64>,
}

impl OperatorWaveletMatrix {
    pub fn zeros(j0: u32, depth: u32) -> Self {
        let n = 1usize << depth;
        OperatorWaveletMatrix {
            j0,
            depth,
            matrix: Array2::zeros((n, n)),
        }
    }

    pub fn identity(j0: u32, depth: u32) -> Self {
        OperatorWaveletMatrix {
            j0,
            depth,
            matrix: Array2::eye(1 << depth),
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.depth
    }

    pub fn apply(&self, coeffs: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&coeffs)
    }

    pub fn diagonal(&self) -> Array1<f64> {
        self.matrix.diag().to_owned()
    }
}

/// Two-dimensional wavelet transform of the self-adjoint operator
/// `Σ_p λ_p φ_p ⊗ φ_p`, where `eigenfunctions` holds `φ_p` sampled on `time`
/// (one row per `p`) and `eigenvalues[p]` its eigenvalue.
pub fn operator_to_wavelet(
    eigenvalues: &[f64],
    eigenfunctions: &Array2<f64>,
    time: TimeGrid,
    j0: u32,
) -> Result<OperatorWaveletMatrix> {
    let (k, n) = eigenfunctions.dim();
    if eigenvalues.is_empty() || k < eigenvalues.len() {
        return Err(Error::Validation(format!(
            "{} eigenvalues but {k} eigenfunctions",
            eigenvalues.len()
        )));
    }
    if n != time.len() {
        return Err(Error::Shape(format!(
            "eigenfunctions sampled at {n} points, time grid has {}",
            time.len()
        )));
    }
    let projections: Vec<Array1<f64>> = eigenfunctions
        .rows()
        .into_iter()
        .take(eigenvalues.len())
        .map(|phi| curve_coefficients(phi, j0))
        .collect::<Result<_>>()?;
    let mut matrix = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            matrix[[a, b]] = eigenvalues
                .iter()
                .zip(&projections)
                .map(|(lambda, v)| lambda * (v[a] * v[b]))
                .sum();
        }
    }
    Ok(OperatorWaveletMatrix {
        j0,
        depth: time.depth(),
        matrix,
    })
}

/// The `k` largest-magnitude eigenvalues of the symmetrized matrix,
/// descending by magnitude.
pub fn wavelet_to_operator_eigs(op: &OperatorWaveletMatrix, k: usize) -> Result<Vec<f64>> {
    let n = op.matrix.nrows();
    if k > n {
        return Err(Error::Validation(format!(
            "requested {k} eigenvalues from a {n}x{n} matrix"
        )));
    }
    let sym = DMatrix::from_fn(n, n, |a, b| 0.5 * (op.matrix[[a, b]] + op.matrix[[b, a]]));
    let mut values: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    values.sort_by(|x, y| y.abs().total_cmp(&x.abs()).then(y.total_cmp(x)));
    values.truncate(k);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::sine_basis;

    #[test]
    fn constant_signal() {
        let n = 16;
        let c = 2.5;
        let out = dwt(&vec![c; n], 0).unwrap();
        assert!((out[0] - c * (n as f64).sqrt()).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_haar_step() {
        let out = dwt(&[1.0, -1.0], 0).unwrap();
        assert!(out[0].abs() < 1e-15);
        assert!((out[1] - 2f64.sqrt()).abs() < 1e-15);
        let back = idwt(&[0.0, 2f64.sqrt()], 0).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-15 && (back[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_give_zero_curve() {
        assert!(idwt(&[0.0; 8], 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(dwt(&[1.0, 2.0, 3.0], 0), Err(Error::Shape(_))));
        assert!(dwt(&[1.0; 4], 3).is_err());
        assert!(idwt(&[1.0; 6], 0).is_err());
    }

    #[test]
    fn j0_equal_depth_is_identity() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(dwt(&x, 2).unwrap(), x.to_vec());
    }

    #[test]
    fn index_positions() {
        for (j0, depth) in [(0, 4), (2, 5), (3, 3)] {
            let layout = WaveletIndex::layout(j0, depth);
            assert_eq!(layout.len(), 1 << depth);
            let scaling = layout.iter().filter(|w| w.kind == WaveletKind::Scaling).count();
            assert_eq!(scaling, 1 << j0);
            for (i, w) in layout.iter().enumerate() {
                assert_eq!(w.position(), i);
                if w.kind == WaveletKind::Detail {
                    assert!(w.level >= j0 && w.level < depth);
                    assert!(w.node < 1 << w.level);
                }
            }
        }
    }

    #[test]
    fn detail_position_matches_transform() {
        // A single detail at (j=2, k=1) on 8 samples lives on samples 2..4.
        let mut c = vec![0.0; 8];
        let idx = WaveletIndex {
            kind: WaveletKind::Detail,
            level: 2,
            node: 1,
        };
        c[idx.position()] = 1.0;
        let x = idwt(&c, 0).unwrap();
        let support: Vec<usize> = (0..8).filter(|&i| x[i].abs() > 1e-12).collect();
        assert_eq!(support, vec![2, 3]);
    }

    #[test]
    fn field_transforms() {
        let time = TimeGrid::new(3).unwrap();
        let grid = SpatialGrid::new(2, 3).unwrap();
        let field = FunctionalField::new(
            grid,
            time,
            Array3::from_shape_fn((2, 3, 8), |(p, q, _)| (p * 3 + q) as f64),
        )
        .unwrap();
        let coeffs = field_dwt(&field, 1).unwrap();
        for ((_, _, m), v) in coeffs.coeffs().indexed_iter() {
            if m >= 2 {
                assert!(v.abs() < 1e-12);
            }
        }
        let back = field_idwt(&coeffs).unwrap();
        for (a, b) in back.values().iter().zip(field.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = field_dwt(&FunctionalField::zeros(grid, time), 0).unwrap();
        assert!(zero.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_matrix_rank_one() {
        // Direct quadrature oracle: v_a = 2^-D Σ_m φ(t_m) b_a(t_m) with
        // b_a = 2^{D/2} · (row a of the orthonormal analysis matrix).
        let time = TimeGrid::new(5).unwrap();
        let n = time.len();
        let phi = Array2::from_shape_fn((1, n), |(_, m)| {
            (std::f64::consts::PI * time.point(m)).sin()
        });
        let op = operator_to_wavelet(&[0.3], &phi, time, 2).unwrap();
        let mut v = vec![0.0; n];
        for (a, va) in v.iter_mut().enumerate() {
            let mut unit = vec![0.0; n];
            unit[a] = 1.0;
            let basis = idwt(&unit, 2).unwrap();
            *va = (0..n)
                .map(|m| phi[[0, m]] * basis[m] * (n as f64).sqrt())
                .sum::<f64>()
                / n as f64;
        }
        for a in 0..n {
            for b in 0..n {
                assert!((op.matrix[[a, b]] - 0.3 * v[a] * v[b]).abs() < 1e-14);
            }
        }
        // Unnormalized sin(πt) has squared norm 1/2.
        let eig = wavelet_to_operator_eigs(&op, 1).unwrap();
        assert!((eig[0] - 0.15).abs() < 1e-12);
        let normalized = sine_basis(time, 1).unwrap();
        let op = operator_to_wavelet(&[0.3], &normalized, time, 2).unwrap();
        assert!((wavelet_to_operator_eigs(&op, 1).unwrap()[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn operator_matrix_is_exactly_symmetric() {
        let time = TimeGrid::new(4).unwrap();
        let phi = sine_basis(time, 6).unwrap();
        let op = operator_to_wavelet(&[0.3, -0.2, 0.1, 0.05, 0.4, 0.01], &phi, time, 1).unwrap();
        assert_eq!(op.matrix, op.matrix.t());
    }

    #[test]
    fn full_identity_operator_is_identity_matrix() {
        let time = TimeGrid::new(4).unwrap();
        let phi = sine_basis(time, 16).unwrap();
        let op = operator_to_wavelet(&[1.0; 16], &phi, time, 0).unwrap();
        for ((a, b), v) in op.matrix.indexed_iter() {
            let e = if a == b { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_identity_is_projector() {
        let time = TimeGrid::new(4).unwrap();
        let phi = sine_basis(time, 5).unwrap();
        let op = operator_to_wavelet(&[1.0; 5], &phi, time, 0).unwrap();
        let sq = op.matrix.dot(&op.matrix);
        for (a, b) in sq.iter().zip(op.matrix.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let trace: f64 = op.matrix.diag().sum();
        assert!((trace - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_operator() {
        let time = TimeGrid::new(3).unwrap();
        let phi = sine_basis(time, 3).unwrap();
        let op = operator_to_wavelet(&[0.0; 3], &phi, time, 0).unwrap();
        assert!(op.matrix.iter().all(|&v| v == 0.0));
        assert_eq!(wavelet_to_operator_eigs(&op, 3).unwrap(), vec![0.0; 3]);
        assert!(wavelet_to_operator_eigs(&op, 9).is_err());
    }
}
