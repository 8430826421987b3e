//! Dyadic time grids, regular spatial lattices and curve fields.

use ndarray::{Array1, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported time depth (4096 samples per curve).
pub const MAX_DEPTH: u32 = 16;

/// `2^depth` equispaced samples on `[0, 1]` at cell midpoints `(m + 1/2) / 2^depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    depth: u32,
}

impl TimeGrid {
    pub fn new(depth: u32) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::Validation(format!(
                "time depth must be in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        Ok(TimeGrid { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        1 << self.depth
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Riemann weight of one sample, `2^-depth`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn point(&self, m: usize) -> f64 {
        (m as f64 + 0.5) / self.len() as f64
    }

    pub fn points(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.len(), |m| self.point(m))
    }

    /// Discrete `L²[0,1]` inner product of two sampled curves.
    pub fn inner(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        a.dot(&b) * self.weight()
    }

    /// Discrete integral `∫₀¹ f(t) dt` by the midpoint rule.
    pub fn integrate(&self, a: ArrayView1<f64>) -> f64 {
        a.sum() * self.weight()
    }
}

/// Regular `s1 × s2` lattice; `p` indexes rows, `q` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGrid {
    s1: usize,
    s2: usize,
}

impl SpatialGrid {
    pub fn new(s1: usize, s2: usize) -> Result<Self> {
        if s1 < 2 || s2 < 2 {
            return Err(Error::Validation(format!(
                "spatial grid needs at least 2x2 sites, got {s1}x{s2}"
            )));
        }
        Ok(SpatialGrid { s1, s2 })
    }

    pub fn rows(&self) -> usize {
        self.s1
    }

    pub fn cols(&self) -> usize {
        self.s2
    }

    /// Number of sites `N = s1 · s2`.
    pub fn size(&self) -> usize {
        self.s1 * self.s2
    }
}

/// A curve at every lattice site, stored as `(s1, s2, 2^D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalField {
    grid: SpatialGrid,
    time: TimeGrid,
    values: Array3<f64>,
}

impl FunctionalField {
    pub fn new(grid: SpatialGrid, time: TimeGrid, values: Array3<f64>) -> Result<Self> {
        let expected = (grid.rows(), grid.cols(), time.len());
        if values.dim() != expected {
            return Err(Error::Shape(format!(
                "field array has shape {:?}, expected {:?}",
                values.dim(),
                expected
            )));
        }
        if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {v} at (p={}, q={}, t={})",
                idx.0, idx.1, idx.2
            )));
        }
        Ok(FunctionalField { grid, time, values })
    }

    pub fn zeros(grid: SpatialGrid, time: TimeGrid) -> Self {
        FunctionalField {
            grid,
            time,
            values: Array3::zeros((grid.rows(), grid.cols(), time.len())),
        }
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

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    pub fn curve(&self, p: usize, q: usize) -> ArrayView1<'_, f64> {
        self.values.slice(ndarray::s![p, q, ..])
    }

    /// Pointwise map; the result is revalidated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        FunctionalField::new(self.grid, self.time, self.values.mapv(f))
    }

    /// Sub-lattice of rows `r0..r1` and columns `c0..c1`.
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.grid.rows() || cols.end > self.grid.cols() {
            return Err(Error::Shape("crop window exceeds the lattice".into()));
        }
        let grid = SpatialGrid::new(rows.len(), cols.len())?;
        let values = self
            .values
            .slice(ndarray::s![rows, cols, ..])
            .to_owned();
        Ok(FunctionalField {
            grid,
            time: self.time,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    time: TimeGrid,
    values: Array1<f64>,
}

impl MeanCurve {
    pub fn new(time: TimeGrid, values: Array1<f64>) -> Result<Self> {
        if values.len() != time.len() {
            return Err(Error::Shape(format!(
                "mean curve has {} samples, time grid has {}",
                values.len(),
                time.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite mean curve entry".into()));
        }
        Ok(MeanCurve { time, values })
    }

    pub fn zeros(time: TimeGrid) -> Self {
        MeanCurve {
            time,
            values: Array1::zeros(time.len()),
        }
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }
}

/// Removes the cross-site sample mean curve.
pub fn detrend(field: &FunctionalField) -> (FunctionalField, MeanCurve) {
    let mean = field
        .values
        .mean_axis(Axis(0))
        .and_then(|m| m.mean_axis(Axis(0)))
        .expect("lattice is never empty");
    let mut residual = field.values.clone();
    for mut curve in residual.lanes_mut(Axis(2)) {
        curve -= &mean;
    }
    (
        FunctionalField {
            grid: field.grid,
            time: field.time,
            values: residual,
        },
        MeanCurve {
            time: field.time,
            values: mean,
        },
    )
}

/// Inverse of [`detrend`].
pub fn add_mean(field: &FunctionalField, mean: &MeanCurve) -> Result<FunctionalField> {
    if mean.time != field.time {
        return Err(Error::Shape("mean curve and field use different time grids".into()));
    }
    let mut values = field.values.clone();
    for mut curve in values.lanes_mut(Axis(2)) {
        curve += &mean.values;
    }
    FunctionalField::new(field.grid, field.time, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_field(s1: usize, s2: usize, depth: u32, seed: u64) -> FunctionalField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let time = TimeGrid::new(depth).unwrap();
        let grid = SpatialGrid::new(s1, s2).unwrap();
        let values = Array3::from_shape_fn((s1, s2, time.len()), |_| rng.random_range(-3.0..3.0));
        FunctionalField::new(grid, time, values).unwrap()
    }

    #[test]
    fn time_grid_midpoints() {
        let t = TimeGrid::new(3).unwrap();
        assert_eq!(t.len(), 8);
        let pts = t.points();
        assert_eq!(pts[0], 1.0 / 16.0);
        assert_eq!(pts[7], 15.0 / 16.0);
        assert!(pts.windows(2).into_iter().all(|w| w[0] < w[1]));
        assert!(pts.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(TimeGrid::new(0).is_err());
    }

    #[test]
    fn spatial_grid_minimum() {
        assert!(SpatialGrid::new(1, 5).is_err());
        assert_eq!(SpatialGrid::new(3, 4).unwrap().size(), 12);
    }

    #[test]
    fn field_rejects_nan_and_bad_shape() {
        let time = TimeGrid::new(2).unwrap();
        let grid = SpatialGrid::new(2, 2).unwrap();
        let mut values = Array3::zeros((2, 2, 4));
        values[[1, 0, 3]] = f64::NAN;
        assert!(matches!(
            FunctionalField::new(grid, time, values),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            FunctionalField::new(grid, time, Array3::zeros((2, 3, 4))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn detrend_identical_curves() {
        let time = TimeGrid::new(3).unwrap();
        let grid = SpatialGrid::new(3, 4).unwrap();
        let c: Vec<f64> = time.points().iter().map(|t| (5.0 * t).sin() + 2.0).collect();
        let values = Array3::from_shape_fn((3, 4, 8), |(_, _, m)| c[m]);
        let field = FunctionalField::new(grid, time, values).unwrap();
        let (res, mean) = detrend(&field);
        assert!(res.values().iter().all(|v| v.abs() < 1e-12));
        for m in 0..8 {
            assert!((mean.values()[m] - c[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn detrend_zero_field() {
        let field = FunctionalField::zeros(SpatialGrid::new(2, 2).unwrap(), TimeGrid::new(2).unwrap());
        let (res, mean) = detrend(&field);
        assert!(res.values().iter().all(|&v| v == 0.0));
        assert!(mean.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detrend_zero_spatial_mean_and_inverse() {
        let field = random_field(5, 7, 4, 11);
        let (res, mean) = detrend(&field);
        for m in 0..field.time().len() {
            let avg = res.values().slice(ndarray::s![.., .., m]).mean().unwrap();
            assert!(avg.abs() < 1e-12);
        }
        let back = add_mean(&res, &mean).unwrap();
        for (a, b) in back.values().iter().zip(field.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn crop_window() {
        let field = random_field(6, 5, 2, 3);
        let sub = field.crop(1..4, 2..5).unwrap();
        assert_eq!(sub.grid().rows(), 3);
        assert_eq!(sub.grid().cols(), 3);
        assert_eq!(sub.values()[[0, 0, 1]], field.values()[[1, 2, 1]]);
        assert!(field.crop(0..7, 0..2).is_err());
    }
}
