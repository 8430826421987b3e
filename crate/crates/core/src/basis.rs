//! Sine eigenfunctions `φ_p(t) = sin(π p t)` sampled on a [`TimeGrid`].

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Rows are eigenfunctions `p = 1..=k`, each rescaled to unit discrete
/// `L²[0,1]` norm on the grid, so eigenvalues attached to them survive
/// discretization unchanged.
pub fn sine_basis(time: TimeGrid, k: usize) -> Result<Array2<f64>> {
    if k == 0 || k > time.len() {
        return Err(Error::Validation(format!(
            "truncation must be in 1..={}, got {k}",
            time.len()
        )));
    }
    let mut phi = Array2::from_shape_fn((k, time.len()), |(p, m)| {
        (std::f64::consts::PI * (p + 1) as f64 * time.point(m)).sin()
    });
    for mut row in phi.rows_mut() {
        let norm = time.inner(row.view(), row.view()).sqrt();
        row /= norm;
    }
    Ok(phi)
}

/// Largest sample magnitude over all rows.
pub fn sup_norm(basis: &Array2<f64>) -> f64 {
    basis.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
