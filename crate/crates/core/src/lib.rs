//! Multiscale spatial functional estimation for log-Gaussian Cox count
//! models.
//!
//! Curve-valued lattice fields follow a SARH(1) state equation in a sine
//! eigenbasis. Curves are analysed with an orthonormal Haar multiresolution
//! in time; every wavelet coefficient field is fitted by a minimum-contrast
//! (Whittle-type) criterion in the spatial frequency domain, and the fitted
//! operators drive a plug-in spatial predictor. The exponentiated field is
//! the intensity of a Poisson count layer.

pub mod basis;
pub mod cli;
pub mod config;
pub mod cox;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod predict;
pub mod rng;
pub mod sarh;
pub mod spectral;
pub mod study;
pub mod wavelet;

pub use error::{Error, Result};
