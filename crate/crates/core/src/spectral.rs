//! Spatial frequency-domain machinery on scalar coefficient fields.
//!
//! All integrals over the frequency square are Riemann sums over the `N`
//! Fourier frequencies with cell area `(2π)²/N`. Frequencies are reported in
//! the symmetric fundamental domain `(−π, π]²`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sarh::Theta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    s1: usize,
    s2: usize,
}

impl FrequencyGrid {
    pub fn new(s1: usize, s2: usize) -> Self {
        FrequencyGrid { s1, s2 }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.s1, self.s2)
    }

    pub fn len(&self) -> usize {
        self.s1 * self.s2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Riemann cell area `(2π)²/N`.
    pub fn cell(&self) -> f64 {
        4.0 * PI * PI / self.len() as f64
    }

    pub fn w1(&self, a: usize) -> f64 {
        fold(a, self.s1)
    }

    pub fn w2(&self, b: usize) -> f64 {
        fold(b, self.s2)
    }

    pub fn frequency(&self, a: usize, b: usize) -> (f64, f64) {
        (self.w1(a), self.w2(b))
    }

    /// Index of `−ϖ` modulo `2π`.
    pub fn negate(&self, a: usize, b: usize) -> (usize, usize) {
        ((self.s1 - a) % self.s1, (self.s2 - b) % self.s2)
    }

    /// Sum of `table · η` weighted by the cell area.
    pub fn integrate(&self, table: ArrayView2<f64>) -> f64 {
        table.sum() * self.cell()
    }
}

/// `2πa/n` folded into `(−π, π]`.
fn fold(a: usize, n: usize) -> f64 {
    if 2 * a <= n {
        2.0 * PI * a as f64 / n as f64
    } else {
        2.0 * PI * (a as f64 - n as f64) / n as f64
    }
}

/// Spectral weight function `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaWeight {
    /// `η(ϖ) = |ϖ₁|²|ϖ₂|²`.
    #[default]
    W2W2,
}

impl EtaWeight {
    pub fn eval(&self, w1: f64, w2: f64) -> f64 {
        match self {
            EtaWeight::W2W2 => w1 * w1 * w2 * w2,
        }
    }

    pub fn table(&self, freq: &FrequencyGrid) -> Array2<f64> {
        let (s1, s2) = freq.dims();
        Array2::from_shape_fn((s1, s2), |(a, b)| {
            let (w1, w2) = freq.frequency(a, b);
            self.eval(w1, w2)
        })
    }
}

pub fn eta_weight(w1: f64, w2: f64) -> f64 {
    EtaWeight::W2W2.eval(w1, w2)
}

fn norm_factor(n: usize) -> f64 {
    1.0 / (2.0 * PI * (n as f64).sqrt())
}

/// `(1/(2π√N)) Σ_{p,q} x[p,q] e^{−i(pω₁+qω₂)}` with 0-based site indices.
pub fn fdft(field: ArrayView2<f64>, w1: f64, w2: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((p, q), &x) in field.indexed_iter() {
        acc += x * Complex64::from_polar(1.0, -(p as f64 * w1 + q as f64 * w2));
    }
    acc * norm_factor(field.len())
}

/// fDFT at every Fourier frequency via a row/column FFT.
pub fn fdft_table(field: ArrayView2<f64>) -> Array2<Complex64> {
    let (s1, s2) = field.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(s2);
    let col_fft = planner.plan_fft_forward(s1);
    // Logical (row-major) order regardless of the view's memory layout.
    let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    row_fft.process(&mut data);
    let mut column = vec![Complex64::new(0.0, 0.0); s1];
    for q in 0..s2 {
        for p in 0..s1 {
            column[p] = data[p * s2 + q];
        }
        col_fft.process(&mut column);
        for p in 0..s1 {
            data[p * s2 + q] = column[p];
        }
    }
    let scale = norm_factor(s1 * s2);
    Array2::from_shape_vec((s1, s2), data.into_iter().map(|z| z * scale).collect())
        .expect("shape matches")
}

/// Periodogram (or cross-periodogram) of one basis pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodogramTable {
    pub freq: FrequencyGrid,
    pub values: Array2<Complex64>,
}

impl PeriodogramTable {
    pub fn from_transforms(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::Shape(format!(
                "fDFT tables differ in shape: {:?} vs {:?}",
                a.dim(),
                b.dim()
            )));
        }
        let (s1, s2) = a.dim();
        let mut values = Array2::zeros((s1, s2));
        ndarray::Zip::from(&mut values)
            .and(a)
            .and(b)
            .for_each(|v, x, y| *v = x * y.conj());
        Ok(PeriodogramTable {
            freq: FrequencyGrid::new(s1, s2),
            values,
        })
    }

    /// Real table; for diagonal periodograms this drops a zero imaginary part.
    pub fn real(&self) -> Array2<f64> {
        self.values.mapv(|z| z.re)
    }

    /// CSV `a,b,w1,w2,re,im`, one row per Fourier frequency.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "b", "w1", "w2", "re", "im"])?;
        for ((a, b), z) in self.values.indexed_iter() {
            let (w1, w2) = self.freq.frequency(a, b);
            w.write_record([
                a.to_string(),
                b.to_string(),
                format!("{w1:?}"),
                format!("{w2:?}"),
                format!("{:?}", z.re),
                format!("{:?}", z.im),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn zeros(s1: usize, s2: usize) -> Self {
        PeriodogramTable {
            freq: FrequencyGrid::new(s1, s2),
            values: Array2::zeros((s1, s2)),
        }
    }
}

/// `I(ϖ) = X̃_a(ϖ) · conj(X̃_b(ϖ))` at all Fourier frequencies.
pub fn periodogram(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<PeriodogramTable> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "fields differ in shape: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let ta = fdft_table(a);
    if a == b {
        let values = ta.mapv(|z| Complex64::new(z.norm_sqr(), 0.0));
        let (s1, s2) = a.dim();
        return Ok(PeriodogramTable {
            freq: FrequencyGrid::new(s1, s2),
            values,
        });
    }
    PeriodogramTable::from_transforms(&ta, &fdft_table(b))
}

/// Parametric density `σ²/(2π²) · |1 − θ₁e^{iω₁} − θ₂e^{iω₂} − θ₃e^{i(ω₁+ω₂)}|^{-2}`.
pub fn model_density(theta: &Theta, sigma2: f64, w1: f64, w2: f64) -> Result<f64> {
    theta.check_stationary()?;
    Ok(sigma2 / (2.0 * PI * PI) / theta.symbol_sq(w1, w2))
}

pub fn model_density_table(theta: &Theta, sigma2: f64, freq: &FrequencyGrid) -> Result<Array2<f64>> {
    theta.check_stationary()?;
    let (s1, s2) = freq.dims();
    Ok(Array2::from_shape_fn((s1, s2), |(a, b)| {
        let (w1, w2) = freq.frequency(a, b);
        sigma2 / (2.0 * PI * PI) / theta.symbol_sq(w1, w2)
    }))
}

/// Normalised density `Ψ = f / σ²(θ)` with `σ²(θ) = ∫ f η`; returns
/// `(Ψ, σ²(θ))`. `Ψ` does not depend on `sigma2`.
pub fn normalised_density(
    theta: &Theta,
    sigma2: f64,
    eta: EtaWeight,
    freq: &FrequencyGrid,
) -> Result<(Array2<f64>, f64)> {
    let f = model_density_table(theta, sigma2, freq)?;
    let eta_t = eta.table(freq);
    let scale = freq.integrate((&f * &eta_t).view());
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate(format!(
            "weighted spectral mass is {scale}; the weight vanishes on this grid"
        )));
    }
    Ok((f / scale, scale))
}

/// `Û(θ) = −∫ I η log Ψ(·, θ)`.
pub fn empirical_contrast(
    periodogram: ArrayView2<f64>,
    theta: &Theta,
    eta: EtaWeight,
) -> Result<f64> {
    let (s1, s2) = periodogram.dim();
    let freq = FrequencyGrid::new(s1, s2);
    let (psi, _) = normalised_density(theta, 1.0, eta, &freq)?;
    let eta_t = eta.table(&freq);
    let mut acc = 0.0;
    for ((a, b), &i) in periodogram.indexed_iter() {
        let w = eta_t[[a, b]];
        if w != 0.0 {
            acc += i * w * psi[[a, b]].ln();
        }
    }
    Ok(-acc * freq.cell())
}

/// `U(θ) = −∫ f(·, θ₀) η log Ψ(·, θ)` for unit innovation variance.
pub fn population_contrast(
    theta0: &Theta,
    theta: &Theta,
    eta: EtaWeight,
    freq: &FrequencyGrid,
) -> Result<f64> {
    let f0 = model_density_table(theta0, 1.0, freq)?;
    empirical_contrast(f0.view(), theta, eta)
}

/// `K(θ₀, θ) = ∫ f(·, θ₀) η log[Ψ(·, θ₀)/Ψ(·, θ)]` for unit innovation
/// variance, evaluated directly (not through [`population_contrast`]).
pub fn divergence(theta0: &Theta, theta: &Theta, eta: EtaWeight, freq: &FrequencyGrid) -> Result<f64> {
    let f0 = model_density_table(theta0, 1.0, freq)?;
    let (psi0, _) = normalised_density(theta0, 1.0, eta, freq)?;
    let (psi, _) = normalised_density(theta, 1.0, eta, freq)?;
    let eta_t = eta.table(freq);
    let mut acc = 0.0;
    for ((a, b), &w) in eta_t.indexed_iter() {
        if w != 0.0 {
            acc += f0[[a, b]] * w * (psi0[[a, b]] / psi[[a, b]]).ln();
        }
    }
    Ok(acc * freq.cell())
}

#[derive(Debug, Clone, Copy)]
struct ActiveFrequency {
    eta: f64,
    c1: f64,
    s1: f64,
    c2: f64,
    s2: f64,
    c12: f64,
    s12: f64,
}

/// Precomputed trigonometric tables for repeated contrast evaluation on one
/// frequency grid. Only frequencies with `η > 0` are kept.
///
/// With `w = cell · I · η` the contrast reduces to
/// `Û(θ) = Σ w log|A(θ)|² + (Σ w) · log Z(θ)`,
/// `Z(θ) = cell · Σ η / |A(θ)|²`.
#[derive(Debug, Clone)]
pub struct ContrastKernel {
    freq: FrequencyGrid,
    eta: EtaWeight,
    active: Vec<ActiveFrequency>,
    positions: Vec<(usize, usize)>,
}

impl ContrastKernel {
    pub fn new(freq: FrequencyGrid, eta: EtaWeight) -> Result<Self> {
        let (s1, s2) = freq.dims();
        let mut active = Vec::new();
        let mut positions = Vec::new();
        for a in 0..s1 {
            for b in 0..s2 {
                let (w1, w2) = freq.frequency(a, b);
                let e = eta.eval(w1, w2);
                if e > 0.0 {
                    let (s1v, c1) = w1.sin_cos();
                    let (s2v, c2) = w2.sin_cos();
                    let (s12, c12) = (w1 + w2).sin_cos();
                    active.push(ActiveFrequency {
                        eta: e,
                        c1,
                        s1: s1v,
                        c2,
                        s2: s2v,
                        c12,
                        s12,
                    });
                    positions.push((a, b));
                }
            }
        }
        if active.is_empty() {
            return Err(Error::Degenerate(format!(
                "weight function vanishes on the {s1}x{s2} frequency grid"
            )));
        }
        Ok(ContrastKernel {
            freq,
            eta,
            active,
            positions,
        })
    }

    pub fn freq(&self) -> FrequencyGrid {
        self.freq
    }

    pub fn eta(&self) -> EtaWeight {
        self.eta
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    /// `cell · I · η` over the active frequencies.
    pub fn weights(&self, periodogram: ArrayView2<f64>) -> Vec<f64> {
        let cell = self.freq.cell();
        self.positions
            .iter()
            .zip(&self.active)
            .map(|(&(a, b), f)| cell * periodogram[[a, b]] * f.eta)
            .collect()
    }

    #[inline]
    fn symbol_sq(f: &ActiveFrequency, t: &Theta) -> f64 {
        let re = 1.0 - t.t1 * f.c1 - t.t2 * f.c2 - t.t3 * f.c12;
        let im = t.t1 * f.s1 + t.t2 * f.s2 + t.t3 * f.s12;
        re * re + im * im
    }

    /// `(log|A|² per active frequency, log Z)`.
    pub fn log_tables(&self, theta: &Theta) -> (Vec<f64>, f64) {
        let mut logs = Vec::with_capacity(self.active.len());
        let mut z = 0.0;
        for f in &self.active {
            let s = Self::symbol_sq(f, theta);
            logs.push(s.ln());
            z += f.eta / s;
        }
        (logs, (z * self.freq.cell()).ln())
    }

    /// Contrast from precomputed weights; `theta` must be stationary.
    pub fn contrast(&self, weights: &[f64], theta: &Theta) -> f64 {
        let mut lin = 0.0;
        let mut z = 0.0;
        let mut wsum = 0.0;
        for (f, &w) in self.active.iter().zip(weights) {
            let s = Self::symbol_sq(f, theta);
            lin += w * s.ln();
            z += f.eta / s;
            wsum += w;
        }
        lin + wsum * (z * self.freq.cell()).ln()
    }

    /// `cell · Σ η / |A(θ)|²`, i.e. `∫ η |A|^{-2}`.
    pub fn weighted_inverse_symbol(&self, theta: &Theta) -> f64 {
        self.active
            .iter()
            .map(|f| f.eta / Self::symbol_sq(f, theta))
            .sum::<f64>()
            * self.freq.cell()
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn periodogram_csv_layout() {
        let x = ndarray::Array2::from_shape_fn((2, 3), |(a, b)| (a * 3 + b) as f64);
        let t = super::periodogram(x.view(), x.view()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "a,b,w1,w2,re,im");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0,0,0.0,0.0,"));
    }

    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_field(s1: usize, s2: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((s1, s2), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn frequency_grid_is_symmetric() {
        for (s1, s2) in [(4, 5), (7, 6), (2, 2)] {
            let f = FrequencyGrid::new(s1, s2);
            for a in 0..s1 {
                let w = f.w1(a);
                assert!(w > -PI && w <= PI);
                let (na, _) = f.negate(a, 0);
                let d = (f.w1(na) + w).rem_euclid(2.0 * PI);
                assert!(d < 1e-12 || (2.0 * PI - d) < 1e-12);
            }
            assert_eq!(f.len(), s1 * s2);
        }
    }

    #[test]
    fn fdft_examples() {
        let zero = Array2::<f64>::zeros((4, 4));
        assert_eq!(fdft(zero.view(), 0.3, 1.1), Complex64::new(0.0, 0.0));
        let mut single = Array2::<f64>::zeros((5, 4));
        single[[1, 1]] = 3.0;
        let z = fdft(single.view(), 0.0, 0.0);
        assert!((z.re - 3.0 / (2.0 * PI * 20f64.sqrt())).abs() < 1e-15);
        let x = random_field(6, 5, 1);
        let a = fdft(x.view(), 0.7, -1.3);
        let b = fdft(x.view(), 0.7 + 2.0 * PI, -1.3);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn fft_table_matches_direct_sum() {
        let x = random_field(6, 7, 2);
        let table = fdft_table(x.view());
        let freq = FrequencyGrid::new(6, 7);
        for a in 0..6 {
            for b in 0..7 {
                let (w1, w2) = freq.frequency(a, b);
                assert!((table[[a, b]] - fdft(x.view(), w1, w2)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn periodogram_cases() {
        let x = random_field(8, 8, 3);
        let y = random_field(8, 8, 4);
        let diag = periodogram(x.view(), x.view()).unwrap();
        assert!(diag.values.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
        let cross_self = PeriodogramTable::from_transforms(&fdft_table(x.view()), &fdft_table(x.view())).unwrap();
        for (u, v) in diag.values.iter().zip(cross_self.values.iter()) {
            assert!((u - v).norm() < 1e-15);
        }
        let cross = periodogram(x.view(), y.view()).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let (na, nb) = cross.freq.negate(a, b);
                assert!((cross.values[[na, nb]] - cross.values[[a, b]].conj()).norm() < 1e-12);
            }
        }
        let zero = Array2::<f64>::zeros((8, 8));
        assert!(periodogram(zero.view(), zero.view()).unwrap().values.iter().all(|z| z.norm() == 0.0));
        assert!(periodogram(x.view(), Array2::<f64>::zeros((8, 7)).view()).is_err());
    }

    #[test]
    fn white_noise_periodogram_mean_is_variance() {
        // Discrete Parseval: (2π)²/N · Σ I = (1/N) Σ x².
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((50, 50), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let table = periodogram(x.view(), x.view()).unwrap();
        let freq = table.freq;
        let avg = freq.integrate(table.real().view());
        let second_moment = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        // ∫ I dϖ equals the mean square exactly.
        assert!((avg - second_moment).abs() < 1e-12 * second_moment.max(1.0));
        let mean = x.mean().unwrap();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((avg / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn model_density_examples() {
        let s2 = 1.7;
        let c = s2 / (2.0 * PI * PI);
        assert!((model_density(&Theta::ZERO, s2, 0.4, -2.0).unwrap() - c).abs() < 1e-15);
        let t = Theta::new(0.3, 0.5, -0.15);
        let at_zero = model_density(&t, s2, 0.0, 0.0).unwrap();
        assert!((at_zero - c / (0.35f64 * 0.35)).abs() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (w1, w2) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let f = model_density(&t, s2, w1, w2).unwrap();
            let g1 = Complex64::new(1.0, 0.0) - 0.3 * Complex64::from_polar(1.0, w1);
            let g2 = Complex64::new(1.0, 0.0) - 0.5 * Complex64::from_polar(1.0, w2);
            let fact = c / g1.norm_sqr() / g2.norm_sqr();
            assert!((f - fact).abs() < 1e-12 * fact);
            assert!((f - model_density(&t, s2, -w1, -w2).unwrap()).abs() < 1e-12 * f);
        }
        assert!(model_density(&Theta::new(0.7, 0.7, 0.0), 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_weight(0.0, 2.0), 0.0);
        assert!((eta_weight(PI / 2.0, PI) - PI.powi(4) / 4.0).abs() < 1e-12);
        assert_eq!(eta_weight(-0.3, 1.2), eta_weight(0.3, -1.2));
    }

    #[test]
    fn normalised_density_identities() {
        let freq = FrequencyGrid::new(12, 10);
        let eta_t = EtaWeight::W2W2.table(&freq);
        let (psi0, _) = normalised_density(&Theta::ZERO, 1.0, EtaWeight::W2W2, &freq).unwrap();
        let expected = 1.0 / freq.integrate(eta_t.view());
        assert!(psi0.iter().all(|v| (v - expected).abs() < 1e-14));
        let t = Theta::new(0.3, 0.5, -0.15);
        let (psi1, s1) = normalised_density(&t, 1.0, EtaWeight::W2W2, &freq).unwrap();
        let (psi7, s7) = normalised_density(&t, 7.0, EtaWeight::W2W2, &freq).unwrap();
        assert!((s7 / s1 - 7.0).abs() < 1e-12);
        for (a, b) in psi1.iter().zip(psi7.iter()) {
            assert!((a - b).abs() < 1e-12 * a);
        }
        // Independent Riemann-sum oracle for the normalization.
        let mut total = 0.0;
        for a in 0..12 {
            for b in 0..10 {
                total += psi1[[a, b]] * eta_t[[a, b]];
            }
        }
        assert!((total * 4.0 * PI * PI / 120.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn contrast_examples() {
        let zero = Array2::<f64>::zeros((6, 6));
        assert_eq!(empirical_contrast(zero.view(), &Theta::new(0.2, 0.1, 0.0), EtaWeight::W2W2).unwrap(), 0.0);
        let i = random_field(6, 6, 5).mapv(f64::abs);
        let freq = FrequencyGrid::new(6, 6);
        let eta_t = EtaWeight::W2W2.table(&freq);
        let psi_const = 1.0 / freq.integrate(eta_t.view());
        let mass = freq.integrate((&i * &eta_t).view());
        let u = empirical_contrast(i.view(), &Theta::ZERO, EtaWeight::W2W2).unwrap();
        assert!((u + psi_const.ln() * mass).abs() < 1e-12);
        assert!(empirical_contrast(i.view(), &Theta::new(0.9, 0.9, 0.0), EtaWeight::W2W2).is_err());
    }

    #[test]
    fn kernel_matches_reference_contrast() {
        let i = random_field(9, 8, 6).mapv(|v| v * v);
        let kernel = ContrastKernel::new(FrequencyGrid::new(9, 8), EtaWeight::W2W2).unwrap();
        let w = kernel.weights(i.view());
        for t in [Theta::ZERO, Theta::new(0.3, 0.5, -0.15), Theta::new(-0.4, 0.2, 0.1)] {
            let fast = kernel.contrast(&w, &t);
            let slow = empirical_contrast(i.view(), &t, EtaWeight::W2W2).unwrap();
            assert!((fast - slow).abs() < 1e-12 * slow.abs().max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn divergence_basic() {
        let freq = FrequencyGrid::new(16, 16);
        let t0 = Theta::new(0.3, 0.5, -0.15);
        assert_eq!(divergence(&t0, &t0, EtaWeight::W2W2, &freq).unwrap(), 0.0);
        assert!(divergence(&t0, &Theta::ZERO, EtaWeight::W2W2, &freq).unwrap() > 0.0);
    }
}
