//! Fourier collocation on a uniform periodic grid over [-L, L).
//!
//! Conventions used throughout the crate:
//! - m equispaced points x_i = -L + 2L i / m, so x_0 = -L exactly.
//! - Integer mode indices j in {-m/2, ..., m/2 - 1} stored in FFT order
//!   [0, 1, ..., m/2 - 1, -m/2, ..., -1]; physical wavenumber k_j = pi j / L.
//! - The forward transform carries the 1/m factor: a band-limited field with
//!   coefficients c_j satisfies q(x_i) = sum_j c_j exp(i k_j x_i) exactly, and
//!   c_j approximates (1/2L) * integral of q(x) exp(-i k_j x) dx.
//!
//! Because the grid starts at -L rather than 0, the raw FFT picks up a phase
//! exp(i pi j) = (-1)^j per mode. m is even, so j and its storage index idx
//! have equal parity and the phase is the sign flip (-1)^idx applied to both
//! directions of the transform.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("domain half-width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("mode count must be a power of two and at least 8, got {0}")]
    BadModeCount(usize),
    #[error("derivative order must be at least 1")]
    BadOrder,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("evaluation window [{lo}, {hi}) is empty or outside the domain")]
    BadWindow { lo: f64, hi: f64 },
}

struct GridInner {
    half_width: f64,
    modes: usize,
    points: Vec<f64>,
    // k_j = pi j / L in FFT storage order.
    wavenumbers: Vec<f64>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridInner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_width", &self.half_width)
            .field("modes", &self.modes)
            .finish()
    }
}

/// Uniform periodic grid plus cached FFT plans. Cheap to clone.
#[derive(Clone, Debug)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.half_width == other.inner.half_width
                && self.inner.modes == other.inner.modes)
    }
}

impl Grid {
    /// m equispaced points on [-L, L) with FFT plans prepared up front.
    pub fn new(half_width: f64, modes: usize) -> Result<Self, SpectralError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(SpectralError::BadHalfWidth(half_width));
        }
        if modes < 8 || !modes.is_power_of_two() {
            return Err(SpectralError::BadModeCount(modes));
        }
        let m = modes;
        let l = half_width;
        let points = (0..m)
            .map(|i| -l + 2.0 * l * (i as f64) / (m as f64))
            .collect();
        let wavenumbers = (0..m)
            .map(|idx| {
                let j = signed_index(idx, m);
                PI * (j as f64) / l
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft_forward = planner.plan_fft_forward(m);
        let fft_inverse = planner.plan_fft_inverse(m);
        Ok(Grid {
            inner: Arc::new(GridInner {
                half_width,
                modes,
                points,
                wavenumbers,
                fft_forward,
                fft_inverse,
            }),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    pub fn modes(&self) -> usize {
        self.inner.modes
    }

    /// Grid spacing 2L / m.
    pub fn spacing(&self) -> f64 {
        2.0 * self.inner.half_width / (self.inner.modes as f64)
    }

    /// Collocation points x_i = -L + 2L i / m; x_0 = -L exactly.
    pub fn points(&self) -> &[f64] {
        &self.inner.points
    }

    /// Physical wavenumbers k_j = pi j / L in FFT storage order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// Forward transform: samples at the collocation points to coefficients.
    pub fn forward(&self, samples: &[Complex64]) -> Result<SpectralField, SpectralError> {
        let m = self.inner.modes;
        if samples.len() != m {
            return Err(SpectralError::LengthMismatch {
                expected: m,
                got: samples.len(),
            });
        }
        let mut buf = samples.to_vec();
        self.inner.fft_forward.process(&mut buf);
        let scale = 1.0 / (m as f64);
        for (idx, c) in buf.iter_mut().enumerate() {
            // (-1)^idx shifts the transform origin from x = 0 to x = -L.
            let sign = if idx % 2 == 0 { scale } else { -scale };
            *c *= sign;
        }
        Ok(SpectralField {
            grid: self.clone(),
            coeffs: buf,
        })
    }

    /// Forward transform of real samples.
    pub fn forward_real(&self, samples: &[f64]) -> Result<SpectralField, SpectralError> {
        let lifted: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&lifted)
    }

    pub(crate) fn forward_raw(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let m = self.inner.modes;
        debug_assert_eq!(samples.len(), m);
        let mut buf = samples.to_vec();
        self.inner.fft_forward.process(&mut buf);
        let scale = 1.0 / (m as f64);
        for (idx, c) in buf.iter_mut().enumerate() {
            let sign = if idx % 2 == 0 { scale } else { -scale };
            *c *= sign;
        }
        buf
    }

    pub(crate) fn inverse_raw(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let m = self.inner.modes;
        debug_assert_eq!(coeffs.len(), m);
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| if idx % 2 == 0 { c } else { -c })
            .collect();
        self.inner.fft_inverse.process(&mut buf);
        buf
    }
}

/// idx in [0, m) to the signed mode index j in [-m/2, m/2).
fn signed_index(idx: usize, m: usize) -> i64 {
    if idx < m / 2 {
        idx as i64
    } else {
        idx as i64 - m as i64
    }
}

/// Keep flags for the 2/3-rule guard in FFT storage order: true where
/// 3|j| <= m. Quadratic products of kept modes alias only into the dropped
/// band, so zeroing that band after each product removes aliasing errors.
pub fn two_thirds_mask(grid: &Grid) -> Vec<bool> {
    let m = grid.modes();
    (0..m)
        .map(|idx| 3 * signed_index(idx, m).unsigned_abs() <= m as u64)
        .collect()
}

/// A field stored by its Fourier coefficients on a specific grid.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.modes() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.modes(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn zero(grid: &Grid) -> Self {
        SpectralField {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.modes()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Inverse transform back to samples at the collocation points.
    pub fn to_physical(&self) -> Vec<Complex64> {
        self.grid.inverse_raw(&self.coeffs)
    }

    /// sum_j |c_j|^2; by Parseval this equals (1/m) sum_i |q_i|^2.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Trigonometric interpolant sum_j c_j exp(i k_j x) at an arbitrary x.
    pub fn evaluate_at(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&k, &c) in self.grid.wavenumbers().iter().zip(&self.coeffs) {
            let (s, co) = (k * x).sin_cos();
            acc += c * Complex64::new(co, s);
        }
        acc
    }

    /// Interpolant at many points. Modes with |c_j| below 1e-18 of the peak
    /// are skipped; they cannot move any value by more than m * 1e-18 * peak.
    pub fn evaluate_on(&self, xs: &[f64]) -> Vec<Complex64> {
        let peak = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cutoff = 1e-18 * peak;
        let active: Vec<(f64, Complex64)> = self
            .grid
            .wavenumbers()
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm() > cutoff)
            .map(|(&k, &c)| (k, c))
            .collect();
        xs.iter()
            .map(|&x| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(k, c) in &active {
                    let (s, co) = (k * x).sin_cos();
                    acc += c * Complex64::new(co, s);
                }
                acc
            })
            .collect()
    }
}

/// A Fourier multiplier: one complex entry per mode, FFT storage order.
#[derive(Clone, Debug)]
pub struct DiagonalSymbol {
    entries: Vec<Complex64>,
}

impl DiagonalSymbol {
    pub fn from_entries(entries: Vec<Complex64>) -> Self {
        DiagonalSymbol { entries }
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn apply(&self, field: &SpectralField) -> Result<SpectralField, SpectralError> {
        if self.entries.len() != field.coeffs.len() {
            return Err(SpectralError::LengthMismatch {
                expected: self.entries.len(),
                got: field.coeffs.len(),
            });
        }
        let coeffs = self
            .entries
            .iter()
            .zip(&field.coeffs)
            .map(|(&s, &c)| s * c)
            .collect();
        Ok(SpectralField {
            grid: field.grid.clone(),
            coeffs,
        })
    }

    pub(crate) fn apply_raw(&self, coeffs: &mut [Complex64]) {
        debug_assert_eq!(self.entries.len(), coeffs.len());
        for (c, &s) in coeffs.iter_mut().zip(&self.entries) {
            *c *= s;
        }
    }

    /// Entrywise exp(t * symbol). For purely imaginary symbols every entry
    /// has unit modulus, so applying it preserves l2_norm_sq.
    pub fn exp(&self, t: f64) -> DiagonalSymbol {
        DiagonalSymbol {
            entries: self.entries.iter().map(|&s| (s * t).exp()).collect(),
        }
    }

    /// Entrywise sum (symbols compose additively under exp).
    pub fn add(&self, other: &DiagonalSymbol) -> Result<DiagonalSymbol, SpectralError> {
        if self.entries.len() != other.entries.len() {
            return Err(SpectralError::LengthMismatch {
                expected: self.entries.len(),
                got: other.entries.len(),
            });
        }
        Ok(DiagonalSymbol {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: Complex64) -> DiagonalSymbol {
        DiagonalSymbol {
            entries: self.entries.iter().map(|&s| factor * s).collect(),
        }
    }
}

/// Symbol of d^order/dx^order: entries (i k_j)^order with the real/imaginary
/// split taken analytically so even orders are exactly real and odd orders
/// exactly imaginary. For odd orders the Nyquist mode j = -m/2 is zeroed:
/// its entry would be the lone unpaired imaginary value, which breaks the
/// conjugate symmetry that keeps derivatives of real fields real.
pub fn diff_symbol(grid: &Grid, order: u32) -> Result<DiagonalSymbol, SpectralError> {
    if order == 0 {
        return Err(SpectralError::BadOrder);
    }
    let m = grid.modes();
    let entries = grid
        .wavenumbers()
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let odd = order % 2 == 1;
            if odd && idx == m / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let mag = k.powi(order as i32);
            // i^order cycles (1, i, -1, -i).
            match order % 4 {
                0 => Complex64::new(mag, 0.0),
                1 => Complex64::new(0.0, mag),
                2 => Complex64::new(-mag, 0.0),
                _ => Complex64::new(0.0, -mag),
            }
        })
        .collect();
    Ok(DiagonalSymbol::from_entries(entries))
}
