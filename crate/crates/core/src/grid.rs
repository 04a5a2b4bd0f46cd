//! Periodic collocation grid on the torus `[-pi, pi)`.
//!
//! Transform convention used throughout the crate: for a field sampled at
//! `x_j = -pi + j * 2pi / n`, the discrete Fourier coefficients are
//!
//! ```text
//! c_k = (1 / n) * sum_j f_j exp(-i k j 2pi / n),    k in {-n/2 + 1, ..., n/2}
//! ```
//!
//! so that `f_j = sum_k c_k exp(i k j 2pi / n)` and Parseval reads
//! `integral |f|^2 dx = 2pi * sum_k |c_k|^2`. The Sobolev norm is
//! `||f||_{H^s}^2 = 2pi * sum_k (1 + k^2)^s |c_k|^2`, which gives
//! `||cos x||_{L^2}^2 = pi`. The shift of the grid origin to `-pi` only
//! multiplies `c_k` by a unit-modulus phase, so it never affects norms or
//! Fourier multipliers.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest admissible grid.
pub const MIN_POINTS: usize = 8;

/// Spatial discretization used for derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Exact differentiation of the trigonometric interpolant.
    Spectral,
    /// Second-order centered stencils with periodic wrap.
    FiniteDifference2,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Spectral => "spectral",
            Scheme::FiniteDifference2 => "finite_difference_2nd",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(Scheme::Spectral),
            "finite_difference_2nd" | "fd2" => Ok(Scheme::FiniteDifference2),
            other => Err(format!(
                "unknown scheme `{other}` (expected `spectral` or `finite_difference_2nd`)"
            )),
        }
    }
}

/// Real samples of a function at the collocation points of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field(vec![value; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        Field(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    /// `self + scale * other`
    pub fn axpy(&self, scale: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Minimum value and the first index attaining it.
    pub fn min_with_index(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, &v) in self.0.iter().enumerate() {
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Cyclic shift by whole grid increments: `out[j] = self[j - shift]`.
    pub fn shifted(&self, shift: isize) -> Field {
        let n = self.len() as isize;
        Field(
            (0..n)
                .map(|j| self.0[(j - shift).rem_euclid(n) as usize])
                .collect(),
        )
    }

    /// Reflection `x -> -x` on the grid `x_j = -pi + j h`, i.e. `j -> n - j (mod n)`.
    pub fn reflected(&self) -> Field {
        let n = self.len();
        Field((0..n).map(|j| self.0[(n - j) % n]).collect())
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// Equispaced periodic grid with cached FFT plans.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    scheme: Scheme,
    points: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl Grid {
    pub fn new(n_points: usize, scheme: Scheme) -> Result<Self> {
        if !n_points.is_multiple_of(2) {
            return Err(Error::Grid("n_points must be even".into()));
        }
        if n_points < MIN_POINTS {
            return Err(Error::Grid(format!("n_points must be at least {MIN_POINTS}")));
        }
        let h = 2.0 * PI / n_points as f64;
        let points = (0..n_points).map(|j| -PI + j as f64 * h).collect();
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n: n_points,
            scheme,
            points,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    /// Same points, different derivative scheme.
    pub fn with_scheme(&self, scheme: Scheme) -> Grid {
        Grid {
            scheme,
            ..self.clone()
        }
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn length(&self) -> f64 {
        2.0 * PI
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.points.iter().map(|&x| f(x)).collect())
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.n)
    }

    /// Integer wavenumber of FFT bin `j`, in `{-n/2 + 1, ..., n/2}`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        if j <= self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        }
    }

    fn check(&self, f: &Field) {
        assert_eq!(f.len(), self.n, "field length does not match grid");
    }

    /// Normalized coefficients `c_k` in FFT bin order.
    pub fn coefficients(&self, f: &Field) -> Vec<Complex<f64>> {
        self.check(f);
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let inv_n = 1.0 / self.n as f64;
        for c in &mut buf {
            *c *= inv_n;
        }
        buf
    }

    /// Inverse of [`Grid::coefficients`]; the imaginary part is discarded.
    pub fn synthesize(&self, mut coeffs: Vec<Complex<f64>>) -> Field {
        assert_eq!(coeffs.len(), self.n);
        self.inverse.process(&mut coeffs);
        Field(coeffs.into_iter().map(|c| c.re).collect())
    }

    /// Apply a Fourier multiplier `symbol(k)` mode by mode.
    pub fn apply_multiplier(&self, f: &Field, symbol: impl Fn(f64) -> Complex<f64>) -> Field {
        let mut c = self.coefficients(f);
        for (j, cj) in c.iter_mut().enumerate() {
            *cj *= symbol(self.wavenumber(j));
        }
        self.synthesize(c)
    }

    /// `d^order f / dx^order` with the grid's scheme; `order` in `1..=4`.
    pub fn derivative(&self, f: &Field, order: u32) -> Result<Field> {
        if !(1..=4).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be in 1..=4, got {order}"
            )));
        }
        self.check(f);
        Ok(match self.scheme {
            Scheme::Spectral => self.spectral_derivative(f, order),
            Scheme::FiniteDifference2 => self.fd_derivative(f, order),
        })
    }

    /// First derivative; infallible shorthand used in the hot loops.
    pub fn dx(&self, f: &Field) -> Field {
        self.check(f);
        match self.scheme {
            Scheme::Spectral => self.spectral_derivative(f, 1),
            Scheme::FiniteDifference2 => self.fd_derivative(f, 1),
        }
    }

    fn spectral_derivative(&self, f: &Field, order: u32) -> Field {
        let nyquist = (self.n / 2) as f64;
        self.apply_multiplier(f, |k| {
            if order % 2 == 1 && k == nyquist {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(0.0, k).powu(order)
            }
        })
    }

    fn fd_derivative(&self, f: &Field, order: u32) -> Field {
        let n = self.n as isize;
        let h = self.spacing();
        let at = |j: isize, o: isize| f[(j + o).rem_euclid(n) as usize];
        let values = (0..n)
            .map(|j| match order {
                1 => (at(j, 1) - at(j, -1)) / (2.0 * h),
                2 => (at(j, 1) - 2.0 * at(j, 0) + at(j, -1)) / (h * h),
                3 => (at(j, 2) - 2.0 * at(j, 1) + 2.0 * at(j, -1) - at(j, -2)) / (2.0 * h * h * h),
                _ => {
                    (at(j, 2) - 4.0 * at(j, 1) + 6.0 * at(j, 0) - 4.0 * at(j, -1) + at(j, -2))
                        / (h * h * h * h)
                }
            })
            .collect();
        Field(values)
    }

    /// `||f||_{H^s}^2 = 2pi * sum_k (1 + k^2)^s |c_k|^2`.
    pub fn sobolev_norm_sq(&self, f: &Field, s: u32) -> f64 {
        let c = self.coefficients(f);
        2.0 * PI
            * c.iter()
                .enumerate()
                .map(|(j, cj)| {
                    let k = self.wavenumber(j);
                    (1.0 + k * k).powi(s as i32) * cj.norm_sqr()
                })
                .sum::<f64>()
    }

    pub fn sobolev_norm(&self, f: &Field, s: u32) -> f64 {
        self.sobolev_norm_sq(f, s).sqrt()
    }

    /// Trapezoidal quadrature of `f * g` over the torus.
    pub fn l2_inner(&self, f: &Field, g: &Field) -> f64 {
        self.check(f);
        self.check(g);
        self.spacing() * f.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn integral(&self, f: &Field) -> f64 {
        self.check(f);
        self.spacing() * f.iter().sum::<f64>()
    }

    pub fn l2_norm(&self, f: &Field) -> f64 {
        self.l2_inner(f, f).sqrt()
    }

    /// Gaussian mollifier with symbol `exp(-eps^2 k^2)`.
    pub fn mollify(&self, f: &Field, epsilon: f64) -> Field {
        let e2 = epsilon * epsilon;
        self.apply_multiplier(f, |k| Complex::new((-e2 * k * k).exp(), 0.0))
    }

    /// Zero every mode with `|k| > n/3`. Under the finite-difference scheme
    /// this returns the input unchanged.
    pub fn dealias(&self, f: &Field) -> Field {
        if self.scheme != Scheme::Spectral {
            log::warn!("dealias requested under the finite-difference scheme; ignored");
            return f.clone();
        }
        let cutoff = self.n as f64 / 3.0;
        self.apply_multiplier(f, |k| {
            if k.abs() > cutoff {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(1.0, 0.0)
            }
        })
    }

    /// Sample `f` from a finer grid whose size is an integer multiple of ours.
    pub fn restrict_from(&self, fine: &Grid, f: &Field) -> Result<Field> {
        if fine.n < self.n || !fine.n.is_multiple_of(self.n) {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict from {} to {} points",
                fine.n, self.n
            )));
        }
        fine.check(f);
        let stride = fine.n / self.n;
        Ok(Field((0..self.n).map(|j| f[j * stride]).collect()))
    }
}
