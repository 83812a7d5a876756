//! Truncated real-valued trigonometric series on `T^n x T^ell`.
//!
//! Angles live in `[0, 1)` and a series is
//! `u(x) = sum_k c_k exp(2 pi i k.x)` with `c_{-k} = conj(c_k)`. Axes are
//! ordered internal angles first, then external angles. Coefficients are
//! stored densely over the box `|k_j| <= N_j`, last axis fastest.

mod io;
mod transform;

pub use io::{read_coefficients, write_coefficients};
pub use transform::{
    forward_transform, forward_transform_with_residual, grid_sup_norm, inverse_transform,
};

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use rustfft::num_complex::Complex64;
use thiserror::Error;

/// Imaginary residual above which direct evaluation reports a broken symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("invalid torus dimensions n={n}, ell={ell} (both must be >= 1)")]
    InvalidDims { n: usize, ell: usize },
    #[error(
        "grid axis {axis} has {samples} samples but cutoff {cutoff} needs at least {required}"
    )]
    ShapeTooSmall {
        axis: usize,
        samples: usize,
        cutoff: usize,
        required: usize,
    },
    #[error("expected {expected} axes, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis} out of range for {d} angles")]
    AxisOutOfRange { axis: usize, d: usize },
    #[error("series violates Hermitian symmetry (imaginary residual {residual:e})")]
    SymmetryViolation { residual: f64 },
    #[error("coefficient buffer has {got} entries, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("grid value buffer has {got} entries, expected {expected}")]
    GridLength { expected: usize, got: usize },
    #[error("coefficient file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FourierError>;

/// Number of internal (`n`) and external (`ell`) angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusDims {
    n: usize,
    ell: usize,
}

impl TorusDims {
    pub fn new(n: usize, ell: usize) -> Result<Self> {
        if n == 0 || ell == 0 {
            return Err(FourierError::InvalidDims { n, ell });
        }
        Ok(Self { n, ell })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Total number of angles.
    pub fn d(&self) -> usize {
        self.n + self.ell
    }
}

/// Half-width of a complex strip around the real torus.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StripRadius(f64);

impl StripRadius {
    pub fn new(rho: f64) -> Option<Self> {
        (rho > 0.0 && rho.is_finite()).then_some(Self(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Row-major strides for the given extents (last axis fastest).
pub(crate) fn strides(extents: &[usize]) -> Vec<usize> {
    let mut s = vec![1; extents.len()];
    for j in (0..extents.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * extents[j + 1];
    }
    s
}

/// Real samples of a function on the regular grid `x_j = i_j / M_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dims: TorusDims,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(dims: TorusDims, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_axes(dims, shape.len())?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(FourierError::GridLength {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            dims,
            shape,
            values,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(dims: TorusDims, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_axes(dims, shape.len())?;
        let total: usize = shape.iter().product();
        let mut point = vec![0.0; shape.len()];
        let values = (0..total)
            .map(|idx| {
                node_point_into(&shape, idx, &mut point);
                f(&point)
            })
            .collect();
        Ok(Self {
            dims,
            shape,
            values,
        })
    }

    pub fn dims(&self) -> TorusDims {
        self.dims
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Angles of the node with flat index `idx`.
    pub fn node_point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.shape.len()];
        node_point_into(&self.shape, idx, &mut p);
        p
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub(crate) fn node_point_into(shape: &[usize], mut idx: usize, out: &mut [f64]) {
    for j in (0..shape.len()).rev() {
        let i = idx % shape[j];
        idx /= shape[j];
        out[j] = i as f64 / shape[j] as f64;
    }
}

fn check_axes(dims: TorusDims, got: usize) -> Result<()> {
    if got != dims.d() {
        return Err(FourierError::AxisCount {
            expected: dims.d(),
            got,
        });
    }
    Ok(())
}

/// Truncated Fourier expansion of a real function on `T^n x T^ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    dims: TorusDims,
    trunc: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl FourierSeries {
    pub fn zeros(dims: TorusDims, trunc: Vec<usize>) -> Result<Self> {
        check_axes(dims, trunc.len())?;
        let len = trunc.iter().map(|n| 2 * n + 1).product();
        Ok(Self {
            dims,
            trunc,
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn constant(dims: TorusDims, trunc: Vec<usize>, value: f64) -> Result<Self> {
        let mut s = Self::zeros(dims, trunc)?;
        let zero = s.zero_index();
        s.coeffs[zero] = Complex64::new(value, 0.0);
        Ok(s)
    }

    /// Builds a series from a dense coefficient buffer, symmetrizing it so
    /// that `c_{-k} = conj(c_k)`.
    pub fn from_coefficients(
        dims: TorusDims,
        trunc: Vec<usize>,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        let mut s = Self::zeros(dims, trunc)?;
        if coeffs.len() != s.coeffs.len() {
            return Err(FourierError::BufferLength {
                expected: s.coeffs.len(),
                got: coeffs.len(),
            });
        }
        s.coeffs = coeffs;
        s.enforce_symmetry();
        Ok(s)
    }

    pub fn dims(&self) -> TorusDims {
        self.dims
    }

    pub fn trunc(&self) -> &[usize] {
        &self.trunc
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn extents(&self) -> Vec<usize> {
        self.trunc.iter().map(|n| 2 * n + 1).collect()
    }

    fn zero_index(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    /// Flat position of mode `k`, or `None` when it lies outside the box.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.trunc.len() {
            return None;
        }
        let mut idx = 0usize;
        for (&kj, &nj) in k.iter().zip(&self.trunc) {
            if kj.unsigned_abs() as usize > nj {
                return None;
            }
            idx = idx * (2 * nj + 1) + (kj + nj as i64) as usize;
        }
        Some(idx)
    }

    /// Mode of the flat position `idx`.
    pub fn mode_of(&self, mut idx: usize) -> Vec<i64> {
        let d = self.trunc.len();
        let mut k = vec![0i64; d];
        for j in (0..d).rev() {
            let e = 2 * self.trunc[j] + 1;
            k[j] = (idx % e) as i64 - self.trunc[j] as i64;
            idx /= e;
        }
        k
    }

    /// Coefficient of mode `k`; zero outside the truncation box.
    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Sets the coefficient of `k` and its Hermitian partner. Returns
    /// `false` when `k` lies outside the box.
    pub fn set_coeff(&mut self, k: &[i64], value: Complex64) -> bool {
        let Some(i) = self.index_of(k) else {
            return false;
        };
        let mirror = self.coeffs.len() - 1 - i;
        if i == mirror {
            self.coeffs[i] = Complex64::new(value.re, 0.0);
        } else {
            self.coeffs[i] = value;
            self.coeffs[mirror] = value.conj();
        }
        true
    }

    /// Iterates over `(k, c_k)` for every stored mode.
    pub fn modes(&self) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.mode_of(i), c))
    }

    /// The mirror of flat index `i` is `len - 1 - i` because the box is
    /// symmetric and stored in lexicographic order.
    pub(crate) fn enforce_symmetry(&mut self) {
        let len = self.coeffs.len();
        for i in 0..len / 2 {
            let j = len - 1 - i;
            let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
        let z = len / 2;
        self.coeffs[z].im = 0.0;
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.dims == other.dims && self.trunc == other.trunc
    }

    /// Copies coefficients into a series with a different cutoff, dropping
    /// modes outside the new box.
    pub fn retruncate(&self, trunc: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(self.dims, trunc.to_vec())?;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = self.mode_of(i);
            if let Some(j) = out.index_of(&k) {
                out.coeffs[j] = c;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    pub fn add_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        let z = out.zero_index();
        out.coeffs[z].re += value;
        out
    }

    /// Maximum coefficient-wise distance.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        assert!(self.same_layout(other), "series layouts differ");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Direct summation of the series at `point`.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        check_axes(self.dims, point.len())?;
        let mut sum = Complex64::new(0.0, 0.0);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let k = self.mode_of(i);
            let phase: f64 = k.iter().zip(point).map(|(&kj, &xj)| kj as f64 * xj).sum();
            sum += c * Complex64::from_polar(1.0, 2.0 * PI * phase);
        }
        if sum.im.abs() > SYMMETRY_TOLERANCE {
            return Err(FourierError::SymmetryViolation {
                residual: sum.im.abs(),
            });
        }
        Ok(sum.re)
    }

    /// Spectral derivative along `axis`: `c_k -> 2 pi i k_axis c_k`.
    pub fn derivative(&self, axis: usize) -> Result<Self> {
        let d = self.dims.d();
        if axis >= d {
            return Err(FourierError::AxisOutOfRange { axis, d });
        }
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.mode_of(i)[axis] as f64;
            *c *= Complex64::new(0.0, 2.0 * PI * k);
        }
        Ok(out)
    }

    /// Average over the torus, `c_0`.
    pub fn average(&self) -> f64 {
        self.coeffs[self.zero_index()].re
    }

    /// Exponentially weighted Fourier 1-norm `sum_k |c_k| exp(2 pi |k|_1 rho)`.
    ///
    /// This dominates the sup norm on the complex strip of half-width `rho`.
    pub fn analytic_norm(&self, rho: f64) -> f64 {
        debug_assert!(rho >= 0.0);
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(i, c)| {
                let k1: i64 = self.mode_of(i).iter().map(|k| k.abs()).sum();
                c.norm() * (2.0 * PI * k1 as f64 * rho).exp()
            })
            .sum()
    }

    /// Cauchy-type bound for `analytic_norm(derivative(axis), rho - delta)`.
    pub fn derivative_norm_bound(&self, rho: f64, delta: f64) -> f64 {
        self.analytic_norm(rho) / delta
    }
}

fn zip_coeffs(
    a: &FourierSeries,
    b: &FourierSeries,
    f: impl Fn(Complex64, Complex64) -> Complex64,
) -> FourierSeries {
    assert!(a.same_layout(b), "series layouts differ");
    FourierSeries {
        dims: a.dims,
        trunc: a.trunc.clone(),
        coeffs: a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| f(x, y))
            .collect(),
    }
}

impl Add for &FourierSeries {
    type Output = FourierSeries;
    fn add(self, rhs: Self) -> FourierSeries {
        zip_coeffs(self, rhs, |a, b| a + b)
    }
}

impl Sub for &FourierSeries {
    type Output = FourierSeries;
    fn sub(self, rhs: Self) -> FourierSeries {
        zip_coeffs(self, rhs, |a, b| a - b)
    }
}

impl Neg for &FourierSeries {
    type Output = FourierSeries;
    fn neg(self) -> FourierSeries {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &FourierSeries {
    type Output = FourierSeries;
    fn mul(self, rhs: f64) -> FourierSeries {
        self.scale(rhs)
    }
}

/// Smallest admissible grid for the given cutoffs.
pub fn min_shape(trunc: &[usize]) -> Vec<usize> {
    trunc.iter().map(|n| 2 * n + 2).collect()
}

/// Checks the anti-aliasing margin `M_j >= 2 N_j + 2`.
pub fn check_shape(shape: &[usize], trunc: &[usize]) -> Result<()> {
    if shape.len() != trunc.len() {
        return Err(FourierError::AxisCount {
            expected: trunc.len(),
            got: shape.len(),
        });
    }
    for (axis, (&m, &n)) in shape.iter().zip(trunc).enumerate() {
        if m < 2 * n + 2 {
            return Err(FourierError::ShapeTooSmall {
                axis,
                samples: m,
                cutoff: n,
                required: 2 * n + 2,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dims11() -> TorusDims {
        TorusDims::new(1, 1).unwrap()
    }

    fn cos_theta(amplitude: f64) -> FourierSeries {
        let mut s = FourierSeries::zeros(dims11(), vec![4, 4]).unwrap();
        s.set_coeff(&[1, 0], Complex64::new(amplitude / 2.0, 0.0));
        s
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(TorusDims::new(0, 1).is_err());
        assert!(TorusDims::new(1, 0).is_err());
    }

    #[test]
    fn hermitian_partner_is_set() {
        let mut s = FourierSeries::zeros(dims11(), vec![3, 2]).unwrap();
        s.set_coeff(&[2, -1], Complex64::new(0.3, -0.7));
        assert_eq!(s.coeff(&[-2, 1]), Complex64::new(0.3, 0.7));
        assert!(!s.set_coeff(&[4, 0], Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn mode_index_roundtrip() {
        let s = FourierSeries::zeros(TorusDims::new(2, 1).unwrap(), vec![2, 3, 1]).unwrap();
        for i in 0..s.coefficients().len() {
            assert_eq!(s.index_of(&s.mode_of(i)), Some(i));
        }
        assert_eq!(s.mode_of(s.zero_index()), vec![0, 0, 0]);
    }

    #[test]
    fn evaluate_simple_cases() {
        let z = FourierSeries::zeros(dims11(), vec![2, 2]).unwrap();
        assert_eq!(z.evaluate(&[0.3, 0.9]).unwrap(), 0.0);
        let c = cos_theta(1.0);
        assert!(c.evaluate(&[0.25, 0.4]).unwrap().abs() < 1e-15);
        assert_relative_eq!(c.evaluate(&[0.0, 0.4]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_detects_broken_symmetry() {
        let mut s = FourierSeries::zeros(dims11(), vec![1, 1]).unwrap();
        let i = s.index_of(&[1, 0]).unwrap();
        s.coeffs[i] = Complex64::new(0.0, 0.5);
        let err = s.evaluate(&[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, FourierError::SymmetryViolation { .. }));
    }

    #[test]
    fn derivative_of_cosine() {
        let d = cos_theta(1.0).derivative(0).unwrap();
        for x in [0.1, 0.37, 0.8] {
            let expected = -2.0 * PI * (2.0 * PI * x).sin();
            assert_relative_eq!(d.evaluate(&[x, 0.2]).unwrap(), expected, epsilon = 1e-13);
        }
        let c = FourierSeries::constant(dims11(), vec![3, 3], 2.0).unwrap();
        assert_eq!(c.derivative(1).unwrap().max_coeff_abs(), 0.0);
        assert!(matches!(
            c.derivative(2),
            Err(FourierError::AxisOutOfRange { axis: 2, d: 2 })
        ));
    }

    #[test]
    fn average_examples() {
        assert_eq!(
            FourierSeries::zeros(dims11(), vec![2, 2])
                .unwrap()
                .average(),
            0.0
        );
        assert_eq!(cos_theta(1.0).average(), 0.0);
        assert_eq!(cos_theta(1.0).add_constant(3.5).average(), 3.5);
    }

    #[test]
    fn analytic_norm_examples() {
        assert_eq!(
            FourierSeries::zeros(dims11(), vec![2, 2])
                .unwrap()
                .analytic_norm(0.3),
            0.0
        );
        assert_relative_eq!(cos_theta(1.0).analytic_norm(0.0), 1.0, epsilon = 1e-15);
        // e^{2 pi * 0.1} = e^{0.2 pi}
        assert_relative_eq!(
            cos_theta(1.0).analytic_norm(0.1),
            1.874_456_087_585_338,
            epsilon = 1e-14
        );
    }

    #[test]
    fn shape_check_reports_both_numbers() {
        let err = check_shape(&[9, 16], &[4, 4]).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains('9') && msg.contains('4') && msg.contains("10"),
            "{msg}"
        );
        assert!(check_shape(&[10, 10], &[4, 4]).is_ok());
    }

    #[test]
    fn cross_derivatives_commute_exactly() {
        let mut s = FourierSeries::zeros(TorusDims::new(1, 2).unwrap(), vec![3, 2, 2]).unwrap();
        s.set_coeff(&[1, -2, 1], Complex64::new(0.25, 0.5));
        s.set_coeff(&[3, 1, 0], Complex64::new(-0.1, 0.05));
        let a = s.derivative(0).unwrap().derivative(2).unwrap();
        let b = s.derivative(2).unwrap().derivative(0).unwrap();
        assert_eq!(a, b);
    }
}
