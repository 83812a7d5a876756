//! Diophantine frequencies and the small-divisor solver.
//!
//! The Lie operator along the linear flow is
//! `L u = -(omega . d_theta u + alpha . d_phi u)`, acting on modes as
//! `c_k -> -2 pi i (k . nu) c_k` with `nu = (omega, alpha)`. Its inverse on
//! zero-average functions is `R`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::fourier::{FourierSeries, TorusDims};

/// Divisors `|k . nu|` below this are treated as exact resonances by the
/// scanner.
pub const RESONANCE_THRESHOLD: f64 = 1e-15;
/// Divisors below this make the solver refuse the mode.
pub const SMALL_DIVISOR_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CohomologyError {
    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),
    #[error("exact resonance at k = {k:?} (|k.nu| = {divisor:e})")]
    Resonance { k: Vec<i64>, divisor: f64 },
    #[error("small divisor at k = {k:?} (|k.nu| = {divisor:e})")]
    SmallDivisor { k: Vec<i64>, divisor: f64 },
    #[error("series has dims {got:?}, frequencies expect {expected:?}")]
    DimensionMismatch { expected: TorusDims, got: TorusDims },
}

pub type Result<T> = std::result::Result<T, CohomologyError>;

/// Internal frequencies `omega`, external frequencies `alpha` and the
/// Diophantine pair `(gamma, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequencies {
    omega: Vec<f64>,
    alpha: Vec<f64>,
    gamma: f64,
    tau: f64,
}

impl Frequencies {
    pub fn new(omega: Vec<f64>, alpha: Vec<f64>, gamma: f64, tau: f64) -> Result<Self> {
        let dims = TorusDims::new(omega.len(), alpha.len())
            .map_err(|e| CohomologyError::InvalidFrequencies(e.to_string()))?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CohomologyError::InvalidFrequencies(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let min_tau = (dims.d() - 1) as f64;
        if !(tau >= min_tau && tau.is_finite()) {
            return Err(CohomologyError::InvalidFrequencies(format!(
                "tau must be at least n + ell - 1 = {min_tau}, got {tau}"
            )));
        }
        if omega.iter().chain(&alpha).any(|x| !x.is_finite()) {
            return Err(CohomologyError::InvalidFrequencies(
                "non-finite frequency".into(),
            ));
        }
        Ok(Self {
            omega,
            alpha,
            gamma,
            tau,
        })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dims(&self) -> TorusDims {
        TorusDims::new(self.omega.len(), self.alpha.len()).expect("validated at construction")
    }

    /// Same frequencies with a different `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.omega.clone(), self.alpha.clone(), gamma, self.tau)
    }

    /// `k . (omega, alpha)`, summed left to right.
    pub fn dot(&self, k: &[i64]) -> f64 {
        self.omega
            .iter()
            .chain(&self.alpha)
            .zip(k)
            .fold(0.0, |acc, (&v, &kj)| acc + kj as f64 * v)
    }

    fn check_dims(&self, dims: TorusDims) -> Result<()> {
        if dims != self.dims() {
            return Err(CohomologyError::DimensionMismatch {
                expected: self.dims(),
                got: dims,
            });
        }
        Ok(())
    }
}

/// Outcome of a finite Diophantine scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineReport {
    pub box_radius: usize,
    /// `min |k . nu| |k|_1^tau` over `0 < |k|_1 <= box_radius`.
    pub effective_gamma: f64,
    pub worst_index: Vec<i64>,
    /// `effective_gamma >= gamma`.
    pub passes: bool,
}

/// Visits every `k` with `0 < |k|_1 <= radius` whose first nonzero entry is
/// positive, shell by shell and lexicographically within a shell.
fn for_each_half_shell(d: usize, radius: usize, mut visit: impl FnMut(&[i64], usize)) {
    fn rec(
        k: &mut Vec<i64>,
        pos: usize,
        remaining: i64,
        leading_zero: bool,
        visit: &mut dyn FnMut(&[i64]),
    ) {
        if pos == k.len() {
            if remaining == 0 && !leading_zero {
                visit(k);
            }
            return;
        }
        let lo = if leading_zero { 0 } else { -remaining };
        for v in lo..=remaining {
            k[pos] = v;
            rec(
                k,
                pos + 1,
                remaining - v.abs(),
                leading_zero && v == 0,
                visit,
            );
        }
        k[pos] = 0;
    }
    let mut k = vec![0i64; d];
    for shell in 1..=radius {
        rec(&mut k, 0, shell as i64, true, &mut |k| visit(k, shell));
    }
}

/// Scans all `0 < |k|_1 <= box_radius` for the smallest `|k . nu| |k|_1^tau`.
pub fn check_diophantine(freqs: &Frequencies, box_radius: usize) -> Result<DiophantineReport> {
    let d = freqs.dims().d();
    let box_radius = box_radius.max(1);
    let mut best = f64::INFINITY;
    let mut worst = vec![0i64; d];
    let mut resonance: Option<(Vec<i64>, f64)> = None;
    for_each_half_shell(d, box_radius, |k, shell| {
        if resonance.is_some() {
            return;
        }
        let divisor = freqs.dot(k).abs();
        if divisor < RESONANCE_THRESHOLD {
            resonance = Some((k.to_vec(), divisor));
            return;
        }
        let g = divisor * (shell as f64).powf(freqs.tau);
        if g < best {
            best = g;
            worst.copy_from_slice(k);
        }
    });
    if let Some((k, divisor)) = resonance {
        return Err(CohomologyError::Resonance { k, divisor });
    }
    Ok(DiophantineReport {
        box_radius,
        effective_gamma: best,
        worst_index: worst,
        passes: best >= freqs.gamma,
    })
}

/// `L_{omega,alpha} u`; the result always has zero average.
pub fn lie_derivative(u: &FourierSeries, freqs: &Frequencies) -> Result<FourierSeries> {
    freqs.check_dims(u.dims())?;
    let coeffs = u
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let kv = freqs.dot(&u.mode_of(i));
            c * Complex64::new(0.0, -2.0 * PI * kv)
        })
        .collect();
    Ok(
        FourierSeries::from_coefficients(u.dims(), u.trunc().to_vec(), coeffs)
            .expect("layout copied from input"),
    )
}

/// Zero-average solution `u` of `L u = v - <v>`.
pub fn solve_cohomological(v: &FourierSeries, freqs: &Frequencies) -> Result<FourierSeries> {
    freqs.check_dims(v.dims())?;
    let mut coeffs = Vec::with_capacity(v.coefficients().len());
    for (i, &c) in v.coefficients().iter().enumerate() {
        let k = v.mode_of(i);
        if k.iter().all(|&x| x == 0) {
            coeffs.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let kv = freqs.dot(&k);
        if kv.abs() < SMALL_DIVISOR_THRESHOLD {
            if c.norm() == 0.0 {
                coeffs.push(c);
                continue;
            }
            return Err(CohomologyError::SmallDivisor {
                k,
                divisor: kv.abs(),
            });
        }
        // -c / (2 pi i kv) = i c / (2 pi kv)
        coeffs.push(c * Complex64::new(0.0, 1.0 / (2.0 * PI * kv)));
    }
    Ok(
        FourierSeries::from_coefficients(v.dims(), v.trunc().to_vec(), coeffs)
            .expect("layout copied from input"),
    )
}

/// Constant `c_R` with `||R v||_{rho - delta} <= c_R / (gamma delta^tau) ||v||_rho`
/// in the weighted Fourier norm.
///
/// The per-mode factor `exp(-2 pi |k|_1 delta) / (2 pi |k . nu|)` is maximized
/// exactly over the truncation box. Modes with `|k|_1` beyond the smallest
/// cutoff are additionally covered with the Diophantine bound
/// `|k . nu| >= gamma / |k|_1^tau`.
pub fn russmann_bound(freqs: &Frequencies, delta: f64, trunc: &[usize]) -> Result<f64> {
    assert!(delta > 0.0, "delta must be positive");
    let dims = freqs.dims();
    let template = FourierSeries::zeros(dims, trunc.to_vec())
        .map_err(|e| CohomologyError::InvalidFrequencies(e.to_string()))?;
    let mut box_max: f64 = 0.0;
    for i in 0..template.coefficients().len() {
        let k = template.mode_of(i);
        let k1: i64 = k.iter().map(|x| x.abs()).sum();
        if k1 == 0 {
            continue;
        }
        let kv = freqs.dot(&k).abs();
        if kv < SMALL_DIVISOR_THRESHOLD {
            return Err(CohomologyError::SmallDivisor { k, divisor: kv });
        }
        box_max = box_max.max((-2.0 * PI * k1 as f64 * delta).exp() / (2.0 * PI * kv));
    }
    let tail = tail_factor(
        freqs.gamma,
        freqs.tau,
        delta,
        trunc.iter().min().copied().unwrap_or(0) + 1,
    );
    Ok(freqs.gamma * delta.powf(freqs.tau) * box_max.max(tail))
}

/// `sup_{m >= m0} exp(-2 pi m delta) m^tau / (2 pi gamma)` over integers.
fn tail_factor(gamma: f64, tau: f64, delta: f64, m0: usize) -> f64 {
    let f = |m: f64| (-2.0 * PI * m * delta).exp() * m.powf(tau) / (2.0 * PI * gamma);
    let peak = tau / (2.0 * PI * delta);
    let m0f = m0 as f64;
    if peak <= m0f {
        f(m0f)
    } else {
        f(peak.floor().max(m0f)).max(f(peak.ceil()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn golden() -> Frequencies {
        Frequencies::new(vec![(5f64.sqrt() - 1.0) / 2.0], vec![1.0], 0.1, 1.2).unwrap()
    }

    fn cos_theta() -> FourierSeries {
        let mut s = FourierSeries::zeros(TorusDims::new(1, 1).unwrap(), vec![4, 4]).unwrap();
        s.set_coeff(&[1, 0], Complex64::new(0.5, 0.0));
        s
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Frequencies::new(vec![0.6], vec![1.0], 0.0, 1.2).is_err());
        assert!(Frequencies::new(vec![0.6, 0.3], vec![1.0], 0.1, 1.5).is_err());
        assert!(Frequencies::new(vec![], vec![1.0], 0.1, 1.5).is_err());
    }

    #[test]
    fn rational_resonance_is_named() {
        let f = Frequencies::new(vec![0.5], vec![1.0], 0.1, 1.2).unwrap();
        match check_diophantine(&f, 10) {
            Err(CohomologyError::Resonance { k, .. }) => assert_eq!(k, vec![2, -1]),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn shell_enumeration_counts() {
        // |k|_1 <= 3 in Z^2 has 2*3*4 + 1 = 25 points, 12 in the open half.
        let mut count = 0;
        for_each_half_shell(2, 3, |_, _| count += 1);
        assert_eq!(count, 12);
    }

    #[test]
    fn lie_derivative_of_sine() {
        let w = golden().omega()[0];
        let mut s = FourierSeries::zeros(TorusDims::new(1, 1).unwrap(), vec![3, 3]).unwrap();
        // sin(2 pi x) = (e^{2 pi i x} - e^{-2 pi i x}) / 2i
        s.set_coeff(&[1, 0], Complex64::new(0.0, -0.5));
        let l = lie_derivative(&s, &golden()).unwrap();
        for x in [0.0, 0.2, 0.71] {
            let expected = -2.0 * PI * w * (2.0 * PI * x).cos();
            assert_relative_eq!(l.evaluate(&[x, 0.5]).unwrap(), expected, epsilon = 1e-13);
        }
        assert_eq!(l.average(), 0.0);
    }

    #[test]
    fn solve_cosine_closed_form() {
        let g = golden().omega()[0];
        let u = solve_cohomological(&cos_theta(), &golden()).unwrap();
        for x in [0.1, 0.45, 0.9] {
            let expected = -(2.0 * PI * x).sin() / (2.0 * PI * g);
            assert_relative_eq!(u.evaluate(&[x, 0.3]).unwrap(), expected, epsilon = 1e-14);
        }
        assert_eq!(u.average(), 0.0);
    }

    #[test]
    fn solve_zero_is_zero() {
        let z = FourierSeries::zeros(TorusDims::new(1, 1).unwrap(), vec![5, 5]).unwrap();
        assert_eq!(solve_cohomological(&z, &golden()).unwrap(), z);
    }

    #[test]
    fn solver_refuses_resonant_mode() {
        let f = Frequencies::new(vec![0.5], vec![1.0], 0.1, 1.2).unwrap();
        let mut v = FourierSeries::zeros(TorusDims::new(1, 1).unwrap(), vec![3, 3]).unwrap();
        v.set_coeff(&[2, -1], Complex64::new(0.1, 0.0));
        assert!(matches!(
            solve_cohomological(&v, &f),
            Err(CohomologyError::SmallDivisor { .. })
        ));
    }

    #[test]
    fn russmann_covers_single_mode() {
        let f = golden();
        let delta = 0.05;
        let c_r = russmann_bound(&f, delta, &[8, 8]).unwrap();
        let k = [3i64, -2];
        let per_mode = (-2.0 * PI * 5.0 * delta).exp() / (2.0 * PI * f.dot(&k).abs());
        assert!(per_mode <= c_r / (f.gamma() * delta.powf(f.tau())));
    }

    #[test]
    fn tail_factor_peak_handling() {
        // Peak below the start: value at m0.
        let v = tail_factor(1.0, 1.0, 1.0, 3);
        assert_relative_eq!(v, (-6.0 * PI).exp() * 3.0 / (2.0 * PI), epsilon = 1e-15);
        // Peak well inside: at least the value at the nearest integer.
        let peak = tail_factor(1.0, 2.0, 0.01, 1);
        let m = (2.0 / (2.0 * PI * 0.01)).round();
        assert!(peak >= (-2.0 * PI * m * 0.01).exp() * m * m / (2.0 * PI));
    }
}
