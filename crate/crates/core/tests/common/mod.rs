//! Shared fixtures for integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use qpkam::cohomology::Frequencies;
use qpkam::fourier::{FourierSeries, TorusDims};
use qpkam::geometry::{ConstantStructure, SymplecticStructure, TorusEmbedding};
use qpkam::system::{DomainBox, HamiltonianSystem};
use rustfft::num_complex::Complex64;

pub fn golden() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

pub fn golden_freqs() -> Frequencies {
    Frequencies::new(vec![golden()], vec![1.0], 0.1, 1.2).unwrap()
}

/// One cosine wave `amp * cos(2 pi k.x + shift)` of the generating function.
#[derive(Clone, Debug)]
pub struct Wave {
    pub amp: f64,
    pub k: Vec<f64>,
    pub shift: f64,
}

/// Integrable system `H(x, y) = h(y - grad g(x))` with
/// `h(p) = p^T M p / 2 + beta p_1^3 / 3`. The graph `y = y0 + grad g(x)`
/// is invariant whenever `grad h(y0) = omega`, and the map
/// `(x, y) -> (x, y - grad g(x))` is exact symplectic, so this gives exact
/// invariant tori with nontrivial frames.
pub struct ShearedIntegrable {
    pub n: usize,
    pub m: DMatrix<f64>,
    pub beta: f64,
    pub waves: Vec<Wave>,
    pub structure: ConstantStructure,
    pub domain: DomainBox,
}

impl ShearedIntegrable {
    fn phase(&self, w: &Wave, x: &[f64]) -> f64 {
        2.0 * PI * w.k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + w.shift
    }

    pub fn grad_g(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for w in &self.waves {
            let s = -w.amp * 2.0 * PI * self.phase(w, x).sin();
            for i in 0..self.n {
                out[i] += s * w.k[i];
            }
        }
        out
    }

    pub fn hess_g(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for w in &self.waves {
            let c = -w.amp * (2.0 * PI).powi(2) * self.phase(w, x).cos();
            let k = DVector::from_column_slice(&w.k);
            out += &k * k.transpose() * c;
        }
        out
    }

    /// `sum_k d^3 g / dx_i dx_j dx_k v_k`.
    fn third_g(&self, x: &[f64], v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for w in &self.waves {
            let k = DVector::from_column_slice(&w.k);
            let c = w.amp * (2.0 * PI).powi(3) * self.phase(w, x).sin() * k.dot(v);
            out += &k * k.transpose() * c;
        }
        out
    }

    fn p(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&z[self.n..]) - self.grad_g(&z[..self.n])
    }

    pub fn grad_h(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.m * p;
        g[0] += self.beta * p[0] * p[0];
        g
    }

    fn hess_h(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.m.clone();
        h[(0, 0)] += 2.0 * self.beta * p[0];
        h
    }

    /// The invariant graph over the given actions, with truncation `trunc`.
    pub fn torus(&self, y0: &[f64], ell: usize, trunc: usize) -> TorusEmbedding {
        let dims = TorusDims::new(self.n, ell).unwrap();
        let mut tr = vec![trunc; self.n];
        tr.extend(std::iter::repeat(1).take(ell));
        let mut comps: Vec<FourierSeries> = (0..2 * self.n)
            .map(|_| FourierSeries::zeros(dims, tr.clone()).unwrap())
            .collect();
        for i in 0..self.n {
            comps[self.n + i] = comps[self.n + i].add_constant(y0[i]);
        }
        // d/dx_i [amp cos(2 pi k.x + s)] = -amp 2 pi k_i sin(...)
        //   = amp pi k_i i (e^{i(...)} - e^{-i(...)})
        for w in &self.waves {
            let mut kk: Vec<i64> = w.k.iter().map(|&k| k as i64).collect();
            kk.extend(std::iter::repeat(0).take(ell));
            for i in 0..self.n {
                let c =
                    Complex64::new(0.0, w.amp * PI * w.k[i]) * Complex64::from_polar(1.0, w.shift);
                let cur = comps[self.n + i].coeff(&kk);
                comps[self.n + i].set_coeff(&kk, cur + c);
            }
        }
        TorusEmbedding::new(TorusEmbedding::standard_winding(self.n), comps).unwrap()
    }
}

impl HamiltonianSystem for ShearedIntegrable {
    fn name(&self) -> &str {
        "sheared_integrable"
    }
    fn n(&self) -> usize {
        self.n
    }
    fn ell(&self) -> usize {
        1
    }
    fn structure(&self) -> &dyn SymplecticStructure {
        &self.structure
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn hamiltonian(&self, z: &[f64], _phi: &[f64]) -> f64 {
        let p = self.p(z);
        0.5 * p.dot(&(&self.m * &p)) + self.beta * p[0].powi(3) / 3.0
    }
    fn gradient(&self, z: &[f64], _phi: &[f64]) -> DVector<f64> {
        let p = self.p(z);
        let gh = self.grad_h(&p);
        let gx = -(self.hess_g(&z[..self.n]) * &gh);
        let mut out = DVector::zeros(2 * self.n);
        out.rows_mut(0, self.n).copy_from(&gx);
        out.rows_mut(self.n, self.n).copy_from(&gh);
        out
    }
    fn field_jacobian(&self, z: &[f64], phi: &[f64]) -> DMatrix<f64> {
        // Hessian of H, then Omega^{-1}.
        let n = self.n;
        let x = &z[..n];
        let p = self.p(z);
        let gh = self.grad_h(&p);
        let hh = self.hess_h(&p);
        let gg = self.hess_g(x);
        let mut hess = DMatrix::zeros(2 * n, 2 * n);
        // H_xx = -D^3g[gh] + D^2g hh D^2g ; H_xy = -D^2g hh ; H_yy = hh
        let hxx = -self.third_g(x, &gh) + &gg * &hh * &gg;
        let hxy = -(&gg * &hh);
        hess.view_mut((0, 0), (n, n)).copy_from(&hxx);
        hess.view_mut((0, n), (n, n)).copy_from(&hxy);
        hess.view_mut((n, 0), (n, n)).copy_from(&hxy.transpose());
        hess.view_mut((n, n), (n, n)).copy_from(&hh);
        let _ = phi;
        self.structure.omega_matrix().clone().try_inverse().unwrap() * hess
    }
    fn field_second(&self, z: &[f64], phi: &[f64], v: &[f64], w: &[f64]) -> DVector<f64> {
        let h = 1e-5;
        let zp: Vec<f64> = z.iter().zip(w).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(w).map(|(a, b)| a - h * b).collect();
        let d = (self.field_jacobian(&zp, phi) - self.field_jacobian(&zm, phi)) / (2.0 * h);
        d * DVector::from_column_slice(v)
    }
}

/// Two-degree-of-freedom instance with three waves.
pub fn sheared_two_dof(structure: ConstantStructure) -> ShearedIntegrable {
    let inf = f64::INFINITY;
    ShearedIntegrable {
        n: 2,
        m: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]),
        beta: 0.3,
        waves: vec![
            Wave {
                amp: 0.005,
                k: vec![1.0, 0.0],
                shift: 0.3,
            },
            Wave {
                amp: 0.004,
                k: vec![1.0, 1.0],
                shift: -0.7,
            },
            Wave {
                amp: 0.002,
                k: vec![0.0, 2.0],
                shift: 1.1,
            },
        ],
        structure,
        domain: DomainBox::new(vec![-inf, -inf, -5.0, -5.0], vec![inf, inf, 5.0, 5.0]).unwrap(),
    }
}

/// Actions `y0` with `grad h(y0) = omega`, by Newton on the cubic.
pub fn actions_for(sys: &ShearedIntegrable, omega: &[f64]) -> Vec<f64> {
    let target = DVector::from_column_slice(omega);
    let mut p = sys.m.clone().try_inverse().unwrap() * &target;
    for _ in 0..50 {
        let r = sys.grad_h(&p) - &target;
        let mut jac = sys.m.clone();
        jac[(0, 0)] += 2.0 * sys.beta * p[0];
        p -= jac.try_inverse().unwrap() * r;
    }
    p.as_slice().to_vec()
}

/// `H = y^2 / 2 + eps y cos(2 pi phi)`: the forcing is free of `x`, so the
/// invariance equation is affine in `K`.
pub struct DriftedRotator {
    pub eps: f64,
    pub structure: ConstantStructure,
    pub domain: DomainBox,
}

impl DriftedRotator {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            structure: ConstantStructure::canonical(1),
            domain: DomainBox::unbounded(2),
        }
    }
}

impl HamiltonianSystem for DriftedRotator {
    fn name(&self) -> &str {
        "drifted_rotator"
    }
    fn n(&self) -> usize {
        1
    }
    fn ell(&self) -> usize {
        1
    }
    fn structure(&self) -> &dyn SymplecticStructure {
        &self.structure
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn hamiltonian(&self, z: &[f64], phi: &[f64]) -> f64 {
        0.5 * z[1] * z[1] + self.eps * z[1] * (2.0 * PI * phi[0]).cos()
    }
    fn gradient(&self, z: &[f64], phi: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![0.0, z[1] + self.eps * (2.0 * PI * phi[0]).cos()])
    }
    fn field_jacobian(&self, _z: &[f64], _phi: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn field_second(&self, _z: &[f64], _phi: &[f64], _v: &[f64], _w: &[f64]) -> DVector<f64> {
        DVector::zeros(2)
    }
}

/// Case II structure: standard `Omega` with a non-diagonal metric, so `A`
/// does not vanish.
pub fn case_ii_structure() -> ConstantStructure {
    let g = DMatrix::from_row_slice(
        4,
        4,
        &[
            2.0, 0.3, 0.1, 0.0, //
            0.3, 1.0, 0.0, 0.2, //
            0.1, 0.0, 0.7, 0.1, //
            0.0, 0.2, 0.1, 1.5,
        ],
    );
    ConstantStructure::new(
        qpkam::geometry::StructureCase::CaseII,
        qpkam::geometry::standard_symplectic(2),
        g,
    )
    .unwrap()
}
