//! Hamiltonian models and their evaluation along a torus.

mod flow;
mod rotors;

pub use flow::{dopri5, flow_validate, FlowReport, FlowSample};
pub use rotors::ForcedRotors;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::cohomology::{CohomologyError, Frequencies};
use crate::fourier::{FourierError, FourierSeries};
use crate::geometry::{
    GeometryError, MatrixGrid, MatrixSeries, SymplecticStructure, TorusEmbedding,
};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("torus leaves the domain at node {node} (angles {point:?}, z = {z:?})")]
    DomainExit {
        node: usize,
        point: Vec<f64>,
        z: Vec<f64>,
    },
    #[error("non-finite field value at node {node}")]
    NonFinite { node: usize },
    #[error("invalid system parameters: {0}")]
    InvalidParameters(String),
    #[error("flow integration failed: {0}")]
    Integrator(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
}

/// Axis-aligned box in phase space. Unbounded sides (for angle-like
/// coordinates) use infinite bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SystemError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(SystemError::InvalidParameters(format!(
                "domain bounds must satisfy lo < hi componentwise: lo={lo:?} hi={hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&l, &h))| x > l && x < h)
    }

    /// Distance from `z` to the boundary along bounded coordinates
    /// (negative outside, infinite if no side is bounded).
    pub fn margin(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&l, &h))| (x - l).min(h - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_bounded(&self, i: usize) -> bool {
        self.lo[i].is_finite() && self.hi[i].is_finite()
    }
}

/// A Hamiltonian `H(z, phi)` on `B x T^ell` together with its vector field
/// `Z_H = Omega^{-1} (D_z H)^T` and derivatives.
pub trait HamiltonianSystem: Send + Sync {
    fn name(&self) -> &str;
    fn n(&self) -> usize;
    fn ell(&self) -> usize;
    fn structure(&self) -> &dyn SymplecticStructure;
    fn domain(&self) -> &DomainBox;
    fn hamiltonian(&self, z: &[f64], phi: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], phi: &[f64]) -> DVector<f64>;

    fn field(&self, z: &[f64], phi: &[f64]) -> DVector<f64> {
        self.structure()
            .omega(z)
            .lu()
            .solve(&self.gradient(z, phi))
            .expect("Omega is invertible")
    }

    /// `D_z Z_H(z, phi)`.
    fn field_jacobian(&self, z: &[f64], phi: &[f64]) -> DMatrix<f64>;

    /// `D_z^2 Z_H(z, phi)[v, w]`.
    fn field_second(&self, z: &[f64], phi: &[f64], v: &[f64], w: &[f64]) -> DVector<f64>;
}

fn split_phi(point: &[f64], n: usize) -> &[f64] {
    &point[n..]
}

/// Checks every node of `k_grid` against the domain.
pub fn check_domain(
    k_grid: &MatrixGrid,
    system: &dyn HamiltonianSystem,
) -> Result<f64, SystemError> {
    let domain = system.domain();
    let mut margin = f64::INFINITY;
    for (i, z) in k_grid.nodes().iter().enumerate() {
        let zs = z.as_slice();
        if !zs.iter().all(|x| x.is_finite()) || !domain.contains(zs) {
            return Err(SystemError::DomainExit {
                node: i,
                point: k_grid.node_point(i),
                z: zs.to_vec(),
            });
        }
        margin = margin.min(domain.margin(zs));
    }
    Ok(margin)
}

/// `Z_H(K(theta, phi), phi)` at every node.
pub fn field_on_torus(
    k_grid: &MatrixGrid,
    system: &dyn HamiltonianSystem,
) -> Result<MatrixGrid, SystemError> {
    check_domain(k_grid, system)?;
    let n = system.n();
    let out = k_grid.map(|i, z| {
        let p = k_grid.node_point(i);
        let f = system.field(z.as_slice(), split_phi(&p, n));
        DMatrix::from_column_slice(f.len(), 1, f.as_slice())
    });
    if let Some(node) = out
        .nodes()
        .iter()
        .position(|m| !m.iter().all(|x| x.is_finite()))
    {
        return Err(SystemError::NonFinite { node });
    }
    Ok(out)
}

/// `D_z Z_H(K(theta, phi), phi)` at every node.
pub fn jacobian_on_torus(k_grid: &MatrixGrid, system: &dyn HamiltonianSystem) -> MatrixGrid {
    let n = system.n();
    k_grid.map(|i, z| {
        let p = k_grid.node_point(i);
        system.field_jacobian(z.as_slice(), split_phi(&p, n))
    })
}

/// Invariance error with its nodal values and diagnostics.
#[derive(Debug, Clone)]
pub struct InvarianceError {
    /// `E` truncated to the embedding's cutoff, one series per coordinate.
    pub series: Vec<FourierSeries>,
    /// `E` at the grid nodes before truncation.
    pub nodal: MatrixGrid,
    /// Largest nodal `|E_i|`.
    pub sup: f64,
    /// Largest discarded tail mass over components.
    pub truncation_residual: f64,
}

impl InvarianceError {
    pub fn analytic_norm(&self, rho: f64) -> f64 {
        self.series
            .iter()
            .map(|s| s.analytic_norm(rho))
            .fold(0.0, f64::max)
    }
}

/// `E = Z_H(K, phi) + L_{omega,alpha} K` on the grid of the given shape.
pub fn invariance_error(
    k: &TorusEmbedding,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    shape: &[usize],
) -> Result<InvarianceError, SystemError> {
    let k_grid = k.to_grid(shape)?;
    invariance_error_on_grid(k, &k_grid, system, freqs)
}

pub(crate) fn invariance_error_on_grid(
    k: &TorusEmbedding,
    k_grid: &MatrixGrid,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
) -> Result<InvarianceError, SystemError> {
    let field = field_on_torus(k_grid, system)?;
    let lie = k.lie(freqs)?;
    let lie_grid = MatrixSeries::new(lie.len(), 1, lie).to_grid(k_grid.shape())?;
    let nodal = field.zip_map(&lie_grid, |a, b| a + b);
    let (series, truncation_residual) = nodal.to_series_with_residual(k.trunc())?;
    Ok(InvarianceError {
        series: series.column(0),
        sup: nodal.max_abs_entry(),
        nodal,
        truncation_residual,
    })
}

/// Worst relative discrepancies between analytic derivatives and central
/// differences over the given sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub gradient: f64,
    pub field: f64,
    pub jacobian: f64,
    pub second: f64,
    /// `D Omega[Z] + DZ^T Omega + Omega DZ`, absolute.
    pub jacobi_identity: f64,
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Finite-difference self-test for user-supplied evaluators.
pub fn check_derivatives(
    system: &dyn HamiltonianSystem,
    points: &[(Vec<f64>, Vec<f64>)],
    h: f64,
) -> DerivativeCheck {
    let dim = 2 * system.n();
    let mut out = DerivativeCheck {
        gradient: 0.0,
        field: 0.0,
        jacobian: 0.0,
        second: 0.0,
        jacobi_identity: 0.0,
    };
    let shifted = |z: &[f64], j: usize, s: f64| {
        let mut w = z.to_vec();
        w[j] += s;
        w
    };
    for (z, phi) in points {
        let grad = system.gradient(z, phi);
        let fd_grad = DVector::from_fn(dim, |j, _| {
            (system.hamiltonian(&shifted(z, j, h), phi)
                - system.hamiltonian(&shifted(z, j, -h), phi))
                / (2.0 * h)
        });
        out.gradient = out.gradient.max(rel_err(&grad, &fd_grad));

        let omega = system.structure().omega(z);
        let field = system.field(z, phi);
        out.field = out.field.max(rel_err(&(&omega * &field), &grad));

        let jac = system.field_jacobian(z, phi);
        for j in 0..dim {
            let fd = (system.field(&shifted(z, j, h), phi) - system.field(&shifted(z, j, -h), phi))
                / (2.0 * h);
            out.jacobian = out.jacobian.max(rel_err(&jac.column(j).into_owned(), &fd));
            let mut ej = vec![0.0; dim];
            ej[j] = 1.0;
            for m in 0..dim {
                let mut em = vec![0.0; dim];
                em[m] = 1.0;
                let second = system.field_second(z, phi, &ej, &em);
                let fd2 = (system.field_jacobian(&shifted(z, m, h), phi).column(j)
                    - system.field_jacobian(&shifted(z, m, -h), phi).column(j))
                    / (2.0 * h);
                out.second = out.second.max(rel_err(&second, &fd2));
            }
        }
        let d_omega = system.structure().d_omega(z, field.as_slice());
        let jacobi = d_omega + jac.transpose() * &omega + &omega * &jac;
        out.jacobi_identity = out.jacobi_identity.max(jacobi.amax());
    }
    out
}

/// Deterministic sample points spread over the domain (bounded
/// coordinates) and the unit cube (angles), via an additive recurrence.
pub fn sample_points(system: &dyn HamiltonianSystem, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = 2 * system.n();
    let total = dim + system.ell();
    // Generalized golden-ratio sequence.
    let mut phi_d = 2.0f64;
    for _ in 0..64 {
        phi_d = (1.0 + phi_d).powf(1.0 / (total as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=total)
        .map(|j| phi_d.powi(-(j as i32)).fract())
        .collect();
    let domain = system.domain();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let u: Vec<f64> = alphas
                .iter()
                .map(|a| (0.5 + a * (i + 1) as f64).fract())
                .collect();
            let z = (0..dim)
                .map(|j| {
                    if domain.is_bounded(j) {
                        domain.lo()[j] + u[j] * (domain.hi()[j] - domain.lo()[j])
                    } else {
                        u[j]
                    }
                })
                .collect();
            (z, u[dim..].to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::TorusDims;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn freqs() -> Frequencies {
        Frequencies::new(vec![golden()], vec![1.0], 0.1, 1.2).unwrap()
    }

    #[test]
    fn rotator_is_invariant() {
        let sys = ForcedRotors::pendulum(0.0, 1, golden());
        let k =
            TorusEmbedding::rotator(TorusDims::new(1, 1).unwrap(), &[8, 8], &[golden()]).unwrap();
        let e = invariance_error(&k, &sys, &freqs(), &[32, 32]).unwrap();
        assert!(e.sup < 1e-15, "{}", e.sup);
    }

    #[test]
    fn shifted_rotator_has_constant_error() {
        let sys = ForcedRotors::pendulum(0.0, 1, golden());
        let k = TorusEmbedding::rotator(TorusDims::new(1, 1).unwrap(), &[8, 8], &[golden() + 0.1])
            .unwrap();
        let e = invariance_error(&k, &sys, &freqs(), &[32, 32]).unwrap();
        assert!((e.series[0].average() - 0.1).abs() < 1e-15);
        assert!(e.series[0].add_constant(-0.1).max_coeff_abs() < 1e-15);
        assert!(e.series[1].max_coeff_abs() < 1e-15);
    }

    #[test]
    fn field_at_origin_node() {
        let sys = ForcedRotors::pendulum(0.05, 1, golden());
        let k =
            TorusEmbedding::rotator(TorusDims::new(1, 1).unwrap(), &[4, 4], &[golden()]).unwrap();
        let f = field_on_torus(&k.to_grid(&[16, 16]).unwrap(), &sys).unwrap();
        assert_eq!(f.node(0)[0], golden());
        assert_eq!(f.node(0)[1], 0.0);
    }

    #[test]
    fn domain_exit_is_reported() {
        let sys = ForcedRotors::pendulum(0.05, 1, golden());
        let k = TorusEmbedding::rotator(TorusDims::new(1, 1).unwrap(), &[4, 4], &[golden() + 0.6])
            .unwrap();
        let err = invariance_error(&k, &sys, &freqs(), &[16, 16]).unwrap_err();
        assert!(
            matches!(err, SystemError::DomainExit { node: 0, .. }),
            "{err}"
        );
    }

    #[test]
    fn domain_margin() {
        let b = DomainBox::new(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY, 1.0]).unwrap();
        assert_eq!(b.margin(&[100.0, 0.25]), 0.25);
        assert!(!b.contains(&[0.0, 1.5]));
        assert!(DomainBox::new(vec![1.0], vec![0.0]).is_err());
    }
}
