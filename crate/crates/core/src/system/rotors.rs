use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{DomainBox, HamiltonianSystem, SystemError};
use crate::geometry::{ConstantStructure, SymplecticStructure};

/// `H(x, y, phi) = y^T M y / 2 + eps * sum_i cos(2 pi x_i) * (1 + sum_j cos(2 pi phi_j))`
/// with a constant structure.
///
/// With `n = 1`, `M = 1` and the canonical structure this is the
/// quasi-periodically forced pendulum; `eps = 0` is the integrable rotator.
#[derive(Debug, Clone)]
pub struct ForcedRotors {
    n: usize,
    ell: usize,
    epsilon: f64,
    twist: DMatrix<f64>,
    structure: ConstantStructure,
    omega_inv: DMatrix<f64>,
    domain: DomainBox,
}

impl ForcedRotors {
    pub fn new(
        epsilon: f64,
        ell: usize,
        twist: DMatrix<f64>,
        structure: ConstantStructure,
        domain: DomainBox,
    ) -> Result<Self, SystemError> {
        let n = twist.nrows();
        let bad = |m: String| Err(SystemError::InvalidParameters(m));
        if n == 0 || twist.ncols() != n {
            return bad("twist matrix must be square and nonempty".into());
        }
        if (&twist - twist.transpose()).amax() > 1e-14 {
            return bad("twist matrix must be symmetric".into());
        }
        if structure.dim() != 2 * n || domain.dim() != 2 * n {
            return bad(format!(
                "structure dimension {} and domain dimension {} must equal 2n = {}",
                structure.dim(),
                domain.dim(),
                2 * n
            ));
        }
        if ell == 0 {
            return bad("at least one external angle is required".into());
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return bad(format!(
                "epsilon must be finite and nonnegative, got {epsilon}"
            ));
        }
        let omega_inv = structure
            .omega_matrix()
            .clone()
            .try_inverse()
            .expect("validated structure");
        Ok(Self {
            n,
            ell,
            epsilon,
            twist,
            structure,
            omega_inv,
            domain,
        })
    }

    /// One degree of freedom, canonical structure, `y` confined to
    /// `[y_center - 0.5, y_center + 0.5]`.
    pub fn pendulum(epsilon: f64, ell: usize, y_center: f64) -> Self {
        let domain = DomainBox::new(
            vec![f64::NEG_INFINITY, y_center - 0.5],
            vec![f64::INFINITY, y_center + 0.5],
        )
        .expect("valid box");
        Self::new(
            epsilon,
            ell,
            DMatrix::identity(1, 1),
            ConstantStructure::canonical(1),
            domain,
        )
        .expect("valid pendulum parameters")
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn twist(&self) -> &DMatrix<f64> {
        &self.twist
    }

    pub fn constant_structure(&self) -> &ConstantStructure {
        &self.structure
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, SystemError> {
        Self::new(
            epsilon,
            self.ell,
            self.twist.clone(),
            self.structure.clone(),
            self.domain.clone(),
        )
    }

    fn forcing(&self, phi: &[f64]) -> f64 {
        1.0 + phi.iter().map(|p| (2.0 * PI * p).cos()).sum::<f64>()
    }

    fn y(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&z[self.n..])
    }
}

impl HamiltonianSystem for ForcedRotors {
    fn name(&self) -> &str {
        "forced_rotors"
    }

    fn n(&self) -> usize {
        self.n
    }

    fn ell(&self) -> usize {
        self.ell
    }

    fn structure(&self) -> &dyn SymplecticStructure {
        &self.structure
    }

    fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn hamiltonian(&self, z: &[f64], phi: &[f64]) -> f64 {
        let y = self.y(z);
        let kinetic = 0.5 * y.dot(&(&self.twist * &y));
        let f = self.forcing(phi);
        let potential: f64 = z[..self.n].iter().map(|x| (2.0 * PI * x).cos()).sum();
        kinetic + self.epsilon * f * potential
    }

    fn gradient(&self, z: &[f64], phi: &[f64]) -> DVector<f64> {
        let n = self.n;
        let f = self.forcing(phi);
        let my = &self.twist * self.y(z);
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                -2.0 * PI * self.epsilon * f * (2.0 * PI * z[i]).sin()
            } else {
                my[i - n]
            }
        })
    }

    fn field(&self, z: &[f64], phi: &[f64]) -> DVector<f64> {
        &self.omega_inv * self.gradient(z, phi)
    }

    fn field_jacobian(&self, z: &[f64], phi: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let f = self.forcing(phi);
        let mut hess = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            hess[(i, i)] = -4.0 * PI * PI * self.epsilon * f * (2.0 * PI * z[i]).cos();
        }
        hess.view_mut((n, n), (n, n)).copy_from(&self.twist);
        &self.omega_inv * hess
    }

    fn field_second(&self, z: &[f64], phi: &[f64], v: &[f64], w: &[f64]) -> DVector<f64> {
        let n = self.n;
        let f = self.forcing(phi);
        let third = DVector::from_fn(2 * n, |i, _| {
            if i < n {
                8.0 * PI.powi(3) * self.epsilon * f * (2.0 * PI * z[i]).sin() * v[i] * w[i]
            } else {
                0.0
            }
        });
        &self.omega_inv * third
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_derivatives, sample_points};
    use super::*;
    use crate::geometry::{standard_symplectic, StructureCase};

    #[test]
    fn canonical_field_is_hy_minus_hx() {
        let sys = ForcedRotors::pendulum(0.05, 2, 0.6);
        for (z, phi) in sample_points(&sys, 20) {
            let g = sys.gradient(&z, &phi);
            let f = sys.field(&z, &phi);
            assert!((f[0] - g[1]).abs() < 1e-15 && (f[1] + g[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn pendulum_derivatives_match_differences() {
        let sys = ForcedRotors::pendulum(0.05, 1, 0.6);
        let c = check_derivatives(&sys, &sample_points(&sys, 20), 1e-5);
        assert!(c.gradient < 1e-8, "{c:?}");
        assert!(c.field < 1e-14, "{c:?}");
        assert!(c.jacobian < 1e-6, "{c:?}");
        assert!(c.second < 1e-6, "{c:?}");
        assert!(c.jacobi_identity < 1e-9, "{c:?}");
    }

    #[test]
    fn case_ii_rotors_derivatives() {
        let twist = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0]));
        let st =
            ConstantStructure::new(StructureCase::CaseII, standard_symplectic(2) * 1.5, g).unwrap();
        let inf = f64::INFINITY;
        let dom = DomainBox::new(vec![-inf, -inf, -1.0, -1.0], vec![inf, inf, 1.0, 1.0]).unwrap();
        let sys = ForcedRotors::new(0.1, 1, twist, st, dom).unwrap();
        let c = check_derivatives(&sys, &sample_points(&sys, 20), 1e-5);
        assert!(
            c.jacobian < 1e-6 && c.second < 1e-6 && c.jacobi_identity < 1e-9,
            "{c:?}"
        );
    }

    #[test]
    fn zero_epsilon_is_integrable() {
        let sys = ForcedRotors::pendulum(0.0, 1, 0.6);
        let f = sys.field(&[0.3, 0.7], &[0.2]);
        assert_eq!(f.as_slice(), &[0.7, 0.0]);
    }
}
