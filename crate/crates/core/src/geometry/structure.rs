//! Symplectic form `Omega`, metric `G` and the induced `J = -Omega^{-1} G`.

use nalgebra::DMatrix;

use super::GeometryError;

/// Which frame recipe applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureCase {
    /// `Omega = Omega_0`, `G = I`, `J = Omega_0`.
    Canonical,
    /// General compatible-free triple; the frame carries a nonzero `A`.
    CaseII,
    /// `J^2 = -I`; `A = 0`.
    CaseIII,
}

impl StructureCase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Canonical => "canonical",
            Self::CaseII => "case2",
            Self::CaseIII => "case3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Some(Self::Canonical),
            "case2" | "caseii" | "ii" => Some(Self::CaseII),
            "case3" | "caseiii" | "iii" => Some(Self::CaseIII),
            _ => None,
        }
    }

    /// Whether the frame uses `A = 0` and the single-term torsion.
    pub fn is_compatible(self) -> bool {
        !matches!(self, Self::CaseII)
    }
}

/// Geometric data on phase space `R^{2n}`.
///
/// Derivative methods return directional derivatives `D_z X(z)[v]`.
pub trait SymplecticStructure: Send + Sync {
    fn case(&self) -> StructureCase;
    /// Phase-space dimension `2n`.
    fn dim(&self) -> usize;
    fn omega(&self, z: &[f64]) -> DMatrix<f64>;
    fn metric(&self, z: &[f64]) -> DMatrix<f64>;
    fn complex_structure(&self, z: &[f64]) -> DMatrix<f64>;

    fn complex_structure_inverse(&self, z: &[f64]) -> DMatrix<f64> {
        self.complex_structure(z)
            .try_inverse()
            .expect("J is invertible when Omega and G are")
    }

    fn d_omega(&self, z: &[f64], v: &[f64]) -> DMatrix<f64>;
    fn d_metric(&self, z: &[f64], v: &[f64]) -> DMatrix<f64>;
    fn d_complex_structure(&self, z: &[f64], v: &[f64]) -> DMatrix<f64>;

    /// Constant structures skip all derivative terms.
    fn is_constant(&self) -> bool {
        false
    }
}

/// `[[0, -I], [I, 0]]`.
pub fn standard_symplectic(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = -1.0;
        m[(n + i, i)] = 1.0;
    }
    m
}

/// A structure with `Omega`, `G`, `J` independent of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStructure {
    case: StructureCase,
    omega: DMatrix<f64>,
    metric: DMatrix<f64>,
    j: DMatrix<f64>,
    j_inv: DMatrix<f64>,
}

const STRUCTURE_TOL: f64 = 1e-12;
const ANTI_INVOLUTION_TOL: f64 = 1e-10;

impl ConstantStructure {
    pub fn canonical(n: usize) -> Self {
        let omega = standard_symplectic(n);
        Self {
            case: StructureCase::Canonical,
            j: omega.clone(),
            j_inv: -omega.clone(),
            metric: DMatrix::identity(2 * n, 2 * n),
            omega,
        }
    }

    /// Validates the pair and derives `J = -Omega^{-1} G`.
    pub fn new(
        case: StructureCase,
        omega: DMatrix<f64>,
        metric: DMatrix<f64>,
    ) -> Result<Self, GeometryError> {
        let dim = omega.nrows();
        let bad = |msg: String| Err(GeometryError::InvalidStructure(msg));
        if dim == 0 || dim % 2 != 0 || omega.ncols() != dim || metric.shape() != (dim, dim) {
            return bad(format!(
                "Omega {:?} and G {:?} must be square of equal even size",
                omega.shape(),
                metric.shape()
            ));
        }
        if (&omega + omega.transpose()).amax() > STRUCTURE_TOL {
            return bad("Omega is not antisymmetric".into());
        }
        if (&metric - metric.transpose()).amax() > STRUCTURE_TOL {
            return bad("G is not symmetric".into());
        }
        if metric.clone().cholesky().is_none() {
            return bad("G is not positive definite".into());
        }
        let Some(omega_inv) = omega.clone().try_inverse() else {
            return bad("Omega is singular".into());
        };
        let j = -(&omega_inv * &metric);
        let Some(j_inv) = j.clone().try_inverse() else {
            return bad("J is singular".into());
        };
        let n = dim / 2;
        match case {
            StructureCase::Canonical => {
                let std = standard_symplectic(n);
                if (&omega - &std).amax() > STRUCTURE_TOL
                    || (&metric - DMatrix::identity(dim, dim)).amax() > STRUCTURE_TOL
                {
                    return bad("canonical case requires Omega = Omega_0 and G = I".into());
                }
            }
            StructureCase::CaseIII => {
                let residual = (&j * &j + DMatrix::identity(dim, dim)).amax();
                if residual >= ANTI_INVOLUTION_TOL {
                    return bad(format!(
                        "J^2 + I has residual {residual:e}; not an anti-involution"
                    ));
                }
            }
            StructureCase::CaseII => {}
        }
        Ok(Self {
            case,
            omega,
            metric,
            j,
            j_inv,
        })
    }

    pub fn omega_matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn metric_matrix(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn j_matrix(&self) -> &DMatrix<f64> {
        &self.j
    }
}

impl SymplecticStructure for ConstantStructure {
    fn case(&self) -> StructureCase {
        self.case
    }

    fn dim(&self) -> usize {
        self.omega.nrows()
    }

    fn omega(&self, _z: &[f64]) -> DMatrix<f64> {
        self.omega.clone()
    }

    fn metric(&self, _z: &[f64]) -> DMatrix<f64> {
        self.metric.clone()
    }

    fn complex_structure(&self, _z: &[f64]) -> DMatrix<f64> {
        self.j.clone()
    }

    fn complex_structure_inverse(&self, _z: &[f64]) -> DMatrix<f64> {
        self.j_inv.clone()
    }

    fn d_omega(&self, _z: &[f64], _v: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }

    fn d_metric(&self, _z: &[f64], _v: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }

    fn d_complex_structure(&self, _z: &[f64], _v: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }

    fn is_constant(&self) -> bool {
        true
    }
}
