//! Adapted frame `P = [L N]`, reduced form `Omega_L`, symplectic error and
//! torsion.
//!
//! Every product and inverse is formed node by node on the grid and only
//! then transformed and truncated.

use nalgebra::DMatrix;

use super::matrix::{MatrixGrid, MatrixSeries};
use super::structure::{standard_symplectic, StructureCase, SymplecticStructure};
use super::{GeometryError, TorusEmbedding};
use crate::cohomology::{self, Frequencies};
use crate::system::{jacobian_on_torus, HamiltonianSystem};

/// Condition numbers above this are treated as singular.
pub const DEGENERACY_THRESHOLD: f64 = 1e12;

/// `L = D_theta K`.
pub fn tangent_frame(k: &TorusEmbedding) -> Result<MatrixSeries, GeometryError> {
    k.tangent()
}

/// `Omega_L = L^T Omega(K) L`, truncated to the cutoff of `K`.
pub fn reduced_form(
    k: &TorusEmbedding,
    structure: &dyn SymplecticStructure,
    shape: &[usize],
) -> Result<MatrixSeries, GeometryError> {
    let kg = k.to_grid(shape)?;
    let lg = k.tangent()?.to_grid(shape)?;
    let og = kg.map(|_, z| structure.omega(z.as_slice()));
    let nodal = og.zip_map(&lg, |om, l| l.transpose() * om * l);
    Ok(nodal.to_series(k.trunc())?)
}

/// Nodal values of every frame object.
#[derive(Debug, Clone)]
pub struct FrameNodes {
    pub k: MatrixGrid,
    pub l: MatrixGrid,
    pub omega_k: MatrixGrid,
    pub n0: MatrixGrid,
    pub b: MatrixGrid,
    pub a: MatrixGrid,
    pub ntilde: MatrixGrid,
    pub n: MatrixGrid,
    pub omega_l: MatrixGrid,
}

/// The frame along a torus, both nodal and as truncated series.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub case: StructureCase,
    pub l: MatrixSeries,
    pub n0: MatrixSeries,
    pub b: MatrixSeries,
    pub a: MatrixSeries,
    pub ntilde: MatrixSeries,
    pub n: MatrixSeries,
    pub p: MatrixSeries,
    pub omega_l: MatrixSeries,
    pub nodes: FrameNodes,
    /// Largest `cond(L^T G L)` over nodes.
    pub max_metric_condition: f64,
    /// Largest tail mass discarded when truncating frame objects.
    pub truncation_residual: f64,
}

impl AdaptedFrame {
    pub fn shape(&self) -> &[usize] {
        self.nodes.k.shape()
    }

    pub fn trunc(&self) -> &[usize] {
        self.l.trunc()
    }

    /// Phase-space half-dimension.
    pub fn n_dof(&self) -> usize {
        self.l.cols()
    }
}

fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn hstack(l: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(l.nrows(), l.ncols() + r.ncols());
    p.columns_mut(0, l.ncols()).copy_from(l);
    p.columns_mut(l.ncols(), r.ncols()).copy_from(r);
    p
}

/// Builds `N^0 = J(K) L`, `B = (L^T G(K) L)^{-1}`, `Ntilde = N^0 B`, `A`
/// (nonzero only in Case II), `N = L A + Ntilde` and `P = [L N]`.
pub fn build_frame(
    k: &TorusEmbedding,
    structure: &dyn SymplecticStructure,
    shape: &[usize],
) -> Result<AdaptedFrame, GeometryError> {
    let case = structure.case();
    let trunc = k.trunc().to_vec();
    let n = k.n();
    let kg = k.to_grid(shape)?;
    let lg = k.tangent()?.to_grid(shape)?;
    let omega_k = kg.map(|_, z| structure.omega(z.as_slice()));

    let gram = kg.zip_map(&lg, |z, l| {
        l.transpose() * structure.metric(z.as_slice()) * l
    });
    let mut max_cond: f64 = 0.0;
    for (i, m) in gram.nodes().iter().enumerate() {
        let cond = spd_condition(m);
        if !(cond <= DEGENERACY_THRESHOLD) {
            return Err(GeometryError::DegenerateFrame {
                node: i,
                point: gram.node_point(i),
                condition: cond,
            });
        }
        max_cond = max_cond.max(cond);
    }
    let b = gram.map(|_, m| {
        m.clone()
            .cholesky()
            .expect("positive definite after condition check")
            .inverse()
    });
    let n0 = kg.zip_map(&lg, |z, l| structure.complex_structure(z.as_slice()) * l);
    let ntilde = n0.zip_map(&b, |n0, b| n0 * b);
    let a = match case {
        StructureCase::CaseII => ntilde.zip_map(&omega_k, |nt, om| nt.transpose() * om * nt * -0.5),
        _ => ntilde.map(|_, _| DMatrix::zeros(n, n)),
    };
    let la = lg.zip_map(&a, |l, a| l * a);
    let nn = la.zip_map(&ntilde, |la, nt| la + nt);
    let omega_l = lg.zip_map(&omega_k, |l, om| l.transpose() * om * l);
    let p = lg.zip_map(&nn, hstack);

    let mut residual: f64 = 0.0;
    let mut tr = |g: &MatrixGrid| -> Result<MatrixSeries, GeometryError> {
        let (s, r) = g.to_series_with_residual(&trunc)?;
        residual = residual.max(r);
        Ok(s)
    };
    let l_s = k.tangent()?;
    let n0_s = tr(&n0)?;
    let b_s = tr(&b)?;
    let a_s = tr(&a)?;
    let ntilde_s = tr(&ntilde)?;
    let n_s = tr(&nn)?;
    let p_s = tr(&p)?;
    let omega_l_s = tr(&omega_l)?;
    Ok(AdaptedFrame {
        case,
        l: l_s,
        n0: n0_s,
        b: b_s,
        a: a_s,
        ntilde: ntilde_s,
        n: n_s,
        p: p_s,
        omega_l: omega_l_s,
        nodes: FrameNodes {
            k: kg,
            l: lg,
            omega_k,
            n0,
            b,
            a,
            ntilde,
            n: nn,
            omega_l,
        },
        max_metric_condition: max_cond,
        truncation_residual: residual,
    })
}

/// `E_sym = P^T Omega(K) P - Omega_0`.
pub fn symplectic_error(frame: &AdaptedFrame) -> Result<MatrixSeries, GeometryError> {
    let n = frame.n_dof();
    let omega0 = standard_symplectic(n);
    let l = &frame.nodes.l;
    let nodal = l
        .zip_map(&frame.nodes.n, hstack)
        .zip_map(&frame.nodes.omega_k, |p, om| {
            p.transpose() * om * p - &omega0
        });
    Ok(nodal.to_series(frame.trunc())?)
}

/// Block form of the symplectic error predicted from `Omega_L`, `A`, `B`.
///
/// Case II: `[[Omega_L, Omega_L A], [A^T Omega_L, A^T Omega_L A]]`.
/// Compatible cases (`A = 0`, `Omega = J^T Omega J`):
/// `diag(Omega_L, B^T Omega_L B)`.
pub fn symplectic_error_blocks(frame: &AdaptedFrame) -> Result<MatrixSeries, GeometryError> {
    let n = frame.n_dof();
    let nodes = &frame.nodes;
    let compatible = frame.case.is_compatible();
    let nodal = nodes.omega_l.map(|i, ol| {
        let a = nodes.a.node(i);
        let b = nodes.b.node(i);
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(ol);
        if compatible {
            m.view_mut((n, n), (n, n))
                .copy_from(&(b.transpose() * ol * b));
        } else {
            m.view_mut((0, n), (n, n)).copy_from(&(ol * a));
            m.view_mut((n, 0), (n, n)).copy_from(&(a.transpose() * ol));
            m.view_mut((n, n), (n, n))
                .copy_from(&(a.transpose() * ol * a));
        }
        m
    });
    Ok(nodal.to_series(frame.trunc())?)
}

/// `T_h(K, phi)` at every node, plus the largest `|T_h - T_h^T|` entry.
#[derive(Debug, Clone)]
pub struct TorsionKernel {
    pub nodal: MatrixGrid,
    pub asymmetry: f64,
}

/// Case II: `T_h = Omega (DZ - DJ[Z] J^{-1} - J DZ J^{-1})`.
/// Compatible cases: `T_h = Omega (DZ + DJ[Z] J + J DZ J)`.
pub fn torsion_kernel(frame: &AdaptedFrame, system: &dyn HamiltonianSystem) -> TorsionKernel {
    torsion_kernel_at(&frame.nodes.k, system)
}

pub(crate) fn torsion_kernel_at(
    k_grid: &MatrixGrid,
    system: &dyn HamiltonianSystem,
) -> TorsionKernel {
    let n = system.n();
    let nodal = k_grid.map(|i, z| {
        let p = k_grid.node_point(i);
        torsion_kernel_point(system, z.as_slice(), &p[n..])
    });
    let asymmetry = nodal
        .nodes()
        .iter()
        .map(|m| (m - m.transpose()).amax())
        .fold(0.0, f64::max);
    TorsionKernel { nodal, asymmetry }
}

/// `T_h(z, phi)` at a single phase-space point.
pub fn torsion_kernel_point(
    system: &dyn HamiltonianSystem,
    z: &[f64],
    phi: &[f64],
) -> DMatrix<f64> {
    let structure = system.structure();
    let dz = system.field_jacobian(z, phi);
    let om = structure.omega(z);
    let j = structure.complex_structure(z);
    let dj_z = (!structure.is_constant())
        .then(|| structure.d_complex_structure(z, system.field(z, phi).as_slice()));
    let inner = if structure.case().is_compatible() {
        let mut m = &dz + &j * &dz * &j;
        if let Some(dj) = dj_z {
            m += dj * &j;
        }
        m
    } else {
        let j_inv = structure.complex_structure_inverse(z);
        let mut m = &dz - &j * &dz * &j_inv;
        if let Some(dj) = dj_z {
            m -= dj * &j_inv;
        }
        m
    };
    om * inner
}

/// Torsion matrix, its average and the inverse of the average.
#[derive(Debug, Clone)]
pub struct Torsion {
    pub series: MatrixSeries,
    pub nodal: MatrixGrid,
    pub average: DMatrix<f64>,
    pub average_inverse: DMatrix<f64>,
    /// 2-norm condition number of the average.
    pub condition: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// Case II:
/// `T = -1/2 Nt^T (T_h + T_h^T) Nt + Nt^T T_h^T N + N^T T_h Nt`.
/// Compatible cases: `T = N^T T_h N`.
pub fn torsion(frame: &AdaptedFrame, kernel: &TorsionKernel) -> Result<Torsion, GeometryError> {
    let nodes = &frame.nodes;
    let nodal = if frame.case.is_compatible() {
        nodes
            .n
            .zip_map(&kernel.nodal, |n, th| n.transpose() * th * n)
    } else {
        nodes.n.map(|i, n| {
            let nt = nodes.ntilde.node(i);
            let th = kernel.nodal.node(i);
            let sym = th + th.transpose();
            nt.transpose() * sym * nt * -0.5
                + nt.transpose() * th.transpose() * n
                + n.transpose() * th * nt
        })
    };
    finish_torsion(nodal, frame.trunc())
}

fn finish_torsion(nodal: MatrixGrid, trunc: &[usize]) -> Result<Torsion, GeometryError> {
    let series = nodal.to_series(trunc)?;
    let average = series.average();
    let condition = condition_number(&average);
    if !(condition <= DEGENERACY_THRESHOLD) {
        return Err(GeometryError::TwistDegeneracy { condition });
    }
    let average_inverse = average
        .clone()
        .lu()
        .try_inverse()
        .ok_or(GeometryError::TwistDegeneracy { condition })?;
    Ok(Torsion {
        series,
        nodal,
        average,
        average_inverse,
        condition,
    })
}

/// The Case II torsion rewritten in terms of `N` and `A` only:
/// `N^T S N + A^T L^T W N - N^T W L A - A^T L^T S L A`, where `S` and `W`
/// are the symmetric and antisymmetric parts of `T_h`. Algebraically equal
/// to [`torsion`]; kept for cross-checks.
pub fn torsion_remark_variant(frame: &AdaptedFrame, kernel: &TorsionKernel) -> MatrixGrid {
    let nodes = &frame.nodes;
    nodes.n.map(|i, n| {
        let la = nodes.l.node(i) * nodes.a.node(i);
        let th = kernel.nodal.node(i);
        let s = (th + th.transpose()) * 0.5;
        let w = (th - th.transpose()) * 0.5;
        n.transpose() * &s * n + la.transpose() * &w * n
            - n.transpose() * &w * &la
            - la.transpose() * &s * &la
    })
}

/// `T = N^T Omega(K) (DZ N + L_{omega,alpha} N)`, the torsion written with
/// the Lie derivative of the normal frame.
pub fn torsion_via_lie(
    frame: &AdaptedFrame,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
) -> Result<Torsion, GeometryError> {
    let nodes = &frame.nodes;
    let lie_entries = frame
        .n
        .entries()
        .iter()
        .map(|e| cohomology::lie_derivative(e, freqs))
        .collect::<Result<Vec<_>, _>>()?;
    let lie_n =
        MatrixSeries::new(frame.n.rows(), frame.n.cols(), lie_entries).to_grid(frame.shape())?;
    let dz = jacobian_on_torus(&nodes.k, system);
    let inner = dz
        .zip_map(&nodes.n, |dz, n| dz * n)
        .zip_map(&lie_n, |a, b| a + b);
    let left = nodes.n.zip_map(&nodes.omega_k, |n, om| n.transpose() * om);
    let nodal = left.zip_map(&inner, |l, r| l * r);
    finish_torsion(nodal, frame.trunc())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::TorusDims;
    use crate::geometry::ConstantStructure;
    use crate::system::ForcedRotors;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn rotator_frame() -> AdaptedFrame {
        let k =
            TorusEmbedding::rotator(TorusDims::new(1, 1).unwrap(), &[4, 4], &[golden()]).unwrap();
        build_frame(&k, &ConstantStructure::canonical(1), &[16, 16]).unwrap()
    }

    #[test]
    fn rotator_frame_is_identity() {
        let f = rotator_frame();
        assert_eq!(f.p.average(), DMatrix::<f64>::identity(2, 2));
        assert_eq!(f.b.average()[(0, 0)], 1.0);
        assert_eq!(f.a.max_coeff_abs(), 0.0);
        assert_eq!(f.omega_l.max_coeff_abs(), 0.0);
        assert_eq!(symplectic_error(&f).unwrap().max_coeff_abs(), 0.0);
    }

    #[test]
    fn rotator_kernel_and_torsion() {
        let f = rotator_frame();
        let sys = ForcedRotors::pendulum(0.0, 1, golden());
        let kernel = torsion_kernel(&f, &sys);
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(kernel.nodal.nodes().iter().all(|m| m == &expected));
        let t = torsion(&f, &kernel).unwrap();
        assert_eq!(t.average[(0, 0)], 1.0);
        assert_eq!(t.average_inverse[(0, 0)], 1.0);
        let freqs = Frequencies::new(vec![golden()], vec![1.0], 0.1, 1.2).unwrap();
        let t_lie = torsion_via_lie(&f, &sys, &freqs).unwrap();
        assert_eq!(t_lie.average[(0, 0)], 1.0);
    }

    #[test]
    fn collapsed_torus_is_degenerate() {
        // Winding zero and no periodic part: L = 0.
        let dims = TorusDims::new(1, 1).unwrap();
        let zero = crate::fourier::FourierSeries::zeros(dims, vec![2, 2]).unwrap();
        let k = TorusEmbedding::new(DMatrix::zeros(2, 1), vec![zero.clone(), zero]).unwrap();
        let err = build_frame(&k, &ConstantStructure::canonical(1), &[8, 8]).unwrap_err();
        assert!(
            matches!(err, GeometryError::DegenerateFrame { node: 0, .. }),
            "{err}"
        );
    }
}
