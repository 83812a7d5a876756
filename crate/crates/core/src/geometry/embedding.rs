//! Parameterized tori `K(theta, phi) = W theta + u(theta, phi)`.

use nalgebra::{DMatrix, DVector};

use crate::cohomology::{self, Frequencies};
use crate::fourier::{FourierSeries, TorusDims};

use super::matrix::{MatrixGrid, MatrixSeries};
use super::GeometryError;

/// Embedding of `T^n x T^ell` into `R^{2n}`.
///
/// The integer winding matrix `W` (`2n x n`) carries the non-periodic part,
/// so angle-like coordinates can wrap around the torus while `u` stays
/// periodic.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusEmbedding {
    winding: DMatrix<f64>,
    components: Vec<FourierSeries>,
}

impl TorusEmbedding {
    pub fn new(
        winding: DMatrix<f64>,
        components: Vec<FourierSeries>,
    ) -> Result<Self, GeometryError> {
        let Some(first) = components.first() else {
            return Err(GeometryError::Layout("embedding has no components".into()));
        };
        let n = first.dims().n();
        if components.len() != 2 * n {
            return Err(GeometryError::Layout(format!(
                "expected {} components for n = {n}, got {}",
                2 * n,
                components.len()
            )));
        }
        if !components.iter().all(|c| c.same_layout(first)) {
            return Err(GeometryError::Layout(
                "embedding components must share dims and truncation".into(),
            ));
        }
        if winding.shape() != (2 * n, n) || winding.iter().any(|w| w.fract() != 0.0) {
            return Err(GeometryError::Layout(format!(
                "winding must be an integer {}x{n} matrix",
                2 * n
            )));
        }
        Ok(Self {
            winding,
            components,
        })
    }

    /// `W = [I; 0]`: the first `n` coordinates are angles.
    pub fn standard_winding(n: usize) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            w[(i, i)] = 1.0;
        }
        w
    }

    /// `K = (theta, y0)`.
    pub fn rotator(dims: TorusDims, trunc: &[usize], y0: &[f64]) -> Result<Self, GeometryError> {
        let n = dims.n();
        assert_eq!(y0.len(), n, "one action per angle");
        let mut comps = Vec::with_capacity(2 * n);
        for _ in 0..n {
            comps.push(FourierSeries::zeros(dims, trunc.to_vec())?);
        }
        for &y in y0 {
            comps.push(FourierSeries::constant(dims, trunc.to_vec(), y)?);
        }
        Self::new(Self::standard_winding(n), comps)
    }

    pub fn winding(&self) -> &DMatrix<f64> {
        &self.winding
    }

    pub fn components(&self) -> &[FourierSeries] {
        &self.components
    }

    pub fn dims(&self) -> TorusDims {
        self.components[0].dims()
    }

    pub fn trunc(&self) -> &[usize] {
        self.components[0].trunc()
    }

    /// Half the phase-space dimension.
    pub fn n(&self) -> usize {
        self.dims().n()
    }

    /// Same winding, new periodic part.
    pub fn with_components(&self, components: Vec<FourierSeries>) -> Result<Self, GeometryError> {
        Self::new(self.winding.clone(), components)
    }

    /// `K + delta`, with `delta` periodic.
    pub fn add_periodic(&self, delta: &[FourierSeries]) -> Self {
        assert_eq!(delta.len(), self.components.len());
        Self {
            winding: self.winding.clone(),
            components: self
                .components
                .iter()
                .zip(delta)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn retruncate(&self, trunc: &[usize]) -> Result<Self, GeometryError> {
        let comps = self
            .components
            .iter()
            .map(|c| c.retruncate(trunc))
            .collect::<Result<_, _>>()?;
        Self::new(self.winding.clone(), comps)
    }

    fn winding_part(&self, point: &[f64]) -> DVector<f64> {
        let n = self.n();
        &self.winding * DVector::from_column_slice(&point[..n])
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let mut v = self.winding_part(point);
        for (i, c) in self.components.iter().enumerate() {
            v[i] += c.evaluate(point)?;
        }
        Ok(v)
    }

    /// Nodal values as `2n x 1` matrices.
    pub fn to_grid(&self, shape: &[usize]) -> Result<MatrixGrid, GeometryError> {
        let periodic =
            MatrixSeries::new(self.components.len(), 1, self.components.clone()).to_grid(shape)?;
        Ok(periodic.map(|i, u| {
            let w = self.winding_part(&periodic.node_point(i));
            u + DMatrix::from_column_slice(w.len(), 1, w.as_slice())
        }))
    }

    /// `L = D_theta K = W + D_theta u`.
    pub fn tangent(&self) -> Result<MatrixSeries, GeometryError> {
        let n = self.n();
        let mut entries = Vec::with_capacity(2 * n * n);
        for i in 0..2 * n {
            for j in 0..n {
                entries.push(
                    self.components[i]
                        .derivative(j)?
                        .add_constant(self.winding[(i, j)]),
                );
            }
        }
        Ok(MatrixSeries::new(2 * n, n, entries))
    }

    /// `L_{omega,alpha} K = -W omega + L_{omega,alpha} u`.
    pub fn lie(&self, freqs: &Frequencies) -> Result<Vec<FourierSeries>, GeometryError> {
        let w_omega = &self.winding * DVector::from_column_slice(freqs.omega());
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| Ok(cohomology::lie_derivative(c, freqs)?.add_constant(-w_omega[i])))
            .collect()
    }

    /// Largest weighted norm among the periodic components.
    pub fn periodic_norm(&self, rho: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.analytic_norm(rho))
            .fold(0.0, f64::max)
    }
}
