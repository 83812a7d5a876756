//! Matrix-valued functions on the torus, nodal and spectral.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::fourier::{self, node_point_into, FourierError, FourierSeries, GridFunction, TorusDims};

/// One `rows x cols` matrix per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGrid {
    dims: TorusDims,
    shape: Vec<usize>,
    rows: usize,
    cols: usize,
    nodes: Vec<DMatrix<f64>>,
}

impl MatrixGrid {
    pub fn from_nodes(dims: TorusDims, shape: Vec<usize>, nodes: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(nodes.len(), shape.iter().product::<usize>(), "node count");
        let (rows, cols) = nodes.first().map(|m| m.shape()).unwrap_or((0, 0));
        debug_assert!(nodes.iter().all(|m| m.shape() == (rows, cols)));
        Self {
            dims,
            shape,
            rows,
            cols,
            nodes,
        }
    }

    /// Builds a grid from a per-node closure receiving the flat index and
    /// the node angles.
    pub fn from_fn(
        dims: TorusDims,
        shape: &[usize],
        f: impl Fn(usize, &[f64]) -> DMatrix<f64> + Sync,
    ) -> Self {
        let total: usize = shape.iter().product();
        let nodes = (0..total)
            .into_par_iter()
            .map_init(
                || vec![0.0; shape.len()],
                |p, i| {
                    node_point_into(shape, i, p);
                    f(i, p)
                },
            )
            .collect();
        Self::from_nodes(dims, shape.to_vec(), nodes)
    }

    pub fn dims(&self) -> TorusDims {
        self.dims
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &DMatrix<f64> {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[DMatrix<f64>] {
        &self.nodes
    }

    pub fn node_point(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.shape.len()];
        node_point_into(&self.shape, i, &mut p);
        p
    }

    pub fn map(&self, f: impl Fn(usize, &DMatrix<f64>) -> DMatrix<f64> + Sync) -> Self {
        let nodes = self
            .nodes
            .par_iter()
            .enumerate()
            .map(|(i, m)| f(i, m))
            .collect();
        Self::from_nodes(self.dims, self.shape.clone(), nodes)
    }

    pub fn zip_map(
        &self,
        other: &Self,
        f: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64> + Sync,
    ) -> Self {
        assert_eq!(self.shape, other.shape, "grid shapes differ");
        let nodes = self
            .nodes
            .par_iter()
            .zip(&other.nodes)
            .map(|(a, b)| f(a, b))
            .collect();
        Self::from_nodes(self.dims, self.shape.clone(), nodes)
    }

    pub fn entry_grid(&self, i: usize, j: usize) -> GridFunction {
        GridFunction::new(
            self.dims,
            self.shape.clone(),
            self.nodes.iter().map(|m| m[(i, j)]).collect(),
        )
        .expect("shape consistent by construction")
    }

    /// Entrywise forward transform, returning the truncated series and the
    /// largest discarded tail mass over entries.
    pub fn to_series_with_residual(
        &self,
        trunc: &[usize],
    ) -> Result<(MatrixSeries, f64), FourierError> {
        let results: Vec<_> = (0..self.rows * self.cols)
            .into_par_iter()
            .map(|e| {
                let g = self.entry_grid(e / self.cols, e % self.cols);
                fourier::forward_transform_with_residual(&g, trunc)
            })
            .collect::<Result<_, _>>()?;
        let residual = results.iter().map(|(_, r)| *r).fold(0.0, f64::max);
        let entries = results.into_iter().map(|(s, _)| s).collect();
        Ok((MatrixSeries::new(self.rows, self.cols, entries), residual))
    }

    pub fn to_series(&self, trunc: &[usize]) -> Result<MatrixSeries, FourierError> {
        self.to_series_with_residual(trunc).map(|(s, _)| s)
    }

    /// Largest max-row-sum norm over nodes.
    pub fn sup_norm(&self) -> f64 {
        self.nodes.iter().map(row_sum_norm).fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.nodes.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    /// Grid mean of every entry.
    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        for m in &self.nodes {
            acc += m;
        }
        acc / self.nodes.len() as f64
    }
}

/// Max row sum of absolute entries.
pub fn row_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A `rows x cols` array of Fourier series with a common layout, stored row
/// by row.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    rows: usize,
    cols: usize,
    entries: Vec<FourierSeries>,
}

impl MatrixSeries {
    pub fn new(rows: usize, cols: usize, entries: Vec<FourierSeries>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count");
        assert!(
            entries.windows(2).all(|w| w[0].same_layout(&w[1])),
            "entries must share dims and truncation"
        );
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn constant(
        dims: TorusDims,
        trunc: &[usize],
        value: &DMatrix<f64>,
    ) -> Result<Self, FourierError> {
        let entries = value
            .transpose()
            .iter()
            .map(|&v| FourierSeries::constant(dims, trunc.to_vec(), v))
            .collect::<Result<_, _>>()?;
        Ok(Self::new(value.nrows(), value.ncols(), entries))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &FourierSeries {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[FourierSeries] {
        &self.entries
    }

    pub fn dims(&self) -> TorusDims {
        self.entries[0].dims()
    }

    pub fn trunc(&self) -> &[usize] {
        self.entries[0].trunc()
    }

    pub fn transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j).clone());
            }
        }
        Self::new(self.cols, self.rows, entries)
    }

    pub fn column(&self, j: usize) -> Vec<FourierSeries> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn average(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).average())
    }

    /// Max row sum of the entrywise weighted norms.
    pub fn analytic_norm(&self, rho: f64) -> f64 {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j).analytic_norm(rho))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.max_coeff_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_abs(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_coeff_abs())
            .fold(0.0, f64::max)
    }

    pub fn to_grid(&self, shape: &[usize]) -> Result<MatrixGrid, FourierError> {
        let grids: Vec<GridFunction> = self
            .entries
            .par_iter()
            .map(|e| fourier::inverse_transform(e, shape))
            .collect::<Result<_, _>>()?;
        let total: usize = shape.iter().product();
        let nodes = (0..total)
            .map(|n| {
                DMatrix::from_fn(self.rows, self.cols, |i, j| {
                    grids[i * self.cols + j].values()[n]
                })
            })
            .collect();
        Ok(MatrixGrid::from_nodes(self.dims(), shape.to_vec(), nodes))
    }

    /// Value at a single point by direct summation.
    pub fn evaluate(&self, point: &[f64]) -> Result<DMatrix<f64>, FourierError> {
        let vals = self
            .entries
            .iter()
            .map(|e| e.evaluate(point))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }
}
