//! Symplectic structures, the adapted frame along a torus, the symplectic
//! error of the frame and the torsion matrix.

mod embedding;
mod frame;
mod matrix;
mod structure;

pub use embedding::TorusEmbedding;
pub use frame::{
    build_frame, reduced_form, symplectic_error, symplectic_error_blocks, tangent_frame, torsion,
    torsion_kernel, torsion_kernel_point, torsion_remark_variant, torsion_via_lie, AdaptedFrame,
    FrameNodes, Torsion, TorsionKernel, DEGENERACY_THRESHOLD,
};
pub use matrix::{row_sum_norm, MatrixGrid, MatrixSeries};
pub use structure::{standard_symplectic, ConstantStructure, StructureCase, SymplecticStructure};

use thiserror::Error;

use crate::cohomology::CohomologyError;
use crate::fourier::FourierError;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error("invalid symplectic structure: {0}")]
    InvalidStructure(String),
    #[error("layout mismatch: {0}")]
    Layout(String),
    #[error("degenerate frame at node {node} (angles {point:?}): cond(L^T G L) = {condition:e}")]
    DegenerateFrame {
        node: usize,
        point: Vec<f64>,
        condition: f64,
    },
    #[error("average torsion is singular: condition number {condition:e}")]
    TwistDegeneracy { condition: f64 },
}
