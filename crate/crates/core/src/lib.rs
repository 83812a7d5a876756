pub mod certificate;
pub mod cli;
pub mod cohomology;
pub mod fourier;
pub mod geometry;
pub mod newton;
pub mod system;
