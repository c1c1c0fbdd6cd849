//! Random Schrödinger scattering with microlocally isotropic Gaussian fields.
//!
//! The crate covers the whole numerical chain: spectral grids ([`grid`]),
//! random field synthesis ([`random_field`]), the Lippmann–Schwinger forward
//! solver ([`forward`]), far-field sweeps and archives ([`far_field`],
//! [`archive`]), band-correlation recovery of rough strengths ([`recovery`])
//! and shared diagnostics ([`analysis`]).
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the precision.

pub mod analysis;
pub mod archive;
pub mod error;
pub mod far_field;
pub mod forward;
pub mod grid;
pub mod random_field;
pub mod recovery;
pub mod rng;
pub mod scalar;
pub mod volume;

pub use error::{Error, Result};
pub use grid::{
    dft_forward, dft_inverse, spectral_multiply, spectral_multiply_real, ComplexField3,
    Fft3Plan, FrequencyLattice, Grid3,
};
pub use scalar::{Cplx, Scalar};

pub type Grid3f64 = Grid3<f64>;
pub type Grid3f32 = Grid3<f32>;
pub type Field64 = ComplexField3<f64>;
pub type Field32 = ComplexField3<f32>;
