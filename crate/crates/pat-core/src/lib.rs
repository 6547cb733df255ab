//! Sparse-data photoacoustic tomography: geometry, phantoms, wave-equation
//! forward/adjoint operators, filtered backprojection and a TV-minimization
//! baseline.
//!
//! All numerical code is generic over the scalar type through [`Scalar`];
//! the physics is normally run in `f64` and the concrete aliases below
//! name the common instantiations.

pub mod error;
pub mod fbp;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod pgm;
pub mod phantom;
pub mod rng;
pub mod scalar;
pub mod tensor_file;
pub mod tv;

pub use error::{CoreError, Result};
pub use geometry::{detector_positions, Geometry, PressureData};
pub use grid::{Grid, Image};
pub use scalar::Scalar;

/// Image of `f64` samples, the default for reconstruction work.
pub type Image64 = Image<f64>;
/// Image of `f32` samples, used at the network boundary.
pub type Image32 = Image<f32>;
/// Detector data in `f64`.
pub type PressureData64 = PressureData<f64>;
/// Detector data in `f32`.
pub type PressureData32 = PressureData<f32>;
