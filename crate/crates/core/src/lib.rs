//! Pseudo-spectral toolkit for the stochastic generalized surface
//! quasi-geostrophic momentum equation on the 2-torus.
//!
//! The crate provides exact spectral calculus on band-limited fields, the
//! direction-family decomposition behind the wave construction, stage-indexed
//! parameters and cutoffs, Ornstein-Uhlenbeck forcing with exact per-mode
//! transitions, semi-Lagrangian transport along mollified convection, a full
//! convex-integration stage with its Reynolds-stress bookkeeping, a spectral
//! Galerkin baseline for the energy inequality, and the verification
//! batteries tying them together.
//!
//! All numerics are generic over the scalar type; the `f64` aliases below are
//! what the CLI and the test suites use.

pub mod error;
pub mod fft;
pub mod field;
pub mod galerkin;
pub mod grid;
pub mod io;
pub mod noise;
pub mod norms;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod smooth;
pub mod stage;
pub mod transport;
pub mod verify;
pub mod wave;

pub use error::{CoreError, Result};
pub use grid::Grid;
pub use scalar::Real;

/// Concrete double-precision aliases.
pub type Field64 = field::SpectralField<f64>;
pub type Tensor64 = field::SymTensorField<f64>;
pub type TimeField64 = field::TimeSampledField<f64>;
pub type TimeTensor64 = field::TimeSampledTensor<f64>;
pub type WaveSystem64 = wave::WaveSystem<f64>;
pub type NoisePath64 = noise::NoisePath<f64>;
pub type StageState64 = stage::StageState<f64>;

/// Single-precision aliases for exploratory work.
pub type Field32 = field::SpectralField<f32>;
pub type Tensor32 = field::SymTensorField<f32>;
