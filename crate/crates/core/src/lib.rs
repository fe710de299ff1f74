//! Quantum particle in an infinite square well whose right wall moves.

pub mod analytic;
pub mod bohm;
pub mod erf;
pub mod error;
pub mod evolution;
pub mod model;
pub mod observables;
pub mod ode;
pub mod protocol;
pub mod quad;
pub mod scalar;
pub mod spectral;
pub mod wave;

pub use error::{Error, Result};
pub use evolution::{AnalyticEvolution, Backend, Evolution, SpectralEvolution};
pub use model::{SpatialGrid, WallMotion, WellModel, LIGHT_SPEED_AU};
pub use scalar::Real;
pub use wave::{Basis, LocalWave, SpectralView, WaveState};

pub type WallMotion64 = WallMotion<f64>;
pub type WellModel64 = WellModel<f64>;
pub type SpatialGrid64 = SpatialGrid<f64>;
pub type WaveState64 = WaveState<f64>;
pub type WaveState32 = WaveState<f32>;
pub type WellModel32 = WellModel<f32>;
pub type Complex64 = num_complex::Complex<f64>;
