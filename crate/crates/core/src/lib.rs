//! Control design and randomized benchmarking of state maps in the
//! 16-dimensional hyperfine ground manifold of an alkali atom (I = 7/2),
//! driven by a static bias field plus phase-modulated rf and microwave fields.
//!
//! All Hamiltonians are expressed in the rotating frame with ħ = 1 and carry
//! angular-frequency units (rad/s). Configuration values are quoted as linear
//! frequencies in Hz and converted with a factor of 2π at assembly time.
//!
//! Data-parallel loops (ensemble members, progression legs, shots, parameter
//! grids) run on rayon when the `parallel` feature is enabled and fall back to
//! plain iterators otherwise. Reductions always happen in a fixed order, so
//! results are bit-identical between the two builds.

pub mod benchmarking;
pub mod error;
pub mod expm;
pub mod hamiltonian;
pub mod io;
pub mod optimizer;
pub mod par;
pub mod propagator;
pub mod rng;
pub mod spin;
pub mod tridiag;
pub mod validation;

pub use error::{Error, Result};
pub use hamiltonian::{ControlParameters, ControlPhases};
pub use propagator::{QuantumState, Waveform};

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

/// Hilbert-space dimension of the ground manifold, 2(2I + 1) with I = 7/2.
pub const DIM: usize = 16;

/// Dense operator on the ground manifold.
pub type Operator = SMatrix<Complex64, DIM, DIM>;

/// State vector on the ground manifold.
pub type Ket = SVector<Complex64, DIM>;

pub(crate) const TWO_PI: f64 = std::f64::consts::TAU;
