//! Finite-dimensional quantum state engine built around sparse state vectors.
//!
//! States are maps from basis bit strings to complex amplitudes over a named
//! [`RegisterLayout`]. Honest protocol states in this workspace have at most a
//! handful of branches, so register widths in the hundreds of qubits cost
//! nothing. A capped dense density-matrix path exists for basis-independent
//! comparisons (reduced states, trace distance).

pub mod bits;
pub mod density;
pub mod error;
pub mod layout;
pub mod measure;
pub mod state;

pub use bits::{gf2_basis, sample_solution, Bits};
pub use density::{hermitian_eigenvalues, trace_distance, DensityMatrix, DENSE_CAP};
pub use error::{QsimError, Result};
pub use layout::RegisterLayout;
pub use measure::{
    bell_measure, bell_pair, bell_project, computational_distribution, measure_computational,
    measure_hadamard_register, project_computational, project_hadamard, Basis, MeasurementRecord,
};
pub use state::SparseState;

/// Numerical tolerances, centralized so every comparison in the workspace pins
/// the same values.
pub mod tol {
    /// Amplitudes with |a| below this are pruned from sparse states.
    pub const PRUNE: f64 = 1e-12;
    /// Maximum allowed deviation of Σ|amp|² from 1.
    pub const NORM: f64 = 1e-9;
    /// Entry-wise tolerance for density-matrix comparisons.
    pub const DENSITY: f64 = 1e-9;
}
