//! Exact dynamics of qudit chains: Pauli-string size distributions of
//! Heisenberg operators and their reconstruction from quench statistics over
//! random product states.
//!
//! The crate is organized bottom-up:
//!
//! * [`algebra`]: site basis, Pauli strings, dense operators, swap operator;
//! * [`decomposition`]: fast Pauli transform, `p_R`, `p_l`, generating function;
//! * [`dynamics`]: XYZ / Ising chains and eigenbasis time evolution;
//! * [`quench`]: random initial-state ensembles, Monte-Carlo variances and
//!   their exact counterparts;
//! * [`otoc`]: response-function statistics over global Haar states.

pub mod algebra;
pub mod decomposition;
pub mod dynamics;
mod error;
pub mod otoc;
pub mod quench;

pub use algebra::{
    hs_trace_inner, partial_trace, site_basis, string_to_matrix, swap_operator, ChainSpec,
    DenseOperator, PauliString, SiteBasis, StateVector,
};
pub use decomposition::{
    decompose, decompose_oracle, generating_function, random_baseline, region_distribution,
    size_distribution, size_from_samples, CoefficientTable, RegionDistribution, SizeDistribution,
};
pub use dynamics::{
    build_xyz, eigendecompose, evolve_operator, evolve_state, HeisenbergEvolver, SpectralCache,
    SpectralData, SpinChainParams, StateEvolver,
};
pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
