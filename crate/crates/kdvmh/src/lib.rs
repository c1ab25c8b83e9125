//! Integrable lattice KdV/MKdV maps, their Lax structure, and modified Hamiltonians.

pub mod actionangle;
pub mod jets;
pub mod maps;
pub mod mh;
pub mod ode;
pub mod poly;
pub mod quad;
pub mod spectral;

pub use jets::{jet_seed, poisson_bracket, Jet, JetError, Scalar, ScalarField};
pub use maps::{Family, Layout, MapError, MapParams, PhasePoint};
