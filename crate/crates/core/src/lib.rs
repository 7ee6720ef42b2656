//! Simulation and exact oracles for factoring with Gauss sums.
//!
//! Two algorithms share one bipartite statevector engine: a Shor-style
//! register whose labels are `gcd(ℓ, N)`, and a superposition of shifted
//! Gauss sums where measuring one register reveals factor multiples in the
//! other. Closed forms in [`kernels`] and [`numtheory`] serve as oracles for
//! the simulated distributions.

pub mod error;
pub mod kernels;
pub mod numtheory;
pub mod report;
pub mod shor_gauss;
pub mod state;
pub mod superposition;

pub use error::{Error, Result};
pub use numtheory::{factor_semiprime, gcd_conv, Semiprime};
pub use state::{BipartiteState, Distribution};
