//! Quantum Markov fields on rooted trees, at desk scale.
//!
//! Two constructions are provided, together with the machinery to certify
//! their defining identities numerically:
//!
//! * **Entangled Markov fields** ([`emf`]): a state on a tree built from
//!   per-edge amplitude matrices whose squared moduli are bi-stochastic.
//!   Includes the boundary isometries, the chain and reconstruction
//!   evaluation routes, and classicality diagnostics.
//! * **Markov chains on Cayley trees** ([`cayley_chain`]): finite-volume
//!   functionals built from a homogeneous edge kernel and boundary weights
//!   solving the compatibility equations, with quasi-conditional
//!   expectations, shift invariance, and clustering via transfer
//!   superoperators.
//!
//! Supporting modules: [`graph`] (rooted trees, boundaries, closures),
//! [`algebra`] (dense tensor-leg linear algebra), [`kernels`] (the two
//! closed-form kernel families used as analytic oracles), and [`verify`]
//! (the machine-checkable suite behind the CLI).

pub mod algebra;
pub mod cayley_chain;
pub mod emf;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod verify;

pub use algebra::{herm_exp, LocalOperator, StateVector, MAX_OPERATOR_DIM, MAX_VECTOR_DIM, TOL_EQ, TOL_TRACE};
pub use cayley_chain::{ChainSpec, ClusteringReport, TransferSuperoperator};
pub use emf::{AmplitudeField, BoundaryIsometry, ClassicalityReport, EntangledField};
pub use error::{Error, Result};
pub use graph::{Region, Tree, Vertex};
pub use kernels::{analytic_oracle, AnalyticOracle, KernelFamily};
