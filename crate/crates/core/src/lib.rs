//! Numerical laboratory for nonlinear Dirichlet forms on finite measured
//! graphs.
//!
//! The crate evaluates convex even energies `E` on `L²(X, m)` for a finite
//! point set `X` with positive weights `m`, computes the Minkowski norm of the
//! associated Dirichlet space and the induced norm-capacity, and checks
//! Sobolev-type embeddings against isocapacitary constants. It also solves
//! the resolvent problem `∂E(u) + λu = f` and runs the gradient flow of `E`
//! by implicit Euler steps.

pub mod capacity;
pub mod error;
pub mod flow;
pub mod elliptic;
pub mod embed;
pub mod forms;
pub mod gauge;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
pub use forms::{Edge, FormInstance, FormSpec, Interaction, Phi, PhiPiece};
pub use report::InequalityReport;
pub use sampling::Sampler;
pub use solver::SolverConfig;
pub use space::{FiniteMeasuredSpace, Func, SubsetMask};
