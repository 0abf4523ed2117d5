//! Least-squares neural network solvers for second-order elliptic problems
//! in first-order (flux) form.
//!
//! The trial pair `(u, φ)` is built from two networks and a set of auxiliary
//! functions so that boundary conditions hold by construction; the networks
//! are trained on a Monte Carlo estimate of the least-squares residual.

pub mod auxiliary;
pub mod benchmarks;
pub mod error;
pub mod generalized;
pub mod geometry;
pub mod history;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod pde;
pub mod solve;

pub use auxiliary::{AuxFunction, AuxRole, AuxTrainConfig, AuxiliarySet};
pub use benchmarks::{make_example1, make_example2, make_remark1d, BenchmarkSpec};
pub use error::{Error, Result};
pub use geometry::{BoundaryKind, BoundaryPatch, Domain, PointSet};
pub use history::{StepRecord, TrainHistory};
pub use loss::{discrete_loss, grad_loss, FieldPair, TrialFields};
pub use nn::{Activation, Network};
pub use pde::PdeProblem;
pub use solve::{solve, TrainConfig};
