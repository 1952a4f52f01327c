//! Petrov-Galerkin variationally mimetic operator networks.
//!
//! A PG-VarMiON maps samples `F` of a forcing at sensor nodes to an
//! approximate PDE solution `u(x) = beta^T Phi(x)`, with `beta = A G F` and
//! `A_ik = N_i(x_k)` given by a small MLP `N` that learns the optimal
//! Petrov-Galerkin weighting functions. This crate holds the numerical core:
//! quadrature, trial bases, forcings, reference solvers, the network and
//! optimizer, the three operator models, training and error analysis.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod error;
pub mod field;
pub mod forcing;
pub mod io;
pub mod models;
pub mod nn;
pub mod problem;
pub mod quadrature;
pub mod reference;
pub mod rng;
pub mod training;

pub use basis::{MassMatrix, TrialBasis};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use forcing::ForcingSample;
pub use quadrature::QuadratureRule;
