//! Competing SIS epidemics on directed graphs.
//!
//! Two viruses spread over the same population; each node is susceptible,
//! infected by virus 1, or infected by virus 2. The crate provides
//!
//! * [`netstruct`]: graphs, infection matrices and irreducibility checks,
//! * [`spectral`]: Perron roots of Metzler matrices and a dense eigen solver,
//! * [`dynamics`]: the mean-field vector fields and a domain-preserving RK4,
//! * [`equilibria`]: epidemic states, Jacobians and stability labels,
//! * [`markov`]: the exact `3^n`-state chain and the mean-field error,
//! * [`sensitivity`]: first-order response of the epidemic state to rates,
//! * [`control`]: constant-rate and proportional healing controllers.
//!
//! Arc convention: entry `(i, j)` of any adjacency or infection matrix is the
//! rate at which node `i` is infected by node `j`.

pub mod control;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod markov;
pub mod netstruct;
pub mod sensitivity;
pub mod spectral;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
