//! Dictionary-based reduced order modeling for a desk-scale nonlinear
//! thermo-mechanical problem.
//!
//! The library builds, end to end, the pieces needed to run Monte-Carlo
//! uncertainty quantification on dual quantities of interest of a toy
//! turbine blade under uncertain thermal loading:
//!
//! * a procedural blade mesh and a high-fidelity crystal-plasticity
//!   finite-element solver ([`mesh`], [`material`], [`fem`]);
//! * a stochastic model of the temperature loading built from geodesic
//!   surface covariances and harmonic extensions ([`thermal`]);
//! * design-of-experiments generators and their mapping to loading
//!   coordinates ([`doe`]);
//! * snapshot-POD data compression, empirical-cubature operator
//!   compression and hyper-reduced Galerkin solves ([`pod`], [`ecm`],
//!   [`reduced`]);
//! * physics-informed clustering of the training set into a dictionary of
//!   local ROMs ([`cluster`]);
//! * automatic model recommendation by feature selection and elastic-net
//!   logistic regression ([`recommend`]);
//! * reconstruction of full dual fields from reduced-integration values
//!   ([`gappy`]);
//! * Monte-Carlo estimators, confidence intervals and validation error
//!   indicators ([`uq`]);
//! * a configuration format, an artifact store and the stage pipeline
//!   behind the `romnet` command-line interface ([`config`], [`store`],
//!   [`pipeline`]).

pub mod container;
pub mod doe;
pub mod ecm;
pub mod error;
pub mod fem;
pub mod gappy;
pub mod loading;
pub mod material;
pub mod mesh;
pub mod pod;
pub mod reduced;
pub mod tensor;
pub mod thermal;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
