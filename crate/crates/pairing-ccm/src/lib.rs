//! Coupled-cluster methods for the single-shell pairing model.
//!
//! The crate implements, solves and cross-validates several coupled-cluster
//! parameterizations of seniority-zero pairing states: the extended CCM in
//! particle pair operators, the quasiparticle (Brueckner) ECCM and NCCM, and
//! the maximum-overlap restriction. On top of the stationary points it
//! offers particle-number-fluctuation diagnostics, multistart branch
//! enumeration, pseudo-arclength continuation through folds, and the
//! harmonic (RPA) stability spectrum, all checked against an exact
//! diagonalization of the seniority-zero sector.

pub mod dual;
pub mod functional;
pub mod oracle;
pub mod quasispin;
pub mod rpa;
pub mod solver;

pub use dual::{Dual, Dual2, Ring};
pub use functional::{
    AmplitudeVector, Gauge, Observables, Scheme, SchemeConfig,
};
pub use quasispin::{build_pair_operators, moment, ModelParams, OpMatrix, PairOperatorSet};
pub use solver::{Branch, SolutionPoint, SolverSettings};
