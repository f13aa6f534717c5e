//! Phase-type frailty survival models.
//!
//! A frailty model multiplies a parametric baseline hazard by an unobserved
//! positive random effect. Taking the frailty to be phase-type distributed
//! gives closed-form survival, density, hazard, and conditional-expectation
//! formulas via matrix resolvents, while remaining dense in the class of all
//! frailty models. This crate provides:
//!
//! - [`phase_type`]: PH distributions, structured constructors, simulation
//! - [`baseline`]: constant, Gompertz, and power cumulative-hazard families
//! - [`frailty`]: the univariate PH frailty model and its functionals
//! - [`estimation`]: maximum likelihood by a nested EM under right-censoring
//! - [`multivariate`]: shared-frailty clusters and correlated bivariate frailty
//! - [`simulation`]: data generation and the Nelson–Aalen estimator
//! - [`cli`]: the command-line surface used by the `phfrailty` binary
//!
//! See the crate examples for one runnable program per capability.

pub mod baseline;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimation;
pub mod frailty;
pub mod matrix;
pub mod multivariate;
pub mod optimize;
pub mod phase_type;
pub mod quadrature;
pub mod simulation;

pub use baseline::BaselineHazard;
pub use data::{Dataset, Observation, StepFunction};
pub use error::{Error, Result};
pub use estimation::{fit, FitOptions, FitResult};
pub use frailty::{FrailtyModel, TailIndex};
pub use phase_type::{PhStructure, PhaseType};
