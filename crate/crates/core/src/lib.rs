//! Generalized estimation: estimators as functions on the parameter space,
//! their Λ-information against the Fisher bound, nuisance orthogonalization,
//! score-inversion confidence sets, and the exact/Monte Carlo experiments
//! built on them (location-estimator comparison, odds-ratio interval coverage).

pub mod error;
pub mod estimation;
pub mod expectation;
pub mod family;
pub mod intervals;
pub mod linalg;
pub mod location_lab;
pub mod odds_ratio;
pub mod rng;
pub mod roots;

pub use error::{Error, Result};
pub use expectation::{Draws, EngineMode, Expectation, ExpectationEngine};
pub use family::{FisherInfo, ModelFamily, ParamPoint};
