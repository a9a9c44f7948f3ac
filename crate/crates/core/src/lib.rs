//! Precise large-deviation asymptotics for the first passage time
//! `τ_u = inf{n : S_n > u}` of a random walk with negative drift, together
//! with exponentially tilted Monte Carlo estimators and a brute-force grid
//! oracle that check every asymptotic numerically.

pub mod asymptotics;
pub mod cgf;
pub mod error;
pub mod experiment;
pub mod models;
pub mod montecarlo;
pub mod oracle;
pub mod report;
pub mod rng;

pub use cgf::{build_profile, passage_query, PassageQuery, TiltProfile};
pub use error::{Error, Result};
pub use models::{IncrementModel, TiltedSampler};
