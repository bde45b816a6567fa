//! Survival analysis for recurrent events.
//!
//! The crate is organised around record spells (see [`data`]): product-limit
//! estimators and the log-rank test live in [`nonparametric`], the gamma
//! frailty estimator in [`frailty`], recurrent-event Cox models in [`cox`],
//! the discrete-time logistic hazard model in [`logistic`], the end-to-end
//! analysis pipeline in [`workflow`], forecasts in [`prediction`] and a
//! seeded data generator in [`simulate`].

pub mod cox;
pub mod data;
pub mod error;
pub mod frailty;
mod linalg;
pub mod logistic;
pub mod nonparametric;
pub mod prediction;
pub mod simulate;
pub mod workflow;

pub use error::{Error, Result};
