//! Storage arbitrage against forecast marginal value curves, with an online
//! conformal controller that widens the idle band when forecasts are unreliable.

pub mod baselines;
pub mod conformal;
pub mod dispatch;
pub mod domain;
pub mod error;
pub mod forecaster;
pub mod harness;
pub mod stats;
pub mod valuefn;

pub use error::{Error, Result};
