//! Continuous-time survival prediction with Cox-type models.
//!
//! The crate covers classical Cox regression, neural relative-risk models
//! trained with a case-control sampled partial likelihood (proportional and
//! time-dependent "Cox-Time"), a discrete-time DeepHit baseline,
//! inverse-censoring weighted evaluation metrics, closed-form simulation
//! scenarios and K-means clustering of survival curves.

pub mod cluster;
pub mod cox;
pub mod curves;
pub mod dataset;
pub mod deephit;
pub mod error;
pub mod metrics;
pub mod net;
pub mod neural;
pub mod sim;

pub use error::{Error, Result};
