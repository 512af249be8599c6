//! Presentation-bias simulation and counterfactual label augmentation.

pub mod analysis;
pub mod augment;
pub mod baselines;
pub mod bias;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod task;
pub mod train;

pub use error::{Error, Result};
