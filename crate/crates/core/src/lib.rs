//! Desk-scale AutoML for global time-series forecasting.
//!
//! Searches a hierarchical space of neural forecasting pipelines with a
//! random-forest surrogate and multi-fidelity scheduling, combines the best
//! pipelines into a greedy ensemble, and attributes loss variance to
//! hyperparameters.

pub mod clock;
pub mod configspace;
pub mod dataset;
pub mod ensemble;
pub mod evaluation;
pub mod fidelity;
pub mod history;
pub mod importance;
pub mod metrics;
pub mod sampling;
pub mod surrogate;
pub mod synthetic;
pub mod zoo;
