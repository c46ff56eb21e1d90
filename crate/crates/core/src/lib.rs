//! Joint pair selection and pair trading as one hierarchical
//! reinforcement-learning problem.
//!
//! A manager policy picks an asset pair from a formation window; a worker
//! policy trades that pair; the worker's profit on the following trading
//! window is the manager's reward. Classical selection baselines, a
//! fixed-threshold trader and the usual backtest metrics sit alongside.
//!
//! The differentiable parts are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the element type to `f64`, which is what the training
//! loop and the command-line tool use.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod encoder;
pub mod env;
pub mod error;
pub mod harness;
pub mod manager;
pub mod metrics;
pub mod numerics;
pub mod scalar;
pub mod trainer;
pub mod worker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = numerics::Tensor<f64>;
pub type Graph = numerics::Graph<f64>;
pub type ParameterStore = numerics::ParameterStore<f64>;
pub type EncoderParams = encoder::EncoderParams;
pub type WorkerNet = worker::WorkerNet<f64>;
pub type ManagerNet = manager::ManagerNet<f64>;

pub type Tensor32 = numerics::Tensor<f32>;
pub type Graph32 = numerics::Graph<f32>;
pub type ParameterStore32 = numerics::ParameterStore<f32>;
pub type WorkerNet32 = worker::WorkerNet<f32>;
pub type ManagerNet32 = manager::ManagerNet<f32>;
