//! Deploying offline-trained RL models under a supervising expert.
//!
//! The crate covers the whole pipeline on three small built-in environments
//! (`grid5`, `queue2`, `pointmass`):
//!
//! * [`env`]: the environments, an exact value-iteration solver and the
//!   oracle experts that stand in for the human supervisor.
//! * [`approx`]: tabular and MLP value functions / actors with exact
//!   gradients, an adaptive-moment optimizer and finite-difference checks.
//! * [`offline`]: ε-greedy dataset collection and conservative offline
//!   training over a grid of penalty scales.
//! * [`scoring`]: supervised rollouts, the online score and an exact
//!   expected-score oracle.
//! * [`select`]: UCB model selection, the baseline selectors and regret.
//! * [`finetune`]: deployment with expert overrides and online fine-tuning.
//! * [`harness`]: configuration, persistence, CSV traces and the end-to-end
//!   experiment protocol.
//!
//! Numerical building blocks are generic over [`Scalar`]; the pipeline
//! itself runs in `f64` through the aliases below.

pub mod approx;
pub mod env;
pub mod error;
pub mod finetune;
pub mod harness;
pub mod offline;
pub mod scalar;
pub mod scoring;
pub mod seeds;
pub mod select;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TabularQ64 = approx::TabularQ<f64>;
pub type TabularQ32 = approx::TabularQ<f32>;
pub type Mlp64 = approx::Mlp<f64>;
pub type Mlp32 = approx::Mlp<f32>;
pub type MlpQ64 = approx::MlpQ<f64>;
pub type MlpQ32 = approx::MlpQ<f32>;
pub type MlpActor64 = approx::MlpActor<f64>;
pub type MlpActor32 = approx::MlpActor<f32>;
pub type QModel64 = approx::QModel<f64>;
pub type OptimState64 = approx::OptimState<f64>;
pub type OptimState32 = approx::OptimState<f32>;
