//! Deterministic simulator for federated tabular Q-learning across
//! heterogeneous MDPs.
//!
//! The numeric core ([`env`], [`agent`], [`federation`], [`experiment`]) is
//! generic over the [`Scalar`] type; the aliases below fix it to `f64` or
//! `f32`.

pub mod agent;
pub mod cli;
pub mod env;
pub mod experiment;
pub mod federation;
pub mod rng;
pub mod scalar;

pub use scalar::Scalar;

pub type QTable64 = agent::QTable<f64>;
pub type QTable32 = agent::QTable<f32>;
pub type MdpSpec64 = env::MdpSpec<f64>;
pub type MdpSpec32 = env::MdpSpec<f32>;
pub type Agent64 = agent::Agent<f64>;
pub type Agent32 = agent::Agent<f32>;
pub type PMatrix64 = federation::PMatrix<f64>;
pub type PMatrix32 = federation::PMatrix<f32>;
pub type FederationConfig64 = federation::FederationConfig<f64>;
