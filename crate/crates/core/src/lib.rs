//! Joint user clustering and base-station association for uplink NOMA
//! networks, learned with tabular SARSA or a deep Q-network.
//!
//! The crate is generic over the scalar type; the aliases below pin the
//! common choices.

pub mod adam;
pub mod baselines;
pub mod dqn;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod mlp;
pub mod network;
pub mod replay;
pub mod sarsa;
pub mod scalar;

pub use error::{Error, Result};
pub use mdp::{action_catalog, EpisodeMetrics, Environment, EnvState, SwapAction};
pub use network::{
    instantaneous_sum_rate, validate, AssociationState, ClusterSnapshot, Constraint, NetworkConfig,
    Occupancy, RateReport, ResourceBlock, UserId, UserTerminal,
};
pub use scalar::Real;

pub type NetworkConfig64 = NetworkConfig<f64>;
pub type NetworkConfig32 = NetworkConfig<f32>;
pub type Environment64 = Environment<f64>;
pub type Environment32 = Environment<f32>;
pub type QTable64 = sarsa::QTable<f64>;
pub type QTable32 = sarsa::QTable<f32>;
pub type Mlp64 = mlp::Mlp<f64>;
pub type Mlp32 = mlp::Mlp<f32>;
pub type DqnAgent64 = dqn::DqnAgent<f64>;
pub type DqnAgent32 = dqn::DqnAgent<f32>;
