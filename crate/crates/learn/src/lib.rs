//! Neural actor-critic learners for the two-agent secrecy environment.

pub mod agent;
pub mod buffer;
pub mod checkpoint;
pub mod ddpg;
pub mod maddpg;
pub mod masrddpg;
pub mod nn;
pub mod noise;
pub mod optim;
pub mod random;
pub mod rdpg;
pub mod train;
pub mod update;

pub use agent::{Agent, AgentConfig, AgentKind, Transition, UpdateStats};
pub use ddpg::{DdpgAgent, DdpgCore, SequenceBatch};
pub use maddpg::MaddpgAgent;
pub use masrddpg::MasrddpgAgent;
pub use noise::ExplorationConfig;
pub use random::RandomAgent;
pub use rdpg::RdpgAgent;
pub use train::{build_agent, evaluate, train, EpisodeMetrics, TrainConfig, TrainError};
