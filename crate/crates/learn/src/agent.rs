//! Agent interface, hyperparameters and transition records.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use secnoma_core::{JointAction, Observation, RewardBundle};
use serde::{Deserialize, Serialize};

use crate::nn::NetSpec;
use crate::noise::ExplorationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ddpg,
    Maddpg,
    Masrddpg,
    Rdpg,
    Random,
}

impl AgentKind {
    pub const LEARNERS: [AgentKind; 4] = [AgentKind::Ddpg, AgentKind::Maddpg, AgentKind::Masrddpg, AgentKind::Rdpg];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ddpg => "ddpg",
            AgentKind::Maddpg => "maddpg",
            AgentKind::Masrddpg => "masrddpg",
            AgentKind::Rdpg => "rdpg",
            AgentKind::Random => "random",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ddpg" => Ok(AgentKind::Ddpg),
            "maddpg" => Ok(AgentKind::Maddpg),
            "masrddpg" => Ok(AgentKind::Masrddpg),
            "rdpg" => Ok(AgentKind::Rdpg),
            "random" => Ok(AgentKind::Random),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Target averaging rate.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// GRU state width for the recurrent learner.
    pub recurrent_width: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Episodes kept by the recurrent learner.
    pub episode_capacity: usize,
    /// Episodes per recurrent minibatch.
    pub episodes_per_batch: usize,
    /// Truncated history length for the recurrent learner.
    pub unroll: usize,
    /// Weight of the local critic in the single-reward learner's actor update.
    pub local_weight: f64,
    /// Local critics and actors of the single-reward learner update every
    /// this many episodes.
    pub local_update_every: usize,
    pub exploration: ExplorationConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 1e-3,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden_layers: 3,
            hidden_width: 64,
            recurrent_width: 32,
            batch_size: 64,
            buffer_capacity: 1_000_000,
            episode_capacity: 10_000,
            episodes_per_batch: 8,
            unroll: 8,
            local_weight: 1.0,
            local_update_every: 1,
            exploration: ExplorationConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("hidden_layers", self.hidden_layers),
            ("hidden_width", self.hidden_width),
            ("recurrent_width", self.recurrent_width),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("episode_capacity", self.episode_capacity),
            ("episodes_per_batch", self.episodes_per_batch),
            ("unroll", self.unroll),
            ("local_update_every", self.local_update_every),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.batch_size > self.buffer_capacity {
            return Err("batch_size exceeds buffer_capacity".into());
        }
        if self.episodes_per_batch > self.episode_capacity {
            return Err("episodes_per_batch exceeds episode_capacity".into());
        }
        if !self.local_weight.is_finite() || self.local_weight < 0.0 {
            return Err("local_weight must be non-negative".into());
        }
        let e = &self.exploration;
        if !(e.sigma_start >= 0.0 && e.sigma_end >= 0.0 && e.theta >= 0.0 && e.decay_fraction >= 0.0) {
            return Err("exploration parameters must be non-negative".into());
        }
        Ok(())
    }

    pub fn actor_spec(&self, input: usize, output: usize) -> NetSpec {
        NetSpec::actor(input, output, self.hidden_layers, self.hidden_width)
    }

    pub fn critic_spec(&self, input: usize, action: usize) -> NetSpec {
        NetSpec::critic(input, action, self.hidden_layers, self.hidden_width)
    }
}

/// One joint step. Per-agent views are projections of this record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: JointAction,
    pub reward: RewardBundle,
    pub next_obs: Observation,
    /// No bootstrapping past this step.
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Parameters of one network, for checkpoints and health checks.
pub struct NamedParams<'a> {
    pub name: String,
    pub spec: &'a NetSpec,
    pub params: &'a [f64],
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    /// Called before the first slot; `progress` is the fraction of training
    /// already done.
    fn begin_episode(&mut self, progress: f64);

    /// Deterministic when `explore` is false.
    fn act(&mut self, obs: &Observation, explore: bool) -> JointAction;

    fn record(&mut self, transition: Transition);

    fn end_episode(&mut self);

    /// Enough data stored to sample an update.
    fn ready(&self) -> bool;

    fn update(&mut self) -> Option<UpdateStats>;

    fn networks(&self) -> Vec<NamedParams<'_>>;

    /// Restores networks saved by [`Agent::networks`].
    fn load_networks(&mut self, named: &[(String, Vec<f64>)]) -> Result<(), String>;
}

/// `n x dim` matrix filled row by row.
pub fn rows<F: FnMut(usize, &mut [f64])>(n: usize, dim: usize, mut fill: F) -> Array2<f64> {
    let mut m = Array2::zeros((n, dim));
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        fill(i, row.as_slice_mut().expect("standard layout"));
    }
    m
}

/// Joint minibatch matrices, one row per transition.
pub struct FlatBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub not_done: Array2<f64>,
}

impl FlatBatch {
    pub fn joint<F: Fn(&RewardBundle) -> f64>(batch: &[&Transition], reward: F) -> Self {
        let n = batch.len();
        Self {
            obs: rows(n, Observation::JOINT_DIM, |i, r| {
                r.copy_from_slice(&batch[i].obs.joint())
            }),
            actions: rows(n, JointAction::DIM, |i, r| {
                r.copy_from_slice(&batch[i].action.to_array())
            }),
            rewards: rows(n, 1, |i, r| r[0] = reward(&batch[i].reward)),
            next_obs: rows(n, Observation::JOINT_DIM, |i, r| {
                r.copy_from_slice(&batch[i].next_obs.joint())
            }),
            not_done: rows(n, 1, |i, r| r[0] = if batch[i].terminal { 0.0 } else { 1.0 }),
        }
    }

    pub fn mask(&self) -> Array2<f64> {
        Array2::ones((self.obs.nrows(), 1))
    }
}

/// Which agent's slice of observations and actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Pap,
    Sap,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Pap, Role::Sap];

    pub fn obs(self, o: &Observation) -> [f64; 3] {
        match self {
            Role::Pap => o.pap,
            Role::Sap => o.sap,
        }
    }

    pub fn action(self, a: &JointAction) -> [f64; 2] {
        match self {
            Role::Pap => a.pap,
            Role::Sap => a.sap,
        }
    }

    pub fn local_reward(self, r: &RewardBundle) -> f64 {
        match self {
            Role::Pap => r.pap,
            Role::Sap => r.sap,
        }
    }

    /// Column offset of this agent's action inside a joint action row.
    pub fn action_offset(self) -> usize {
        match self {
            Role::Pap => 0,
            Role::Sap => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Pap => "pap",
            Role::Sap => "sap",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Role::Pap => 0,
            Role::Sap => 1,
        }
    }
}

/// Local observations of one agent over a batch.
pub fn local_obs(batch: &[&Transition], role: Role, next: bool) -> Array2<f64> {
    rows(batch.len(), Observation::AGENT_DIM, |i, r| {
        let o = if next { &batch[i].next_obs } else { &batch[i].obs };
        r.copy_from_slice(&role.obs(o));
    })
}

pub fn local_actions(batch: &[&Transition], role: Role) -> Array2<f64> {
    rows(batch.len(), 2, |i, r| r.copy_from_slice(&role.action(&batch[i].action)))
}

/// Finds `name` in a list of saved networks.
pub(crate) fn take<'a>(named: &'a [(String, Vec<f64>)], name: &str) -> Result<&'a [f64], String> {
    named
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, p)| p.as_slice())
        .ok_or_else(|| format!("checkpoint has no network `{name}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trip() {
        for k in [
            AgentKind::Ddpg,
            AgentKind::Maddpg,
            AgentKind::Masrddpg,
            AgentKind::Rdpg,
            AgentKind::Random,
        ] {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("ppo".parse::<AgentKind>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig {
            gamma: 1.0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
