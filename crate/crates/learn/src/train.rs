//! Episode loop: act, step, store, update, with a divergence guard.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{Constraint, EnvConfig, EnvError, Environment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentKind, Transition};
use crate::ddpg::DdpgAgent;
use crate::maddpg::MaddpgAgent;
use crate::masrddpg::MasrddpgAgent;
use crate::random::RandomAgent;
use crate::rdpg::RdpgAgent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("network `{network}` has non-finite parameters after episode {episode}")]
    Diverged { episode: usize, network: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Gradient updates run every this many environment steps once the agent
    /// has enough data.
    pub update_every: usize,
    /// Updates per round.
    pub updates_per_round: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            update_every: 10,
            updates_per_round: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 {
            return Err("episodes must be at least 1".into());
        }
        if self.update_every == 0 {
            return Err("update_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-episode summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub slots: usize,
    /// Mean per-slot secrecy rate under the active model, bit/s/Hz.
    pub avg_secrecy_rate: f64,
    /// Mean per-slot energy under the active model, J.
    pub energy_consumption: f64,
    /// Sum over slots of the log secrecy-to-energy ratio.
    pub pfee: f64,
    /// Mean per-slot global reward.
    pub mean_reward: f64,
    pub true_secrecy_rate: f64,
    pub true_energy_consumption: f64,
    /// Slots in which each constraint was flagged.
    pub violations: [usize; 7],
    pub depleted: bool,
    /// Gradient updates performed during the episode.
    pub updates: usize,
}

pub fn build_agent(kind: AgentKind, cfg: &AgentConfig, seed: u64) -> Box<dyn Agent> {
    match kind {
        AgentKind::Ddpg => Box::new(DdpgAgent::new(*cfg, seed)),
        AgentKind::Maddpg => Box::new(MaddpgAgent::new(*cfg, seed)),
        AgentKind::Masrddpg => Box::new(MasrddpgAgent::new(*cfg, seed)),
        AgentKind::Rdpg => Box::new(RdpgAgent::new(*cfg, seed)),
        AgentKind::Random => Box::new(RandomAgent::new(seed)),
    }
}

/// Runs one episode. Learning happens only when `learn` is set; otherwise
/// the agent acts greedily and nothing is stored.
pub fn run_episode(
    env: &mut Environment,
    agent: &mut dyn Agent,
    episode: usize,
    env_seed: u64,
    progress: f64,
    learn: Option<&TrainConfig>,
    step_counter: &mut usize,
) -> Result<EpisodeMetrics, TrainError> {
    agent.begin_episode(progress);
    let mut obs = env.reset(env_seed);
    let mut m = EpisodeMetrics {
        episode,
        slots: 0,
        avg_secrecy_rate: 0.0,
        energy_consumption: 0.0,
        pfee: 0.0,
        mean_reward: 0.0,
        true_secrecy_rate: 0.0,
        true_energy_consumption: 0.0,
        violations: [0; 7],
        depleted: false,
        updates: 0,
    };
    loop {
        let action = agent.act(&obs, learn.is_some());
        let out = env.step(&action)?;
        let info = &out.info;
        m.slots += 1;
        m.avg_secrecy_rate += info.model_secrecy;
        m.energy_consumption += info.model_energy;
        m.pfee += out.reward.global;
        m.true_secrecy_rate += info.true_secrecy;
        m.true_energy_consumption += info.true_energy;
        for c in Constraint::ALL {
            if info.violations.contains(c) {
                m.violations[c.index()] += 1;
            }
        }
        m.depleted |= info.depleted;

        if let Some(tc) = learn {
            agent.record(Transition {
                obs,
                action,
                reward: out.reward,
                next_obs: out.observation,
                terminal: out.terminal,
            });
            *step_counter += 1;
            if agent.ready() && *step_counter % tc.update_every == 0 {
                for _ in 0..tc.updates_per_round {
                    if agent.update().is_some() {
                        m.updates += 1;
                    }
                }
            }
        }
        obs = out.observation;
        if out.done {
            break;
        }
    }
    agent.end_episode();
    let n = m.slots as f64;
    m.avg_secrecy_rate /= n;
    m.energy_consumption /= n;
    m.mean_reward = m.pfee / n;
    m.true_secrecy_rate /= n;
    m.true_energy_consumption /= n;
    Ok(m)
}

/// Seeds for the environment in each episode, derived from the run seed.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_e9150de5);
    (0..episodes).map(|_| rng.random()).collect()
}

pub fn check_finite(agent: &dyn Agent, episode: usize) -> Result<(), TrainError> {
    for n in agent.networks() {
        if n.params.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::Diverged {
                episode,
                network: n.name,
            });
        }
    }
    Ok(())
}

/// Trains `agent` for `cfg.episodes` episodes and returns one summary per
/// episode. `on_episode` sees each summary as soon as it is ready.
pub fn train(
    env_config: &EnvConfig,
    agent: &mut dyn Agent,
    cfg: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<Vec<EpisodeMetrics>, TrainError> {
    cfg.validate().map_err(|e| TrainError::Env(EnvError::Config(e)))?;
    let mut env = Environment::new(*env_config)?;
    let seeds = episode_seeds(seed, cfg.episodes);
    let mut steps = 0;
    let mut trace = Vec::with_capacity(cfg.episodes);
    for (ep, s) in seeds.into_iter().enumerate() {
        let progress = ep as f64 / cfg.episodes as f64;
        let m = run_episode(&mut env, agent, ep, s, progress, Some(cfg), &mut steps)?;
        check_finite(agent, ep)?;
        on_episode(&m);
        trace.push(m);
    }
    Ok(trace)
}

/// Greedy roll-outs without learning.
pub fn evaluate(
    env_config: &EnvConfig,
    agent: &mut dyn Agent,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>, TrainError> {
    let mut env = Environment::new(*env_config)?;
    let mut steps = 0;
    episode_seeds(seed, episodes)
        .into_iter()
        .enumerate()
        .map(|(ep, s)| run_episode(&mut env, agent, ep, s, 1.0, None, &mut steps))
        .collect()
}
