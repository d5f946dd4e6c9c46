//! Recurrent deterministic policy gradient over truncated histories.
//!
//! The network input at step `t` is `[o_t, a_{t-1}]` with a zero action before
//! the first slot, so the GRU state after step `t` summarizes the history up
//! to `o_t`. Training windows of at most `unroll` steps start from a zero
//! state, and acting uses the same truncation.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};

use crate::agent::{rows, Agent, AgentConfig, AgentKind, NamedParams, Transition, UpdateStats};
use crate::buffer::ReplayBuffer;
use crate::ddpg::{DdpgCore, SequenceBatch};
use crate::noise::{perturb, OuNoise};

pub const INPUT_DIM: usize = Observation::JOINT_DIM + JointAction::DIM;

/// Network input for an observation and the action taken before it.
pub fn history_input(obs: &Observation, prev: Option<&JointAction>) -> [f64; INPUT_DIM] {
    let mut x = [0.0; INPUT_DIM];
    x[..Observation::JOINT_DIM].copy_from_slice(&obs.joint());
    if let Some(a) = prev {
        x[Observation::JOINT_DIM..].copy_from_slice(&a.to_array());
    }
    x
}

pub type EpisodeHistory = Vec<Transition>;

/// Builds a window batch: episode `k` contributes steps
/// `starts[k] .. starts[k] + len`, padded with masked zeros past its end.
pub fn window_batch(episodes: &[&EpisodeHistory], starts: &[usize], len: usize) -> SequenceBatch {
    let m = episodes.len();
    let step = |t: usize| -> Vec<Option<(&EpisodeHistory, usize)>> {
        episodes
            .iter()
            .zip(starts)
            .map(|(ep, s)| {
                let i = s + t;
                (i < ep.len()).then_some((*ep, i))
            })
            .collect()
    };
    let mut batch = SequenceBatch {
        inputs: Vec::with_capacity(len),
        actions: Vec::with_capacity(len),
        rewards: Vec::with_capacity(len),
        next_inputs: Vec::with_capacity(len),
        not_done: Vec::with_capacity(len),
        mask: Vec::with_capacity(len),
    };
    for t in 0..len {
        let at = step(t);
        batch.inputs.push(rows(m, INPUT_DIM, |k, r| {
            if let Some((ep, i)) = at[k] {
                let prev = i.checked_sub(1).map(|j| &ep[j].action);
                r.copy_from_slice(&history_input(&ep[i].obs, prev));
            }
        }));
        batch.actions.push(rows(m, JointAction::DIM, |k, r| {
            if let Some((ep, i)) = at[k] {
                r.copy_from_slice(&ep[i].action.to_array());
            }
        }));
        batch.rewards.push(rows(m, 1, |k, r| {
            if let Some((ep, i)) = at[k] {
                r[0] = ep[i].reward.global;
            }
        }));
        batch.next_inputs.push(rows(m, INPUT_DIM, |k, r| {
            if let Some((ep, i)) = at[k] {
                r.copy_from_slice(&history_input(&ep[i].next_obs, Some(&ep[i].action)));
            }
        }));
        batch.not_done.push(rows(m, 1, |k, r| {
            if let Some((ep, i)) = at[k] {
                r[0] = if ep[i].terminal { 0.0 } else { 1.0 };
            }
        }));
        batch
            .mask
            .push(rows(m, 1, |k, r| r[0] = if at[k].is_some() { 1.0 } else { 0.0 }));
    }
    batch
}

pub struct RdpgAgent {
    pub core: DdpgCore,
    cfg: AgentConfig,
    episodes: ReplayBuffer<EpisodeHistory>,
    current: EpisodeHistory,
    /// Inputs of the current episode, most recent last, at most `unroll - 1`.
    recent: VecDeque<[f64; INPUT_DIM]>,
    prev_action: Option<JointAction>,
    noise: OuNoise,
    rng: ChaCha8Rng,
}

impl RdpgAgent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core = DdpgCore::new(
            cfg.actor_spec(INPUT_DIM, JointAction::DIM)
                .with_recurrent(cfg.recurrent_width),
            cfg.critic_spec(INPUT_DIM, JointAction::DIM)
                .with_recurrent(cfg.recurrent_width),
            &cfg,
            &mut rng,
        );
        Self {
            core,
            episodes: ReplayBuffer::new(cfg.episode_capacity),
            current: Vec::new(),
            recent: VecDeque::new(),
            prev_action: None,
            noise: OuNoise::new(JointAction::DIM, cfg.exploration.theta, cfg.exploration.sigma_start),
            rng,
            cfg,
        }
    }

    pub fn episodes(&self) -> &ReplayBuffer<EpisodeHistory> {
        &self.episodes
    }

    /// Samples `episodes_per_batch` distinct episodes and a random window of
    /// each.
    pub fn sample_batch(&mut self) -> Option<SequenceBatch> {
        let idx = self
            .episodes
            .sample_indices(self.cfg.episodes_per_batch, &mut self.rng)
            .ok()?;
        let eps: Vec<&EpisodeHistory> = idx
            .iter()
            .map(|i| self.episodes.get(*i).expect("sampled index"))
            .collect();
        let longest = eps.iter().map(|e| e.len()).max().unwrap_or(0);
        let len = self.cfg.unroll.min(longest);
        if len == 0 {
            return None;
        }
        let starts: Vec<usize> = eps
            .iter()
            .map(|e| {
                if e.len() > len {
                    self.rng.random_range(0..=e.len() - len)
                } else {
                    0
                }
            })
            .collect();
        Some(window_batch(&eps, &starts, len))
    }
}

impl Agent for RdpgAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Rdpg
    }

    fn begin_episode(&mut self, progress: f64) {
        self.noise.reset();
        self.noise.set_sigma(self.cfg.exploration.sigma_at(progress));
        self.current.clear();
        self.recent.clear();
        self.prev_action = None;
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> JointAction {
        let x = history_input(obs, self.prev_action.as_ref());
        let inputs: Vec<Array2<f64>> = self
            .recent
            .iter()
            .chain(std::iter::once(&x))
            .map(|v| Array2::from_shape_vec((1, INPUT_DIM), v.to_vec()).expect("row"))
            .collect();
        let mut a = self.core.policy(&inputs);
        if explore {
            perturb(&mut a, &mut self.noise, &mut self.rng);
        }
        JointAction::from_slice(&a)
    }

    fn record(&mut self, transition: Transition) {
        let x = history_input(&transition.obs, self.prev_action.as_ref());
        if self.cfg.unroll > 1 {
            if self.recent.len() == self.cfg.unroll - 1 {
                self.recent.pop_front();
            }
            self.recent.push_back(x);
        }
        self.prev_action = Some(transition.action);
        self.current.push(transition);
    }

    fn end_episode(&mut self) {
        if !self.current.is_empty() {
            self.episodes.push(std::mem::take(&mut self.current));
        }
    }

    fn ready(&self) -> bool {
        self.episodes.len() >= self.cfg.episodes_per_batch
    }

    fn update(&mut self) -> Option<UpdateStats> {
        let batch = self.sample_batch()?;
        Some(self.core.update(&batch))
    }

    fn networks(&self) -> Vec<NamedParams<'_>> {
        self.core.networks()
    }

    fn load_networks(&mut self, named: &[(String, Vec<f64>)]) -> Result<(), String> {
        self.core.load_networks(named)
    }
}
