//! Multi-agent learner with a single global reward: one centralized global
//! critic plus a local critic per agent on that agent's own reward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};

use crate::agent::{
    local_actions, local_obs, Agent, AgentConfig, AgentKind, FlatBatch, NamedParams, Role, Transition, UpdateStats,
};
use crate::buffer::ReplayBuffer;
use crate::maddpg::{joint_act, named, new_actors, restore, target_joint_actions};
use crate::noise::OuNoise;
use crate::update::{actor_step, critic_step, evaluate, td_targets, CriticTerm, Trainable};

pub struct MasrddpgAgent {
    pub actors: [Trainable; 2],
    /// Scores the joint observation and both actions on the global reward.
    pub global_critic: Trainable,
    /// Local critic `i` scores agent `i`'s own observation and action.
    pub local_critics: [Trainable; 2],
    cfg: AgentConfig,
    buffer: ReplayBuffer<Transition>,
    noise: OuNoise,
    rng: ChaCha8Rng,
    episode: usize,
}

impl MasrddpgAgent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actors = new_actors(&cfg, &mut rng);
        let global_critic = Trainable::new(
            cfg.critic_spec(Observation::JOINT_DIM, JointAction::DIM),
            cfg.critic_lr,
            &mut rng,
        );
        let local_critics =
            Role::BOTH.map(|_| Trainable::new(cfg.critic_spec(Observation::AGENT_DIM, 2), cfg.critic_lr, &mut rng));
        Self {
            actors,
            global_critic,
            local_critics,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: OuNoise::new(JointAction::DIM, cfg.exploration.theta, cfg.exploration.sigma_start),
            rng,
            cfg,
            episode: 0,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Whether the local networks update during the current episode.
    pub fn local_turn(&self) -> bool {
        self.episode % self.cfg.local_update_every == 0
    }

    /// Global critic and its target first; then, on local turns, each
    /// agent's local critic, actor and their targets.
    pub fn update_with_batch(&mut self, batch: &[&Transition]) -> UpdateStats {
        let next_actions = target_joint_actions(&self.actors, batch);
        let flat = FlatBatch::joint(batch, |r| r.global);
        let mask = [flat.mask()];
        let s = [flat.obs.clone()];
        let a = [flat.actions.clone()];
        let not_done = [flat.not_done.clone()];

        let g = &mut self.global_critic;
        let q_next = evaluate(&g.net, &g.target, &[flat.next_obs.clone()], &[next_actions]);
        let y = td_targets(&[flat.rewards.clone()], &not_done, &q_next, self.cfg.gamma);
        let mut stats = UpdateStats {
            critic_loss: critic_step(g, &s, &a, &y, &mask),
            actor_objective: 0.0,
        };
        g.soft_update(self.cfg.tau);

        if !self.local_turn() {
            return stats;
        }
        for role in Role::BOTH {
            let i = role.index();
            let o = [local_obs(batch, role, false)];
            let o_next = [local_obs(batch, role, true)];
            let a_local = [local_actions(batch, role)];
            let r_local = FlatBatch::joint(batch, |r| role.local_reward(r)).rewards;

            let actor = &self.actors[i];
            let local = &mut self.local_critics[i];
            let next_local = evaluate(&actor.net, &actor.target, &o_next, &[]);
            let q_next = evaluate(&local.net, &local.target, &o_next, &next_local);
            let y = td_targets(&[r_local], &not_done, &q_next, self.cfg.gamma);
            critic_step(local, &o, &a_local, &y, &mask);

            let terms = [
                CriticTerm {
                    critic: &self.global_critic,
                    inputs: &s,
                    joint_actions: Some(&a),
                    offset: role.action_offset(),
                    weight: 1.0,
                },
                CriticTerm {
                    critic: &self.local_critics[i],
                    inputs: &o,
                    joint_actions: None,
                    offset: 0,
                    weight: self.cfg.local_weight,
                },
            ];
            stats.actor_objective += actor_step(&mut self.actors[i], &o, &terms, &mask) / 2.0;
            self.actors[i].soft_update(self.cfg.tau);
            self.local_critics[i].soft_update(self.cfg.tau);
        }
        stats
    }
}

impl Agent for MasrddpgAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Masrddpg
    }

    fn begin_episode(&mut self, progress: f64) {
        self.noise.reset();
        self.noise.set_sigma(self.cfg.exploration.sigma_at(progress));
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> JointAction {
        joint_act(&self.actors, obs, explore, &mut self.noise, &mut self.rng)
    }

    fn record(&mut self, transition: Transition) {
        self.buffer.push(transition);
    }

    fn end_episode(&mut self) {
        self.episode += 1;
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch_size
    }

    fn update(&mut self) -> Option<UpdateStats> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.rng).ok()?;
        let batch: Vec<Transition> = idx
            .iter()
            .map(|i| *self.buffer.get(*i).expect("sampled index"))
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        Some(self.update_with_batch(&refs))
    }

    fn networks(&self) -> Vec<NamedParams<'_>> {
        let mut out = Vec::new();
        named(&mut out, "critic_global", &self.global_critic);
        for role in Role::BOTH {
            named(&mut out, &format!("actor_{}", role.name()), &self.actors[role.index()]);
            named(
                &mut out,
                &format!("critic_{}", role.name()),
                &self.local_critics[role.index()],
            );
        }
        out
    }

    fn load_networks(&mut self, named: &[(String, Vec<f64>)]) -> Result<(), String> {
        restore(&mut self.global_critic, named, "critic_global")?;
        for role in Role::BOTH {
            restore(&mut self.actors[role.index()], named, &format!("actor_{}", role.name()))?;
            restore(
                &mut self.local_critics[role.index()],
                named,
                &format!("critic_{}", role.name()),
            )?;
        }
        Ok(())
    }
}
