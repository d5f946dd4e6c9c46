//! Per-agent actors with centralized per-agent critics.

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};

use crate::agent::{
    local_obs, take, Agent, AgentConfig, AgentKind, FlatBatch, NamedParams, Role, Transition, UpdateStats,
};
use crate::buffer::ReplayBuffer;
use crate::noise::{perturb, OuNoise};
use crate::update::{actor_step, critic_step, evaluate, td_targets, CriticTerm, Trainable};

pub(crate) fn new_actors(cfg: &AgentConfig, rng: &mut ChaCha8Rng) -> [Trainable; 2] {
    Role::BOTH.map(|_| Trainable::new(cfg.actor_spec(Observation::AGENT_DIM, 2), cfg.actor_lr, rng))
}

/// Joint action rows from each actor's target on next observations.
pub(crate) fn target_joint_actions(actors: &[Trainable; 2], batch: &[&Transition]) -> Array2<f64> {
    let parts: Vec<Array2<f64>> = Role::BOTH
        .iter()
        .map(|role| {
            let a = &actors[role.index()];
            evaluate(&a.net, &a.target, &[local_obs(batch, *role, true)], &[]).remove(0)
        })
        .collect();
    concatenate![Axis(1), parts[0], parts[1]]
}

pub(crate) fn joint_act(
    actors: &[Trainable; 2],
    obs: &Observation,
    explore: bool,
    noise: &mut OuNoise,
    rng: &mut ChaCha8Rng,
) -> JointAction {
    let mut a = Vec::with_capacity(JointAction::DIM);
    for role in Role::BOTH {
        let actor = &actors[role.index()];
        let x = Array2::from_shape_vec((1, Observation::AGENT_DIM), role.obs(obs).to_vec()).expect("row");
        a.extend(actor.net.predict(&actor.params, &x, None).row(0).iter());
    }
    if explore {
        perturb(&mut a, noise, rng);
    }
    JointAction::from_slice(&a)
}

pub(crate) fn named<'a>(out: &mut Vec<NamedParams<'a>>, prefix: &str, t: &'a Trainable) {
    out.push(NamedParams {
        name: prefix.to_string(),
        spec: t.net.spec(),
        params: &t.params,
    });
    out.push(NamedParams {
        name: format!("{prefix}_target"),
        spec: t.net.spec(),
        params: &t.target,
    });
}

pub(crate) fn restore(t: &mut Trainable, named: &[(String, Vec<f64>)], prefix: &str) -> Result<(), String> {
    let p = take(named, prefix)?;
    let target = take(named, &format!("{prefix}_target"))?;
    if p.len() != t.params.len() || target.len() != t.params.len() {
        return Err(format!("network `{prefix}` has the wrong parameter count"));
    }
    t.load(p, target);
    Ok(())
}

pub struct MaddpgAgent {
    pub actors: [Trainable; 2],
    /// Critic `i` scores the joint state and action for agent `i`'s reward.
    pub critics: [Trainable; 2],
    cfg: AgentConfig,
    buffer: ReplayBuffer<Transition>,
    noise: OuNoise,
    rng: ChaCha8Rng,
}

impl MaddpgAgent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actors = new_actors(&cfg, &mut rng);
        let critics = Role::BOTH.map(|_| {
            Trainable::new(
                cfg.critic_spec(Observation::JOINT_DIM, JointAction::DIM),
                cfg.critic_lr,
                &mut rng,
            )
        });
        Self {
            actors,
            critics,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: OuNoise::new(JointAction::DIM, cfg.exploration.theta, cfg.exploration.sigma_start),
            rng,
            cfg,
        }
    }

    /// All critics, then all actors, then every target.
    pub fn update_with_batch(&mut self, batch: &[&Transition]) -> UpdateStats {
        let next_actions = target_joint_actions(&self.actors, batch);
        let mut stats = UpdateStats::default();
        let flat = FlatBatch::joint(batch, |r| r.global);
        let mask = [flat.mask()];
        let s = [flat.obs.clone()];
        let a = [flat.actions.clone()];

        for role in Role::BOTH {
            let critic = &mut self.critics[role.index()];
            let rewards = FlatBatch::joint(batch, |r| r.global + role.local_reward(r)).rewards;
            let q_next = evaluate(
                &critic.net,
                &critic.target,
                &[flat.next_obs.clone()],
                &[next_actions.clone()],
            );
            let y = td_targets(&[rewards], &[flat.not_done.clone()], &q_next, self.cfg.gamma);
            stats.critic_loss += critic_step(critic, &s, &a, &y, &mask) / 2.0;
        }
        for role in Role::BOTH {
            let term = CriticTerm {
                critic: &self.critics[role.index()],
                inputs: &s,
                joint_actions: Some(&a),
                offset: role.action_offset(),
                weight: 1.0,
            };
            let o = [local_obs(batch, role, false)];
            stats.actor_objective += actor_step(&mut self.actors[role.index()], &o, &[term], &mask) / 2.0;
        }
        for t in self.actors.iter_mut().chain(self.critics.iter_mut()) {
            t.soft_update(self.cfg.tau);
        }
        stats
    }
}

impl Agent for MaddpgAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Maddpg
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

    fn end_episode(&mut self) {}

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
        for role in Role::BOTH {
            named(&mut out, &format!("actor_{}", role.name()), &self.actors[role.index()]);
            named(
                &mut out,
                &format!("critic_{}", role.name()),
                &self.critics[role.index()],
            );
        }
        out
    }

    fn load_networks(&mut self, named: &[(String, Vec<f64>)]) -> Result<(), String> {
        for role in Role::BOTH {
            restore(&mut self.actors[role.index()], named, &format!("actor_{}", role.name()))?;
            restore(
                &mut self.critics[role.index()],
                named,
                &format!("critic_{}", role.name()),
            )?;
        }
        Ok(())
    }
}
