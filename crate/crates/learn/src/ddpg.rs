//! Single-agent DDPG over the joint observation, and the sequence-generic
//! actor-critic core it shares with the recurrent learner.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};

use crate::agent::{take, Agent, AgentConfig, AgentKind, FlatBatch, NamedParams, Transition, UpdateStats};
use crate::buffer::ReplayBuffer;
use crate::nn::NetSpec;
use crate::noise::{perturb, OuNoise};
use crate::update::{actor_step, critic_loss, critic_step, evaluate, td_targets, CriticTerm, Trainable};

/// Minibatch of equal-length sequences. `next_inputs[t]` is what both
/// target networks see when bootstrapping step `t`.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub inputs: Vec<Array2<f64>>,
    pub actions: Vec<Array2<f64>>,
    pub rewards: Vec<Array2<f64>>,
    pub next_inputs: Vec<Array2<f64>>,
    pub not_done: Vec<Array2<f64>>,
    /// 1 for real steps, 0 for padding.
    pub mask: Vec<Array2<f64>>,
}

impl SequenceBatch {
    pub fn single_step(flat: FlatBatch) -> Self {
        let mask = flat.mask();
        Self {
            inputs: vec![flat.obs],
            actions: vec![flat.actions],
            rewards: vec![flat.rewards],
            next_inputs: vec![flat.next_obs],
            not_done: vec![flat.not_done],
            mask: vec![mask],
        }
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

/// One actor, one critic, both with targets.
#[derive(Debug, Clone)]
pub struct DdpgCore {
    pub actor: Trainable,
    pub critic: Trainable,
    pub gamma: f64,
    pub tau: f64,
}

impl DdpgCore {
    pub fn new<R: Rng + ?Sized>(actor: NetSpec, critic: NetSpec, cfg: &AgentConfig, rng: &mut R) -> Self {
        Self {
            actor: Trainable::new(actor, cfg.actor_lr, rng),
            critic: Trainable::new(critic, cfg.critic_lr, rng),
            gamma: cfg.gamma,
            tau: cfg.tau,
        }
    }

    pub fn targets(&self, batch: &SequenceBatch) -> Vec<Array2<f64>> {
        let next_actions = evaluate(&self.actor.net, &self.actor.target, &batch.next_inputs, &[]);
        let q_next = evaluate(&self.critic.net, &self.critic.target, &batch.next_inputs, &next_actions);
        td_targets(&batch.rewards, &batch.not_done, &q_next, self.gamma)
    }

    pub fn critic_loss(&self, batch: &SequenceBatch) -> f64 {
        let y = self.targets(batch);
        critic_loss(&self.critic, &batch.inputs, &batch.actions, &y, &batch.mask)
    }

    /// Critic step only, against targets from the current target networks.
    pub fn critic_update(&mut self, batch: &SequenceBatch) -> f64 {
        let y = self.targets(batch);
        critic_step(&mut self.critic, &batch.inputs, &batch.actions, &y, &batch.mask)
    }

    /// Critic step, actor step, then both targets move towards their mains.
    pub fn update(&mut self, batch: &SequenceBatch) -> UpdateStats {
        let critic_loss = self.critic_update(batch);
        let term = CriticTerm {
            critic: &self.critic,
            inputs: &batch.inputs,
            joint_actions: None,
            offset: 0,
            weight: 1.0,
        };
        let actor_objective = actor_step(&mut self.actor, &batch.inputs, &[term], &batch.mask);
        self.actor.soft_update(self.tau);
        self.critic.soft_update(self.tau);
        UpdateStats {
            critic_loss,
            actor_objective,
        }
    }

    /// Actor output at the last step of `inputs` for a batch of one.
    pub fn policy(&self, inputs: &[Array2<f64>]) -> Vec<f64> {
        let out = evaluate(&self.actor.net, &self.actor.params, inputs, &[]);
        out.last().expect("non-empty input").row(0).to_vec()
    }

    pub fn networks(&self) -> Vec<NamedParams<'_>> {
        vec![
            NamedParams {
                name: "actor".into(),
                spec: self.actor.net.spec(),
                params: &self.actor.params,
            },
            NamedParams {
                name: "actor_target".into(),
                spec: self.actor.net.spec(),
                params: &self.actor.target,
            },
            NamedParams {
                name: "critic".into(),
                spec: self.critic.net.spec(),
                params: &self.critic.params,
            },
            NamedParams {
                name: "critic_target".into(),
                spec: self.critic.net.spec(),
                params: &self.critic.target,
            },
        ]
    }

    pub fn load_networks(&mut self, named: &[(String, Vec<f64>)]) -> Result<(), String> {
        let check = |p: &[f64], t: &Trainable, name: &str| {
            if p.len() == t.params.len() {
                Ok(())
            } else {
                Err(format!(
                    "network `{name}` has {} parameters, expected {}",
                    p.len(),
                    t.params.len()
                ))
            }
        };
        let (a, at) = (take(named, "actor")?, take(named, "actor_target")?);
        let (c, ct) = (take(named, "critic")?, take(named, "critic_target")?);
        check(a, &self.actor, "actor")?;
        check(at, &self.actor, "actor_target")?;
        check(c, &self.critic, "critic")?;
        check(ct, &self.critic, "critic_target")?;
        self.actor.load(a, at);
        self.critic.load(c, ct);
        Ok(())
    }
}

/// One agent controlling all four action components from the joint
/// observation, trained on the global reward.
pub struct DdpgAgent {
    pub core: DdpgCore,
    cfg: AgentConfig,
    buffer: ReplayBuffer<Transition>,
    noise: OuNoise,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn new(cfg: AgentConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core = DdpgCore::new(
            cfg.actor_spec(Observation::JOINT_DIM, JointAction::DIM),
            cfg.critic_spec(Observation::JOINT_DIM, JointAction::DIM),
            &cfg,
            &mut rng,
        );
        Self {
            core,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: OuNoise::new(JointAction::DIM, cfg.exploration.theta, cfg.exploration.sigma_start),
            rng,
            cfg,
        }
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition> {
        &self.buffer
    }

    pub fn sample_batch(&mut self) -> Option<SequenceBatch> {
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng).ok()?;
        Some(SequenceBatch::single_step(FlatBatch::joint(&batch, |r| r.global)))
    }
}

impl Agent for DdpgAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ddpg
    }

    fn begin_episode(&mut self, progress: f64) {
        self.noise.reset();
        self.noise.set_sigma(self.cfg.exploration.sigma_at(progress));
    }

    fn act(&mut self, obs: &Observation, explore: bool) -> JointAction {
        let x = Array2::from_shape_vec((1, Observation::JOINT_DIM), obs.joint().to_vec()).expect("row");
        let mut a = self.core.policy(std::slice::from_ref(&x));
        if explore {
            perturb(&mut a, &mut self.noise, &mut self.rng);
        }
        JointAction::from_slice(&a)
    }

    fn record(&mut self, transition: Transition) {
        self.buffer.push(transition);
    }

    fn end_episode(&mut self) {}

    fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch_size
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
