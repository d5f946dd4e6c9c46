//! Critic regression and deterministic policy-gradient steps shared by the
//! learners. Every quantity is a sequence of `batch x width` matrices; a
//! feed-forward update is a sequence of length one.

use ndarray::{s, Array2};
use rand::Rng;

use crate::nn::{Net, NetSpec};
use crate::optim::{soft_update, Adam};

/// A network with its target copy, optimizer and gradient buffer.
#[derive(Debug, Clone)]
pub struct Trainable {
    pub net: Net,
    pub params: Vec<f64>,
    pub target: Vec<f64>,
    pub adam: Adam,
    grads: Vec<f64>,
}

impl Trainable {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, lr: f64, rng: &mut R) -> Self {
        let net = Net::new(spec);
        let params = net.init_params(rng);
        let n = params.len();
        Self {
            net,
            target: params.clone(),
            params,
            adam: Adam::new(n, lr),
            grads: vec![0.0; n],
        }
    }

    /// Overwrites main and target parameters and clears optimizer state.
    pub fn load(&mut self, params: &[f64], target: &[f64]) {
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        assert_eq!(target.len(), self.target.len(), "target parameter count mismatch");
        self.params.copy_from_slice(params);
        self.target.copy_from_slice(target);
        self.adam = Adam::new(params.len(), self.adam.lr);
    }

    pub fn soft_update(&mut self, tau: f64) {
        soft_update(&mut self.target, &self.params, tau);
    }

    fn apply(&mut self) {
        self.adam.step(&mut self.params, &self.grads);
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.target).all(|x| x.is_finite())
    }
}

fn mask_total(mask: &[Array2<f64>]) -> f64 {
    mask.iter().map(|m| m.sum()).sum::<f64>().max(1.0)
}

/// Output sequence of `net` evaluated at `params`.
pub fn evaluate(net: &Net, params: &[f64], inputs: &[Array2<f64>], extras: &[Array2<f64>]) -> Vec<Array2<f64>> {
    net.forward(params, inputs, extras).outputs
}

/// `y = r + gamma * not_done * q_next`, step by step.
pub fn td_targets(
    rewards: &[Array2<f64>],
    not_done: &[Array2<f64>],
    q_next: &[Array2<f64>],
    gamma: f64,
) -> Vec<Array2<f64>> {
    rewards
        .iter()
        .zip(not_done)
        .zip(q_next)
        .map(|((r, nd), q)| r + &(nd * q * gamma))
        .collect()
}

/// Masked mean squared error of the critic against fixed targets.
pub fn critic_loss(
    critic: &Trainable,
    inputs: &[Array2<f64>],
    actions: &[Array2<f64>],
    targets: &[Array2<f64>],
    mask: &[Array2<f64>],
) -> f64 {
    let q = evaluate(&critic.net, &critic.params, inputs, actions);
    let total = mask_total(mask);
    q.iter()
        .zip(targets)
        .zip(mask)
        .map(|((q, y), m)| (m * &(q - y).mapv(|d| d * d)).sum())
        .sum::<f64>()
        / total
}

/// One optimizer step on the critic loss. Returns the loss before the step.
pub fn critic_step(
    critic: &mut Trainable,
    inputs: &[Array2<f64>],
    actions: &[Array2<f64>],
    targets: &[Array2<f64>],
    mask: &[Array2<f64>],
) -> f64 {
    let pass = critic.net.forward(&critic.params, inputs, actions);
    let total = mask_total(mask);
    let mut loss = 0.0;
    let grad_out: Vec<Array2<f64>> = pass
        .outputs
        .iter()
        .zip(targets)
        .zip(mask)
        .map(|((q, y), m)| {
            let d = (q - y) * m;
            loss += (&d * &d).sum();
            d * (2.0 / total)
        })
        .collect();
    critic.net.backward(&critic.params, &pass, &grad_out, &mut critic.grads);
    critic.apply();
    loss / total
}

/// One critic the actor climbs. The actor's action is written into columns
/// `offset..offset + action_dim` of `joint_actions`, or used alone when
/// `joint_actions` is `None`.
pub struct CriticTerm<'a> {
    pub critic: &'a Trainable,
    pub inputs: &'a [Array2<f64>],
    pub joint_actions: Option<&'a [Array2<f64>]>,
    pub offset: usize,
    pub weight: f64,
}

/// One optimizer step ascending the weighted sum of critic values at the
/// actor's own actions. Returns the objective before the step.
pub fn actor_step(
    actor: &mut Trainable,
    actor_inputs: &[Array2<f64>],
    terms: &[CriticTerm<'_>],
    mask: &[Array2<f64>],
) -> f64 {
    let pass = actor.net.forward(&actor.params, actor_inputs, &[]);
    let total = mask_total(mask);
    let dim = actor.net.spec().output;
    let mut d_actions: Vec<Array2<f64>> = pass.outputs.iter().map(|a| Array2::zeros(a.raw_dim())).collect();
    let mut objective = 0.0;

    for term in terms {
        if term.weight == 0.0 {
            continue;
        }
        let extras: Vec<Array2<f64>> = match term.joint_actions {
            Some(joint) => joint
                .iter()
                .zip(&pass.outputs)
                .map(|(j, a)| {
                    let mut full = j.clone();
                    full.slice_mut(s![.., term.offset..term.offset + dim]).assign(a);
                    full
                })
                .collect(),
            None => pass.outputs.clone(),
        };
        let cpass = term.critic.net.forward(&term.critic.params, term.inputs, &extras);
        objective += term.weight * cpass.outputs.iter().zip(mask).map(|(q, m)| (q * m).sum()).sum::<f64>() / total;
        let grad_out: Vec<Array2<f64>> = mask.iter().map(|m| m * (-term.weight / total)).collect();
        let mut scratch = vec![0.0; term.critic.net.num_params()];
        let grads = term
            .critic
            .net
            .backward(&term.critic.params, &cpass, &grad_out, &mut scratch);
        for (d, e) in d_actions.iter_mut().zip(&grads.extras) {
            *d += &e.slice(s![.., term.offset..term.offset + dim]);
        }
    }

    actor.net.backward(&actor.params, &pass, &d_actions, &mut actor.grads);
    actor.apply();
    objective
}
