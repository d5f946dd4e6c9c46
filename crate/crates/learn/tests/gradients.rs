//! Backprop against central finite differences for every network shape the
//! learners build.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};
use secnoma_learn::nn::{Net, NetSpec};
use secnoma_learn::rdpg::INPUT_DIM;
use secnoma_learn::AgentConfig;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

/// Loss `sum_t <w_t, y_t>` so that the output gradient is `w_t`.
fn loss(net: &Net, p: &[f64], xs: &[Array2<f64>], es: &[Array2<f64>], ws: &[Array2<f64>]) -> f64 {
    net.forward(p, xs, es)
        .outputs
        .iter()
        .zip(ws)
        .map(|(y, w)| (y * w).sum())
        .sum()
}

/// Worst relative error over all parameters and inputs.
fn worst_error(spec: NetSpec, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Net::new(spec.clone());
    let p = net.init_params(&mut rng);
    let batch = 3;
    let xs: Vec<_> = (0..steps).map(|_| random(&mut rng, batch, spec.input)).collect();
    let es: Vec<_> = if spec.extra > 0 {
        (0..steps).map(|_| random(&mut rng, batch, spec.extra)).collect()
    } else {
        Vec::new()
    };
    let ws: Vec<_> = (0..steps).map(|_| random(&mut rng, batch, spec.output)).collect();

    let pass = net.forward(&p, &xs, &es);
    let mut g = vec![0.0; p.len()];
    let input_grads = net.backward(&p, &pass, &ws, &mut g);

    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut q = p.clone();
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let up = loss(&net, &q, &xs, &es, &ws);
        q[i] = p[i] - h;
        let down = loss(&net, &q, &xs, &es, &ws);
        q[i] = p[i];
        worst = worst.max(rel(g[i], (up - down) / (2.0 * h)));
    }
    for t in 0..steps {
        for ((r, c), analytic) in input_grads.inputs[t].indexed_iter() {
            let mut xp = xs.clone();
            xp[t][[r, c]] += h;
            let up = loss(&net, &p, &xp, &es, &ws);
            xp[t][[r, c]] -= 2.0 * h;
            let down = loss(&net, &p, &xp, &es, &ws);
            worst = worst.max(rel(*analytic, (up - down) / (2.0 * h)));
        }
        if spec.extra > 0 {
            for ((r, c), analytic) in input_grads.extras[t].indexed_iter() {
                let mut ep = es.clone();
                ep[t][[r, c]] += h;
                let up = loss(&net, &p, &xs, &ep, &ws);
                ep[t][[r, c]] -= 2.0 * h;
                let down = loss(&net, &p, &xs, &ep, &ws);
                worst = worst.max(rel(*analytic, (up - down) / (2.0 * h)));
            }
        }
    }
    worst
}

#[test]
fn joint_actor_and_critic() {
    let cfg = AgentConfig::default();
    let actor = worst_error(cfg.actor_spec(Observation::JOINT_DIM, JointAction::DIM), 1, 1);
    let critic = worst_error(cfg.critic_spec(Observation::JOINT_DIM, JointAction::DIM), 1, 2);
    assert!(actor <= 1e-4, "actor {actor:e}");
    assert!(critic <= 1e-4, "critic {critic:e}");
}

#[test]
fn local_actor_and_critic() {
    let cfg = AgentConfig::default();
    let actor = worst_error(cfg.actor_spec(Observation::AGENT_DIM, 2), 1, 3);
    let critic = worst_error(cfg.critic_spec(Observation::AGENT_DIM, 2), 1, 4);
    assert!(actor <= 1e-4, "actor {actor:e}");
    assert!(critic <= 1e-4, "critic {critic:e}");
}

#[test]
fn recurrent_actor_and_critic_through_time() {
    let cfg = AgentConfig::default();
    let actor = worst_error(
        cfg.actor_spec(INPUT_DIM, JointAction::DIM)
            .with_recurrent(cfg.recurrent_width),
        cfg.unroll,
        5,
    );
    let critic = worst_error(
        cfg.critic_spec(INPUT_DIM, JointAction::DIM)
            .with_recurrent(cfg.recurrent_width),
        cfg.unroll,
        6,
    );
    assert!(actor <= 1e-4, "actor {actor:e}");
    assert!(critic <= 1e-4, "critic {critic:e}");
}
