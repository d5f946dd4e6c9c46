use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{EnvConfig, JointAction, Observation, RewardBundle};
use secnoma_learn::agent::{rows, Agent, AgentConfig, AgentKind, Transition};
use secnoma_learn::checkpoint;
use secnoma_learn::ddpg::{DdpgAgent, DdpgCore, SequenceBatch};
use secnoma_learn::maddpg::MaddpgAgent;
use secnoma_learn::masrddpg::MasrddpgAgent;
use secnoma_learn::rdpg::{window_batch, RdpgAgent, INPUT_DIM};
use secnoma_learn::train::{build_agent, train, TrainConfig, TrainError};
use secnoma_learn::update::{critic_loss, critic_step, Trainable};
use secnoma_learn::ExplorationConfig;

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    let mut f = || rng.random_range(0.0..2.0);
    Observation {
        pap: [f(), f(), f()],
        sap: [f(), f(), f()],
    }
}

fn random_transition(rng: &mut ChaCha8Rng, zero_local: bool) -> Transition {
    let mut a = [0.0; 4];
    a.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    let global = rng.random_range(-1.0..5.0);
    let (pap, sap) = if zero_local {
        (0.0, 0.0)
    } else {
        (rng.random_range(-2.0..0.0), rng.random_range(-1.0..3.0))
    };
    Transition {
        obs: random_obs(rng),
        action: JointAction::from_slice(&a),
        reward: RewardBundle { global, pap, sap },
        next_obs: random_obs(rng),
        terminal: rng.random_bool(0.1),
    }
}

fn transitions(n: usize, seed: u64, zero_local: bool) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_transition(&mut rng, zero_local)).collect()
}

fn small_config() -> AgentConfig {
    AgentConfig {
        hidden_width: 16,
        hidden_layers: 2,
        recurrent_width: 8,
        batch_size: 16,
        episodes_per_batch: 4,
        unroll: 4,
        ..AgentConfig::default()
    }
}

fn delta(after: &[f64], before: &[f64]) -> Vec<f64> {
    after.iter().zip(before).map(|(a, b)| a - b).collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ddpg_batch(ts: &[Transition]) -> SequenceBatch {
    let refs: Vec<&Transition> = ts.iter().collect();
    SequenceBatch::single_step(secnoma_learn::agent::FlatBatch::joint(&refs, |r| r.global))
}

#[test]
fn single_reward_learner_reduces_to_maddpg() {
    let cfg = AgentConfig {
        local_weight: 0.0,
        ..small_config()
    };
    let mut masr = MasrddpgAgent::new(cfg, 11);
    let mut mad = MaddpgAgent::new(cfg, 99);
    for i in 0..2 {
        mad.actors[i].load(&masr.actors[i].params, &masr.actors[i].target);
        mad.critics[i].load(&masr.global_critic.params, &masr.global_critic.target);
    }
    let before_actors: Vec<Vec<f64>> = masr.actors.iter().map(|a| a.params.clone()).collect();
    let before_critic = masr.global_critic.params.clone();
    let before_target = masr.global_critic.target.clone();

    let ts = transitions(32, 5, true);
    let refs: Vec<&Transition> = ts.iter().collect();
    for _ in 0..3 {
        masr.update_with_batch(&refs);
        mad.update_with_batch(&refs);
    }

    for i in 0..2 {
        let d_masr = delta(&masr.actors[i].params, &before_actors[i]);
        let d_mad = delta(&mad.actors[i].params, &before_actors[i]);
        assert!(d_masr.iter().any(|d| *d != 0.0));
        assert!(max_gap(&d_masr, &d_mad) <= 1e-10);
        let d_g = delta(&masr.global_critic.params, &before_critic);
        let d_c = delta(&mad.critics[i].params, &before_critic);
        assert!(max_gap(&d_g, &d_c) <= 1e-10);
        assert!(max_gap(&masr.global_critic.target, &mad.critics[i].target) <= 1e-10);
        assert!(max_gap(&masr.actors[i].target, &mad.actors[i].target) <= 1e-10);
    }
    assert!(max_gap(&before_target, &masr.global_critic.target) > 0.0);
}

/// Network input for step `i` of an episode, built without the learner's
/// helpers.
fn augmented(ep: &[Transition], i: usize, next: bool) -> Vec<f64> {
    let (o, a) = if next {
        (ep[i].next_obs, Some(ep[i].action))
    } else {
        (ep[i].obs, i.checked_sub(1).map(|j| ep[j].action))
    };
    let mut x = o.joint().to_vec();
    x.extend(a.map_or([0.0; 4], |a| a.to_array()));
    x
}

#[test]
fn unit_window_recurrent_update_equals_flat_update() {
    let cfg = AgentConfig {
        unroll: 1,
        ..small_config()
    };
    let agent = RdpgAgent::new(cfg, 3);
    let episodes: Vec<Vec<Transition>> = (0..4).map(|k| transitions(6, 100 + k, false)).collect();
    let refs: Vec<&Vec<Transition>> = episodes.iter().collect();
    let starts = [0, 3, 5, 2];
    let window = window_batch(&refs, &starts, 1);

    let n = starts.len();
    let pick = |k: usize| (&episodes[k], starts[k]);
    let flat = SequenceBatch {
        inputs: vec![rows(n, INPUT_DIM, |k, r| {
            let (ep, i) = pick(k);
            r.copy_from_slice(&augmented(ep, i, false));
        })],
        actions: vec![rows(n, 4, |k, r| {
            let (ep, i) = pick(k);
            r.copy_from_slice(&ep[i].action.to_array());
        })],
        rewards: vec![rows(n, 1, |k, r| {
            let (ep, i) = pick(k);
            r[0] = ep[i].reward.global;
        })],
        next_inputs: vec![rows(n, INPUT_DIM, |k, r| {
            let (ep, i) = pick(k);
            r.copy_from_slice(&augmented(ep, i, true));
        })],
        not_done: vec![rows(n, 1, |k, r| {
            let (ep, i) = pick(k);
            r[0] = if ep[i].terminal { 0.0 } else { 1.0 };
        })],
        mask: vec![Array2::ones((n, 1))],
    };

    let mut a = agent.core.clone();
    let mut b = agent.core.clone();
    let before = agent.core.clone();
    a.update(&window);
    b.update(&flat);
    for (x, y, z) in [
        (&a.actor.params, &b.actor.params, &before.actor.params),
        (&a.critic.params, &b.critic.params, &before.critic.params),
        (&a.actor.target, &b.actor.target, &before.actor.target),
        (&a.critic.target, &b.critic.target, &before.critic.target),
    ] {
        assert!(max_gap(&delta(x, z), &delta(y, z)) <= 1e-10);
    }
}

#[test]
fn windows_pad_short_episodes() {
    let long = transitions(6, 1, false);
    let short = transitions(2, 2, false);
    let b = window_batch(&[&long, &short], &[1, 0], 4);
    assert_eq!(b.steps(), 4);
    let mask: Vec<f64> = b.mask.iter().map(|m| m[[1, 0]]).collect();
    assert_eq!(mask, vec![1.0, 1.0, 0.0, 0.0]);
    assert!(b.mask.iter().all(|m| m[[0, 0]] == 1.0));
    // Step 1 of the long episode's window carries the action of step 1 as history.
    assert_eq!(b.inputs[1].row(0).to_vec(), augmented(&long, 2, false));
    assert_eq!(b.inputs[0].row(1).to_vec(), augmented(&short, 0, false));
}

fn descent_holds(
    critic: &mut Trainable,
    inputs: &[Array2<f64>],
    actions: &[Array2<f64>],
    y: &[Array2<f64>],
    mask: &[Array2<f64>],
) {
    critic.adam = secnoma_learn::optim::Adam::new(critic.params.len(), 1e-6);
    let before = critic_loss(critic, inputs, actions, y, mask);
    critic_step(critic, inputs, actions, y, mask);
    let after = critic_loss(critic, inputs, actions, y, mask);
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn critic_steps_descend_on_frozen_batches() {
    let cfg = small_config();
    let ts = transitions(32, 8, false);
    let batch = ddpg_batch(&ts);

    let mut ddpg = DdpgAgent::new(cfg, 1);
    let y = ddpg.core.targets(&batch);
    descent_holds(&mut ddpg.core.critic, &batch.inputs, &batch.actions, &y, &batch.mask);

    let rdpg = RdpgAgent::new(cfg, 2);
    let episodes: Vec<Vec<Transition>> = (0..4).map(|k| transitions(6, 20 + k, false)).collect();
    let refs: Vec<&Vec<Transition>> = episodes.iter().collect();
    let window = window_batch(&refs, &[0, 1, 2, 0], 4);
    let mut core = rdpg.core.clone();
    let y = core.targets(&window);
    descent_holds(&mut core.critic, &window.inputs, &window.actions, &y, &window.mask);

    let mut masr = MasrddpgAgent::new(cfg, 3);
    let y = masr
        .global_critic
        .net
        .forward(&masr.global_critic.target, &batch.inputs, &batch.actions)
        .outputs;
    let y: Vec<_> = y.iter().zip(&batch.rewards).map(|(q, r)| r + &(q * 0.5)).collect();
    descent_holds(&mut masr.global_critic, &batch.inputs, &batch.actions, &y, &batch.mask);
    for i in 0..2 {
        let obs = rows(ts.len(), 3, |k, r| {
            r.copy_from_slice(if i == 0 { &ts[k].obs.pap } else { &ts[k].obs.sap })
        });
        let act = rows(ts.len(), 2, |k, r| {
            let a = ts[k].action;
            r.copy_from_slice(if i == 0 { &a.pap } else { &a.sap })
        });
        descent_holds(&mut masr.local_critics[i], &[obs], &[act], &batch.rewards, &batch.mask);
    }

    let mut mad = MaddpgAgent::new(cfg, 4);
    for i in 0..2 {
        descent_holds(
            &mut mad.critics[i],
            &batch.inputs,
            &batch.actions,
            &batch.rewards,
            &batch.mask,
        );
    }
}

#[test]
fn myopic_targets_are_rewards() {
    let ts = transitions(16, 9, false);
    let batch = ddpg_batch(&ts);
    let mut core: DdpgCore = DdpgAgent::new(small_config(), 5).core;
    core.gamma = 0.0;
    assert_eq!(core.targets(&batch), batch.rewards);

    let rdpg = RdpgAgent::new(small_config(), 6);
    let mut core = rdpg.core.clone();
    core.gamma = 0.0;
    let episodes: Vec<Vec<Transition>> = (0..2).map(|k| transitions(5, 30 + k, false)).collect();
    let refs: Vec<&Vec<Transition>> = episodes.iter().collect();
    let w = window_batch(&refs, &[0, 1], 3);
    assert_eq!(core.targets(&w), w.rewards);
}

#[test]
fn zero_critic_with_zero_rewards_stays_at_zero_loss() {
    let mut ts = transitions(32, 10, true);
    ts.iter_mut().for_each(|t| t.reward.global = 0.0);
    let batch = ddpg_batch(&ts);
    let mut agent = DdpgAgent::new(small_config(), 7);
    let zeros = vec![0.0; agent.core.critic.params.len()];
    agent.core.critic.load(&zeros, &zeros);
    for _ in 0..5 {
        let stats = agent.core.update(&batch);
        assert_eq!(stats.critic_loss, 0.0);
    }
    assert_eq!(agent.core.critic_loss(&batch), 0.0);
    assert!(agent.core.critic.params.iter().all(|p| *p == 0.0));
}

#[test]
fn unit_tau_copies_mains_into_targets() {
    let cfg = AgentConfig {
        tau: 1.0,
        ..small_config()
    };
    let ts = transitions(32, 12, false);
    let refs: Vec<&Transition> = ts.iter().collect();

    let mut ddpg = DdpgAgent::new(cfg, 1);
    ddpg.core.update(&ddpg_batch(&ts));
    assert_eq!(ddpg.core.actor.params, ddpg.core.actor.target);
    assert_eq!(ddpg.core.critic.params, ddpg.core.critic.target);

    let mut mad = MaddpgAgent::new(cfg, 2);
    mad.update_with_batch(&refs);
    for t in mad.actors.iter().chain(&mad.critics) {
        assert_eq!(t.params, t.target);
    }

    let mut masr = MasrddpgAgent::new(cfg, 3);
    masr.update_with_batch(&refs);
    for t in masr
        .actors
        .iter()
        .chain(&masr.local_critics)
        .chain(std::iter::once(&masr.global_critic))
    {
        assert_eq!(t.params, t.target);
    }
}

#[test]
fn local_networks_wait_for_their_episode() {
    let cfg = AgentConfig {
        local_update_every: 2,
        ..small_config()
    };
    let ts = transitions(32, 13, false);
    let refs: Vec<&Transition> = ts.iter().collect();
    let mut masr = MasrddpgAgent::new(cfg, 4);
    assert!(masr.local_turn());
    masr.end_episode();
    assert!(!masr.local_turn());
    let actor = masr.actors[0].params.clone();
    let local = masr.local_critics[1].params.clone();
    let global = masr.global_critic.params.clone();
    masr.update_with_batch(&refs);
    assert_eq!(masr.actors[0].params, actor);
    assert_eq!(masr.local_critics[1].params, local);
    assert_ne!(masr.global_critic.params, global);
    masr.end_episode();
    masr.update_with_batch(&refs);
    assert_ne!(masr.actors[0].params, actor);
}

fn all_learners(cfg: AgentConfig) -> Vec<Box<dyn Agent>> {
    AgentKind::LEARNERS.iter().map(|k| build_agent(*k, &cfg, 21)).collect()
}

#[test]
fn greedy_actions_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for mut agent in all_learners(small_config()) {
        agent.begin_episode(0.0);
        for _ in 0..20 {
            let o = random_obs(&mut rng);
            assert_eq!(agent.act(&o, false), agent.act(&o, false), "{}", agent.kind());
        }
    }
}

#[test]
fn noisy_actions_are_clipped() {
    let cfg = AgentConfig {
        exploration: ExplorationConfig {
            sigma_start: 1.5,
            sigma_end: 1.5,
            ..ExplorationConfig::default()
        },
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for mut agent in all_learners(cfg) {
        agent.begin_episode(0.0);
        for _ in 0..10_000 {
            let a = agent.act(&random_obs(&mut rng), true).to_array();
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)), "{}: {a:?}", agent.kind());
        }
    }
}

#[test]
fn silent_exploration_matches_greedy() {
    let cfg = AgentConfig {
        exploration: ExplorationConfig::silent(),
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for mut agent in all_learners(cfg) {
        agent.begin_episode(0.0);
        for _ in 0..50 {
            let o = random_obs(&mut rng);
            assert_eq!(agent.act(&o, true), agent.act(&o, false));
        }
    }
}

fn short_env(slots: usize) -> EnvConfig {
    EnvConfig {
        episode_length: slots,
        ..EnvConfig::default()
    }
}

#[test]
fn warmup_records_without_updating() {
    let mut agent = DdpgAgent::new(small_config(), 1);
    let before = agent.core.actor.params.clone();
    let tc = TrainConfig {
        episodes: 1,
        update_every: 1,
        updates_per_round: 1,
    };
    let trace = train(&short_env(2), &mut agent, &tc, 3, |_| {}).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0].slots, 2);
    assert_eq!(trace[0].updates, 0);
    assert_eq!(agent.buffer().len(), 2);
    assert_eq!(agent.core.actor.params, before);
}

#[test]
fn every_learner_trains_end_to_end() {
    let tc = TrainConfig {
        episodes: 6,
        update_every: 2,
        updates_per_round: 1,
    };
    for mut agent in all_learners(small_config()) {
        let trace = train(&short_env(10), agent.as_mut(), &tc, 4, |_| {}).unwrap();
        assert_eq!(trace.len(), 6);
        assert!(trace.iter().all(|m| m.slots == 10 && m.mean_reward.is_finite()));
        assert!(
            trace.iter().map(|m| m.updates).sum::<usize>() > 0,
            "{} never updated",
            agent.kind()
        );
    }
}

#[test]
fn fixed_seed_reproduces_the_trace() {
    let tc = TrainConfig {
        episodes: 4,
        update_every: 3,
        updates_per_round: 1,
    };
    for kind in AgentKind::LEARNERS {
        let run = || {
            let mut agent = build_agent(kind, &small_config(), 8);
            train(&short_env(20), agent.as_mut(), &tc, 9, |_| {}).unwrap()
        };
        assert_eq!(run(), run(), "{kind}");
    }
}

#[test]
fn divergence_aborts_training() {
    let mut agent = DdpgAgent::new(small_config(), 1);
    let mut named: Vec<(String, Vec<f64>)> = agent
        .networks()
        .iter()
        .map(|n| (n.name.clone(), n.params.to_vec()))
        .collect();
    named[0].1[0] = f64::NAN;
    agent.load_networks(&named).unwrap();
    let tc = TrainConfig {
        episodes: 2,
        ..TrainConfig::default()
    };
    let err = train(&short_env(3), &mut agent, &tc, 1, |_| {}).unwrap_err();
    assert_eq!(
        err,
        TrainError::Diverged {
            episode: 0,
            network: "actor".into()
        }
    );
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("checkpoint");
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in AgentKind::LEARNERS {
        let src = build_agent(kind, &small_config(), 1);
        checkpoint::save(&stem, kind.name(), &src.networks()).unwrap();
        let (manifest, named) = checkpoint::load(&stem).unwrap();
        assert_eq!(manifest.agent, kind.name());
        let mut dst = build_agent(kind, &small_config(), 2);
        dst.load_networks(&named).unwrap();
        for (a, b) in src.networks().iter().zip(dst.networks().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.params, b.params);
        }
        let mut src = src;
        src.begin_episode(1.0);
        dst.begin_episode(1.0);
        let o = random_obs(&mut rng);
        assert_eq!(src.act(&o, false), dst.act(&o, false));
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("ck");
    let agent = build_agent(AgentKind::Ddpg, &small_config(), 1);
    checkpoint::save(&stem, "ddpg", &agent.networks()).unwrap();
    let (bin, _) = checkpoint::paths(&stem);
    let bytes = std::fs::read(&bin).unwrap();
    std::fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
    assert!(checkpoint::load(&stem).is_err());
}
