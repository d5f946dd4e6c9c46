//! The two-agent decision process: observations, action mapping, rewards and
//! episode lifecycle.
//!
//! Each agent only sees its own noisy channel estimates and battery reading.
//! Rewards are scored on the true channels, while the global reward is the
//! active uncertainty model's objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{step_batteries, BatteryState};
use crate::channel::{
    absolute_bounds, channel_set_from_fades, ChannelError, ChannelSet, FadingConfig, LinkGains, NodeLayout,
};
use crate::constraint::{Constraint, Violations};
use crate::phy::{harvested_energy_sap, NoiseConfig, PhyConstants, PowerAllocation, RateBundle};
use crate::uncertainty::{
    evaluate_model, exact_objective, Knowledge, ModelKind, SlotContext, UncertaintyError, UncertaintyModel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode has terminated; call reset first")]
    Terminated,
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub layout: NodeLayout,
    pub fading: FadingConfig,
    pub noise: NoiseConfig,
    pub phy: PhyConstants,
    pub uncertainty: UncertaintyModel,
    /// Slots per episode.
    pub episode_length: usize,
    pub pap_battery_capacity: f64,
    pub sap_battery_capacity: f64,
    /// Initial balances are drawn uniformly from this range, then capped.
    pub initial_battery: (f64, f64),
    /// Renewable arrivals are 0, 1 or 2 units with equal probability, J.
    pub harvest_unit: f64,
    /// Per-slot PUE rate requirement, bit/s/Hz.
    pub min_primary_rate: f64,
    /// Reward subtracted per violated constraint.
    pub penalty: f64,
    /// Floor on the SUE power in the SAP efficiency reward, W.
    pub sue_power_floor: f64,
    /// The transfer fraction is kept inside `[margin, 1 - margin]`.
    pub beta_margin: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            layout: NodeLayout::default(),
            fading: FadingConfig::default(),
            noise: NoiseConfig::default(),
            phy: PhyConstants::default(),
            uncertainty: UncertaintyModel::default(),
            episode_length: 200,
            pap_battery_capacity: 20.0,
            sap_battery_capacity: 20.0,
            initial_battery: (4.0, 20.0),
            harvest_unit: 0.5,
            min_primary_rate: 1.0,
            penalty: 1.0,
            sue_power_floor: 1e-4,
            beta_margin: 1e-3,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        self.phy.validate().map_err(EnvError::Config)?;
        self.fading.validate()?;
        self.uncertainty.validate()?;
        if !self.noise.is_valid() {
            return bad("noise powers must be positive".into());
        }
        if self.episode_length == 0 {
            return bad("episode_length must be at least 1".into());
        }
        for (name, v) in [
            ("pap_battery_capacity", self.pap_battery_capacity),
            ("sap_battery_capacity", self.sap_battery_capacity),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let (lo, hi) = self.initial_battery;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("initial_battery range ({lo}, {hi}) is invalid"));
        }
        for (name, v) in [
            ("harvest_unit", self.harvest_unit),
            ("min_primary_rate", self.min_primary_rate),
            ("penalty", self.penalty),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.sue_power_floor > 0.0) {
            return bad("sue_power_floor must be positive".into());
        }
        if !(self.beta_margin > 0.0 && self.beta_margin < 0.5) {
            return bad("beta_margin must be in (0, 0.5)".into());
        }
        Ok(())
    }

    /// Power and time-split limits used by [`map_action`].
    pub fn action_limits(&self) -> ActionLimits {
        ActionLimits {
            pap_max_power: self.phy.pap_max_power,
            sap_max_power: self.phy.sap_max_power,
            beta_margin: self.beta_margin,
        }
    }
}

/// Raw actor outputs in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    /// `[power, transfer fraction]`.
    pub pap: [f64; 2],
    /// `[relay power, own power]`.
    pub sap: [f64; 2],
}

impl JointAction {
    pub const DIM: usize = 4;

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::DIM, "joint action has four components");
        Self {
            pap: [v[0], v[1]],
            sap: [v[2], v[3]],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.pap[0], self.pap[1], self.sap[0], self.sap[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionLimits {
    pub pap_max_power: f64,
    pub sap_max_power: f64,
    pub beta_margin: f64,
}

fn unit(raw: f64) -> f64 {
    ((raw.clamp(-1.0, 1.0) + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Affine map from actor outputs to powers and transfer fraction. The SAP
/// powers are scaled down together if their sum exceeds the SAP limit.
pub fn map_action(raw: &JointAction, limits: &ActionLimits) -> PowerAllocation {
    let p_pp = unit(raw.pap[0]) * limits.pap_max_power;
    let beta = unit(raw.pap[1]).clamp(limits.beta_margin, 1.0 - limits.beta_margin);
    let mut p_sp = unit(raw.sap[0]) * limits.sap_max_power;
    let mut p_ss = unit(raw.sap[1]) * limits.sap_max_power;
    let total = p_sp + p_ss;
    if total > limits.sap_max_power {
        let scale = limits.sap_max_power / total;
        p_sp *= scale;
        p_ss *= scale;
    }
    PowerAllocation::new(p_pp, p_sp, p_ss, beta)
}

/// What each agent sees. Gains are divided by the link's mean gain and
/// battery readings by capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `[h_pap_pue, h_pap_sap, battery]`.
    pub pap: [f64; 3],
    /// `[h_sap_pue, h_sap_sue, battery]`.
    pub sap: [f64; 3],
}

impl Observation {
    pub const AGENT_DIM: usize = 3;
    pub const JOINT_DIM: usize = 6;

    pub fn joint(&self) -> [f64; 6] {
        [
            self.pap[0],
            self.pap[1],
            self.pap[2],
            self.sap[0],
            self.sap[1],
            self.sap[2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBundle {
    /// Shared reward: the active model's `log2(R / E)`.
    pub global: f64,
    /// PAP penalties.
    pub pap: f64,
    /// SAP secrecy efficiency towards the SUE plus SAP penalties.
    pub sap: f64,
}

/// Diagnostics of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub slot: usize,
    pub alloc: PowerAllocation,
    /// Secrecy rate as seen by the active model.
    pub model_secrecy: f64,
    /// Energy as seen by the active model.
    pub model_energy: f64,
    /// Secrecy rate on the true channels.
    pub true_secrecy: f64,
    /// Energy on the true channels.
    pub true_energy: f64,
    /// PUE end-to-end rate on the true channels.
    pub true_primary_rate: f64,
    pub sap_harvest: f64,
    pub pap_arrival: f64,
    pub violations: Violations,
    pub depleted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBundle,
    /// Episode is over (slot limit or depletion).
    pub done: bool,
    /// Episode ended by depletion; no bootstrapping past this step.
    pub terminal: bool,
    pub info: SlotInfo,
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub observation: Observation,
    pub action: JointAction,
    pub reward: RewardBundle,
    pub next_observation: Observation,
    pub done: bool,
    pub info: SlotInfo,
}

/// SAP reward for serving the SUE securely: SUE secrecy rate per unit of SUE
/// transmit time-power.
pub fn sap_local_reward(bundle: &RateBundle, alloc: &PowerAllocation, power_floor: f64, penalty: f64) -> f64 {
    bundle.secondary_secrecy() / (alloc.data_fraction() * alloc.p_ss.max(power_floor)) + penalty
}

/// Per-agent penalties for a violation set.
pub fn constraint_penalties(violations: &Violations, kappa: f64) -> (f64, f64) {
    violations.penalties(kappa)
}

const CHANNEL_STREAM: u64 = 1;
const ARRIVAL_STREAM: u64 = 2;
const SAMPLING_STREAM: u64 = 3;

pub struct Environment {
    config: EnvConfig,
    nominal: LinkGains,
    bounds: LinkGains,
    battery_bounds: (f64, f64),
    channel_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    sampling_rng: ChaCha8Rng,
    fades: LinkGains,
    channels: ChannelSet,
    battery: BatteryState,
    battery_estimate: BatteryState,
    slot: usize,
    done: bool,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let nominal = config.layout.path_gains();
        let bounds = absolute_bounds(&config.layout, &config.fading, config.uncertainty.channel_delta)?;
        let battery_bounds = (
            config.uncertainty.battery_delta * config.pap_battery_capacity,
            config.uncertainty.battery_delta * config.sap_battery_capacity,
        );
        let battery = BatteryState::new(0.0, 0.0, config.pap_battery_capacity, config.sap_battery_capacity);
        let mut env = Self {
            config,
            nominal,
            bounds,
            battery_bounds,
            channel_rng: ChaCha8Rng::seed_from_u64(0),
            arrival_rng: ChaCha8Rng::seed_from_u64(0),
            sampling_rng: ChaCha8Rng::seed_from_u64(0),
            fades: LinkGains::splat(1.0),
            channels: ChannelSet::exact(nominal),
            battery,
            battery_estimate: battery,
            slot: 0,
            done: true,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }

    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    /// Absolute channel error half-widths.
    pub fn channel_bounds(&self) -> &LinkGains {
        &self.bounds
    }

    /// Starts a new episode. All randomness of the episode derives from `seed`.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        self.channel_rng = stream(CHANNEL_STREAM);
        self.arrival_rng = stream(ARRIVAL_STREAM);
        self.sampling_rng = stream(SAMPLING_STREAM);

        let (lo, hi) = self.config.initial_battery;
        let mut draw = |cap: f64| {
            let b = if hi > lo {
                self.arrival_rng.random_range(lo..=hi)
            } else {
                lo
            };
            b.min(cap)
        };
        let pap = draw(self.config.pap_battery_capacity);
        let sap = draw(self.config.sap_battery_capacity);
        self.battery = BatteryState::new(
            pap,
            sap,
            self.config.pap_battery_capacity,
            self.config.sap_battery_capacity,
        );

        self.fades = self.config.fading.draw(&mut self.channel_rng);
        self.slot = 0;
        self.done = false;
        self.observe_slot(true);
        self.observation()
    }

    fn observe_slot(&mut self, fresh_episode: bool) {
        if self.config.fading.independent_per_slot && !fresh_episode {
            self.fades = self.config.fading.draw(&mut self.channel_rng);
        }
        let class = self.config.uncertainty.class;
        self.channels = channel_set_from_fades(
            &self.config.layout,
            &self.fades,
            &self.bounds,
            class,
            &mut self.channel_rng,
        );
        let (dp, ds) = self.battery_bounds;
        let estimate = |b: f64, d: f64, rng: &mut ChaCha8Rng| {
            if d == 0.0 {
                b
            } else {
                (b - d * class.sample(rng)).max(0.0)
            }
        };
        self.battery_estimate = BatteryState {
            pap: estimate(self.battery.pap.max(0.0), dp, &mut self.channel_rng),
            sap: estimate(self.battery.sap.max(0.0), ds, &mut self.channel_rng),
            ..self.battery
        };
    }

    /// Observation for the current slot.
    pub fn observation(&self) -> Observation {
        let h = self.channels.estimates();
        let n = &self.nominal;
        let b = &self.battery_estimate;
        Observation {
            pap: [h.pap_pue / n.pap_pue, h.pap_sap / n.pap_sap, b.pap / b.pap_capacity],
            sap: [h.sap_pue / n.sap_pue, h.sap_sue / n.sap_sue, b.sap / b.sap_capacity],
        }
    }

    fn draw_arrival(&mut self) -> f64 {
        let units = self.arrival_rng.random_range(0..3u32);
        units as f64 * self.config.harvest_unit
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        let pap_arrival = self.draw_arrival();
        let cfg = &self.config;
        let alloc = map_action(action, &cfg.action_limits());
        let truth = *self.channels.true_gains();

        let scored = exact_objective(&truth, &alloc, &cfg.noise, &cfg.phy);
        let sap_harvest = harvested_energy_sap(alloc.p_pp, alloc.beta, truth.pap_sap, &cfg.phy);

        let ctx = SlotContext {
            alloc,
            noise: cfg.noise,
            consts: cfg.phy,
            pap_arrival,
            min_primary_rate: cfg.min_primary_rate,
            pap_capacity: cfg.pap_battery_capacity,
            sap_capacity: cfg.sap_battery_capacity,
        };
        let knowledge = if cfg.uncertainty.kind == ModelKind::Exact {
            Knowledge {
                gains: truth,
                channel_bounds: LinkGains::default(),
                battery: self.battery,
                battery_bounds: (0.0, 0.0),
            }
        } else {
            Knowledge {
                gains: *self.channels.estimates(),
                channel_bounds: self.bounds,
                battery: self.battery_estimate,
                battery_bounds: self.battery_bounds,
            }
        };
        let verdict = evaluate_model(&cfg.uncertainty, &knowledge, &ctx, &mut self.sampling_rng)?;

        let battery_step = step_batteries(&self.battery, &alloc, pap_arrival, sap_harvest, &cfg.phy);
        let mut violations = verdict.violations;
        if battery_step.next.pap < 0.0 {
            violations.insert(Constraint::C1);
        }
        if battery_step.next.sap < 0.0 {
            violations.insert(Constraint::C2);
        }
        let (pap_penalty, sap_penalty) = constraint_penalties(&violations, cfg.penalty);
        let reward = RewardBundle {
            global: verdict.objective.value,
            pap: pap_penalty,
            sap: sap_local_reward(&scored.rates, &alloc, cfg.sue_power_floor, sap_penalty),
        };

        let info = SlotInfo {
            slot: self.slot,
            alloc,
            model_secrecy: verdict.objective.secrecy,
            model_energy: verdict.objective.energy,
            true_secrecy: scored.objective.secrecy,
            true_energy: scored.objective.energy,
            true_primary_rate: scored.objective.primary_rate,
            sap_harvest,
            pap_arrival,
            violations,
            depleted: battery_step.depleted,
        };

        self.battery = battery_step.next;
        self.slot += 1;
        let terminal = battery_step.depleted;
        self.done = terminal || self.slot >= self.config.episode_length;
        self.observe_slot(false);

        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            terminal,
            info,
        })
    }
}

/// Uniformly random raw actions, used as a learning baseline.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> JointAction {
    JointAction {
        pap: [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
        sap: [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{efficiency_term, link_rates, secrecy_rate};

    fn limits() -> ActionLimits {
        EnvConfig::default().action_limits()
    }

    #[test]
    fn action_endpoints() {
        let a = map_action(
            &JointAction {
                pap: [-1.0, -1.0],
                sap: [-1.0, -1.0],
            },
            &limits(),
        );
        assert_eq!((a.p_pp, a.p_sp, a.p_ss), (0.0, 0.0, 0.0));
        assert_eq!(a.beta, 1e-3);
        let a = map_action(
            &JointAction {
                pap: [0.0, 0.0],
                sap: [0.0, -1.0],
            },
            &limits(),
        );
        assert_eq!(a.p_pp, 1.5);
        assert_eq!(a.beta, 0.5);
        assert_eq!(a.p_sp, 1.5);
        let a = map_action(
            &JointAction {
                pap: [1.0, 1.0],
                sap: [1.0, 1.0],
            },
            &limits(),
        );
        assert_eq!((a.p_sp, a.p_ss), (1.5, 1.5));
        assert_eq!(a.beta, 1.0 - 1e-3);
    }

    #[test]
    fn sap_reward_examples() {
        let mut b = link_rates(
            &LinkGains::splat(1.0),
            &PowerAllocation::new(1.0, 0.0, 1.0, 0.0),
            &NoiseConfig::uniform(1.0),
        );
        b.sap_sue = 1.0;
        b.sap_own_eve = 0.5;
        let a = PowerAllocation::new(1.0, 0.0, 1.0, 0.0);
        assert!((sap_local_reward(&b, &a, 1e-4, 0.0) - 1.0).abs() < 1e-15);
        let a0 = PowerAllocation::new(1.0, 0.0, 0.0, 0.0);
        assert!((sap_local_reward(&b, &a0, 1e-4, 0.0) - 0.5 / (0.5 * 1e-4)).abs() < 1e-6);
        b.sap_own_eve = 2.0;
        assert_eq!(sap_local_reward(&b, &a, 1e-4, -1.0), -1.0);
    }

    #[test]
    fn reset_is_seeded() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        let a = env.reset(42);
        let b = env.reset(42);
        assert_eq!(a, b);
        assert_eq!(env.slot(), 0);
        assert_ne!(env.reset(43), a);
        for seed in 0..200 {
            env.reset(seed);
            let b = env.battery();
            assert!((4.0..=20.0).contains(&b.pap) && (4.0..=20.0).contains(&b.sap));
        }
    }

    #[test]
    fn exact_global_reward_matches_phy() {
        let mut env = Environment::new(EnvConfig::default()).unwrap();
        env.reset(5);
        let action = JointAction {
            pap: [0.3, -0.2],
            sap: [0.1, 0.4],
        };
        for _ in 0..20 {
            let truth = *env.channels().true_gains();
            let out = env.step(&action).unwrap();
            let a = out.info.alloc;
            let r = secrecy_rate(&link_rates(&truth, &a, &env.config().noise));
            let e = crate::phy::energy_consumption(
                &a,
                harvested_energy_sap(a.p_pp, a.beta, truth.pap_sap, &env.config().phy),
                &env.config().phy,
            );
            assert_eq!(out.reward.global, efficiency_term(r, e, &env.config().phy));
        }
    }

    #[test]
    fn episode_ends_at_slot_limit_and_refuses_more_steps() {
        let cfg = EnvConfig {
            episode_length: 3,
            ..EnvConfig::default()
        };
        let mut env = Environment::new(cfg).unwrap();
        env.reset(1);
        let a = JointAction {
            pap: [0.0; 2],
            sap: [0.0; 2],
        };
        assert!(!env.step(&a).unwrap().done);
        assert!(!env.step(&a).unwrap().done);
        let last = env.step(&a).unwrap();
        assert!(last.done && !last.terminal);
        assert_eq!(env.step(&a), Err(EnvError::Terminated));
    }

    #[test]
    fn depletion_terminates_with_causality_penalty() {
        let cfg = EnvConfig {
            initial_battery: (0.001, 0.001),
            phy: PhyConstants {
                slot_duration: 1.0,
                ..PhyConstants::default()
            },
            ..EnvConfig::default()
        };
        let mut env = Environment::new(cfg).unwrap();
        env.reset(3);
        let out = env
            .step(&JointAction {
                pap: [1.0, 0.0],
                sap: [-1.0, -1.0],
            })
            .unwrap();
        assert!(out.done && out.terminal);
        assert!(out.info.violations.contains(Constraint::C1));
        assert!(out.reward.pap <= -1.0);
    }

    #[test]
    fn same_seed_and_actions_replay_identically() {
        let cfg = EnvConfig {
            uncertainty: UncertaintyModel::with_kind(ModelKind::Stochastic, 0.1),
            episode_length: 30,
            ..EnvConfig::default()
        };
        let run = || {
            let mut env = Environment::new(cfg).unwrap();
            env.reset(77);
            let mut out = Vec::new();
            for k in 0..30 {
                let x = (k as f64 * 0.37).sin();
                out.push(
                    env.step(&JointAction {
                        pap: [x, -x],
                        sap: [x * 0.5, 0.2],
                    })
                    .unwrap(),
                );
            }
            out
        };
        assert_eq!(run(), run());
    }
}
