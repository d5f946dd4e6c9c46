//! Physical-layer simulator for a time-switching, energy-harvesting cooperative
//! cognitive-radio network with power-domain NOMA and a passive eavesdropper.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: node layout, path loss, fading and noisy channel estimates.
//! * [`phy`]: harvesting, SNRs, link rates, secrecy rate and slot energy.
//! * [`battery`]: battery evolution plus causality and overflow constraints.
//! * [`uncertainty`]: worst-case, chance-constrained and Bernstein robust
//!   evaluators together with their Monte-Carlo and grid oracles.
//! * [`env`]: the two-agent partially observable environment built on top.

pub mod battery;
pub mod channel;
pub mod constraint;
pub mod env;
pub mod phy;
pub mod uncertainty;

pub use battery::{BatteryState, BatteryStep};
pub use channel::{ChannelSet, EavesdropperPosition, FadingConfig, FadingModel, Link, LinkGains, NodeLayout};
pub use constraint::{Constraint, Violations};
pub use env::{EnvConfig, EnvError, Environment, JointAction, Observation, RewardBundle, SlotInfo, StepOutcome};
pub use phy::{NoiseConfig, PhyConstants, PowerAllocation, RateBundle, Scenario};
pub use uncertainty::{ErrorClass, ModelKind, UncertaintyModel};
