//! Uniform random policy used as a baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secnoma_core::{JointAction, Observation};

use crate::agent::{Agent, AgentKind, NamedParams, Transition, UpdateStats};

pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn begin_episode(&mut self, _progress: f64) {}

    /// Uniform on `[-1, 1]^4` regardless of `explore`.
    fn act(&mut self, _obs: &Observation, _explore: bool) -> JointAction {
        let mut a = [0.0; JointAction::DIM];
        a.iter_mut().for_each(|x| *x = self.rng.random_range(-1.0..=1.0));
        JointAction::from_slice(&a)
    }

    fn record(&mut self, _transition: Transition) {}

    fn end_episode(&mut self) {}

    fn ready(&self) -> bool {
        false
    }

    fn update(&mut self) -> Option<UpdateStats> {
        None
    }

    fn networks(&self) -> Vec<NamedParams<'_>> {
        Vec::new()
    }

    fn load_networks(&mut self, _named: &[(String, Vec<f64>)]) -> Result<(), String> {
        Ok(())
    }
}
