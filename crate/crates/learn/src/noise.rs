//! Mean-reverting exploration noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub theta: f64,
    /// Scale at the start of training.
    pub sigma_start: f64,
    /// Scale once the decay is over.
    pub sigma_end: f64,
    /// Fraction of training over which the scale decays linearly.
    pub decay_fraction: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma_start: 0.3,
            sigma_end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl ExplorationConfig {
    pub fn silent() -> Self {
        Self {
            sigma_start: 0.0,
            sigma_end: 0.0,
            ..Self::default()
        }
    }

    /// Scale at `progress` in `[0, 1]` of training.
    pub fn sigma_at(&self, progress: f64) -> f64 {
        if self.decay_fraction <= 0.0 {
            return self.sigma_end;
        }
        let f = (progress / self.decay_fraction).clamp(0.0, 1.0);
        self.sigma_start + f * (self.sigma_end - self.sigma_start)
    }
}

/// Ornstein-Uhlenbeck process with unit time step, one state per action
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    theta: f64,
    sigma: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        Self {
            theta,
            sigma,
            state: vec![0.0; dim],
        }
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.state {
            let w: f64 = rng.sample(StandardNormal);
            *x += -self.theta * *x + self.sigma * w;
        }
        &self.state
    }
}

/// Adds noise to `action` in place and clips to `[-1, 1]`.
pub fn perturb<R: Rng + ?Sized>(action: &mut [f64], noise: &mut OuNoise, rng: &mut R) {
    if noise.sigma() == 0.0 {
        action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        return;
    }
    let n = noise.sample(rng);
    for (a, e) in action.iter_mut().zip(n) {
        *a = (*a + e).clamp(-1.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_schedule() {
        let c = ExplorationConfig::default();
        assert_eq!(c.sigma_at(0.0), 0.3);
        assert!((c.sigma_at(0.25) - 0.175).abs() < 1e-12);
        assert!((c.sigma_at(0.5) - 0.05).abs() < 1e-15);
        assert_eq!(c.sigma_at(0.9), c.sigma_at(0.5));
    }

    #[test]
    fn zero_sigma_only_clips() {
        let mut n = OuNoise::new(2, 0.15, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = [0.4, 1.5];
        perturb(&mut a, &mut n, &mut rng);
        assert_eq!(a, [0.4, 1.0]);
    }

    #[test]
    fn noisy_actions_stay_in_range() {
        let mut n = OuNoise::new(4, 0.15, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let mut a = [0.9, -0.9, 0.0, 1.0];
            perturb(&mut a, &mut n, &mut rng);
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn process_reverts_to_zero_mean() {
        let mut n = OuNoise::new(1, 0.15, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean = (0..20_000).map(|_| n.sample(&mut rng)[0]).sum::<f64>() / 20_000.0;
        // Stationary sd is 0.2 / sqrt(1 - 0.85^2), about 0.38.
        assert!(mean.abs() < 0.05, "mean {mean}");
    }
}
