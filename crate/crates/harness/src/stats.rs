//! Small sample statistics for seed-level aggregation.

use serde::{Deserialize, Serialize};

/// Share of the trailing episodes that make up the reported window.
pub const FINAL_WINDOW: f64 = 0.2;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn std_err(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Standard error of the difference of two independent sample means.
pub fn pooled_se(a: &[f64], b: &[f64]) -> f64 {
    (std_err(a).powi(2) + std_err(b).powi(2)).sqrt()
}

/// Number of trailing items in the final window of `n`, at least one.
pub fn window_len(n: usize) -> usize {
    ((n as f64 * FINAL_WINDOW).ceil() as usize).clamp(1.min(n), n)
}

/// The trailing final window of `items`.
pub fn final_window<T>(items: &[T]) -> &[T] {
    &items[items.len() - window_len(items.len())..]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: std_dev(xs),
            n: xs.len(),
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.std / (self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((std_dev(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert!((pooled_se(&xs, &xs) - (2.0 * (5.0 / 3.0) / 4.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn window_sizes() {
        assert_eq!(window_len(200), 40);
        assert_eq!(window_len(7), 2);
        assert_eq!(window_len(1), 1);
        assert_eq!(window_len(0), 0);
        assert_eq!(final_window(&[1, 2, 3, 4, 5]), &[5]);
    }
}
