//! Node layout, path loss, small-scale fading and imperfect channel estimates.
//!
//! Gains are linear power gains `fade * d^-lambda`. Every slot draws a fresh
//! [`ChannelSet`] holding the true gains together with the estimates the
//! transmitters see; the estimation error on each link is bounded by a
//! per-link half-width `delta`.

use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uncertainty::ErrorClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("path-loss exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("uncertainty bound for {link:?} must be finite and non-negative, got {value}")]
    InvalidBound { link: Link, value: f64 },
    #[error("nakagami shape must be >= 0.5, got {0}")]
    InvalidShape(f64),
}

/// The six physical links of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    PapPue,
    PapSap,
    PapEve,
    SapPue,
    SapSue,
    SapEve,
}

impl Link {
    pub const ALL: [Link; 6] = [
        Link::PapPue,
        Link::PapSap,
        Link::PapEve,
        Link::SapPue,
        Link::SapSue,
        Link::SapEve,
    ];

    /// Links whose estimates are fed back to the transmitters.
    pub const ESTIMABLE: [Link; 4] = [Link::PapPue, Link::PapSap, Link::SapPue, Link::SapSue];

    pub const EAVESDROPPER: [Link; 2] = [Link::PapEve, Link::SapEve];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_eavesdropper(self) -> bool {
        matches!(self, Link::PapEve | Link::SapEve)
    }
}

/// One value per link. Used for gains, estimates, bounds and margins alike.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkGains {
    pub pap_pue: f64,
    pub pap_sap: f64,
    pub pap_eve: f64,
    pub sap_pue: f64,
    pub sap_sue: f64,
    pub sap_eve: f64,
}

impl LinkGains {
    pub fn splat(value: f64) -> Self {
        Self::from_fn(|_| value)
    }

    pub fn from_fn(mut f: impl FnMut(Link) -> f64) -> Self {
        Self {
            pap_pue: f(Link::PapPue),
            pap_sap: f(Link::PapSap),
            pap_eve: f(Link::PapEve),
            sap_pue: f(Link::SapPue),
            sap_sue: f(Link::SapSue),
            sap_eve: f(Link::SapEve),
        }
    }

    pub fn map(&self, mut f: impl FnMut(Link, f64) -> f64) -> Self {
        Self::from_fn(|l| f(l, self[l]))
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(Link, f64, f64) -> f64) -> Self {
        Self::from_fn(|l| f(l, self[l], other[l]))
    }

    pub fn to_array(&self) -> [f64; 6] {
        Link::ALL.map(|l| self[l])
    }
}

impl Index<Link> for LinkGains {
    type Output = f64;

    fn index(&self, link: Link) -> &f64 {
        match link {
            Link::PapPue => &self.pap_pue,
            Link::PapSap => &self.pap_sap,
            Link::PapEve => &self.pap_eve,
            Link::SapPue => &self.sap_pue,
            Link::SapSue => &self.sap_sue,
            Link::SapEve => &self.sap_eve,
        }
    }
}

impl IndexMut<Link> for LinkGains {
    fn index_mut(&mut self, link: Link) -> &mut f64 {
        match link {
            Link::PapPue => &mut self.pap_pue,
            Link::PapSap => &mut self.pap_sap,
            Link::PapEve => &mut self.pap_eve,
            Link::SapPue => &mut self.sap_pue,
            Link::SapSue => &mut self.sap_sue,
            Link::SapEve => &mut self.sap_eve,
        }
    }
}

/// Deterministic large-scale factor `d^-lambda`.
pub fn path_gain(distance: f64, exponent: f64) -> Result<f64, ChannelError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    Ok(distance.powf(-exponent))
}

/// Eavesdropper placement used by the evaluation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EavesdropperPosition {
    A,
    B,
    C,
}

impl EavesdropperPosition {
    /// (distance to PAP, distance to SAP) in meters.
    pub fn distances(self) -> (f64, f64) {
        match self {
            EavesdropperPosition::A => (80.0, 100.0),
            EavesdropperPosition::B => (160.0, 200.0),
            EavesdropperPosition::C => (320.0, 400.0),
        }
    }
}

impl std::str::FromStr for EavesdropperPosition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            other => Err(format!("unknown eavesdropper position {other:?} (expected A, B or C)")),
        }
    }
}

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Link distances and the path-loss exponent.
///
/// The layout is stored as per-link distances rather than coordinates: the
/// reference distance table (PAP-SAP 50 m, SAP-PUE 25 m, PAP-PUE 80 m) cannot
/// be embedded in the plane, so coordinates are an optional way in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    distances: LinkGains,
    path_loss_exponent: f64,
}

impl NodeLayout {
    pub fn new(distances: LinkGains, path_loss_exponent: f64) -> Result<Self, ChannelError> {
        if !(path_loss_exponent > 0.0) || !path_loss_exponent.is_finite() {
            return Err(ChannelError::InvalidExponent(path_loss_exponent));
        }
        for link in Link::ALL {
            let d = distances[link];
            if !(d > 0.0) || !d.is_finite() {
                return Err(ChannelError::NonPositiveDistance(d));
            }
        }
        Ok(Self {
            distances,
            path_loss_exponent,
        })
    }

    pub fn from_positions(
        pap: Point,
        sap: Point,
        pue: Point,
        sue: Point,
        eve: Point,
        path_loss_exponent: f64,
    ) -> Result<Self, ChannelError> {
        let distances = LinkGains {
            pap_pue: pap.distance(&pue),
            pap_sap: pap.distance(&sap),
            pap_eve: pap.distance(&eve),
            sap_pue: sap.distance(&pue),
            sap_sue: sap.distance(&sue),
            sap_eve: sap.distance(&eve),
        };
        Self::new(distances, path_loss_exponent)
    }

    /// Reference geometry with the eavesdropper at one of the A/B/C spots.
    pub fn scenario(position: EavesdropperPosition) -> Self {
        let (eve_pap, eve_sap) = position.distances();
        let distances = LinkGains {
            pap_pue: 80.0,
            pap_sap: 50.0,
            pap_eve: eve_pap,
            sap_pue: 25.0,
            sap_sue: 25.0,
            sap_eve: eve_sap,
        };
        Self::new(distances, 3.5).expect("reference layout is valid")
    }

    pub fn distance(&self, link: Link) -> f64 {
        self.distances[link]
    }

    pub fn distances(&self) -> &LinkGains {
        &self.distances
    }

    pub fn path_loss_exponent(&self) -> f64 {
        self.path_loss_exponent
    }

    pub fn with_eavesdropper(mut self, position: EavesdropperPosition) -> Self {
        let (eve_pap, eve_sap) = position.distances();
        self.distances.pap_eve = eve_pap;
        self.distances.sap_eve = eve_sap;
        self
    }

    /// Large-scale gain of every link.
    pub fn path_gains(&self) -> LinkGains {
        self.distances.map(|_, d| d.powf(-self.path_loss_exponent))
    }
}

impl Default for NodeLayout {
    fn default() -> Self {
        Self::scenario(EavesdropperPosition::B)
    }
}

/// Small-scale fading law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    /// Unit-mean exponential power gain.
    Rayleigh,
    /// Unit-mean gamma power gain with shape `m`.
    Nakagami { m: f64 },
    /// No fading; every gain equals its path gain.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingConfig {
    pub model: FadingModel,
    /// Draw new fades every slot. When false fades are drawn once per episode.
    pub independent_per_slot: bool,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            model: FadingModel::Rayleigh,
            independent_per_slot: true,
        }
    }
}

impl FadingConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if let FadingModel::Nakagami { m } = self.model {
            if !(m >= 0.5) || !m.is_finite() {
                return Err(ChannelError::InvalidShape(m));
            }
        }
        Ok(())
    }

    /// Mean of the fading power gain.
    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LinkGains {
        match self.model {
            FadingModel::Rayleigh => LinkGains::from_fn(|_| {
                let u: f64 = rng.random();
                -(1.0 - u).ln()
            }),
            FadingModel::Nakagami { m } => {
                let gamma = Gamma::new(m, 1.0 / m).expect("validated shape");
                LinkGains::from_fn(|_| gamma.sample(rng))
            }
            FadingModel::None => LinkGains::splat(1.0),
        }
    }
}

/// Absolute half-widths `delta` of the estimation-error region per link.
pub fn absolute_bounds(layout: &NodeLayout, fading: &FadingConfig, relative: f64) -> Result<LinkGains, ChannelError> {
    let bounds = layout.path_gains().map(|_, g| relative * g * fading.mean());
    validate_bounds(&bounds)?;
    Ok(bounds)
}

fn validate_bounds(bounds: &LinkGains) -> Result<(), ChannelError> {
    for link in Link::ALL {
        let value = bounds[link];
        if !(value >= 0.0) || !value.is_finite() {
            return Err(ChannelError::InvalidBound { link, value });
        }
    }
    Ok(())
}

/// True and estimated gains for one slot.
///
/// The eavesdropper estimates exist only inside the environment, where the
/// robust objectives need them. Agent observations never carry them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    true_gains: LinkGains,
    estimates: LinkGains,
    bounds: LinkGains,
}

impl ChannelSet {
    /// Builds a set from known parts. Estimates must lie within the bounds.
    pub fn new(true_gains: LinkGains, estimates: LinkGains, bounds: LinkGains) -> Self {
        Self {
            true_gains,
            estimates,
            bounds,
        }
    }

    /// A set with perfect estimates.
    pub fn exact(true_gains: LinkGains) -> Self {
        Self::new(true_gains, true_gains, LinkGains::default())
    }

    /// Estimates `h_bar = max(h - delta * zeta, 0)` with `zeta` drawn from the
    /// error class on `[-1, 1]`.
    pub fn estimate<R: Rng + ?Sized>(true_gains: LinkGains, bounds: LinkGains, class: ErrorClass, rng: &mut R) -> Self {
        let estimates = true_gains.zip_map(&bounds, |_, h, delta| {
            if delta == 0.0 {
                h
            } else {
                (h - delta * class.sample(rng)).max(0.0)
            }
        });
        Self::new(true_gains, estimates, bounds)
    }

    pub fn true_gains(&self) -> &LinkGains {
        &self.true_gains
    }

    pub fn estimates(&self) -> &LinkGains {
        &self.estimates
    }

    pub fn bounds(&self) -> &LinkGains {
        &self.bounds
    }

    pub fn error(&self, link: Link) -> f64 {
        self.true_gains[link] - self.estimates[link]
    }
}

/// Draws fades and estimates for one slot.
pub fn draw_channel_set<R: Rng + ?Sized>(
    layout: &NodeLayout,
    fading: &FadingConfig,
    bounds: &LinkGains,
    class: ErrorClass,
    rng: &mut R,
) -> Result<ChannelSet, ChannelError> {
    validate_bounds(bounds)?;
    let fades = fading.draw(rng);
    Ok(channel_set_from_fades(layout, &fades, bounds, class, rng))
}

pub fn channel_set_from_fades<R: Rng + ?Sized>(
    layout: &NodeLayout,
    fades: &LinkGains,
    bounds: &LinkGains,
    class: ErrorClass,
    rng: &mut R,
) -> ChannelSet {
    let true_gains = layout.path_gains().zip_map(fades, |_, g, f| g * f);
    ChannelSet::estimate(true_gains, *bounds, class, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_gain_examples() {
        assert_eq!(path_gain(1.0, 3.5).unwrap(), 1.0);
        assert_eq!(path_gain(2.0, 0.0).unwrap(), 1.0);
        let g = path_gain(80.0, 3.5).unwrap();
        // 80^-3.5 = 1 / (80^3 * sqrt(80))
        let expected = 1.0 / (512_000.0 * 80f64.sqrt());
        assert!((g - expected).abs() / expected < 1e-14);
        assert!((g - 2.18e-7).abs() < 0.01e-7);
    }

    #[test]
    fn path_gain_rejects_non_positive_distance() {
        assert!(path_gain(0.0, 3.5).is_err());
        assert!(path_gain(-1.0, 3.5).is_err());
        assert!(path_gain(f64::NAN, 3.5).is_err());
    }

    #[test]
    fn layout_validation() {
        let mut d = *NodeLayout::default().distances();
        d.sap_sue = 0.0;
        assert!(NodeLayout::new(d, 3.5).is_err());
        assert!(NodeLayout::new(*NodeLayout::default().distances(), 0.0).is_err());
    }

    #[test]
    fn scenario_b_distances() {
        let layout = NodeLayout::scenario(EavesdropperPosition::B);
        assert_eq!(layout.distance(Link::PapEve), 160.0);
        assert_eq!(layout.distance(Link::SapEve), 200.0);
        assert_eq!(layout.distance(Link::PapPue), 80.0);
        assert_eq!(layout.distance(Link::SapPue), 25.0);
        assert_eq!(layout.distance(Link::SapSue), 25.0);
        assert_eq!(layout.distance(Link::PapSap), 50.0);
    }

    #[test]
    fn positions_give_euclidean_distances() {
        let layout = NodeLayout::from_positions(
            Point::new(0.0, 0.0),
            Point::new(30.0, 40.0),
            Point::new(60.0, 80.0),
            Point::new(30.0, 65.0),
            Point::new(-160.0, 0.0),
            3.0,
        )
        .unwrap();
        assert_eq!(layout.distance(Link::PapSap), 50.0);
        assert_eq!(layout.distance(Link::SapPue), 50.0);
        assert_eq!(layout.distance(Link::SapSue), 25.0);
        assert!(NodeLayout::from_positions(
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(3.0, 0.0),
            3.0
        )
        .is_err());
    }

    #[test]
    fn zero_bounds_give_exact_estimates() {
        let layout = NodeLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let set = draw_channel_set(
                &layout,
                &FadingConfig::default(),
                &LinkGains::default(),
                ErrorClass::Bounded,
                &mut rng,
            )
            .unwrap();
            assert_eq!(set.true_gains(), set.estimates());
        }
    }

    #[test]
    fn seeded_draws_are_identical() {
        let layout = NodeLayout::default();
        let fading = FadingConfig::default();
        let bounds = absolute_bounds(&layout, &fading, 0.2).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| draw_channel_set(&layout, &fading, &bounds, ErrorClass::Bounded, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn relative_bound_holds_over_many_draws() {
        // delta is 10% of the nominal (mean) gain of each link.
        let layout = NodeLayout::default();
        let fading = FadingConfig::default();
        let bounds = absolute_bounds(&layout, &fading, 0.10).unwrap();
        let nominal = layout.path_gains();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let set = draw_channel_set(&layout, &fading, &bounds, ErrorClass::Bounded, &mut rng).unwrap();
            for link in Link::ALL {
                assert!(set.true_gains()[link] >= 0.0);
                assert!(set.estimates()[link] >= 0.0);
                assert!(set.error(link).abs() <= bounds[link] * (1.0 + 1e-12));
            }
            worst = worst.max(set.error(Link::PapSap).abs() / nominal.pap_sap);
        }
        assert!(worst <= 0.10 + 1e-12, "worst relative error {worst}");
        assert!(worst > 0.09, "errors should fill the region, got {worst}");
    }

    #[test]
    fn gains_decrease_with_distance() {
        let mut last = f64::INFINITY;
        for d in [1.0, 5.0, 25.0, 50.0, 80.0, 160.0, 400.0] {
            let g = path_gain(d, 3.5).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn nakagami_fades_have_unit_mean() {
        let fading = FadingConfig {
            model: FadingModel::Nakagami { m: 2.0 },
            independent_per_slot: true,
        };
        fading.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mean = (0..n).map(|_| fading.draw(&mut rng).pap_pue).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
        assert!(FadingConfig {
            model: FadingModel::Nakagami { m: 0.1 },
            independent_per_slot: true
        }
        .validate()
        .is_err());
    }
}
