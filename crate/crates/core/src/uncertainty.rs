//! Robust evaluation of the slot objective and constraints under imperfect
//! channel and battery knowledge.
//!
//! Four models are supported:
//! - exact: true values, no robustness;
//! - worst case: every uncertain quantity sits at the bad end of its box;
//! - stochastic: chance constraints resolved by Monte Carlo quantiles;
//! - Bernstein: closed-form safe margins from the error distribution class.
//!
//! [`grid_min_oracle`] and [`violation_probability_mc`] are brute-force
//! references used to check the closed forms.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{
    pap_causality_slack, pap_overflow_excess, sap_causality_slack, sap_overflow_excess, BatteryState,
};
use crate::channel::{Link, LinkGains};
use crate::constraint::{Constraint, Violations};
use crate::phy::{
    efficiency_term, energy_consumption, harvested_energy_sap, link_rates, link_rates_in_scenario, select_scenario,
    NoiseConfig, PhyConstants, PowerAllocation, RateBundle, Scenario,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("violation threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("error half-width must be finite and non-negative, got {0}")]
    InvalidWidth(f64),
    #[error("need at least {needed} Monte Carlo samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("grid needs at least 9 points per dimension, got {0}")]
    GridTooCoarse(usize),
}

/// Distribution class of the normalized estimation error `zeta` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Any distribution supported on `[-1, 1]`. Sampled uniformly.
    #[default]
    Bounded,
    /// Unimodal on `[-1, 1]`. Sampled from the triangle with its mode at -1.
    Unimodal,
    /// Symmetric and unimodal on `[-1, 1]`. Sampled from the symmetric triangle.
    SymmetricUnimodal,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [ErrorClass::Bounded, ErrorClass::Unimodal, ErrorClass::SymmetricUnimodal];

    pub fn params(self) -> BernsteinParams {
        table1_params(self)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            ErrorClass::Bounded => 2.0 * u - 1.0,
            // Density (1 - x) / 2 on [-1, 1]; inverse CDF.
            ErrorClass::Unimodal => 1.0 - 2.0 * (1.0 - u).sqrt(),
            ErrorClass::SymmetricUnimodal => {
                let v: f64 = rng.random();
                u + v - 1.0
            }
        }
    }
}

impl std::str::FromStr for ErrorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bounded" => Ok(Self::Bounded),
            "unimodal" => Ok(Self::Unimodal),
            "symmetric_unimodal" | "symmetric-unimodal" => Ok(Self::SymmetricUnimodal),
            other => Err(format!("unknown error class {other:?}")),
        }
    }
}

/// Constants of the Bernstein safe approximation for one error class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinParams {
    pub chi_plus: f64,
    pub tau: f64,
}

pub fn table1_params(class: ErrorClass) -> BernsteinParams {
    match class {
        ErrorClass::Bounded => BernsteinParams {
            chi_plus: 1.0,
            tau: 0.0,
        },
        ErrorClass::Unimodal => BernsteinParams {
            chi_plus: 0.5,
            tau: 1.0 / 12f64.sqrt(),
        },
        ErrorClass::SymmetricUnimodal => BernsteinParams {
            chi_plus: 0.0,
            tau: 1.0 / 3f64.sqrt(),
        },
    }
}

/// Safe margin `chi * eps + sqrt(2 ln(1/xi)) * tau * eps`.
pub fn bernstein_margin(eps: f64, xi: f64, params: BernsteinParams) -> Result<f64, UncertaintyError> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(UncertaintyError::InvalidThreshold(xi));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(UncertaintyError::InvalidWidth(eps));
    }
    Ok(params.chi_plus * eps + (2.0 * (1.0 / xi).ln()).sqrt() * params.tau * eps)
}

/// Allowed violation probability per chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub obj_nom: f64,
    pub obj_den: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Thresholds {
    pub fn uniform(xi: f64) -> Self {
        Self {
            obj_nom: xi,
            obj_den: xi,
            c1: xi,
            c2: xi,
            c3: xi,
            c4: xi,
            c5: xi,
        }
    }

    /// Threshold for one of the battery or rate constraints. The power limits
    /// are deterministic and have none.
    pub fn for_constraint(&self, c: Constraint) -> Option<f64> {
        match c {
            Constraint::C1 => Some(self.c1),
            Constraint::C2 => Some(self.c2),
            Constraint::C3 => Some(self.c3),
            Constraint::C4 => Some(self.c4),
            Constraint::C5 => Some(self.c5),
            Constraint::C6 | Constraint::C7 => None,
        }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        for xi in [self.obj_nom, self.obj_den, self.c1, self.c2, self.c3, self.c4, self.c5] {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(UncertaintyError::InvalidThreshold(xi));
            }
        }
        Ok(())
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::uniform(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Exact,
    WorstCase,
    Stochastic,
    Bernstein,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Exact,
        ModelKind::WorstCase,
        ModelKind::Stochastic,
        ModelKind::Bernstein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Exact => "exact",
            ModelKind::WorstCase => "worst_case",
            ModelKind::Stochastic => "stochastic",
            ModelKind::Bernstein => "bernstein",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "worst_case" | "worst-case" => Ok(Self::WorstCase),
            "stochastic" => Ok(Self::Stochastic),
            "bernstein" => Ok(Self::Bernstein),
            other => Err(format!("unknown uncertainty model {other:?}")),
        }
    }
}

/// How the environment treats imperfect knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyModel {
    pub kind: ModelKind,
    /// Channel error half-width as a fraction of each link's mean gain.
    pub channel_delta: f64,
    /// Battery error half-width as a fraction of battery capacity.
    pub battery_delta: f64,
    pub class: ErrorClass,
    pub thresholds: Thresholds,
    /// Bernstein only: move legitimate channels and batteries down by the
    /// margin instead of up.
    pub conservative_signs: bool,
    /// Stochastic only: samples per slot.
    pub mc_samples: usize,
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        Self {
            kind: ModelKind::Exact,
            channel_delta: 0.0,
            battery_delta: 0.0,
            class: ErrorClass::Bounded,
            thresholds: Thresholds::default(),
            conservative_signs: true,
            mc_samples: 1000,
        }
    }
}

impl UncertaintyModel {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn with_kind(kind: ModelKind, delta: f64) -> Self {
        Self {
            kind,
            channel_delta: delta,
            battery_delta: delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        for d in [self.channel_delta, self.battery_delta] {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(UncertaintyError::InvalidWidth(d));
            }
        }
        self.thresholds.validate()?;
        if self.kind == ModelKind::Stochastic && self.mc_samples < 1000 {
            return Err(UncertaintyError::TooFewSamples {
                needed: 1000,
                got: self.mc_samples,
            });
        }
        Ok(())
    }
}

/// Objective numerator and denominator for one slot under some model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Secrecy rate (or its robust stand-in), bit/s/Hz.
    pub secrecy: f64,
    /// Energy (or its robust stand-in), J.
    pub energy: f64,
    /// `log2(secrecy / energy)` after flooring.
    pub value: f64,
    /// PUE end-to-end rate under the same model, bit/s/Hz.
    pub primary_rate: f64,
    /// Set when the numerator had to be floored because it was not positive.
    pub degenerate: bool,
}

impl ObjectiveTerms {
    fn new(secrecy: f64, energy: f64, primary_rate: f64, consts: &PhyConstants) -> Self {
        Self {
            secrecy,
            energy,
            value: efficiency_term(secrecy, energy, consts),
            primary_rate,
            degenerate: secrecy <= 0.0,
        }
    }
}

/// Rates and objective from a deterministic robust evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustEvaluation {
    pub rates: RateBundle,
    pub objective: ObjectiveTerms,
}

/// Objective with perfect knowledge.
pub fn exact_objective(
    gains: &LinkGains,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
) -> RobustEvaluation {
    let rates = link_rates(gains, alloc, noise);
    let harvest = harvested_energy_sap(alloc.p_pp, alloc.beta, gains.pap_sap, consts);
    let energy = energy_consumption(alloc, harvest, consts);
    RobustEvaluation {
        objective: ObjectiveTerms::new(crate::phy::secrecy_rate(&rates), energy, rates.primary_rate(), consts),
        rates,
    }
}

/// Gains moved to one end of their boxes: legitimate links by `legit_sign *
/// margin`, eavesdropper links always up. Results are clipped at zero.
pub fn shifted_gains(estimates: &LinkGains, margins: &LinkGains, legit_sign: f64) -> LinkGains {
    estimates.zip_map(margins, |link, h, m| {
        let sign = if link.is_eavesdropper() { 1.0 } else { legit_sign };
        (h + sign * m).max(0.0)
    })
}

fn margined_evaluation(
    estimates: &LinkGains,
    rate_margins: &LinkGains,
    energy_margins: &LinkGains,
    legit_sign: f64,
    scenario: Scenario,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
) -> RobustEvaluation {
    let rate_gains = shifted_gains(estimates, rate_margins, legit_sign);
    let rates = link_rates_in_scenario(&rate_gains, alloc, noise, scenario);
    let energy_gains = shifted_gains(estimates, energy_margins, legit_sign);
    let harvest = harvested_energy_sap(alloc.p_pp, alloc.beta, energy_gains.pap_sap, consts);
    let energy = energy_consumption(alloc, harvest, consts);
    RobustEvaluation {
        objective: ObjectiveTerms::new(crate::phy::secrecy_rate(&rates), energy, rates.primary_rate(), consts),
        rates,
    }
}

/// Worst-case counterpart with the SIC order taken from the estimates.
pub fn worst_case_rates(
    estimates: &LinkGains,
    bounds: &LinkGains,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
) -> RobustEvaluation {
    let scenario = select_scenario(estimates.sap_pue, estimates.sap_sue);
    worst_case_rates_in_scenario(estimates, bounds, scenario, alloc, noise, consts)
}

/// Worst-case counterpart for a fixed SIC order: legitimate gains at
/// `h_bar - delta`, eavesdropper gains at `h_bar + delta`, harvest at its low end.
pub fn worst_case_rates_in_scenario(
    estimates: &LinkGains,
    bounds: &LinkGains,
    scenario: Scenario,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
) -> RobustEvaluation {
    margined_evaluation(estimates, bounds, bounds, -1.0, scenario, alloc, noise, consts)
}

/// Bernstein margins on every link for one threshold.
pub fn bernstein_link_margins(bounds: &LinkGains, xi: f64, class: ErrorClass) -> Result<LinkGains, UncertaintyError> {
    let params = class.params();
    let mut out = LinkGains::default();
    for link in Link::ALL {
        out[link] = bernstein_margin(bounds[link], xi, params)?;
    }
    Ok(out)
}

/// Bernstein counterpart. Rates use `rate_margins` (numerator threshold) and
/// the harvest credit uses `energy_margins` (denominator threshold). With
/// `conservative` unset every margin is added, which is optimistic on the
/// legitimate links.
pub fn bernstein_rates(
    estimates: &LinkGains,
    rate_margins: &LinkGains,
    energy_margins: &LinkGains,
    conservative: bool,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
) -> RobustEvaluation {
    let scenario = select_scenario(estimates.sap_pue, estimates.sap_sue);
    let sign = if conservative { -1.0 } else { 1.0 };
    margined_evaluation(
        estimates,
        rate_margins,
        energy_margins,
        sign,
        scenario,
        alloc,
        noise,
        consts,
    )
}

/// Draws one plausible truth around the estimates.
pub fn sample_gains<R: Rng + ?Sized>(
    estimates: &LinkGains,
    bounds: &LinkGains,
    class: ErrorClass,
    rng: &mut R,
) -> LinkGains {
    estimates.zip_map(bounds, |_, h, d| {
        if d == 0.0 {
            h
        } else {
            (h + d * class.sample(rng)).max(0.0)
        }
    })
}

fn sample_value<R: Rng + ?Sized>(estimate: f64, delta: f64, class: ErrorClass, rng: &mut R) -> f64 {
    if delta == 0.0 {
        estimate
    } else {
        (estimate + delta * class.sample(rng)).max(0.0)
    }
}

/// Empirical quantiles standing in for the chance-constrained objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticObjective {
    /// Secrecy level exceeded with probability at least `1 - xi_nom`.
    pub u: f64,
    /// Energy level exceeded with probability at most `xi_den`.
    pub v: f64,
    pub objective: ObjectiveTerms,
}

/// Index of the empirical `q`-quantile in a sorted sample of size `n`.
fn quantile_index(q: f64, n: usize) -> usize {
    ((q * n as f64).ceil() as usize).clamp(1, n) - 1
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

#[allow(clippy::too_many_arguments)]
pub fn stochastic_objective<R: Rng + ?Sized>(
    estimates: &LinkGains,
    bounds: &LinkGains,
    class: ErrorClass,
    xi_nom: f64,
    xi_den: f64,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    consts: &PhyConstants,
    n_mc: usize,
    rng: &mut R,
) -> Result<StochasticObjective, UncertaintyError> {
    for xi in [xi_nom, xi_den] {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(UncertaintyError::InvalidThreshold(xi));
        }
    }
    if n_mc < 1000 {
        return Err(UncertaintyError::TooFewSamples {
            needed: 1000,
            got: n_mc,
        });
    }
    let mut secrecy = Vec::with_capacity(n_mc);
    let mut energy = Vec::with_capacity(n_mc);
    let mut primary = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let g = sample_gains(estimates, bounds, class, rng);
        let eval = exact_objective(&g, alloc, noise, consts);
        secrecy.push(eval.objective.secrecy);
        energy.push(eval.objective.energy);
        primary.push(eval.objective.primary_rate);
    }
    Ok(quantile_objective(secrecy, energy, primary, xi_nom, xi_den, consts))
}

fn quantile_objective(
    secrecy: Vec<f64>,
    energy: Vec<f64>,
    primary: Vec<f64>,
    xi_nom: f64,
    xi_den: f64,
    consts: &PhyConstants,
) -> StochasticObjective {
    let n = secrecy.len();
    let u = sorted(secrecy)[quantile_index(xi_nom, n)];
    let v = sorted(energy)[quantile_index(1.0 - xi_den, n)];
    let primary = sorted(primary)[quantile_index(xi_nom, n)];
    StochasticObjective {
        u,
        v,
        objective: ObjectiveTerms::new(u, v, primary, consts),
    }
}

/// Everything besides channels and batteries that the battery and rate
/// constraints depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotContext {
    pub alloc: PowerAllocation,
    pub noise: NoiseConfig,
    pub consts: PhyConstants,
    /// Renewable energy reaching the PAP this slot, J.
    pub pap_arrival: f64,
    /// Per-slot PUE rate requirement, bit/s/Hz.
    pub min_primary_rate: f64,
    pub pap_capacity: f64,
    pub sap_capacity: f64,
}

impl SlotContext {
    fn harvest(&self, h_pap_sap: f64) -> f64 {
        harvested_energy_sap(self.alloc.p_pp, self.alloc.beta, h_pap_sap, &self.consts)
    }

    fn power_violations(&self) -> Violations {
        let mut v = Violations::none();
        v.set(
            Constraint::C6,
            self.alloc.p_pp > self.consts.pap_max_power * (1.0 + 1e-12),
        );
        v.set(
            Constraint::C7,
            self.alloc.sap_power() > self.consts.sap_max_power * (1.0 + 1e-12),
        );
        v
    }
}

/// Whether a single constraint fails for one fully known realization.
pub fn realization_violates(
    c: Constraint,
    ctx: &SlotContext,
    gains: &LinkGains,
    pap_battery: f64,
    sap_battery: f64,
) -> bool {
    let a = &ctx.alloc;
    let k = &ctx.consts;
    match c {
        Constraint::C1 => pap_causality_slack(pap_battery, a, k) < 0.0,
        Constraint::C2 => sap_causality_slack(sap_battery, ctx.harvest(gains.pap_sap), a, k) < 0.0,
        Constraint::C3 => pap_overflow_excess(pap_battery, ctx.pap_arrival, ctx.pap_capacity, a, k) > 0.0,
        Constraint::C4 => sap_overflow_excess(sap_battery, ctx.harvest(gains.pap_sap), ctx.sap_capacity, a, k) > 0.0,
        Constraint::C5 => link_rates(gains, a, &ctx.noise).primary_rate() < ctx.min_primary_rate,
        Constraint::C6 => a.p_pp > k.pap_max_power * (1.0 + 1e-12),
        Constraint::C7 => a.sap_power() > k.sap_max_power * (1.0 + 1e-12),
    }
}

/// All constraints for one fully known realization.
pub fn realization_violations(ctx: &SlotContext, gains: &LinkGains, battery: &BatteryState) -> Violations {
    let mut v = Violations::none();
    for c in Constraint::ALL {
        v.set(c, realization_violates(c, ctx, gains, battery.pap, battery.sap));
    }
    v
}

/// What the evaluator knows about the current slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knowledge {
    /// Channel estimates (true gains under the exact model).
    pub gains: LinkGains,
    /// Absolute channel error half-widths.
    pub channel_bounds: LinkGains,
    /// Battery estimates (true balances under the exact model).
    pub battery: BatteryState,
    /// Absolute battery error half-widths `(pap, sap)`.
    pub battery_bounds: (f64, f64),
}

/// Objective and constraint verdict for one slot under a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelVerdict {
    pub objective: ObjectiveTerms,
    pub violations: Violations,
}

/// Evaluates the objective and constraints of the active model.
///
/// The exact model reads `knowledge` as the truth. The robust models read it
/// as estimates plus error bounds.
pub fn evaluate_model<R: Rng + ?Sized>(
    model: &UncertaintyModel,
    knowledge: &Knowledge,
    ctx: &SlotContext,
    rng: &mut R,
) -> Result<ModelVerdict, UncertaintyError> {
    match model.kind {
        ModelKind::Exact => {
            let eval = exact_objective(&knowledge.gains, &ctx.alloc, &ctx.noise, &ctx.consts);
            Ok(ModelVerdict {
                objective: eval.objective,
                violations: realization_violations(ctx, &knowledge.gains, &knowledge.battery),
            })
        }
        ModelKind::WorstCase => {
            let zero = (knowledge.channel_bounds, knowledge.battery_bounds);
            let eval = worst_case_rates(
                &knowledge.gains,
                &knowledge.channel_bounds,
                &ctx.alloc,
                &ctx.noise,
                &ctx.consts,
            );
            let violations = margined_violations(knowledge, ctx, |_| zero, -1.0, eval.objective.primary_rate);
            Ok(ModelVerdict {
                objective: eval.objective,
                violations,
            })
        }
        ModelKind::Bernstein => {
            let params = model.class.params();
            let t = &model.thresholds;
            let margins = |xi: f64| -> Result<(LinkGains, (f64, f64)), UncertaintyError> {
                Ok((
                    bernstein_link_margins(&knowledge.channel_bounds, xi, model.class)?,
                    (
                        bernstein_margin(knowledge.battery_bounds.0, xi, params)?,
                        bernstein_margin(knowledge.battery_bounds.1, xi, params)?,
                    ),
                ))
            };
            let nom = margins(t.obj_nom)?.0;
            let den = margins(t.obj_den)?.0;
            let eval = bernstein_rates(
                &knowledge.gains,
                &nom,
                &den,
                model.conservative_signs,
                &ctx.alloc,
                &ctx.noise,
                &ctx.consts,
            );
            let per_constraint = [
                margins(t.c1)?,
                margins(t.c2)?,
                margins(t.c3)?,
                margins(t.c4)?,
                margins(t.c5)?,
            ];
            let sign = if model.conservative_signs { -1.0 } else { 1.0 };
            let c5 = bernstein_rates(
                &knowledge.gains,
                &per_constraint[4].0,
                &per_constraint[4].0,
                model.conservative_signs,
                &ctx.alloc,
                &ctx.noise,
                &ctx.consts,
            )
            .rates
            .primary_rate();
            let violations = margined_violations(knowledge, ctx, |c| per_constraint[c.index().min(4)], sign, c5);
            Ok(ModelVerdict {
                objective: eval.objective,
                violations,
            })
        }
        ModelKind::Stochastic => stochastic_verdict(model, knowledge, ctx, rng),
    }
}

/// Constraint checks with each uncertain quantity moved by a margin. Lower
/// bounds (causality) move by `sign * margin`; upper bounds (overflow) always
/// move up. `primary_rate` is the margined PUE rate for C5.
fn margined_violations(
    knowledge: &Knowledge,
    ctx: &SlotContext,
    margins: impl Fn(Constraint) -> (LinkGains, (f64, f64)),
    sign: f64,
    primary_rate: f64,
) -> Violations {
    let a = &ctx.alloc;
    let k = &ctx.consts;
    let b = &knowledge.battery;
    let h = knowledge.gains.pap_sap;
    let mut v = ctx.power_violations();

    let (_, (bp, _)) = margins(Constraint::C1);
    v.set(Constraint::C1, pap_causality_slack(b.pap + sign * bp, a, k) < 0.0);

    let (links, (_, bs)) = margins(Constraint::C2);
    let harvest = ctx.harvest((h + sign * links.pap_sap).max(0.0));
    v.set(
        Constraint::C2,
        sap_causality_slack(b.sap + sign * bs, harvest, a, k) < 0.0,
    );

    let (_, (bp, _)) = margins(Constraint::C3);
    v.set(
        Constraint::C3,
        pap_overflow_excess(b.pap + bp, ctx.pap_arrival, ctx.pap_capacity, a, k) > 0.0,
    );

    let (links, (_, bs)) = margins(Constraint::C4);
    let harvest = ctx.harvest(h + links.pap_sap);
    v.set(
        Constraint::C4,
        sap_overflow_excess(b.sap + bs, harvest, ctx.sap_capacity, a, k) > 0.0,
    );

    v.set(Constraint::C5, primary_rate < ctx.min_primary_rate);
    v
}

fn stochastic_verdict<R: Rng + ?Sized>(
    model: &UncertaintyModel,
    knowledge: &Knowledge,
    ctx: &SlotContext,
    rng: &mut R,
) -> Result<ModelVerdict, UncertaintyError> {
    let n = model.mc_samples;
    if n < 1000 {
        return Err(UncertaintyError::TooFewSamples { needed: 1000, got: n });
    }
    let t = &model.thresholds;
    let mut secrecy = Vec::with_capacity(n);
    let mut energy = Vec::with_capacity(n);
    let mut primary = Vec::with_capacity(n);
    let mut counts = [0usize; 5];
    let chance = [
        Constraint::C1,
        Constraint::C2,
        Constraint::C3,
        Constraint::C4,
        Constraint::C5,
    ];
    for _ in 0..n {
        let g = sample_gains(&knowledge.gains, &knowledge.channel_bounds, model.class, rng);
        let bp = sample_value(knowledge.battery.pap, knowledge.battery_bounds.0, model.class, rng);
        let bs = sample_value(knowledge.battery.sap, knowledge.battery_bounds.1, model.class, rng);
        let eval = exact_objective(&g, &ctx.alloc, &ctx.noise, &ctx.consts);
        secrecy.push(eval.objective.secrecy);
        energy.push(eval.objective.energy);
        primary.push(eval.objective.primary_rate);
        for (count, c) in counts.iter_mut().zip(chance) {
            if c == Constraint::C5 {
                *count += usize::from(eval.objective.primary_rate < ctx.min_primary_rate);
            } else {
                *count += usize::from(realization_violates(c, ctx, &g, bp, bs));
            }
        }
    }
    let q = quantile_objective(secrecy, energy, primary, t.obj_nom, t.obj_den, &ctx.consts);
    let mut violations = ctx.power_violations();
    for (count, c) in counts.iter().zip(chance) {
        let xi = t.for_constraint(c).expect("chance constraint has a threshold");
        violations.set(c, *count as f64 / n as f64 > xi);
    }
    Ok(ModelVerdict {
        objective: q.objective,
        violations,
    })
}

/// Empirical violation probability of one constraint when the truth is drawn
/// around `knowledge` with the given error class.
pub fn violation_probability_mc<R: Rng + ?Sized>(
    constraint: Constraint,
    knowledge: &Knowledge,
    ctx: &SlotContext,
    class: ErrorClass,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64, UncertaintyError> {
    if n_mc < 10_000 {
        return Err(UncertaintyError::TooFewSamples {
            needed: 10_000,
            got: n_mc,
        });
    }
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let g = sample_gains(&knowledge.gains, &knowledge.channel_bounds, class, rng);
        let bp = sample_value(knowledge.battery.pap, knowledge.battery_bounds.0, class, rng);
        let bs = sample_value(knowledge.battery.sap, knowledge.battery_bounds.1, class, rng);
        hits += usize::from(realization_violates(constraint, ctx, &g, bp, bs));
    }
    Ok(hits as f64 / n_mc as f64)
}

/// Rate expressions whose minimum over the uncertainty box has a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridExpression {
    /// SUE rate for a fixed SIC order.
    SueRate(Scenario),
    /// MRC rate at the PUE for a fixed SIC order.
    MrcPrimary(Scenario),
    /// PAP to SAP decoding rate.
    PapSapRate,
    /// Smaller of the two primary hops for a fixed SIC order.
    PrimaryRate(Scenario),
}

impl GridExpression {
    pub fn links(self) -> &'static [Link] {
        match self {
            GridExpression::SueRate(_) => &[Link::SapSue],
            GridExpression::MrcPrimary(_) => &[Link::PapPue, Link::SapPue],
            GridExpression::PapSapRate => &[Link::PapSap],
            GridExpression::PrimaryRate(_) => &[Link::PapSap, Link::PapPue, Link::SapPue],
        }
    }

    pub fn evaluate(self, gains: &LinkGains, alloc: &PowerAllocation, noise: &NoiseConfig) -> f64 {
        let scenario = match self {
            GridExpression::SueRate(s) | GridExpression::MrcPrimary(s) | GridExpression::PrimaryRate(s) => s,
            GridExpression::PapSapRate => Scenario::SicAtPue,
        };
        let b = link_rates_in_scenario(gains, alloc, noise, scenario);
        match self {
            GridExpression::SueRate(_) => b.sap_sue,
            GridExpression::MrcPrimary(_) => b.mrc_primary,
            GridExpression::PapSapRate => b.pap_sap,
            GridExpression::PrimaryRate(_) => b.primary_rate(),
        }
    }
}

/// Exhaustive minimum of an expression over the box `[h_bar - delta, h_bar +
/// delta]` (clipped at zero) of the links it depends on.
pub fn grid_min_oracle(
    expr: GridExpression,
    estimates: &LinkGains,
    bounds: &LinkGains,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    points_per_dim: usize,
) -> Result<f64, UncertaintyError> {
    if points_per_dim < 9 {
        return Err(UncertaintyError::GridTooCoarse(points_per_dim));
    }
    let links = expr.links();
    let axes: Vec<Vec<f64>> = links
        .iter()
        .map(|&l| {
            let lo = (estimates[l] - bounds[l]).max(0.0);
            let hi = estimates[l] + bounds[l];
            (0..points_per_dim)
                .map(|i| lo + (hi - lo) * i as f64 / (points_per_dim - 1) as f64)
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; links.len()];
    let mut best = f64::INFINITY;
    loop {
        let mut g = *estimates;
        for (d, &l) in links.iter().enumerate() {
            g[l] = axes[d][idx[d]];
        }
        best = best.min(expr.evaluate(&g, alloc, noise));
        let mut d = 0;
        loop {
            if d == idx.len() {
                return Ok(best);
            }
            idx[d] += 1;
            if idx[d] < points_per_dim {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
