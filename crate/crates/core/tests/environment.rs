use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use secnoma_core::battery::{step_batteries, BatteryState};
use secnoma_core::env::random_action;
use secnoma_core::phy::{link_rates_in_scenario, secrecy_rate, Scenario};
use secnoma_core::uncertainty::worst_case_rates_in_scenario;
use secnoma_core::{
    EavesdropperPosition, EnvConfig, Environment, LinkGains, ModelKind, NoiseConfig, PhyConstants, PowerAllocation,
    UncertaintyModel,
};

fn env_at(position: EavesdropperPosition, model: UncertaintyModel) -> Environment {
    let mut cfg = EnvConfig {
        episode_length: 40,
        uncertainty: model,
        ..EnvConfig::default()
    };
    cfg.layout = cfg.layout.with_eavesdropper(position);
    Environment::new(cfg).unwrap()
}

/// Moving the eavesdropper changes what it hears but never what the agents see.
#[test]
fn observations_do_not_depend_on_the_eavesdropper() {
    for model in [
        UncertaintyModel::exact(),
        UncertaintyModel::with_kind(ModelKind::WorstCase, 0.2),
    ] {
        let mut near = env_at(EavesdropperPosition::A, model);
        let mut far = env_at(EavesdropperPosition::C, model);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(near.reset(3), far.reset(3));
        let mut secrecy_gap = 0.0;
        loop {
            let a = random_action(&mut rng);
            let x = near.step(&a).unwrap();
            let y = far.step(&a).unwrap();
            assert_eq!(x.observation, y.observation);
            assert_eq!(x.info.alloc, y.info.alloc);
            secrecy_gap += y.info.true_secrecy - x.info.true_secrecy;
            if x.done {
                assert!(y.done);
                break;
            }
        }
        assert!(secrecy_gap > 0.0, "a farther eavesdropper should leak less");
    }
}

#[test]
fn uncertain_observations_stay_finite_and_bounded() {
    let mut env = env_at(
        EavesdropperPosition::B,
        UncertaintyModel::with_kind(ModelKind::Bernstein, 0.2),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    env.reset(1);
    while !env.is_done() {
        let out = env.step(&random_action(&mut rng)).unwrap();
        for v in out.observation.joint() {
            assert!(v.is_finite() && v >= 0.0);
        }
        // A noisy reading may overshoot a full battery by at most the error width.
        assert!(out.observation.pap[2] <= 1.2 + 1e-12 && out.observation.sap[2] <= 1.2 + 1e-12);
        assert!(out.reward.global.is_finite());
    }
}

fn alloc() -> impl Strategy<Value = PowerAllocation> {
    (0.0..3.0f64, 0.0..1.5f64, 0.0..1.5f64, 0.0..1.0f64).prop_map(|(a, b, c, d)| PowerAllocation::new(a, b, c, d))
}

fn gains() -> impl Strategy<Value = LinkGains> {
    prop::array::uniform6(-10.0..-5.0f64).prop_map(|e| LinkGains {
        pap_pue: 10f64.powf(e[0]),
        pap_sap: 10f64.powf(e[1]),
        pap_eve: 10f64.powf(e[2]),
        sap_pue: 10f64.powf(e[3]),
        sap_sue: 10f64.powf(e[4]),
        sap_eve: 10f64.powf(e[5]),
    })
}

proptest! {
    #[test]
    fn unclipped_batteries_balance(
        a in alloc(),
        pap in 0.0..20.0f64,
        sap in 0.0..20.0f64,
        arrival in 0.0..1.0f64,
        harvest in 0.0..1e-3f64,
    ) {
        let k = PhyConstants::default();
        let state = BatteryState::new(pap, sap, 1e6, 1e6);
        let step = step_batteries(&state, &a, arrival, harvest, &k);
        prop_assert!(!step.pap_clipped && !step.sap_clipped);
        let pap_out = k.slot_duration * (a.beta + (1.0 - a.beta) / 2.0) * a.p_pp;
        let sap_out = k.slot_duration * (1.0 - a.beta) / 2.0 * (a.p_sp + a.p_ss);
        prop_assert!((step.next.pap - (pap + k.pap_storage_efficiency * arrival - pap_out)).abs() <= 1e-12 * 20.0);
        prop_assert!((step.next.sap - (sap + k.sap_storage_efficiency * harvest - sap_out)).abs() <= 1e-12 * 20.0);
    }

    #[test]
    fn clipped_batteries_stop_at_capacity(a in alloc(), cap in 1.0..5.0f64, arrival in 0.0..10.0f64) {
        let state = BatteryState::new(cap, cap, cap, cap);
        let step = step_batteries(&state, &a, arrival, 0.0, &PhyConstants::default());
        prop_assert!(step.next.pap <= cap && step.next.sap <= cap);
    }

    /// Every realization inside the box, kept in the same decoding order, does
    /// at least as well as the worst case.
    #[test]
    fn worst_case_secrecy_is_a_lower_bound(
        est in gains(),
        a in alloc(),
        widths in prop::array::uniform6(0.0..0.5f64),
        zeta in prop::array::uniform6(-1.0..1.0f64),
        sue_first in any::<bool>(),
    ) {
        let scenario = if sue_first { Scenario::SicAtSue } else { Scenario::SicAtPue };
        let bounds = LinkGains::from_fn(|l| est[l] * widths[l.index()]);
        let truth = LinkGains::from_fn(|l| est[l] + bounds[l] * zeta[l.index()]);
        let noise = NoiseConfig::default();
        let k = PhyConstants::default();
        let worst = worst_case_rates_in_scenario(&est, &bounds, scenario, &a, &noise, &k);
        let real = link_rates_in_scenario(&truth, &a, &noise, scenario);
        let tol = 1e-12 * (1.0 + secrecy_rate(&real));
        prop_assert!(worst.objective.secrecy <= secrecy_rate(&real) + tol);
        prop_assert!(worst.rates.primary_rate() <= real.primary_rate() + tol);
    }
}
