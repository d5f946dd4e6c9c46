//! Physical-layer formulas: harvesting, SNRs, link rates, secrecy and energy.
//!
//! Everything here is a pure function of the gains it is handed. Callers pick
//! which gains to pass (true, estimated or margined); nothing in this module
//! decides that on its own.

use serde::{Deserialize, Serialize};

use crate::channel::LinkGains;

/// Which receiver performs SIC in the NOMA phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// `h_sap_pue >= h_sap_sue`: the PUE cancels the SUE signal, the SUE sees interference.
    SicAtPue,
    /// `h_sap_sue > h_sap_pue`: the SUE cancels, the PUE sees interference.
    SicAtSue,
}

pub fn select_scenario(h_sap_pue: f64, h_sap_sue: f64) -> Scenario {
    if h_sap_pue >= h_sap_sue {
        Scenario::SicAtPue
    } else {
        Scenario::SicAtSue
    }
}

/// Decision variables for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// PAP transmit power, W.
    pub p_pp: f64,
    /// SAP power spent relaying the primary message, W.
    pub p_sp: f64,
    /// SAP power spent on its own message, W.
    pub p_ss: f64,
    /// Fraction of the slot used for wireless energy transfer.
    pub beta: f64,
}

impl PowerAllocation {
    pub fn new(p_pp: f64, p_sp: f64, p_ss: f64, beta: f64) -> Self {
        Self { p_pp, p_sp, p_ss, beta }
    }

    /// Share of the slot each data phase gets.
    pub fn data_fraction(&self) -> f64 {
        (1.0 - self.beta) / 2.0
    }

    pub fn sap_power(&self) -> f64 {
        self.p_sp + self.p_ss
    }
}

/// Receiver noise powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// At the PUE for the PAP signal.
    pub pp: f64,
    /// At the SAP.
    pub ps: f64,
    /// At the eavesdropper for the PAP signal.
    pub pe: f64,
    /// At the PUE for the SAP signal.
    pub sp: f64,
    /// At the SUE.
    pub ss: f64,
    /// At the eavesdropper for the SAP signal.
    pub se: f64,
}

impl NoiseConfig {
    pub fn uniform(power: f64) -> Self {
        Self {
            pp: power,
            ps: power,
            pe: power,
            sp: power,
            ss: power,
            se: power,
        }
    }

    /// Same noise everywhere from a density in dBm/Hz and a bandwidth in Hz.
    pub fn from_density(dbm_per_hz: f64, bandwidth_hz: f64) -> Self {
        Self::uniform(dbm_to_watts(dbm_per_hz) * bandwidth_hz)
    }

    pub fn is_valid(&self) -> bool {
        [self.pp, self.ps, self.pe, self.sp, self.ss, self.se]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::from_density(-170.0, 200e3)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Slot timing, efficiencies, power limits and fixed energy costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConstants {
    /// Slot duration, s.
    pub slot_duration: f64,
    /// RF-to-DC conversion at the SAP.
    pub sap_conversion_efficiency: f64,
    /// Conversion at the PAP. Listed for completeness; no formula uses it.
    pub pap_conversion_efficiency: f64,
    /// Storage efficiency of the PAP battery.
    pub pap_storage_efficiency: f64,
    /// Storage efficiency of the SAP battery.
    pub sap_storage_efficiency: f64,
    /// Power amplifier efficiency.
    pub amplifier_efficiency: f64,
    /// Constant circuit energy per slot, J.
    pub circuit_energy: f64,
    /// Fixed per-slot drain of the PAP battery, J.
    pub pap_idle_energy: f64,
    /// Fixed per-slot drain of the SAP battery, J.
    pub sap_idle_energy: f64,
    /// PAP power limit, W.
    pub pap_max_power: f64,
    /// SAP total power limit, W.
    pub sap_max_power: f64,
    /// Floor applied to the secrecy rate inside the efficiency log.
    pub rate_floor: f64,
    /// Floor applied to the slot energy inside the efficiency log.
    pub energy_floor: f64,
}

impl Default for PhyConstants {
    fn default() -> Self {
        Self {
            slot_duration: 1e-3,
            sap_conversion_efficiency: 0.5,
            pap_conversion_efficiency: 0.6,
            pap_storage_efficiency: 0.5,
            sap_storage_efficiency: 0.5,
            amplifier_efficiency: 0.9,
            circuit_energy: 0.1,
            pap_idle_energy: 0.0,
            sap_idle_energy: 0.0,
            pap_max_power: 3.0,
            sap_max_power: 3.0,
            rate_floor: 1e-6,
            energy_floor: 1e-6,
        }
    }
}

impl PhyConstants {
    pub fn validate(&self) -> Result<(), String> {
        let efficiencies = [
            ("sap_conversion_efficiency", self.sap_conversion_efficiency),
            ("pap_conversion_efficiency", self.pap_conversion_efficiency),
            ("pap_storage_efficiency", self.pap_storage_efficiency),
            ("sap_storage_efficiency", self.sap_storage_efficiency),
            ("amplifier_efficiency", self.amplifier_efficiency),
        ];
        for (name, v) in efficiencies {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        let positive = [
            ("slot_duration", self.slot_duration),
            ("pap_max_power", self.pap_max_power),
            ("sap_max_power", self.sap_max_power),
            ("rate_floor", self.rate_floor),
            ("energy_floor", self.energy_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("circuit_energy", self.circuit_energy),
            ("pap_idle_energy", self.pap_idle_energy),
            ("sap_idle_energy", self.sap_idle_energy),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Energy the SAP collects during the transfer phase, J.
pub fn harvested_energy_sap(p_pp: f64, beta: f64, h_pap_sap: f64, consts: &PhyConstants) -> f64 {
    consts.slot_duration * beta * consts.sap_conversion_efficiency * p_pp * h_pap_sap
}

/// SNRs and rates for one slot. Rates are in bit/s/Hz and already carry the
/// `(1 - beta) / 2` phase share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBundle {
    pub scenario: Scenario,
    pub data_fraction: f64,
    pub snr_pap_pue: f64,
    pub snr_pap_sap: f64,
    pub snr_pap_eve: f64,
    /// SAP relay signal at the PUE, after SIC in the first scenario.
    pub snr_sap_pue: f64,
    /// SAP own signal at the SUE, after SIC in the second scenario.
    pub snr_sap_sue: f64,
    pub snr_sap_relay_eve: f64,
    pub snr_sap_own_eve: f64,
    pub pap_sap: f64,
    pub mrc_primary: f64,
    pub sap_sue: f64,
    pub mrc_eve: f64,
    pub sap_own_eve: f64,
}

impl RateBundle {
    /// Rate the primary message gets end to end: both hops must decode.
    pub fn primary_rate(&self) -> f64 {
        self.pap_sap.min(self.mrc_primary)
    }

    pub fn primary_secrecy(&self) -> f64 {
        (self.primary_rate() - self.mrc_eve).max(0.0)
    }

    pub fn secondary_secrecy(&self) -> f64 {
        (self.sap_sue - self.sap_own_eve).max(0.0)
    }

    /// `log2(1 + snr)` terms without the phase share, in field order
    /// `[pap_sap, mrc_primary, sap_sue, mrc_eve, sap_own_eve]`.
    pub fn spectral_terms(&self) -> [f64; 5] {
        [
            (1.0 + self.snr_pap_sap).log2(),
            (1.0 + self.snr_pap_pue + self.snr_sap_pue).log2(),
            (1.0 + self.snr_sap_sue).log2(),
            (1.0 + self.snr_pap_eve + self.snr_sap_relay_eve).log2(),
            (1.0 + self.snr_sap_own_eve).log2(),
        ]
    }
}

/// Rates with the SIC order fixed by the caller.
pub fn link_rates_in_scenario(
    gains: &LinkGains,
    alloc: &PowerAllocation,
    noise: &NoiseConfig,
    scenario: Scenario,
) -> RateBundle {
    let PowerAllocation { p_pp, p_sp, p_ss, .. } = *alloc;
    let frac = alloc.data_fraction();

    let snr_pap_pue = p_pp * gains.pap_pue / noise.pp;
    let snr_pap_sap = p_pp * gains.pap_sap / noise.ps;
    let snr_pap_eve = p_pp * gains.pap_eve / noise.pe;

    let (snr_sap_pue, snr_sap_sue) = match scenario {
        Scenario::SicAtPue => (
            p_sp * gains.sap_pue / noise.sp,
            p_ss * gains.sap_sue / (p_sp * gains.sap_sue + noise.ss),
        ),
        Scenario::SicAtSue => (
            p_sp * gains.sap_pue / (p_ss * gains.sap_pue + noise.sp),
            p_ss * gains.sap_sue / noise.ss,
        ),
    };

    // The eavesdropper is assumed to cancel all interference.
    let snr_sap_relay_eve = p_sp * gains.sap_eve / noise.se;
    let snr_sap_own_eve = p_ss * gains.sap_eve / noise.se;

    let rate = |snr: f64| frac * (1.0 + snr).log2();
    RateBundle {
        scenario,
        data_fraction: frac,
        snr_pap_pue,
        snr_pap_sap,
        snr_pap_eve,
        snr_sap_pue,
        snr_sap_sue,
        snr_sap_relay_eve,
        snr_sap_own_eve,
        pap_sap: rate(snr_pap_sap),
        mrc_primary: rate(snr_pap_pue + snr_sap_pue),
        sap_sue: rate(snr_sap_sue),
        mrc_eve: rate(snr_pap_eve + snr_sap_relay_eve),
        sap_own_eve: rate(snr_sap_own_eve),
    }
}

/// Rates with the SIC order that the given gains imply.
pub fn link_rates(gains: &LinkGains, alloc: &PowerAllocation, noise: &NoiseConfig) -> RateBundle {
    let scenario = select_scenario(gains.sap_pue, gains.sap_sue);
    link_rates_in_scenario(gains, alloc, noise, scenario)
}

/// Network secrecy rate, bit/s/Hz.
pub fn secrecy_rate(bundle: &RateBundle) -> f64 {
    bundle.primary_secrecy() + bundle.secondary_secrecy()
}

/// Energy spent by the network in one slot, J. May be near zero or negative
/// when the harvest credit exceeds transmit energy; see [`floored_energy`].
pub fn energy_consumption(alloc: &PowerAllocation, harvested: f64, consts: &PhyConstants) -> f64 {
    let frac = alloc.data_fraction();
    let radiated = (alloc.beta + frac) * alloc.p_pp + frac * (alloc.p_sp + alloc.p_ss);
    consts.slot_duration * consts.amplifier_efficiency * radiated - consts.amplifier_efficiency * harvested
        + consts.circuit_energy
}

pub fn floored_energy(energy: f64, consts: &PhyConstants) -> f64 {
    energy.max(consts.energy_floor)
}

pub fn floored_rate(rate: f64, consts: &PhyConstants) -> f64 {
    rate.max(consts.rate_floor)
}

/// `log2(R / E)` with both floors applied.
pub fn efficiency_term(secrecy: f64, energy: f64, consts: &PhyConstants) -> f64 {
    (floored_rate(secrecy, consts) / floored_energy(energy, consts)).log2()
}
