//! Battery evolution of the two access points and the causality / overflow
//! checks that go with it.
//!
//! The PAP stores renewable arrivals that become usable in the next slot. The
//! SAP stores RF energy harvested from the PAP and may spend it in the same
//! slot, since it only transmits after the transfer phase ends.

use serde::{Deserialize, Serialize};

use crate::constraint::{Constraint, Violations};
use crate::phy::{PhyConstants, PowerAllocation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Stored energy at the PAP, J.
    pub pap: f64,
    /// Stored energy at the SAP, J.
    pub sap: f64,
    pub pap_capacity: f64,
    pub sap_capacity: f64,
}

impl BatteryState {
    pub fn new(pap: f64, sap: f64, pap_capacity: f64, sap_capacity: f64) -> Self {
        Self {
            pap,
            sap,
            pap_capacity,
            sap_capacity,
        }
    }

    pub fn is_within_capacity(&self) -> bool {
        self.pap >= 0.0 && self.sap >= 0.0 && self.pap <= self.pap_capacity && self.sap <= self.sap_capacity
    }
}

/// Result of one battery update, with the flows that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryStep {
    /// Balances after the slot. Can be negative when `depleted` is set.
    pub next: BatteryState,
    pub depleted: bool,
    pub pap_clipped: bool,
    pub sap_clipped: bool,
    pub pap_inflow: f64,
    pub pap_outflow: f64,
    pub sap_inflow: f64,
    pub sap_outflow: f64,
}

/// Energy the PAP draws for transfer plus its data phase, J.
pub fn pap_transmit_energy(alloc: &PowerAllocation, consts: &PhyConstants) -> f64 {
    consts.slot_duration * (alloc.beta + alloc.data_fraction()) * alloc.p_pp
}

/// Energy the SAP draws for the NOMA phase, J.
pub fn sap_transmit_energy(alloc: &PowerAllocation, consts: &PhyConstants) -> f64 {
    consts.slot_duration * alloc.data_fraction() * (alloc.p_sp + alloc.p_ss)
}

/// Advances both batteries by one slot.
///
/// `pap_arrival` is the renewable energy that reaches the PAP during this slot;
/// `sap_harvest` is the RF energy the SAP collected in this slot's transfer
/// phase.
pub fn step_batteries(
    state: &BatteryState,
    alloc: &PowerAllocation,
    pap_arrival: f64,
    sap_harvest: f64,
    consts: &PhyConstants,
) -> BatteryStep {
    let pap_inflow = consts.pap_storage_efficiency * pap_arrival;
    let pap_outflow = pap_transmit_energy(alloc, consts) + consts.pap_idle_energy;
    let sap_inflow = consts.sap_storage_efficiency * sap_harvest;
    let sap_outflow = sap_transmit_energy(alloc, consts) + consts.sap_idle_energy;

    let pap_raw = state.pap + pap_inflow - pap_outflow;
    let sap_raw = state.sap + sap_inflow - sap_outflow;
    let next = BatteryState {
        pap: pap_raw.min(state.pap_capacity),
        sap: sap_raw.min(state.sap_capacity),
        ..*state
    };
    BatteryStep {
        next,
        depleted: next.pap < 0.0 || next.sap < 0.0,
        pap_clipped: pap_raw > state.pap_capacity,
        sap_clipped: sap_raw > state.sap_capacity,
        pap_inflow,
        pap_outflow,
        sap_inflow,
        sap_outflow,
    }
}

/// A closed interval of plausible values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn point(value: f64) -> Self {
        Self {
            low: value,
            high: value,
        }
    }

    /// `[center - radius, center + radius]`.
    pub fn around(center: f64, radius: f64) -> Self {
        Self {
            low: center - radius,
            high: center + radius,
        }
    }
}

/// What a constraint check may assume about the stored energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryBounds {
    pub pap: Interval,
    pub sap: Interval,
    pub pap_capacity: f64,
    pub sap_capacity: f64,
}

impl BatteryBounds {
    pub fn exact(state: &BatteryState) -> Self {
        Self {
            pap: Interval::point(state.pap),
            sap: Interval::point(state.sap),
            pap_capacity: state.pap_capacity,
            sap_capacity: state.sap_capacity,
        }
    }
}

/// Left side of the PAP causality constraint; negative means violated.
pub fn pap_causality_slack(pap_battery: f64, alloc: &PowerAllocation, consts: &PhyConstants) -> f64 {
    pap_battery - pap_transmit_energy(alloc, consts)
}

/// Left side of the SAP causality constraint; negative means violated.
pub fn sap_causality_slack(sap_battery: f64, sap_harvest: f64, alloc: &PowerAllocation, consts: &PhyConstants) -> f64 {
    sap_battery + consts.sap_storage_efficiency * sap_harvest - sap_transmit_energy(alloc, consts)
}

/// Amount by which the PAP would overflow; positive means violated.
pub fn pap_overflow_excess(
    pap_battery: f64,
    pap_arrival: f64,
    capacity: f64,
    alloc: &PowerAllocation,
    consts: &PhyConstants,
) -> f64 {
    pap_battery + consts.pap_storage_efficiency * pap_arrival - pap_transmit_energy(alloc, consts) - capacity
}

/// Amount by which the SAP would overflow; positive means violated.
///
/// The check covers this slot's harvest and the next one. The next slot's
/// transfer power is not known yet, so the current harvest stands in for it.
pub fn sap_overflow_excess(
    sap_battery: f64,
    sap_harvest: f64,
    capacity: f64,
    alloc: &PowerAllocation,
    consts: &PhyConstants,
) -> f64 {
    sap_battery + consts.sap_storage_efficiency * 2.0 * sap_harvest - sap_transmit_energy(alloc, consts) - capacity
}

/// Causality constraints using the lower ends of the battery bounds and the
/// smallest plausible harvest.
pub fn check_causality(
    bounds: &BatteryBounds,
    sap_harvest_low: f64,
    alloc: &PowerAllocation,
    consts: &PhyConstants,
) -> Violations {
    let mut v = Violations::none();
    v.set(Constraint::C1, pap_causality_slack(bounds.pap.low, alloc, consts) < 0.0);
    v.set(
        Constraint::C2,
        sap_causality_slack(bounds.sap.low, sap_harvest_low, alloc, consts) < 0.0,
    );
    v
}

/// Overflow constraints using the upper ends of the battery bounds and the
/// largest plausible harvest.
pub fn check_overflow(
    bounds: &BatteryBounds,
    pap_arrival: f64,
    sap_harvest_high: f64,
    alloc: &PowerAllocation,
    consts: &PhyConstants,
) -> Violations {
    let mut v = Violations::none();
    v.set(
        Constraint::C3,
        pap_overflow_excess(bounds.pap.high, pap_arrival, bounds.pap_capacity, alloc, consts) > 0.0,
    );
    v.set(
        Constraint::C4,
        sap_overflow_excess(bounds.sap.high, sap_harvest_high, bounds.sap_capacity, alloc, consts) > 0.0,
    );
    v
}
