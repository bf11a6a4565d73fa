//! Closed-form worst-case latency bounds and bound checking against
//! simulation reports.

use thiserror::Error;

use crate::config::{CoreId, SharingMode, SystemConfig};
use crate::engine::SimReport;

/// Parameters of a bound instance. `big_n` is the number of cores on the
/// bus (one slot each per period), `n` the number of partition sharers,
/// `w` the ways of the conflict set, `big_m` the partition capacity in
/// lines and `m_cua` the private (L2) capacity of the core under analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundInputs {
    pub big_n: u64,
    pub n: u64,
    pub w: u64,
    pub big_m: u64,
    pub m_cua: u64,
    pub slot_width: u64,
}

impl BoundInputs {
    pub fn m(&self) -> u64 {
        self.m_cua.min(self.big_m)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("reported WCL {reported} is not a multiple of the slot count {slots}")]
    NonIntegralSlotWidth { reported: u64, slots: u64 },
}

/// Interference factor A: periods an adversary can stall progress between
/// two consecutive write-backs of the core under analysis.
pub fn interference_factor(n: u64, w: u64) -> u64 {
    2 * (n - 1) * w * (n - 1)
}

/// Request bound (cycles) for a best-effort shared partition under 1S-TDM.
pub fn wcl_1stdm(inputs: &BoundInputs) -> u64 {
    let a = interference_factor(inputs.n, inputs.w);
    ((inputs.m() + 1) * a * inputs.big_n + 1) * inputs.slot_width
}

/// Request bound (cycles) for a sequenced shared partition.
pub fn wcl_sequencer(n: u64, big_n: u64, slot_width: u64) -> u64 {
    (2 * (n - 1) * n + 1) * big_n * slot_width
}

/// Request bound (cycles) for a private partition: up to one period of
/// slot misalignment, one period covering a victim write-back issued in
/// the owner's own slot, and the response slot.
pub fn wcl_private(big_n: u64, slot_width: u64) -> u64 {
    (2 * big_n + 1) * slot_width
}

/// Bound in cycles for `mode` under `inputs` (the sequencer and private
/// bounds ignore the capacity fields).
pub fn wcl_for_mode(mode: SharingMode, inputs: &BoundInputs) -> u64 {
    match mode {
        SharingMode::Private => wcl_private(inputs.big_n, inputs.slot_width),
        SharingMode::BestEffort => wcl_1stdm(inputs),
        SharingMode::Sequenced => wcl_sequencer(inputs.n, inputs.big_n, inputs.slot_width),
    }
}

/// Slot count of the bound (the cycle bound with SW = 1).
pub fn wcl_slots_for_mode(mode: SharingMode, inputs: &BoundInputs) -> u64 {
    let unit = BoundInputs {
        slot_width: 1,
        ..*inputs
    };
    wcl_for_mode(mode, &unit)
}

/// Recover the slot width that makes the mode's bound equal a reported
/// WCL. Errors when the division is not exact.
pub fn calibrate_slot_width(
    mode: SharingMode,
    reported_wcl: u64,
    inputs: &BoundInputs,
) -> Result<u64, AnalysisError> {
    let slots = wcl_slots_for_mode(mode, inputs);
    if slots == 0 || !reported_wcl.is_multiple_of(slots) {
        return Err(AnalysisError::NonIntegralSlotWidth {
            reported: reported_wcl,
            slots,
        });
    }
    Ok(reported_wcl / slots)
}

/// Bound inputs for one core of a configured system. The conflict-set
/// geometry comes from the core's partition; `m_cua` from its L2.
pub fn bound_inputs_for_core(cfg: &SystemConfig, core: CoreId) -> (SharingMode, BoundInputs) {
    let part = cfg.partition_of(core);
    (
        part.mode,
        BoundInputs {
            big_n: cfg.num_cores as u64,
            n: part.sharers.len() as u64,
            w: part.num_ways() as u64,
            big_m: part.capacity_lines() as u64,
            m_cua: cfg.l2_geom.capacity_lines() as u64,
            slot_width: cfg.slot_width,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundVerdict {
    pub core: CoreId,
    pub mode: SharingMode,
    pub bound_cycles: u64,
    pub max_latency_cycles: u64,
    pub pass: bool,
    /// (slot, byte address) of the worst observed request when failing.
    pub witness: Option<(u64, u64)>,
}

/// PASS per core iff every observed latency fits the mode's bound; the
/// maximum suffices as witness since latencies are totals per request.
pub fn check_bound(report: &SimReport, cfg: &SystemConfig) -> Vec<BoundVerdict> {
    report
        .cores
        .iter()
        .map(|c| {
            let (mode, inputs) = bound_inputs_for_core(cfg, c.core);
            let bound = wcl_for_mode(mode, &inputs);
            let pass = c.max_latency_cycles <= bound;
            BoundVerdict {
                core: c.core,
                mode,
                bound_cycles: bound,
                max_latency_cycles: c.max_latency_cycles,
                pass,
                witness: (!pass).then_some((c.max_latency_slot, c.max_latency_addr)),
            }
        })
        .collect()
}
