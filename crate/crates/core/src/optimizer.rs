//! Cross-layer tuning: pick the contention window (saturated regime) or the
//! payload size (below-capacity regime) that moves the cell to its capacity
//! operating point.
//!
//! * **At capacity (LC)** the lever is the minimum contention window: invert
//!   the saturated transmission probability at `tau_m`, i.e. solve
//!   `tau_m = 2 / (1 + W0 + W0 p_eq G(2 p_eq, m))` for `W0` with
//!   `p_eq = 1 - (1-p_e)(1-tau_m)^(N-1)`, giving
//!   `W0 = (2 - tau_m) / (tau_m (1 + p_eq G(2 p_eq, m)))`.
//! * **Below capacity (BLC)** the lever is the payload: grow it as far as the
//!   critical rate allows (step 1) without busting the packet error target
//!   (step 2), then clamp to the MAC maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::geometric_sum;
use crate::params::{
    max_payload_for_per_target, packet_error_rate, slot_durations, ProtocolTiming,
    ScenarioParams, SlotDurations,
};
use crate::throughput::{
    classify_region, critical_load, link_capacity, offered_load_bps, tau_star, Region,
};

/// Minimum contention window that drives the saturated cell to its capacity
/// operating point, rounded to the nearest integer and clamped to >= 2.
///
/// Errors with [`Error::InfeasibleWindow`] when the unrounded window falls
/// below one slot (no physical window is small enough).
pub fn optimal_contention_window(
    n_stations: u32,
    p_e: f64,
    m: u32,
    d: &SlotDurations,
) -> Result<u32> {
    if !(0.0..1.0).contains(&p_e) {
        return Err(Error::InvalidParameter(format!("p_e must be in [0, 1), got {p_e}")));
    }
    let tau_m = tau_star(n_stations, d.sigma_s, d.t_collision_s)?;
    let survive = (1.0 - p_e) * (1.0 - tau_m).powi(n_stations.saturating_sub(1) as i32);
    let p_eq = 1.0 - survive;
    let w_real = (2.0 - tau_m) / (tau_m * (1.0 + p_eq * geometric_sum(2.0 * p_eq, m)));
    if w_real < 1.0 {
        return Err(Error::InfeasibleWindow { w_real });
    }
    Ok((w_real.round() as u32).max(2))
}

/// Result of the step-1 payload search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSearch {
    /// Largest payload (bits, byte resolution) keeping the scenario below
    /// capacity.
    pub payload_bits: u64,
    /// The MAC maximum was the binding constraint.
    pub clamped_at_max: bool,
    /// Even a 1-byte payload exceeds the critical rate (defensive; cannot
    /// happen when the incoming scenario is below capacity, since the
    /// critical rate grows as the payload shrinks).
    pub below_minimum: bool,
}

/// Largest payload (byte resolution) whose critical rate still covers the
/// offered load `lambda_pps`, searched over `[1 byte, pl_max]`.
pub fn payload_for_critical_load(
    lambda_pps: f64,
    n_stations: u32,
    bit_error_prob: f64,
    timing: &ProtocolTiming,
    pl_max_bits: u64,
) -> Result<PayloadSearch> {
    if !(lambda_pps.is_finite() && lambda_pps >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_pps must be finite and >= 0, got {lambda_pps}"
        )));
    }
    if pl_max_bits < 8 {
        return Err(Error::InvalidParameter("pl_max_bits must be >= 8".into()));
    }
    let critical_at = |bits: u64| -> Result<f64> {
        let p_e = packet_error_rate(bit_error_prob, bits, timing)?;
        let d = slot_durations(timing, bits)?;
        critical_load(n_stations, p_e, bits, &d)
    };
    let max_bytes = pl_max_bits / 8;
    if lambda_pps == 0.0 || critical_at(max_bytes * 8)? >= lambda_pps {
        return Ok(PayloadSearch {
            payload_bits: max_bytes * 8,
            clamped_at_max: true,
            below_minimum: false,
        });
    }
    if critical_at(8)? < lambda_pps {
        return Ok(PayloadSearch { payload_bits: 8, clamped_at_max: false, below_minimum: true });
    }
    // The critical rate decreases in the payload, so bisection over bytes
    // finds the largest feasible length.
    let (mut lo, mut hi) = (1u64, max_bytes);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if critical_at(mid * 8)? >= lambda_pps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PayloadSearch { payload_bits: lo * 8, clamped_at_max: false, below_minimum: false })
}

/// Outcome of [`optimize`]: which lever was pulled and where it landed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    /// Region the incoming scenario operates in (decides the lever).
    pub region: Region,
    /// Chosen contention window (LC region only).
    pub w_op: Option<u32>,
    /// Step-1 payload: largest length keeping the cell below capacity
    /// (BLC region only; bits).
    pub payload_step1_bits: Option<u64>,
    /// Step-2 payload: largest length meeting the packet error target
    /// (BLC region only; bits; absent for an ideal channel).
    pub payload_step2_bits: Option<u64>,
    /// Final payload recommendation: min(step 1, step 2, MAC maximum).
    pub payload_opt_bits: Option<u64>,
    /// Packet error probability at the recommended configuration.
    pub achieved_pe: f64,
    /// Model throughput at the recommended configuration (bps).
    pub predicted_throughput_bps: f64,
    /// Critical rate of the incoming scenario (diagnostic).
    pub lambda_c_pps: f64,
    /// Set when even the minimum payload could not keep the cell below
    /// capacity (defensive; see [`PayloadSearch::below_minimum`]).
    pub region_shift_warning: bool,
}

/// Pick and size the throughput lever for a scenario.
pub fn optimize(scenario: &ScenarioParams, timing: &ProtocolTiming) -> Result<OptimizationOutcome> {
    scenario.validate()?;
    timing.validate()?;
    let d = slot_durations(timing, scenario.payload_bits)?;
    let p_e = scenario.resolved_packet_error_prob(timing)?;
    let lambda_c_pps = critical_load(scenario.n_stations, p_e, scenario.payload_bits, &d)?;
    let region = classify_region(scenario.lambda_pps, lambda_c_pps);

    match region {
        Region::Lc => {
            let w_op = optimal_contention_window(scenario.n_stations, p_e, scenario.m, &d)?;
            let predicted =
                link_capacity(scenario.n_stations, p_e, scenario.payload_bits, &d)?;
            Ok(OptimizationOutcome {
                region,
                w_op: Some(w_op),
                payload_step1_bits: None,
                payload_step2_bits: None,
                payload_opt_bits: None,
                achieved_pe: p_e,
                predicted_throughput_bps: predicted,
                lambda_c_pps,
                region_shift_warning: false,
            })
        }
        Region::Blc => {
            let p_b = scenario.resolved_bit_error_prob(timing)?;
            let step1 = payload_for_critical_load(
                scenario.lambda_pps,
                scenario.n_stations,
                p_b,
                timing,
                scenario.pl_max_bits,
            )?;
            let step2_bits = if p_b > 0.0 {
                Some(
                    max_payload_for_per_target(p_b, scenario.per_target, timing)?
                        .bits_clamped(scenario.pl_max_bits),
                )
            } else {
                None
            };
            let opt_bits = step2_bits.unwrap_or(u64::MAX).min(step1.payload_bits);
            let achieved_pe = packet_error_rate(p_b, opt_bits, timing)?;
            Ok(OptimizationOutcome {
                region,
                w_op: None,
                payload_step1_bits: Some(step1.payload_bits),
                payload_step2_bits: step2_bits,
                payload_opt_bits: Some(opt_bits),
                achieved_pe,
                predicted_throughput_bps: offered_load_bps(
                    scenario.n_stations,
                    opt_bits,
                    scenario.lambda_pps,
                ),
                lambda_c_pps,
                region_shift_warning: step1.below_minimum,
            })
        }
    }
}
