//! Protocol timing profiles, per-slot channel-occupancy durations, and the
//! packet error model.
//!
//! Times are seconds, rates are bits per second, frame fields are bits.
//! Payload sizes cross the API in bits; the CLI layer converts user-facing
//! byte values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overhead bits entering the packet-error-rate exponent (PHY preamble+header
/// plus the MAC bits covered by the frame check sequence). Calibrated so the
/// error model reproduces measured 802.11b basic-access error rates.
pub const DEFAULT_PER_OVERHEAD_BITS: u64 = 416;

/// How the medium is recovered after a slot that did not end in an ACK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    /// Defer a plain DIFS after the carrier drops.
    Difs,
    /// Defer an EIFS (SIFS + ACK duration + DIFS) — the standard's behavior
    /// after a frame that could not be decoded.
    Eifs,
    /// Wait the full ACK timeout, then a DIFS.
    AckTimeout,
}

/// Static protocol/PHY parameters of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTiming {
    /// MAC header length (bits).
    pub mac_header_bits: u64,
    /// PHY preamble + header length (bits).
    pub phy_header_bits: u64,
    /// ACK frame length (bits), excluding its PHY header.
    pub ack_bits: u64,
    /// Idle backoff slot (s).
    pub sigma_s: f64,
    /// Short interframe space (s).
    pub sifs_s: f64,
    /// DCF interframe space (s).
    pub difs_s: f64,
    /// Extended interframe space (s).
    pub eifs_s: f64,
    /// One-way propagation delay (s).
    pub prop_delay_s: f64,
    /// ACK/CTS timeout (s).
    pub ack_timeout_s: f64,
    /// Payload + MAC header transmission rate (bps).
    pub data_rate_bps: f64,
    /// PHY header / control frame transmission rate (bps).
    pub control_rate_bps: f64,
    /// Overhead bits in the packet-error exponent (see
    /// [`DEFAULT_PER_OVERHEAD_BITS`]).
    pub per_overhead_bits: u64,
    /// Interframe deferral charged after a collision.
    pub collision_recovery: Recovery,
    /// Interframe deferral charged after a channel-error loss.
    pub error_recovery: Recovery,
}

impl Default for ProtocolTiming {
    /// 802.11b basic access at 1 Mbps: MAC header 24 B, PHY header 16 B,
    /// ACK 14 B, σ = 20 µs, SIFS = 10 µs, DIFS = 50 µs, EIFS = 300 µs,
    /// propagation 1 µs, ACK timeout 300 µs, EIFS-based loss recovery.
    fn default() -> Self {
        ProtocolTiming {
            mac_header_bits: 24 * 8,
            phy_header_bits: 16 * 8,
            ack_bits: 14 * 8,
            sigma_s: 20e-6,
            sifs_s: 10e-6,
            difs_s: 50e-6,
            eifs_s: 300e-6,
            prop_delay_s: 1e-6,
            ack_timeout_s: 300e-6,
            data_rate_bps: 1e6,
            control_rate_bps: 1e6,
            per_overhead_bits: DEFAULT_PER_OVERHEAD_BITS,
            collision_recovery: Recovery::Eifs,
            error_recovery: Recovery::Eifs,
        }
    }
}

impl ProtocolTiming {
    /// Look up a built-in profile by name.
    ///
    /// * `dot11b-table1` — the default profile (EIFS loss recovery).
    /// * `dot11b-table1-difs` — same PHY numbers, plain-DIFS loss recovery.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "dot11b-table1" => Some(Self::default()),
            "dot11b-table1-difs" => Some(ProtocolTiming {
                collision_recovery: Recovery::Difs,
                error_recovery: Recovery::Difs,
                ..Self::default()
            }),
            _ => None,
        }
    }

    /// Validate field ranges.
    pub fn validate(&self) -> Result<()> {
        fn pos(v: f64, name: &str) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
            }
        }
        pos(self.sigma_s, "sigma_s")?;
        pos(self.sifs_s, "sifs_s")?;
        pos(self.difs_s, "difs_s")?;
        pos(self.eifs_s, "eifs_s")?;
        pos(self.ack_timeout_s, "ack_timeout_s")?;
        pos(self.data_rate_bps, "data_rate_bps")?;
        pos(self.control_rate_bps, "control_rate_bps")?;
        if !self.prop_delay_s.is_finite() || self.prop_delay_s < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "prop_delay_s must be finite and >= 0, got {}",
                self.prop_delay_s
            )));
        }
        if self.mac_header_bits == 0 || self.phy_header_bits == 0 || self.ack_bits == 0 {
            return Err(Error::InvalidParameter(
                "mac_header_bits, phy_header_bits and ack_bits must be > 0".into(),
            ));
        }
        if self.sifs_s >= self.difs_s {
            return Err(Error::InvalidParameter(format!(
                "sifs_s ({}) must be smaller than difs_s ({})",
                self.sifs_s, self.difs_s
            )));
        }
        Ok(())
    }

    fn recovery_tail_s(&self, recovery: Recovery) -> f64 {
        match recovery {
            Recovery::Difs => self.difs_s,
            Recovery::Eifs => self.eifs_s,
            Recovery::AckTimeout => self.ack_timeout_s + self.difs_s,
        }
    }
}

/// Durations the channel stays occupied for each slot outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDurations {
    /// Empty (idle) backoff slot (s).
    pub sigma_s: f64,
    /// Successful exchange: DATA + SIFS + ACK + DIFS + propagation (s).
    pub t_success_s: f64,
    /// Collision: DATA + loss recovery + propagation (s).
    pub t_collision_s: f64,
    /// Channel-error loss: DATA + loss recovery + propagation (s).
    pub t_error_s: f64,
}

/// Slot-outcome durations for a payload of `payload_bits` under `timing`.
pub fn slot_durations(timing: &ProtocolTiming, payload_bits: u64) -> Result<SlotDurations> {
    timing.validate()?;
    if payload_bits == 0 {
        return Err(Error::InvalidParameter("payload_bits must be > 0".into()));
    }
    let frame_s = timing.phy_header_bits as f64 / timing.control_rate_bps
        + (timing.mac_header_bits + payload_bits) as f64 / timing.data_rate_bps;
    let ack_s = (timing.phy_header_bits + timing.ack_bits) as f64 / timing.control_rate_bps;
    let t_success_s = frame_s
        + timing.sifs_s
        + timing.prop_delay_s
        + ack_s
        + timing.difs_s
        + timing.prop_delay_s;
    let t_collision_s =
        frame_s + timing.recovery_tail_s(timing.collision_recovery) + timing.prop_delay_s;
    let t_error_s = frame_s + timing.recovery_tail_s(timing.error_recovery) + timing.prop_delay_s;
    Ok(SlotDurations { sigma_s: timing.sigma_s, t_success_s, t_collision_s, t_error_s })
}

/// Packet error rate for a payload of `payload_bits` under an independent
/// bit-error probability `bit_error_prob`:
/// `1 - (1 - p_b)^(overhead + payload)`, evaluated in log space.
pub fn packet_error_rate(
    bit_error_prob: f64,
    payload_bits: u64,
    timing: &ProtocolTiming,
) -> Result<f64> {
    if !(0.0..1.0).contains(&bit_error_prob) {
        return Err(Error::InvalidParameter(format!(
            "bit_error_prob must be in [0, 1), got {bit_error_prob}"
        )));
    }
    if bit_error_prob == 0.0 {
        return Ok(0.0);
    }
    let exponent_bits = (timing.per_overhead_bits + payload_bits) as f64;
    Ok(-f64::exp_m1(exponent_bits * f64::ln_1p(-bit_error_prob)))
}

/// Result of [`max_payload_for_per_target`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadBound {
    /// Largest payload (bits) whose packet error rate stays at or below the
    /// target.
    Bits(u64),
    /// A zero bit-error probability satisfies any target at any length.
    Unbounded,
}

impl PayloadBound {
    /// The bound clamped to a maximum payload; `Unbounded` collapses to `cap`.
    pub fn bits_clamped(&self, cap_bits: u64) -> u64 {
        match *self {
            PayloadBound::Bits(b) => b.min(cap_bits),
            PayloadBound::Unbounded => cap_bits,
        }
    }
}

/// Largest payload length (bits) with packet error rate at or below
/// `per_target`, i.e. the sharp integer bound of
/// `(overhead + L) * ln(1 - p_b) >= ln(1 - target)`.
///
/// Errors with [`Error::InfeasibleTarget`] when the frame overhead alone
/// already exceeds the target.
pub fn max_payload_for_per_target(
    bit_error_prob: f64,
    per_target: f64,
    timing: &ProtocolTiming,
) -> Result<PayloadBound> {
    if !(0.0..1.0).contains(&bit_error_prob) {
        return Err(Error::InvalidParameter(format!(
            "bit_error_prob must be in [0, 1), got {bit_error_prob}"
        )));
    }
    if !(per_target > 0.0 && per_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "per_target must be in (0, 1), got {per_target}"
        )));
    }
    if bit_error_prob == 0.0 {
        return Ok(PayloadBound::Unbounded);
    }
    let raw_bits =
        f64::ln_1p(-per_target) / f64::ln_1p(-bit_error_prob) - timing.per_overhead_bits as f64;
    if raw_bits < 1.0 {
        let floor = packet_error_rate(bit_error_prob, 0, timing)?;
        return Err(Error::InfeasibleTarget { target: per_target, floor });
    }
    // Floor of the real-valued bound, then a defensive +/-1-bit adjustment so
    // the returned length is exactly the largest one meeting the target even
    // when `raw_bits` carries float rounding.
    let mut bits = raw_bits.floor() as u64;
    while bits > 1 && packet_error_rate(bit_error_prob, bits, timing)? > per_target {
        bits -= 1;
    }
    while packet_error_rate(bit_error_prob, bits + 1, timing)? <= per_target {
        bits += 1;
    }
    Ok(PayloadBound::Bits(bits))
}

/// Round a payload bit count up to whole bytes for reporting.
pub fn payload_bits_to_report_bytes(bits: u64) -> u64 {
    bits.div_ceil(8)
}

/// One cell scenario: population, offered load, backoff configuration, and
/// channel quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Number of contending stations (>= 1).
    pub n_stations: u32,
    /// Per-station Poisson packet arrival rate (packets/s, >= 0).
    pub lambda_pps: f64,
    /// Minimum contention window (slots, >= 1).
    pub w0: u32,
    /// Number of window-doubling backoff stages.
    pub m: u32,
    /// Payload length (bits).
    pub payload_bits: u64,
    /// Independent bit error probability; mutually exclusive with
    /// `packet_error_prob`.
    pub bit_error_prob: Option<f64>,
    /// Packet error probability given directly; mutually exclusive with
    /// `bit_error_prob`. Neither set means an ideal channel.
    pub packet_error_prob: Option<f64>,
    /// Packet error target used by the payload-size optimizer.
    pub per_target: f64,
    /// Maximum payload the MAC accepts (bits).
    pub pl_max_bits: u64,
}

impl Default for ScenarioParams {
    /// Reference scenario: 10 stations at 8 packets/s each, 1024-byte
    /// payloads, bit error probability 1e-5, W0 = 32 with 5 doubling stages,
    /// 8% packet error target, 2312-byte maximum payload.
    fn default() -> Self {
        ScenarioParams {
            n_stations: 10,
            lambda_pps: 8.0,
            w0: 32,
            m: 5,
            payload_bits: 1024 * 8,
            bit_error_prob: Some(1e-5),
            packet_error_prob: None,
            per_target: 0.08,
            pl_max_bits: 2312 * 8,
        }
    }
}

impl ScenarioParams {
    /// Validate field ranges and mutual exclusions.
    pub fn validate(&self) -> Result<()> {
        if self.n_stations < 1 || self.n_stations > 100_000 {
            return Err(Error::InvalidParameter(format!(
                "n_stations must be in [1, 100000], got {}",
                self.n_stations
            )));
        }
        if !self.lambda_pps.is_finite() || self.lambda_pps < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda_pps must be finite and >= 0, got {}",
                self.lambda_pps
            )));
        }
        if self.w0 < 1 || self.w0 > 1 << 20 {
            return Err(Error::InvalidParameter(format!(
                "w0 must be in [1, 2^20], got {}",
                self.w0
            )));
        }
        if self.m > 32 {
            return Err(Error::InvalidParameter(format!("m must be <= 32, got {}", self.m)));
        }
        if self.payload_bits == 0 || self.payload_bits > 100_000_000 {
            return Err(Error::InvalidParameter(format!(
                "payload_bits must be in [1, 1e8], got {}",
                self.payload_bits
            )));
        }
        if self.bit_error_prob.is_some() && self.packet_error_prob.is_some() {
            return Err(Error::InvalidParameter(
                "bit_error_prob and packet_error_prob are mutually exclusive".into(),
            ));
        }
        if let Some(p) = self.bit_error_prob {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "bit_error_prob must be in [0, 1), got {p}"
                )));
            }
        }
        if let Some(p) = self.packet_error_prob {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "packet_error_prob must be in [0, 1), got {p}"
                )));
            }
        }
        if !(self.per_target > 0.0 && self.per_target < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "per_target must be in (0, 1), got {}",
                self.per_target
            )));
        }
        if self.pl_max_bits < 8 {
            return Err(Error::InvalidParameter(format!(
                "pl_max_bits must be >= 8, got {}",
                self.pl_max_bits
            )));
        }
        Ok(())
    }

    /// Packet error probability at this scenario's payload length.
    pub fn resolved_packet_error_prob(&self, timing: &ProtocolTiming) -> Result<f64> {
        self.validate()?;
        match (self.bit_error_prob, self.packet_error_prob) {
            (Some(pb), None) => packet_error_rate(pb, self.payload_bits, timing),
            (None, Some(pe)) => Ok(pe),
            (None, None) => Ok(0.0),
            (Some(_), Some(_)) => unreachable!("validate() rejects this combination"),
        }
    }

    /// Bit error probability consistent with this scenario's channel spec:
    /// either the given one, or the inversion of the given packet error
    /// probability at the current payload length.
    pub fn resolved_bit_error_prob(&self, timing: &ProtocolTiming) -> Result<f64> {
        self.validate()?;
        match (self.bit_error_prob, self.packet_error_prob) {
            (Some(pb), None) => Ok(pb),
            (None, Some(pe)) => {
                let exponent_bits = (timing.per_overhead_bits + self.payload_bits) as f64;
                Ok(-f64::exp_m1(f64::ln_1p(-pe) / exponent_bits))
            }
            (None, None) => Ok(0.0),
            (Some(_), Some(_)) => unreachable!("validate() rejects this combination"),
        }
    }
}
