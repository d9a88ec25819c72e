//! Aggregate throughput, its closed-form maximum over the transmission
//! probability, and the derived capacity quantities.
//!
//! Throughput of the cell at a solved equilibrium:
//!
//! ```text
//! S = N tau (1-tau)^(N-1) (1-p_e) * PL / E[S]
//! ```
//!
//! Treating `tau` as a free variable, `S(tau)` is unimodal on (0, 1); its
//! stationarity condition reduces to
//!
//! ```text
//! (1 - N tau) T_c + (sigma - T_c) (1 - tau)^N = 0
//! ```
//!
//! whose left side is strictly decreasing with a sign change on (0, 1/N), so
//! the maximizer `tau_m` is unique. [`tau_star`] finds it to full float
//! precision; [`tau_star_approx`] is the classical closed form obtained from
//! the second-order expansion of `(1-tau)^N`, kept as a cheap seed/reference.
//!
//! At `tau_m` the capacity has the closed form `S_m = PL / (b1 + b2)` with
//!
//! ```text
//! b1 = T_s - T_c/(1-p_e) + T_e p_e/(1-p_e)
//! b2 = ((sigma - T_c)(1-tau_m)^N + T_c) / (N tau_m (1-tau_m)^(N-1) (1-p_e))
//! ```
//!
//! and the critical (per-station) arrival rate below which offered load is
//! carried undistorted is `lambda_c = S_m / (N PL)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{
    solve_equilibrium, solve_saturated, EquilibriumSolution, SolverSettings,
};
use crate::params::{slot_durations, ProtocolTiming, ScenarioParams, SlotDurations};

/// Operating region of the cell relative to its critical load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Below link capacity: offered load passes through undistorted.
    #[serde(rename = "BLC")]
    Blc,
    /// At link capacity: the cell saturates and throughput plateaus.
    #[serde(rename = "LC")]
    Lc,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Blc => "BLC",
            Region::Lc => "LC",
        })
    }
}

/// Aggregate throughput (bps) at a solved equilibrium.
pub fn throughput(
    sol: &EquilibriumSolution,
    n_stations: u32,
    p_e: f64,
    payload_bits: u64,
) -> f64 {
    let n = n_stations;
    let p_one = n as f64 * sol.tau * (1.0 - sol.tau).powi(n.saturating_sub(1) as i32);
    p_one * (1.0 - p_e) * payload_bits as f64 / sol.expected_slot_s
}

/// Offered-load line of the below-capacity region: `S = N PL lambda`.
pub fn offered_load_bps(n_stations: u32, payload_bits: u64, lambda_pps: f64) -> f64 {
    n_stations as f64 * payload_bits as f64 * lambda_pps
}

fn check_tau_star_inputs(n_stations: u32, sigma_s: f64, t_collision_s: f64) -> Result<()> {
    if n_stations < 1 {
        return Err(Error::InvalidParameter("n_stations must be >= 1".into()));
    }
    if !(sigma_s > 0.0 && t_collision_s > 0.0) {
        return Err(Error::InvalidParameter(
            "sigma_s and t_collision_s must be > 0".into(),
        ));
    }
    if sigma_s > t_collision_s {
        return Err(Error::InvalidParameter(format!(
            "sigma_s ({sigma_s}) must not exceed t_collision_s ({t_collision_s})"
        )));
    }
    Ok(())
}

/// Transmission probability maximizing `S(tau)`, solved exactly from the
/// stationarity condition by bisection on `(0, 1/N)`.
///
/// `N = 1` returns 1 (a lone station cannot collide, so `S` is increasing in
/// `tau`); `sigma = T_c` degenerates to exactly `1/N`.
pub fn tau_star(n_stations: u32, sigma_s: f64, t_collision_s: f64) -> Result<f64> {
    check_tau_star_inputs(n_stations, sigma_s, t_collision_s)?;
    if n_stations == 1 {
        return Ok(1.0);
    }
    let n = n_stations as f64;
    let f = |tau: f64| {
        (1.0 - n * tau) * t_collision_s
            + (sigma_s - t_collision_s) * (1.0 - tau).powi(n_stations as i32)
    };
    // f(0) = sigma > 0 and f(1/N) <= 0 bracket the unique root.
    let (mut lo, mut hi) = (0.0f64, 1.0 / n);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Classical closed-form approximation of [`tau_star`], from replacing
/// `(1-tau)^N` with its second-order expansion in the stationarity condition:
/// the positive root of
/// `(T_c - sigma) N (N-1)/2 tau^2 + sigma N tau - sigma = 0`.
pub fn tau_star_approx(n_stations: u32, sigma_s: f64, t_collision_s: f64) -> Result<f64> {
    check_tau_star_inputs(n_stations, sigma_s, t_collision_s)?;
    let n = n_stations as f64;
    let a = (t_collision_s - sigma_s) * n * (n - 1.0) * 0.5;
    let b = sigma_s * n;
    let c = -sigma_s;
    if a <= 0.0 {
        // N = 1 or sigma = T_c: the equation is linear with root 1/N.
        return Ok(1.0 / n);
    }
    let discriminant = b * b - 4.0 * a * c;
    debug_assert!(discriminant >= 0.0);
    Ok((-b + discriminant.sqrt()) / (2.0 * a))
}

/// Maximum aggregate throughput `S_m` (bps) over the transmission
/// probability, at packet error probability `p_e`.
pub fn link_capacity(
    n_stations: u32,
    p_e: f64,
    payload_bits: u64,
    d: &SlotDurations,
) -> Result<f64> {
    if !(0.0..1.0).contains(&p_e) {
        return Err(Error::InvalidParameter(format!("p_e must be in [0, 1), got {p_e}")));
    }
    if payload_bits == 0 {
        return Err(Error::InvalidParameter("payload_bits must be > 0".into()));
    }
    let tau_m = tau_star(n_stations, d.sigma_s, d.t_collision_s)?;
    let n = n_stations as f64;
    let surv = 1.0 - p_e;
    let b1 = d.t_success_s - d.t_collision_s / surv + d.t_error_s * p_e / surv;
    let b2 = ((d.sigma_s - d.t_collision_s) * (1.0 - tau_m).powi(n_stations as i32)
        + d.t_collision_s)
        / (n * tau_m * (1.0 - tau_m).powi(n_stations.saturating_sub(1) as i32) * surv);
    Ok(payload_bits as f64 / (b1 + b2))
}

/// Critical per-station arrival rate (packets/s): `lambda_c = S_m / (N PL)`.
pub fn critical_load(
    n_stations: u32,
    p_e: f64,
    payload_bits: u64,
    d: &SlotDurations,
) -> Result<f64> {
    Ok(link_capacity(n_stations, p_e, payload_bits, d)?
        / (n_stations as f64 * payload_bits as f64))
}

/// Region the scenario operates in; the boundary itself counts as
/// below-capacity.
pub fn classify_region(lambda_pps: f64, lambda_c_pps: f64) -> Region {
    if lambda_pps > lambda_c_pps {
        Region::Lc
    } else {
        Region::Blc
    }
}

/// Piecewise throughput model of a well-tuned cell:
/// the offered-load line below the critical rate, the link capacity above it.
pub fn optimized_throughput_model(
    scenario: &ScenarioParams,
    timing: &ProtocolTiming,
) -> Result<f64> {
    scenario.validate()?;
    let d = slot_durations(timing, scenario.payload_bits)?;
    let p_e = scenario.resolved_packet_error_prob(timing)?;
    let lambda_c = critical_load(scenario.n_stations, p_e, scenario.payload_bits, &d)?;
    if scenario.lambda_pps <= lambda_c {
        Ok(offered_load_bps(scenario.n_stations, scenario.payload_bits, scenario.lambda_pps))
    } else {
        link_capacity(scenario.n_stations, p_e, scenario.payload_bits, &d)
    }
}

/// Solved equilibrium together with the capacity landmarks of its scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// The equilibrium itself.
    pub solution: EquilibriumSolution,
    /// Aggregate throughput at the equilibrium (bps).
    pub throughput_bps: f64,
    /// Throughput-maximizing transmission probability.
    pub tau_m: f64,
    /// Link capacity `S_m` (bps).
    pub s_m_bps: f64,
    /// Critical per-station arrival rate (packets/s).
    pub lambda_c_pps: f64,
    /// Operating region of the offered load.
    pub region: Region,
}

/// Solve a scenario and annotate it with its capacity landmarks.
pub fn operating_point(
    scenario: &ScenarioParams,
    timing: &ProtocolTiming,
    settings: &SolverSettings,
    saturated: bool,
) -> Result<OperatingPoint> {
    let solution = if saturated {
        solve_saturated(scenario, timing, settings)?
    } else {
        solve_equilibrium(scenario, timing, settings)?
    };
    let d = slot_durations(timing, scenario.payload_bits)?;
    let p_e = scenario.resolved_packet_error_prob(timing)?;
    let throughput_bps = throughput(&solution, scenario.n_stations, p_e, scenario.payload_bits);
    let tau_m = tau_star(scenario.n_stations, d.sigma_s, d.t_collision_s)?;
    let s_m_bps = link_capacity(scenario.n_stations, p_e, scenario.payload_bits, &d)?;
    let lambda_c_pps = s_m_bps / (scenario.n_stations as f64 * scenario.payload_bits as f64);
    let region = if saturated {
        Region::Lc
    } else {
        classify_region(scenario.lambda_pps, lambda_c_pps)
    };
    Ok(OperatingPoint { solution, throughput_bps, tau_m, s_m_bps, lambda_c_pps, region })
}

/// Scenario field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-station arrival rate (packets/s).
    Lambda,
    /// Minimum contention window (slots).
    W0,
    /// Payload size (bytes).
    Payload,
    /// Station count.
    N,
}

impl SweepAxis {
    /// Parse a CLI axis name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lambda" => Ok(SweepAxis::Lambda),
            "w0" => Ok(SweepAxis::W0),
            "payload" => Ok(SweepAxis::Payload),
            "n" => Ok(SweepAxis::N),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected lambda, w0, payload, or n)"
            ))),
        }
    }

    fn apply(self, base: &ScenarioParams, value: f64) -> Result<ScenarioParams> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("sweep value must be finite, got {value}")));
        }
        let mut sc = base.clone();
        match self {
            SweepAxis::Lambda => sc.lambda_pps = value,
            SweepAxis::W0 => sc.w0 = value.round() as u32,
            SweepAxis::Payload => sc.payload_bits = (value.round() as u64).saturating_mul(8),
            SweepAxis::N => sc.n_stations = value.round() as u32,
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// One solved sweep point, flattened for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub tau: f64,
    pub p_col: f64,
    pub p_eq: f64,
    pub q: f64,
    pub expected_slot_s: f64,
    pub s_bps: f64,
    pub tau_m: f64,
    pub s_m_bps: f64,
    pub lambda_c_pps: f64,
    pub region: Region,
}

/// Solve the scenario once per axis value (in parallel); rows keep the input
/// order.
pub fn sweep(
    base: &ScenarioParams,
    timing: &ProtocolTiming,
    settings: &SolverSettings,
    axis: SweepAxis,
    values: &[f64],
    saturated: bool,
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    values
        .par_iter()
        .map(|&value| {
            let sc = axis.apply(base, value)?;
            let op = operating_point(&sc, timing, settings, saturated)?;
            Ok(SweepRow {
                axis_value: value,
                tau: op.solution.tau,
                p_col: op.solution.p_col,
                p_eq: op.solution.p_eq,
                q: op.solution.q,
                expected_slot_s: op.solution.expected_slot_s,
                s_bps: op.throughput_bps,
                tau_m: op.tau_m,
                s_m_bps: op.s_m_bps,
                lambda_c_pps: op.lambda_c_pps,
                region: op.region,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::packet_error_rate;
    use approx::assert_relative_eq;

    fn timing() -> ProtocolTiming {
        ProtocolTiming::default()
    }

    fn slots_for_bytes(bytes: u64) -> SlotDurations {
        slot_durations(&timing(), bytes * 8).unwrap()
    }

    #[test]
    fn tau_star_reference_value() {
        let d = slots_for_bytes(1028);
        let tau_m = tau_star(10, d.sigma_s, d.t_collision_s).unwrap();
        assert_relative_eq!(tau_m, 0.0069102, max_relative = 1e-4);
        assert!(tau_m > 0.0 && tau_m < 0.1);
    }

    #[test]
    fn tau_star_satisfies_the_stationarity_condition() {
        for n in [2u32, 5, 10, 50, 200] {
            let d = slots_for_bytes(2312);
            let tau_m = tau_star(n, d.sigma_s, d.t_collision_s).unwrap();
            let f = (1.0 - n as f64 * tau_m) * d.t_collision_s
                + (d.sigma_s - d.t_collision_s) * (1.0 - tau_m).powi(n as i32);
            assert!(f.abs() < 1e-12 * d.t_collision_s, "n={n} residual={f}");
            assert!(tau_m < 1.0 / n as f64);
        }
    }

    #[test]
    fn tau_star_actually_maximizes_throughput() {
        let d = slots_for_bytes(1028);
        let n = 10u32;
        let s_at = |tau: f64| {
            let p_one = n as f64 * tau * (1.0 - tau).powi(n as i32 - 1);
            let p_tr = 1.0 - (1.0 - tau).powi(n as i32);
            let es = (1.0 - p_tr) * d.sigma_s
                + (p_tr - p_one) * d.t_collision_s
                + p_one * d.t_success_s;
            p_one * 8224.0 / es
        };
        let tau_m = tau_star(n, d.sigma_s, d.t_collision_s).unwrap();
        let s_best = s_at(tau_m);
        for delta in [1e-4, 1e-3, 5e-3] {
            assert!(s_best >= s_at(tau_m - delta));
            assert!(s_best >= s_at(tau_m + delta));
        }
        // Unimodality along a coarse grid.
        let mut rising = true;
        let mut prev = 0.0;
        for i in 1..200 {
            let s = s_at(i as f64 * 5e-4);
            if rising && s < prev {
                rising = false;
            } else if !rising {
                assert!(s <= prev + 1e-9, "second rise at tau={}", i as f64 * 5e-4);
            }
            prev = s;
        }
    }

    #[test]
    fn tau_star_approx_tracks_the_exact_root() {
        for n in [2u32, 5, 10, 50] {
            let d = slots_for_bytes(1028);
            let exact = tau_star(n, d.sigma_s, d.t_collision_s).unwrap();
            let approx = tau_star_approx(n, d.sigma_s, d.t_collision_s).unwrap();
            let rel = (exact - approx).abs() / exact;
            assert!(rel < 0.02, "n={n}: exact={exact} approx={approx} rel={rel}");
        }
    }

    #[test]
    fn tau_star_degenerate_cases() {
        assert_eq!(tau_star(1, 20e-6, 8845e-6).unwrap(), 1.0);
        // sigma = T_c collapses the condition to tau = 1/N.
        assert_relative_eq!(tau_star(10, 1e-3, 1e-3).unwrap(), 0.1, max_relative = 1e-12);
        assert_relative_eq!(tau_star_approx(10, 1e-3, 1e-3).unwrap(), 0.1, max_relative = 1e-12);
        assert!(tau_star(10, 2e-3, 1e-3).is_err());
        assert!(tau_star(0, 1e-3, 1e-3).is_err());
    }

    #[test]
    fn n_tau_star_stays_near_its_large_population_limit() {
        let d = slots_for_bytes(2312);
        let prod = |n: u32| n as f64 * tau_star(n, d.sigma_s, d.t_collision_s).unwrap();
        // N tau_m decreases slowly toward a constant as N grows.
        assert!(prod(50) > prod(100) && prod(100) > prod(200));
        assert!(prod(200) / prod(100) > 0.97);
    }

    #[test]
    fn link_capacity_reference_value_and_identity() {
        let d = slots_for_bytes(1028);
        let s_m = link_capacity(10, 0.0, 1028 * 8, &d).unwrap();
        assert_relative_eq!(s_m, 873_445.3, max_relative = 1e-5);

        // S_m must equal S(tau_m) evaluated directly, for any error rate.
        for p_e in [0.0, 0.2, 0.5, 0.9] {
            let tau_m = tau_star(10, d.sigma_s, d.t_collision_s).unwrap();
            let p_one = 10.0 * tau_m * (1.0 - tau_m).powi(9);
            let p_tr = 1.0 - (1.0 - tau_m).powi(10);
            let es = (1.0 - p_tr) * d.sigma_s
                + (p_tr - p_one) * d.t_collision_s
                + p_one * (1.0 - p_e) * d.t_success_s
                + p_one * p_e * d.t_error_s;
            let direct = p_one * (1.0 - p_e) * 8224.0 / es;
            let closed = link_capacity(10, p_e, 1028 * 8, &d).unwrap();
            assert_relative_eq!(closed, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn link_capacity_is_insensitive_to_population() {
        let d = slots_for_bytes(1028);
        let s5 = link_capacity(5, 0.0, 1028 * 8, &d).unwrap();
        let s10 = link_capacity(10, 0.0, 1028 * 8, &d).unwrap();
        let s50 = link_capacity(50, 0.0, 1028 * 8, &d).unwrap();
        assert_relative_eq!(s5, s10, max_relative = 0.01);
        assert_relative_eq!(s10, s50, max_relative = 0.02);
    }

    #[test]
    fn critical_load_reference_values() {
        let t = timing();
        for (bytes, expected) in [(1024u64, 9.7791), (2048, 4.7509), (991, 10.0982)] {
            let bits = bytes * 8;
            let pe = packet_error_rate(1e-5, bits, &t).unwrap();
            let d = slot_durations(&t, bits).unwrap();
            let lc = critical_load(10, pe, bits, &d).unwrap();
            assert_relative_eq!(lc, expected, max_relative = 2e-4);
        }
    }

    #[test]
    fn critical_load_halves_when_population_doubles() {
        let d = slots_for_bytes(2312);
        let lc = |n: u32| critical_load(n, 0.0, 2312 * 8, &d).unwrap();
        for n in [5u32, 10, 20] {
            let ratio = lc(2 * n) / lc(n);
            assert!((0.45..0.55).contains(&ratio), "n={n} ratio={ratio}");
        }
    }

    #[test]
    fn critical_load_decreases_with_payload() {
        let t = timing();
        let mut prev = f64::INFINITY;
        for bytes in [256u64, 512, 1024, 2048] {
            let bits = bytes * 8;
            let d = slot_durations(&t, bits).unwrap();
            let lc = critical_load(10, 0.0, bits, &d).unwrap();
            assert!(lc < prev, "lambda_c must fall as payload grows");
            prev = lc;
        }
    }

    #[test]
    fn region_classification_boundary() {
        assert_eq!(classify_region(5.0, 9.78), Region::Blc);
        assert_eq!(classify_region(9.78, 9.78), Region::Blc);
        assert_eq!(classify_region(9.79, 9.78), Region::Lc);
        assert_eq!(Region::Blc.to_string(), "BLC");
        assert_eq!(Region::Lc.to_string(), "LC");
    }

    #[test]
    fn operating_point_of_the_reference_scenario() {
        let sc = ScenarioParams::default();
        let op = operating_point(&sc, &timing(), &SolverSettings::default(), false).unwrap();
        assert_eq!(op.region, Region::Blc);
        // Below capacity the model throughput rides the offered-load line.
        let offered = offered_load_bps(10, 1024 * 8, 8.0);
        assert_relative_eq!(op.throughput_bps, offered, max_relative = 0.02);
        assert!(op.lambda_c_pps > 9.0 && op.lambda_c_pps < 10.5);
    }

    #[test]
    fn saturated_throughput_reference_value() {
        let sc = ScenarioParams {
            n_stations: 10,
            payload_bits: 1028 * 8,
            bit_error_prob: None,
            ..ScenarioParams::default()
        };
        let op = operating_point(&sc, &timing(), &SolverSettings::default(), true).unwrap();
        assert_relative_eq!(op.throughput_bps, 775_067.0, max_relative = 1e-4);
        assert_eq!(op.region, Region::Lc);
        // The default window leaves >10% capacity on the table at N = 10.
        assert!(op.s_m_bps > 1.1 * op.throughput_bps);
    }

    #[test]
    fn optimized_model_is_piecewise() {
        let t = timing();
        let blc = ScenarioParams { lambda_pps: 5.0, ..ScenarioParams::default() };
        assert_relative_eq!(
            optimized_throughput_model(&blc, &t).unwrap(),
            offered_load_bps(10, 1024 * 8, 5.0),
            max_relative = 1e-12
        );
        let lc = ScenarioParams { lambda_pps: 1000.0, ..ScenarioParams::default() };
        let d = slots_for_bytes(1024);
        let pe = packet_error_rate(1e-5, 1024 * 8, &t).unwrap();
        assert_relative_eq!(
            optimized_throughput_model(&lc, &t).unwrap(),
            link_capacity(10, pe, 1024 * 8, &d).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sweep_preserves_order_and_crosses_the_region_boundary() {
        let base = ScenarioParams::default();
        let values = [1.0, 5.0, 9.0, 20.0, 100.0];
        let rows = sweep(
            &base,
            &timing(),
            &SolverSettings::default(),
            SweepAxis::Lambda,
            &values,
            false,
        )
        .unwrap();
        assert_eq!(rows.len(), values.len());
        for (row, v) in rows.iter().zip(values) {
            assert_eq!(row.axis_value, v);
        }
        assert_eq!(rows[0].region, Region::Blc);
        assert_eq!(rows[4].region, Region::Lc);
        // tau nondecreasing along the lambda axis.
        for pair in rows.windows(2) {
            assert!(pair[1].tau >= pair[0].tau - 1e-12);
        }
    }

    #[test]
    fn sweep_payload_axis_is_in_bytes() {
        let rows = sweep(
            &ScenarioParams::default(),
            &timing(),
            &SolverSettings::default(),
            SweepAxis::Payload,
            &[512.0, 1024.0],
            false,
        )
        .unwrap();
        // Larger payload -> lower critical rate.
        assert!(rows[1].lambda_c_pps < rows[0].lambda_c_pps);
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!(SweepAxis::parse("lambda").unwrap(), SweepAxis::Lambda);
        assert_eq!(SweepAxis::parse("w0").unwrap(), SweepAxis::W0);
        assert_eq!(SweepAxis::parse("payload").unwrap(), SweepAxis::Payload);
        assert_eq!(SweepAxis::parse("n").unwrap(), SweepAxis::N);
        assert!(SweepAxis::parse("bogus").is_err());
    }
}
