//! Equilibrium of the cell: the closed-form per-station transmission
//! probability coupled with the slot-outcome probabilities it induces.
//!
//! The model reduces to a one-dimensional fixed point in `tau`:
//!
//! ```text
//! p_col = 1 - (1 - tau)^(N-1)                      conditional collision prob.
//! p_eq  = p_col + p_e - p_col * p_e                any-loss probability
//! E[S]  = (1-P_tr) sigma + (P_tr - P_s) T_c
//!         + P_s (1-p_e) T_s + P_s p_e T_e          mean virtual-slot time
//! q     = 1 - exp(-lambda E[S])                    packet-waiting probability
//! tau'  = 2q / ( q[(W0+1) + W0 p_eq G(2 p_eq, m)] + 2(1-q)(1-p_eq) )
//! ```
//!
//! with `P_tr = 1 - (1-tau)^N`, `P_s = N tau (1-tau)^(N-1)` and
//! `G(x, m) = sum_{i<m} x^i`. The `tau'` expression is the stationary
//! transmission probability of the backoff chain in [`crate::chain`], written
//! in a factored form whose denominator stays positive for `q > 0` — the
//! apparent singularity of the textbook expression at `p_eq = 1/2` is
//! removable and never evaluated here.
//!
//! [`solve_equilibrium`] damps Picard iterations on this map, falls back to
//! bisection on `g(tau) = tau' - tau` when needed, then scans a fine grid for
//! additional sign changes; if several roots exist the smallest is returned
//! and [`EquilibriumSolution::multiple_roots`] is set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{slot_durations, ProtocolTiming, ScenarioParams, SlotDurations};

/// Grid resolution of the post-convergence multiple-root scan.
const ROOT_SCAN_POINTS: usize = 10_000;

/// Numerical controls for [`solve_equilibrium`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Convergence tolerance on the fixed-point residual.
    pub tolerance: f64,
    /// Shared iteration budget (Picard + bisection fallback).
    pub max_iterations: u64,
    /// Picard damping factor in (0, 1]; 1 disables damping.
    pub damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tolerance: 1e-10, max_iterations: 10_000, damping: 0.5 }
    }
}

impl SolverSettings {
    /// Validate field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be finite and > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Converged equilibrium of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    /// Per-station per-slot transmission probability.
    pub tau: f64,
    /// Conditional collision probability seen by a transmission.
    pub p_col: f64,
    /// Combined failure probability (collision or channel error).
    pub p_eq: f64,
    /// Probability a packet is waiting at a transmission opportunity
    /// (pinned to 1 in saturated mode).
    pub q: f64,
    /// Mean virtual-slot duration E[S] (s).
    pub expected_slot_s: f64,
    /// Fixed-point residual |tau' - tau| at the returned solution.
    pub residual: f64,
    /// Iterations spent (Picard + bisection).
    pub iterations: u64,
    /// True when the root scan found more than one equilibrium; the smallest
    /// root is the one reported.
    pub multiple_roots: bool,
}

/// `sum_{i=0}^{m-1} x^i`, evaluated by direct summation (exact at `x = 1`).
pub fn geometric_sum(x: f64, m: u32) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for _ in 0..m {
        sum += power;
        power *= x;
    }
    sum
}

/// Stationary transmission probability of the backoff chain for a given
/// failure probability `p_eq` and packet-waiting probability `q`.
pub fn tau_closed_form(p_eq: f64, q: f64, w0: u32, m: u32) -> Result<f64> {
    for (name, v) in [("p_eq", p_eq), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if w0 < 1 {
        return Err(Error::InvalidParameter("w0 must be >= 1".into()));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let w0f = w0 as f64;
    let denom = q * ((w0f + 1.0) + w0f * p_eq * geometric_sum(2.0 * p_eq, m))
        + 2.0 * (1.0 - q) * (1.0 - p_eq);
    Ok((2.0 * q / denom).clamp(0.0, 1.0))
}

/// Saturated-source transmission probability (`q = 1`).
pub fn tau_saturated(p_eq: f64, w0: u32, m: u32) -> Result<f64> {
    tau_closed_form(p_eq, 1.0, w0, m)
}

/// Conditional collision probability: at least one of the other `n - 1`
/// stations transmits in the same slot.
pub fn collision_prob(tau: f64, n_stations: u32) -> f64 {
    1.0 - (1.0 - tau).powi(n_stations.saturating_sub(1) as i32)
}

/// Probability an attempt fails from collision or channel error.
pub fn equivalent_failure_prob(p_col: f64, p_e: f64) -> f64 {
    p_col + p_e - p_col * p_e
}

/// Mean virtual-slot duration E[S] given every station transmits with
/// probability `tau` per slot.
pub fn expected_slot_time(tau: f64, n_stations: u32, p_e: f64, d: &SlotDurations) -> f64 {
    let n = n_stations;
    let p_no_tx = (1.0 - tau).powi(n as i32);
    let p_tr = 1.0 - p_no_tx;
    let p_one = n as f64 * tau * (1.0 - tau).powi(n.saturating_sub(1) as i32);
    (1.0 - p_tr) * d.sigma_s
        + (p_tr - p_one) * d.t_collision_s
        + p_one * (1.0 - p_e) * d.t_success_s
        + p_one * p_e * d.t_error_s
}

/// Probability at least one Poisson arrival lands within a mean slot:
/// `1 - exp(-lambda * E[S])`.
pub fn queue_nonempty_prob(lambda_pps: f64, expected_slot_s: f64) -> f64 {
    -f64::exp_m1(-lambda_pps * expected_slot_s)
}

struct Derived {
    p_col: f64,
    p_eq: f64,
    expected_slot_s: f64,
    q: f64,
}

struct Map<'a> {
    n: u32,
    w0: u32,
    m: u32,
    p_e: f64,
    lambda_pps: f64,
    saturated: bool,
    d: &'a SlotDurations,
}

impl Map<'_> {
    fn derived(&self, tau: f64) -> Derived {
        let p_col = collision_prob(tau, self.n);
        let p_eq = equivalent_failure_prob(p_col, self.p_e);
        let expected_slot_s = expected_slot_time(tau, self.n, self.p_e, self.d);
        let q = if self.saturated {
            1.0
        } else {
            queue_nonempty_prob(self.lambda_pps, expected_slot_s)
        };
        Derived { p_col, p_eq, expected_slot_s, q }
    }

    fn apply(&self, tau: f64) -> f64 {
        let de = self.derived(tau);
        tau_closed_form(de.p_eq, de.q, self.w0, self.m)
            .expect("probabilities derived from tau in [0, 1] are in range")
    }

    fn gap(&self, tau: f64) -> f64 {
        self.apply(tau) - tau
    }
}

/// Solve the unsaturated equilibrium for a scenario.
pub fn solve_equilibrium(
    scenario: &ScenarioParams,
    timing: &ProtocolTiming,
    settings: &SolverSettings,
) -> Result<EquilibriumSolution> {
    solve_inner(scenario, timing, settings, false)
}

/// Solve the saturated equilibrium (`q` pinned to 1; `lambda_pps` ignored).
pub fn solve_saturated(
    scenario: &ScenarioParams,
    timing: &ProtocolTiming,
    settings: &SolverSettings,
) -> Result<EquilibriumSolution> {
    solve_inner(scenario, timing, settings, true)
}

fn solve_inner(
    scenario: &ScenarioParams,
    timing: &ProtocolTiming,
    settings: &SolverSettings,
    saturated: bool,
) -> Result<EquilibriumSolution> {
    scenario.validate()?;
    timing.validate()?;
    settings.validate()?;
    let d = slot_durations(timing, scenario.payload_bits)?;
    let p_e = scenario.resolved_packet_error_prob(timing)?;

    if !saturated && scenario.lambda_pps == 0.0 {
        // No arrivals: the chain idles forever; E[S] collapses to sigma.
        return Ok(EquilibriumSolution {
            tau: 0.0,
            p_col: 0.0,
            p_eq: p_e,
            q: 0.0,
            expected_slot_s: d.sigma_s,
            residual: 0.0,
            iterations: 0,
            multiple_roots: false,
        });
    }

    let map = Map {
        n: scenario.n_stations,
        w0: scenario.w0,
        m: scenario.m,
        p_e,
        lambda_pps: scenario.lambda_pps,
        saturated,
        d: &d,
    };

    let budget = settings.max_iterations;
    let mut iterations = 0u64;
    let inner_tol = settings.tolerance * 0.1;

    // Damped Picard from the collision-free saturated value.
    let mut tau = 2.0 / (scenario.w0 as f64 + 1.0);
    let mut converged = false;
    while iterations < budget {
        iterations += 1;
        let next = map.apply(tau);
        if (next - tau).abs() <= inner_tol {
            tau = next;
            converged = true;
            break;
        }
        tau += settings.damping * (next - tau);
    }
    if !converged || map.gap(tau).abs() > settings.tolerance {
        // Bisection fallback: g(0+) > 0 and g(1) <= 0 bracket a root.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > inner_tol && iterations < budget {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if map.gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        tau = 0.5 * (lo + hi);
    }

    let mut residual = map.gap(tau).abs();
    if residual > settings.tolerance {
        return Err(Error::SolverFailure { residual, iterations });
    }

    // Fine-grid scan for additional equilibria; report the smallest root.
    let mut multiple_roots = false;
    {
        let step = 1.0 / ROOT_SCAN_POINTS as f64;
        let mut brackets: Vec<(f64, f64)> = Vec::new();
        let mut prev_x = step;
        let mut prev_sign = map.gap(prev_x) > 0.0;
        for i in 2..=ROOT_SCAN_POINTS {
            let x = i as f64 * step;
            let sign = map.gap(x) > 0.0;
            if sign != prev_sign {
                brackets.push((prev_x, x));
                if brackets.len() > 2 {
                    break;
                }
            }
            prev_x = x;
            prev_sign = sign;
        }
        if brackets.len() > 1 {
            multiple_roots = true;
            let (mut lo, mut hi) = brackets[0];
            if !(lo..=hi).contains(&tau) {
                let lo_sign = map.gap(lo) > 0.0;
                while hi - lo > inner_tol && iterations < budget {
                    iterations += 1;
                    let mid = 0.5 * (lo + hi);
                    if (map.gap(mid) > 0.0) == lo_sign {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let candidate = 0.5 * (lo + hi);
                let cand_residual = map.gap(candidate).abs();
                if candidate < tau && cand_residual <= settings.tolerance {
                    tau = candidate;
                    residual = cand_residual;
                }
            }
        }
    }

    let de = map.derived(tau);
    Ok(EquilibriumSolution {
        tau,
        p_col: de.p_col,
        p_eq: de.p_eq,
        q: de.q,
        expected_slot_s: de.expected_slot_s,
        residual,
        iterations,
        multiple_roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_timing() -> ProtocolTiming {
        ProtocolTiming::default()
    }

    #[test]
    fn geometric_sum_reference_values() {
        assert_eq!(geometric_sum(0.5, 3), 1.75);
        assert_eq!(geometric_sum(2.0, 5), 31.0);
        assert_eq!(geometric_sum(1.0, 7), 7.0);
        assert_eq!(geometric_sum(0.3, 0), 0.0);
    }

    #[test]
    fn tau_closed_form_is_continuous_at_one_half() {
        // The textbook expression has a removable singularity at p_eq = 1/2;
        // the factored form must pass through it smoothly.
        let at = tau_closed_form(0.5, 0.7, 32, 5).unwrap();
        let below = tau_closed_form(0.5 - 1e-9, 0.7, 32, 5).unwrap();
        let above = tau_closed_form(0.5 + 1e-9, 0.7, 32, 5).unwrap();
        assert!((above - below).abs() < 1e-8);
        assert!(at >= above.min(below) && at <= above.max(below));
    }

    #[test]
    fn tau_closed_form_limits() {
        // p_eq = 1, any q > 0: cycling through the top stage.
        for q in [0.3, 1.0] {
            assert_relative_eq!(
                tau_closed_form(1.0, q, 32, 5).unwrap(),
                2.0 / (32.0 * 32.0 + 1.0),
                epsilon = 1e-15
            );
        }
        // p_eq = 0, q = 1: the classic 2 / (W0 + 1).
        assert_relative_eq!(tau_saturated(0.0, 32, 5).unwrap(), 2.0 / 33.0, epsilon = 1e-15);
        // W0 = 1, m = 0, saturated, always failing: transmits every slot.
        assert_eq!(tau_closed_form(1.0, 1.0, 1, 0).unwrap(), 1.0);
        // q = 0: never transmits.
        assert_eq!(tau_closed_form(0.4, 0.0, 32, 5).unwrap(), 0.0);
    }

    #[test]
    fn building_blocks_are_consistent() {
        assert_eq!(collision_prob(0.1, 1), 0.0);
        assert_relative_eq!(collision_prob(0.1, 3), 1.0 - 0.81, epsilon = 1e-15);
        assert_eq!(equivalent_failure_prob(0.0, 0.3), 0.3);
        assert_eq!(equivalent_failure_prob(0.2, 0.0), 0.2);
        assert_relative_eq!(
            equivalent_failure_prob(0.2, 0.3),
            1.0 - 0.8 * 0.7,
            epsilon = 1e-15
        );
        assert_relative_eq!(queue_nonempty_prob(8.0, 1e-4), 1.0 - (-8e-4f64).exp(), epsilon = 1e-15);
        // tau = 0 collapses E[S] to the idle slot.
        let d = slot_durations(&default_timing(), 8192).unwrap();
        assert_eq!(expected_slot_time(0.0, 10, 0.1, &d), d.sigma_s);
        // tau = 1, n = 1: always a lone transmission.
        let es = expected_slot_time(1.0, 1, 0.25, &d);
        assert_relative_eq!(
            es,
            0.75 * d.t_success_s + 0.25 * d.t_error_s,
            epsilon = 1e-15
        );
    }

    fn scenario(n: u32, lambda: f64) -> ScenarioParams {
        ScenarioParams { n_stations: n, lambda_pps: lambda, ..ScenarioParams::default() }
    }

    #[test]
    fn saturated_single_station_is_exact() {
        let sol = solve_saturated(
            &ScenarioParams {
                bit_error_prob: None,
                ..scenario(1, 0.0)
            },
            &default_timing(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.tau, 2.0 / 33.0, epsilon = 1e-9);
        assert_eq!(sol.p_col, 0.0);
        assert_eq!(sol.q, 1.0);
    }

    #[test]
    fn saturated_ten_stations_matches_reference() {
        // Ideal channel, N = 10, W0 = 32, m = 5.
        let sol = solve_saturated(
            &ScenarioParams {
                bit_error_prob: None,
                payload_bits: 1028 * 8,
                ..scenario(10, 0.0)
            },
            &default_timing(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.tau, 0.0373051, max_relative = 1e-5);
        assert_relative_eq!(sol.p_col, 0.289771, max_relative = 1e-5);
        assert!(sol.residual <= 1e-10);
        assert!(!sol.multiple_roots);
    }

    #[test]
    fn unsaturated_reference_scenario() {
        // N = 10, lambda = 8/s, 1024 B, p_b = 1e-5: far below capacity, so
        // tau tracks the offered load closely.
        let sol = solve_equilibrium(
            &ScenarioParams::default(),
            &default_timing(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.tau, 7.2018e-4, max_relative = 1e-4);
        assert_relative_eq!(sol.q, 6.648e-4, max_relative = 1e-3);
        assert!(sol.residual <= 1e-10);
        assert!(sol.iterations > 0);
    }

    #[test]
    fn zero_load_has_the_trivial_solution() {
        let sol = solve_equilibrium(
            &scenario(10, 0.0),
            &default_timing(),
            &SolverSettings::default(),
        )
        .unwrap();
        assert_eq!(sol.tau, 0.0);
        assert_eq!(sol.q, 0.0);
        assert_eq!(sol.p_col, 0.0);
        assert_eq!(sol.expected_slot_s, default_timing().sigma_s);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn solutions_satisfy_every_model_equation() {
        let t = default_timing();
        let settings = SolverSettings::default();
        for &n in &[2u32, 10, 50] {
            for &lambda in &[0.5, 5.0, 50.0, 2000.0] {
                for &pe in &[None, Some(0.3)] {
                    let sc = ScenarioParams {
                        bit_error_prob: None,
                        packet_error_prob: pe,
                        ..scenario(n, lambda)
                    };
                    let sol = solve_equilibrium(&sc, &t, &settings).unwrap();
                    let d = slot_durations(&t, sc.payload_bits).unwrap();
                    let pe_val = pe.unwrap_or(0.0);
                    let p_col = collision_prob(sol.tau, n);
                    let p_eq = equivalent_failure_prob(p_col, pe_val);
                    let es = expected_slot_time(sol.tau, n, pe_val, &d);
                    let q = queue_nonempty_prob(lambda, es);
                    let tau_back = tau_closed_form(p_eq, q, sc.w0, sc.m).unwrap();
                    assert!((sol.p_col - p_col).abs() <= 1e-12);
                    assert!((sol.p_eq - p_eq).abs() <= 1e-12);
                    assert!((sol.expected_slot_s - es).abs() <= 1e-15);
                    assert!((sol.q - q).abs() <= 1e-12);
                    assert!(
                        (sol.tau - tau_back).abs() <= 1e-9,
                        "n={n} lambda={lambda} pe={pe_val}: tau={} tau'={}",
                        sol.tau,
                        tau_back
                    );
                }
            }
        }
    }

    #[test]
    fn tau_grows_with_offered_load() {
        let t = default_timing();
        let settings = SolverSettings::default();
        let mut prev = 0.0;
        for &lambda in &[0.1, 0.5, 2.0, 8.0, 30.0, 120.0, 500.0, 2000.0] {
            let sol = solve_equilibrium(&scenario(10, lambda), &t, &settings).unwrap();
            assert!(
                sol.tau >= prev - 1e-12,
                "tau must be nondecreasing in lambda: {prev} -> {} at {lambda}",
                sol.tau
            );
            prev = sol.tau;
        }
        // And approaches the saturated value from below.
        let sat = solve_saturated(&scenario(10, 0.0), &t, &settings).unwrap();
        assert!(prev <= sat.tau + 1e-9);
        assert_relative_eq!(prev, sat.tau, max_relative = 0.05);
    }

    #[test]
    fn exhausted_budget_reports_solver_failure() {
        let settings = SolverSettings { tolerance: 1e-14, max_iterations: 3, damping: 0.5 };
        match solve_equilibrium(&scenario(10, 8.0), &default_timing(), &settings) {
            Err(Error::SolverFailure { residual, iterations }) => {
                assert!(residual > 1e-14);
                assert!(iterations <= 3 + 3);
            }
            other => panic!("expected SolverFailure, got {other:?}"),
        }
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings { tolerance: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverSettings { damping: 1.5, ..Default::default() }.validate().is_err());
        assert!(SolverSettings { max_iterations: 0, ..Default::default() }.validate().is_err());
        SolverSettings::default().validate().unwrap();
    }
}
