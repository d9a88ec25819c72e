//! Brute-force stationary distribution of the per-station backoff Markov
//! chain.
//!
//! The chain has an idle state `I` plus one state per (backoff stage,
//! counter value) pair: stage `i` in `0..=m` holds `W_i = W0 * 2^i` counter
//! states. Transitions encode the protocol rules directly:
//!
//! * counter `k > 0` decrements to `k - 1` with probability 1;
//! * a transmission (counter 0) fails with probability `p_eq` and re-enters
//!   stage `min(i + 1, m)` uniformly; on success it starts a fresh stage-0
//!   backoff with probability `q` (another packet waiting) or parks in `I`;
//! * `I` starts a stage-0 backoff with probability `q` per slot.
//!
//! The stationary vector is obtained by a dense linear solve of the balance
//! equations — no closed-form aggregation is used anywhere — so the summed
//! transmission probability `tau = sum_i pi(i, 0)` is an independent
//! cross-check for [`crate::fixed_point::tau_closed_form`].

use crate::error::{Error, Result};

/// Upper bound on the number of chain states the dense solver accepts.
/// The default configuration (W0 = 32, m = 5) needs 2017 states; the cubic
/// cost of the solve makes much larger spaces impractical.
pub const STATE_CAP: usize = 4096;

/// Stationary per-slot transmission probability of the backoff chain,
/// computed by brute force.
///
/// `p_eq` is the per-attempt failure probability, `q` the probability that a
/// packet is waiting when a choice point is reached. `q = 0` makes the idle
/// state absorbing, so the result is 0 by inspection.
pub fn stationary_tau(p_eq: f64, q: f64, w0: u32, m: u32) -> Result<f64> {
    for (name, v) in [("p_eq", p_eq), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if w0 < 1 {
        return Err(Error::InvalidParameter("w0 must be >= 1".into()));
    }
    if m > 20 {
        return Err(Error::InvalidParameter(format!("m must be <= 20, got {m}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }

    // Stage widths and state layout: index 0 is I, stage i starts at offset[i].
    let widths: Vec<usize> =
        (0..=m).map(|i| (w0 as u64).checked_shl(i).unwrap_or(u64::MAX) as usize).collect();
    let mut offsets = Vec::with_capacity(widths.len());
    let mut n_states = 1usize;
    for w in &widths {
        offsets.push(n_states);
        n_states = n_states.saturating_add(*w);
    }
    if n_states > STATE_CAP {
        return Err(Error::ChainTooLarge { states: n_states, cap: STATE_CAP });
    }
    let state = |stage: usize, k: usize| offsets[stage] + k;

    // Row-stochastic transition matrix, flat row-major.
    let n = n_states;
    let mut p = vec![0.0f64; n * n];
    {
        // Idle state.
        p[0] += 1.0 - q;
        let share = q / widths[0] as f64;
        for k in 0..widths[0] {
            p[state(0, k)] += share;
        }
        for i in 0..=m as usize {
            // Counter decrements.
            for k in 1..widths[i] {
                p[state(i, k) * n + state(i, k - 1)] = 1.0;
            }
            // Transmission from (i, 0).
            let base = state(i, 0) * n;
            let next = (i + 1).min(m as usize);
            let fail_share = p_eq / widths[next] as f64;
            for k in 0..widths[next] {
                p[base + state(next, k)] += fail_share;
            }
            let succ_busy_share = (1.0 - p_eq) * q / widths[0] as f64;
            for k in 0..widths[0] {
                p[base + state(0, k)] += succ_busy_share;
            }
            p[base] += (1.0 - p_eq) * (1.0 - q);
        }
    }
    #[cfg(debug_assertions)]
    for s in 0..n {
        let sum: f64 = p[s * n..(s + 1) * n].iter().sum();
        debug_assert!((sum - 1.0).abs() < 1e-12, "row {s} sums to {sum}");
    }

    // Balance equations: pi (P - I) = 0 with sum(pi) = 1, i.e. solve
    // (P^T - I) x = 0 with the last equation replaced by normalization.
    let mut a = vec![0.0f64; n * n];
    for s in 0..n {
        for t in 0..n {
            a[t * n + s] = p[s * n + t];
        }
    }
    for s in 0..n {
        a[s * n + s] -= 1.0;
    }
    for t in 0..n {
        a[(n - 1) * n + t] = 1.0;
    }
    let mut b = vec![0.0f64; n];
    b[n - 1] = 1.0;
    solve_dense(&mut a, &mut b, n)?;

    let tau = (0..=m as usize).map(|i| b[state(i, 0)]).sum::<f64>();
    Ok(tau.clamp(0.0, 1.0))
}

/// In-place Gaussian elimination with partial pivoting on a flat row-major
/// `n x n` matrix; the solution overwrites `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col].abs().partial_cmp(&a[r2 * n + col].abs()).unwrap()
            })
            .unwrap();
        let pivot = a[pivot_row * n + col];
        if pivot.abs() < 1e-14 {
            return Err(Error::InvalidParameter(
                "chain balance matrix is numerically singular".into(),
            ));
        }
        if pivot_row != col {
            for c in col..n {
                a.swap(pivot_row * n + c, col * n + c);
            }
            b.swap(pivot_row, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / pivot;
            if f == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for c in col + 1..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for c in col + 1..n {
            x -= a[col * n + c] * b[c];
        }
        b[col] = x / a[col * n + col];
    }
    Ok(())
}
