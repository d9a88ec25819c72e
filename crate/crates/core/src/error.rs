//! Error type shared across the crate, with process exit-code mapping for the
//! CLI (0 success, 2 configuration, 3 solver, 4 infeasible optimization).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violated a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The equilibrium solver exhausted its iteration budget before meeting
    /// the residual tolerance.
    #[error("equilibrium solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: u64 },

    /// No payload length (not even zero) meets the requested packet error
    /// target at this bit error probability: the frame overhead alone exceeds
    /// the target.
    #[error(
        "packet error target {target} is unreachable: overhead alone gives error rate {floor:.4e}"
    )]
    InfeasibleTarget { target: f64, floor: f64 },

    /// The capacity operating point would require a contention window below
    /// one slot, which no physical window can realize.
    #[error("no contention window >= 1 slot reaches the capacity operating point (unrounded W0 = {w_real:.4})")]
    InfeasibleWindow { w_real: f64 },

    /// The brute-force backoff-chain state space exceeds the safety cap.
    #[error("backoff chain has {states} states, above the {cap}-state cap for the dense solver")]
    ChainTooLarge { states: usize, cap: usize },

    /// Configuration file / CLI usage problem.
    #[error("config: {0}")]
    Config(String),

    /// Underlying I/O failure (reading configs, writing reports).
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the `dcf` binary uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::ChainTooLarge { .. } => 2,
            Error::Config(_) | Error::Io(_) => 2,
            Error::SolverFailure { .. } => 3,
            Error::InfeasibleTarget { .. } | Error::InfeasibleWindow { .. } => 4,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_cli_contract() {
        assert_eq!(Error::InvalidParameter("x".into()).exit_code(), 2);
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::SolverFailure { residual: 1.0, iterations: 1 }.exit_code(),
            3
        );
        assert_eq!(
            Error::InfeasibleTarget { target: 0.1, floor: 0.2 }.exit_code(),
            4
        );
        assert_eq!(Error::InfeasibleWindow { w_real: 0.5 }.exit_code(), 4);
        assert_eq!(Error::ChainTooLarge { states: 9, cap: 8 }.exit_code(), 2);
    }

    #[test]
    fn messages_carry_the_offending_numbers() {
        let msg = Error::SolverFailure { residual: 2.5e-4, iterations: 77 }.to_string();
        assert!(msg.contains("2.500e-4") && msg.contains("77"), "{msg}");
        let msg = Error::InfeasibleWindow { w_real: 0.25 }.to_string();
        assert!(msg.contains("0.25"), "{msg}");
    }
}
