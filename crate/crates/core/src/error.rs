use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Pitch too close to ±π/2, where the Euler parameterisation breaks down.
    #[error("singular attitude: |theta| = {theta} rad is at or beyond the guard {guard} rad")]
    SingularAttitude { theta: f64, guard: f64 },

    #[error("time step {0} s is outside (0, {max}] s", max = crate::plant::MAX_TIME_STEP)]
    InvalidTimeStep(f64),

    /// No attitude inside the singularity guard realises the commanded acceleration.
    #[error("infeasible acceleration command ({x_ddot}, {y_ddot}) m/s^2: required pitch {theta} rad")]
    InfeasibleCommand { x_ddot: f64, y_ddot: f64, theta: f64 },

    #[error("Lyapunov weight matrix is not positive definite (min eigenvalue {min_eigenvalue})")]
    IndefiniteLyapunov { min_eigenvalue: f64 },

    #[error("{which} disturbance norm {norm} exceeds bound {bound}")]
    DisturbanceExceedsBound { which: &'static str, norm: f64, bound: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
