// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("cavity response has a pole at omega = {omega}")]
    Pole { omega: f64 },

    #[error("no feedback threshold: {0}")]
    NoThreshold(String),

    #[error("critical coupling diverges (delta = {delta} must be positive)")]
    CouplingDiverges { delta: f64 },

    #[error("unstable regime: gain {gain} is not below the critical gain {critical}")]
    Unstable { gain: f64, critical: f64 },

    #[error("quadrature did not converge: estimate {value}, error {error}")]
    NonConvergence { value: f64, error: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("Hilbert space: {0}")]
    Space(String),

    #[error("step size too large at t = {t}: {reason}")]
    StepSize { t: f64, reason: String },

    #[error("threshold scan failed: {0}")]
    NoBracket(String),

    #[error("kernel shape not supported here: {0}")]
    UnsupportedKernel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
