// SPDX-License-Identifier: Apache-2.0

//! Physical parameters of the feedback-controlled Dicke model.
//!
//! Every frequency is measured in units of the spin (recoil) frequency
//! `omega_r`, which defaults to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

fn half_pi() -> f64 {
    std::f64::consts::FRAC_PI_2
}

fn one_spin() -> u32 {
    1
}

/// Parameters shared by every formula in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Spin frequency, the global unit.
    #[serde(default = "one")]
    pub omega_r: f64,
    /// Cavity detuning.
    pub delta: f64,
    /// Cavity amplitude decay rate.
    pub kappa: f64,
    /// Spin–cavity coupling.
    pub g: f64,
    /// Feedback gain multiplying the kernel.
    #[serde(default)]
    pub gain: f64,
    /// Homodyne quadrature angle in radians.
    #[serde(default = "half_pi")]
    pub theta: f64,
    /// Number of spins.
    #[serde(default = "one_spin")]
    pub n_spins: u32,
}

impl ModelParams {
    /// Parameters with `omega_r = 1`, `theta = pi/2`, `gain = 0` and one spin.
    pub fn new(delta: f64, kappa: f64, g: f64) -> Result<Self> {
        let p = Self {
            omega_r: 1.0,
            delta,
            kappa,
            g,
            gain: 0.0,
            theta: std::f64::consts::FRAC_PI_2,
            n_spins: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_r", self.omega_r),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("g", self.g),
            ("gain", self.gain),
            ("theta", self.theta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.omega_r <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "omega_r must be positive, got {}",
                self.omega_r
            )));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        if self.n_spins < 1 {
            return Err(Error::InvalidParameter("n_spins must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_spins(mut self, n_spins: u32) -> Self {
        self.n_spins = n_spins;
        self
    }

    /// `delta cos(theta) + kappa sin(theta)`: how strongly the measured
    /// quadrature responds to a static spin displacement.
    pub fn c_theta(&self) -> f64 {
        self.delta * self.theta.cos() + self.kappa * self.theta.sin()
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::from_kappa(self.kappa)
    }
}

/// Vacuum input noise entering through the cavity mirror.
///
/// The correlator is `<f_a(t + tau) f_a^dag(t)> = 2 kappa delta(tau)`. The
/// noise never appears explicitly: it is folded into the spectral density
/// and into the Wiener increments of the trajectory engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub strength: f64,
}

impl NoiseModel {
    pub fn from_kappa(kappa: f64) -> Self {
        Self {
            strength: 2.0 * kappa,
        }
    }
}
