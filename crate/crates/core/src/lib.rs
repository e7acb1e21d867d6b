// SPDX-License-Identifier: Apache-2.0

pub mod criticality;
pub mod error;
pub mod kernel;
pub mod meanfield;
pub mod params;
pub mod quad;
pub mod spectral;
pub mod trajectory;

pub use error::{Error, Result};
pub use kernel::FeedbackKernel;
pub use params::{ModelParams, NoiseModel};
