// SPDX-License-Identifier: Apache-2.0

//! Conditional evolution under continuous homodyne detection and feedback.

pub mod engine;
pub mod space;
pub mod state;

pub use engine::{
    run_ensemble, run_stream, run_trajectory, sme_step, ConditionedState, EnsembleOutput,
    Estimate, Frame, InitialState, ModelKind, Scheme, Sme, StepInfo, TrajectoryConfig,
    TrajectoryOutput,
};
pub use space::{build_space, HilbertSpace, MatterKind};
pub use state::{Density, LocalOp, Record};
