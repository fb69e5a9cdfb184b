//! Outer-loop docking control for a helicopter closing on a refueling drogue.
//!
//! The crate models the helicopter's translational zero dynamics under an
//! inner attitude loop, the drogue's nominal and perturbed motion, a planner
//! that closes the probe onto the drogue, two outer-loop laws (CG feedback and
//! probe feedback), the Lyapunov bound for the closure error, and a Monte
//! Carlo harness that compares the two laws.

pub mod analysis;
pub mod controllers;
pub mod drogue;
pub mod error;
pub mod export;
pub mod harness;
pub mod kinematics;
pub mod plant;
pub mod reference;
pub mod xyz;

pub use analysis::{
    boundedness_verdict, invariant_set_level, lyapunov_value, vdot_check, BoundednessVerdict, ErrorState,
    InvariantSetBound, LyapunovParams,
};
pub use controllers::{invert_to_attitude, ControllerGains, ControllerKind};
pub use drogue::{DrogueModel, DrogueParams, DrogueState, UncertaintyBounds, WindCondition};
pub use error::{Error, Result};
pub use harness::{
    bound_report, run_batch, run_once, Batch, BatchSummary, BoundReport, ControllerStats, Pairing, RunConfig,
    RunOutcome, RunRecord, RunSeries, Scenario, ScenarioParams,
};
pub use kinematics::{AngularRates, Attitude, ProbeGeometry};
pub use plant::{AccelCommand, HelicopterState, InnerLoopMode, PlantParams};
pub use reference::{ClosureSchedule, ProbeOffsetModel, ReferenceParams, ReferenceSample};
