//! Planner outputs: desired probe and drogue trajectories with a minimum-jerk
//! closure schedule that brings the probe onto the nominal drogue.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::drogue::DrogueState;
use crate::error::{Error, Result};
use crate::kinematics::{rotation_matrix, Attitude, ProbeGeometry};

/// How the planner maps the body-frame probe offset into NED when it derives
/// the desired CG trajectory from the desired probe trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeOffsetModel {
    /// Offset taken in level attitude (`x_bar` used as-is).
    #[default]
    Level,
    /// Offset rotated by the trim attitude.
    Trim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceParams {
    /// Along-track CG-to-drogue separation at the start of the approach (m).
    #[serde(default = "default_separation")]
    pub initial_separation: f64,
    #[serde(default = "default_duration")]
    pub approach_duration: f64,
    #[serde(default)]
    pub probe_offset: ProbeOffsetModel,
}

fn default_separation() -> f64 {
    5.0
}

fn default_duration() -> f64 {
    30.0
}

impl Default for ReferenceParams {
    fn default() -> Self {
        Self {
            initial_separation: default_separation(),
            approach_duration: default_duration(),
            probe_offset: ProbeOffsetModel::default(),
        }
    }
}

impl ReferenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.approach_duration > 0.0 && self.approach_duration.is_finite()) {
            return Err(Error::InvalidParameter {
                key: "reference.approach_duration".into(),
                reason: "must be positive".into(),
            });
        }
        if !self.initial_separation.is_finite() {
            return Err(Error::InvalidParameter {
                key: "reference.initial_separation".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Quintic closure profile from `initial_closure` at t = 0 to zero at `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureSchedule {
    /// Desired probe-minus-drogue vector at t = 0 (m).
    pub initial_closure: Vector3<f64>,
    pub duration: f64,
    /// Planner's CG-to-probe vector in NED (m).
    pub cg_offset: Vector3<f64>,
}

impl ClosureSchedule {
    pub fn new(params: &ReferenceParams, geom: &ProbeGeometry, trim: &Attitude) -> Result<Self> {
        params.validate()?;
        let cg_offset = match params.probe_offset {
            ProbeOffsetModel::Level => geom.x_bar,
            ProbeOffsetModel::Trim => rotation_matrix(trim)? * geom.x_bar,
        };
        Ok(Self {
            initial_closure: Vector3::new(-params.initial_separation, 0.0, 0.0) + cg_offset,
            duration: params.approach_duration,
            cg_offset,
        })
    }

    /// Normalised progress and its first two time derivatives.
    fn progress(&self, t: f64) -> (f64, f64, f64) {
        let d = self.duration;
        if t >= d {
            return (1.0, 0.0, 0.0);
        }
        let s = (t / d).max(0.0);
        let (s2, s3) = (s * s, s * s * s);
        (
            s3 * (10.0 - 15.0 * s + 6.0 * s2),
            30.0 * s2 * (1.0 - s) * (1.0 - s) / d,
            60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (d * d),
        )
    }

    /// Desired closure vector and its derivatives at `t`.
    pub fn closure(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (p, pd, pdd) = self.progress(t);
        let c0 = self.initial_closure;
        (c0 * (1.0 - p), -c0 * pd, -c0 * pdd)
    }

    /// Peak magnitude of the scheduled closure acceleration.
    pub fn peak_accel(&self) -> f64 {
        // 60 s(1-s)(1-2s) peaks at s = (3 - sqrt 3)/6.
        let s = (3.0 - 3f64.sqrt()) / 6.0;
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (self.duration * self.duration) * self.initial_closure.norm()
    }
}

/// One sample of the planner output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub probe_position: Vector3<f64>,
    pub probe_velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub drogue_position: Vector3<f64>,
    pub drogue_velocity: Vector3<f64>,
    pub yaw_rate: f64,
    pub cg_offset: Vector3<f64>,
}

impl ReferenceSample {
    /// Desired CG position implied by the planner's probe offset.
    pub fn cg_position(&self) -> Vector3<f64> {
        self.probe_position - self.cg_offset
    }

    /// Desired CG velocity (the planner offset is constant).
    pub fn cg_velocity(&self) -> Vector3<f64> {
        self.probe_velocity
    }

    pub fn probe_closure(&self) -> Vector3<f64> {
        self.probe_position - self.drogue_position
    }
}

/// Planner output at `t` given the nominal drogue state at the same instant.
pub fn reference_at(t: f64, schedule: &ClosureSchedule, nominal: &DrogueState) -> ReferenceSample {
    let (c, cd, cdd) = schedule.closure(t);
    ReferenceSample {
        probe_position: nominal.position + c,
        probe_velocity: nominal.velocity + cd,
        acceleration: nominal.acceleration + cdd,
        drogue_position: nominal.position,
        drogue_velocity: nominal.velocity,
        yaw_rate: 0.0,
        cg_offset: schedule.cg_offset,
    }
}
