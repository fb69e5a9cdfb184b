//! Euler-angle rotation matrices and the CG-to-probe-tip mapping.
//!
//! Attitudes use the Z-Y-X (yaw, pitch, roll) sequence, so the body-to-NED
//! rotation is `R = Rz(psi) * Ry(theta) * Rx(phi)`. Time derivatives are taken
//! analytically along Euler-angle trajectories: each single-axis factor is
//! differentiated in closed form and the product rule assembles the result.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::plant::HelicopterState;

/// Largest admissible |theta|. Pitch beyond this is treated as singular.
pub const SINGULARITY_GUARD: f64 = FRAC_PI_2 - 1e-3;

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl Attitude {
    pub const fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.is_finite() && self.theta.is_finite() && self.psi.is_finite()) {
            return Err(Error::NonFinite("attitude"));
        }
        if self.theta.abs() >= SINGULARITY_GUARD {
            return Err(Error::SingularAttitude { theta: self.theta.abs(), guard: SINGULARITY_GUARD });
        }
        Ok(())
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.phi, self.theta, self.psi)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Euler-angle rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngularRates {
    pub phi_dot: f64,
    pub theta_dot: f64,
    pub psi_dot: f64,
}

impl AngularRates {
    pub const fn new(phi_dot: f64, theta_dot: f64, psi_dot: f64) -> Self {
        Self { phi_dot, theta_dot, psi_dot }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.phi_dot, self.theta_dot, self.psi_dot)
    }
}

/// Euler-angle accelerations (rad/s^2).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngularAccelerations {
    pub phi_ddot: f64,
    pub theta_ddot: f64,
    pub psi_ddot: f64,
}

impl AngularAccelerations {
    pub const fn new(phi_ddot: f64, theta_ddot: f64, psi_ddot: f64) -> Self {
        Self { phi_ddot, theta_ddot, psi_ddot }
    }
}

/// Probe-tip offset from the CG, expressed in body axes (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeGeometry {
    #[serde(with = "crate::xyz")]
    pub x_bar: Vector3<f64>,
}

impl ProbeGeometry {
    pub fn new(x_bar: Vector3<f64>) -> Self {
        Self { x_bar }
    }

    /// Probe tip coincident with the CG.
    pub fn at_cg() -> Self {
        Self::new(Vector3::zeros())
    }

    pub fn length(&self) -> f64 {
        self.x_bar.norm()
    }
}

impl Default for ProbeGeometry {
    fn default() -> Self {
        Self::new(Vector3::new(4.5, 0.9, -1.0))
    }
}

/// A single-axis rotation and its first two time derivatives.
struct AxisJet {
    value: Matrix3<f64>,
    first: Matrix3<f64>,
    second: Matrix3<f64>,
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
    Z,
}

/// Rotation about `axis` by `angle`, with the matrix partials w.r.t. the angle.
fn axis_partials(axis: Axis, angle: f64) -> [Matrix3<f64>; 3] {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => [
            Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, -c, s, 0.0, -s, -c),
        ],
        Axis::Y => [
            Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s),
            Matrix3::new(-c, 0.0, -s, 0.0, 0.0, 0.0, s, 0.0, -c),
        ],
        Axis::Z => [
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0),
            Matrix3::new(-c, s, 0.0, -s, -c, 0.0, 0.0, 0.0, 0.0),
        ],
    }
}

impl AxisJet {
    fn new(axis: Axis, angle: f64, rate: f64, accel: f64) -> Self {
        let [value, d1, d2] = axis_partials(axis, angle);
        Self { value, first: d1 * rate, second: d2 * (rate * rate) + d1 * accel }
    }
}

fn jets(att: &Attitude, rates: &AngularRates, accels: &AngularAccelerations) -> (AxisJet, AxisJet, AxisJet) {
    (
        AxisJet::new(Axis::Z, att.psi, rates.psi_dot, accels.psi_ddot),
        AxisJet::new(Axis::Y, att.theta, rates.theta_dot, accels.theta_ddot),
        AxisJet::new(Axis::X, att.phi, rates.phi_dot, accels.phi_ddot),
    )
}

/// Body-to-NED rotation matrix.
pub fn rotation_matrix(att: &Attitude) -> Result<Matrix3<f64>> {
    att.validate()?;
    let [z, ..] = axis_partials(Axis::Z, att.psi);
    let [y, ..] = axis_partials(Axis::Y, att.theta);
    let [x, ..] = axis_partials(Axis::X, att.phi);
    Ok(z * y * x)
}

/// Time derivative of [`rotation_matrix`] along the given Euler rates.
pub fn rotation_matrix_dot(att: &Attitude, rates: &AngularRates) -> Result<Matrix3<f64>> {
    att.validate()?;
    let (a, b, c) = jets(att, rates, &AngularAccelerations::default());
    Ok(a.first * b.value * c.value + a.value * b.first * c.value + a.value * b.value * c.first)
}

/// Second time derivative of [`rotation_matrix`].
pub fn rotation_matrix_ddot(
    att: &Attitude,
    rates: &AngularRates,
    accels: &AngularAccelerations,
) -> Result<Matrix3<f64>> {
    att.validate()?;
    let (a, b, c) = jets(att, rates, accels);
    let pure = a.second * b.value * c.value + a.value * b.second * c.value + a.value * b.value * c.second;
    let mixed = a.first * b.first * c.value + a.first * b.value * c.first + a.value * b.first * c.first;
    Ok(pure + mixed * 2.0)
}

/// Probe-tip position in NED: `x_P = x_CG + R * x_bar`.
pub fn probe_position(state: &HelicopterState, geom: &ProbeGeometry) -> Result<Vector3<f64>> {
    Ok(state.position + rotation_matrix(&state.attitude)? * geom.x_bar)
}

/// Probe-tip velocity in NED: `v_P = v_CG + Rdot * x_bar`.
pub fn probe_velocity(state: &HelicopterState, geom: &ProbeGeometry) -> Result<Vector3<f64>> {
    Ok(state.velocity + rotation_matrix_dot(&state.attitude, &state.rates)? * geom.x_bar)
}
