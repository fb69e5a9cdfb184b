//! Surrogate helicopter plant: outer-loop zero dynamics driven by attitude,
//! with an inner loop that is either ideal or a first-order attitude lag.

use nalgebra::{SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{AngularRates, Attitude, SINGULARITY_GUARD};

/// Largest admissible integration step (s).
pub const MAX_TIME_STEP: f64 = 0.05;

/// Rigid-body state of the helicopter CG in NED.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelicopterState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Attitude,
    pub rates: AngularRates,
}

impl HelicopterState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self { position, velocity: Vector3::zeros(), attitude: Attitude::default(), rates: AngularRates::default() }
    }

    /// The twelve scalar states in CSV column order.
    pub fn to_row(&self) -> [f64; 12] {
        let (p, v, a, r) = (self.position, self.velocity, self.attitude, self.rates);
        [p.x, p.y, p.z, v.x, v.y, v.z, a.phi, a.theta, a.psi, r.phi_dot, r.theta_dot, r.psi_dot]
    }

    pub fn from_row(row: &[f64; 12]) -> Self {
        Self {
            position: Vector3::new(row[0], row[1], row[2]),
            velocity: Vector3::new(row[3], row[4], row[5]),
            attitude: Attitude::new(row[6], row[7], row[8]),
            rates: AngularRates::new(row[9], row[10], row[11]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnerLoopMode {
    /// Attitude equals the command instantly.
    Ideal,
    /// Roll and pitch relax toward the command with time constant `inner_loop_tau`.
    #[default]
    #[serde(alias = "lag")]
    FirstOrderLag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    #[serde(default = "defaults::g")]
    pub g: f64,
    #[serde(default = "defaults::theta_trim")]
    pub theta_trim: f64,
    #[serde(default = "defaults::phi_trim")]
    pub phi_trim: f64,
    #[serde(default = "defaults::tanker_speed")]
    pub tanker_speed: f64,
    #[serde(default = "defaults::tau")]
    pub inner_loop_tau: f64,
    #[serde(default)]
    pub inner_loop_mode: InnerLoopMode,
    /// Per-axis saturation of the commanded acceleration (m/s^2).
    #[serde(default = "defaults::accel_limit", with = "crate::xyz")]
    pub accel_limit: Vector3<f64>,
}

mod defaults {
    use nalgebra::Vector3;

    pub fn g() -> f64 {
        9.81
    }
    pub fn theta_trim() -> f64 {
        -0.06
    }
    pub fn phi_trim() -> f64 {
        -0.02
    }
    pub fn tanker_speed() -> f64 {
        56.58
    }
    pub fn tau() -> f64 {
        0.3
    }
    pub fn accel_limit() -> Vector3<f64> {
        Vector3::repeat(5.0)
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            g: defaults::g(),
            theta_trim: defaults::theta_trim(),
            phi_trim: defaults::phi_trim(),
            tanker_speed: defaults::tanker_speed(),
            inner_loop_tau: defaults::tau(),
            inner_loop_mode: InnerLoopMode::default(),
            accel_limit: defaults::accel_limit(),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidParameter { key: format!("plant.{key}"), reason: reason.to_owned() })
        };
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("g", "must be positive");
        }
        if !(self.tanker_speed > 0.0 && self.tanker_speed.is_finite()) {
            return bad("tanker_speed", "must be positive");
        }
        if self.inner_loop_mode == InnerLoopMode::FirstOrderLag
            && !(self.inner_loop_tau > 0.0 && self.inner_loop_tau.is_finite())
        {
            return bad("inner_loop_tau", "must be positive in lag mode");
        }
        if self.theta_trim.abs() >= SINGULARITY_GUARD || !self.phi_trim.is_finite() {
            return bad("theta_trim", "trim attitude outside the singularity guard");
        }
        if self.accel_limit.iter().any(|l| l.is_nan() || *l <= 0.0) {
            return bad("accel_limit", "limits must be positive");
        }
        Ok(())
    }

    /// Trim attitude at the given heading.
    pub fn trim_attitude(&self, psi: f64) -> Attitude {
        Attitude::new(self.phi_trim, self.theta_trim, psi)
    }
}

/// Commanded NED accelerations and yaw rate sent to the inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccelCommand {
    pub accel: Vector3<f64>,
    pub psi_dot: f64,
}

impl AccelCommand {
    pub fn new(accel: Vector3<f64>, psi_dot: f64) -> Self {
        Self { accel, psi_dot }
    }

    /// Clamps each axis to `±limit`; the flag reports whether any axis was clipped.
    pub fn saturate(&self, limit: &Vector3<f64>) -> (Self, bool) {
        let accel = self.accel.zip_map(limit, |a, l| a.clamp(-l, l));
        (Self::new(accel, self.psi_dot), accel != self.accel)
    }
}

/// Horizontal accelerations produced by an attitude (the outer-loop zero dynamics).
pub fn zero_dynamics_accel(att: &Attitude, params: &PlantParams) -> Result<Vector2<f64>> {
    att.validate()?;
    let dtheta = att.theta - params.theta_trim;
    if dtheta.abs() >= SINGULARITY_GUARD {
        return Err(Error::SingularAttitude { theta: dtheta.abs(), guard: SINGULARITY_GUARD });
    }
    let dphi = att.phi - params.phi_trim;
    let (s, c) = att.psi.sin_cos();
    let pitch = dtheta.tan();
    let roll = dphi.tan() / dtheta.cos();
    let g = params.g;
    Ok(Vector2::new(-g * (pitch * c + roll * s), -g * (pitch * s - roll * c)))
}

/// Integrator state: position, velocity, roll, pitch, yaw.
type Packed = SVector<f64, 9>;

fn pack(state: &HelicopterState) -> Packed {
    let mut y = Packed::zeros();
    y.fixed_rows_mut::<3>(0).copy_from(&state.position);
    y.fixed_rows_mut::<3>(3).copy_from(&state.velocity);
    y[6] = state.attitude.phi;
    y[7] = state.attitude.theta;
    y[8] = state.attitude.psi;
    y
}

/// Advances the plant by one RK4 step of length `dt`.
///
/// In ideal mode roll and pitch are set to `att_cmd` at the start of the step
/// and held; their reported rates are zero. In lag mode they follow
/// `(cmd - angle) / tau`. Yaw always integrates `cmd.psi_dot`, so the yaw in
/// `att_cmd` is not used by the plant. Vertical acceleration equals the command.
pub fn step(
    state: &HelicopterState,
    cmd: &AccelCommand,
    att_cmd: &Attitude,
    dt: f64,
    params: &PlantParams,
) -> Result<HelicopterState> {
    if !(dt > 0.0 && dt <= MAX_TIME_STEP) {
        return Err(Error::InvalidTimeStep(dt));
    }
    att_cmd.validate()?;
    if !(cmd.accel.iter().all(|a| a.is_finite()) && cmd.psi_dot.is_finite()) {
        return Err(Error::NonFinite("acceleration command"));
    }
    let mode = params.inner_loop_mode;
    let tau = params.inner_loop_tau;

    let mut y0 = pack(state);
    if mode == InnerLoopMode::Ideal {
        y0[6] = att_cmd.phi;
        y0[7] = att_cmd.theta;
    }

    let deriv = |y: &Packed| -> Result<Packed> {
        let att = Attitude::new(y[6], y[7], y[8]);
        let horizontal = zero_dynamics_accel(&att, params)?;
        let mut dy = Packed::zeros();
        dy.fixed_rows_mut::<3>(0).copy_from(&y.fixed_rows::<3>(3));
        dy[3] = horizontal.x;
        dy[4] = horizontal.y;
        dy[5] = cmd.accel.z;
        if mode == InnerLoopMode::FirstOrderLag {
            dy[6] = (att_cmd.phi - y[6]) / tau;
            dy[7] = (att_cmd.theta - y[7]) / tau;
        }
        dy[8] = cmd.psi_dot;
        Ok(dy)
    };

    let k1 = deriv(&y0)?;
    let k2 = deriv(&(y0 + k1 * (dt / 2.0)))?;
    let k3 = deriv(&(y0 + k2 * (dt / 2.0)))?;
    let k4 = deriv(&(y0 + k3 * dt))?;
    let y = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let attitude = Attitude::new(y[6], y[7], y[8]);
    attitude.validate()?;
    let rates = match mode {
        InnerLoopMode::Ideal => AngularRates::new(0.0, 0.0, cmd.psi_dot),
        InnerLoopMode::FirstOrderLag => {
            AngularRates::new((att_cmd.phi - y[6]) / tau, (att_cmd.theta - y[7]) / tau, cmd.psi_dot)
        }
    };
    Ok(HelicopterState {
        position: y.fixed_rows::<3>(0).into_owned(),
        velocity: y.fixed_rows::<3>(3).into_owned(),
        attitude,
        rates,
    })
}
