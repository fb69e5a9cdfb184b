//! Outer-loop acceleration laws and the dynamic-inversion attitude command.
//!
//! Both laws are PD regulators of the closure between the helicopter and the
//! drogue. The standard law closes the loop on the CG; the proposed law closes
//! it on the probe tip, whose position and velocity depend on attitude and
//! attitude rates through the probe offset.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::drogue::DrogueState;
use crate::error::{Error, Result};
use crate::kinematics::{probe_position, probe_velocity, Attitude, ProbeGeometry, SINGULARITY_GUARD};
use crate::plant::{AccelCommand, HelicopterState, PlantParams};
use crate::reference::ReferenceSample;

/// Diagonal PD gains, `Kp` in 1/s^2 and `Kd` in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    #[serde(rename = "Kp", with = "crate::xyz")]
    pub kp: Vector3<f64>,
    #[serde(rename = "Kd", with = "crate::xyz")]
    pub kd: Vector3<f64>,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { kp: Vector3::new(0.41, 0.37, 35.0), kd: Vector3::new(0.75, 0.75, 8.8) }
    }
}

impl ControllerGains {
    pub fn new(kp: Vector3<f64>, kd: Vector3<f64>) -> Self {
        Self { kp, kd }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Kp", &self.kp), ("Kd", &self.kd)] {
            for (axis, g) in ["x", "y", "z"].iter().zip(v.iter()) {
                if !(*g > 0.0 && g.is_finite()) {
                    return Err(Error::InvalidParameter {
                        key: format!("gains.{name}.{axis}"),
                        reason: "gains must be positive".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.kp * factor, self.kd * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// CG position and velocity feedback.
    Standard,
    /// Probe-tip position and velocity feedback.
    Proposed,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 2] = [ControllerKind::Standard, ControllerKind::Proposed];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Standard => "standard",
            ControllerKind::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(ControllerKind::Standard),
            "proposed" => Ok(ControllerKind::Proposed),
            other => Err(format!("unknown controller `{other}` (expected standard|proposed)")),
        }
    }
}

/// `ff + Kd (desired rate closure - actual) + Kp (desired closure - actual)`.
fn pd_law(
    ff: &Vector3<f64>,
    gains: &ControllerGains,
    closure_err: Vector3<f64>,
    rate_err: Vector3<f64>,
) -> Vector3<f64> {
    ff + gains.kd.component_mul(&rate_err) + gains.kp.component_mul(&closure_err)
}

/// Commanded yaw rate: the planner's yaw rate, passed through.
pub fn yaw_command(reference: &ReferenceSample) -> f64 {
    reference.yaw_rate
}

/// CG-feedback law.
pub fn standard_command(
    state: &HelicopterState,
    drogue: &DrogueState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
) -> AccelCommand {
    let closure_err = (reference.cg_position() - reference.drogue_position) - (state.position - drogue.position);
    let rate_err = (reference.cg_velocity() - reference.drogue_velocity) - (state.velocity - drogue.velocity);
    AccelCommand::new(pd_law(&reference.acceleration, gains, closure_err, rate_err), yaw_command(reference))
}

/// Probe-feedback law.
pub fn proposed_command(
    state: &HelicopterState,
    geom: &ProbeGeometry,
    drogue: &DrogueState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
) -> Result<AccelCommand> {
    let probe = probe_position(state, geom)?;
    let probe_rate = probe_velocity(state, geom)?;
    let closure_err = (reference.probe_position - reference.drogue_position) - (probe - drogue.position);
    let rate_err = (reference.probe_velocity - reference.drogue_velocity) - (probe_rate - drogue.velocity);
    Ok(AccelCommand::new(pd_law(&reference.acceleration, gains, closure_err, rate_err), yaw_command(reference)))
}

/// Dispatch on the controller kind.
pub fn command(
    kind: ControllerKind,
    state: &HelicopterState,
    geom: &ProbeGeometry,
    drogue: &DrogueState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
) -> Result<AccelCommand> {
    match kind {
        ControllerKind::Standard => Ok(standard_command(state, drogue, reference, gains)),
        ControllerKind::Proposed => proposed_command(state, geom, drogue, reference, gains),
    }
}

/// Roll and pitch that make the zero dynamics produce the commanded
/// horizontal acceleration at heading `psi_c`.
///
/// Derived by rotating the command into the heading frame:
/// `u = X cos psi + Y sin psi`, `v = -X sin psi + Y cos psi`, then
/// `theta - theta_trim = -atan(u / g)` and
/// `phi - phi_trim = atan(v / sqrt(g^2 + u^2))`.
pub fn invert_to_attitude(cmd: &AccelCommand, psi_c: f64, params: &PlantParams) -> Result<Attitude> {
    let (ax, ay) = (cmd.accel.x, cmd.accel.y);
    if !(ax.is_finite() && ay.is_finite() && psi_c.is_finite()) {
        return Err(Error::NonFinite("acceleration command"));
    }
    let g = params.g;
    let (s, c) = psi_c.sin_cos();
    let along = ax * c + ay * s;
    let across = -ax * s + ay * c;
    let theta = -(along / g).atan() + params.theta_trim;
    let phi = (across / g.hypot(along)).atan() + params.phi_trim;
    if theta.abs() >= SINGULARITY_GUARD || (theta - params.theta_trim).abs() >= SINGULARITY_GUARD {
        return Err(Error::InfeasibleCommand { x_ddot: ax, y_ddot: ay, theta });
    }
    Ok(Attitude::new(phi, theta, psi_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{rotation_matrix, rotation_matrix_dot, AngularRates};
    use crate::plant::zero_dynamics_accel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference(offset: Vector3<f64>) -> ReferenceSample {
        ReferenceSample {
            probe_position: Vector3::new(100.0, 0.5, -1000.2),
            probe_velocity: Vector3::new(56.6, 0.01, 0.0),
            acceleration: Vector3::new(0.02, -0.01, 0.0),
            drogue_position: Vector3::new(103.0, 0.0, -1000.0),
            drogue_velocity: Vector3::new(56.58, 0.0, 0.0),
            yaw_rate: 0.0,
            cg_offset: offset,
        }
    }

    fn drogue_matching(r: &ReferenceSample) -> DrogueState {
        DrogueState { position: r.drogue_position, velocity: r.drogue_velocity, acceleration: Vector3::zeros() }
    }

    fn state_on_reference(r: &ReferenceSample) -> HelicopterState {
        let mut s = HelicopterState::at_rest(r.cg_position());
        s.velocity = r.cg_velocity();
        s
    }

    #[test]
    fn zero_error_passes_feedforward_through() {
        let r = reference(Vector3::zeros());
        let s = state_on_reference(&r);
        let cmd = standard_command(&s, &drogue_matching(&r), &r, &ControllerGains::default());
        assert_eq!(cmd.accel, r.acceleration);

        let geom = ProbeGeometry::new(Vector3::new(3.0, 0.0, 0.0));
        let r = reference(geom.x_bar);
        let s = state_on_reference(&r);
        let cmd = proposed_command(&s, &geom, &drogue_matching(&r), &r, &ControllerGains::default()).unwrap();
        assert_relative_eq!(cmd.accel, r.acceleration, epsilon = 1e-12);
    }

    #[test]
    fn position_error_gives_negative_kp_offset() {
        let gains = ControllerGains::default();
        let r = reference(Vector3::zeros());
        let mut s = state_on_reference(&r);
        s.position.x += 1.0;
        let cmd = standard_command(&s, &drogue_matching(&r), &r, &gains);
        assert_relative_eq!(cmd.accel - r.acceleration, Vector3::new(-gains.kp.x, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn correction_is_linear_in_gains() {
        let gains = ControllerGains::default();
        let r = reference(Vector3::zeros());
        let mut s = state_on_reference(&r);
        s.position += Vector3::new(0.3, -0.2, 0.1);
        s.velocity += Vector3::new(-0.05, 0.04, 0.02);
        let d = drogue_matching(&r);
        let base = standard_command(&s, &d, &r, &gains).accel - r.acceleration;
        let doubled = standard_command(&s, &d, &r, &gains.scaled(2.0)).accel - r.acceleration;
        assert_relative_eq!(doubled, base * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn yaw_rate_passthrough() {
        for v in [0.0, 0.02, -1.3e-3, 7.5] {
            let mut r = reference(Vector3::zeros());
            r.yaw_rate = v;
            assert_eq!(yaw_command(&r), v);
        }
    }

    #[test]
    fn closed_form_difference_between_laws() {
        // proposed - standard = Kp (offset - R x_bar) - Kd Rdot x_bar
        let gains = ControllerGains::default();
        let geom = ProbeGeometry::new(Vector3::new(3.0, 0.0, 0.0));
        let d = {
            let r = reference(Vector3::zeros());
            drogue_matching(&r)
        };
        // Zero attitude and rates, planner that ignores the probe offset.
        let r = reference(Vector3::zeros());
        let mut s = state_on_reference(&r);
        s.position += Vector3::new(0.2, 0.1, -0.1);
        let diff =
            proposed_command(&s, &geom, &d, &r, &gains).unwrap().accel - standard_command(&s, &d, &r, &gains).accel;
        assert_relative_eq!(diff, -gains.kp.component_mul(&geom.x_bar), epsilon = 1e-9);

        // General attitude and rates with the level-offset planner.
        let r = reference(geom.x_bar);
        s.attitude = Attitude::new(0.05, -0.08, 0.1);
        s.rates = AngularRates::new(0.02, -0.03, 0.01);
        let rx = rotation_matrix(&s.attitude).unwrap() * geom.x_bar;
        let rdx = rotation_matrix_dot(&s.attitude, &s.rates).unwrap() * geom.x_bar;
        let diff =
            proposed_command(&s, &geom, &d, &r, &gains).unwrap().accel - standard_command(&s, &d, &r, &gains).accel;
        let expected = gains.kp.component_mul(&(geom.x_bar - rx)) - gains.kd.component_mul(&rdx);
        assert_relative_eq!(diff, expected, epsilon = 1e-9);
    }

    #[test]
    fn zero_command_inverts_to_trim() {
        let params = PlantParams::default();
        for psi in [0.0, 1.0, -2.0] {
            let att = invert_to_attitude(&AccelCommand::default(), psi, &params).unwrap();
            assert_eq!(att, params.trim_attitude(psi));
        }
    }

    #[test]
    fn analytic_inversion_at_north_heading() {
        let params = PlantParams { theta_trim: 0.0, phi_trim: 0.0, ..PlantParams::default() };
        let cmd = AccelCommand::new(Vector3::new(-params.g * 0.1_f64.tan(), 0.0, 0.0), 0.0);
        let att = invert_to_attitude(&cmd, 0.0, &params).unwrap();
        assert_relative_eq!(att.theta, 0.1, epsilon = 1e-15);
        assert_relative_eq!(att.phi, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn extreme_command_is_infeasible() {
        let params = PlantParams::default();
        let cmd = AccelCommand::new(Vector3::new(-1e6, 0.0, 0.0), 0.0);
        assert!(matches!(invert_to_attitude(&cmd, 0.0, &params), Err(Error::InfeasibleCommand { .. })));
        let nan = AccelCommand::new(Vector3::new(f64::NAN, 0.0, 0.0), 0.0);
        assert!(invert_to_attitude(&nan, 0.0, &params).is_err());
    }

    fn arb_state() -> impl Strategy<Value = HelicopterState> {
        (
            prop::array::uniform3(-50.0..50.0f64),
            prop::array::uniform3(-60.0..60.0f64),
            (-0.5..0.5f64, -0.5..0.5f64, -3.1..3.1f64),
            prop::array::uniform3(-0.5..0.5f64),
        )
            .prop_map(|(p, v, (phi, theta, psi), r)| HelicopterState {
                position: Vector3::from(p) + Vector3::new(0.0, 0.0, -1000.0),
                velocity: Vector3::from(v),
                attitude: Attitude::new(phi, theta, psi),
                rates: AngularRates::new(r[0], r[1], r[2]),
            })
    }

    proptest! {
        #[test]
        fn probe_at_cg_degenerates_to_standard(state in arb_state(), dx in prop::array::uniform3(-2.0..2.0f64)) {
            let gains = ControllerGains::default();
            let r = reference(Vector3::zeros());
            let mut d = drogue_matching(&r);
            d.position += Vector3::from(dx);
            let a = standard_command(&state, &d, &r, &gains);
            let b = proposed_command(&state, &ProbeGeometry::at_cg(), &d, &r, &gains).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn inversion_round_trip(ax in -5.0..5.0f64, ay in -5.0..5.0f64, psi in 0.0..std::f64::consts::TAU) {
            let params = PlantParams::default();
            let cmd = AccelCommand::new(Vector3::new(ax, ay, 0.0), 0.0);
            let att = invert_to_attitude(&cmd, psi, &params).unwrap();
            let back = zero_dynamics_accel(&att, &params).unwrap();
            prop_assert!((back.x - ax).hypot(back.y - ay) < 1e-9);
        }

        #[test]
        fn laws_are_lipschitz_in_state(
            a in arb_state(),
            dp in prop::array::uniform3(-0.1..0.1f64),
            dv in prop::array::uniform3(-0.1..0.1f64),
            dq in prop::array::uniform3(-0.02..0.02f64),
            dr in prop::array::uniform3(-0.02..0.02f64),
        ) {
            let gains = ControllerGains::default();
            let geom = ProbeGeometry::default();
            let r = reference(geom.x_bar);
            let d = drogue_matching(&r);
            let mut b = a;
            b.position += Vector3::from(dp);
            b.velocity += Vector3::from(dv);
            b.attitude = Attitude::from_vector(&(a.attitude.to_vector() + Vector3::from(dq)));
            b.rates = AngularRates::new(a.rates.phi_dot + dr[0], a.rates.theta_dot + dr[1], a.rates.psi_dot + dr[2]);

            let kp = gains.kp.max();
            let kd = gains.kd.max();
            let (dp, dv) = (Vector3::from(dp).norm(), Vector3::from(dv).norm());
            let dq1 = Vector3::from(dq).lp_norm(1);
            let dr1 = Vector3::from(dr).lp_norm(1);
            let r1 = a.rates.to_vector().lp_norm(1).max(b.rates.to_vector().lp_norm(1));
            let l = geom.length();

            let std_gap = (standard_command(&a, &d, &r, &gains).accel - standard_command(&b, &d, &r, &gains).accel).norm();
            prop_assert!(std_gap <= kp * dp + kd * dv + 1e-9);

            let prop_gap = (proposed_command(&a, &geom, &d, &r, &gains).unwrap().accel
                - proposed_command(&b, &geom, &d, &r, &gains).unwrap().accel).norm();
            let bound = kp * (dp + l * dq1) + kd * (dv + l * (dr1 + r1 * dq1));
            prop_assert!(prop_gap <= bound + 1e-9, "{} > {}", prop_gap, bound);
        }
    }
}
