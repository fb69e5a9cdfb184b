//! Lyapunov analysis of the probe closure-error dynamics
//!
//! `e_ddot = -Kd e_dot - Kp e + d_D + d_R`
//!
//! with `V(E) = 1/2 E^T Q E`, `Q = [[Kp + eps Kd, eps I], [eps I, I]]`. The
//! invariant set is the sublevel set of `V` at
//! `(dD + dR)^2 / 2 * (max Kp / min Kp^2 + 1 / min Kd^2)`, treated as closed.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::controllers::ControllerGains;
use crate::drogue::UncertaintyBounds;
use crate::error::{Error, Result};

/// Closure error `e` (m) and its rate (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub e: Vector3<f64>,
    pub e_dot: Vector3<f64>,
}

impl ErrorState {
    pub fn new(e: Vector3<f64>, e_dot: Vector3<f64>) -> Self {
        Self { e, e_dot }
    }

    pub fn stacked(&self) -> Vector6<f64> {
        Vector6::new(self.e.x, self.e.y, self.e.z, self.e_dot.x, self.e_dot.y, self.e_dot.z)
    }

    fn axpy(&self, k: f64, d: &ErrorState) -> ErrorState {
        ErrorState::new(self.e + d.e * k, self.e_dot + d.e_dot * k)
    }
}

/// Smallest and largest diagonal entries of a positive diagonal gain.
pub fn diagonal_sigma(gain: &Vector3<f64>) -> (f64, f64) {
    (gain.min(), gain.max())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_sigma(m: &Matrix3<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.symmetric_part());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub epsilon: f64,
    pub q1: Matrix3<f64>,
    pub q3: Matrix3<f64>,
    pub q4: Matrix3<f64>,
}

impl LyapunovParams {
    /// Fraction of `min Kd` used for `eps` by [`LyapunovParams::for_gains`].
    pub const EPSILON_FRACTION: f64 = 0.01;

    pub fn new(gains: &ControllerGains, epsilon: f64) -> Result<Self> {
        let (kd_min, _) = diagonal_sigma(&gains.kd);
        if !(epsilon > 0.0 && epsilon < kd_min) {
            return Err(Error::InvalidParameter {
                key: "epsilon".into(),
                reason: format!("need 0 < epsilon < min Kd = {kd_min}"),
            });
        }
        let kp = Matrix3::from_diagonal(&gains.kp);
        let kd = Matrix3::from_diagonal(&gains.kd);
        let params =
            Self { epsilon, q1: kp + kd * epsilon, q3: Matrix3::identity() * epsilon, q4: Matrix3::identity() };
        let min_eigenvalue = params.min_eigenvalue();
        if min_eigenvalue <= 0.0 {
            return Err(Error::IndefiniteLyapunov { min_eigenvalue });
        }
        Ok(params)
    }

    pub fn for_gains(gains: &ControllerGains) -> Result<Self> {
        Self::new(gains, Self::EPSILON_FRACTION * gains.kd.min())
    }

    /// The full 6x6 weight `[[Q1, Q3^T], [Q3, Q4]]`.
    pub fn q_matrix(&self) -> Matrix6<f64> {
        let mut q = Matrix6::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.q1);
        q.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.q3.transpose());
        q.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.q3);
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.q4);
        q
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.q_matrix()).eigenvalues.min()
    }
}

/// `V(E) = 1/2 e^T Q1 e + 1/2 e_dot^T Q4 e_dot + e^T Q3 e_dot`.
pub fn lyapunov_value(err: &ErrorState, params: &LyapunovParams) -> f64 {
    let (e, ed) = (&err.e, &err.e_dot);
    0.5 * e.dot(&(params.q1 * e)) + 0.5 * ed.dot(&(params.q4 * ed)) + e.dot(&(params.q3 * ed))
}

/// Invariant-set level and the error-norm ceilings it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetBound {
    pub level: f64,
    pub e_norm_ceiling: f64,
    pub e_dot_norm_ceiling: f64,
}

impl InvariantSetBound {
    /// Membership in the closed sublevel set.
    pub fn contains(&self, err: &ErrorState, params: &LyapunovParams) -> bool {
        lyapunov_value(err, params) <= self.level
    }
}

pub fn invariant_set_level(gains: &ControllerGains, bounds: &UncertaintyBounds) -> InvariantSetBound {
    let (kp_min, kp_max) = diagonal_sigma(&gains.kp);
    let (kd_min, _) = diagonal_sigma(&gains.kd);
    let delta = bounds.total();
    InvariantSetBound {
        level: 0.5 * delta * delta * (kp_max / (kp_min * kp_min) + 1.0 / (kd_min * kd_min)),
        e_norm_ceiling: delta / kp_min,
        e_dot_norm_ceiling: delta / kd_min,
    }
}

fn check_disturbance(which: &'static str, d: &Vector3<f64>, bound: f64) -> Result<()> {
    let norm = d.norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("disturbance"));
    }
    if norm > bound {
        return Err(Error::DisturbanceExceedsBound { which, norm, bound });
    }
    Ok(())
}

/// Right-hand side of the error dynamics with a combined disturbance.
pub fn error_dynamics_rhs(err: &ErrorState, gains: &ControllerGains, disturbance: &Vector3<f64>) -> ErrorState {
    ErrorState::new(err.e_dot, -gains.kd.component_mul(&err.e_dot) - gains.kp.component_mul(&err.e) + disturbance)
}

/// One RK4 step of the error dynamics with disturbances held over the step.
///
/// Fails if either disturbance exceeds its bound.
pub fn error_dynamics_step(
    err: &ErrorState,
    gains: &ControllerGains,
    drogue_dist: &Vector3<f64>,
    probe_dist: &Vector3<f64>,
    bounds: &UncertaintyBounds,
    dt: f64,
) -> Result<ErrorState> {
    check_disturbance("drogue", drogue_dist, bounds.delta_d)?;
    check_disturbance("probe", probe_dist, bounds.delta_r)?;
    let d = drogue_dist + probe_dist;
    let f = |x: &ErrorState| error_dynamics_rhs(x, gains, &d);
    let k1 = f(err);
    let k2 = f(&err.axpy(dt / 2.0, &k1));
    let k3 = f(&err.axpy(dt / 2.0, &k2));
    let k4 = f(&err.axpy(dt, &k3));
    Ok(ErrorState::new(
        err.e + (k1.e + k2.e * 2.0 + k3.e * 2.0 + k4.e) * (dt / 6.0),
        err.e_dot + (k1.e_dot + k2.e_dot * 2.0 + k3.e_dot * 2.0 + k4.e_dot) * (dt / 6.0),
    ))
}

/// `dV/dt` along the error dynamics at `err` under the given disturbances.
pub fn vdot_check(
    err: &ErrorState,
    gains: &ControllerGains,
    params: &LyapunovParams,
    drogue_dist: &Vector3<f64>,
    probe_dist: &Vector3<f64>,
) -> f64 {
    let e_ddot = error_dynamics_rhs(err, gains, &(drogue_dist + probe_dist)).e_dot;
    let (e, ed) = (&err.e, &err.e_dot);
    e.dot(&(params.q1 * ed)) + e_ddot.dot(&(params.q3 * e)) + ed.dot(&(params.q3 * ed)) + ed.dot(&(params.q4 * e_ddot))
}

/// Slowest exponential decay rate of the undisturbed per-axis dynamics
/// `s^2 + kd s + kp`.
pub fn slowest_decay_rate(gains: &ControllerGains) -> f64 {
    gains
        .kp
        .iter()
        .zip(gains.kd.iter())
        .map(|(&kp, &kd)| {
            let disc = kd * kd - 4.0 * kp;
            if disc < 0.0 {
                kd / 2.0
            } else {
                (kd - disc.sqrt()) / 2.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Result of checking an error trajectory against the invariant set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    /// First sample time at which the trajectory is inside the set.
    pub entry_time: Option<f64>,
    /// Samples outside the set after the first entry.
    pub exits_after_entry: usize,
    pub max_e_after_entry: Option<f64>,
    pub max_v_after_entry: Option<f64>,
    /// True if `|e|` went above `e_norm_ceiling` after entry.
    pub ceiling_exceeded: bool,
    pub samples: usize,
}

impl BoundednessVerdict {
    pub fn invariant(&self) -> bool {
        self.entry_time.is_some() && self.exits_after_entry == 0
    }

    pub fn compliant(&self) -> bool {
        self.invariant() && !self.ceiling_exceeded
    }
}

/// Slack allowed on the sample spacing when checking the 100 Hz requirement.
const SAMPLING_SLACK: f64 = 1e-9;

pub fn boundedness_verdict(
    times: &[f64],
    trajectory: &[ErrorState],
    bound: &InvariantSetBound,
    params: &LyapunovParams,
) -> Result<BoundednessVerdict> {
    if times.len() != trajectory.len() {
        return Err(Error::InvalidParameter {
            key: "trajectory".into(),
            reason: format!("{} times for {} samples", times.len(), trajectory.len()),
        });
    }
    if let Some(gap) = times.windows(2).map(|w| w[1] - w[0]).find(|g| !(*g > 0.0 && *g <= 0.01 + SAMPLING_SLACK)) {
        return Err(Error::InvalidParameter {
            key: "trajectory".into(),
            reason: format!("sample spacing {gap} s is not within (0, 0.01] s"),
        });
    }

    let mut verdict = BoundednessVerdict {
        entry_time: None,
        exits_after_entry: 0,
        max_e_after_entry: None,
        max_v_after_entry: None,
        ceiling_exceeded: false,
        samples: trajectory.len(),
    };
    for (t, err) in times.iter().zip(trajectory) {
        let v = lyapunov_value(err, params);
        let inside = v <= bound.level;
        if verdict.entry_time.is_none() {
            if !inside {
                continue;
            }
            verdict.entry_time = Some(*t);
        }
        if !inside {
            verdict.exits_after_entry += 1;
        }
        let n = err.e.norm();
        verdict.max_e_after_entry = Some(verdict.max_e_after_entry.map_or(n, |m| m.max(n)));
        verdict.max_v_after_entry = Some(verdict.max_v_after_entry.map_or(v, |m| m.max(v)));
        if n > bound.e_norm_ceiling {
            verdict.ceiling_exceeded = true;
        }
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gains() -> ControllerGains {
        ControllerGains::default()
    }

    #[test]
    fn origin_has_zero_value() {
        let p = LyapunovParams::for_gains(&gains()).unwrap();
        assert_eq!(lyapunov_value(&ErrorState::default(), &p), 0.0);
    }

    #[test]
    fn small_epsilon_limit_along_x() {
        let p = LyapunovParams::new(&gains(), 1e-12).unwrap();
        let v = lyapunov_value(&ErrorState::new(Vector3::x(), Vector3::zeros()), &p);
        assert_relative_eq!(v, 0.205, epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(LyapunovParams::new(&gains(), 0.0).is_err());
        assert!(LyapunovParams::new(&gains(), 0.75).is_err());
    }

    #[test]
    fn q_is_positive_definite_across_admissible_epsilon() {
        let g = gains();
        let kd_min = g.kd.min();
        for k in 1..100 {
            let eps = kd_min * k as f64 / 100.0;
            let p = LyapunovParams::new(&g, eps).unwrap();
            assert!(p.min_eigenvalue() > 0.0, "eps={eps}");
        }
    }

    #[test]
    fn default_level_and_ceilings() {
        let b = invariant_set_level(&gains(), &UncertaintyBounds::new(0.18, 0.51));
        assert_relative_eq!(b.e_norm_ceiling, 0.69 / 0.37, epsilon = 1e-15);
        assert!((b.e_norm_ceiling - 1.865).abs() < 1e-3);
        assert_relative_eq!(b.e_dot_norm_ceiling, 0.69 / 0.75, epsilon = 1e-15);
        let expected = 0.5 * 0.69 * 0.69 * (35.0 / (0.37 * 0.37) + 1.0 / (0.75 * 0.75));
        assert_relative_eq!(b.level, expected, epsilon = 1e-12);
    }

    #[test]
    fn no_uncertainty_collapses_the_set() {
        let b = invariant_set_level(&gains(), &UncertaintyBounds::new(0.0, 0.0));
        assert_eq!((b.level, b.e_norm_ceiling, b.e_dot_norm_ceiling), (0.0, 0.0, 0.0));
    }

    #[test]
    fn set_scales_homogeneously() {
        let a = invariant_set_level(&gains(), &UncertaintyBounds::new(0.1, 0.2));
        let b = invariant_set_level(&gains(), &UncertaintyBounds::new(0.2, 0.4));
        assert_relative_eq!(b.level, 4.0 * a.level, epsilon = 1e-12);
        assert_relative_eq!(b.e_norm_ceiling, 2.0 * a.e_norm_ceiling, epsilon = 1e-12);
        assert_relative_eq!(b.e_dot_norm_ceiling, 2.0 * a.e_dot_norm_ceiling, epsilon = 1e-12);
    }

    #[test]
    fn monotone_in_uncertainty_and_gains() {
        let b = UncertaintyBounds::default();
        let base = invariant_set_level(&gains(), &b);
        let more = invariant_set_level(&gains(), &UncertaintyBounds::new(0.2, 0.51));
        assert!(more.level > base.level);

        let mut stiffer = gains();
        stiffer.kp.y = 0.39; // raises min Kp
        assert!(invariant_set_level(&stiffer, &b).level < base.level);

        let mut damped = gains();
        damped.kd.x = 0.8;
        damped.kd.y = 0.8; // raises min Kd
        assert!(invariant_set_level(&damped, &b).level < base.level);
    }

    #[test]
    fn symmetric_sigma_matches_diagonal_path() {
        let g = gains();
        let (lo, hi) = symmetric_sigma(&Matrix3::from_diagonal(&g.kp));
        assert_relative_eq!(lo, 0.37, epsilon = 1e-12);
        assert_relative_eq!(hi, 35.0, epsilon = 1e-12);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.9).into_inner();
        let m = rot * Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 5.0)) * rot.transpose();
        let (lo, hi) = symmetric_sigma(&m);
        assert_relative_eq!(lo, 1.0, epsilon = 1e-10);
        assert_relative_eq!(hi, 5.0, epsilon = 1e-10);
    }

    #[test]
    fn disturbance_bounds_are_enforced() {
        let b = UncertaintyBounds::default();
        let e = ErrorState::default();
        let err = error_dynamics_step(&e, &gains(), &Vector3::new(0.2, 0.0, 0.0), &Vector3::zeros(), &b, 0.01);
        assert!(matches!(err, Err(Error::DisturbanceExceedsBound { which: "drogue", .. })));
        let err = error_dynamics_step(&e, &gains(), &Vector3::zeros(), &Vector3::new(0.0, 0.6, 0.0), &b, 0.01);
        assert!(matches!(err, Err(Error::DisturbanceExceedsBound { which: "probe", .. })));
    }

    #[test]
    fn undisturbed_error_decays() {
        let b = UncertaintyBounds::default();
        let mut e = ErrorState::new(Vector3::new(1.0, -0.5, 0.2), Vector3::zeros());
        let z = Vector3::zeros();
        for _ in 0..6000 {
            e = error_dynamics_step(&e, &gains(), &z, &z, &b, 0.01).unwrap();
        }
        assert!(e.e.norm() < 1e-8);
    }

    #[test]
    fn zero_state_zero_disturbance_has_zero_vdot() {
        let p = LyapunovParams::for_gains(&gains()).unwrap();
        let z = Vector3::zeros();
        assert_eq!(vdot_check(&ErrorState::default(), &gains(), &p, &z, &z), 0.0);
    }

    #[test]
    fn far_outside_the_set_v_decreases() {
        let g = gains();
        let p = LyapunovParams::for_gains(&g).unwrap();
        let b = invariant_set_level(&g, &UncertaintyBounds::default());
        let dd = Vector3::new(0.0, 0.18, 0.0);
        let dr = Vector3::new(0.0, 0.51, 0.0);
        let e = ErrorState::new(Vector3::new(0.0, 10.0 * b.e_norm_ceiling, 0.0), Vector3::zeros());
        assert!(vdot_check(&e, &g, &p, &dd, &dr) < 0.0);
    }

    #[test]
    fn verdict_requires_dense_sampling() {
        let g = gains();
        let p = LyapunovParams::for_gains(&g).unwrap();
        let b = invariant_set_level(&g, &UncertaintyBounds::default());
        let traj = vec![ErrorState::default(); 3];
        assert!(boundedness_verdict(&[0.0, 0.02, 0.04], &traj, &b, &p).is_err());
        assert!(boundedness_verdict(&[0.0, 0.01], &traj, &b, &p).is_err());
        let v = boundedness_verdict(&[0.0, 0.01, 0.02], &traj, &b, &p).unwrap();
        assert_eq!(v.entry_time, Some(0.0));
        assert!(v.compliant());
    }

    #[test]
    fn verdict_counts_exits() {
        let g = gains();
        let p = LyapunovParams::for_gains(&g).unwrap();
        let b = invariant_set_level(&g, &UncertaintyBounds::default());
        let far = ErrorState::new(Vector3::new(0.0, 40.0, 0.0), Vector3::zeros());
        let traj = vec![far, ErrorState::default(), far, ErrorState::default()];
        let v = boundedness_verdict(&[0.0, 0.01, 0.02, 0.03], &traj, &b, &p).unwrap();
        assert_eq!(v.entry_time, Some(0.01));
        assert_eq!(v.exits_after_entry, 1);
        assert!(v.ceiling_exceeded);
        assert!(!v.compliant());
    }

    #[test]
    fn resonant_disturbance_exceeds_norm_ceiling_but_stays_in_set() {
        // On the y axis |Kp - w^2 + j Kd w| is smallest at w^2 = Kp - Kd^2 / 2, where
        // a full-size sinusoid drives |e| above (dD + dR) / min Kp. The level set
        // still holds, so the norm ceiling is not implied by set membership.
        let g = gains();
        let b = UncertaintyBounds::default();
        let p = LyapunovParams::for_gains(&g).unwrap();
        let set = invariant_set_level(&g, &b);
        let w = (g.kp.y - g.kd.y * g.kd.y / 2.0).sqrt();
        let gain = 1.0 / ((g.kp.y - w * w).powi(2) + (g.kd.y * w).powi(2)).sqrt();
        assert!(b.total() * gain > 1.02 * set.e_norm_ceiling);

        let mut e = ErrorState::default();
        let (mut peak, mut max_v): (f64, f64) = (0.0, 0.0);
        for k in 0..40_000 {
            let s = (w * k as f64 * 0.01).sin();
            let dd = Vector3::new(0.0, b.delta_d * s, 0.0);
            let dr = Vector3::new(0.0, b.delta_r * s, 0.0);
            e = error_dynamics_step(&e, &g, &dd, &dr, &b, 0.01).unwrap();
            peak = peak.max(e.e.norm());
            max_v = max_v.max(lyapunov_value(&e, &p));
        }
        assert!(peak > set.e_norm_ceiling, "peak {peak}");
        assert!((peak - b.total() * gain).abs() < 0.02, "peak {peak}");
        assert!(max_v < set.level);
    }

    #[test]
    fn slowest_rate_for_default_gains() {
        // Both horizontal axes are underdamped with real part kd/2.
        assert_relative_eq!(slowest_decay_rate(&gains()), 0.375);
        let over = ControllerGains::new(Vector3::repeat(1.0), Vector3::repeat(4.0));
        assert_relative_eq!(slowest_decay_rate(&over), 2.0 - 3f64.sqrt(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn value_matches_dense_quadratic_form(
            e in prop::array::uniform3(-5.0..5.0f64),
            ed in prop::array::uniform3(-5.0..5.0f64),
            frac in 0.001..0.99f64,
        ) {
            let g = gains();
            let p = LyapunovParams::new(&g, frac * g.kd.min()).unwrap();
            let err = ErrorState::new(Vector3::from(e), Vector3::from(ed));
            let x = err.stacked();
            let dense = 0.5 * (x.transpose() * p.q_matrix() * x)[0];
            let v = lyapunov_value(&err, &p);
            prop_assert!((v - dense).abs() <= 1e-12 * dense.abs().max(1.0));
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn vdot_matches_dense_form_and_upper_bound(
            e in prop::array::uniform3(-5.0..5.0f64),
            ed in prop::array::uniform3(-5.0..5.0f64),
            dd in prop::array::uniform3(-0.1..0.1f64),
            dr in prop::array::uniform3(-0.29..0.29f64),
        ) {
            let g = gains();
            let p = LyapunovParams::for_gains(&g).unwrap();
            let err = ErrorState::new(Vector3::from(e), Vector3::from(ed));
            let (dd, dr) = (Vector3::from(dd), Vector3::from(dr));
            let vdot = vdot_check(&err, &g, &p, &dd, &dr);

            let rhs = error_dynamics_rhs(&err, &g, &(dd + dr));
            let dense = (err.stacked().transpose() * p.q_matrix() * rhs.stacked())[0];
            prop_assert!((vdot - dense).abs() <= 1e-10 * dense.abs().max(1.0));

            let eps = p.epsilon;
            let delta = dd.norm() + dr.norm();
            let bound = -(g.kd.min() - eps) * err.e_dot.norm_squared()
                - eps * g.kp.min() * err.e.norm_squared()
                + delta * (err.e_dot.norm() + eps * err.e.norm());
            prop_assert!(vdot <= bound + 1e-10);
        }
    }
}
