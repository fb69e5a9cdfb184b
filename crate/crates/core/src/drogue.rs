//! Drogue motion: straight-line tanker-speed trajectory plus a smooth,
//! wind-scaled perturbation whose acceleration never exceeds `delta_D`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::plant::PlantParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DrogueState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl DrogueState {
    /// Position and velocity in CSV column order.
    pub fn to_row(&self) -> [f64; 6] {
        let (p, v) = (self.position, self.velocity);
        [p.x, p.y, p.z, v.x, v.y, v.z]
    }
}

/// Horizontal crosswind. A negative magnitude blows along `-direction`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindCondition {
    pub magnitude_kt: f64,
    pub direction: f64,
}

impl WindCondition {
    pub fn calm() -> Self {
        Self::default()
    }

    /// Unit vector in the horizontal plane along which the wind pushes the drogue.
    pub fn push_axis(&self) -> Vector3<f64> {
        let sign = if self.magnitude_kt < 0.0 { -1.0 } else { 1.0 };
        let (s, c) = self.direction.sin_cos();
        Vector3::new(c, s, 0.0) * sign
    }
}

/// Bounds on drogue-acceleration and probe-acceleration uncertainty (m/s^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBounds {
    #[serde(rename = "delta_D")]
    pub delta_d: f64,
    #[serde(rename = "delta_R")]
    pub delta_r: f64,
}

impl Default for UncertaintyBounds {
    fn default() -> Self {
        Self { delta_d: 0.18, delta_r: 0.51 }
    }
}

impl UncertaintyBounds {
    pub fn new(delta_d: f64, delta_r: f64) -> Self {
        Self { delta_d, delta_r }
    }

    pub fn total(&self) -> f64 {
        self.delta_d + self.delta_r
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("delta_D", self.delta_d), ("delta_R", self.delta_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    key: format!("uncertainty.{key}"),
                    reason: "must be finite and non-negative".into(),
                });
            }
        }
        Ok(())
    }
}

/// Shape of the wind-driven perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrogueParams {
    #[serde(default = "defaults::initial_position", with = "crate::xyz")]
    pub initial_position: Vector3<f64>,
    /// Wind magnitude at which the acceleration budget reaches `delta_D`.
    #[serde(default = "defaults::wind_max_kt")]
    pub wind_max_kt: f64,
    #[serde(default = "defaults::freq_min_hz")]
    pub freq_min_hz: f64,
    #[serde(default = "defaults::freq_max_hz")]
    pub freq_max_hz: f64,
    /// Ratio of vertical to horizontal acceleration budget.
    #[serde(default = "defaults::vertical_ratio")]
    pub vertical_ratio: f64,
}

mod defaults {
    use nalgebra::Vector3;

    pub fn initial_position() -> Vector3<f64> {
        Vector3::new(5.0, 0.0, -1000.0)
    }
    pub fn wind_max_kt() -> f64 {
        5.0
    }
    pub fn freq_min_hz() -> f64 {
        0.1
    }
    pub fn freq_max_hz() -> f64 {
        0.8
    }
    pub fn vertical_ratio() -> f64 {
        0.5
    }
}

impl Default for DrogueParams {
    fn default() -> Self {
        Self {
            initial_position: defaults::initial_position(),
            wind_max_kt: defaults::wind_max_kt(),
            freq_min_hz: defaults::freq_min_hz(),
            freq_max_hz: defaults::freq_max_hz(),
            vertical_ratio: defaults::vertical_ratio(),
        }
    }
}

impl DrogueParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidParameter { key: format!("drogue.{key}"), reason: reason.into() })
        };
        if self.wind_max_kt.is_nan() || self.wind_max_kt <= 0.0 {
            return bad("wind_max_kt", "must be positive");
        }
        if !(self.freq_min_hz > 0.0 && self.freq_max_hz >= self.freq_min_hz) {
            return bad("freq_min_hz", "need 0 < freq_min_hz <= freq_max_hz");
        }
        if !(self.vertical_ratio >= 0.0 && self.vertical_ratio.is_finite()) {
            return bad("vertical_ratio", "must be non-negative");
        }
        if !self.initial_position.iter().all(|v| v.is_finite()) {
            return bad("initial_position", "must be finite");
        }
        Ok(())
    }
}

/// Straight and level tanker-speed motion along North.
pub fn nominal_trajectory(t: f64, params: &PlantParams, initial: &DrogueState) -> DrogueState {
    let velocity = Vector3::new(params.tanker_speed, 0.0, 0.0);
    DrogueState { position: initial.position + velocity * t, velocity, acceleration: Vector3::zeros() }
}

/// Starting drogue state for [`nominal_trajectory`].
pub fn nominal_initial(plant: &PlantParams, drogue: &DrogueParams) -> DrogueState {
    DrogueState {
        position: drogue.initial_position,
        velocity: Vector3::new(plant.tanker_speed, 0.0, 0.0),
        acceleration: Vector3::zeros(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Sinusoid {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

impl Sinusoid {
    /// Offset, rate and acceleration of `A (sin(wt + p) - sin p)`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (s, c) = (self.omega * t + self.phase).sin_cos();
        let a = self.amplitude;
        let w = self.omega;
        (a * (s - self.phase.sin()), a * w * c, -a * w * w * s)
    }

    fn peak_accel(&self) -> f64 {
        self.amplitude.abs() * self.omega * self.omega
    }
}

const COMPONENTS: usize = 3;

/// Seeded perturbation: three sinusoids along the wind axis and three vertical.
///
/// The sum of per-sinusoid acceleration amplitudes on each axis is fixed so
/// that `sqrt(S_h^2 + S_v^2) = delta_D * min(|w| / w_max, 1)`, which bounds
/// the perturbation acceleration norm by `delta_D` at every instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroguePerturbation {
    axis: Vector3<f64>,
    horizontal: [Sinusoid; COMPONENTS],
    vertical: [Sinusoid; COMPONENTS],
    budget: f64,
}

impl DroguePerturbation {
    pub fn new(wind: &WindCondition, bounds: &UncertaintyBounds, seed: u64, params: &DrogueParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> [(f64, f64, f64); COMPONENTS] {
            std::array::from_fn(|_| {
                let f = if params.freq_max_hz > params.freq_min_hz {
                    rng.random_range(params.freq_min_hz..params.freq_max_hz)
                } else {
                    params.freq_min_hz
                };
                let phase = rng.random_range(0.0..TAU);
                let weight = rng.random_range(0.2..1.0);
                (TAU * f, phase, weight)
            })
        };
        let raw_h = draw(&mut rng);
        let raw_v = draw(&mut rng);

        let scale = (wind.magnitude_kt.abs() / params.wind_max_kt).min(1.0);
        let budget = bounds.delta_d * scale;
        let beta = params.vertical_ratio.atan();
        let split = |raw: &[(f64, f64, f64); COMPONENTS], share: f64| {
            let total: f64 = raw.iter().map(|r| r.2).sum();
            raw.map(|(omega, phase, weight)| Sinusoid {
                amplitude: share * weight / total / (omega * omega),
                omega,
                phase,
            })
        };
        Self {
            axis: wind.push_axis(),
            horizontal: split(&raw_h, budget * beta.cos()),
            vertical: split(&raw_v, budget * beta.sin()),
            budget,
        }
    }

    /// Upper bound on the perturbation acceleration norm.
    pub fn accel_budget(&self) -> f64 {
        self.budget
    }

    /// Sum of per-axis peak accelerations combined in quadrature.
    pub fn certified_accel_bound(&self) -> f64 {
        let h: f64 = self.horizontal.iter().map(Sinusoid::peak_accel).sum();
        let v: f64 = self.vertical.iter().map(Sinusoid::peak_accel).sum();
        h.hypot(v)
    }

    /// Offset from the nominal trajectory at time `t`.
    pub fn offset(&self, t: f64) -> DrogueState {
        let sum = |set: &[Sinusoid; COMPONENTS]| {
            set.iter().fold((0.0, 0.0, 0.0), |acc, s| {
                let (p, v, a) = s.eval(t);
                (acc.0 + p, acc.1 + v, acc.2 + a)
            })
        };
        let (hp, hv, ha) = sum(&self.horizontal);
        let (vp, vv, va) = sum(&self.vertical);
        let z = Vector3::z();
        DrogueState {
            position: self.axis * hp + z * vp,
            velocity: self.axis * hv + z * vv,
            acceleration: self.axis * ha + z * va,
        }
    }
}

/// Drogue trajectory generator combining nominal motion and perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct DrogueModel {
    plant: PlantParams,
    initial: DrogueState,
    perturbation: DroguePerturbation,
}

impl DrogueModel {
    pub fn new(plant: &PlantParams, initial: DrogueState, perturbation: DroguePerturbation) -> Self {
        Self { plant: *plant, initial, perturbation }
    }

    pub fn nominal(&self, t: f64) -> DrogueState {
        nominal_trajectory(t, &self.plant, &self.initial)
    }

    pub fn state_at(&self, t: f64) -> DrogueState {
        let nominal = self.nominal(t);
        let offset = self.perturbation.offset(t);
        DrogueState {
            position: nominal.position + offset.position,
            velocity: nominal.velocity + offset.velocity,
            acceleration: nominal.acceleration + offset.acceleration,
        }
    }

    pub fn perturbation(&self) -> &DroguePerturbation {
        &self.perturbation
    }
}

/// Perturbed drogue state at `t` for a given wind and seed.
pub fn perturbed_trajectory(
    t: f64,
    wind: &WindCondition,
    bounds: &UncertaintyBounds,
    seed: u64,
    plant: &PlantParams,
    params: &DrogueParams,
) -> DrogueState {
    let perturbation = DroguePerturbation::new(wind, bounds, seed, params);
    DrogueModel::new(plant, nominal_initial(plant, params), perturbation).state_at(t)
}
