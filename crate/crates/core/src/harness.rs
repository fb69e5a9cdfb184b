//! Closed-loop docking runs and the paired Monte Carlo batch.
//!
//! A run closes the loop reference -> outer-loop law -> saturation ->
//! inversion -> plant step and samples every quantity at `dt`. Contact is the
//! instant the scheduled closure reaches zero; the docking error is the
//! probe-to-drogue distance there.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    boundedness_verdict, invariant_set_level, BoundednessVerdict, ErrorState, InvariantSetBound, LyapunovParams,
};
use crate::controllers::{command, invert_to_attitude, ControllerGains, ControllerKind};
use crate::drogue::{
    nominal_initial, DrogueModel, DrogueParams, DroguePerturbation, DrogueState, UncertaintyBounds, WindCondition,
};
use crate::error::{Error, Result};
use crate::kinematics::{probe_position, probe_velocity, rotation_matrix, Attitude, ProbeGeometry};
use crate::plant::{self, HelicopterState, PlantParams};
use crate::reference::{reference_at, ClosureSchedule, ReferenceParams};

/// Finest sample spacing the boundedness verdict accepts.
pub const MAX_RECORD_STEP: f64 = 0.01;

/// Command/inversion passes used to start on the attitude the first command asks for.
const SETTLE_PASSES: usize = 8;

/// How the random scenario of a seed is shared between the two controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Both controllers see the same initial offset, wind and perturbation.
    #[default]
    Paired,
    /// Each controller draws its own scenario from a separate stream.
    Independent,
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paired" => Ok(Self::Paired),
            "independent" => Ok(Self::Independent),
            other => {
                Err(Error::InvalidParameter { key: "run.pairing".into(), reason: format!("unknown pairing `{other}`") })
            }
        }
    }
}

/// Randomization of a run's initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Half-width of the per-axis uniform initial CG offset (m).
    #[serde(default = "default_offset_max")]
    pub initial_offset_max: f64,
    /// Replaces the drawn wind when set.
    #[serde(default)]
    pub fixed_wind: Option<WindCondition>,
}

fn default_offset_max() -> f64 {
    0.2
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { initial_offset_max: default_offset_max(), fixed_wind: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// ChaCha stream the scenario is drawn from.
    pub stream: u64,
    pub controller: ControllerKind,
    pub plant: PlantParams,
    pub gains: ControllerGains,
    pub geometry: ProbeGeometry,
    pub bounds: UncertaintyBounds,
    pub drogue: DrogueParams,
    pub reference: ReferenceParams,
    pub scenario: ScenarioParams,
    /// Docking succeeds when the probe-drogue distance at contact is at most this (m).
    pub docking_tolerance: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            stream: 0,
            controller: ControllerKind::Proposed,
            plant: PlantParams::default(),
            gains: ControllerGains::default(),
            geometry: ProbeGeometry::default(),
            bounds: UncertaintyBounds::default(),
            drogue: DrogueParams::default(),
            reference: ReferenceParams::default(),
            scenario: ScenarioParams::default(),
            docking_tolerance: 0.2,
            horizon: 40.0,
            dt: 0.01,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { key: key.into(), reason: reason.into() }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.gains.validate()?;
        self.bounds.validate()?;
        self.drogue.validate()?;
        self.reference.validate()?;
        LyapunovParams::for_gains(&self.gains)?;
        if !self.geometry.x_bar.iter().all(|v| v.is_finite()) {
            return Err(invalid("geometry.x_bar", "must be finite"));
        }
        if !(self.docking_tolerance > 0.0 && self.docking_tolerance.is_finite()) {
            return Err(invalid("run.docking_tolerance", "must be positive"));
        }
        if !(self.horizon > self.reference.approach_duration && self.horizon.is_finite()) {
            return Err(invalid(
                "run.horizon",
                format!("must exceed the approach duration {}", self.reference.approach_duration),
            ));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_RECORD_STEP) {
            return Err(invalid("run.dt", format!("must lie in (0, {MAX_RECORD_STEP}]")));
        }
        let m = self.scenario.initial_offset_max;
        if !(m >= 0.0 && m.is_finite()) {
            return Err(invalid("scenario.initial_offset_max", "must be non-negative"));
        }
        if let Some(w) = self.scenario.fixed_wind {
            if !(w.magnitude_kt.is_finite() && w.direction.is_finite()) {
                return Err(invalid("scenario.fixed_wind", "must be finite"));
            }
        }
        Ok(())
    }

    /// Number of plant steps from the start to contact.
    pub fn contact_steps(&self) -> usize {
        (self.reference.approach_duration.min(self.horizon) / self.dt).round() as usize
    }
}

/// Random initial conditions of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub initial_offset: Vector3<f64>,
    pub wind: WindCondition,
    pub perturbation_seed: u64,
}

impl Scenario {
    /// Draws the offset, wind and perturbation seed; the draw order is fixed so
    /// a fixed wind does not shift the other values.
    pub fn draw(config: &RunConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(config.stream);
        let m = config.scenario.initial_offset_max;
        let mut symmetric = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
        let initial_offset = Vector3::new(symmetric(m), symmetric(m), symmetric(m));
        let magnitude_kt = symmetric(config.drogue.wind_max_kt);
        let direction = rng.random_range(0.0..TAU);
        let perturbation_seed = rng.random();
        Self {
            initial_offset,
            wind: config.scenario.fixed_wind.unwrap_or(WindCondition { magnitude_kt, direction }),
            perturbation_seed,
        }
    }
}

/// Sampled time series of a run; all vectors have the same length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSeries {
    pub times: Vec<f64>,
    pub states: Vec<HelicopterState>,
    pub probe: Vec<Vector3<f64>>,
    pub drogue: Vec<DrogueState>,
    pub errors: Vec<ErrorState>,
}

impl RunSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        self.states.len() == n && self.probe.len() == n && self.drogue.len() == n && self.errors.len() == n
    }

    pub fn attitudes(&self) -> Vec<Attitude> {
        self.states.iter().map(|s| s.attitude).collect()
    }
}

/// Scalar results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub controller: ControllerKind,
    pub scenario: Scenario,
    pub contact_time: f64,
    /// `None` when the run aborted before contact.
    pub docking_error: Option<f64>,
    pub success: bool,
    pub abort_reason: Option<String>,
    pub saturated_steps: usize,
    /// Largest `|(R_ddot* - R_ddot) x_bar|` seen in the run (m/s^2).
    pub measured_delta_r: f64,
    /// Invariant set built from the configured `delta_D` and the measured `delta_R`.
    pub bound: InvariantSetBound,
    pub verdict: Option<BoundednessVerdict>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.abort_reason.is_none()
    }

    pub fn bound_compliant(&self) -> bool {
        self.verdict.is_some_and(|v| v.compliant())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    pub series: RunSeries,
}

/// Empirical `delta_R`: the largest second difference of `R(attitude_k) x_bar`
/// over `dt^2`. The planner's probe offset is constant, so its counterpart is zero.
pub fn measure_delta_r(attitudes: &[Attitude], geom: &ProbeGeometry, dt: f64) -> Result<f64> {
    let offsets = attitudes.iter().map(|a| rotation_matrix(a).map(|r| r * geom.x_bar)).collect::<Result<Vec<_>>>()?;
    Ok(offsets.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).norm() / (dt * dt)).fold(0.0, f64::max))
}

struct Loop<'a> {
    config: &'a RunConfig,
    schedule: ClosureSchedule,
    drogue: DrogueModel,
}

impl Loop<'_> {
    fn command_attitude(&self, state: &HelicopterState, t: f64) -> Result<(plant::AccelCommand, Attitude, bool)> {
        let c = self.config;
        let reference = reference_at(t, &self.schedule, &self.drogue.nominal(t));
        let raw = command(c.controller, state, &c.geometry, &self.drogue.state_at(t), &reference, &c.gains)?;
        let (cmd, clipped) = raw.saturate(&c.plant.accel_limit);
        let att = invert_to_attitude(&cmd, state.attitude.psi, &c.plant)?;
        Ok((cmd, att, clipped))
    }

    fn sample(&self, state: &HelicopterState, t: f64, series: &mut RunSeries) -> Result<()> {
        let geom = &self.config.geometry;
        let drogue = self.drogue.state_at(t);
        let reference = reference_at(t, &self.schedule, &self.drogue.nominal(t));
        let probe = probe_position(state, geom)?;
        let probe_rate = probe_velocity(state, geom)?;
        let e = reference.probe_closure() - (probe - drogue.position);
        let e_dot = (reference.probe_velocity - reference.drogue_velocity) - (probe_rate - drogue.velocity);
        series.times.push(t);
        series.states.push(*state);
        series.probe.push(probe);
        series.drogue.push(drogue);
        series.errors.push(ErrorState::new(e, e_dot));
        Ok(())
    }

    /// Runs to contact, filling `series`; returns the number of saturated steps.
    fn simulate(&self, initial: HelicopterState, series: &mut RunSeries, saturated: &mut usize) -> Result<()> {
        let c = self.config;
        let mut state = initial;
        for _ in 0..SETTLE_PASSES {
            let (_, att, _) = self.command_attitude(&state, 0.0)?;
            state.attitude.phi = att.phi;
            state.attitude.theta = att.theta;
        }
        let steps = c.contact_steps();
        for k in 0..=steps {
            let t = k as f64 * c.dt;
            self.sample(&state, t, series)?;
            if k == steps {
                break;
            }
            let (cmd, att, clipped) = self.command_attitude(&state, t)?;
            *saturated += usize::from(clipped);
            state = plant::step(&state, &cmd, &att, c.dt, &c.plant)?;
        }
        Ok(())
    }
}

/// Simulates one docking approach.
///
/// Invalid configurations are errors; failures during the simulation are
/// recorded in the outcome as an aborted, unsuccessful run.
pub fn run_once(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let scenario = Scenario::draw(config);
    let trim = config.plant.trim_attitude(0.0);
    let schedule = ClosureSchedule::new(&config.reference, &config.geometry, &trim)?;
    let drogue_initial = nominal_initial(&config.plant, &config.drogue);
    let perturbation =
        DroguePerturbation::new(&scenario.wind, &config.bounds, scenario.perturbation_seed, &config.drogue);
    let lp = Loop { config, schedule, drogue: DrogueModel::new(&config.plant, drogue_initial, perturbation) };

    let start = reference_at(0.0, &lp.schedule, &drogue_initial);
    let mut initial = HelicopterState::at_rest(start.cg_position() + scenario.initial_offset);
    initial.velocity = start.cg_velocity();
    initial.attitude = trim;

    let mut series = RunSeries::default();
    let mut saturated_steps = 0;
    let abort_reason = lp.simulate(initial, &mut series, &mut saturated_steps).err().map(|e| e.to_string());

    let contact_time = config.contact_steps() as f64 * config.dt;
    let docking_error = match abort_reason {
        None => series.probe.last().zip(series.drogue.last()).map(|(p, d)| (p - d.position).norm()),
        Some(_) => None,
    };
    let measured_delta_r = measure_delta_r(&series.attitudes(), &config.geometry, config.dt)?;
    let bound = invariant_set_level(&config.gains, &UncertaintyBounds::new(config.bounds.delta_d, measured_delta_r));
    let lyapunov = LyapunovParams::for_gains(&config.gains)?;
    let verdict = if series.is_empty() {
        None
    } else {
        Some(boundedness_verdict(&series.times, &series.errors, &bound, &lyapunov)?)
    };

    Ok(RunRecord {
        outcome: RunOutcome {
            seed: config.seed,
            controller: config.controller,
            scenario,
            contact_time,
            docking_error,
            success: docking_error.is_some_and(|d| d <= config.docking_tolerance),
            abort_reason,
            saturated_steps,
            measured_delta_r,
            bound,
            verdict,
        },
        series,
    })
}

/// Table-style statistics for one controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub controller: ControllerKind,
    pub runs: usize,
    pub completed: usize,
    pub successes: usize,
    /// Successes over all runs; aborted runs count as failures.
    pub success_rate: f64,
    /// Over completed runs.
    pub mean_docking_error: Option<f64>,
    /// Sample standard deviation over completed runs.
    pub std_docking_error: Option<f64>,
    pub bound_compliant: usize,
    pub max_measured_delta_r: f64,
    pub max_error_after_entry: Option<f64>,
}

fn mean_and_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

impl ControllerStats {
    pub fn from_outcomes<'a>(controller: ControllerKind, outcomes: impl IntoIterator<Item = &'a RunOutcome>) -> Self {
        let outcomes: Vec<_> = outcomes.into_iter().filter(|o| o.controller == controller).collect();
        let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.docking_error).collect();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let (mean, std) = mean_and_std(&errors);
        Self {
            controller,
            runs: outcomes.len(),
            completed: errors.len(),
            successes,
            success_rate: if outcomes.is_empty() { 0.0 } else { successes as f64 / outcomes.len() as f64 },
            mean_docking_error: mean,
            std_docking_error: std,
            bound_compliant: outcomes.iter().filter(|o| o.bound_compliant()).count(),
            max_measured_delta_r: outcomes.iter().map(|o| o.measured_delta_r).fold(0.0, f64::max),
            max_error_after_entry: outcomes
                .iter()
                .filter_map(|o| o.verdict.and_then(|v| v.max_e_after_entry))
                .reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_runs: usize,
    pub seeds: Vec<u64>,
    pub pairing: Pairing,
    pub docking_tolerance: f64,
    pub standard: ControllerStats,
    pub proposed: ControllerStats,
    /// Seeds where both runs reached contact.
    pub pairs_compared: usize,
    /// Of those, seeds where the proposed docking error is not larger.
    pub proposed_not_worse: usize,
    pub paired_dominance: Option<f64>,
}

impl BatchSummary {
    pub fn stats(&self, kind: ControllerKind) -> &ControllerStats {
        match kind {
            ControllerKind::Standard => &self.standard,
            ControllerKind::Proposed => &self.proposed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub summary: BatchSummary,
    /// Ordered by seed, standard before proposed.
    pub records: Vec<RunRecord>,
}

/// Runs every seed with both controllers in parallel and aggregates in seed order.
pub fn run_batch(template: &RunConfig, seeds: &[u64], pairing: Pairing) -> Result<Batch> {
    if seeds.is_empty() {
        return Err(invalid("n_runs", "must be at least 1"));
    }
    template.validate()?;
    let jobs: Vec<RunConfig> = seeds
        .iter()
        .flat_map(|&seed| {
            ControllerKind::ALL.into_iter().enumerate().map(move |(i, controller)| RunConfig {
                seed,
                controller,
                stream: match pairing {
                    Pairing::Paired => template.stream,
                    Pairing::Independent => template.stream + i as u64,
                },
                ..*template
            })
        })
        .collect();
    let records = jobs.par_iter().map(run_once).collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<&RunOutcome> = records.iter().map(|r| &r.outcome).collect();
    let pairs: Vec<(f64, f64)> =
        outcomes.chunks(2).filter_map(|p| p[0].docking_error.zip(p[1].docking_error)).collect();
    let proposed_not_worse = pairs.iter().filter(|(s, p)| p <= s).count();
    let summary = BatchSummary {
        n_runs: seeds.len(),
        seeds: seeds.to_vec(),
        pairing,
        docking_tolerance: template.docking_tolerance,
        standard: ControllerStats::from_outcomes(ControllerKind::Standard, outcomes.iter().copied()),
        proposed: ControllerStats::from_outcomes(ControllerKind::Proposed, outcomes.iter().copied()),
        pairs_compared: pairs.len(),
        proposed_not_worse,
        paired_dominance: (!pairs.is_empty()).then(|| proposed_not_worse as f64 / pairs.len() as f64),
    };
    Ok(Batch { summary, records })
}

/// Bound check of one recorded run, recomputed from its series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBoundCheck {
    pub run_id: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub measured_delta_r: f64,
    pub bound: InvariantSetBound,
    pub verdict: BoundednessVerdict,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta_d: f64,
    pub kp_min: f64,
    pub max_measured_delta_r: f64,
    /// `(delta_D + max measured delta_R) / min Kp` over all runs.
    pub aggregate_ceiling: f64,
    pub runs: usize,
    pub compliant: usize,
    pub compliance_rate: f64,
    pub proposed_runs: usize,
    pub proposed_compliant: usize,
    /// Largest error norm after set entry across all runs.
    pub max_error_after_entry: Option<f64>,
    pub per_run: Vec<RunBoundCheck>,
}

/// A recorded run identified for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub run_id: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub series: RunSeries,
}

/// Recomputes the per-run invariant sets from recorded attitudes and checks
/// every error trajectory against them.
pub fn bound_report(
    runs: &[LabeledSeries],
    gains: &ControllerGains,
    geom: &ProbeGeometry,
    delta_d: f64,
) -> Result<BoundReport> {
    if runs.is_empty() {
        return Err(invalid("records", "no runs to analyze"));
    }
    let lyapunov = LyapunovParams::for_gains(gains)?;
    let per_run = runs
        .iter()
        .map(|run| {
            let s = &run.series;
            if s.len() < 2 || !s.is_consistent() {
                return Err(invalid(&run.run_id, "series is too short or inconsistent"));
            }
            let dt = s.times[1] - s.times[0];
            let measured_delta_r = measure_delta_r(&s.attitudes(), geom, dt)?;
            let bound = invariant_set_level(gains, &UncertaintyBounds::new(delta_d, measured_delta_r));
            let verdict = boundedness_verdict(&s.times, &s.errors, &bound, &lyapunov)?;
            Ok(RunBoundCheck {
                run_id: run.run_id.clone(),
                controller: run.controller,
                seed: run.seed,
                measured_delta_r,
                bound,
                verdict,
                compliant: verdict.compliant(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_measured_delta_r = per_run.iter().map(|r| r.measured_delta_r).fold(0.0, f64::max);
    let kp_min = gains.kp.min();
    let compliant = per_run.iter().filter(|r| r.compliant).count();
    let proposed: Vec<_> = per_run.iter().filter(|r| r.controller == ControllerKind::Proposed).collect();
    Ok(BoundReport {
        delta_d,
        kp_min,
        max_measured_delta_r,
        aggregate_ceiling: (delta_d + max_measured_delta_r) / kp_min,
        runs: per_run.len(),
        compliant,
        compliance_rate: compliant as f64 / per_run.len() as f64,
        proposed_runs: proposed.len(),
        proposed_compliant: proposed.iter().filter(|r| r.compliant).count(),
        max_error_after_entry: per_run.iter().filter_map(|r| r.verdict.max_e_after_entry).reduce(f64::max),
        per_run,
    })
}
