//! Scenario definitions and the Monte Carlo harness.
//!
//! A trial walks a formation along a trajectory, synthesizes shadowed RSS
//! readings from every node to every reference at each sampling instant,
//! feeds them to the EKF, and records the anchor position error. Buddy nodes
//! improve the estimate through the extra measurements but their own error
//! is only logged in traces, never aggregated.
//!
//! Every trial owns a counter-seeded RNG (`base_seed + trial_index`), so
//! runs are reproducible bit for bit and trials are independent of
//! execution order.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, PathLossModel};
use crate::filter::{
    discretize, ekf_step_detailed, initialize, FilterError, InitPolicy, MeasurementModel,
};
use crate::geometry::{formation_positions, Attitude, FormationSpec, GeometryError};

/// Default sampling period (s).
pub const DEFAULT_TS: f64 = 0.1;
/// Default velocity noise intensity per axis ((m/s)^2 per second).
pub const DEFAULT_Q_SPECTRAL: f64 = 0.01;
/// Default position variance for initialization (m^2).
pub const DEFAULT_POS_VAR: f64 = 1.0;
/// Default velocity variance for initialization ((m/s)^2).
pub const DEFAULT_VEL_VAR: f64 = 0.25;
/// Default Monte Carlo trial count.
pub const DEFAULT_TRIALS: usize = 200;
/// Default base seed.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "unknown scenario '{0}'; valid ids: corridor2d_1mn, corridor2d_2mn, cube3d_1mn, \
         cube3d_2mn, exp2d_1mn, exp2d_2mn, exp3d_1mn, exp3d_2mn"
    )]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    #[error("positions have different dimensions: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("step {step}: {source}")]
    StepFailed { step: usize, source: FilterError },
    #[error("all {0} trials diverged")]
    AllTrialsDiverged(usize),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Euclidean distance between a true and an estimated position.
pub fn error_distance(true_pos: &DVector<f64>, est_pos: &DVector<f64>) -> Result<f64, SimError> {
    if true_pos.len() != est_pos.len() {
        return Err(SimError::DimensionMismatch(true_pos.len(), est_pos.len()));
    }
    Ok((true_pos - est_pos).norm())
}

// ─── trajectories ───

/// Anchor path through the workspace, traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySpec {
    Line {
        start: DVector<f64>,
        end: DVector<f64>,
        duration: f64,
    },
    Waypoints {
        points: Vec<DVector<f64>>,
        duration: f64,
    },
}

/// Position and velocity of the anchor at one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl TrajectorySpec {
    pub fn line(start: DVector<f64>, end: DVector<f64>, duration: f64) -> Result<Self, SimError> {
        Self::waypoints(vec![start, end], duration).map(|tj| match tj {
            TrajectorySpec::Waypoints { mut points, duration } => TrajectorySpec::Line {
                end: points.pop().expect("two points"),
                start: points.pop().expect("two points"),
                duration,
            },
            line => line,
        })
    }

    pub fn waypoints(points: Vec<DVector<f64>>, duration: f64) -> Result<Self, SimError> {
        if points.len() < 2 {
            return Err(SimError::BadTrajectory(format!(
                "need at least two waypoints, got {}",
                points.len()
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimError::BadTrajectory(format!(
                "duration must be positive, got {duration}"
            )));
        }
        let dim = points[0].len();
        if dim != 2 && dim != 3 {
            return Err(SimError::BadTrajectory(format!(
                "waypoints must be 2D or 3D, got {dim} components"
            )));
        }
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(SimError::BadTrajectory(format!(
                    "waypoint {k} has {} components, expected {dim}",
                    p.len()
                )));
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(SimError::BadTrajectory(format!(
                    "waypoint {k} has non-finite components"
                )));
            }
        }
        for k in 1..points.len() {
            if (&points[k] - &points[k - 1]).norm() < 1e-12 {
                return Err(SimError::BadTrajectory(format!(
                    "waypoints {} and {k} coincide",
                    k - 1
                )));
            }
        }
        Ok(TrajectorySpec::Waypoints { points, duration })
    }

    pub fn dimension(&self) -> usize {
        match self {
            TrajectorySpec::Line { start, .. } => start.len(),
            TrajectorySpec::Waypoints { points, .. } => points[0].len(),
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            TrajectorySpec::Line { duration, .. } => *duration,
            TrajectorySpec::Waypoints { duration, .. } => *duration,
        }
    }

    pub fn start(&self) -> DVector<f64> {
        match self {
            TrajectorySpec::Line { start, .. } => start.clone(),
            TrajectorySpec::Waypoints { points, .. } => points[0].clone(),
        }
    }

    fn points(&self) -> Vec<DVector<f64>> {
        match self {
            TrajectorySpec::Line { start, end, .. } => vec![start.clone(), end.clone()],
            TrajectorySpec::Waypoints { points, .. } => points.clone(),
        }
    }

    /// Samples position and velocity every `ts` seconds from 0 through the
    /// full duration; the endpoint is always included even if the duration
    /// is not a multiple of `ts`.
    pub fn sample(&self, ts: f64) -> Result<Vec<TrajectorySample>, SimError> {
        if !(ts.is_finite() && ts > 0.0) {
            return Err(SimError::BadTrajectory(format!(
                "sampling period must be positive, got {ts}"
            )));
        }
        let points = self.points();
        let duration = self.duration();
        let lengths: Vec<f64> = points
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm())
            .collect();
        let total: f64 = lengths.iter().sum();
        let speed = total / duration;

        let steps = (duration / ts - 1e-9).ceil().max(1.0) as usize;
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = (k as f64 * ts).min(duration);
            let arc = (speed * t).min(total);
            // Walk to the segment containing this arc length.
            let mut remaining = arc;
            let mut seg = 0;
            while seg + 1 < lengths.len() && remaining > lengths[seg] {
                remaining -= lengths[seg];
                seg += 1;
            }
            let dir = (&points[seg + 1] - &points[seg]) / lengths[seg];
            let position = &points[seg] + &dir * remaining;
            let velocity = &dir * speed;
            out.push(TrajectorySample { t, position, velocity });
        }
        Ok(out)
    }
}

// ─── scenarios ───

/// Complete description of one repeatable experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub references: Vec<DVector<f64>>,
    pub trajectory: TrajectorySpec,
    pub formation: FormationSpec,
    pub channel: PathLossModel,
    pub ts: f64,
    pub q_spectral: Vec<f64>,
    pub init: InitPolicy,
    /// Drop measurements whose true range exceeds the channel's validity
    /// range (only meaningful for clamped models).
    pub drop_out_of_validity: bool,
}

impl Scenario {
    pub fn dimension(&self) -> usize {
        self.formation.dimension()
    }

    /// Mobile node count M.
    pub fn node_count(&self) -> usize {
        self.formation.node_count()
    }

    /// Swaps the channel model, adjusting the drop policy: range-validity
    /// filtering only applies to clamped models.
    pub fn with_channel(mut self, channel: PathLossModel) -> Self {
        self.drop_out_of_validity =
            matches!(channel, PathLossModel::LogDistanceClamped { .. });
        self.channel = channel;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let dim = self.dimension();
        if self.trajectory.dimension() != dim {
            return Err(SimError::InvalidScenario(format!(
                "trajectory is {}D but the formation is {dim}D",
                self.trajectory.dimension()
            )));
        }
        if self.references.is_empty() {
            return Err(SimError::InvalidScenario(
                "at least one reference node is required".to_string(),
            ));
        }
        for (j, r) in self.references.iter().enumerate() {
            if r.len() != dim {
                return Err(SimError::InvalidScenario(format!(
                    "reference {j} has {} components, expected {dim}",
                    r.len()
                )));
            }
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "sampling period must be positive, got {}",
                self.ts
            )));
        }
        if self.q_spectral.len() != dim {
            return Err(SimError::InvalidScenario(format!(
                "q_spectral has {} entries, expected {dim}",
                self.q_spectral.len()
            )));
        }
        self.channel
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if let InitPolicy::KnownStart { position, .. } = &self.init {
            if position.len() != dim {
                return Err(SimError::InvalidScenario(format!(
                    "start position has {} components, expected {dim}",
                    position.len()
                )));
            }
        }
        Ok(())
    }
}

/// Identifiers accepted by [`builtin_scenario`]. The `_1mn` variants track a
/// single node; `_2mn` adds one buddy at a rigid offset.
pub const BUILTIN_SCENARIOS: [&str; 8] = [
    "corridor2d_1mn",
    "corridor2d_2mn",
    "cube3d_1mn",
    "cube3d_2mn",
    "exp2d_1mn",
    "exp2d_2mn",
    "exp3d_1mn",
    "exp3d_2mn",
];

fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(values)
}

fn known_start(trajectory: &TrajectorySpec) -> InitPolicy {
    InitPolicy::KnownStart {
        position: trajectory.start(),
        pos_var: DEFAULT_POS_VAR,
        vel_var: DEFAULT_VEL_VAR,
    }
}

fn scenario_from_parts(
    id: &str,
    references: Vec<DVector<f64>>,
    trajectory: TrajectorySpec,
    offsets: Vec<Vector3<f64>>,
    dimension: usize,
) -> Scenario {
    let formation = FormationSpec::new(dimension, offsets, Attitude::ZERO)
        .expect("builtin formation is valid");
    let init = known_start(&trajectory);
    Scenario {
        id: id.to_string(),
        references,
        trajectory,
        formation,
        channel: PathLossModel::calibrated_log_clamped(),
        ts: DEFAULT_TS,
        q_spectral: vec![DEFAULT_Q_SPECTRAL; dimension],
        init,
        drop_out_of_validity: true,
    }
}

/// Builds one of the packaged scenarios. All of them default to the
/// range-clamped calibrated channel; use [`Scenario::with_channel`] to
/// study other models on the same geometry.
pub fn builtin_scenario(id: &str) -> Result<Scenario, SimError> {
    let two_nodes = id.ends_with("_2mn");
    match id {
        "corridor2d_1mn" | "corridor2d_2mn" => {
            // 32 m corridor with references staggered along both walls.
            let mut references = Vec::new();
            for k in 0..5 {
                let x = 8.0 * k as f64;
                references.push(dvec(&[x, 0.0]));
                references.push(dvec(&[x, 5.0]));
            }
            let trajectory =
                TrajectorySpec::line(dvec(&[1.0, 3.0]), dvec(&[31.0, 3.0]), 30.0)?;
            let offsets = if two_nodes {
                vec![Vector3::new(0.0, -0.5, 0.0)]
            } else {
                Vec::new()
            };
            Ok(scenario_from_parts(id, references, trajectory, offsets, 2))
        }
        "cube3d_1mn" | "cube3d_2mn" => {
            // References on the eight corners of an 8 m cube; the anchor
            // wanders the interior along a fixed waypoint route.
            let mut references = Vec::new();
            for &x in &[0.0, 8.0] {
                for &y in &[0.0, 8.0] {
                    for &z in &[0.0, 8.0] {
                        references.push(dvec(&[x, y, z]));
                    }
                }
            }
            let trajectory = TrajectorySpec::waypoints(
                vec![
                    dvec(&[1.0, 1.0, 1.0]),
                    dvec(&[7.0, 2.0, 3.0]),
                    dvec(&[6.0, 6.0, 5.0]),
                    dvec(&[2.0, 7.0, 6.0]),
                ],
                30.0,
            )?;
            let offsets = if two_nodes {
                vec![Vector3::new(0.0, 0.0, 0.5)]
            } else {
                Vec::new()
            };
            Ok(scenario_from_parts(id, references, trajectory, offsets, 3))
        }
        "exp2d_1mn" | "exp2d_2mn" => {
            // Two rows of three references, 4.2 m apart; diagonal walk.
            let references = vec![
                dvec(&[0.0, 0.0]),
                dvec(&[0.0, 3.0]),
                dvec(&[0.0, 6.0]),
                dvec(&[4.2, 0.0]),
                dvec(&[4.2, 3.0]),
                dvec(&[4.2, 6.0]),
            ];
            let trajectory = TrajectorySpec::line(dvec(&[1.0, 1.0]), dvec(&[3.0, 5.0]), 30.0)?;
            let offsets = if two_nodes {
                vec![Vector3::new(0.0, 0.5, 0.0)]
            } else {
                Vec::new()
            };
            Ok(scenario_from_parts(id, references, trajectory, offsets, 2))
        }
        "exp3d_1mn" | "exp3d_2mn" => {
            // Same two rows lifted to 1 m height; short straight walk.
            let references = vec![
                dvec(&[0.0, 0.0, 1.0]),
                dvec(&[0.0, 3.0, 1.0]),
                dvec(&[0.0, 6.0, 1.0]),
                dvec(&[4.2, 0.0, 1.0]),
                dvec(&[4.2, 3.0, 1.0]),
                dvec(&[4.2, 6.0, 1.0]),
            ];
            let trajectory =
                TrajectorySpec::line(dvec(&[1.8, 0.0, 1.0]), dvec(&[3.6, 0.0, 1.0]), 30.0)?;
            let offsets = if two_nodes {
                vec![Vector3::new(0.0, 0.0, 0.5)]
            } else {
                Vec::new()
            };
            Ok(scenario_from_parts(id, references, trajectory, offsets, 3))
        }
        other => Err(SimError::UnknownScenario(other.to_string())),
    }
}

// ─── trial execution ───

/// Anchor error series of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub per_step_error: Vec<f64>,
    pub mean_error: f64,
}

/// Per-step data recorded when tracing is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub err_m: f64,
    /// Trace of the state covariance.
    pub p_trace: f64,
    /// Smallest eigenvalue of the state covariance.
    pub p_min_eigenvalue: f64,
    /// Error of the first buddy node (None for single-node runs).
    pub buddy_err_m: Option<f64>,
    /// Innovation consumed by this step (empty at step 0 and when all
    /// measurements were dropped).
    pub innovation: Vec<f64>,
}

/// Result of [`run_trial`]: the error report plus the optional trace.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub report: TrialReport,
    pub trace: Option<Vec<TraceRow>>,
}

fn covariance_stats(p: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(p.clone());
    (p.trace(), eig.eigenvalues.min())
}

/// Runs one seeded trial: truth generation, measurement synthesis, and the
/// filter recursion over every sampling instant.
pub fn run_trial(scenario: &Scenario, seed: u64, want_trace: bool) -> Result<TrialOutput, SimError> {
    scenario.validate()?;
    let dim = scenario.dimension();
    let samples = scenario.trajectory.sample(scenario.ts)?;
    let process = discretize(dim, scenario.ts, &scenario.q_spectral)?;
    let model = MeasurementModel::new(
        scenario.references.clone(),
        scenario.formation.clone(),
        scenario.channel,
    )?;
    let mn = model.stacked_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let synthesize = |anchor: &DVector<f64>,
                          rng: &mut ChaCha8Rng|
     -> Result<(DVector<f64>, Vec<bool>), FilterError> {
        let nodes = formation_positions(anchor, &scenario.formation)?;
        let mut z = DVector::zeros(mn);
        let mut mask = vec![true; mn];
        let mut row = 0;
        for node in nodes.iter() {
            for reference in &scenario.references {
                let sample = scenario
                    .channel
                    .sample_rss((node - reference).norm(), rng)?;
                z[row] = sample.dbm;
                mask[row] = !scenario.drop_out_of_validity || sample.within_validity;
                row += 1;
            }
        }
        Ok((z, mask))
    };

    let step_err = |step: usize| move |source: FilterError| SimError::StepFailed { step, source };

    let (z0, _) = synthesize(&samples[0].position, &mut rng).map_err(step_err(0))?;
    let mut state = initialize(&z0, &model, &scenario.init).map_err(step_err(0))?;

    let mut errors = Vec::with_capacity(samples.len());
    let mut trace = want_trace.then(Vec::new);
    let record = |state: &crate::filter::FilterState,
                      sample: &TrajectorySample,
                      innovation: DVector<f64>,
                      errors: &mut Vec<f64>,
                      trace: &mut Option<Vec<TraceRow>>|
     -> Result<(), SimError> {
        let err = error_distance(&sample.position, &state.position())?;
        errors.push(err);
        if let Some(rows) = trace.as_mut() {
            let (p_trace, p_min) = covariance_stats(state.covariance());
            let buddy_err_m = if scenario.node_count() > 1 {
                let truth = formation_positions(&sample.position, &scenario.formation)?;
                let est = formation_positions(&state.position(), &scenario.formation)?;
                Some(error_distance(truth.get(1), est.get(1))?)
            } else {
                None
            };
            rows.push(TraceRow {
                t: sample.t,
                truth: sample.position.iter().copied().collect(),
                estimate: state.position().iter().copied().collect(),
                err_m: err,
                p_trace,
                p_min_eigenvalue: p_min,
                buddy_err_m,
                innovation: innovation.iter().copied().collect(),
            });
        }
        Ok(())
    };

    record(&state, &samples[0], DVector::zeros(0), &mut errors, &mut trace)?;

    for (step, sample) in samples.iter().enumerate().skip(1) {
        let (z, mask) = synthesize(&sample.position, &mut rng).map_err(step_err(step))?;
        let active: Vec<f64> = z
            .iter()
            .zip(&mask)
            .filter_map(|(v, keep)| keep.then_some(*v))
            .collect();
        let out = ekf_step_detailed(
            &state,
            &process,
            &model,
            &DVector::from_vec(active),
            &mask,
        )
        .map_err(step_err(step))?;
        state = out.state;
        record(&state, sample, out.innovation, &mut errors, &mut trace)?;
    }

    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(TrialOutput {
        report: TrialReport {
            per_step_error: errors,
            mean_error,
        },
        trace,
    })
}

// ─── Monte Carlo aggregation ───

/// A trial that aborted, with the step and reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedTrial {
    pub trial: usize,
    pub step: usize,
    pub message: String,
}

/// Aggregated statistics over a batch of matched-seed trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub dimension: usize,
    pub mobile_nodes: usize,
    pub reference_nodes: usize,
    pub channel: String,
    pub trials: usize,
    pub base_seed: u64,
    pub ts: f64,
    pub steps_per_trial: usize,
    /// Mean over trials of the per-trial mean anchor error (m).
    pub grand_mean_m: f64,
    /// Sample standard deviation of the per-trial means (m).
    pub std_m: f64,
    pub completed_trials: usize,
    pub diverged: Vec<DivergedTrial>,
    pub trial_means_m: Vec<f64>,
}

/// Runs `trials` seeded trials and aggregates their mean errors. Individual
/// trial divergences are recorded and excluded from the statistics; it is an
/// error for every trial to diverge.
pub fn run_monte_carlo(
    scenario: &Scenario,
    trials: usize,
    base_seed: u64,
    want_trace: bool,
) -> Result<(ErrorReport, Option<Vec<TraceRow>>), SimError> {
    if trials == 0 {
        return Err(SimError::BadRequest("trial count must be at least 1".to_string()));
    }
    scenario.validate()?;
    let steps_per_trial = scenario.trajectory.sample(scenario.ts)?.len();

    let mut trial_means = Vec::with_capacity(trials);
    let mut diverged = Vec::new();
    let mut first_trace = None;
    for trial in 0..trials {
        let seed = base_seed.wrapping_add(trial as u64);
        match run_trial(scenario, seed, want_trace && trial == 0) {
            Ok(output) => {
                trial_means.push(output.report.mean_error);
                if trial == 0 {
                    first_trace = output.trace;
                }
            }
            Err(SimError::StepFailed { step, source }) => diverged.push(DivergedTrial {
                trial,
                step,
                message: source.to_string(),
            }),
            Err(other) => return Err(other),
        }
    }
    if trial_means.is_empty() {
        return Err(SimError::AllTrialsDiverged(trials));
    }

    let completed = trial_means.len();
    let grand_mean = trial_means.iter().sum::<f64>() / completed as f64;
    let std = if completed > 1 {
        let ss: f64 = trial_means
            .iter()
            .map(|m| (m - grand_mean) * (m - grand_mean))
            .sum();
        (ss / (completed - 1) as f64).sqrt()
    } else {
        0.0
    };

    Ok((
        ErrorReport {
            scenario: scenario.id.clone(),
            dimension: scenario.dimension(),
            mobile_nodes: scenario.node_count(),
            reference_nodes: scenario.references.len(),
            channel: scenario.channel.to_string(),
            trials,
            base_seed,
            ts: scenario.ts,
            steps_per_trial,
            grand_mean_m: grand_mean,
            std_m: std,
            completed_trials: completed,
            diverged,
            trial_means_m: trial_means,
        },
        first_trace,
    ))
}
