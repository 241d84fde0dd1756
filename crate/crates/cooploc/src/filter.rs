//! Extended Kalman filter over stacked RSS measurements.
//!
//! State vector ordering is `[x, y, vx, vy]` in 2D and `[x, y, z, vx, vy,
//! vz]` in 3D: positions first, then velocities. Only the anchor state is
//! estimated; buddy nodes ride along through the rigid formation, so the
//! measurement model maps the anchor position to `M * N` RSS values ordered
//! with the node index outermost and the reference index fastest
//! (`row = node * N + reference`).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::channel::{ChannelError, PathLossModel};
use crate::geometry::{formation_positions, FormationSpec, GeometryError};

/// Innovation covariances with a condition estimate above this are treated
/// as numerically singular and abort the step.
pub const INNOVATION_CONDITION_LIMIT: f64 = 1e12;

/// Lower bound applied to the default per-measurement noise variance so a
/// zero-shadowing channel still yields an invertible innovation covariance.
pub const Q_E_FLOOR: f64 = 1e-6;

/// Two positions closer than this are treated as coincident when predicting
/// a measurement (the log-distance model blows up at zero range).
pub const MIN_RANGE_M: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("state must have 4 (2D) or 6 (3D) entries, got {0}")]
    BadStateDimension(usize),
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("covariance is not symmetric (max asymmetry {0:.3e})")]
    AsymmetricCovariance(f64),
    #[error("values must be finite")]
    NonFinite,
    #[error("node {node} sits on reference {reference}; range is degenerate")]
    NodeOnReference { node: usize, reference: usize },
    #[error("innovation covariance is numerically singular (condition estimate {condition:.3e})")]
    InnovationSingular { condition: f64 },
    #[error("{got} references cannot determine a {dimension}D position; need at least {needed}")]
    UnderdeterminedInit {
        got: usize,
        dimension: usize,
        needed: usize,
    },
    #[error("multilateration normal equations are singular; references are degenerate")]
    InitSingular,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ─── state and process model ───

/// Gaussian filter state: mean vector and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl FilterState {
    /// Builds a state, checking dimensions and symmetry (within 1e-9); the
    /// stored covariance is exactly symmetrized.
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self, FilterError> {
        if x.len() != 4 && x.len() != 6 {
            return Err(FilterError::BadStateDimension(x.len()));
        }
        if p.nrows() != x.len() || p.ncols() != x.len() {
            return Err(FilterError::DimensionMismatch {
                what: "covariance rows",
                expected: x.len(),
                got: p.nrows(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) || !p.iter().all(|v| v.is_finite()) {
            return Err(FilterError::NonFinite);
        }
        let asym = (&p - p.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(FilterError::AsymmetricCovariance(asym));
        }
        Ok(Self::from_parts(x, p))
    }

    /// Internal constructor for freshly computed states; symmetrizes only.
    fn from_parts(x: DVector<f64>, p: DMatrix<f64>) -> Self {
        let p = symmetrize(p);
        FilterState { x, p }
    }

    /// Spatial dimension (2 or 3).
    pub fn spatial_dim(&self) -> usize {
        self.x.len() / 2
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Position components of the mean.
    pub fn position(&self) -> DVector<f64> {
        self.x.rows(0, self.spatial_dim()).into_owned()
    }

    /// Velocity components of the mean.
    pub fn velocity(&self) -> DVector<f64> {
        self.x.rows(self.spatial_dim(), self.spatial_dim()).into_owned()
    }
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    let pt = p.transpose();
    (p + pt) * 0.5
}

/// Discrete constant-velocity process model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    dimension: usize,
    ts: f64,
    f: DMatrix<f64>,
    q_w: DMatrix<f64>,
}

impl ProcessModel {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// State transition matrix.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Process noise covariance per step.
    pub fn q_w(&self) -> &DMatrix<f64> {
        &self.q_w
    }
}

/// Builds the discrete constant-velocity model for one sampling period.
///
/// The continuous system is a double integrator, whose generator is
/// nilpotent, so the exact discretization is `F = I + A * ts` with no
/// higher-order terms. Process noise enters through the velocities only:
/// `Q_w = ts * diag(0, .., 0, q_1, .., q_dim)`.
pub fn discretize(
    dimension: usize,
    ts: f64,
    q_spectral: &[f64],
) -> Result<ProcessModel, FilterError> {
    if dimension != 2 && dimension != 3 {
        return Err(FilterError::BadParameter(format!(
            "dimension must be 2 or 3, got {dimension}"
        )));
    }
    if !(ts.is_finite() && ts > 0.0) {
        return Err(FilterError::BadParameter(format!(
            "sampling period must be positive, got {ts}"
        )));
    }
    if q_spectral.len() != dimension {
        return Err(FilterError::DimensionMismatch {
            what: "q_spectral entries",
            expected: dimension,
            got: q_spectral.len(),
        });
    }
    if !q_spectral.iter().all(|q| q.is_finite() && *q >= 0.0) {
        return Err(FilterError::BadParameter(
            "velocity noise intensities must be finite and nonnegative".to_string(),
        ));
    }
    let n = 2 * dimension;
    let mut f = DMatrix::identity(n, n);
    for k in 0..dimension {
        f[(k, dimension + k)] = ts;
    }
    let mut q_w = DMatrix::zeros(n, n);
    for k in 0..dimension {
        q_w[(dimension + k, dimension + k)] = ts * q_spectral[k];
    }
    Ok(ProcessModel {
        dimension,
        ts,
        f,
        q_w,
    })
}

// ─── measurement model ───

/// Stationary references plus the formation and channel that map an anchor
/// position to a stacked RSS vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    references: Vec<DVector<f64>>,
    formation: FormationSpec,
    channel: PathLossModel,
    q_e: DMatrix<f64>,
}

impl MeasurementModel {
    /// Builds the model with the default measurement noise
    /// `max(sigma^2, 1e-6) * I`.
    pub fn new(
        references: Vec<DVector<f64>>,
        formation: FormationSpec,
        channel: PathLossModel,
    ) -> Result<Self, FilterError> {
        channel.validate()?;
        if references.is_empty() {
            return Err(FilterError::BadParameter(
                "at least one reference node is required".to_string(),
            ));
        }
        for (j, r) in references.iter().enumerate() {
            if r.len() != formation.dimension() {
                return Err(FilterError::DimensionMismatch {
                    what: "reference coordinates",
                    expected: formation.dimension(),
                    got: r.len(),
                });
            }
            if !r.iter().all(|v| v.is_finite()) {
                return Err(FilterError::BadParameter(format!(
                    "reference {j} has non-finite coordinates"
                )));
            }
        }
        let len = references.len() * formation.node_count();
        let var = (channel.sigma() * channel.sigma()).max(Q_E_FLOOR);
        let q_e = DMatrix::identity(len, len) * var;
        Ok(MeasurementModel {
            references,
            formation,
            channel,
            q_e,
        })
    }

    /// Replaces the measurement noise covariance.
    pub fn with_q_e(mut self, q_e: DMatrix<f64>) -> Result<Self, FilterError> {
        let len = self.stacked_len();
        if q_e.nrows() != len || q_e.ncols() != len {
            return Err(FilterError::DimensionMismatch {
                what: "q_e rows",
                expected: len,
                got: q_e.nrows(),
            });
        }
        if !q_e.iter().all(|v| v.is_finite()) {
            return Err(FilterError::NonFinite);
        }
        let asym = (&q_e - q_e.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(FilterError::AsymmetricCovariance(asym));
        }
        self.q_e = symmetrize(q_e);
        Ok(self)
    }

    pub fn references(&self) -> &[DVector<f64>] {
        &self.references
    }

    pub fn formation(&self) -> &FormationSpec {
        &self.formation
    }

    pub fn channel(&self) -> &PathLossModel {
        &self.channel
    }

    pub fn q_e(&self) -> &DMatrix<f64> {
        &self.q_e
    }

    pub fn dimension(&self) -> usize {
        self.formation.dimension()
    }

    /// Number of mobile nodes M.
    pub fn node_count(&self) -> usize {
        self.formation.node_count()
    }

    /// Number of references N.
    pub fn reference_count(&self) -> usize {
        self.references.len()
    }

    /// Stacked measurement dimension M * N.
    pub fn stacked_len(&self) -> usize {
        self.node_count() * self.reference_count()
    }
}

fn check_state_model(state: &FilterState, model: &MeasurementModel) -> Result<(), FilterError> {
    if state.spatial_dim() != model.dimension() {
        return Err(FilterError::DimensionMismatch {
            what: "state spatial dimension",
            expected: model.dimension(),
            got: state.spatial_dim(),
        });
    }
    Ok(())
}

/// Node-to-reference ranges for an anchor position, ordered `node * N + ref`.
fn stacked_ranges(
    anchor: &DVector<f64>,
    model: &MeasurementModel,
) -> Result<Vec<(DVector<f64>, f64)>, FilterError> {
    let nodes = formation_positions(anchor, model.formation())?;
    let mut out = Vec::with_capacity(model.stacked_len());
    for (i, node) in nodes.iter().enumerate() {
        for (j, reference) in model.references.iter().enumerate() {
            let diff = node - reference;
            let d = diff.norm();
            if d < MIN_RANGE_M {
                return Err(FilterError::NodeOnReference {
                    node: i,
                    reference: j,
                });
            }
            out.push((diff, d));
        }
    }
    Ok(out)
}

fn measurement_mean(anchor: &DVector<f64>, model: &MeasurementModel) -> Result<DVector<f64>, FilterError> {
    let ranges = stacked_ranges(anchor, model)?;
    let mut h = DVector::zeros(ranges.len());
    for (row, (_, d)) in ranges.iter().enumerate() {
        h[row] = model.channel.predict_rss(*d)?.dbm;
    }
    Ok(h)
}

fn measurement_jacobian_at(
    anchor: &DVector<f64>,
    state_dim: usize,
    model: &MeasurementModel,
) -> Result<DMatrix<f64>, FilterError> {
    let dim = model.dimension();
    let ranges = stacked_ranges(anchor, model)?;
    let mut jac = DMatrix::zeros(ranges.len(), state_dim);
    for (row, (diff, d)) in ranges.iter().enumerate() {
        // Chain rule through the range: d(rss)/d(anchor) =
        // slope(d) * (node - ref)^T / d, times the node-vs-anchor Jacobian,
        // which is the identity for rigid offsets. Velocities do not enter.
        let slope = model.channel.rss_slope(*d)?;
        for k in 0..dim {
            jac[(row, k)] = slope * diff[k] / d;
        }
    }
    Ok(jac)
}

/// Noise-free stacked measurement predicted from the state mean.
pub fn predict_measurement(
    state: &FilterState,
    model: &MeasurementModel,
) -> Result<DVector<f64>, FilterError> {
    check_state_model(state, model)?;
    measurement_mean(&state.position(), model)
}

/// Jacobian of the stacked measurement with respect to the full state,
/// evaluated at the state mean. Velocity columns are zero.
pub fn measurement_jacobian(
    state: &FilterState,
    model: &MeasurementModel,
) -> Result<DMatrix<f64>, FilterError> {
    check_state_model(state, model)?;
    measurement_jacobian_at(&state.position(), state.state().len(), model)
}

// ─── EKF recursion ───

/// One EKF step together with the innovation it consumed, for tracing.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: FilterState,
    /// `z - h(x_pred)` over the active rows (empty if all rows masked out).
    pub innovation: DVector<f64>,
}

/// One predict-update cycle over the full stacked measurement vector.
pub fn ekf_step(
    state: &FilterState,
    process: &ProcessModel,
    model: &MeasurementModel,
    measurement: &DVector<f64>,
) -> Result<FilterState, FilterError> {
    let mask = vec![true; model.stacked_len()];
    Ok(ekf_step_detailed(state, process, model, measurement, &mask)?.state)
}

/// One predict-update cycle using only the measurement rows whose mask entry
/// is true. `measurement` holds just the active rows, in stacked order. An
/// all-false mask performs the time update alone.
pub fn ekf_step_masked(
    state: &FilterState,
    process: &ProcessModel,
    model: &MeasurementModel,
    measurement: &DVector<f64>,
    mask: &[bool],
) -> Result<FilterState, FilterError> {
    Ok(ekf_step_detailed(state, process, model, measurement, mask)?.state)
}

/// Masked EKF step that also reports the innovation vector.
pub fn ekf_step_detailed(
    state: &FilterState,
    process: &ProcessModel,
    model: &MeasurementModel,
    measurement: &DVector<f64>,
    mask: &[bool],
) -> Result<StepOutput, FilterError> {
    check_state_model(state, model)?;
    if process.dimension() != model.dimension() {
        return Err(FilterError::DimensionMismatch {
            what: "process dimension",
            expected: model.dimension(),
            got: process.dimension(),
        });
    }
    if mask.len() != model.stacked_len() {
        return Err(FilterError::DimensionMismatch {
            what: "mask entries",
            expected: model.stacked_len(),
            got: mask.len(),
        });
    }
    let active: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, keep)| keep.then_some(i))
        .collect();
    if measurement.len() != active.len() {
        return Err(FilterError::DimensionMismatch {
            what: "measurement entries",
            expected: active.len(),
            got: measurement.len(),
        });
    }
    if !measurement.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NonFinite);
    }

    // Time update.
    let x_pred = process.f() * state.state();
    let p_pred = symmetrize(process.f() * state.covariance() * process.f().transpose() + process.q_w());

    if active.is_empty() {
        return Ok(StepOutput {
            state: FilterState::from_parts(x_pred, p_pred),
            innovation: DVector::zeros(0),
        });
    }

    // Linearize at the predicted mean.
    let anchor = x_pred.rows(0, model.dimension()).into_owned();
    let h_full = measurement_mean(&anchor, model)?;
    let jac_full = measurement_jacobian_at(&anchor, x_pred.len(), model)?;

    let h_act = DVector::from_fn(active.len(), |r, _| h_full[active[r]]);
    let jac_act = DMatrix::from_fn(active.len(), x_pred.len(), |r, c| jac_full[(active[r], c)]);
    let q_e_act = DMatrix::from_fn(active.len(), active.len(), |r, c| {
        model.q_e[(active[r], active[c])]
    });

    let innovation = measurement - &h_act;

    // Measurement update.
    let s = symmetrize(&jac_act * &p_pred * jac_act.transpose() + q_e_act);
    let chol = s.cholesky().ok_or(FilterError::InnovationSingular {
        condition: f64::INFINITY,
    })?;
    let diag = chol.l_dirty();
    let mut lmin = f64::INFINITY;
    let mut lmax: f64 = 0.0;
    for i in 0..active.len() {
        let v = diag[(i, i)].abs();
        lmin = lmin.min(v);
        lmax = lmax.max(v);
    }
    let condition = (lmax / lmin) * (lmax / lmin);
    if !condition.is_finite() || condition > INNOVATION_CONDITION_LIMIT {
        return Err(FilterError::InnovationSingular { condition });
    }

    // K = P H^T S^-1, computed as (S^-1 H P)^T since P is symmetric.
    let gain = chol.solve(&(&jac_act * &p_pred)).transpose();
    let identity = DMatrix::identity(x_pred.len(), x_pred.len());
    let p_post = (identity - &gain * &jac_act) * &p_pred;
    let x_post = &x_pred + &gain * &innovation;

    Ok(StepOutput {
        state: FilterState::from_parts(x_post, p_post),
        innovation,
    })
}

// ─── initialization ───

/// How the first filter state is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    /// Start from a known position with the given per-axis variances and
    /// zero velocity.
    KnownStart {
        position: DVector<f64>,
        pos_var: f64,
        vel_var: f64,
    },
    /// Invert the anchor's first RSS row to ranges and multilaterate a
    /// coarse starting position (Gauss-Newton), then start with zero
    /// velocity and the given variances.
    CoarseMultilateration { pos_var: f64, vel_var: f64 },
}

fn diag_init(dim: usize, pos_var: f64, vel_var: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(2 * dim, 2 * dim);
    for k in 0..dim {
        p[(k, k)] = pos_var;
        p[(dim + k, dim + k)] = vel_var;
    }
    p
}

fn check_vars(pos_var: f64, vel_var: f64) -> Result<(), FilterError> {
    if !(pos_var.is_finite() && pos_var > 0.0 && vel_var.is_finite() && vel_var > 0.0) {
        return Err(FilterError::BadParameter(format!(
            "init variances must be positive, got pos_var={pos_var}, vel_var={vel_var}"
        )));
    }
    Ok(())
}

const MULTILATERATION_MAX_ITER: usize = 50;
const MULTILATERATION_TOL: f64 = 1e-8;

/// Least-squares position from ranges to the references (Gauss-Newton,
/// started at the reference centroid).
fn multilaterate(
    ranges: &[f64],
    references: &[DVector<f64>],
    dim: usize,
) -> Result<DVector<f64>, FilterError> {
    let mut x = DVector::zeros(dim);
    for r in references {
        x += r;
    }
    x /= references.len() as f64;

    for _ in 0..MULTILATERATION_MAX_ITER {
        let mut jtj = DMatrix::zeros(dim, dim);
        let mut jtr = DVector::zeros(dim);
        for (r_j, reference) in ranges.iter().zip(references) {
            let diff = &x - reference;
            let d = diff.norm().max(1e-12);
            let grad = diff / d;
            let residual = d - r_j;
            jtj += &grad * grad.transpose();
            jtr += grad * residual;
        }
        let delta = jtj
            .cholesky()
            .ok_or(FilterError::InitSingular)?
            .solve(&(-jtr));
        x += &delta;
        if delta.norm() < MULTILATERATION_TOL {
            break;
        }
    }
    Ok(x)
}

/// Produces the initial filter state from the first stacked measurement.
///
/// `first_measurements` must have the full stacked length; only the anchor
/// rows (the first N entries) are consulted, and only by the
/// multilateration policy.
pub fn initialize(
    first_measurements: &DVector<f64>,
    model: &MeasurementModel,
    policy: &InitPolicy,
) -> Result<FilterState, FilterError> {
    if first_measurements.len() != model.stacked_len() {
        return Err(FilterError::DimensionMismatch {
            what: "first measurement entries",
            expected: model.stacked_len(),
            got: first_measurements.len(),
        });
    }
    let dim = model.dimension();
    match policy {
        InitPolicy::KnownStart {
            position,
            pos_var,
            vel_var,
        } => {
            check_vars(*pos_var, *vel_var)?;
            if position.len() != dim {
                return Err(FilterError::DimensionMismatch {
                    what: "start position coordinates",
                    expected: dim,
                    got: position.len(),
                });
            }
            let mut x = DVector::zeros(2 * dim);
            for k in 0..dim {
                x[k] = position[k];
            }
            FilterState::new(x, diag_init(dim, *pos_var, *vel_var))
        }
        InitPolicy::CoarseMultilateration { pos_var, vel_var } => {
            check_vars(*pos_var, *vel_var)?;
            let n = model.reference_count();
            if n < dim + 1 {
                return Err(FilterError::UnderdeterminedInit {
                    got: n,
                    dimension: dim,
                    needed: dim + 1,
                });
            }
            let mut ranges = Vec::with_capacity(n);
            for j in 0..n {
                ranges.push(model.channel().invert_rss(first_measurements[j])?.meters);
            }
            let position = multilaterate(&ranges, model.references(), dim)?;
            let mut x = DVector::zeros(2 * dim);
            for k in 0..dim {
                x[k] = position[k];
            }
            FilterState::new(x, diag_init(dim, *pos_var, *vel_var))
        }
    }
}
