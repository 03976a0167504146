//! The survey descent core: subproblem assembly from oracle data only,
//! per-point solves, validity bookkeeping, and the run driver.
//!
//! A survey holds `k` points with their stored values and gradients. Each
//! iteration solves `k` independent subproblems against the *same* frozen
//! input survey: point `i` takes the gradient step `s_i - (1/L) g_i`
//! projected onto the region where every other point's linear model,
//! inflated by `L/2`-quadratics, stays below point `i`'s linear model.
//! After the change of variables `x <- x - s_i` that region is an
//! intersection of balls and the projection is a ball-intersection solve.
//!
//! Only stored oracle values and gradients enter the assembly; the solver
//! never needs component access to the objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dykstra::DykstraConfig;
use crate::error::{Error, Result};
use crate::mbp::{self, BallSpec, MbpOptions, MbpParameters, SolverPath};
use crate::oracle::{FirstOrderOracle, MaxOfSmoothObjective};
use crate::trace::{RunTrace, StopReason, TraceEntry, TraceStatus};

/// Absolute slack below zero tolerated in a squared constraint radius
/// before the pair is declared infeasible; values inside the slack are
/// clamped to zero.
pub const RADIUS_FEAS_TOL: f64 = 1e-9;

/// Margin enforcing the strict inequalities of survey validity.
pub const STRICT_TOL: f64 = 1e-12;

/// Ordered collection of points with their oracle values and gradients.
#[derive(Debug, Clone)]
pub struct Survey {
    points: DMatrix<f64>,
    values: DVector<f64>,
    gradients: DMatrix<f64>,
}

impl Survey {
    /// Evaluate the oracle at each column of `points`.
    pub fn evaluate(points: DMatrix<f64>, oracle: &dyn FirstOrderOracle) -> Result<Self> {
        let n = points.nrows();
        let k = points.ncols();
        let mut values = DVector::zeros(k);
        let mut gradients = DMatrix::zeros(n, k);
        for i in 0..k {
            let eval = oracle.evaluate(&points.column(i).into_owned())?;
            if !eval.value.is_finite() {
                return Err(Error::Numeric(format!("non-finite value at survey point {i}")));
            }
            values[i] = eval.value;
            gradients.column_mut(i).copy_from(&eval.gradient);
        }
        Ok(Self { points, values, gradients })
    }

    /// Build from already-known data (e.g. warm-start records or a reloaded
    /// trace). Dimensions must agree.
    pub fn from_parts(
        points: DMatrix<f64>,
        values: DVector<f64>,
        gradients: DMatrix<f64>,
    ) -> Result<Self> {
        if values.len() != points.ncols() || gradients.shape() != points.shape() {
            return Err(Error::InvalidInput("survey part shapes disagree".into()));
        }
        Ok(Self { points, values, gradients })
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn gradients(&self) -> &DMatrix<f64> {
        &self.gradients
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.column(i).into_owned()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn gradient(&self, i: usize) -> DVector<f64> {
        self.gradients.column(i).into_owned()
    }

    /// `max_i ||s_i - s'_i||` between two surveys of equal shape.
    pub fn displacement(&self, other: &Survey) -> f64 {
        survey_norm(&(&self.points - &other.points))
    }

    /// `max_i ||s_i - x||`, the survey-norm distance to the survey with all
    /// points at `x`.
    pub fn distance_to_point(&self, x: &DVector<f64>) -> f64 {
        (0..self.num_points())
            .map(|i| (self.point(i) - x).norm())
            .fold(0.0, f64::max)
    }

    /// True when stored values and gradients match a re-evaluation.
    pub fn is_consistent_with(&self, oracle: &dyn FirstOrderOracle) -> bool {
        (0..self.num_points()).all(|i| {
            oracle.evaluate(&self.point(i)).is_ok_and(|eval| {
                (eval.value - self.value(i)).abs() <= 1e-12 * (1.0 + eval.value.abs())
                    && (eval.gradient - self.gradient(i)).norm() <= 1e-12
            })
        })
    }
}

/// Max over columns of the Euclidean column norm.
pub fn survey_norm(columns: &DMatrix<f64>) -> f64 {
    columns
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// The i-th subproblem in shifted coordinates `w = x - s_i`: project the
/// target (the gradient step, relative to `s_i`) onto balls whose centers
/// and squared radii are built from stored oracle data alone. Squared radii
/// may be negative here; the solver decides feasibility.
#[derive(Debug, Clone)]
pub struct SubproblemGeometry {
    pub index: usize,
    /// `-(1/L) g_i`; the unconstrained solution in shifted coordinates.
    pub target: DVector<f64>,
    pub shifted_centers: DMatrix<f64>,
    pub squared_radii: DVector<f64>,
    /// `s_i`, the shift back to original coordinates.
    pub shift: DVector<f64>,
    /// Survey index of the point behind each constraint column.
    pub constraint_sources: Vec<usize>,
}

/// Build the i-th subproblem geometry from the survey's stored values and
/// gradients: with `y_j = -(1/L) g_j`,
///
/// ```text
/// z_ij  = (s_j - s_i) + (y_j - y_i)
/// r_ij^2 = (2/L) [h_i - h_j + g_i' (s_j - s_i)] + ||y_j - y_i||^2
/// ```
pub fn assemble_subproblem(survey: &Survey, index: usize, step_control_l: f64) -> Result<SubproblemGeometry> {
    let k = survey.num_points();
    if index >= k {
        return Err(Error::IndexOutOfRange { index, len: k });
    }
    if step_control_l <= 0.0 {
        return Err(Error::InvalidInput("step control parameter must be positive".into()));
    }
    let n = survey.dim();
    let scale = -1.0 / step_control_l;
    let s_i = survey.point(index);
    let g_i = survey.gradient(index);
    let y_i = &g_i * scale;
    let mut shifted_centers = DMatrix::zeros(n, k - 1);
    let mut squared_radii = DVector::zeros(k - 1);
    let mut constraint_sources = Vec::with_capacity(k - 1);
    let mut col = 0;
    for j in 0..k {
        if j == index {
            continue;
        }
        let s_j = survey.point(j);
        let y_j = survey.gradient(j) * scale;
        let ds = &s_j - &s_i;
        let dy = &y_j - &y_i;
        shifted_centers.column_mut(col).copy_from(&(&ds + &dy));
        squared_radii[col] = (2.0 / step_control_l)
            * (survey.value(index) - survey.value(j) + g_i.dot(&ds))
            + dy.norm_squared();
        constraint_sources.push(j);
        col += 1;
    }
    Ok(SubproblemGeometry {
        index,
        target: y_i,
        shifted_centers,
        squared_radii,
        shift: s_i,
        constraint_sources,
    })
}

/// Per-point outcome of one subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Solved,
    /// The constraint contributed by this survey index has negative squared
    /// radius: the pair admits no feasible point.
    InfeasiblePair(usize),
    SolverFailed,
}

impl PointStatus {
    pub fn is_solved(&self) -> bool {
        matches!(self, PointStatus::Solved)
    }

    pub fn as_trace_status(&self) -> TraceStatus {
        match self {
            PointStatus::Solved => TraceStatus::Solved,
            PointStatus::InfeasiblePair(j) => TraceStatus::Infeasible(*j),
            PointStatus::SolverFailed => TraceStatus::Failed,
        }
    }
}

/// Proposal for one survey point, already shifted back to original
/// coordinates. On failure `point` stays at the input survey point.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub point: DVector<f64>,
    /// In constraint order (the geometry's `constraint_sources`).
    pub multipliers: DVector<f64>,
    pub status: PointStatus,
    pub all_tight: bool,
    pub solver_path: Option<SolverPath>,
}

/// What the driver does when a subproblem reports infeasibility or a solver
/// failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Stop the run and return the partial trace.
    Halt,
    /// Replace the failed point's update with the unconstrained gradient
    /// step and keep going.
    GdFallback,
}

/// Driver configuration. `step_control_l` is the inverse step size and the
/// quadratic constraint curvature; it has no default and is typically the
/// objective's smoothness constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub step_control_l: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Stop once the survey displacement falls below this; zero disables.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    /// Keep a point unchanged unless its proposed update strictly decreases
    /// the objective.
    #[serde(default)]
    pub use_acceptance_rule: bool,
    #[serde(default = "default_true")]
    pub allow_dykstra_fallback: bool,
    #[serde(default = "default_policy")]
    pub on_infeasible: InfeasiblePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dykstra_tol: Option<f64>,
}

fn default_max_iterations() -> usize {
    200
}

fn default_stop_tol() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

fn default_policy() -> InfeasiblePolicy {
    InfeasiblePolicy::Halt
}

impl RunConfig {
    pub fn new(step_control_l: f64) -> Self {
        Self {
            step_control_l,
            max_iterations: default_max_iterations(),
            stop_tol: default_stop_tol(),
            use_acceptance_rule: false,
            allow_dykstra_fallback: true,
            on_infeasible: default_policy(),
            dykstra_tol: None,
        }
    }

    fn mbp_options(&self) -> MbpOptions {
        let mut dykstra = DykstraConfig::default();
        if let Some(tol) = self.dykstra_tol {
            dykstra.tol = tol;
        }
        MbpOptions {
            allow_dykstra_fallback: self.allow_dykstra_fallback,
            dykstra,
        }
    }
}

/// Solve one assembled subproblem. Negative squared radii beyond tolerance
/// mark the pair infeasible; small negatives are clamped to zero. The
/// constrained solve runs in shifted coordinates and the result is shifted
/// back.
pub fn solve_subproblem(geometry: &SubproblemGeometry, config: &RunConfig) -> SubproblemSolution {
    let m = geometry.squared_radii.len();
    let mut radii = geometry.squared_radii.clone();
    for (col, r) in radii.iter_mut().enumerate() {
        if *r < -RADIUS_FEAS_TOL {
            return SubproblemSolution {
                point: geometry.shift.clone(),
                multipliers: DVector::zeros(0),
                status: PointStatus::InfeasiblePair(geometry.constraint_sources[col]),
                all_tight: false,
                solver_path: None,
            };
        }
        if *r < 0.0 {
            *r = 0.0;
        }
    }
    let solve = BallSpec::new(geometry.shifted_centers.clone(), radii)
        .and_then(|balls| MbpParameters::new(geometry.target.clone(), balls))
        .and_then(|params| mbp::solve_inequality_mbp_with(&params, &config.mbp_options()));
    match solve {
        Ok(solution) => SubproblemSolution {
            point: solution.x + &geometry.shift,
            multipliers: solution.multipliers,
            status: PointStatus::Solved,
            all_tight: solution.all_tight || m == 0,
            solver_path: Some(solution.solver_path),
        },
        Err(err) => {
            log::debug!("subproblem {} failed: {err}", geometry.index);
            SubproblemSolution {
                point: geometry.shift.clone(),
                multipliers: DVector::zeros(0),
                status: PointStatus::SolverFailed,
                all_tight: false,
                solver_path: None,
            }
        }
    }
}

/// Result of one full iteration: all `k` subproblems solved against the
/// same frozen input survey.
#[derive(Debug, Clone)]
pub struct IterationResult {
    pub new_survey: Survey,
    pub statuses: Vec<PointStatus>,
    pub multipliers: Vec<DVector<f64>>,
    pub accepted: Vec<bool>,
    pub step_sizes: Vec<f64>,
    pub all_tight: Vec<bool>,
    pub solver_paths: Vec<Option<SolverPath>>,
}

impl IterationResult {
    pub fn all_solved(&self) -> bool {
        self.statuses.iter().all(PointStatus::is_solved)
    }
}

/// One survey descent iteration. Every subproblem reads the same input
/// survey; there is no sequential update within an iteration. Failed points
/// either keep their position (`Halt`) or take the plain gradient step
/// (`GdFallback`). With the acceptance rule on, a point moves only if the
/// proposal strictly decreases its objective value.
pub fn iterate(
    survey: &Survey,
    oracle: &dyn FirstOrderOracle,
    config: &RunConfig,
) -> Result<IterationResult> {
    let k = survey.num_points();
    let n = survey.dim();
    let mut statuses = Vec::with_capacity(k);
    let mut multipliers = Vec::with_capacity(k);
    let mut accepted = Vec::with_capacity(k);
    let mut step_sizes = Vec::with_capacity(k);
    let mut all_tight = Vec::with_capacity(k);
    let mut solver_paths = Vec::with_capacity(k);
    let mut new_points = DMatrix::zeros(n, k);
    let mut new_values = DVector::zeros(k);
    let mut new_gradients = DMatrix::zeros(n, k);

    for i in 0..k {
        let geometry = assemble_subproblem(survey, i, config.step_control_l)?;
        let mut solution = solve_subproblem(&geometry, config);
        if !solution.status.is_solved() && config.on_infeasible == InfeasiblePolicy::GdFallback {
            solution.point = &geometry.shift + &geometry.target;
        }

        let moved = (&solution.point - survey.point(i)).norm() > 0.0;
        let (point, value, gradient, keep) = if moved {
            let eval = oracle.evaluate(&solution.point)?;
            if config.use_acceptance_rule && eval.value >= survey.value(i) {
                (survey.point(i), survey.value(i), survey.gradient(i), false)
            } else {
                (solution.point.clone(), eval.value, eval.gradient, true)
            }
        } else {
            (survey.point(i), survey.value(i), survey.gradient(i), false)
        };

        step_sizes.push((&point - survey.point(i)).norm());
        new_points.column_mut(i).copy_from(&point);
        new_values[i] = value;
        new_gradients.column_mut(i).copy_from(&gradient);
        statuses.push(solution.status);
        multipliers.push(solution.multipliers);
        accepted.push(keep);
        all_tight.push(solution.all_tight);
        solver_paths.push(solution.solver_path);
    }

    Ok(IterationResult {
        new_survey: Survey::from_parts(new_points, new_values, new_gradients)?,
        statuses,
        multipliers,
        accepted,
        step_sizes,
        all_tight,
        solver_paths,
    })
}

/// Repeat [`iterate`] until the iteration budget is spent, the survey
/// displacement drops below `stop_tol`, or a failure under the `Halt`
/// policy. The returned trace records the initial survey and every
/// iteration's outcome.
pub fn run(
    initial: Survey,
    oracle: &dyn FirstOrderOracle,
    config: &RunConfig,
) -> Result<RunTrace> {
    let k = initial.num_points();
    if k == 0 {
        return Err(Error::InvalidInput("empty survey".into()));
    }
    for i in 0..k {
        if !initial.value(i).is_finite() {
            return Err(Error::Numeric(format!("non-finite value at survey point {i}")));
        }
        for j in (i + 1)..k {
            if (initial.point(i) - initial.point(j)).norm() == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "survey points {i} and {j} coincide"
                )));
            }
        }
    }
    debug_assert!(initial.is_consistent_with(oracle));

    let mut entries = vec![TraceEntry::initial(initial)];
    let mut stop_reason = StopReason::MaxIterations;
    for t in 0..config.max_iterations {
        let current = &entries[entries.len() - 1].survey;
        let result = iterate(current, oracle, config)?;
        let displacement = result.new_survey.displacement(current);
        let failed = !result.all_solved();
        entries.push(TraceEntry {
            survey: result.new_survey,
            step_sizes: result.step_sizes,
            statuses: result
                .statuses
                .iter()
                .map(PointStatus::as_trace_status)
                .collect(),
            multipliers: result.multipliers,
            all_tight: result.all_tight,
            accepted: result.accepted,
        });
        if failed && config.on_infeasible == InfeasiblePolicy::Halt {
            stop_reason = StopReason::InfeasibleHalt { iteration: t + 1 };
            break;
        }
        if displacement < config.stop_tol {
            stop_reason = StopReason::Converged { displacement };
            break;
        }
        log::debug!(
            "iteration {}: displacement {displacement:.3e}, min value {:.6e}",
            t + 1,
            entries[entries.len() - 1].survey.values().min()
        );
    }
    Ok(RunTrace { entries, stop_reason })
}

/// Per-point validity against a white-box max-of-smooth objective: point
/// `i` is valid when its argmax component is strictly maximal (within
/// [`STRICT_TOL`]) and no other survey point claims the same component.
pub fn check_validity(survey: &Survey, objective: &MaxOfSmoothObjective) -> Result<Vec<bool>> {
    let k = survey.num_points();
    if objective.num_components() != k {
        return Err(Error::InvalidInput(format!(
            "survey has {k} points but the objective has {} components",
            objective.num_components()
        )));
    }
    let mut assignment = Vec::with_capacity(k);
    let mut strict = Vec::with_capacity(k);
    for i in 0..k {
        let s_i = survey.point(i);
        let values: Vec<f64> = (0..k)
            .map(|c| objective.evaluate_component(c, &s_i).map(|e| e.value))
            .collect::<Result<_>>()?;
        let top = (0..k)
            .max_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"))
            .expect("non-empty");
        let is_strict = (0..k).all(|c| {
            c == top || values[top] - values[c] > STRICT_TOL * (1.0 + values[top].abs())
        });
        assignment.push(top);
        strict.push(is_strict);
    }
    Ok((0..k)
        .map(|i| strict[i] && (0..k).all(|j| j == i || assignment[j] != assignment[i]))
        .collect())
}
