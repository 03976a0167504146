//! Theory diagnostics: critical weights at the minimizer, the projector
//! onto the subspace of smooth directions, the reference step that survey
//! updates approximate, and convergence-rate measurement against the
//! contraction bound `1 - lambda_min * delta / L`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{MaxOfSmoothObjective, SmoothComponent};
use crate::survey::Survey;
use crate::trace::RunTrace;

/// Relative rank threshold for gradient-difference matrices.
const RANK_TOL: f64 = 1e-10;
/// Consistency residual certifying that the weight system is solvable.
const WEIGHT_RESIDUAL_TOL: f64 = 1e-10;
/// Distances below this are double-precision noise and excluded from rate
/// statistics.
pub const RATE_FLOOR: f64 = 1e-11;
/// Minimum usable iterations for a rate report.
const MIN_RATE_ITERATIONS: usize = 10;

/// The unique convex-combination weights that make the component gradients
/// at the minimizer sum to zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalWeights {
    pub weights: DVector<f64>,
    /// Residual of the stacked stationarity-plus-normalization system.
    pub residual: f64,
}

impl CriticalWeights {
    pub fn min_weight(&self) -> f64 {
        self.weights.min()
    }

    /// All weights strictly positive, i.e. zero lies in the relative
    /// interior of the subdifferential.
    pub fn is_nondegenerate(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }
}

/// Solve `[G; 1'] w = [0; 1]` by least squares for the gradients-at-minimum
/// matrix `G` (n x k). A residual above tolerance means no convex
/// combination of the gradients vanishes: the minimizer is degenerate.
pub fn critical_weights(gradients_at_min: &DMatrix<f64>) -> Result<CriticalWeights> {
    let n = gradients_at_min.nrows();
    let k = gradients_at_min.ncols();
    if k == 0 {
        return Err(Error::InvalidInput("no gradients".into()));
    }
    let mut stacked = DMatrix::zeros(n + 1, k);
    stacked.view_mut((0, 0), (n, k)).copy_from(gradients_at_min);
    stacked.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    let svals = stacked.clone().singular_values();
    let (smax, smin) = svals
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    if smin.is_nan() || smin <= RANK_TOL * smax.max(1.0) {
        return Err(Error::DegenerateGeometry(
            "gradients at the minimizer are affinely dependent".into(),
        ));
    }
    let qr = stacked.clone().qr();
    let weights = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &rhs))
        .ok_or_else(|| Error::DegenerateGeometry("singular triangular factor".into()))?;
    let residual = (&stacked * &weights - rhs).norm();
    if residual > WEIGHT_RESIDUAL_TOL {
        return Err(Error::DegenerateMinimizer { residual });
    }
    let report = CriticalWeights { weights, residual };
    if !report.is_nondegenerate() {
        log::warn!(
            "nondegeneracy violated: min critical weight {:.3e} <= 0",
            report.min_weight()
        );
    }
    Ok(report)
}

/// Orthogonal projector onto the directions where all component gradients
/// at the minimizer agree (the smooth directions), anchored at the
/// minimizer for affine use.
#[derive(Debug, Clone)]
pub struct UProjector {
    matrix: DMatrix<f64>,
    base: DVector<f64>,
}

impl UProjector {
    /// `gradients_at_min` is n x k; the projector annihilates the span of
    /// pairwise gradient differences. For k = 1 it is the identity.
    pub fn new(gradients_at_min: &DMatrix<f64>, base: DVector<f64>) -> Result<Self> {
        let n = gradients_at_min.nrows();
        let k = gradients_at_min.ncols();
        if base.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: base.len() });
        }
        if k == 0 {
            return Err(Error::InvalidInput("no gradients".into()));
        }
        if k == 1 {
            return Ok(Self { matrix: DMatrix::identity(n, n), base });
        }
        let first = gradients_at_min.column(0);
        let mut diffs = DMatrix::zeros(n, k - 1);
        for j in 1..k {
            diffs
                .column_mut(j - 1)
                .copy_from(&(gradients_at_min.column(j) - first));
        }
        let svals = diffs.clone().singular_values();
        let (smax, smin) = svals
            .iter()
            .fold((0.0_f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
        if smin.is_nan() || smin <= RANK_TOL * smax.max(1.0) {
            return Err(Error::DegenerateGeometry(
                "gradient differences are rank-deficient".into(),
            ));
        }
        let q = diffs.qr().q();
        let matrix = DMatrix::identity(n, n) - &q * q.transpose();
        Ok(Self { matrix, base })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    /// `P v` on directions.
    pub fn project_linear(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `base + P (x - base)` on points.
    pub fn project_affine(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.base + &self.matrix * (x - &self.base)
    }
}

/// The step that survey updates approximate to second order: a convex
/// combination of smooth-subspace-projected gradient steps on the
/// components,
///
/// ```text
/// s~_i = proj[s_i - (w_i/L) grad f_i(s_i)] / (2 - w_i)
///      + sum_{j != i} w_j proj[s_j - (1/L) grad f_j(s_j)] / (2 - w_i)
/// ```
///
/// Survey point `i` must correspond to component `i`. Requires a known
/// minimizer on the objective for the affine projection base.
pub fn reference_step(
    survey: &Survey,
    objective: &MaxOfSmoothObjective,
    weights: &CriticalWeights,
    step_control_l: f64,
) -> Result<Vec<DVector<f64>>> {
    let k = survey.num_points();
    if objective.num_components() != k || weights.weights.len() != k {
        return Err(Error::InvalidInput(
            "survey, objective, and weights must share one size".into(),
        ));
    }
    let minimizer = objective
        .known_minimizer()
        .ok_or(Error::MissingMetadata("known minimizer"))?
        .clone();
    let mut gradients_at_min = DMatrix::zeros(survey.dim(), k);
    for c in 0..k {
        gradients_at_min
            .column_mut(c)
            .copy_from(&objective.evaluate_component(c, &minimizer)?.gradient);
    }
    let projector = UProjector::new(&gradients_at_min, minimizer)?;

    // Projected gradient steps: own weight and step w_i/L for the home
    // component, full step 1/L for the others.
    let mut home_steps = Vec::with_capacity(k);
    let mut full_steps = Vec::with_capacity(k);
    for j in 0..k {
        let s_j = survey.point(j);
        let g_j = objective.evaluate_component(j, &s_j)?.gradient;
        home_steps.push(projector.project_affine(&(&s_j - &g_j * (weights.weights[j] / step_control_l))));
        full_steps.push(projector.project_affine(&(&s_j - &g_j * (1.0 / step_control_l))));
    }

    let mut reference = Vec::with_capacity(k);
    for (i, home) in home_steps.iter().enumerate() {
        let denom = 2.0 - weights.weights[i];
        let mut s_tilde = home / denom;
        for (j, full) in full_steps.iter().enumerate() {
            if j != i {
                s_tilde += full * (weights.weights[j] / denom);
            }
        }
        reference.push(s_tilde);
    }
    Ok(reference)
}

/// Check the projected gradient-step contraction for one smooth component:
/// both the squared-distance inequality and the function-value inequality
/// at factor `1 - delta/L~`, within `slack = 1e-12`.
pub fn projected_gd_contraction_check(
    component: &SmoothComponent,
    projector: &UProjector,
    s: &DVector<f64>,
    effective_l: f64,
) -> Result<bool> {
    let delta = component
        .strong_convexity()
        .ok_or(Error::MissingMetadata("strong convexity constant"))?;
    if let Some(smoothness) = component.smoothness() {
        if effective_l < smoothness {
            return Err(Error::InvalidInput(format!(
                "effective L {effective_l} below the component's smoothness {smoothness}"
            )));
        }
    }
    let slack = 1e-12;
    let base = projector.base();
    let (_, gradient) = component.evaluate(s);
    let stepped = projector.project_affine(&(s - gradient * (1.0 / effective_l)));
    let dist_sq_before = (s - base).norm_squared();
    let dist_sq_after = (&stepped - base).norm_squared();
    let factor = 1.0 - delta / effective_l;
    let distance_ok = dist_sq_after <= factor * dist_sq_before + slack;

    let (value_after, _) = component.evaluate(&stepped);
    let (value_min, _) = component.evaluate(base);
    let value_ok =
        value_after - value_min <= 0.5 * effective_l * factor * dist_sq_before + slack;
    Ok(distance_ok && value_ok)
}

/// Curvature and weight constants entering the rate bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub delta: f64,
    pub smoothness_l: f64,
    pub lambda_min: f64,
}

impl TheoryConstants {
    /// `1 - lambda_min * delta / L`, the squared-distance contraction bound.
    pub fn contraction_bound(&self) -> f64 {
        1.0 - self.lambda_min * self.delta / self.smoothness_l
    }

    /// `1.1 * (5 L / lambda_min) (1 - lambda_min delta / L)`: any constant
    /// strictly above the infimum works, we take a 10% inflation.
    pub fn strong_rlinear_constant(&self) -> f64 {
        1.1 * (5.0 * self.smoothness_l / self.lambda_min) * self.contraction_bound()
    }
}

/// Measured convergence rates of a run against the theoretical bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    /// Squared-distance ratios for consecutive above-floor iterations.
    pub ratios: Vec<f64>,
    /// Geometric mean of the tail half of `ratios`.
    pub fitted_ratio: f64,
    pub theoretical_bound: f64,
    /// Least-squares slope of log10(value gap) per iteration.
    pub value_rate_slope: f64,
    pub strong_rlinear_constant: f64,
    /// Whether `max_i f(s_i^{t+1}) - f* <= K * dist(S^t)^2` held on the tail.
    pub strong_rlinear_holds: bool,
    /// False when the measured tail ratio shows no contraction.
    pub converging: bool,
    pub floor: f64,
    pub iterations_used: usize,
    pub tail_start: usize,
}

/// Compute per-iteration squared-distance ratios toward the minimizer, fit
/// the tail rate, and check the strong R-linear value bound. `min_value` is
/// the objective value at the minimizer.
pub fn rate_report(
    trace: &RunTrace,
    minimizer: &DVector<f64>,
    min_value: f64,
    constants: &TheoryConstants,
) -> Result<RateReport> {
    let total = trace.num_iterations();
    let distances: Vec<f64> = (0..=total)
        .map(|t| trace.survey_at(t).distance_to_point(minimizer))
        .collect();
    let usable: Vec<usize> = (0..total)
        .filter(|&t| distances[t] > RATE_FLOOR && distances[t + 1] > RATE_FLOOR)
        .collect();
    if usable.len() < MIN_RATE_ITERATIONS {
        return Err(Error::TraceTooShort {
            len: usable.len(),
            min: MIN_RATE_ITERATIONS,
        });
    }

    let ratios: Vec<f64> = usable
        .iter()
        .map(|&t| (distances[t + 1] * distances[t + 1]) / (distances[t] * distances[t]))
        .collect();
    let tail_start = ratios.len() / 2;
    let tail = &ratios[tail_start..];
    let fitted_ratio = (tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp();

    // Value-gap slope in log10 per iteration, over the usable window.
    let mut points: Vec<(f64, f64)> = Vec::new();
    for &t in &usable {
        let gap = trace.survey_at(t + 1).values().max() - min_value;
        if gap > 0.0 {
            points.push(((t + 1) as f64, gap.log10()));
        }
    }
    let value_rate_slope = if points.len() >= 2 {
        let m = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (m * sxy - sx * sy) / (m * sxx - sx * sx)
    } else {
        0.0
    };

    let kbar = constants.strong_rlinear_constant();
    let strong_rlinear_holds = usable[tail_start..].iter().all(|&t| {
        let gap = trace.survey_at(t + 1).values().max() - min_value;
        gap <= kbar * distances[t] * distances[t] + 1e-15
    });

    Ok(RateReport {
        fitted_ratio,
        theoretical_bound: constants.contraction_bound(),
        value_rate_slope,
        strong_rlinear_constant: kbar,
        strong_rlinear_holds,
        converging: fitted_ratio < 1.0 - 1e-9,
        floor: RATE_FLOOR,
        iterations_used: usable.len(),
        tail_start,
        ratios,
    })
}
