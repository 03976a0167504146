//! Warm-start iterate generation and survey initialization heuristics.
//!
//! A dense quasi-Newton loop with a weak Wolfe line search produces a trail
//! of (almost always differentiable) iterates. The SVD of their centered
//! gradients estimates how many smooth pieces meet at the minimizer, and a
//! greedy volume heuristic picks that many iterates whose gradients are
//! robustly affinely independent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::FirstOrderOracle;
use crate::survey::Survey;
use crate::trace::{write_csv_rows, TraceRow, TraceStatus};

/// Sufficient-decrease constant of the weak Wolfe conditions.
pub const WOLFE_C1: f64 = 1e-4;
/// Curvature constant of the weak Wolfe conditions.
pub const WOLFE_C2: f64 = 0.5;
/// Default relative cut for the gradient-rank estimate.
pub const DEFAULT_RANK_REL_TOL: f64 = 1e-3;

const MAX_LINE_SEARCH_STEPS: usize = 60;
const MAX_BACKTRACKS: usize = 50;

/// Record of a warm-start run: one entry per accepted step, starting point
/// kept separately. Gradients are stored for every entry but only
/// meaningful where the differentiable flag is set.
#[derive(Debug, Clone)]
pub struct WarmStartTrace {
    pub start: DVector<f64>,
    pub iterates: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub gradients: Vec<DVector<f64>>,
    pub differentiable_flags: Vec<bool>,
    /// Set when the line search gave up before the iteration budget.
    pub truncated: bool,
}

impl WarmStartTrace {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::with_capacity(self.len());
        let mut prev = self.start.clone();
        for t in 0..self.len() {
            rows.push(TraceRow {
                iter: t,
                point_index: 0,
                x: self.iterates[t].iter().copied().collect(),
                value: self.values[t],
                grad_norm: self.gradients[t].norm(),
                step_size: (&self.iterates[t] - &prev).norm(),
                status: TraceStatus::Warmstart,
                tight: false,
                min_multiplier: None,
            });
            prev = self.iterates[t].clone();
        }
        rows
    }

    /// Same CSV schema as a run trace, status column `warmstart`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_csv_rows(writer, self.start.len(), &self.rows())
    }

    pub fn write_csv_path<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }
}

/// Weak Wolfe line search by bisection bracketing: expand while the
/// curvature condition fails, bisect once an upper bracket exists.
fn weak_wolfe_step(
    oracle: &dyn FirstOrderOracle,
    x: &DVector<f64>,
    value: f64,
    slope: f64,
    direction: &DVector<f64>,
) -> Result<Option<f64>> {
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut t = 1.0_f64;
    for _ in 0..MAX_LINE_SEARCH_STEPS {
        let candidate = x + direction * t;
        let eval = oracle.evaluate(&candidate)?;
        if !eval.value.is_finite() || eval.value > value + WOLFE_C1 * t * slope {
            hi = t;
        } else if eval.gradient.dot(direction) < WOLFE_C2 * slope {
            lo = t;
        } else {
            return Ok(Some(t));
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo.max(t) };
    }
    Ok(None)
}

/// Armijo backtracking used when the Wolfe search fails on a steepest
/// descent direction.
fn backtracking_step(
    oracle: &dyn FirstOrderOracle,
    x: &DVector<f64>,
    value: f64,
    slope: f64,
    direction: &DVector<f64>,
) -> Result<Option<f64>> {
    let mut t = 1.0_f64;
    for _ in 0..MAX_BACKTRACKS {
        let eval = oracle.evaluate(&(x + direction * t))?;
        if eval.value.is_finite() && eval.value <= value + WOLFE_C1 * t * slope {
            return Ok(Some(t));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Run `n_iters` dense quasi-Newton steps from `x0`, recording every
/// accepted iterate. Falls back to a backtracked steepest-descent step when
/// the Wolfe search fails; a second failure truncates the trace with a
/// flag.
pub fn quasi_newton_warmstart(
    oracle: &dyn FirstOrderOracle,
    x0: &DVector<f64>,
    n_iters: usize,
) -> Result<WarmStartTrace> {
    let n = x0.len();
    let mut trace = WarmStartTrace {
        start: x0.clone(),
        iterates: Vec::with_capacity(n_iters),
        values: Vec::with_capacity(n_iters),
        gradients: Vec::with_capacity(n_iters),
        differentiable_flags: Vec::with_capacity(n_iters),
        truncated: false,
    };
    let mut x = x0.clone();
    let mut eval = oracle.evaluate(&x)?;
    let mut inv_hessian = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;

    for _ in 0..n_iters {
        if eval.gradient.norm() == 0.0 {
            break;
        }
        let mut direction = -(&inv_hessian * &eval.gradient);
        let mut slope = eval.gradient.dot(&direction);
        if slope >= 0.0 {
            inv_hessian = DMatrix::identity(n, n);
            direction = -eval.gradient.clone();
            slope = eval.gradient.dot(&direction);
        }

        let step = match weak_wolfe_step(oracle, &x, eval.value, slope, &direction)? {
            Some(t) => Some((t, direction)),
            None => {
                let steepest = -eval.gradient.clone();
                let slope = eval.gradient.dot(&steepest);
                inv_hessian = DMatrix::identity(n, n);
                backtracking_step(oracle, &x, eval.value, slope, &steepest)?
                    .map(|t| (t, steepest))
            }
        };
        let Some((t, direction)) = step else {
            trace.truncated = true;
            break;
        };

        let x_next = &x + &direction * t;
        let eval_next = oracle.evaluate(&x_next)?;
        let s = &x_next - &x;
        let y = &eval_next.gradient - &eval.gradient;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                // Rescale the initial approximation to the secant pair's
                // curvature before the first update.
                inv_hessian *= sy / y.norm_squared();
                scaled = true;
            }
            // Standard inverse update: H <- (I - s y'/sy) H (I - y s'/sy) + s s'/sy.
            let rho = 1.0 / sy;
            let hy = &inv_hessian * &y;
            let yhy = y.dot(&hy);
            inv_hessian += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        trace.iterates.push(x_next.clone());
        trace.values.push(eval_next.value);
        trace.gradients.push(eval_next.gradient.clone());
        trace.differentiable_flags.push(eval_next.differentiable_hint);
        x = x_next;
        eval = eval_next;
    }
    Ok(trace)
}

/// Estimate the survey size from gradient dimensionality: one plus the
/// number of singular values of the column-centered gradient matrix above
/// `rel_tol` times the largest, clamped to `[1, count]`.
pub fn estimate_survey_size(gradients: &[DVector<f64>], rel_tol: f64) -> Result<usize> {
    if gradients.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two gradients to estimate dimensionality".into(),
        ));
    }
    let n = gradients[0].len();
    let count = gradients.len();
    let mut mean = DVector::zeros(n);
    for g in gradients {
        if g.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: g.len() });
        }
        mean += g;
    }
    mean /= count as f64;
    let mut centered = DMatrix::zeros(n, count);
    for (j, g) in gradients.iter().enumerate() {
        centered.column_mut(j).copy_from(&(g - &mean));
    }
    let svals = centered.singular_values();
    let top = svals.iter().fold(0.0_f64, |hi, s| hi.max(*s));
    // Centering identical gradients leaves rounding noise, not exact zeros.
    let scale = gradients.iter().map(|g| g.norm()).fold(0.0_f64, f64::max);
    let noise_floor = 1e-13 * (1.0 + scale);
    let rank = if top <= noise_floor {
        0
    } else {
        svals.iter().filter(|s| **s > rel_tol * top).count()
    };
    Ok((rank + 1).clamp(1, count))
}

/// Warm start, size estimate, and survey selection chained together.
#[derive(Debug, Clone)]
pub struct WarmStartPipeline {
    pub trace: WarmStartTrace,
    pub estimated_size: usize,
    pub survey: Survey,
}

/// Run the full initialization pipeline: quasi-Newton iterates from `x0`,
/// a survey-size estimate from the trailing window of differentiable
/// gradients, and the greedy selection of that many iterates.
///
/// Early iterates sit far from the minimizer and their gradients carry
/// directions unrelated to the local structure, so only the trailing third
/// (at least four) of the differentiable gradients feed the estimate.
/// `variance_rel_tol` is a fraction of explained variance; singular values
/// are amplitudes, so the rank cut uses its square root.
pub fn warmstart_pipeline(
    oracle: &dyn FirstOrderOracle,
    x0: &DVector<f64>,
    n_iters: usize,
    variance_rel_tol: f64,
) -> Result<WarmStartPipeline> {
    let trace = quasi_newton_warmstart(oracle, x0, n_iters)?;
    let differentiable: Vec<usize> = (0..trace.len())
        .filter(|&t| trace.differentiable_flags[t])
        .collect();
    if differentiable.len() < 2 {
        return Err(Error::InvalidInput(
            "warm start produced fewer than two differentiable iterates".into(),
        ));
    }
    let window = differentiable.len().div_ceil(3).max(4).min(differentiable.len());
    let tail: Vec<DVector<f64>> = differentiable[differentiable.len() - window..]
        .iter()
        .map(|&t| trace.gradients[t].clone())
        .collect();
    let estimated_size = estimate_survey_size(&tail, variance_rel_tol.sqrt())?;
    let survey = select_survey(&trace, estimated_size)?;
    Ok(WarmStartPipeline {
        trace,
        estimated_size,
        survey,
    })
}

/// Smallest singular value of the gradient-difference matrix of a candidate
/// selection (differences against the first member).
fn independence_margin(gradients: &[&DVector<f64>]) -> f64 {
    if gradients.len() < 2 {
        return f64::INFINITY;
    }
    let n = gradients[0].len();
    let mut diffs = DMatrix::zeros(n, gradients.len() - 1);
    for (col, g) in gradients[1..].iter().enumerate() {
        diffs.column_mut(col).copy_from(&(*g - gradients[0]));
    }
    diffs
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |lo, s| lo.min(*s))
}

/// Greedily select `k` differentiable iterates whose gradient differences
/// are as far from rank deficiency as possible; among near-ties the later
/// (closer to optimum) iterate wins. The selection is returned in trace
/// order.
pub fn select_survey(trace: &WarmStartTrace, k: usize) -> Result<Survey> {
    let candidates: Vec<usize> = (0..trace.len())
        .filter(|&t| trace.differentiable_flags[t])
        .collect();
    if candidates.len() < k || k == 0 {
        return Err(Error::InvalidInput(format!(
            "requested {k} survey points but only {} differentiable iterates exist",
            candidates.len()
        )));
    }

    let mut selected: Vec<usize> = if candidates.len() == k {
        candidates
    } else {
        let mut chosen = vec![*candidates.last().expect("non-empty")];
        while chosen.len() < k {
            let mut best: Option<(usize, f64)> = None;
            for &c in candidates.iter().rev() {
                if chosen.contains(&c) {
                    continue;
                }
                let grads: Vec<&DVector<f64>> = chosen
                    .iter()
                    .chain(std::iter::once(&c))
                    .map(|&t| &trace.gradients[t])
                    .collect();
                let margin = independence_margin(&grads);
                match best {
                    Some((_, score)) if margin <= score * (1.0 + 1e-9) => {}
                    _ => best = Some((c, margin)),
                }
            }
            chosen.push(best.expect("candidates remain").0);
        }
        chosen
    };
    selected.sort_unstable();

    let n = trace.start.len();
    let mut points = DMatrix::zeros(n, k);
    let mut values = DVector::zeros(k);
    let mut gradients = DMatrix::zeros(n, k);
    for (i, &t) in selected.iter().enumerate() {
        points.column_mut(i).copy_from(&trace.iterates[t]);
        values[i] = trace.values[t];
        gradients.column_mut(i).copy_from(&trace.gradients[t]);
    }
    Survey::from_parts(points, values, gradients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{hmax, hme, MaxOfSmoothObjective, SmoothComponent};
    use nalgebra::dvector;

    fn diag_quadratic() -> MaxOfSmoothObjective {
        // f(x, y) = (x^2 + 10 y^2) / 2
        let f = SmoothComponent::new(|x: &DVector<f64>| {
            (
                0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1]),
                DVector::from_vec(vec![x[0], 10.0 * x[1]]),
            )
        });
        MaxOfSmoothObjective::new(2, vec![f]).unwrap()
    }

    #[test]
    fn quasi_newton_solves_an_anisotropic_quadratic() {
        let obj = diag_quadratic();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 1.0], 20).unwrap();
        assert!(!trace.truncated);
        assert!(trace.final_value().unwrap() <= 1e-12, "final {:?}", trace.final_value());
    }

    #[test]
    fn warmstart_on_hmax_decreases_monotonically() {
        let obj = hmax();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 0.5], 30).unwrap();
        let mut prev = obj.evaluate(&dvector![1.0, 0.5]).unwrap().value;
        for &v in &trace.values {
            assert!(v <= prev, "value increased: {v} > {prev}");
            prev = v;
        }
        assert!(trace.final_value().unwrap() <= 1e-6, "final {:?}", trace.final_value());
    }

    #[test]
    fn warmstart_on_hme_stays_finite_and_short() {
        let obj = hme();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 1.0, 1.0, 1.0], 20).unwrap();
        assert!(trace.len() <= 20);
        assert!(trace.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn survey_size_from_two_gradient_clusters() {
        let gradients = vec![
            dvector![1.0, 0.01],
            dvector![-1.0, 0.02],
            dvector![0.99, -0.015],
            dvector![-1.01, 0.005],
        ];
        assert_eq!(estimate_survey_size(&gradients, 1e-1).unwrap(), 2);
    }

    #[test]
    fn survey_size_of_identical_gradients_is_one() {
        let g = dvector![0.3, -0.7];
        assert_eq!(estimate_survey_size(&[g.clone(), g.clone(), g], 1e-3).unwrap(), 1);
    }

    #[test]
    fn survey_size_on_ellipse_boundary_gradients() {
        // Gradients sweep the boundary of a 2-d ellipse: centered rank 2.
        let gradients: Vec<DVector<f64>> = (0..12)
            .map(|i| {
                let phi = i as f64 * std::f64::consts::TAU / 12.0;
                dvector![phi.cos(), 0.7 * phi.sin()]
            })
            .collect();
        assert_eq!(estimate_survey_size(&gradients, 1e-3).unwrap(), 3);
    }

    #[test]
    fn survey_size_invariant_to_order_and_duplicates() {
        let gradients = vec![
            dvector![1.0, 0.0],
            dvector![-1.0, 0.1],
            dvector![0.9, 0.05],
        ];
        let base = estimate_survey_size(&gradients, 1e-3).unwrap();
        let mut reversed = gradients.clone();
        reversed.reverse();
        assert_eq!(estimate_survey_size(&reversed, 1e-3).unwrap(), base);
        let mut duplicated = gradients.clone();
        duplicated.push(gradients[0].clone());
        assert_eq!(estimate_survey_size(&duplicated, 1e-3).unwrap(), base);
    }

    #[test]
    fn too_few_gradients_is_an_input_error() {
        assert!(estimate_survey_size(&[dvector![1.0]], 1e-3).is_err());
    }

    #[test]
    fn selection_mixes_hmax_gradient_clusters() {
        let obj = hmax();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 0.5], 30).unwrap();
        let survey = select_survey(&trace, 2).unwrap();
        let s0 = survey.gradient(0)[0].signum();
        let s1 = survey.gradient(1)[0].signum();
        assert_ne!(s0, s1, "selected gradients must come from both pieces");
    }

    #[test]
    fn selection_edge_cases() {
        let obj = diag_quadratic();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 1.0], 8).unwrap();
        let last_diff = (0..trace.len())
            .rev()
            .find(|&t| trace.differentiable_flags[t])
            .unwrap();
        // k = 1 picks the last differentiable iterate.
        let one = select_survey(&trace, 1).unwrap();
        assert_eq!(one.point(0), trace.iterates[last_diff]);
        // k = number of candidates returns everything in order.
        let count = trace.differentiable_flags.iter().filter(|f| **f).count();
        let all = select_survey(&trace, count).unwrap();
        assert_eq!(all.num_points(), count);
        let mut prev = -1.0;
        for i in 0..count {
            let v = trace
                .iterates
                .iter()
                .position(|p| p == &all.point(i))
                .unwrap() as f64;
            assert!(v > prev, "selection out of trace order");
            prev = v;
        }
        // Too many requested is an error.
        assert!(select_survey(&trace, trace.len() + 1).is_err());
    }

    #[test]
    fn pipeline_estimates_two_pieces_for_hmax() {
        let obj = hmax();
        let pipeline = warmstart_pipeline(&obj, &dvector![1.0, 0.5], 30, 1e-3).unwrap();
        assert_eq!(pipeline.estimated_size, 2);
        assert_eq!(pipeline.survey.num_points(), 2);
    }

    #[test]
    fn warmstart_csv_uses_warmstart_status() {
        let obj = diag_quadratic();
        let trace = quasi_newton_warmstart(&obj, &dvector![1.0, 1.0], 5).unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("iter,point_index,x0,x1,value"));
        assert!(lines[1..].iter().all(|l| l.contains(",warmstart,")));
    }
}
