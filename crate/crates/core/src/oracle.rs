//! First-order oracle abstraction and built-in test objectives.
//!
//! Everything downstream of the driver sees an objective only through
//! [`FirstOrderOracle`]: a value and a gradient at a query point. The
//! built-ins additionally expose white-box component access used by the
//! validity checks and the rate diagnostics, never by the solver itself.

mod builtins;

pub use builtins::{
    hellipse, hmax, hme, maxquad_from_file, maxquad_from_json, quadratic, EllipseNorm,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance deciding when a max-of-smooth evaluation sits on a tie
/// between its top two components and must be flagged non-differentiable.
pub const TIE_TOL: f64 = 1e-12;

/// Relative eigenvalue gap below which the top eigenvalue of an
/// [`AffineEigObjective`] is treated as repeated.
pub const EIG_GAP_TOL: f64 = 1e-10;

/// Value and gradient of an objective at one query point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// True when the evaluation point is believed smooth. At flagged points
    /// the gradient is a best-effort selection, not a derivative.
    pub differentiable_hint: bool,
}

/// Black-box objective evaluation: value and gradient at a point.
pub trait FirstOrderOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation>;

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

type EvalFn = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// One smooth component of a max-of-smooth objective.
#[derive(Clone)]
pub struct SmoothComponent {
    eval: Arc<EvalFn>,
    hessian: Option<Arc<HessFn>>,
    smoothness: Option<f64>,
    strong_convexity: Option<f64>,
}

impl SmoothComponent {
    pub fn new(eval: impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            hessian: None,
            smoothness: None,
            strong_convexity: None,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    /// Attach the curvature bounds `delta I <= H <= L I`.
    pub fn with_bounds(mut self, strong_convexity: f64, smoothness: f64) -> Result<Self> {
        if !(0.0..).contains(&strong_convexity) || !(0.0..).contains(&smoothness) {
            return Err(Error::InvalidInput(
                "curvature bounds must be non-negative".into(),
            ));
        }
        if strong_convexity > smoothness {
            return Err(Error::InvalidInput(format!(
                "strong convexity {strong_convexity} exceeds smoothness {smoothness}"
            )));
        }
        self.strong_convexity = Some(strong_convexity);
        self.smoothness = Some(smoothness);
        Ok(self)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.eval)(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }
}

impl std::fmt::Debug for SmoothComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothComponent")
            .field("smoothness", &self.smoothness)
            .field("strong_convexity", &self.strong_convexity)
            .finish_non_exhaustive()
    }
}

/// Pointwise maximum of finitely many smooth components.
#[derive(Debug, Clone)]
pub struct MaxOfSmoothObjective {
    dim: usize,
    components: Vec<SmoothComponent>,
    known_minimizer: Option<DVector<f64>>,
}

impl MaxOfSmoothObjective {
    pub fn new(dim: usize, components: Vec<SmoothComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("need at least one component".into()));
        }
        Ok(Self {
            dim,
            components,
            known_minimizer: None,
        })
    }

    pub fn with_minimizer(mut self, minimizer: DVector<f64>) -> Result<Self> {
        if minimizer.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: minimizer.len(),
            });
        }
        self.known_minimizer = Some(minimizer);
        Ok(self)
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, index: usize) -> Result<&SmoothComponent> {
        self.components.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.components.len(),
        })
    }

    pub fn known_minimizer(&self) -> Option<&DVector<f64>> {
        self.known_minimizer.as_ref()
    }

    /// White-box evaluation of component `index`; used by tests and
    /// diagnostics only, never by the solver.
    pub fn evaluate_component(&self, index: usize, x: &DVector<f64>) -> Result<Evaluation> {
        self.check_dim(x)?;
        let (value, gradient) = self.component(index)?.evaluate(x);
        Ok(Evaluation {
            value,
            gradient,
            differentiable_hint: true,
        })
    }

    /// Index of the maximizing component at `x`, lowest index on ties.
    pub fn argmax_component(&self, x: &DVector<f64>) -> Result<usize> {
        self.check_dim(x)?;
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let (v, _) = c.evaluate(x);
            if v > best_value {
                best_value = v;
                best = i;
            }
        }
        Ok(best)
    }

    /// Common curvature bounds `(delta, L)` across components, when every
    /// component carries metadata.
    pub fn curvature_bounds(&self) -> Option<(f64, f64)> {
        let mut delta = f64::INFINITY;
        let mut smooth = 0.0_f64;
        for c in &self.components {
            delta = delta.min(c.strong_convexity()?);
            smooth = smooth.max(c.smoothness()?);
        }
        Some((delta, smooth))
    }
}

impl FirstOrderOracle for MaxOfSmoothObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        self.check_dim(x)?;
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut second = f64::NEG_INFINITY;
        for c in &self.components {
            let (v, g) = c.evaluate(x);
            match &best {
                Some((bv, _)) if v <= *bv => second = second.max(v),
                _ => {
                    if let Some((bv, _)) = &best {
                        second = second.max(*bv);
                    }
                    best = Some((v, g));
                }
            }
        }
        let (value, gradient) = best.expect("at least one component");
        let tied = self.components.len() > 1 && (value - second) < TIE_TOL * (1.0 + value.abs());
        Ok(Evaluation {
            value,
            gradient,
            differentiable_hint: !tied,
        })
    }
}

/// Maximum eigenvalue of the symmetric matrix family `A(x) = B0 + sum_j x_j Bj`,
/// minus a constant shift.
#[derive(Debug, Clone)]
pub struct AffineEigObjective {
    base: DMatrix<f64>,
    coeffs: Vec<DMatrix<f64>>,
    shift: f64,
    known_minimizer: Option<DVector<f64>>,
}

impl AffineEigObjective {
    /// `matrices[0]` is the constant term, the rest pair with the coordinates
    /// of `x`. Inputs are symmetrized.
    pub fn new(matrices: Vec<DMatrix<f64>>, shift: f64) -> Result<Self> {
        if matrices.len() < 2 {
            return Err(Error::InvalidInput(
                "need a base matrix and at least one coefficient matrix".into(),
            ));
        }
        let d = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidInput(format!(
                    "all matrices must be {d}x{d}"
                )));
            }
        }
        let mut sym: Vec<DMatrix<f64>> = matrices
            .into_iter()
            .map(|m| (&m + m.transpose()) * 0.5)
            .collect();
        let base = sym.remove(0);
        Ok(Self {
            base,
            coeffs: sym,
            shift,
            known_minimizer: None,
        })
    }

    pub fn with_minimizer(mut self, minimizer: DVector<f64>) -> Result<Self> {
        if minimizer.len() != self.coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coeffs.len(),
                got: minimizer.len(),
            });
        }
        self.known_minimizer = Some(minimizer);
        Ok(self)
    }

    pub fn known_minimizer(&self) -> Option<&DVector<f64>> {
        self.known_minimizer.as_ref()
    }

    pub fn matrix_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut a = self.base.clone();
        for (j, b) in self.coeffs.iter().enumerate() {
            a += b * x[j];
        }
        Ok(a)
    }
}

impl FirstOrderOracle for AffineEigObjective {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let a = self.matrix_at(x)?;
        let eig = a
            .try_symmetric_eigen(1.0e-13, 1000)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .expect("finite eigenvalues")
        });
        let top = order[0];
        let lambda1 = eig.eigenvalues[top];
        let gap = if d > 1 {
            lambda1 - eig.eigenvalues[order[1]]
        } else {
            f64::INFINITY
        };
        let v = eig.eigenvectors.column(top);
        let gradient = DVector::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().map(|b| (v.transpose() * b * v)[(0, 0)]),
        );
        Ok(Evaluation {
            value: lambda1 - self.shift,
            gradient,
            differentiable_hint: gap > EIG_GAP_TOL * (1.0 + lambda1.abs()),
        })
    }
}

/// Any of the built-in objectives, addressable by string id.
#[derive(Debug, Clone)]
pub enum Objective {
    MaxOfSmooth(MaxOfSmoothObjective),
    AffineEig(AffineEigObjective),
    Ellipse(EllipseNorm),
}

impl Objective {
    /// Resolve a string id: `hmax`, `hellipse`, `hme`, `quadratic` or
    /// `maxquad:<file>` (a JSON list of quadratic components).
    pub fn from_id(id: &str) -> Result<Self> {
        Self::with_params(id, &serde_json::Value::Null)
    }

    /// Same as [`Objective::from_id`] with a parameter object; currently only
    /// `quadratic` reads `{"dim": n}`.
    pub fn with_params(id: &str, params: &serde_json::Value) -> Result<Self> {
        if let Some(path) = id.strip_prefix("maxquad:") {
            return builtins::maxquad_from_file(path);
        }
        match id {
            "hmax" => Ok(hmax()),
            "hellipse" => Ok(hellipse()),
            "hme" => Ok(hme()),
            "quadratic" => {
                let dim = params
                    .get("dim")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(2) as usize;
                Ok(quadratic(dim))
            }
            other => Err(Error::InvalidInput(format!("unknown objective id: {other}"))),
        }
    }

    pub fn as_max_of_smooth(&self) -> Option<&MaxOfSmoothObjective> {
        match self {
            Objective::MaxOfSmooth(m) => Some(m),
            _ => None,
        }
    }

    pub fn known_minimizer(&self) -> Option<DVector<f64>> {
        match self {
            Objective::MaxOfSmooth(m) => m.known_minimizer().cloned(),
            Objective::AffineEig(a) => a.known_minimizer().cloned(),
            Objective::Ellipse(e) => Some(DVector::zeros(e.dim())),
        }
    }
}

impl FirstOrderOracle for Objective {
    fn dim(&self) -> usize {
        match self {
            Objective::MaxOfSmooth(m) => m.dim(),
            Objective::AffineEig(a) => a.dim(),
            Objective::Ellipse(e) => e.dim(),
        }
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        match self {
            Objective::MaxOfSmooth(m) => m.evaluate(x),
            Objective::AffineEig(a) => a.evaluate(x),
            Objective::Ellipse(e) => e.evaluate(x),
        }
    }
}

/// Max over coordinates of the relative mismatch between the analytic
/// gradient and a central finite difference with the given step.
pub fn finite_difference_check(
    oracle: &dyn FirstOrderOracle,
    x: &DVector<f64>,
    step: f64,
) -> Result<f64> {
    let eval = oracle.evaluate(x)?;
    let mut worst = 0.0_f64;
    for j in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += step;
        minus[j] -= step;
        let diff = (oracle.evaluate(&plus)?.value - oracle.evaluate(&minus)?.value) / (2.0 * step);
        let err = (diff - eval.gradient[j]).abs() / (1.0 + eval.gradient[j].abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
