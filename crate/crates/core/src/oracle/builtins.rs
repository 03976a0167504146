//! The built-in objectives: `hmax`, `hellipse`, `hme`, `quadratic`, and the
//! `maxquad:<file>` loader.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::oracle::{
    AffineEigObjective, Evaluation, FirstOrderOracle, MaxOfSmoothObjective, Objective,
    SmoothComponent,
};

/// Weighted Euclidean norm `sqrt(sum_i w_i x_i^2)`, nonsmooth only at the
/// origin, where the zero vector (a subgradient) is returned flagged.
#[derive(Debug, Clone)]
pub struct EllipseNorm {
    weights: DVector<f64>,
}

impl EllipseNorm {
    pub fn new(weights: DVector<f64>) -> Self {
        Self { weights }
    }
}

impl FirstOrderOracle for EllipseNorm {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        self.check_dim(x)?;
        let value = x
            .iter()
            .zip(self.weights.iter())
            .map(|(xi, wi)| wi * xi * xi)
            .sum::<f64>()
            .sqrt();
        if value == 0.0 {
            return Ok(Evaluation {
                value,
                gradient: DVector::zeros(x.len()),
                differentiable_hint: false,
            });
        }
        let gradient = DVector::from_iterator(
            x.len(),
            x.iter().zip(self.weights.iter()).map(|(xi, wi)| wi * xi / value),
        );
        Ok(Evaluation {
            value,
            gradient,
            differentiable_hint: true,
        })
    }
}

/// `|x - y^2| + x^2 + 2 y^2`, written as the max of its two smooth pieces.
/// Minimum value 0 at the origin.
pub fn hmax() -> Objective {
    // f1 = (x - y^2) + x^2 + 2y^2 = x + x^2 + y^2, Hessian diag(2, 2).
    let f1 = SmoothComponent::new(|x: &DVector<f64>| {
        let (a, b) = (x[0], x[1]);
        (a + a * a + b * b, DVector::from_vec(vec![1.0 + 2.0 * a, 2.0 * b]))
    })
    .with_hessian(|_| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])))
    .with_bounds(2.0, 6.0)
    .expect("valid bounds");
    // f2 = -(x - y^2) + x^2 + 2y^2 = -x + x^2 + 3y^2, Hessian diag(2, 6).
    let f2 = SmoothComponent::new(|x: &DVector<f64>| {
        let (a, b) = (x[0], x[1]);
        (-a + a * a + 3.0 * b * b, DVector::from_vec(vec![-1.0 + 2.0 * a, 6.0 * b]))
    })
    .with_hessian(|_| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0])))
    .with_bounds(2.0, 6.0)
    .expect("valid bounds");
    let obj = MaxOfSmoothObjective::new(2, vec![f1, f2])
        .expect("non-empty")
        .with_minimizer(DVector::zeros(2))
        .expect("dim matches");
    Objective::MaxOfSmooth(obj)
}

/// `sqrt(x^2 + 2 y^2)`. Minimum value 0 at the origin.
pub fn hellipse() -> Objective {
    Objective::Ellipse(EllipseNorm::new(DVector::from_vec(vec![1.0, 2.0])))
}

/// Max eigenvalue of `[[1+x, y, z], [y, 1-x, w], [z, w, 0]]` minus 1.
/// Minimum value 0 at the origin, where the top eigenvalue is repeated.
pub fn hme() -> Objective {
    let d = 3;
    let base = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
    let b_x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.0]));
    let mut b_y = DMatrix::zeros(d, d);
    b_y[(0, 1)] = 1.0;
    b_y[(1, 0)] = 1.0;
    let mut b_z = DMatrix::zeros(d, d);
    b_z[(0, 2)] = 1.0;
    b_z[(2, 0)] = 1.0;
    let mut b_w = DMatrix::zeros(d, d);
    b_w[(1, 2)] = 1.0;
    b_w[(2, 1)] = 1.0;
    let obj = AffineEigObjective::new(vec![base, b_x, b_y, b_z, b_w], 1.0)
        .expect("well-formed family")
        .with_minimizer(DVector::zeros(4))
        .expect("dim matches");
    Objective::AffineEig(obj)
}

/// `||x||^2` in the given dimension, as a one-component max-of-smooth.
pub fn quadratic(dim: usize) -> Objective {
    let f = SmoothComponent::new(|x: &DVector<f64>| (x.dot(x), x * 2.0))
        .with_hessian(move |x: &DVector<f64>| DMatrix::identity(x.len(), x.len()) * 2.0)
        .with_bounds(2.0, 2.0)
        .expect("valid bounds");
    let obj = MaxOfSmoothObjective::new(dim, vec![f])
        .expect("non-empty")
        .with_minimizer(DVector::zeros(dim))
        .expect("dim matches");
    Objective::MaxOfSmooth(obj)
}

#[derive(Deserialize)]
struct MaxQuadComponentSpec {
    matrix: Vec<Vec<f64>>,
    linear: Vec<f64>,
    constant: f64,
}

#[derive(Deserialize)]
struct MaxQuadSpec {
    components: Vec<MaxQuadComponentSpec>,
    #[serde(default)]
    minimizer: Option<Vec<f64>>,
}

/// Load a max of quadratics `f_i(x) = x' A_i x / 2 + a_i' x + c_i` from JSON.
pub fn maxquad_from_file(path: &str) -> Result<Objective> {
    let text = std::fs::read_to_string(path)?;
    maxquad_from_json(&text)
}

pub fn maxquad_from_json(text: &str) -> Result<Objective> {
    let spec: MaxQuadSpec = serde_json::from_str(text)?;
    if spec.components.is_empty() {
        return Err(Error::InvalidInput("maxquad needs at least one component".into()));
    }
    let dim = spec.components[0].linear.len();
    let mut components = Vec::with_capacity(spec.components.len());
    for c in &spec.components {
        if c.matrix.len() != dim || c.matrix.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidInput(format!("maxquad matrix must be {dim}x{dim}")));
        }
        if c.linear.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.linear.len() });
        }
        let raw = DMatrix::from_fn(dim, dim, |i, j| c.matrix[i][j]);
        let a = (&raw + raw.transpose()) * 0.5;
        let lin = DVector::from_vec(c.linear.clone());
        let constant = c.constant;
        let eigs = a.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eigs.min(), eigs.max());
        let a_eval = a.clone();
        let mut comp = SmoothComponent::new(move |x: &DVector<f64>| {
            let ax = &a_eval * x;
            (0.5 * x.dot(&ax) + lin.dot(x) + constant, ax + &lin)
        })
        .with_hessian(move |_| a.clone());
        if lo >= 0.0 && hi >= lo {
            comp = comp.with_bounds(lo, hi)?;
        }
        components.push(comp);
    }
    let mut obj = MaxOfSmoothObjective::new(dim, components)?;
    if let Some(m) = spec.minimizer {
        obj = obj.with_minimizer(DVector::from_vec(m))?;
    }
    Ok(Objective::MaxOfSmooth(obj))
}
