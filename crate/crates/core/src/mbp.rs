//! Projection of a target point onto the common boundary (equality
//! constraints) or the intersection (inequality constraints) of finitely
//! many Euclidean balls.
//!
//! Near well-behaved "base" configurations the solution has a closed form:
//! project the centers and the target onto the affine subspace where all
//! pairwise boundary equalities hold, then step from the common center
//! projection (the *core*) by the common residual radius (the *margin*)
//! toward the projected target. Lagrange multipliers follow from one least
//! squares solve. The inequality solver accepts that closed form only when
//! it passes a full KKT check, and otherwise falls back to Dykstra
//! alternating projections.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dykstra::{self, DykstraConfig, DykstraOutcome};
use crate::error::{Error, Result};

/// Relative smallest-singular-value threshold declaring geometry degenerate.
pub const RANK_TOL: f64 = 1e-10;
/// Dual-feasibility slack when accepting the closed form for the
/// inequality-constrained problem.
pub const MULT_TOL: f64 = 1e-9;
/// Relative constraint-satisfaction tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Minimum distance between the projected target and the core for the
/// update direction to be well defined.
pub const DIRECTION_TOL: f64 = 1e-12;
/// Agreement required between per-ball values of quantities that are
/// j-independent in exact arithmetic (core, squared margin).
const WELL_DEFINED_TOL: f64 = 1e-8;
/// Relative stationarity residual accepted on any returned solution.
const STATIONARITY_TOL: f64 = 1e-8;
/// Relative slack identifying active constraints after a Dykstra solve.
const ACTIVE_TOL: f64 = 1e-6;

/// Ball centers (columns) and squared radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallSpec {
    centers: DMatrix<f64>,
    squared_radii: DVector<f64>,
}

impl BallSpec {
    /// `centers` is n x m with one column per ball. Requires `m <= n` and
    /// non-negative squared radii; negative values must be handled upstream
    /// as infeasibility.
    pub fn new(centers: DMatrix<f64>, squared_radii: DVector<f64>) -> Result<Self> {
        if squared_radii.len() != centers.ncols() {
            return Err(Error::DimensionMismatch {
                expected: centers.ncols(),
                got: squared_radii.len(),
            });
        }
        if centers.ncols() > centers.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} balls exceed the ambient dimension {}",
                centers.ncols(),
                centers.nrows()
            )));
        }
        if squared_radii.iter().any(|r| *r < 0.0) {
            return Err(Error::InvalidInput(
                "negative squared radius; resolve infeasibility upstream".into(),
            ));
        }
        Ok(Self { centers, squared_radii })
    }

    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn num_balls(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn center(&self, j: usize) -> DVector<f64> {
        self.centers.column(j).into_owned()
    }

    pub fn squared_radii(&self) -> &DVector<f64> {
        &self.squared_radii
    }

    /// `||x - z_j||^2 - r_j^2` per ball; positive entries are violations.
    pub fn violations(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.num_balls(),
            (0..self.num_balls())
                .map(|j| (x - self.center(j)).norm_squared() - self.squared_radii[j]),
        )
    }
}

/// A target point together with the balls it is projected onto.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MbpParameters {
    pub target: DVector<f64>,
    pub balls: BallSpec,
}

impl MbpParameters {
    pub fn new(target: DVector<f64>, balls: BallSpec) -> Result<Self> {
        if target.len() != balls.dim() {
            return Err(Error::DimensionMismatch {
                expected: balls.dim(),
                got: target.len(),
            });
        }
        Ok(Self { target, balls })
    }
}

/// Which route produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverPath {
    ClosedForm,
    DykstraFallback,
    InteriorTarget,
}

/// Projection result with multipliers and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MbpSolution {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
    /// Common projection of the centers onto the central affine subspace;
    /// absent on paths that never build the subspace.
    pub core: Option<DVector<f64>>,
    pub margin: Option<f64>,
    pub all_tight: bool,
    pub solver_path: SolverPath,
    pub stationarity_residual: f64,
}

/// Knobs for the inequality solver.
#[derive(Debug, Clone)]
pub struct MbpOptions {
    pub allow_dykstra_fallback: bool,
    pub dykstra: DykstraConfig,
}

impl Default for MbpOptions {
    fn default() -> Self {
        Self {
            allow_dykstra_fallback: true,
            dykstra: DykstraConfig::default(),
        }
    }
}

/// The `(m-1) x n` linear system `M x = b` whose solution set is the
/// central affine subspace: row `j-1` is `2 (z_j - z_1)'` and the right-hand
/// side collects the squared-norm and radius offsets. For fewer than two
/// balls the system is empty and the subspace is all of R^n.
pub fn central_affine_system(balls: &BallSpec) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = balls.dim();
    let m = balls.num_balls();
    if m < 2 {
        return Ok((DMatrix::zeros(0, n), DVector::zeros(0)));
    }
    let z1 = balls.center(0);
    let mut mat = DMatrix::zeros(m - 1, n);
    let mut rhs = DVector::zeros(m - 1);
    for j in 1..m {
        let zj = balls.center(j);
        mat.row_mut(j - 1)
            .copy_from(&((&zj - &z1) * 2.0).transpose());
        rhs[j - 1] = (zj.norm_squared() - balls.squared_radii[j]) - z1.norm_squared()
            + balls.squared_radii[0];
    }
    let svals = mat.clone().singular_values();
    let (smax, smin) = svals
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    if smin.is_nan() || smin <= RANK_TOL * smax.max(1.0) {
        return Err(Error::DegenerateGeometry(format!(
            "centers affinely dependent: sigma_min = {smin:.3e}, sigma_max = {smax:.3e}"
        )));
    }
    Ok((mat, rhs))
}

/// Euclidean projection of `w` onto the central affine subspace, via an
/// orthogonal factorization of the system's transpose.
pub fn project_onto_cas(balls: &BallSpec, w: &DVector<f64>) -> Result<DVector<f64>> {
    let proj = AffineProjector::build(balls)?;
    Ok(proj.project(w))
}

/// Common projection of every center onto the central affine subspace.
/// Errors when the per-center projections disagree beyond tolerance.
pub fn compute_core(balls: &BallSpec) -> Result<DVector<f64>> {
    let proj = AffineProjector::build(balls)?;
    core_with(&proj, balls)
}

/// The common residual radius `sqrt(r_j^2 - ||z_j - core||^2)` within the
/// central affine subspace. Errors with an empty-boundary-intersection
/// report when the argument of the square root is negative.
pub fn compute_margin(balls: &BallSpec) -> Result<f64> {
    let proj = AffineProjector::build(balls)?;
    let core = core_with(&proj, balls)?;
    margin_with(balls, &core)
}

struct AffineProjector {
    /// Thin orthonormal basis of the row space of `M`; `None` when the
    /// system is empty and the projector is the identity.
    q: Option<DMatrix<f64>>,
    particular: DVector<f64>,
}

impl AffineProjector {
    fn build(balls: &BallSpec) -> Result<Self> {
        let (mat, rhs) = central_affine_system(balls)?;
        if mat.nrows() == 0 {
            return Ok(Self {
                q: None,
                particular: DVector::zeros(balls.dim()),
            });
        }
        let qr = mat.transpose().qr();
        let q = qr.q();
        let r = qr.r();
        let w = r
            .transpose()
            .solve_lower_triangular(&rhs)
            .ok_or_else(|| Error::DegenerateGeometry("singular triangular factor".into()))?;
        let particular = &q * w;
        Ok(Self {
            q: Some(q),
            particular,
        })
    }

    fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.q {
            None => w.clone(),
            Some(q) => w - q * (q.transpose() * w) + &self.particular,
        }
    }
}

fn core_with(proj: &AffineProjector, balls: &BallSpec) -> Result<DVector<f64>> {
    if balls.num_balls() == 0 {
        return Err(Error::InvalidInput("core needs at least one ball".into()));
    }
    let core = proj.project(&balls.center(0));
    for j in 1..balls.num_balls() {
        let other = proj.project(&balls.center(j));
        let gap = (&core - &other).norm();
        if gap > WELL_DEFINED_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "core projections disagree by {gap:.3e} between balls 0 and {j}"
            )));
        }
    }
    Ok(core)
}

fn margin_with(balls: &BallSpec, core: &DVector<f64>) -> Result<f64> {
    let mut margin_sq = 0.0;
    for j in 0..balls.num_balls() {
        let val = balls.squared_radii[j] - (balls.center(j) - core).norm_squared();
        if j == 0 {
            margin_sq = val;
        } else if (val - margin_sq).abs() > WELL_DEFINED_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "squared margin disagrees by {:.3e} between balls 0 and {j}",
                (val - margin_sq).abs()
            )));
        }
    }
    if margin_sq < 0.0 {
        let scale = 1.0 + balls.squared_radii.amax();
        if margin_sq > -1e-12 * scale {
            margin_sq = 0.0;
        } else {
            return Err(Error::EmptyBoundaryIntersection {
                margin_squared: margin_sq,
            });
        }
    }
    Ok(margin_sq.sqrt())
}

/// Closed-form solution of the equality-constrained problem:
/// `x = core + margin * u` where `u` points from the core toward the
/// projected target. All constraints hold with equality by construction.
pub fn solve_equality_mbp(params: &MbpParameters) -> Result<MbpSolution> {
    let balls = &params.balls;
    if balls.num_balls() == 0 {
        return Err(Error::InvalidInput(
            "equality projection needs at least one ball".into(),
        ));
    }
    let proj = AffineProjector::build(balls)?;
    let core = core_with(&proj, balls)?;
    let margin = margin_with(balls, &core)?;
    let projected_target = proj.project(&params.target);
    let dir = &projected_target - &core;
    let dist = dir.norm();
    if dist <= DIRECTION_TOL {
        return Err(Error::AmbiguousDirection { distance: dist });
    }
    let x = &core + dir * (margin / dist);
    let (multipliers, residual) = recover_multipliers(&x, params)?;
    Ok(MbpSolution {
        x,
        multipliers,
        core: Some(core),
        margin: Some(margin),
        all_tight: true,
        solver_path: SolverPath::ClosedForm,
        stationarity_residual: residual,
    })
}

/// Least-squares Lagrange multipliers for the stationarity condition
/// `x - y + sum_j lambda_j (x - z_j) = 0`, recovered through a thin QR
/// factorization of the column matrix `[x - z_1, ..., x - z_m]`. Returns the
/// multipliers and the stationarity residual norm.
pub fn recover_multipliers(x: &DVector<f64>, params: &MbpParameters) -> Result<(DVector<f64>, f64)> {
    let balls = &params.balls;
    let m = balls.num_balls();
    if m == 0 {
        let residual = (x - &params.target).norm();
        return Ok((DVector::zeros(0), residual));
    }
    let mut cols = DMatrix::zeros(balls.dim(), m);
    for j in 0..m {
        cols.column_mut(j).copy_from(&(x - balls.center(j)));
    }
    let svals = cols.clone().singular_values();
    let (smax, smin) = svals
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    if smin.is_nan() || smin <= RANK_TOL * smax.max(1.0) {
        return Err(Error::DegenerateGeometry(format!(
            "constraint normals rank-deficient: sigma_min = {smin:.3e}"
        )));
    }
    let qr = cols.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.transpose() * (&params.target - x);
    let multipliers = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::DegenerateGeometry("singular triangular factor".into()))?;
    let residual = ((x - &params.target) + &cols * &multipliers).norm();
    Ok((multipliers, residual))
}

/// Projection onto the intersection of the balls (inequality constraints)
/// with default options.
pub fn solve_inequality_mbp(params: &MbpParameters) -> Result<MbpSolution> {
    solve_inequality_mbp_with(params, &MbpOptions::default())
}

/// Inequality-constrained solve: return the target when it is already
/// feasible; otherwise accept the closed form when it passes the KKT check
/// (dual feasibility, primal feasibility, stationarity), and fall back to
/// Dykstra projection with multipliers recovered on the active set.
pub fn solve_inequality_mbp_with(params: &MbpParameters, options: &MbpOptions) -> Result<MbpSolution> {
    let balls = &params.balls;
    let m = balls.num_balls();
    let violations = balls.violations(&params.target);
    let feasible = (0..m).all(|j| violations[j] <= FEAS_TOL * (1.0 + balls.squared_radii[j]));
    if feasible {
        let all_tight = m == 0
            || (0..m).all(|j| violations[j].abs() <= FEAS_TOL * (1.0 + balls.squared_radii[j]));
        return Ok(MbpSolution {
            x: params.target.clone(),
            multipliers: DVector::zeros(m),
            core: None,
            margin: None,
            all_tight,
            solver_path: SolverPath::InteriorTarget,
            stationarity_residual: 0.0,
        });
    }

    let closed = solve_equality_mbp(params);
    let target_scale = 1.0 + params.target.norm();
    match closed {
        Ok(sol) => {
            let dual_ok = sol.multipliers.iter().all(|l| *l >= -MULT_TOL);
            let viol = balls.violations(&sol.x);
            let primal_ok =
                (0..m).all(|j| viol[j].abs() <= FEAS_TOL * (1.0 + balls.squared_radii[j]));
            let stationary_ok = sol.stationarity_residual <= STATIONARITY_TOL * target_scale;
            if dual_ok && primal_ok && stationary_ok {
                return Ok(sol);
            }
            log::debug!(
                "closed form rejected: dual_ok={dual_ok} primal_ok={primal_ok} stationary_ok={stationary_ok}"
            );
        }
        Err(err) => log::debug!("closed form failed: {err}"),
    }

    if !options.allow_dykstra_fallback {
        return Err(Error::Numeric(
            "closed form failed the KKT check and the projection fallback is disabled".into(),
        ));
    }

    match dykstra::dykstra_project(&params.target, balls, &options.dykstra) {
        DykstraOutcome::Converged { x, .. } => {
            let viol = balls.violations(&x);
            let active: Vec<usize> = (0..m)
                .filter(|&j| viol[j] >= -ACTIVE_TOL * (1.0 + balls.squared_radii[j]))
                .collect();
            let mut multipliers = DVector::zeros(m);
            let mut residual = (&x - &params.target).norm();
            if !active.is_empty() {
                let mut centers = DMatrix::zeros(balls.dim(), active.len());
                let mut radii = DVector::zeros(active.len());
                for (col, &j) in active.iter().enumerate() {
                    centers.column_mut(col).copy_from(&balls.center(j));
                    radii[col] = balls.squared_radii[j];
                }
                let sub = MbpParameters::new(params.target.clone(), BallSpec::new(centers, radii)?)?;
                let (active_mult, res) = recover_multipliers(&x, &sub)?;
                for (col, &j) in active.iter().enumerate() {
                    multipliers[j] = active_mult[col];
                }
                residual = res;
            }
            let all_tight =
                (0..m).all(|j| viol[j].abs() <= FEAS_TOL * (1.0 + balls.squared_radii[j]));
            Ok(MbpSolution {
                x,
                multipliers,
                core: None,
                margin: None,
                all_tight,
                solver_path: SolverPath::DykstraFallback,
                stationarity_residual: residual,
            })
        }
        DykstraOutcome::Stalled {
            violation, cycles, ..
        } => Err(Error::InfeasibleIntersection { violation, cycles }),
    }
}

/// A perturbed instance together with the base configuration it came from.
#[derive(Debug, Clone)]
pub struct NearBaseInstance {
    pub params: MbpParameters,
    pub base: MbpParameters,
    pub base_weights: DVector<f64>,
}

/// Sample a random base configuration (independent centers, radii through
/// the origin, target a negative positive-weighted center combination) and
/// perturb every parameter by `eps`-scaled Gaussian noise.
pub fn sample_near_base<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    eps: f64,
) -> NearBaseInstance {
    assert!(m >= 1 && m <= n, "need 1 <= m <= n");
    let centers = loop {
        let z = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let svals = z.clone().singular_values();
        let (smax, smin) = svals
            .iter()
            .fold((0.0_f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
        if smin > 0.25 * smax {
            break z;
        }
    };
    let radii_sq = DVector::from_iterator(
        m,
        centers.column_iter().map(|z| z.norm_squared()),
    );
    let weights = DVector::from_fn(m, |_, _| rng.random_range(0.3..1.5));
    let mut target = DVector::zeros(n);
    for j in 0..m {
        target -= centers.column(j) * weights[j];
    }
    let base = MbpParameters::new(
        target.clone(),
        BallSpec::new(centers.clone(), radii_sq.clone()).expect("base radii non-negative"),
    )
    .expect("dimensions agree");

    let perturbed_centers =
        &centers + DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal) * eps);
    let perturbed_radii = DVector::from_fn(m, |j, _| {
        (radii_sq[j] + rng.sample::<f64, _>(StandardNormal) * eps).max(0.0)
    });
    let perturbed_target =
        &target + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * eps);
    let params = MbpParameters::new(
        perturbed_target,
        BallSpec::new(perturbed_centers, perturbed_radii).expect("radii clamped non-negative"),
    )
    .expect("dimensions agree");

    NearBaseInstance {
        params,
        base,
        base_weights: weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_spec() -> BallSpec {
        BallSpec::new(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![1.0, 1.0]).unwrap()
    }

    fn base_params() -> MbpParameters {
        MbpParameters::new(dvector![-1.0, -1.0], base_spec()).unwrap()
    }

    #[test]
    fn central_affine_system_of_base_spec() {
        let (m, b) = central_affine_system(&base_spec()).unwrap();
        assert_eq!(m, dmatrix![-2.0, 2.0]);
        assert_eq!(b, dvector![0.0]);
    }

    #[test]
    fn central_affine_system_single_ball_is_empty() {
        let balls = BallSpec::new(dmatrix![0.0; 0.0], dvector![1.0]).unwrap();
        let (m, b) = central_affine_system(&balls).unwrap();
        assert_eq!(m.nrows(), 0);
        assert_eq!(b.len(), 0);
    }

    #[test]
    fn duplicate_centers_are_degenerate() {
        let balls = BallSpec::new(dmatrix![1.0, 1.0; 0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert!(matches!(
            central_affine_system(&balls),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn projection_onto_cas_line() {
        let balls = base_spec();
        let p = project_onto_cas(&balls, &dvector![1.0, 0.0]).unwrap();
        assert_relative_eq!(p, dvector![0.5, 0.5], epsilon = 1e-14);
        // Idempotence.
        let again = project_onto_cas(&balls, &p).unwrap();
        assert_relative_eq!(again, p, epsilon = 1e-12);
    }

    #[test]
    fn projection_satisfies_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let inst = sample_near_base(&mut rng, 4, 3, 0.05);
            let balls = &inst.params.balls;
            let (m, b) = central_affine_system(balls).unwrap();
            let w = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = project_onto_cas(balls, &w).unwrap();
            assert_relative_eq!(&m * &p, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn core_and_margin_of_base_spec() {
        let balls = base_spec();
        let core = compute_core(&balls).unwrap();
        assert_relative_eq!(core, dvector![0.5, 0.5], epsilon = 1e-14);
        let margin = compute_margin(&balls).unwrap();
        assert_relative_eq!(margin, 0.5_f64.sqrt(), epsilon = 1e-14);
        // The base-parameter core is non-zero.
        assert!(core.norm() > 0.1);
    }

    #[test]
    fn single_ball_conventions() {
        let balls = BallSpec::new(dmatrix![0.3; -0.7], dvector![2.0]).unwrap();
        assert_relative_eq!(compute_core(&balls).unwrap(), dvector![0.3, -0.7]);
        assert_relative_eq!(compute_margin(&balls).unwrap(), 2.0_f64.sqrt());
    }

    #[test]
    fn disjoint_spheres_report_empty_boundary() {
        let balls = BallSpec::new(dmatrix![-2.0, 2.0; 0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        assert!(matches!(
            compute_margin(&balls),
            Err(Error::EmptyBoundaryIntersection { .. })
        ));
    }

    #[test]
    fn base_parameters_solve_to_origin_with_unit_multipliers() {
        let sol = solve_equality_mbp(&base_params()).unwrap();
        assert!(sol.x.norm() <= 1e-12, "x = {}", sol.x);
        assert_relative_eq!(sol.multipliers, dvector![1.0, 1.0], epsilon = 1e-12);
        assert_eq!(sol.solver_path, SolverPath::ClosedForm);
        assert!(sol.all_tight);
    }

    #[test]
    fn single_ball_radial_projection() {
        let params = MbpParameters::new(
            dvector![2.0, 0.0],
            BallSpec::new(dmatrix![0.0; 0.0], dvector![1.0]).unwrap(),
        )
        .unwrap();
        let sol = solve_equality_mbp(&params).unwrap();
        assert_relative_eq!(sol.x, dvector![1.0, 0.0], epsilon = 1e-14);
        assert_relative_eq!(sol.multipliers, dvector![1.0], epsilon = 1e-14);
    }

    #[test]
    fn target_on_core_is_ambiguous() {
        let params = MbpParameters::new(dvector![0.5, 0.5], base_spec()).unwrap();
        assert!(matches!(
            solve_equality_mbp(&params),
            Err(Error::AmbiguousDirection { .. })
        ));
    }

    #[test]
    fn recovered_multipliers_zero_the_stationarity_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let inst = sample_near_base(&mut rng, 5, 3, 0.01);
            let sol = solve_equality_mbp(&inst.params).unwrap();
            assert!(
                sol.stationarity_residual <= 1e-10 * (1.0 + inst.params.target.norm()),
                "residual {}",
                sol.stationarity_residual
            );
        }
    }

    #[test]
    fn interior_target_returned_unchanged() {
        let params = MbpParameters::new(dvector![0.4, 0.4], base_spec()).unwrap();
        let sol = solve_inequality_mbp(&params).unwrap();
        assert_eq!(sol.solver_path, SolverPath::InteriorTarget);
        assert_eq!(sol.x, dvector![0.4, 0.4]);
        assert_eq!(sol.multipliers, dvector![0.0, 0.0]);
        assert!(!sol.all_tight);
    }

    #[test]
    fn near_base_inequality_matches_equality() {
        let ineq = solve_inequality_mbp(&base_params()).unwrap();
        let eq = solve_equality_mbp(&base_params()).unwrap();
        assert_eq!(ineq.solver_path, SolverPath::ClosedForm);
        assert_relative_eq!(ineq.x, eq.x, epsilon = 1e-14);
        assert_relative_eq!(ineq.multipliers, eq.multipliers, epsilon = 1e-14);
    }

    #[test]
    fn target_outside_one_disk_projects_onto_it() {
        // D1 centered at the origin, D2 at (3, 0), both radius 2; the target
        // is outside D1 only, so the answer is the radial projection onto D1
        // and the D2 multiplier is zero.
        let balls = BallSpec::new(dmatrix![0.0, 3.0; 0.0, 0.0], dvector![4.0, 4.0]).unwrap();
        let target = dvector![2.5, 0.3];
        let params = MbpParameters::new(target.clone(), balls).unwrap();
        let sol = solve_inequality_mbp(&params).unwrap();
        let expected = &target * (2.0 / target.norm());
        assert_eq!(sol.solver_path, SolverPath::DykstraFallback);
        assert_relative_eq!(sol.x, expected, epsilon = 1e-7);
        assert!(sol.multipliers[0] > 0.0);
        assert_relative_eq!(sol.multipliers[1], 0.0, epsilon = 1e-9);
        assert!(!sol.all_tight);
    }

    #[test]
    fn pythagoras_on_the_central_subspace() {
        // For any feasible x, ||x - z_j||^2 = ||x - core||^2 + ||z_j - core||^2.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let inst = sample_near_base(&mut rng, 5, 3, 0.02);
            let balls = &inst.params.balls;
            let sol = match solve_equality_mbp(&inst.params) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let core = sol.core.as_ref().unwrap();
            for j in 0..balls.num_balls() {
                let lhs = (&sol.x - balls.center(j)).norm_squared();
                let rhs = (&sol.x - core).norm_squared() + (balls.center(j) - core).norm_squared();
                assert!((lhs - rhs).abs() <= 1e-8, "pythagoras gap {}", (lhs - rhs).abs());
            }
        }
    }

    #[test]
    fn closed_form_feasibility_and_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let inst = sample_near_base(&mut rng, 5, 3, 0.02);
            let sol = solve_equality_mbp(&inst.params).unwrap();
            let balls = &inst.params.balls;
            for j in 0..balls.num_balls() {
                let gap = ((&sol.x - balls.center(j)).norm_squared() - balls.squared_radii[j]).abs();
                assert!(gap <= 1e-8 * (1.0 + balls.squared_radii[j]), "tightness gap {gap}");
            }
            assert!(sol.stationarity_residual <= 1e-8 * (1.0 + inst.params.target.norm()));
        }
    }

    #[test]
    fn solution_and_multipliers_depend_smoothly_on_parameters() {
        // First-order sensitivity: a constant fitted on the coarsest
        // perturbation scale must also bound the finer scales.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let base = base_params();
        let base_sol = solve_equality_mbp(&base).unwrap();
        let mut fit_c: f64 = 0.0;
        let mut checks: Vec<(f64, f64, f64)> = Vec::new();
        for round in 0..100 {
            for &eps in &[1e-2, 1e-3, 1e-4] {
                let dz = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let dr = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let dy = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let balls = BallSpec::new(
                    base.balls.centers() + dz * eps,
                    base.balls.squared_radii() + dr * eps,
                )
                .unwrap();
                let params = MbpParameters::new(&base.target + dy * eps, balls).unwrap();
                let sol = solve_equality_mbp(&params).unwrap();
                let dx = (&sol.x - &base_sol.x).norm() / eps;
                let dl = (&sol.multipliers - &base_sol.multipliers).norm() / eps;
                if round < 50 && eps == 1e-2 {
                    fit_c = fit_c.max(dx).max(dl);
                } else {
                    checks.push((eps, dx, dl));
                }
            }
        }
        let c = 2.0 * fit_c;
        for (eps, dx, dl) in checks {
            assert!(dx <= c, "x sensitivity {dx} > {c} at eps {eps}");
            assert!(dl <= c, "lambda sensitivity {dl} > {c} at eps {eps}");
        }
    }

    #[test]
    fn negative_radius_rejected_at_construction() {
        assert!(BallSpec::new(dmatrix![1.0; 0.0], dvector![-0.5]).is_err());
    }

    #[test]
    fn more_balls_than_dimensions_rejected() {
        assert!(BallSpec::new(dmatrix![1.0, 0.0, -1.0], dvector![1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn debug_dump_round_trips_through_json() {
        let params = base_params();
        let text = serde_json::to_string(&params).unwrap();
        let back: MbpParameters = serde_json::from_str(&text).unwrap();
        assert_eq!(back.target, params.target);
        assert_eq!(back.balls.centers(), params.balls.centers());
        let sol = solve_equality_mbp(&params).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let back: MbpSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(back.solver_path, sol.solver_path);
    }
}
