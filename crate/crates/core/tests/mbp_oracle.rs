//! Cross-validation of the closed-form ball-intersection solver against
//! two independent oracles: a brute-force parametrization of the feasible
//! circle for two spheres in R^3, and Dykstra alternating projections for
//! the inequality-constrained problem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use survey_descent::dykstra::{dykstra_project, DykstraConfig, DykstraOutcome};
use survey_descent::mbp::{
    sample_near_base, solve_equality_mbp, solve_inequality_mbp, BallSpec, MbpParameters,
    SolverPath,
};

fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Projection of `y` onto the boundary intersection of two spheres in R^3
/// by parametrizing the intersection circle, scanning a dense grid of
/// angles, and refining the best bracket by ternary search. Returns `None`
/// when the boundaries do not meet.
fn circle_oracle(
    z1: &DVector<f64>,
    z2: &DVector<f64>,
    r1_sq: f64,
    r2_sq: f64,
    y: &DVector<f64>,
) -> Option<DVector<f64>> {
    let normal = z2 - z1;
    let nn = normal.norm_squared();
    if nn == 0.0 {
        return None;
    }
    // Plane of the circle: 2 n' x = (|z2|^2 - r2^2) - (|z1|^2 - r1^2).
    let rhs = (z2.norm_squared() - r2_sq) - (z1.norm_squared() - r1_sq);
    let center = z1 + &normal * ((rhs / 2.0 - normal.dot(z1)) / nn);
    let radius_sq = r1_sq - (z1 - &center).norm_squared();
    if radius_sq < 0.0 {
        return None;
    }
    let radius = radius_sq.sqrt();

    // Orthonormal basis of the plane through `center`.
    let seed = if normal[0].abs() <= normal[1].abs().min(normal[2].abs()) {
        DVector::from_vec(vec![1.0, 0.0, 0.0])
    } else if normal[1].abs() <= normal[2].abs() {
        DVector::from_vec(vec![0.0, 1.0, 0.0])
    } else {
        DVector::from_vec(vec![0.0, 0.0, 1.0])
    };
    let mut u1 = &seed - &normal * (normal.dot(&seed) / nn);
    u1 /= u1.norm();
    let mut u2 = cross(&normal, &u1);
    u2 /= u2.norm();

    let point_at = |phi: f64| &center + (&u1 * phi.cos() + &u2 * phi.sin()) * radius;
    // Allocation-free evaluation of ||x(phi) - y||^2, coordinate by
    // coordinate, for the dense scan.
    let objective = |phi: f64| {
        let (c, s) = (phi.cos(), phi.sin());
        (0..3)
            .map(|i| {
                let coord = center[i] + radius * (c * u1[i] + s * u2[i]) - y[i];
                coord * coord
            })
            .sum::<f64>()
    };

    let samples = 1_000_000usize;
    let step = std::f64::consts::TAU / samples as f64;
    let mut best = 0usize;
    let mut best_val = f64::INFINITY;
    for i in 0..samples {
        let v = objective(i as f64 * step);
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    // Ternary-search refinement on the bracketing interval.
    let mut lo = (best as f64 - 1.0) * step;
    let mut hi = (best as f64 + 1.0) * step;
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if objective(m1) <= objective(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Some(point_at(0.5 * (lo + hi)))
}

#[test]
fn closed_form_matches_the_circle_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 20 {
        let inst = sample_near_base(&mut rng, 3, 2, 0.05);
        let balls = &inst.params.balls;
        let sol = match solve_equality_mbp(&inst.params) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let reference = circle_oracle(
            &balls.center(0),
            &balls.center(1),
            balls.squared_radii()[0],
            balls.squared_radii()[1],
            &inst.params.target,
        )
        .expect("near-base boundaries intersect");
        let gap = (&sol.x - &reference).norm();
        assert!(gap <= 1e-6, "closed form vs circle oracle gap {gap}");
        checked += 1;
    }
}

#[test]
fn inequality_solver_agrees_with_dykstra_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = [2usize, 3, 5];
    let config = DykstraConfig::default();
    let mut count = 0;
    let mut paths = [0usize; 3];
    while count < 100 {
        let n = dims[rng.random_range(0..dims.len())];
        let m = 1 + rng.random_range(0..3usize.min(n));
        let eps = [1e-2, 1e-3, 5e-2][rng.random_range(0..3)];
        let inst = sample_near_base(&mut rng, n, m, eps);
        let sol = match solve_inequality_mbp(&inst.params) {
            Ok(s) => s,
            Err(_) => continue, // degenerate draw; skip, don't fail
        };
        let reference = match dykstra_project(&inst.params.target, &inst.params.balls, &config) {
            DykstraOutcome::Converged { x, .. } => x,
            DykstraOutcome::Stalled { .. } => continue,
        };
        let gap = (&sol.x - &reference).norm();
        assert!(gap <= 1e-6, "path {:?} disagrees with projection: {gap}", sol.solver_path);

        // Feasibility and stationarity on every returned solution.
        let viol = inst.params.balls.violations(&sol.x);
        for j in 0..m {
            assert!(
                viol[j] <= 1e-8 * (1.0 + inst.params.balls.squared_radii()[j]),
                "constraint {j} violated by {}",
                viol[j]
            );
        }
        assert!(
            sol.stationarity_residual <= 1e-8 * (1.0 + inst.params.target.norm()),
            "stationarity residual {}",
            sol.stationarity_residual
        );
        paths[match sol.solver_path {
            SolverPath::ClosedForm => 0,
            SolverPath::DykstraFallback => 1,
            SolverPath::InteriorTarget => 2,
        }] += 1;
        count += 1;
    }
    // The sweep must actually exercise the closed form, not hide behind the
    // fallback.
    assert!(paths[0] >= 50, "closed form ran only {} times", paths[0]);
}

#[test]
fn interior_targets_agree_with_dykstra_too() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let config = DykstraConfig::default();
    for _ in 0..20 {
        let inst = sample_near_base(&mut rng, 4, 2, 1e-3);
        // Move the target to the midpoint of two centers, well inside both
        // balls (base radii pass through the origin).
        let balls = &inst.params.balls;
        let midpoint = (balls.center(0) + balls.center(1)) * 0.5;
        let params = MbpParameters::new(midpoint, balls.clone()).unwrap();
        let feasible = params
            .balls
            .violations(&params.target)
            .iter()
            .all(|v| *v <= 0.0);
        if !feasible {
            continue;
        }
        let sol = solve_inequality_mbp(&params).unwrap();
        assert_eq!(sol.solver_path, SolverPath::InteriorTarget);
        match dykstra_project(&params.target, &params.balls, &config) {
            DykstraOutcome::Converged { x, .. } => {
                assert!((x - &sol.x).norm() <= 1e-10);
            }
            DykstraOutcome::Stalled { .. } => panic!("feasible target cannot stall"),
        }
    }
}

#[test]
fn dykstra_projection_is_nonexpansive_on_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let balls = BallSpec::new(
        DMatrix::from_fn(3, 2, |i, j| [[0.2, -0.4], [0.9, 0.3], [-0.5, 0.6]][i][j]),
        DVector::from_vec(vec![2.0, 2.5]),
    )
    .unwrap();
    let config = DykstraConfig::default();
    let project = |y: &DVector<f64>| match dykstra_project(y, &balls, &config) {
        DykstraOutcome::Converged { x, .. } => x,
        DykstraOutcome::Stalled { .. } => panic!("feasible instance stalled"),
    };
    for _ in 0..30 {
        let a = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
        let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
        let lhs = (project(&a) - project(&b)).norm();
        let rhs = (&a - &b).norm();
        assert!(lhs <= rhs + 1e-8, "expansion: {lhs} > {rhs}");
    }
}
