//! Dykstra's alternating-projection scheme for the exact Euclidean
//! projection of a point onto an intersection of balls.
//!
//! Unlike plain cyclic projection, each pass re-applies a per-ball
//! correction term, which makes the iterates converge to the true
//! projection rather than just some feasible point. Used both as the
//! robust fallback of the closed-form solver and as an independent oracle
//! in its tests.

use nalgebra::DVector;

use crate::mbp::BallSpec;

/// Stopping controls for [`dykstra_project`].
#[derive(Debug, Clone)]
pub struct DykstraConfig {
    /// Threshold on both the per-cycle iterate change and the worst
    /// constraint violation.
    pub tol: f64,
    pub max_cycles: usize,
    /// Cycles without improvement of the best violation before the run is
    /// declared stalled (and the intersection presumed empty). Dykstra has
    /// no infeasibility certificate, so this is a heuristic.
    pub stall_window: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_cycles: 100_000,
            stall_window: 50,
        }
    }
}

/// How a projection run ended.
#[derive(Debug, Clone)]
pub enum DykstraOutcome {
    Converged {
        x: DVector<f64>,
        cycles: usize,
        max_violation: f64,
    },
    /// The best point seen and its violation, for the caller to triage.
    Stalled {
        best: DVector<f64>,
        violation: f64,
        cycles: usize,
    },
}

/// Projection of `w` onto one ball: identity inside, radial shrink outside.
pub fn project_ball(w: &DVector<f64>, center: &DVector<f64>, squared_radius: f64) -> DVector<f64> {
    debug_assert!(squared_radius >= 0.0);
    let d = w - center;
    let dist_sq = d.norm_squared();
    if dist_sq <= squared_radius {
        return w.clone();
    }
    center + d * (squared_radius.sqrt() / dist_sq.sqrt())
}

fn max_violation(balls: &BallSpec, x: &DVector<f64>) -> f64 {
    balls
        .violations(x)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(*v))
}

/// Dykstra projection of `y` onto the intersection of the balls.
///
/// Converges when both the per-cycle change and the worst violation drop
/// below `config.tol`; reports a stall when the best violation stops
/// improving for `config.stall_window` cycles.
pub fn dykstra_project(y: &DVector<f64>, balls: &BallSpec, config: &DykstraConfig) -> DykstraOutcome {
    let m = balls.num_balls();
    if m == 0 {
        return DykstraOutcome::Converged {
            x: y.clone(),
            cycles: 0,
            max_violation: 0.0,
        };
    }
    let mut x = y.clone();
    let mut corrections = vec![DVector::zeros(y.len()); m];
    let mut best_violation = f64::INFINITY;
    let mut best_x = x.clone();
    let mut since_improvement = 0usize;

    for cycle in 1..=config.max_cycles {
        let before = x.clone();
        for (j, correction) in corrections.iter_mut().enumerate() {
            let shifted = &x + &*correction;
            let projected = project_ball(&shifted, &balls.center(j), balls.squared_radii()[j]);
            *correction = shifted - &projected;
            x = projected;
        }
        let change = (&x - &before).norm();
        let violation = max_violation(balls, &x);
        if violation < best_violation - config.tol {
            best_violation = violation;
            best_x = x.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if change <= config.tol && violation <= config.tol {
            return DykstraOutcome::Converged {
                x,
                cycles: cycle,
                max_violation: violation,
            };
        }
        if since_improvement >= config.stall_window && best_violation > config.tol {
            return DykstraOutcome::Stalled {
                best: best_x,
                violation: best_violation,
                cycles: cycle,
            };
        }
    }
    let violation = max_violation(balls, &x);
    if violation <= config.tol {
        DykstraOutcome::Converged {
            x,
            cycles: config.max_cycles,
            max_violation: violation,
        }
    } else {
        DykstraOutcome::Stalled {
            best: best_x,
            violation: best_violation,
            cycles: config.max_cycles,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn unwrap_converged(outcome: DykstraOutcome) -> DVector<f64> {
        match outcome {
            DykstraOutcome::Converged { x, .. } => x,
            DykstraOutcome::Stalled { violation, .. } => {
                panic!("expected convergence, stalled at violation {violation}")
            }
        }
    }

    #[test]
    fn project_ball_radial_scaling() {
        let p = project_ball(&dvector![3.0, 0.0], &dvector![0.0, 0.0], 4.0);
        assert_relative_eq!(p, dvector![2.0, 0.0], epsilon = 1e-15);
    }

    #[test]
    fn project_ball_identity_inside() {
        let w = dvector![0.5, -0.2];
        assert_eq!(project_ball(&w, &dvector![0.0, 0.0], 1.0), w);
        // Center itself stays put for positive radius.
        let c = dvector![1.0, 1.0];
        assert_eq!(project_ball(&c, &c, 0.5), c);
    }

    #[test]
    fn single_ball_matches_direct_projection() {
        let balls = BallSpec::new(dmatrix![0.0; 0.0], dvector![4.0]).unwrap();
        let y = dvector![3.0, 4.0];
        let x = unwrap_converged(dykstra_project(&y, &balls, &DykstraConfig::default()));
        assert_relative_eq!(x, project_ball(&y, &dvector![0.0, 0.0], 4.0), epsilon = 1e-12);
    }

    #[test]
    fn two_unit_disks_lens_tip() {
        let balls = BallSpec::new(dmatrix![-0.5, 0.5; 0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        let y = dvector![0.0, 2.0];
        let x = unwrap_converged(dykstra_project(&y, &balls, &DykstraConfig::default()));
        assert_relative_eq!(x, dvector![0.0, 3.0_f64.sqrt() / 2.0], epsilon = 1e-8);
    }

    #[test]
    fn disjoint_balls_stall_with_report() {
        let balls = BallSpec::new(dmatrix![-2.0, 2.0; 0.0, 0.0], dvector![1.0, 1.0]).unwrap();
        match dykstra_project(&dvector![0.0, 1.0], &balls, &DykstraConfig::default()) {
            DykstraOutcome::Stalled { violation, .. } => assert!(violation > 0.1),
            DykstraOutcome::Converged { .. } => panic!("disjoint balls cannot intersect"),
        }
    }

    #[test]
    fn output_never_violates_beyond_tol() {
        let config = DykstraConfig::default();
        let balls = BallSpec::new(
            dmatrix![0.0, 1.0, 0.5; 0.0, 0.0, 0.8; 0.0, 0.2, -0.1],
            dvector![1.5, 1.5, 1.2],
        )
        .unwrap();
        for y in [
            dvector![4.0, -3.0, 1.0],
            dvector![-2.0, 5.0, 0.3],
            dvector![0.2, 0.1, -0.2],
        ] {
            let x = unwrap_converged(dykstra_project(&y, &balls, &config));
            assert!(max_violation(&balls, &x) <= config.tol);
        }
    }
}
