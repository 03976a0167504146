//! Minimize |x - y^2| + x^2 + 2y^2 from the survey {(0.9, 1), (1.1, 1)}
//! and print the per-iteration contraction toward the minimizer.

use nalgebra::{dmatrix, dvector};
use survey_descent::analysis::{rate_report, TheoryConstants};
use survey_descent::oracle::hmax;
use survey_descent::survey::{run, RunConfig, Survey};

fn main() {
    let objective = hmax();
    let survey = Survey::evaluate(dmatrix![0.9, 1.1; 1.0, 1.0], &objective).unwrap();
    let mut config = RunConfig::new(6.0);
    config.max_iterations = 60;
    config.stop_tol = 5e-6;
    let trace = run(survey, &objective, &config).unwrap();

    let minimizer = dvector![0.0, 0.0];
    println!("iter   max value      dist to min");
    for t in 0..=trace.num_iterations() {
        let s = trace.survey_at(t);
        println!(
            "{t:4}   {:12.5e}   {:12.5e}",
            s.values().max(),
            s.distance_to_point(&minimizer)
        );
    }

    let constants = TheoryConstants { delta: 2.0, smoothness_l: 6.0, lambda_min: 0.5 };
    let report = rate_report(&trace, &minimizer, 0.0, &constants).unwrap();
    println!(
        "\nmeasured squared-distance ratio {:.4} against bound {:.4}",
        report.fitted_ratio, report.theoretical_bound
    );
}
