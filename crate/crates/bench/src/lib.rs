//! Shared instance builders for the benchmarks.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use survey_descent::mbp::{sample_near_base, MbpParameters};
use survey_descent::oracle::{hmax, Objective};
use survey_descent::survey::Survey;

pub fn near_base_instance(n: usize, m: usize, seed: u64) -> MbpParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_near_base(&mut rng, n, m, 1e-2).params
}

pub fn fig1_setup() -> (Objective, Survey) {
    let obj = hmax();
    let survey = Survey::evaluate(
        DMatrix::from_vec(2, 2, vec![0.9, 1.0, 1.1, 1.0]),
        &obj,
    )
    .unwrap();
    (obj, survey)
}
