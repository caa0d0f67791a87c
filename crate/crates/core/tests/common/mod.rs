#![allow(dead_code)]

use acim_core::StepFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BUILTINS: [&str; 5] = ["shifted_linear", "harmonic", "three_branch", "doubling", "conjugated_exp"];

pub fn map(name: &str) -> acim_core::PiecewiseMap {
    acim_core::maps::builtin(name, Some(5)).unwrap()
}

/// Non-negative, non-increasing step density with 1..=16 pieces and unit mass.
pub fn random_decreasing(rng: &mut ChaCha8Rng) -> StepFunction {
    let pieces = rng.random_range(1..=16);
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.random_range(0.001..0.999)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let mut breaks = vec![0.0];
    breaks.extend(cuts);
    breaks.push(1.0);
    let mut values: Vec<f64> = (0..breaks.len() - 1).map(|_| rng.random_range(0.0..5.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values[0] += 0.1;
    let f = StepFunction::density(breaks, values).unwrap();
    f.scale(1.0 / f.integral())
}

pub fn decreasing_family(count: usize, seed: u64) -> Vec<StepFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_decreasing(&mut rng)).collect()
}
