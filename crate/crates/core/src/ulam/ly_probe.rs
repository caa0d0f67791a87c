use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{min_slope_certificate, PiecewiseMap};
use crate::step::StepFunction;
use crate::transfer::fp_step;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub label: String,
    pub var_f: f64,
    pub var_pnf: f64,
    pub l1: f64,
    /// Smallest `B` that makes this function satisfy the inequality.
    pub b_needed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyProbeReport {
    pub n: usize,
    pub b_n_est: f64,
    /// `½ + B_n` bounds `‖Pⁿf‖_BV` by `C‖f‖_BV` when `‖·‖_BV = var + ‖·‖₁`.
    pub c_est: f64,
    /// False when `n` is below the order at which `inf (τⁿ)′ ≥ 2` is certified.
    pub expansion_certified: bool,
    pub witnesses: Vec<Witness>,
}

impl LyProbeReport {
    /// Re-check `var(Pⁿf) ≤ ½ var(f) + B‖f‖₁` on every witness.
    pub fn holds_with(&self, b: f64) -> bool {
        self.witnesses
            .iter()
            .all(|w| w.var_pnf <= 0.5 * w.var_f + b * w.l1 + 1e-12 * (1.0 + w.var_pnf))
    }
}

fn random_density(rng: &mut ChaCha8Rng) -> StepFunction {
    let pieces = rng.random_range(1..=24);
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut breaks = vec![0.0];
    breaks.extend(cuts.into_iter().filter(|&c| c > 0.0 && c < 1.0));
    breaks.push(1.0);
    let values = (0..breaks.len() - 1).map(|_| rng.random::<f64>() * 4.0).collect();
    StepFunction::density(breaks, values).expect("sorted random grid")
}

/// Test family: `family_size` random step densities, indicators of `[0,t)`, and alternating combs.
fn family(family_size: usize, seed: u64) -> Vec<(String, StepFunction)> {
    let mut out = vec![("constant".to_string(), StepFunction::constant(1.0))];
    for t in [0.125, 0.25, 0.5, 0.75] {
        out.push((format!("indicator[0,{t})"), StepFunction::indicator(0.0, t, 1.0).expect("valid")));
    }
    for m in 1..=6 {
        let bins = 1usize << m;
        let values = (0..bins).map(|j| if j % 2 == 0 { 1.0 } else { 0.0 }).collect();
        out.push((format!("comb{bins}"), StepFunction::from_bins(values).expect("valid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..family_size {
        out.push((format!("random{i}"), random_density(&mut rng)));
    }
    out
}

/// Empirical constant `B_n` in `var(Pⁿf) ≤ ½ var(f) + B_n ‖f‖₁` over a test family.
pub fn ly_probe(map: &PiecewiseMap, n: usize, family_size: usize, seed: u64, tail_tol: f64) -> Result<LyProbeReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("iterate order must be at least 1".into()));
    }
    let expansion_certified = match min_slope_certificate(map, 2.0, n, tail_tol.max(1e-4)) {
        Ok((n0, _)) => n0 <= n,
        Err(Error::NotReached { .. } | Error::TruncationOverflow { .. }) => false,
        Err(e) => return Err(e),
    };
    if !expansion_certified {
        log::warn!("order {n} is below the certified expansion order; the factor 1/2 is not guaranteed");
    }
    let mut witnesses = Vec::new();
    for (label, f) in family(family_size, seed) {
        let mut g = f.clone();
        for _ in 0..n {
            g = fp_step(map, &g, tail_tol)?.density;
        }
        let (var_f, var_pnf, l1) = (f.variation(), g.variation(), f.l1_norm());
        let b_needed = if l1 > 0.0 {
            ((var_pnf - 0.5 * var_f) / l1).max(0.0)
        } else {
            0.0
        };
        witnesses.push(Witness {
            label,
            var_f,
            var_pnf,
            l1,
            b_needed,
        });
    }
    let b_n_est = witnesses.iter().map(|w| w.b_needed).fold(0.0, f64::max);
    Ok(LyProbeReport {
        n,
        b_n_est,
        c_est: 0.5 + b_n_est,
        expansion_certified,
        witnesses,
    })
}
