use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::matrix::UlamMatrix;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::step::{fmt17, StepFunction};

/// Norms below this fraction of the starting norm count as zero.
pub const GAP_FLOOR: f64 = 1e-14;
/// Window (in iterations) for the geometric-mean estimate of `|λ₂|`.
const LAMBDA_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityResult {
    pub density: StepFunction,
    /// Probability vector over bins.
    pub mass: Vec<f64>,
    pub iterations: usize,
    /// `‖ρM − ρ‖₁` at termination, measured before renormalizing.
    pub residual: f64,
    pub converged: bool,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Left fixed vector of `m` by power iteration from the uniform vector.
///
/// Non-convergence is reported through `converged = false` with the best iterate.
pub fn invariant_density(m: &UlamMatrix, tol: f64, max_iter: usize, exec: Execution) -> Result<DensityResult> {
    let n = m.n_bins();
    let mut rho = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = m.left_mul(&rho, exec);
        iterations += 1;
        residual = next.iter().zip(&rho).map(|(a, b)| (a - b).abs()).sum();
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("all mass leaked out of the Ulam matrix".into()));
        }
        rho = next.into_iter().map(|x| x / total).collect();
        if residual <= tol {
            break;
        }
    }
    let density = StepFunction::density(
        crate::step::uniform_breaks(n),
        rho.iter().map(|&p| (p * n as f64).max(0.0)).collect(),
    )?;
    if residual > tol {
        log::warn!("power iteration stopped at residual {residual:e} after {iterations} iterations");
    }
    Ok(DensityResult {
        density,
        mass: rho,
        iterations,
        residual,
        converged: residual <= tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lambda2 {
    pub value: f64,
    pub iterations: usize,
    /// Change of the windowed estimate over the last window.
    pub residual: f64,
    pub converged: bool,
}

fn project(u: &mut [f64], rho: &[f64]) {
    let s: f64 = u.iter().sum();
    u.iter_mut().zip(rho).for_each(|(x, r)| *x -= s * r);
}

/// `|λ₂|` by power iteration on the zero-sum subspace, deflated against `ρ`.
pub fn second_eigenvalue(m: &UlamMatrix, rho: &[f64], tol: f64, max_iter: usize, exec: Execution) -> Result<Lambda2> {
    let n = m.n_bins();
    if rho.len() != n {
        return Err(Error::InvalidArgument(format!("density has {} bins, matrix {n}", rho.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2b);
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project(&mut u, rho);
    let start = l1(&u);
    u.iter_mut().for_each(|x| *x /= start);

    // log of the norm ratios, most recent last
    let mut logs: Vec<f64> = Vec::new();
    let mut prev_est = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = m.left_mul(&u, exec);
        project(&mut next, rho);
        let norm = l1(&next);
        if norm <= 1e-13 {
            return Ok(Lambda2 {
                value: 0.0,
                iterations: it,
                residual: 0.0,
                converged: true,
            });
        }
        logs.push(norm.ln());
        u = next.into_iter().map(|x| x / norm).collect();
        if logs.len() >= LAMBDA_WINDOW {
            let w = &logs[logs.len() - LAMBDA_WINDOW..];
            let est = (w.iter().sum::<f64>() / LAMBDA_WINDOW as f64).exp();
            residual = (est - prev_est).abs();
            prev_est = est;
            if residual <= tol && it >= 2 * LAMBDA_WINDOW {
                return Ok(Lambda2 {
                    value: est.min(1.0),
                    iterations: it,
                    residual,
                    converged: true,
                });
            }
        }
    }
    let value = if prev_est.is_nan() {
        logs.iter().sum::<f64>().exp().powf(1.0 / logs.len().max(1) as f64)
    } else {
        prev_est
    };
    Ok(Lambda2 {
        value: value.min(1.0),
        iterations: max_iter,
        residual,
        converged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapFit {
    pub q_fit: f64,
    pub h_fit: f64,
    /// `max_u ‖u Mⁿ‖₁` for `n = 0..=n_max` over the probe vectors.
    pub norms: Vec<f64>,
    /// True when the sequence collapsed to zero before a fit was possible.
    pub degenerate: bool,
}

/// Least-squares fit of `ln y_n = ln H + n ln q` over the given `(n, y_n)` points.
pub(crate) fn log_linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y.ln() - my);
    }
    let slope = sxy / sxx;
    (slope.exp(), (my - slope * mx).exp())
}

/// Decay of zero-mean probes under `M`; fits `‖u Mⁿ‖ ≈ H qⁿ`.
///
/// Probes are `δ_k − ρ` for five spread-out bins `k`. The fit uses the second
/// half of the prefix above [`GAP_FLOOR`], so the transient is skipped. A
/// sequence that drops from above `1e-6` straight to below the floor comes from
/// a nilpotent restriction; it is reported as `q = 0`, flagged degenerate.
pub fn spectral_gap_probe(m: &UlamMatrix, rho: &[f64], n_max: usize, exec: Execution) -> Result<GapFit> {
    let n = m.n_bins();
    if rho.len() != n {
        return Err(Error::InvalidArgument(format!("density has {} bins, matrix {n}", rho.len())));
    }
    let picks = [0, n / 4, n / 2, (3 * n) / 4, n - 1];
    let mut norms = vec![0.0f64; n_max + 1];
    for &k in &picks {
        let mut u: Vec<f64> = rho.iter().map(|r| -r).collect();
        u[k] += 1.0;
        norms[0] = norms[0].max(l1(&u));
        for slot in norms.iter_mut().skip(1) {
            u = m.left_mul(&u, exec);
            project(&mut u, rho);
            *slot = slot.max(l1(&u));
        }
    }
    let floor = GAP_FLOOR * norms[0];
    let live = norms.iter().take_while(|&&v| v > floor).count();
    let collapsed = live <= n_max && live > 0 && norms[live - 1] > 1e-6 * norms[0];
    if live < 3 || collapsed {
        return Ok(GapFit {
            q_fit: 0.0,
            h_fit: norms[0],
            norms,
            degenerate: true,
        });
    }
    let from = live / 2;
    let points: Vec<(f64, f64)> = (from..live).map(|i| (i as f64, norms[i])).collect();
    let (q, h) = if points.len() >= 2 {
        log_linear_fit(&points)
    } else {
        ((norms[live - 1] / norms[live - 2]), norms[0])
    };
    Ok(GapFit {
        q_fit: q.min(1.0),
        h_fit: h,
        norms,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    #[serde(skip)]
    pub density: StepFunction,
    pub lambda2_abs: f64,
    pub q_fit: f64,
    pub h_fit: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub gap_degenerate: bool,
    pub max_row_defect: f64,
}

/// Density, `|λ₂|` and the decay fit for one matrix.
pub fn spectral_report(m: &UlamMatrix, tol: f64, max_iter: usize, n_max: usize, exec: Execution) -> Result<SpectralReport> {
    let d = invariant_density(m, tol, max_iter, exec)?;
    let l2 = second_eigenvalue(m, &d.mass, 1e-10, max_iter, exec)?;
    let gap = spectral_gap_probe(m, &d.mass, n_max, exec)?;
    Ok(SpectralReport {
        density: d.density,
        lambda2_abs: l2.value,
        q_fit: gap.q_fit,
        h_fit: gap.h_fit,
        iterations: d.iterations,
        residual: d.residual,
        converged: d.converged,
        gap_degenerate: gap.degenerate,
        max_row_defect: m.row_defect().iter().copied().fold(0.0, f64::max),
    })
}

impl SpectralReport {
    /// Header plus one row: `lambda2,q_fit,H_fit,residual,iterations`.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda2,q_fit,H_fit,residual,iterations")?;
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(self.lambda2_abs),
            fmt17(self.q_fit),
            fmt17(self.h_fit),
            fmt17(self.residual),
            self.iterations
        )
    }
}
