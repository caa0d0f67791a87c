//! Orbit statistics: correlation decay, Birkhoff averages and the CLT variance.
//!
//! Floating-point orbits of maps with dyadic slopes collapse onto periodic
//! orbits within a few dozen steps (for the doubling map every double reaches
//! 0 after at most 1075 iterations). Every orbit step therefore adds a uniform
//! perturbation of size [`JITTER`], drawn from a seeded ChaCha stream.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::maps::PiecewiseMap;
use crate::par::{map_chunks, Execution};
use crate::step::{fmt17, Observable, StepFunction};
use crate::transfer::fp_step;
use crate::ulam::log_linear_fit;

pub const JITTER: f64 = 1e-13;
/// Iterates this far outside [0,1] indicate an arithmetic bug, not rounding.
pub const ESCAPE_TOL: f64 = 1e-9;
/// `|C_n|` below this is treated as numerical zero by [`fit_decay`].
pub const DECAY_FLOOR: f64 = 1e-14;

/// A jittered orbit of a map.
pub struct Orbit<'a> {
    map: &'a PiecewiseMap,
    x: f64,
    rng: ChaCha8Rng,
    jitter: f64,
    steps: usize,
}

impl<'a> Orbit<'a> {
    /// `stream` selects an independent ChaCha stream under the same seed.
    pub fn new(map: &'a PiecewiseMap, x0: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            map,
            x: x0.clamp(0.0, 1.0),
            rng,
            jitter: JITTER,
            steps: 0,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn step(&mut self) -> Result<f64> {
        let y = self.map.apply(self.x)?.value;
        self.steps += 1;
        if !(-ESCAPE_TOL..=1.0 + ESCAPE_TOL).contains(&y) {
            return Err(Error::OrbitEscape {
                step: self.steps,
                value: y,
            });
        }
        let mut z = y;
        if self.jitter > 0.0 {
            z += self.jitter * (2.0 * self.rng.random::<f64>() - 1.0);
        }
        // reflect back into [0,1]
        if z < 0.0 {
            z = -z;
        }
        if z > 1.0 {
            z = (2.0 - z).max(0.0);
        }
        self.x = z;
        Ok(z)
    }

    pub fn advance(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMethod {
    ExactMatrix,
    OrbitAverage,
}

/// Orbit length, burn-in and seed for the orbit-average method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Independent orbits the length is split across; at least two, since
    /// their spread is the standard error.
    pub streams: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            length: 1_000_000,
            burn_in: 1000,
            seed: 0,
            streams: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    /// `C_n` for `n = 0..=n_max`.
    pub values: Vec<f64>,
    pub method: CorrelationMethod,
    pub q: f64,
    pub c_prefactor: f64,
    /// The decay fit had fewer than three values above the floor.
    pub fit_flagged: bool,
    /// Standard error of each orbit-average value; zeros for the exact method.
    pub std_error: Vec<f64>,
    pub truncation_bound: f64,
}

impl CorrelationReport {
    /// CSV `n,C_n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,C_n")?;
        for (n, c) in self.values.iter().enumerate() {
            writeln!(w, "{n},{}", fmt17(*c))?;
        }
        Ok(())
    }
}

/// `C_n = ∫ f·(g∘τⁿ) dμ − ∫f dμ ∫g dμ` for `n = 0..=n_max`.
///
/// The exact method pushes `f·μ` through the step operator and pairs with `g`;
/// the orbit method averages along jittered orbits started from `μ`.
pub fn correlations(
    map: &PiecewiseMap,
    mu: &StepFunction,
    f: &StepFunction,
    g: &StepFunction,
    n_max: usize,
    method: CorrelationMethod,
    tail_tol: f64,
    orbit: OrbitOptions,
    exec: Execution,
) -> Result<CorrelationReport> {
    let mass = mu.integral();
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument("invariant density has no mass".into()));
    }
    let mu = mu.scale(1.0 / mass);
    let (values, std_error, truncation_bound) = match method {
        CorrelationMethod::ExactMatrix => {
            let mean_f = f.integrate_product(&mu);
            let mean_g = g.integrate_product(&mu);
            let mut phi = f.mul(&mu);
            let mut values = Vec::with_capacity(n_max + 1);
            let mut bound = 0.0;
            for n in 0..=n_max {
                if n > 0 {
                    let p = fp_step(map, &phi, tail_tol).map_err(|e| match e {
                        Error::NonAffineBranch { .. } => {
                            Error::MethodUnavailable("exact-matrix correlations need affine branches")
                        }
                        other => other,
                    })?;
                    bound += p.truncation_bound;
                    phi = p.density;
                }
                values.push(g.integrate_product(&phi) - mean_f * mean_g);
            }
            (values, vec![0.0; n_max + 1], bound * g.sup_abs())
        }
        CorrelationMethod::OrbitAverage => orbit_correlations(map, &mu, f, g, n_max, orbit, exec)?,
    };
    let fit = fit_decay_above_noise(&values, &std_error, 1..n_max + 1);
    Ok(CorrelationReport {
        values,
        method,
        q: fit.q,
        c_prefactor: fit.prefactor,
        fit_flagged: fit.flagged,
        std_error,
        truncation_bound,
    })
}

/// Per-stream estimates are treated as batch means: the spread across
/// independent streams gives the standard error without modelling the serial
/// correlation inside an orbit.
fn orbit_correlations(
    map: &PiecewiseMap,
    mu: &StepFunction,
    f: &StepFunction,
    g: &StepFunction,
    n_max: usize,
    opts: OrbitOptions,
    exec: Execution,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let streams = opts.streams.max(2);
    let per = (opts.length / streams).max(n_max + 2);
    let parts = map_chunks(exec, 0..streams, 1, |r| -> Result<Vec<Vec<f64>>> {
        r.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(1_000_000 + s as u64);
            let x0 = mu.quantile(rng.random::<f64>());
            let mut orbit = Orbit::new(map, x0, opts.seed, s as u64);
            orbit.advance(opts.burn_in)?;
            let mut xs = Vec::with_capacity(per);
            for _ in 0..per {
                xs.push(orbit.step()?);
            }
            let fx: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
            let gx: Vec<f64> = xs.iter().map(|&x| g.eval(x)).collect();
            let count = per - n_max;
            let mf = fx[..count].iter().sum::<f64>() / count as f64;
            let mg = gx[..count].iter().sum::<f64>() / count as f64;
            Ok((0..=n_max)
                .map(|n| (0..count).map(|t| fx[t] * gx[t + n]).sum::<f64>() / count as f64 - mf * mg)
                .collect())
        })
        .collect()
    });
    let mut batches = Vec::with_capacity(streams);
    for chunk in parts {
        batches.extend(chunk?);
    }
    let b = batches.len() as f64;
    let values: Vec<f64> = (0..=n_max).map(|n| batches.iter().map(|c| c[n]).sum::<f64>() / b).collect();
    let se: Vec<f64> = (0..=n_max)
        .map(|n| {
            let var = batches.iter().map(|c| (c[n] - values[n]).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
        .collect();
    Ok((values, se, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub q: f64,
    pub prefactor: f64,
    /// Fewer than three values above the noise; `q` is reported as 0.
    pub flagged: bool,
}

/// `|C_n|` below this fraction of the largest value is roundoff.
const DECAY_RELATIVE_FLOOR: f64 = 1e-9;

/// Least-squares fit of `ln|C_n|` against `n` over `range`.
pub fn fit_decay(values: &[f64], range: std::ops::Range<usize>) -> DecayFit {
    fit_decay_above_noise(values, &[], range)
}

/// Like [`fit_decay`], but the fit stops at the first value that is not clearly
/// above the noise: the absolute floor, a relative roundoff floor, or two
/// standard errors when `std_error` is given.
///
/// Stopping at the first such value rather than skipping it keeps a plateau of
/// roundoff or sampling noise out of the fit.
pub fn fit_decay_above_noise(values: &[f64], std_error: &[f64], range: std::ops::Range<usize>) -> DecayFit {
    let top = values.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let floor = DECAY_FLOOR.max(DECAY_RELATIVE_FLOOR * top);
    let points: Vec<(f64, f64)> = range
        .map_while(|n| {
            let c = values.get(n)?.abs();
            let noise = floor.max(2.0 * std_error.get(n).copied().unwrap_or(0.0));
            (c > noise).then_some((n as f64, c))
        })
        .collect();
    if points.len() < 3 {
        return DecayFit {
            q: 0.0,
            prefactor: 0.0,
            flagged: true,
        };
    }
    let (q, prefactor) = log_linear_fit(&points);
    DecayFit {
        q,
        prefactor,
        flagged: false,
    }
}

/// `(1/n) Σ_{k=burn_in}^{burn_in+n−1} f(τᵏ x0)` along a jittered orbit.
pub fn birkhoff<O: Observable + ?Sized>(
    map: &PiecewiseMap,
    f: &O,
    x0: f64,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("Birkhoff average needs n ≥ 1".into()));
    }
    let mut orbit = Orbit::new(map, x0, seed, 0);
    orbit.advance(burn_in)?;
    let mut sum = f.value(orbit.position());
    for _ in 1..n {
        sum += f.value(orbit.step()?);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub sigma2: f64,
    pub n: usize,
    pub samples: usize,
    pub normal_distance: f64,
    /// `C_0 + 2 Σ_{k≥1} C_k` from exact correlations; absent for non-affine maps.
    pub green_kubo: Option<f64>,
    /// All normalized sums were equal; no normal comparison is possible.
    pub degenerate: bool,
    #[serde(skip)]
    pub sums: Vec<f64>,
}

impl CltReport {
    /// Normalized sums, header `s`.
    pub fn write_sums<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s")?;
        for s in &self.sums {
            writeln!(w, "{}", fmt17(*s))?;
        }
        Ok(())
    }

    /// Header plus one row: `sigma2,normal_distance,green_kubo`.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sigma2,normal_distance,green_kubo")?;
        let gk = self.green_kubo.map_or_else(|| "nan".to_string(), fmt17);
        writeln!(w, "{},{},{gk}", fmt17(self.sigma2), fmt17(self.normal_distance))
    }
}

/// Bins for the Green–Kubo discretization of a closed-form observable.
pub const GREEN_KUBO_BINS: usize = 1024;
const GREEN_KUBO_LAGS: usize = 200;

/// Distribution of `S_n/√n` over `samples` orbits started from `μ`.
pub fn clt_probe<O: Observable + ?Sized>(
    map: &PiecewiseMap,
    mu: &StepFunction,
    f: &O,
    n: usize,
    samples: usize,
    seed: u64,
    tail_tol: f64,
    exec: Execution,
) -> Result<CltReport> {
    if n < 100 {
        return Err(Error::InvalidArgument(format!("block length must be at least 100, got {n}")));
    }
    if samples == 0 {
        return Err(Error::EmptySamples);
    }
    let mass = mu.integral();
    let mu = mu.scale(1.0 / mass);
    let mean = f.integrate_against(&mu);
    if mean.abs() > 1e-6 {
        return Err(Error::NotCentered { mean });
    }
    let root = (n as f64).sqrt();
    let chunks = map_chunks(exec, 0..samples, 64, |r| -> Result<Vec<f64>> {
        r.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let x0 = mu.quantile(rng.random::<f64>());
            let mut orbit = Orbit::new(map, x0, seed, (1 << 32) + s as u64);
            let mut sum = f.value(orbit.position());
            for _ in 1..n {
                sum += f.value(orbit.step()?);
            }
            Ok(sum / root)
        })
        .collect()
    });
    let mut sums = Vec::with_capacity(samples);
    for c in chunks {
        sums.extend(c?);
    }
    let m = sums.len() as f64;
    let avg = sums.iter().sum::<f64>() / m;
    let sigma2 = sums.iter().map(|s| (s - avg).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let degenerate = sigma2 <= f64::MIN_POSITIVE;
    let normal_distance = if degenerate {
        0.0
    } else {
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        crate::sampler::ks_distance(&sums, |x| normal.cdf(x))?
    };
    Ok(CltReport {
        sigma2,
        n,
        samples,
        normal_distance,
        green_kubo: green_kubo(map, &mu, f, tail_tol)?,
        degenerate,
        sums,
    })
}

/// Green–Kubo variance from exact step correlations.
///
/// `None` when the map is not affine, or when its countable tail would need
/// more than [`STEP_BRANCH_CAP`](crate::transfer::STEP_BRANCH_CAP) branches per step.
pub fn green_kubo<O: Observable + ?Sized>(map: &PiecewiseMap, mu: &StepFunction, f: &O, tail_tol: f64) -> Result<Option<f64>> {
    let fs = StepFunction::discretize(|x| f.value(x), GREEN_KUBO_BINS)?;
    let rep = match correlations(
        map,
        mu,
        &fs,
        &fs,
        GREEN_KUBO_LAGS,
        CorrelationMethod::ExactMatrix,
        tail_tol,
        OrbitOptions::default(),
        Execution::Sequential,
    ) {
        Ok(r) => r,
        Err(Error::MethodUnavailable(_) | Error::TruncationOverflow { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(rep.values[0] + 2.0 * rep.values[1..].iter().sum::<f64>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use crate::step::ClosedForm;
    use approx::assert_relative_eq;

    fn lebesgue() -> StepFunction {
        StepFunction::constant(1.0)
    }

    #[test]
    fn constant_observable_has_no_correlation() {
        let m = builtin::doubling();
        let f = StepFunction::discretize(|x| x, 64).unwrap();
        let g = StepFunction::constant(3.0);
        let r = correlations(
            &m,
            &lebesgue(),
            &f,
            &g,
            5,
            CorrelationMethod::ExactMatrix,
            1e-8,
            OrbitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert!(r.values.iter().all(|c| c.abs() < 1e-15));
        assert!(r.fit_flagged);
    }

    #[test]
    fn doubling_first_lag() {
        let m = builtin::doubling();
        let f = StepFunction::discretize(|x| x - 0.5, 256).unwrap();
        let r = correlations(
            &m,
            &lebesgue(),
            &f,
            &f,
            12,
            CorrelationMethod::ExactMatrix,
            1e-8,
            OrbitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert!((r.values[1] - 1.0 / 24.0).abs() < 1e-3, "{:?}", &r.values[..4]);
        assert!((0.45..=0.55).contains(&r.q), "{}", r.q);
    }

    #[test]
    fn three_branch_quarter_indicator() {
        let m = builtin::three_branch();
        let mu = StepFunction::indicator(0.0, 0.5, 2.0).unwrap();
        let f = StepFunction::indicator(0.0, 0.25, 1.0).unwrap();
        let r = correlations(
            &m,
            &mu,
            &f,
            &f,
            3,
            CorrelationMethod::ExactMatrix,
            1e-8,
            OrbitOptions::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert!(r.values[1].abs() < 1e-15);
        assert_relative_eq!(r.values[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn exact_method_needs_affine_branches() {
        let m = builtin::conjugated_exp(3).unwrap();
        let f = StepFunction::constant(1.0);
        let r = correlations(
            &m,
            &lebesgue(),
            &f,
            &f,
            2,
            CorrelationMethod::ExactMatrix,
            1e-8,
            OrbitOptions::default(),
            Execution::Sequential,
        );
        assert!(matches!(r, Err(Error::MethodUnavailable(_))));
    }

    #[test]
    fn geometric_fit_is_exact() {
        let v: Vec<f64> = (0..20).map(|n| 0.5f64.powi(n) / 12.0).collect();
        let fit = fit_decay(&v, 0..20);
        assert!((fit.q - 0.5).abs() < 1e-12);
        assert!(fit_decay(&[0.0; 10], 0..10).flagged);
    }

    #[test]
    fn fit_stops_at_the_noise_plateau() {
        let mut v: Vec<f64> = (0..9).map(|n| 0.5f64.powi(n) / 48.0).collect();
        v.extend([5.7e-14; 12]);
        let fit = fit_decay(&v, 1..21);
        assert!((fit.q - 0.5).abs() < 1e-12, "{fit:?}");

        let v = [1.0, 0.3, 0.09, 0.027, 0.004, 0.006, 0.003];
        let se = [0.0, 0.002, 0.002, 0.002, 0.002, 0.002, 0.002];
        let fit = fit_decay_above_noise(&v, &se, 1..7);
        assert!((fit.q - 0.3).abs() < 1e-12, "{fit:?}");
    }

    #[test]
    fn birkhoff_constant_and_escape_guard() {
        let m = builtin::doubling();
        let c = ClosedForm::new(|_| 2.5, 2.5);
        assert_eq!(birkhoff(&m, &c, 0.1, 100, 10, 0).unwrap(), 2.5);
        assert!(birkhoff(&m, &c, 0.1, 0, 10, 0).is_err());
    }

    #[test]
    fn orbits_do_not_collapse() {
        let m = builtin::doubling();
        let mut o = Orbit::new(&m, 0.3, 1, 0);
        o.advance(5000).unwrap();
        let tail: Vec<f64> = (0..100).map(|_| o.step().unwrap()).collect();
        assert!(tail.iter().any(|&x| x > 0.1));
        let mut p = Orbit::new(&m, 0.3, 1, 0).with_jitter(0.0);
        p.advance(2000).unwrap();
        assert_eq!(p.position(), 0.0);
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let m = builtin::doubling();
        let z = ClosedForm::new(|_| 0.0, 0.0);
        let r = clt_probe(&m, &lebesgue(), &z, 100, 50, 0, 1e-8, Execution::Sequential).unwrap();
        assert_eq!(r.sigma2, 0.0);
        assert!(r.degenerate);
        let off = ClosedForm::new(|x| x, 1.0);
        assert!(matches!(
            clt_probe(&m, &lebesgue(), &off, 100, 10, 0, 1e-8, Execution::Sequential),
            Err(Error::NotCentered { .. })
        ));
    }
}
