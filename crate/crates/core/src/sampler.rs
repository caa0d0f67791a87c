//! Sampling a decreasing target density by iterating a conjugated map.
//!
//! For a target density `g` with distribution function `h`, the map
//! `F = h⁻¹ ∘ τ_k ∘ h`, where `τ_k(u) = k·u mod 1`, preserves the measure
//! `g dx`. Its branches are increasing, and convex whenever `g` is decreasing.

use std::io::Write;
use std::sync::Arc;

use crate::ergodics::Orbit;
use crate::error::{Error, Result};
use crate::maps::branch::{bracket_inverse, AnalyticForm, Branch, RealFn};
use crate::maps::PiecewiseMap;
use crate::step::{fmt17, ClosedForm};
use crate::transfer::fp_pointwise;

pub const DEFAULT_BURN_IN: usize = 1000;

#[derive(Clone)]
pub struct TargetDistribution {
    name: String,
    density: RealFn,
    cdf: RealFn,
    inverse_cdf: Option<RealFn>,
    /// `h` is the identity, so conjugation leaves affine branches affine.
    identity: bool,
    density_sup: f64,
}

impl std::fmt::Debug for TargetDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetDistribution").field("name", &self.name).finish()
    }
}

impl TargetDistribution {
    /// A target given by its density and distribution function; `inverse_cdf` is optional.
    pub fn new(
        name: impl Into<String>,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse_cdf: Option<RealFn>,
    ) -> Self {
        let density: RealFn = Arc::new(density);
        // decreasing densities peak at 0
        let density_sup = (0..=64).map(|j| density(j as f64 / 64.0)).fold(0.0, f64::max);
        Self {
            name: name.into(),
            density,
            cdf: Arc::new(cdf),
            inverse_cdf,
            identity: false,
            density_sup,
        }
    }

    /// `g(x) = e^{1−x}/(e−1)` on [0,1].
    pub fn exponential() -> Self {
        let e = std::f64::consts::E;
        let c = e / (e - 1.0);
        Self::new(
            "exponential",
            move |x: f64| (1.0 - x).exp() / (e - 1.0),
            move |x: f64| c * (-(-x).exp_m1()),
            Some(Arc::new(move |y: f64| -(-y / c).ln_1p())),
        )
    }

    pub fn uniform() -> Self {
        let mut t = Self::new("uniform", |_| 1.0, |x| x, Some(Arc::new(|y| y)));
        t.identity = true;
        t
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (self.cdf)(x.clamp(0.0, 1.0))
    }

    pub fn density_sup(&self) -> f64 {
        self.density_sup
    }

    /// `h⁻¹(y)`, closed form when available, otherwise bracketed to 1e-12.
    pub fn inverse_cdf(&self, y: f64) -> Result<f64> {
        let y = y.clamp(0.0, 1.0);
        if let Some(inv) = &self.inverse_cdf {
            return Ok(inv(y).clamp(0.0, 1.0));
        }
        bracket_inverse(|x| self.cdf(x), |x| self.density(x), y, 0.0, 1.0)
            .ok_or_else(|| Error::CdfNotInvertible(format!("{}: no root for h(x) = {y}", self.name)))
    }

    /// Check `h(0) = 0`, `h(1) = 1` and strict increase on a 64-point grid.
    pub fn check(&self) -> Result<()> {
        let fail = |why: String| Err(Error::CdfNotInvertible(format!("{}: {why}", self.name)));
        if self.cdf(0.0).abs() > 1e-12 || (self.cdf(1.0) - 1.0).abs() > 1e-12 {
            return fail(format!("h(0) = {}, h(1) = {}", self.cdf(0.0), self.cdf(1.0)));
        }
        let hs: Vec<f64> = (0..64).map(|j| self.cdf(j as f64 / 63.0)).collect();
        if let Some(j) = hs.windows(2).position(|w| !(w[1] > w[0])) {
            return fail(format!("not strictly increasing near x = {}", j as f64 / 63.0));
        }
        Ok(())
    }
}

/// `h⁻¹ ∘ (k·u mod 1) ∘ h` as a `k`-branch map.
pub fn conjugated_map(target: &TargetDistribution, k: usize) -> Result<PiecewiseMap> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("branch count k must be at least 2, got {k}")));
    }
    target.check()?;
    let kf = k as f64;
    let mut cuts = Vec::with_capacity(k + 1);
    cuts.push(0.0);
    for j in 1..k {
        cuts.push(target.inverse_cdf(j as f64 / kf)?);
    }
    cuts.push(1.0);

    let mut branches = Vec::with_capacity(k);
    for j in 0..k {
        let (a, b) = (cuts[j], cuts[j + 1]);
        let jf = j as f64;
        let br = if target.identity {
            Branch::affine(a, b, kf, -jf)?
        } else {
            let (t1, t2, t3) = (target.clone(), target.clone(), target.clone());
            let forward = move |x: f64| {
                let u = (kf * t1.cdf(x) - jf).clamp(0.0, 1.0);
                t1.inverse_cdf(u).unwrap_or(f64::NAN)
            };
            let fwd = forward.clone();
            Branch::analytic(
                a,
                b,
                AnalyticForm {
                    forward: Arc::new(forward),
                    derivative: Arc::new(move |x: f64| kf * t2.density(x) / t2.density(fwd(x))),
                    inverse: Some(Arc::new(move |y: f64| {
                        t3.inverse_cdf((t3.cdf(y) + jf) / kf).unwrap_or(f64::NAN)
                    })),
                },
            )?
        };
        branches.push(br);
    }
    PiecewiseMap::finite(format!("conjugated_{}_k{k}", target.name()), branches)
}

/// `max |P_F g − g|` over `points` equally spaced points of [0,1].
pub fn pf_fixed_point_check(target: &TargetDistribution, k: usize, points: usize, tail_tol: f64) -> Result<f64> {
    let map = conjugated_map(target, k)?;
    let g = ClosedForm::new(|x: f64| target.density(x), target.density_sup());
    let mut worst: f64 = 0.0;
    for p in 0..points {
        let x = if points == 1 { 0.0 } else { p as f64 / (points - 1) as f64 };
        let pg = fp_pointwise(&map, &g, x, tail_tol)?;
        worst = worst.max((pg.value - target.density(x)).abs());
    }
    Ok(worst)
}

/// `τ^{burn_in+1}(x0), …, τ^{burn_in+count}(x0)` along a jittered orbit.
pub fn sample(map: &PiecewiseMap, x0: f64, count: usize, burn_in: usize, jitter_seed: u64) -> Result<Vec<f64>> {
    let mut orbit = Orbit::new(map, x0, jitter_seed, 0);
    orbit.advance(burn_in)?;
    (0..count).map(|_| orbit.step()).collect()
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    });
    Ok(d.clamp(0.0, 1.0))
}

/// Lag-1 autocorrelation of the sample sequence (reported, never gated).
pub fn lag1_autocorrelation(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = samples.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// One value per line, header `x`.
pub fn write_samples<W: Write>(mut w: W, samples: &[f64]) -> std::io::Result<()> {
    writeln!(w, "x")?;
    for &x in samples {
        writeln!(w, "{}", fmt17(x))?;
    }
    Ok(())
}

pub fn write_sample_summary<W: Write>(mut w: W, count: usize, ks: f64, burn_in: usize, seed: u64) -> std::io::Result<()> {
    writeln!(w, "count,ks,burn_in,seed")?;
    writeln!(w, "{count},{},{burn_in},{seed}", fmt17(ks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_target_is_consistent() {
        let t = TargetDistribution::exponential();
        t.check().unwrap();
        for j in 0..64 {
            let x = (j as f64 + 0.5) / 64.0;
            let h = 1e-6;
            let d = (t.cdf(x + h) - t.cdf(x - h)) / (2.0 * h);
            assert!((d - t.density(x)).abs() < 1e-8);
            assert_relative_eq!(t.inverse_cdf(t.cdf(x)).unwrap(), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn first_cut_of_exponential_k5() {
        let m = conjugated_map(&TargetDistribution::exponential(), 5).unwrap();
        let e = std::f64::consts::E;
        let expect = -(1.0 - 0.2 * (e - 1.0) / e).ln();
        assert_relative_eq!(m.prefix()[0].b(), expect, epsilon = 1e-15);
        assert_relative_eq!(expect, 0.135_160_274_836_81, epsilon = 1e-12);
    }

    #[test]
    fn uniform_k2_is_doubling() {
        let m = conjugated_map(&TargetDistribution::uniform(), 2).unwrap();
        let d = builtin::doubling();
        for j in 0..=100 {
            let x = j as f64 / 100.0;
            assert_eq!(m.apply(x).unwrap().value, d.apply(x).unwrap().value);
        }
    }

    #[test]
    fn numeric_inverse_path() {
        let t = TargetDistribution::new("lin", |x| 1.5 - x, |x| 1.5 * x - 0.5 * x * x, None);
        let x = t.inverse_cdf(t.cdf(0.3)).unwrap();
        assert_relative_eq!(x, 0.3, epsilon = 1e-11);
        let m = conjugated_map(&t, 3).unwrap();
        assert_eq!(m.prefix_len(), 3);
    }

    #[test]
    fn bad_cdf_rejected() {
        let t = TargetDistribution::new("bad", |_| 1.0, |x| 0.5 * x, None);
        assert!(matches!(conjugated_map(&t, 2), Err(Error::CdfNotInvertible(_))));
        assert!(conjugated_map(&TargetDistribution::uniform(), 1).is_err());
    }

    #[test]
    fn ks_examples() {
        let n = 40;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        assert_relative_eq!(ks_distance(&xs, |x| x).unwrap(), 0.5 / n as f64, epsilon = 1e-15);
        assert_eq!(ks_distance(&[0.0; 7], |x| x).unwrap(), 1.0);
        assert!(matches!(ks_distance(&[], |x| x), Err(Error::EmptySamples)));
    }

    #[test]
    fn zero_count_sample() {
        assert!(sample(&builtin::doubling(), 0.3, 0, 10, 0).unwrap().is_empty());
    }
}
