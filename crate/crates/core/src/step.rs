//! Piecewise-constant functions on [0,1].
//!
//! A [`StepFunction`] stores breakpoints `0 = t0 < t1 < ... < tm = 1` and the
//! value on each half-open piece `[t_{j-1}, t_j)`; the last piece also owns
//! `x = 1`. Densities are step functions with non-negative values, built with
//! [`StepFunction::density`]. Observables used by the ergodic estimators may
//! take either sign.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Breakpoints closer than this are treated as the same point.
pub const MERGE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
    total: f64,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return Err(Error::InvalidStep(format!(
                "{} breakpoints for {} values",
                breaks.len(),
                values.len()
            )));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(Error::InvalidStep("breakpoints must run from 0 to 1".into()));
        }
        if let Some(j) = breaks.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidStep(format!("breakpoints not increasing at {j}")));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidStep(format!("non-finite value at {j}")));
        }
        let total = integral(&breaks, &values);
        Ok(Self { breaks, values, total })
    }

    /// Like [`new`](Self::new) but rejects negative values.
    pub fn density(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidStep(format!("negative density value at {j}")));
        }
        Self::new(breaks, values)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![c]).expect("constant step")
    }

    /// `c` on `[lo, hi)`, zero elsewhere.
    pub fn indicator(lo: f64, hi: f64, c: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidStep(format!("bad indicator interval [{lo}, {hi})")));
        }
        let mut breaks = vec![0.0];
        let mut values = Vec::new();
        if lo > 0.0 {
            breaks.push(lo);
            values.push(0.0);
        }
        values.push(c);
        breaks.push(hi);
        if hi < 1.0 {
            values.push(0.0);
            breaks.push(1.0);
        }
        Self::new(breaks, values)
    }

    /// Values on `n` uniform bins.
    pub fn from_bins(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let breaks = uniform_breaks(n);
        Self::new(breaks, values)
    }

    /// Bin averages of `f` on `n` uniform bins (Gauss–Legendre per bin).
    pub fn discretize(f: impl Fn(f64) -> f64, n: usize) -> Result<Self> {
        let h = 1.0 / n as f64;
        let values = (0..n)
            .map(|j| gauss_legendre(&f, j as f64 * h, (j + 1) as f64 * h) / h)
            .collect();
        Self::from_bins(values)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the piece owning `x` (right-continuous; `x = 1` belongs to the last piece).
    pub fn piece_index(&self, x: f64) -> usize {
        let m = self.values.len();
        if x >= 1.0 {
            return m - 1;
        }
        // first break strictly greater than x, minus one
        let k = self.breaks.partition_point(|&t| t <= x);
        k.saturating_sub(1).min(m - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.values[self.piece_index(x)]
    }

    /// L¹ integral (signed).
    pub fn integral(&self) -> f64 {
        self.total
    }

    pub fn l1_norm(&self) -> f64 {
        self.pieces().map(|(l, r, v)| v.abs() * (r - l)).sum()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// First piece index `j` with `values[j+1] > values[j] + tol`.
    pub fn first_increase(&self, tol: f64) -> Option<usize> {
        self.values.windows(2).position(|w| w[1] > w[0] + tol)
    }

    /// Total variation over I: sum of jump magnitudes at interior breakpoints.
    pub fn variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.breaks.clone(), self.values.iter().map(|v| v * c).collect())
            .expect("scaling preserves validity")
    }

    /// Combine two step functions pointwise on the merged breakpoint set.
    pub fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut all: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        all.sort_by(f64::total_cmp);
        let mut breaks: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            if breaks.last().is_none_or(|&l| t - l > MERGE_TOL) {
                breaks.push(t);
            }
        }
        *breaks.last_mut().unwrap() = 1.0;
        let values = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                op(self.eval(mid), other.eval(mid))
            })
            .collect();
        Self::new(breaks, values).expect("merged grid is valid")
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    /// ∫ self · other dm, exact on the merged grid.
    pub fn integrate_product(&self, other: &Self) -> f64 {
        self.mul(other).integral()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.zip_with(other, |a, b| (a - b).abs()).integral()
    }

    /// Merge adjacent pieces carrying identical values.
    pub fn canonical(&self) -> Self {
        let mut breaks = vec![0.0];
        let mut values: Vec<f64> = Vec::new();
        for (_, r, v) in self.pieces() {
            if values.last() == Some(&v) {
                *breaks.last_mut().unwrap() = r;
            } else {
                values.push(v);
                breaks.push(r);
            }
        }
        Self::new(breaks, values).expect("canonical form is valid")
    }

    /// Averages over `n` uniform bins.
    pub fn bin_averages(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let mut out = vec![0.0; n];
        for (l, r, v) in self.pieces() {
            let first = ((l * n as f64).floor() as usize).min(n - 1);
            let last = ((r * n as f64).ceil() as usize).min(n);
            for (k, slot) in out.iter_mut().enumerate().take(last).skip(first) {
                let lo = l.max(k as f64 * h);
                let hi = r.min((k + 1) as f64 * h);
                if hi > lo {
                    *slot += v * (hi - lo);
                }
            }
        }
        out.iter_mut().for_each(|s| *s /= h);
        out
    }

    /// Cumulative integral ∫₀ˣ f dm.
    pub fn cumulative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (l, r, v) in self.pieces() {
            if x <= l {
                break;
            }
            acc += v * (x.min(r) - l);
        }
        acc
    }

    /// Inverse of the normalized cumulative integral; requires a density with positive mass.
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total;
        let mut acc = 0.0;
        for (l, r, v) in self.pieces() {
            let mass = v * (r - l);
            if mass > 0.0 && acc + mass >= target {
                return (l + (target - acc) / v).clamp(l, r);
            }
            acc += mass;
        }
        // u = 1: right end of the support
        self.pieces()
            .filter(|&(_, _, v)| v > 0.0)
            .map(|(_, r, _)| r)
            .last()
            .unwrap_or(1.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "left,right,value")?;
        for (l, r, v) in self.pieces() {
            writeln!(w, "{},{},{}", fmt17(l), fmt17(r), fmt17(v))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "left,right,value" {
            return Err(Error::InvalidStep(format!("unexpected header `{header}`")));
        }
        let mut breaks = vec![];
        let mut values = vec![];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidStep(format!("`{line}`: {e}")))?;
            let [l, r, v] = cols[..] else {
                return Err(Error::InvalidStep(format!("expected 3 columns in `{line}`")));
            };
            if breaks.is_empty() {
                breaks.push(l);
            } else if *breaks.last().unwrap() != l {
                return Err(Error::InvalidStep(format!("gap before `{line}`")));
            }
            breaks.push(r);
            values.push(v);
        }
        Self::new(breaks, values)
    }
}

fn integral(breaks: &[f64], values: &[f64]) -> f64 {
    breaks.windows(2).zip(values).map(|(w, v)| v * (w[1] - w[0])).sum()
}

pub fn uniform_breaks(n: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..=n).map(|j| j as f64 / n as f64).collect();
    b[n] = 1.0;
    b
}

/// 17 significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x:.16e}").unwrap();
    s
}

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre on [lo, hi].
pub fn gauss_legendre(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(&t, w)| w * f(c + h * t))
        .sum::<f64>()
        * h
}

/// Something that can be evaluated along orbits and pushed through the operator.
pub trait Observable: Sync {
    fn value(&self, x: f64) -> f64;

    /// Upper bound on |f| over [0,1].
    fn sup_abs(&self) -> f64;

    /// Enclosure `(min, max)` of the observable on `[lo, hi]`, when one is known.
    fn range_on(&self, _lo: f64, _hi: f64) -> Option<(f64, f64)> {
        None
    }

    /// ∫ f · density dm.
    fn integrate_against(&self, density: &StepFunction) -> f64 {
        density
            .pieces()
            .filter(|&(_, _, v)| v != 0.0)
            .map(|(l, r, v)| {
                let parts = ((r - l) * 1024.0).ceil().max(1.0) as usize;
                let h = (r - l) / parts as f64;
                (0..parts)
                    .map(|p| {
                        let lo = l + p as f64 * h;
                        gauss_legendre(|x| self.value(x), lo, (lo + h).min(r))
                    })
                    .sum::<f64>()
                    * v
            })
            .sum()
    }
}

impl Observable for StepFunction {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn sup_abs(&self) -> f64 {
        StepFunction::sup_abs(self)
    }

    fn range_on(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let i = self.piece_index(lo);
        // the hull is closed but branch domains are half-open, so `hi` itself is not needed
        let j = self.piece_index(hi).max(i);
        let j = if j > i && self.breaks[j] == hi { j - 1 } else { j };
        let vs = &self.values[i..=j];
        let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((min, max))
    }

    fn integrate_against(&self, density: &StepFunction) -> f64 {
        self.integrate_product(density)
    }
}

/// A closed-form observable with a known sup bound and, optionally, a Lipschitz constant.
pub struct ClosedForm<F> {
    f: F,
    sup_abs: f64,
    lipschitz: Option<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> ClosedForm<F> {
    pub fn new(f: F, sup_abs: f64) -> Self {
        Self {
            f,
            sup_abs,
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }
}

impl<F: Fn(f64) -> f64 + Sync> Observable for ClosedForm<F> {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    fn range_on(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let l = self.lipschitz?;
        let mid = (self.f)(0.5 * (lo + hi));
        let r = 0.5 * l * (hi - lo);
        Some((mid - r, mid + r))
    }
}
