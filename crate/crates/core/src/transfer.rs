//! The Frobenius–Perron operator `Pf(x) = Σ_i f(τ_i⁻¹x)/τ_i′(τ_i⁻¹x)`.
//!
//! For affine branches the operator maps step functions to step functions, so
//! [`fp_step`] computes it exactly on breakpoints. [`fp_pointwise`] evaluates
//! the sum at a single point for any map and any [`Observable`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::validate::{cutoff, slope_sums};
use crate::maps::PiecewiseMap;
use crate::step::{Observable, StepFunction, MERGE_TOL};

/// Result of an operator application together with the mass it may have lost.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushed {
    pub density: StepFunction,
    /// Bound on `|P_exact f − density|` in L¹ due to tail truncation.
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pointwise {
    pub value: f64,
    pub truncation_bound: f64,
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Branch budget of one exact step. Countable maps whose tail cannot be closed
/// exactly need `~1/tail_tol` branches; past this the step refuses.
pub const STEP_BRANCH_CAP: usize = 1 << 20;

/// Exact pushforward of a step function under a map whose materialized branches are affine.
///
/// Infinite families with an exact-onto tail are closed analytically when `f`
/// is constant on the tail hull, otherwise they are truncated at the operator
/// depth for `tail_tol` and the loss `tail_slope_sum·sup|f|` is reported.
pub fn fp_step(map: &PiecewiseMap, f: &StepFunction, tail_tol: f64) -> Result<Pushed> {
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let closure = map.tail_closure(f, tail_tol, true);
    let depth = map.operator_depth(tail_tol);
    let count = closure.map_or(depth.count, |c| c.count);
    if count > STEP_BRANCH_CAP {
        return Err(Error::TruncationOverflow { cap: STEP_BRANCH_CAP });
    }

    // (coordinate, signed contribution, opens an interval)
    let mut events: Vec<(f64, f64, bool)> = Vec::new();
    let mut reached = 0;
    for i in 0..count {
        let Some(br) = map.branch(i) else { break };
        reached = i + 1;
        let Some((slope, _)) = br.affine_parts() else {
            return Err(Error::NonAffineBranch { index: i });
        };
        let (a, b) = (br.a(), br.b());
        let first = f.piece_index(a);
        for (l, r, v) in f.pieces().skip(first) {
            if l >= b {
                break;
            }
            if v == 0.0 {
                continue;
            }
            let (lo, hi) = (l.max(a), r.min(b));
            if !(hi > lo) {
                continue;
            }
            let (y0, y1) = (br.eval(lo), br.eval(hi));
            if y1 > y0 {
                let w = v / slope;
                events.push((y0, w, true));
                events.push((y1, -w, false));
            }
        }
    }
    let mut truncation_bound = 0.0;
    if let Some(c) = closure {
        if c.value != 0.0 && c.slope_sum > 0.0 {
            let w = c.value * c.slope_sum;
            events.push((0.0, w, true));
            events.push((1.0, -w, false));
        }
    } else if let Some(tail) = map.tail() {
        if reached < tail.limit().unwrap_or(usize::MAX) {
            truncation_bound = tail.slope_sum(reached) * f.sup_abs();
        } else {
            truncation_bound = 0.0;
        }
    }
    Ok(Pushed {
        density: sweep(events),
        truncation_bound,
    })
}

/// Turn interval contributions into a step function on [0,1].
fn sweep(mut events: Vec<(f64, f64, bool)>) -> StepFunction {
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut breaks = vec![0.0];
    let mut values: Vec<f64> = Vec::new();
    let mut acc = Acc::default();
    let mut active: i64 = 0;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        while k < events.len() && events[k].0 - t <= MERGE_TOL {
            acc.add(events[k].1);
            active += if events[k].2 { 1 } else { -1 };
            k += 1;
        }
        if t >= 1.0 - MERGE_TOL {
            break;
        }
        let v = if active == 0 {
            acc = Acc::default();
            0.0
        } else {
            acc.value()
        };
        if t <= MERGE_TOL {
            // contributions starting at 0 overwrite the initial piece
            if values.is_empty() {
                values.push(v);
            } else {
                values[0] = v;
            }
            continue;
        }
        if values.is_empty() {
            values.push(0.0);
        }
        breaks.push(t);
        values.push(v);
    }
    if values.is_empty() {
        values.push(0.0);
    }
    breaks.push(1.0);
    StepFunction::new(breaks, values).expect("sweep yields a valid grid").canonical()
}

/// `P f(x)` by summing over preimages.
pub fn fp_pointwise<O: Observable + ?Sized>(map: &PiecewiseMap, f: &O, x: f64, tail_tol: f64) -> Result<Pointwise> {
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x = {x} is outside [0,1]")));
    }
    let closure = map.tail_closure(f, tail_tol, false);
    let count = closure.map_or_else(|| map.operator_depth(tail_tol).count, |c| c.count);
    let mut acc = Acc::default();
    let mut reached = 0;
    for i in 0..count {
        let Some(br) = map.branch(i) else { break };
        reached = i + 1;
        if !br.image_contains(x) {
            continue;
        }
        let pre = br.inverse(x).ok_or(Error::InverseFailure { branch: i, y: x })?;
        acc.add(f.value(pre) / br.derivative(pre));
    }
    let truncation_bound = match (closure, map.tail()) {
        (Some(c), _) => {
            // every tail branch is onto, so each contributes at x
            acc.add(c.value * c.slope_sum);
            c.error
        }
        // a refusing generator leaves `reached` short of `count`
        (None, Some(tail)) if reached < tail.limit().unwrap_or(usize::MAX) => tail.slope_sum(reached) * f.sup_abs(),
        _ => 0.0,
    };
    Ok(Pointwise {
        value: acc.value(),
        truncation_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub passed: bool,
    /// First pair of evaluation points `(x, y)` with `Pf(x) < Pf(y)` for `x < y`, and the values.
    pub witness: Option<(f64, f64, f64, f64)>,
    pub points_checked: usize,
}

/// Grid used for pointwise monotonicity checks on non-affine maps.
pub const POINTWISE_GRID: usize = 257;

/// Check that `P f` is non-increasing for a non-increasing `f`.
pub fn monotone_check(map: &PiecewiseMap, f: &StepFunction, tail_tol: f64) -> Result<MonotoneCheck> {
    let scale = f.sup_abs().max(f64::MIN_POSITIVE);
    if let Some(index) = f.first_increase(1e-12 * scale) {
        return Err(Error::InputNotMonotone { index });
    }
    let (xs, vals, slack) = match fp_step(map, f, tail_tol) {
        Ok(p) => {
            let d = &p.density;
            let xs: Vec<f64> = d.breaks()[..d.len()].to_vec();
            (xs, d.values().to_vec(), p.truncation_bound)
        }
        Err(Error::NonAffineBranch { .. }) => {
            let xs: Vec<f64> = (0..POINTWISE_GRID).map(|j| j as f64 / (POINTWISE_GRID - 1) as f64).collect();
            let mut vals = Vec::with_capacity(xs.len());
            let mut slack: f64 = 0.0;
            for &x in &xs {
                let p = fp_pointwise(map, f, x, tail_tol)?;
                slack = slack.max(p.truncation_bound);
                vals.push(p.value);
            }
            (xs, vals, 2.0 * slack)
        }
        Err(e) => return Err(e),
    };
    let tol = 1e-12 * scale + slack;
    let witness = vals
        .windows(2)
        .position(|w| w[1] > w[0] + tol)
        .map(|j| (xs[j], xs[j + 1], vals[j], vals[j + 1]));
    Ok(MonotoneCheck {
        passed: witness.is_none(),
        witness,
        points_checked: xs.len(),
    })
}

/// Points among `xs` where a non-negative non-increasing `f` breaks `f(x) ≤ ‖f‖₁/x`.
pub fn decay_bound_violations(f: &StepFunction, xs: &[f64]) -> Vec<f64> {
    let l1 = f.l1_norm();
    xs.iter()
        .copied()
        .filter(|&x| x > 0.0 && f.eval(x) > l1 / x * (1.0 + 1e-12))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyConstants {
    pub alpha: f64,
    pub d: f64,
    pub k: f64,
    pub r: Option<f64>,
    /// Tail remainder already included in `d`.
    pub truncation_bound: f64,
}

impl LyConstants {
    fn from_parts(alpha: f64, d: f64, r: Option<f64>, truncation_bound: f64) -> Result<Self> {
        if !(alpha < 1.0) {
            return Err(Error::AlphaNotContractive { alpha });
        }
        Ok(Self {
            alpha,
            d,
            k: 1.0 + d / (1.0 - alpha),
            r,
            truncation_bound,
        })
    }
}

/// Contraction factor `α` and additive constant `D` of `‖Pf‖_∞ ≤ α‖f‖_∞ + D‖f‖₁`.
pub fn ly_constants(map: &PiecewiseMap, tail_tol: f64) -> Result<LyConstants> {
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let sums = slope_sums(map, tail_tol);
    let count = sums.branches.len();
    let tail = map.tail().filter(|t| count < t.limit().unwrap_or(usize::MAX));

    if map.accumulates_at_zero() {
        let (r, alpha) = cutoff(&sums).ok_or(Error::AlphaNotContractive { alpha: f64::INFINITY })?;
        // tail branches accumulate at 0, hence lie below r and only enter α
        let mut d = 0.0;
        for (br, w) in sums.branches.iter().zip(&sums.weights) {
            if br.a() >= r {
                d += w / br.a();
            }
        }
        return LyConstants::from_parts(alpha, d, Some(r), 0.0);
    }

    let zero = sums
        .branches
        .iter()
        .position(|b| b.a() == 0.0)
        .ok_or(Error::AlphaNotContractive { alpha: f64::INFINITY })?;
    let alpha = sums.weights[zero];
    let mut d = 0.0;
    for (i, (br, w)) in sums.branches.iter().zip(&sums.weights).enumerate() {
        if i != zero {
            d += w / br.a();
        }
    }
    let truncation_bound = match tail {
        None => 0.0,
        Some(t) => match t.endpoint_sum(count) {
            Some(s) => s,
            None => {
                // every tail endpoint sits at or beyond the hull's left end, else at the last stored one
                let floor = t
                    .hull(count)
                    .map(|h| h.0)
                    .or_else(|| sums.branches.last().map(|b| b.a()))
                    .unwrap_or(0.0);
                if floor > 0.0 {
                    t.slope_sum(count) / floor
                } else {
                    f64::INFINITY
                }
            }
        },
    };
    LyConstants::from_parts(alpha, d + truncation_bound, None, truncation_bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupBoundCheck {
    pub passed: bool,
    /// `‖Pf‖_∞`, read off at 0.
    pub lhs: f64,
    /// `α‖f‖_∞ + D‖f‖₁ + truncation`.
    pub rhs: f64,
    pub slack: f64,
}

/// Verify `‖Pf‖_∞ ≤ α‖f‖_∞ + D‖f‖₁` for a non-increasing non-negative `f`.
pub fn sup_bound_check(map: &PiecewiseMap, f: &StepFunction, constants: &LyConstants, tail_tol: f64) -> Result<SupBoundCheck> {
    let scale = f.sup_abs().max(f64::MIN_POSITIVE);
    if let Some(index) = f.first_increase(1e-12 * scale) {
        return Err(Error::InputNotMonotone { index });
    }
    let p = fp_pointwise(map, f, 0.0, tail_tol)?;
    let lhs = p.value;
    let rhs = constants.alpha * f.sup_abs() + constants.d * f.l1_norm() + p.truncation_bound;
    let slack = rhs - lhs;
    Ok(SupBoundCheck {
        passed: slack >= -1e-12 * rhs.abs().max(1.0),
        lhs,
        rhs,
        slack,
    })
}

/// `h = ½·χ[0, 1/(2K)]`.
pub fn lower_function(constants: &LyConstants) -> StepFunction {
    StepFunction::indicator(0.0, 1.0 / (2.0 * constants.k), 0.5).expect("K ≥ 1 gives a valid interval")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerFunctionCheck {
    /// `dominates[n-1]` is true when `Pⁿf ≥ h` at every breakpoint.
    pub dominates: Vec<bool>,
    /// Smallest `n₁` such that domination holds for every `n ≥ n₁` up to the horizon.
    pub n1: Option<usize>,
    pub method: &'static str,
}

/// Iterate `P` on `f` for `n_max` steps and record where `Pⁿf ≥ h` on all breakpoints.
///
/// Finite affine maps use [`fp_step`]; countable or non-affine maps fall back to
/// the Ulam matrix on `bins` bins.
pub fn lower_function_check(
    map: &PiecewiseMap,
    h: &StepFunction,
    f: &StepFunction,
    n_max: usize,
    tail_tol: f64,
    bins: usize,
) -> Result<LowerFunctionCheck> {
    let dominated = |g: &StepFunction| -> bool {
        let diff = g.zip_with(h, |a, b| a - b);
        diff.values().iter().all(|&v| v >= -1e-12)
    };
    let mut dominates = Vec::with_capacity(n_max);
    // countable maps multiply the piece count at every exact step
    let exact = map.is_finite() && map.prefix().iter().all(|b| b.is_affine());
    let method = if exact {
        let mut g = f.clone();
        for _ in 0..n_max {
            g = fp_step(map, &g, tail_tol)?.density;
            dominates.push(dominated(&g));
        }
        "exact-step"
    } else {
        let m = crate::ulam::build_ulam(map, bins, tail_tol, crate::par::Execution::default())?;
        let mut mass: Vec<f64> = f.bin_averages(bins).iter().map(|v| v / bins as f64).collect();
        for _ in 0..n_max {
            mass = m.left_mul(&mass, crate::par::Execution::default());
            let g = StepFunction::from_bins(mass.iter().map(|v| v * bins as f64).collect())?;
            dominates.push(dominated(&g));
        }
        "ulam"
    };
    let mut n1 = None;
    for n in (1..=n_max).rev() {
        if dominates[n - 1] {
            n1 = Some(n);
        } else {
            break;
        }
    }
    Ok(LowerFunctionCheck { dominates, n1, method })
}
