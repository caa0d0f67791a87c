//! Membership tests for the piecewise convex class and the piecewise expanding class.

use std::fmt;

use serde::Serialize;

use super::branch::Branch;
use super::piecewise::PiecewiseMap;
use crate::error::{Error, Result};

/// At most this many branches are sampled individually.
pub const CHECK_CAP: usize = 4096;
/// Slack for the derivative-monotonicity test.
pub const CONVEXITY_SLACK: f64 = 1e-12;
pub const LEFT_LIMIT_TOL: f64 = 1e-10;
pub const COVERAGE_TOL: f64 = 1e-12;
/// Target for the contraction factor when choosing the cutoff in the accumulating case.
pub const CUTOFF_TARGET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotIncreasing { branch: usize },
    NotConvex { branch: usize, at: f64 },
    LeftLimitNonzero { branch: usize, value: f64 },
    ImageOutsideUnit { branch: usize },
    InverseMismatch { branch: usize, error: f64 },
    /// `Σ 1/τ_i′(a_i)` diverges or some `τ_i′(a_i) = 0`.
    Summability { branch: Option<usize>, sum: f64 },
    /// No expansion at the origin: `1/τ′(0) ≥ 1`, or no cutoff gives a sum below 1.
    ExpansionAtZero { alpha: f64 },
    NoBranchAtZero,
    Coverage { covered: f64 },
}

impl Violation {
    /// Short label of the failed condition.
    pub fn condition(&self) -> &'static str {
        match self {
            Violation::NotIncreasing { .. }
            | Violation::NotConvex { .. }
            | Violation::LeftLimitNonzero { .. }
            | Violation::ImageOutsideUnit { .. }
            | Violation::InverseMismatch { .. } => "branch-shape",
            Violation::Summability { .. } => "summability",
            Violation::ExpansionAtZero { .. } | Violation::NoBranchAtZero => "expansion-at-zero",
            Violation::Coverage { .. } => "coverage",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotIncreasing { branch } => write!(f, "branch-shape: branch {branch} not increasing"),
            Violation::NotConvex { branch, at } => write!(f, "branch-shape: branch {branch} derivative decreases near {at}"),
            Violation::LeftLimitNonzero { branch, value } => {
                write!(f, "branch-shape: branch {branch} has left limit {value}, expected 0")
            }
            Violation::ImageOutsideUnit { branch } => write!(f, "branch-shape: branch {branch} image leaves [0,1]"),
            Violation::InverseMismatch { branch, error } => {
                write!(f, "branch-shape: branch {branch} inverse off by {error}")
            }
            Violation::Summability { branch: Some(i), sum } => {
                write!(f, "summability: branch {i} has zero slope at its left endpoint (sum {sum})")
            }
            Violation::Summability { branch: None, sum } => write!(f, "summability: reciprocal slope sum {sum} diverges"),
            Violation::ExpansionAtZero { alpha } => write!(f, "expansion-at-zero: alpha = {alpha} is not below 1"),
            Violation::NoBranchAtZero => write!(f, "expansion-at-zero: no branch starts at 0"),
            Violation::Coverage { covered } => write!(f, "coverage: branches cover measure {covered} of [0,1]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    Finite(usize),
    Countable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub in_t: bool,
    pub in_te: bool,
    pub alpha: f64,
    pub r: Option<f64>,
    pub beta: f64,
    pub slope_sum: f64,
    pub accumulates_at_zero: bool,
    pub cardinality: Cardinality,
    pub branches_checked: usize,
    /// Tail bound included in `slope_sum`.
    pub tail_bound: f64,
    pub violations: Vec<Violation>,
}

/// Summary of `1/τ_i′(a_i)` over the materialized branches plus the tail bound.
pub(crate) struct SlopeSums {
    pub branches: Vec<Branch>,
    pub weights: Vec<f64>,
    pub tail: f64,
}

pub(crate) fn slope_sums(map: &PiecewiseMap, tail_tol: f64) -> SlopeSums {
    let count = match map.tail() {
        // exact tails need nothing beyond the stored prefix
        Some(t) if t.is_exact_onto() => map.prefix_len(),
        _ => map.operator_depth(tail_tol).count,
    };
    let branches = map.branches(count);
    let tail = map.tail().map_or(0.0, |t| t.slope_sum(branches.len()));
    let weights = branches.iter().map(|b| 1.0 / b.left_slope()).collect();
    SlopeSums { branches, weights, tail }
}

/// Cutoff `r` for maps accumulating at 0: the largest materialized endpoint with
/// `Σ_{a_i<r} 1/τ_i′(a_i) ≤ 1/2`, falling back to the smallest attainable sum below 1.
pub(crate) fn cutoff(sums: &SlopeSums) -> Option<(f64, f64)> {
    let mut candidates: Vec<f64> = sums
        .branches
        .iter()
        .flat_map(|b| [b.a(), b.b()])
        .filter(|&r| r > 0.0)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let below = |r: f64| -> f64 {
        sums.branches
            .iter()
            .zip(&sums.weights)
            .filter(|(b, _)| b.a() < r)
            .map(|(_, w)| w)
            .sum::<f64>()
            + sums.tail
    };
    let scored: Vec<(f64, f64)> = candidates.iter().map(|&r| (r, below(r))).collect();
    if let Some(&best) = scored.iter().rev().find(|(_, s)| *s <= CUTOFF_TARGET + 1e-12) {
        return Some(best);
    }
    scored
        .iter()
        .copied()
        .filter(|(_, s)| *s < 1.0)
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

fn check_branch(index: usize, br: &Branch, grid: usize, out: &mut Vec<Violation>) {
    let n = grid.max(64);
    let xs: Vec<f64> = (0..n)
        .map(|j| br.a() + (br.b() - br.a()) * j as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| br.eval(x)).collect();
    let ds: Vec<f64> = xs.iter().map(|&x| br.derivative(x)).collect();

    let rises = ys.last().unwrap() > ys.first().unwrap();
    if !rises || ys.windows(2).any(|w| w[1] < w[0] - 1e-15) || ds.iter().any(|&d| d < 0.0) {
        out.push(Violation::NotIncreasing { branch: index });
    }
    if let Some(j) = ds
        .windows(2)
        .position(|w| w[1] < w[0] - CONVEXITY_SLACK * w[0].abs().max(1.0))
    {
        out.push(Violation::NotConvex { branch: index, at: xs[j] });
    }
    if br.image_left().abs() > LEFT_LIMIT_TOL {
        out.push(Violation::LeftLimitNonzero {
            branch: index,
            value: br.image_left(),
        });
    }
    if br.image_left() < -1e-12 || br.image_right() > 1.0 + 1e-12 {
        out.push(Violation::ImageOutsideUnit { branch: index });
    }
    let scale = br.derivative(br.b()).abs().max(1.0);
    let tol = 1e-12 + 8.0 * scale * f64::EPSILON;
    let worst = (1..8)
        .map(|q| br.image_left() + (br.image_right() - br.image_left()) * q as f64 / 8.0)
        .filter_map(|y| br.inverse(y).map(|x| (br.eval(x) - y).abs()))
        .fold(0.0, f64::max);
    if worst > tol {
        out.push(Violation::InverseMismatch { branch: index, error: worst });
    }
}

/// Check the class conditions on a sample grid of `grid` points per branch.
pub fn validate(map: &PiecewiseMap, grid: usize, tail_tol: f64) -> Result<ClassReport> {
    if grid < 2 {
        return Err(Error::InvalidArgument(format!("grid must be at least 2, got {grid}")));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let sums = slope_sums(map, tail_tol);
    let checked = &sums.branches[..sums.branches.len().min(CHECK_CAP)];

    let mut sorted: Vec<usize> = (0..checked.len()).collect();
    sorted.sort_by(|&i, &j| checked[i].a().total_cmp(&checked[j].a()));
    for w in sorted.windows(2) {
        if checked[w[1]].a() < checked[w[0]].b() {
            return Err(Error::MalformedBranch {
                index: w[1],
                reason: format!("domain overlaps branch {}", w[0]),
            });
        }
    }

    let mut violations = Vec::new();
    for (i, br) in checked.iter().enumerate() {
        check_branch(i, br, grid, &mut violations);
    }

    let mut slope_sum = 0.0;
    for (i, &w) in sums.weights.iter().enumerate() {
        if !w.is_finite() {
            violations.push(Violation::Summability {
                branch: Some(i),
                sum: f64::INFINITY,
            });
        }
        slope_sum += w;
    }
    slope_sum += sums.tail;
    if slope_sum.is_finite() && !matches!(violations.last(), Some(Violation::Summability { .. })) {
        // finite
    } else if !violations.iter().any(|v| matches!(v, Violation::Summability { .. })) {
        violations.push(Violation::Summability { branch: None, sum: slope_sum });
    }

    let (alpha, r) = if map.accumulates_at_zero() {
        match cutoff(&sums) {
            Some((r, a)) => (a, Some(r)),
            None => (f64::INFINITY, None),
        }
    } else {
        match checked.iter().position(|b| b.a() == 0.0) {
            Some(i) => (1.0 / checked[i].left_slope(), None),
            None => {
                violations.push(Violation::NoBranchAtZero);
                (f64::INFINITY, None)
            }
        }
    };
    if !(alpha < 1.0) {
        violations.push(Violation::ExpansionAtZero { alpha });
    }

    let covered: f64 = sums.branches.iter().map(Branch::len).sum::<f64>()
        + map.tail().map_or(0.0, |t| t.length(sums.branches.len()));
    if (covered - 1.0).abs() > COVERAGE_TOL {
        violations.push(Violation::Coverage { covered });
    }

    let beta = sums.weights.iter().copied().fold(sums.tail, f64::max);
    let in_t = violations.is_empty();
    let in_te = beta < 1.0 && slope_sum.is_finite();

    Ok(ClassReport {
        in_t,
        in_te,
        alpha,
        r,
        beta,
        slope_sum,
        accumulates_at_zero: map.accumulates_at_zero(),
        cardinality: if map.is_finite() {
            Cardinality::Finite(map.prefix_len())
        } else {
            Cardinality::Countable
        },
        branches_checked: checked.len(),
        tail_bound: sums.tail,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::branch::AnalyticForm;
    use crate::maps::builtin;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    pub(crate) fn square_map() -> PiecewiseMap {
        let br = Branch::analytic(
            0.0,
            1.0,
            AnalyticForm {
                forward: Arc::new(|x| x * x),
                derivative: Arc::new(|x| 2.0 * x),
                inverse: Some(Arc::new(f64::sqrt)),
            },
        )
        .unwrap();
        PiecewiseMap::finite("square", vec![br]).unwrap()
    }

    #[test]
    fn shifted_linear_is_in_class() {
        let rep = validate(&builtin::shifted_linear(), 64, 1e-8).unwrap();
        assert!(rep.in_t, "{:?}", rep.violations);
        assert!(!rep.accumulates_at_zero);
        assert_eq!(rep.alpha, 0.5);
        assert_relative_eq!(rep.slope_sum, 1.0, epsilon = 1e-14);
        assert_eq!(rep.cardinality, Cardinality::Countable);
        assert!(rep.in_te);
    }

    #[test]
    fn harmonic_cutoff() {
        let rep = validate(&builtin::harmonic(), 64, 1e-8).unwrap();
        assert!(rep.in_t, "{:?}", rep.violations);
        assert!(rep.accumulates_at_zero);
        assert_eq!(rep.r, Some(0.5));
        assert_relative_eq!(rep.alpha, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn finite_maps_are_admitted() {
        for m in [builtin::three_branch(), builtin::doubling()] {
            let rep = validate(&m, 64, 1e-8).unwrap();
            assert!(rep.in_t && rep.in_te, "{}: {:?}", m.name(), rep.violations);
            assert_eq!(rep.alpha, 0.5);
            assert_eq!(rep.beta, 0.5);
        }
    }

    #[test]
    fn square_is_rejected() {
        let rep = validate(&square_map(), 64, 1e-8).unwrap();
        assert!(!rep.in_t);
        let labels: Vec<&str> = rep.violations.iter().map(Violation::condition).collect();
        assert!(labels.contains(&"summability"), "{labels:?}");
        assert!(labels.contains(&"expansion-at-zero"), "{labels:?}");
    }

    #[test]
    fn concave_branch_flagged() {
        let br = Branch::analytic(
            0.0,
            1.0,
            AnalyticForm {
                forward: Arc::new(|x: f64| (2.0 * x).min(1.0) * 0.0 + (x * (3.0 - x)) / 2.0),
                derivative: Arc::new(|x| (3.0 - 2.0 * x) / 2.0),
                inverse: None,
            },
        )
        .unwrap();
        let m = PiecewiseMap::finite("concave", vec![br]).unwrap();
        let rep = validate(&m, 64, 1e-8).unwrap();
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::NotConvex { .. })));
    }

    #[test]
    fn gap_in_coverage_flagged() {
        let m = PiecewiseMap::finite(
            "gappy",
            vec![
                Branch::affine(0.0, 0.4, 2.5, 0.0).unwrap(),
                Branch::affine(0.5, 1.0, 2.0, -1.0).unwrap(),
            ],
        )
        .unwrap();
        let rep = validate(&m, 16, 1e-8).unwrap();
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::Coverage { .. })));
    }

    #[test]
    fn grid_must_be_two_or_more() {
        assert!(validate(&builtin::doubling(), 1, 1e-8).is_err());
    }
}
