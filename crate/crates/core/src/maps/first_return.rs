//! Induced (first-return) maps on `[eps, 1]`.

use super::branch::Branch;
use super::piecewise::{PiecewiseMap, TailDescriptor};
use crate::error::{Error, Result};

/// Base branches or pending pieces beyond this count abort the construction.
pub const PENDING_CAP: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct FirstReturnMap {
    /// The induced map conjugated onto [0,1] by `x = eps + (1 − eps)·u`.
    pub map: PiecewiseMap,
    /// The same branches in original coordinates, each a restriction of `τᵏ` to a subset of `[eps, 1]`.
    pub original_branches: Vec<Branch>,
    pub return_times: Vec<usize>,
    /// Fraction of `[eps, 1]` that returns within the explored times.
    pub captured_mass: f64,
    pub eps: f64,
}

impl FirstReturnMap {
    /// Indices of the branches with return time `k`.
    pub fn branches_with_time(&self, k: usize) -> impl Iterator<Item = &Branch> + '_ {
        self.original_branches
            .iter()
            .zip(&self.return_times)
            .filter(move |(_, &t)| t == k)
            .map(|(b, _)| b)
    }
}

/// Build the first-return map of `map` to `[eps, 1]`.
pub fn first_return_map(map: &PiecewiseMap, eps: f64, max_return_time: usize, tail_tol: f64) -> Result<FirstReturnMap> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let width = 1.0 - eps;
    let depth = map.partition_depth(tail_tol * width).count;
    if depth > PENDING_CAP {
        return Err(Error::TruncationOverflow { cap: PENDING_CAP });
    }
    let base = map.branches(depth);
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.sort_by(|&i, &j| base[i].a().total_cmp(&base[j].a()));

    let mut pending = vec![Branch::identity(eps, 1.0)?];
    let mut found: Vec<(Branch, usize)> = Vec::new();
    let mut captured = 0.0;

    for k in 1..=max_return_time {
        let mut next = Vec::new();
        for piece in &pending {
            let (y0, y1) = (piece.image_left(), piece.image_right());
            let start = order.partition_point(|&i| base[i].b() <= y0);
            for &i in &order[start..] {
                let br = &base[i];
                if br.a() >= y1 {
                    break;
                }
                let (lo, hi) = (br.a().max(y0), br.b().min(y1));
                if !(hi > lo) {
                    continue;
                }
                let (Some(x0), Some(x1)) = (piece.inverse(lo), piece.inverse(hi)) else {
                    return Err(Error::InverseFailure { branch: i, y: lo });
                };
                if !(x1 > x0) {
                    continue;
                }
                let composed = piece.then(br, x0, x1);
                let (z0, z1) = (composed.image_left(), composed.image_right());
                if z0 >= eps {
                    found.push((composed, k));
                    captured += x1 - x0;
                } else if z1 <= eps {
                    next.push(composed);
                } else {
                    let cut = composed.inverse(eps).ok_or(Error::InverseFailure { branch: i, y: eps })?;
                    if cut > x0 {
                        next.push(piece.then(br, x0, cut));
                    }
                    if x1 > cut {
                        found.push((piece.then(br, cut, x1), k));
                        captured += x1 - cut;
                    }
                }
                if next.len() > PENDING_CAP {
                    return Err(Error::TruncationOverflow { cap: PENDING_CAP });
                }
            }
        }
        pending = next;
        if captured / width >= 1.0 - tail_tol || pending.is_empty() {
            break;
        }
    }

    let captured_mass = (captured / width).min(1.0);
    if captured_mass < 1.0 - tail_tol && !pending.is_empty() {
        return Err(Error::NoReturnFound {
            captured: captured_mass,
            max_return_time,
        });
    }

    found.sort_by(|(p, s), (q, t)| s.cmp(t).then(p.a().total_cmp(&q.a())));
    let return_times: Vec<usize> = found.iter().map(|(_, k)| *k).collect();
    let original_branches: Vec<Branch> = found.into_iter().map(|(b, _)| b).collect();
    let rescaled: Vec<Branch> = original_branches.iter().map(|b| b.rescaled(eps, width)).collect();

    let unreturned = 1.0 - captured_mass;
    let accumulates_at_zero = pending.iter().any(|p| p.a() <= eps);
    let tail = (unreturned > 0.0).then(|| unreturned_tail(&rescaled, unreturned));
    let map = PiecewiseMap::new(format!("first_return({})", map.name()), rescaled, tail, accumulates_at_zero)?;
    Ok(FirstReturnMap {
        map,
        original_branches,
        return_times,
        captured_mass,
        eps,
    })
}

/// Tail descriptor for the part of `[eps,1]` that did not return.
///
/// The generator refuses every index; lengths are exact, the slope sum of the
/// unexplored branches is extrapolated from the last explored branch.
fn unreturned_tail(branches: &[Branch], unreturned: f64) -> TailDescriptor {
    let n = branches.len();
    let lens: Vec<f64> = branches.iter().map(Branch::len).collect();
    let weights: Vec<f64> = branches.iter().map(|b| 1.0 / b.left_slope()).collect();
    // 1/τ′ per unit length on the last branch stands in for the unexplored part
    let ratio = branches.last().map_or(1.0, |b| (1.0 / b.left_slope()) / b.len());
    let suffix = |v: &[f64], i0: usize| v.get(i0..).map_or(0.0, |s| s.iter().sum::<f64>());
    let (l2, w2) = (lens.clone(), weights.clone());
    TailDescriptor::new(|_| None, move |i0| suffix(&w2, i0) + unreturned * ratio, move |i0| {
        suffix(&l2, i0) + unreturned
    })
    .with_limit(n)
}
