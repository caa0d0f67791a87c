//! Partitions of iterates `τⁿ` and the quantities read off them.

use super::branch::Branch;
use super::piecewise::PiecewiseMap;
use crate::error::{Error, Result};

/// Default cap on the number of cells materialized for one order.
pub const DEFAULT_CELL_CAP: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct Cell {
    pub left: f64,
    pub right: f64,
    /// `τⁿ` restricted to `[left, right)`.
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct IteratePartition {
    pub n: usize,
    pub cells: Vec<Cell>,
    pub mesh: f64,
    /// Infimum of `(τⁿ)′`. When branches were dropped this already includes the
    /// lower bound for the dropped cells, so it is a valid infimum over all of [0,1].
    pub min_slope: f64,
    /// Infimum of `(τⁿ)′` over the materialized cells only.
    pub min_slope_materialized: f64,
    /// Measure of [0,1] not covered by materialized cells.
    pub truncation_error: f64,
}

struct Level {
    base: Vec<Branch>,
    /// Lower bound for the derivative on dropped base branches.
    base_tail_slope: f64,
    cap: usize,
}

impl Level {
    fn new(map: &PiecewiseMap, tail_tol: f64, cap: usize) -> Result<Self> {
        if !(tail_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
        }
        let depth = map.partition_depth(tail_tol);
        if depth.count > cap {
            return Err(Error::TruncationOverflow { cap });
        }
        let base = map.branches(depth.count);
        // each dropped branch has 1/τ_i′(a_i) ≤ the whole tail sum, and τ_i′ is smallest at a_i
        let base_tail_slope = match map.tail() {
            Some(t) if base.len() < t.limit().unwrap_or(usize::MAX) => 1.0 / t.slope_sum(base.len()),
            _ => f64::INFINITY,
        };
        Ok(Self {
            base,
            base_tail_slope,
            cap,
        })
    }

    fn first(&self) -> IteratePartition {
        let mut cells: Vec<Cell> = self
            .base
            .iter()
            .map(|b| Cell {
                left: b.a(),
                right: b.b(),
                branch: b.clone(),
            })
            .collect();
        cells.sort_by(|p, q| p.left.total_cmp(&q.left));
        let materialized = cells.iter().map(|c| c.branch.left_slope()).fold(f64::INFINITY, f64::min);
        finish(1, cells, materialized, materialized.min(self.base_tail_slope))
    }

    /// Pull the order-`n−1` cells back through every base branch.
    fn refine(&self, prev: &IteratePartition, first_inf: f64) -> Result<IteratePartition> {
        let mut cells = Vec::new();
        for (i, br) in self.base.iter().enumerate() {
            let (lo_img, hi_img) = (br.image_left(), br.image_right());
            let start = prev.cells.partition_point(|c| c.right <= lo_img);
            for cell in &prev.cells[start..] {
                if cell.left >= hi_img {
                    break;
                }
                let y0 = cell.left.max(lo_img);
                let y1 = cell.right.min(hi_img);
                if !(y1 > y0) {
                    continue;
                }
                let (Some(x0), Some(x1)) = (br.inverse(y0), br.inverse(y1)) else {
                    return Err(Error::InverseFailure { branch: i, y: y0 });
                };
                if x1 > x0 {
                    if cells.len() >= self.cap {
                        return Err(Error::TruncationOverflow { cap: self.cap });
                    }
                    cells.push(Cell {
                        left: x0,
                        right: x1,
                        branch: br.then(&cell.branch, x0, x1),
                    });
                }
            }
        }
        cells.sort_by(|p, q| p.left.total_cmp(&q.left));
        let materialized = cells.iter().map(|c| c.branch.left_slope()).fold(f64::INFINITY, f64::min);
        // dropped cells come from a dropped base branch or a dropped cell one level up
        let dropped = first_inf * prev.min_slope;
        let bound = if prev.truncation_error > 0.0 || self.base_tail_slope.is_finite() {
            materialized.min(dropped)
        } else {
            materialized
        };
        Ok(finish(prev.n + 1, cells, materialized, bound))
    }
}

fn finish(n: usize, cells: Vec<Cell>, materialized: f64, min_slope: f64) -> IteratePartition {
    let mesh = cells.iter().map(|c| c.right - c.left).fold(0.0, f64::max);
    let covered: f64 = cells.iter().map(|c| c.right - c.left).sum();
    IteratePartition {
        n,
        cells,
        mesh,
        min_slope,
        min_slope_materialized: materialized,
        truncation_error: (1.0 - covered).max(0.0),
    }
}

fn levels(map: &PiecewiseMap, n_max: usize, tail_tol: f64, cap: usize) -> Result<Vec<IteratePartition>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("iterate order must be at least 1".into()));
    }
    let lv = Level::new(map, tail_tol, cap)?;
    let mut out = vec![lv.first()];
    let first_inf = out[0].min_slope;
    for _ in 1..n_max {
        let next = lv.refine(out.last().unwrap(), first_inf)?;
        out.push(next);
    }
    Ok(out)
}

/// Cells of the partition for `τⁿ` with the default cell cap.
pub fn iterate_partition(map: &PiecewiseMap, n: usize, tail_tol: f64) -> Result<IteratePartition> {
    iterate_partition_capped(map, n, tail_tol, DEFAULT_CELL_CAP)
}

pub fn iterate_partition_capped(map: &PiecewiseMap, n: usize, tail_tol: f64, cap: usize) -> Result<IteratePartition> {
    Ok(levels(map, n, tail_tol, cap)?.pop().expect("n ≥ 1"))
}

/// Mesh of the partition for orders `1..=n_max`.
pub fn mesh_decay(map: &PiecewiseMap, n_max: usize, tail_tol: f64) -> Result<Vec<f64>> {
    Ok(levels(map, n_max, tail_tol, DEFAULT_CELL_CAP)?
        .iter()
        .map(|p| p.mesh)
        .collect())
}

/// Smallest order whose iterate has `inf (τⁿ)′ ≥ target`, with that infimum.
pub fn min_slope_certificate(map: &PiecewiseMap, target: f64, n_cap: usize, tail_tol: f64) -> Result<(usize, f64)> {
    if !(target >= 1.0) {
        return Err(Error::InvalidArgument(format!("slope target must be at least 1, got {target}")));
    }
    let lv = Level::new(map, tail_tol, DEFAULT_CELL_CAP)?;
    let mut part = lv.first();
    let first_inf = part.min_slope;
    let mut best = (1, part.min_slope);
    loop {
        if part.min_slope >= target {
            return Ok((part.n, part.min_slope));
        }
        if part.min_slope > best.1 {
            best = (part.n, part.min_slope);
        }
        if part.n >= n_cap {
            return Err(Error::NotReached {
                n_cap,
                best_order: best.0,
                best_slope: best.1,
            });
        }
        part = lv.refine(&part, first_inf)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;

    #[test]
    fn three_branch_second_order() {
        let p = iterate_partition(&builtin::three_branch(), 2, 1e-8).unwrap();
        assert_eq!(p.cells.len(), 7);
        assert_eq!(p.mesh, 0.25);
        assert_eq!(p.min_slope, 4.0);
        assert_eq!(p.truncation_error, 0.0);
        let last = p.cells.last().unwrap();
        assert_eq!((last.left, last.right), (0.75, 1.0));
    }

    #[test]
    fn cells_are_ordered_and_vanish_on_the_left() {
        let p = iterate_partition(&builtin::three_branch(), 3, 1e-8).unwrap();
        assert_eq!(p.mesh, 0.125);
        assert_eq!(p.min_slope, 8.0);
        for w in p.cells.windows(2) {
            assert!(w[0].right <= w[1].left);
        }
        for c in &p.cells {
            assert!(c.branch.eval(c.left).abs() <= 1e-10);
        }
    }

    #[test]
    fn first_order_is_the_base_partition() {
        let m = builtin::shifted_linear();
        let p = iterate_partition(&m, 1, 1e-3).unwrap();
        assert_eq!(p.mesh, 0.5);
        assert!(p.truncation_error <= 1e-3 + 1e-12);
        assert_eq!(p.min_slope, 2.0);
    }

    #[test]
    fn mesh_sequence() {
        let v = mesh_decay(&builtin::three_branch(), 3, 1e-8).unwrap();
        assert_eq!(v, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn certificates() {
        assert_eq!(min_slope_certificate(&builtin::three_branch(), 2.0, 5, 1e-8).unwrap(), (1, 2.0));
        assert_eq!(min_slope_certificate(&builtin::three_branch(), 3.0, 5, 1e-8).unwrap(), (2, 4.0));
        assert_eq!(min_slope_certificate(&builtin::harmonic(), 2.0, 3, 1e-4).unwrap(), (1, 2.0));
        assert!(matches!(
            min_slope_certificate(&builtin::doubling(), 100.0, 3, 1e-8),
            Err(Error::NotReached { best_order: 3, .. })
        ));
    }

    #[test]
    fn overflow_is_signalled() {
        let r = iterate_partition_capped(&builtin::shifted_linear(), 2, 1e-3, 10_000);
        assert!(matches!(r, Err(Error::TruncationOverflow { cap: 10_000 })));
    }
}
