use std::io::Write;

use crate::error::{Error, Result};
use crate::maps::{Branch, PiecewiseMap};
use crate::par::{map_chunks, Execution};
use crate::step::{fmt17, StepFunction};

const ROW_CHUNK: usize = 64;

/// Sparse row-stochastic discretization of the transfer operator on `n` uniform bins.
///
/// `entry(j, k) = m(B_j ∩ τ⁻¹B_k) / m(B_j)`. Rows are stored in CSR form and
/// the same entries are kept column-major for the left products used by power
/// iteration.
#[derive(Debug, Clone)]
pub struct UlamMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_vals: Vec<f64>,
    row_defect: Vec<f64>,
    /// Materialized branch count.
    pub branches_used: usize,
}

fn check_bins(n: usize) -> Result<()> {
    if !(2..=1 << 20).contains(&n) {
        return Err(Error::InvalidArgument(format!("bin count must lie in [2, 2^20], got {n}")));
    }
    Ok(())
}

/// Length of `br⁻¹([y0, y1))` for a sub-interval of the branch image.
fn preimage_len(br: &Branch, index: usize, y0: f64, y1: f64) -> Result<f64> {
    if let Some((slope, _)) = br.affine_parts() {
        return Ok((y1 - y0) / slope);
    }
    let x0 = br.inverse(y0).ok_or(Error::InverseFailure { branch: index, y: y0 })?;
    let x1 = br.inverse(y1).ok_or(Error::InverseFailure { branch: index, y: y1 })?;
    Ok(x1 - x0)
}

/// Assemble the Ulam matrix of `map` on `n` bins.
pub fn build_ulam(map: &PiecewiseMap, n: usize, tail_tol: f64, exec: Execution) -> Result<UlamMatrix> {
    check_bins(n)?;
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
    }
    let nf = n as f64;
    // the bin index is constant on the tail hull once the tail sits inside one bin
    let bin_of = StepFunction::from_bins((0..n).map(|j| j as f64).collect())?;
    let closure = map.tail_closure(&bin_of, tail_tol, true);
    let count = match &closure {
        Some(c) => c.count,
        None => map.partition_depth(tail_tol / nf).count,
    };
    let branches = map.branches(count);
    let mut by_left: Vec<usize> = (0..branches.len()).collect();
    by_left.sort_by(|&i, &j| branches[i].a().total_cmp(&branches[j].a()));

    let row = |j: usize| -> Result<(Vec<(usize, f64)>, f64)> {
        let (x0, x1) = (j as f64 / nf, (j + 1) as f64 / nf);
        let mut acc = vec![0.0; 0];
        let mut cols: Vec<usize> = Vec::new();
        let mut covered = 0.0;
        let start = by_left.partition_point(|&i| branches[i].b() <= x0);
        for &i in &by_left[start..] {
            let br = &branches[i];
            if br.a() >= x1 {
                break;
            }
            let (lo, hi) = (br.a().max(x0), br.b().min(x1));
            if !(hi > lo) {
                continue;
            }
            covered += hi - lo;
            let (y0, y1) = (br.eval(lo), br.eval(hi));
            let k0 = ((y0 * nf).floor() as usize).min(n - 1);
            let k1 = ((y1 * nf).ceil() as usize).clamp(k0 + 1, n);
            for k in k0..k1 {
                let c0 = y0.max(k as f64 / nf);
                let c1 = y1.min((k + 1) as f64 / nf);
                if c1 > c0 {
                    let len = preimage_len(br, i, c0, c1)?;
                    if len > 0.0 {
                        cols.push(k);
                        acc.push(len * nf);
                    }
                }
            }
        }
        if let Some(c) = &closure {
            if c.value as usize == j && c.length > 0.0 {
                // each onto tail branch spreads its domain mass evenly over [0,1]
                covered += c.length;
                for k in 0..n {
                    cols.push(k);
                    acc.push(c.length);
                }
            }
        }
        let mut entries: Vec<(usize, f64)> = cols.into_iter().zip(acc).collect();
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (k, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += v,
                _ => merged.push((k, v)),
            }
        }
        let defect = (1.0 - covered * nf).max(0.0);
        Ok((merged, defect))
    };

    let chunks = map_chunks(exec, 0..n, ROW_CHUNK, |r| r.map(row).collect::<Result<Vec<_>>>());
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let (mut col_idx, mut vals, mut row_defect) = (Vec::new(), Vec::new(), Vec::with_capacity(n));
    for chunk in chunks {
        for (entries, defect) in chunk? {
            for (k, v) in entries {
                col_idx.push(k);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
            row_defect.push(defect);
        }
    }
    Ok(UlamMatrix::from_csr(n, row_ptr, col_idx, vals, row_defect, branches.len()))
}

impl UlamMatrix {
    fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
        row_defect: Vec<f64>,
        branches_used: usize,
    ) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &k in &col_idx {
            counts[k + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; col_idx.len()];
        let mut col_vals = vec![0.0; col_idx.len()];
        for j in 0..n {
            for e in row_ptr[j]..row_ptr[j + 1] {
                let k = col_idx[e];
                row_idx[next[k]] = j;
                col_vals[next[k]] = vals[e];
                next[k] += 1;
            }
        }
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
            col_ptr,
            row_idx,
            col_vals,
            row_defect,
            branches_used,
        }
    }

    /// Dense rows; for tests and small matrices.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        check_bins(n)?;
        let mut row_ptr = vec![0];
        let (mut col_idx, mut vals, mut defect) = (vec![], vec![], vec![]);
        for r in rows {
            if r.len() != n {
                return Err(Error::InvalidArgument("matrix must be square".into()));
            }
            for (k, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(k);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
            defect.push((1.0 - r.iter().sum::<f64>()).max(0.0));
        }
        Ok(Self::from_csr(n, row_ptr, col_idx, vals, defect, 0))
    }

    pub fn n_bins(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_defect(&self) -> &[f64] {
        &self.row_defect
    }

    pub fn row(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[j]..self.row_ptr[j + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.row(j).map(|(_, v)| v).sum()
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.row(j).find(|&(c, _)| c == k).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| {
                let mut r = vec![0.0; self.n];
                for (k, v) in self.row(j) {
                    r[k] = v;
                }
                r
            })
            .collect()
    }

    /// `v M`, one gather per column.
    pub fn left_mul(&self, v: &[f64], exec: Execution) -> Vec<f64> {
        map_chunks(exec, 0..self.n, 1024, |cols| {
            cols.map(|k| {
                (self.col_ptr[k]..self.col_ptr[k + 1])
                    .map(|e| v[self.row_idx[e]] * self.col_vals[e])
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
        })
        .concat()
    }

    /// `M v`.
    pub fn right_mul(&self, v: &[f64], exec: Execution) -> Vec<f64> {
        map_chunks(exec, 0..self.n, 1024, |rows| {
            rows.map(|j| self.row(j).map(|(k, x)| x * v[k]).sum::<f64>())
                .collect::<Vec<f64>>()
        })
        .concat()
    }

    /// Coordinate format, one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row col value")?;
        for j in 0..self.n {
            for (k, v) in self.row(j) {
                writeln!(w, "{j} {k} {}", fmt17(v))?;
            }
        }
        Ok(())
    }
}
