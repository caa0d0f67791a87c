//! Named example maps.

use super::branch::Branch;
use super::piecewise::{PiecewiseMap, TailDescriptor};
use crate::error::{Error, Result};
use crate::sampler::{self, TargetDistribution};

/// Stored branches for the infinite families; the rest comes from the tail generator.
pub const PREFIX: usize = 64;

pub const NAMES: [&str; 5] = ["shifted_linear", "harmonic", "three_branch", "doubling", "conjugated_exp"];

/// Look up a built-in map; `k` is the branch count for `conjugated_exp` (default 5).
pub fn builtin(name: &str, k: Option<usize>) -> Result<PiecewiseMap> {
    match name {
        "shifted_linear" => Ok(shifted_linear()),
        "harmonic" => Ok(harmonic()),
        "three_branch" => Ok(three_branch()),
        "doubling" => Ok(doubling()),
        "conjugated_exp" => conjugated_exp(k.unwrap_or(5)),
        other => Err(Error::UnknownName(other.to_string())),
    }
}

/// `None` once the endpoints round to the same double, near `j ≈ 9.5e7`.
fn shifted_linear_branch(i: usize) -> Option<Branch> {
    let j = (i + 1) as f64;
    Branch::affine_from_left((j - 1.0) / j, j / (j + 1.0), j * (j + 1.0), 0.0).ok()
}

/// Branches on `((j−1)/j, j/(j+1))` with slope `j(j+1)`, each onto [0,1]; accumulates at 1.
pub fn shifted_linear() -> PiecewiseMap {
    let prefix = (0..PREFIX).map(|i| shifted_linear_branch(i).expect("valid branch")).collect();
    let tail = TailDescriptor::new(
        shifted_linear_branch,
        |i0| 1.0 / (i0 + 1) as f64,
        |i0| 1.0 / (i0 + 1) as f64,
    )
    // Σ_{j>i0} 1/((j−1)(j+1)) telescopes
    .with_endpoint_sum(|i0| {
        if i0 == 0 {
            f64::INFINITY
        } else {
            0.5 * (1.0 / i0 as f64 + 1.0 / (i0 + 1) as f64)
        }
    })
    .with_locate(|x| {
        if !(0.0..1.0).contains(&x) {
            return None;
        }
        let j = (1.0 / (1.0 - x)).floor();
        (j >= 1.0 && j < 1e15).then(|| j as usize - 1)
    })
    .with_exact_onto_tail(|i0| (i0 as f64 / (i0 + 1) as f64, 1.0));
    PiecewiseMap::new("shifted_linear", prefix, Some(tail), false).expect("valid map")
}

fn harmonic_branch(i: usize) -> Option<Branch> {
    let j = (i + 1) as f64;
    Branch::affine_from_left(1.0 / (j + 1.0), 1.0 / j, j * (j + 1.0), 0.0).ok()
}

/// Branches on `(1/(j+1), 1/j)` with slope `j(j+1)`, each onto [0,1]; accumulates at 0.
pub fn harmonic() -> PiecewiseMap {
    let prefix = (0..PREFIX).map(|i| harmonic_branch(i).expect("valid branch")).collect();
    let tail = TailDescriptor::new(
        harmonic_branch,
        |i0| 1.0 / (i0 + 1) as f64,
        |i0| 1.0 / (i0 + 1) as f64,
    )
    .with_locate(|x| {
        if !(x > 0.0 && x <= 1.0) {
            return None;
        }
        let j = (1.0 / x).floor();
        (j < 1e15).then(|| j as usize - 1)
    })
    .with_exact_onto_tail(|i0| (0.0, 1.0 / (i0 + 1) as f64));
    PiecewiseMap::new("harmonic", prefix, Some(tail), true).expect("valid map")
}

/// `2x`, `2x − 1/2`, `2x − 1` on `[0,1/4)`, `[1/4,1/2)`, `[1/2,1]`.
pub fn three_branch() -> PiecewiseMap {
    PiecewiseMap::finite(
        "three_branch",
        vec![
            Branch::affine(0.0, 0.25, 2.0, 0.0).expect("valid branch"),
            Branch::affine(0.25, 0.5, 2.0, -0.5).expect("valid branch"),
            Branch::affine(0.5, 1.0, 2.0, -1.0).expect("valid branch"),
        ],
    )
    .expect("valid map")
}

pub fn doubling() -> PiecewiseMap {
    PiecewiseMap::finite(
        "doubling",
        vec![
            Branch::affine(0.0, 0.5, 2.0, 0.0).expect("valid branch"),
            Branch::affine(0.5, 1.0, 2.0, -1.0).expect("valid branch"),
        ],
    )
    .expect("valid map")
}

/// `h⁻¹ ∘ (k·x mod 1) ∘ h` for the truncated exponential target.
pub fn conjugated_exp(k: usize) -> Result<PiecewiseMap> {
    Ok(sampler::conjugated_map(&TargetDistribution::exponential(), k)?.with_name("conjugated_exp"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_linear_layout() {
        let m = shifted_linear();
        for i in 0..10 {
            let br = m.branch(i).unwrap();
            let j = (i + 1) as f64;
            assert_eq!(br.a(), (j - 1.0) / j);
            assert_eq!(br.left_slope(), j * (j + 1.0));
            assert_eq!((br.image_left(), br.image_right()), (0.0, 1.0));
            assert_eq!(m.branch(i + 1).unwrap().a(), br.b());
        }
        // tail generation beyond the prefix matches the formula
        assert_eq!(m.branch(PREFIX + 5).unwrap().a(), (PREFIX + 5) as f64 / (PREFIX + 6) as f64);
    }

    #[test]
    fn three_branch_layout() {
        let m = three_branch();
        let slopes: Vec<f64> = m.prefix().iter().map(|b| b.left_slope()).collect();
        assert_eq!(slopes, vec![2.0; 3]);
        let images: Vec<f64> = m.prefix().iter().map(|b| b.image_right()).collect();
        assert_eq!(images, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn conjugated_exp_has_k_branches() {
        let m = builtin("conjugated_exp", Some(5)).unwrap();
        assert_eq!(m.prefix_len(), 5);
        assert_eq!(m.apply(0.0).unwrap().value, 0.0);
        for br in m.prefix() {
            assert!(br.image_right() == 1.0);
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin("tent", None), Err(Error::UnknownName(_))));
    }
}
