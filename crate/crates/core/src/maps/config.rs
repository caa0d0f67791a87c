//! JSON map configurations.
//!
//! ```json
//! {"kind": "linear", "branches": [{"a": 0, "b": 0.5, "slope": 2, "intercept": 0}, ...]}
//! {"kind": "conjugated_exp", "k": 5}
//! {"kind": "first_return", "base": {"kind": "doubling"}, "eps": 0.5}
//! ```
//!
//! A branch may carry an `exponent` p, giving `τ(x) = slope·(x − a)^p + slope·a + intercept`
//! (which is the affine form when p = 1).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::branch::{AnalyticForm, Branch};
use super::first_return::first_return_map;
use super::{builtin, PiecewiseMap};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_RETURN_TIME: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Linear,
    ShiftedLinear,
    Harmonic,
    ThreeBranch,
    Doubling,
    ConjugatedExp,
    FirstReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub a: f64,
    pub b: f64,
    pub slope: f64,
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub kind: MapKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<BranchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<MapConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_return_time: Option<usize>,
}

impl MapConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Build the map; `tail_tol` is only used by first-return constructions.
    pub fn build(&self, tail_tol: f64) -> Result<PiecewiseMap> {
        let name = match self.kind {
            MapKind::Linear => return linear(&self.branches),
            MapKind::FirstReturn => {
                let base = self
                    .base
                    .as_ref()
                    .ok_or_else(|| Error::Config("first_return needs a `base` map".into()))?
                    .build(tail_tol)?;
                let eps = self.eps.ok_or_else(|| Error::Config("first_return needs `eps`".into()))?;
                let cap = self.max_return_time.unwrap_or(DEFAULT_MAX_RETURN_TIME);
                return Ok(first_return_map(&base, eps, cap, tail_tol)?.map);
            }
            MapKind::ShiftedLinear => "shifted_linear",
            MapKind::Harmonic => "harmonic",
            MapKind::ThreeBranch => "three_branch",
            MapKind::Doubling => "doubling",
            MapKind::ConjugatedExp => "conjugated_exp",
        };
        if !self.branches.is_empty() {
            return Err(Error::Config(format!("`branches` is only allowed for kind linear, not {name}")));
        }
        builtin::builtin(name, self.k)
    }
}

fn power_branch(index: usize, c: &BranchConfig) -> Result<Branch> {
    let p = c.exponent.unwrap_or(1.0);
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::MalformedBranch {
            index,
            reason: format!("exponent {p} must be positive"),
        });
    }
    let tag = |e: Error| match e {
        Error::MalformedBranch { reason, .. } => Error::MalformedBranch { index, reason },
        other => other,
    };
    if p == 1.0 {
        return Branch::affine(c.a, c.b, c.slope, c.intercept).map_err(tag);
    }
    if !(c.slope > 0.0 && c.slope.is_finite()) {
        return Err(Error::MalformedBranch {
            index,
            reason: format!("slope {} must be positive", c.slope),
        });
    }
    let (a, s) = (c.a, c.slope);
    let offset = s * a + c.intercept;
    Branch::analytic(
        c.a,
        c.b,
        AnalyticForm {
            forward: Arc::new(move |x: f64| s * (x - a).max(0.0).powf(p) + offset),
            derivative: Arc::new(move |x: f64| s * p * (x - a).max(0.0).powf(p - 1.0)),
            inverse: Some(Arc::new(move |y: f64| a + ((y - offset) / s).max(0.0).powf(1.0 / p))),
        },
    )
    .map_err(tag)
}

fn linear(branches: &[BranchConfig]) -> Result<PiecewiseMap> {
    let built = branches
        .iter()
        .enumerate()
        .map(|(i, c)| power_branch(i, c))
        .collect::<Result<Vec<_>>>()?;
    PiecewiseMap::finite("linear", built)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::validate::validate;

    #[test]
    fn linear_three_branch_from_json() {
        let text = r#"{"kind":"linear","branches":[
            {"a":0,"b":0.25,"slope":2,"intercept":0},
            {"a":0.25,"b":0.5,"slope":2,"intercept":-0.5},
            {"a":0.5,"b":1,"slope":2,"intercept":-1}]}"#;
        let m = MapConfig::from_json(text).unwrap().build(1e-8).unwrap();
        assert_eq!(m.prefix_len(), 3);
        assert_eq!(m.apply(0.3).unwrap().index, 1);
        assert!(validate(&m, 64, 1e-8).unwrap().in_t);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(MapConfig::from_json(r#"{"kind":"doubling","colour":"red"}"#).is_err());
        assert!(MapConfig::from_json(r#"{"kind":"tent"}"#).is_err());
    }

    #[test]
    fn square_branch_is_rejected_by_validation() {
        let text = r#"{"kind":"linear","branches":[{"a":0,"b":1,"slope":1,"intercept":0,"exponent":2}]}"#;
        let m = MapConfig::from_json(text).unwrap().build(1e-8).unwrap();
        let rep = validate(&m, 64, 1e-8).unwrap();
        assert!(!rep.in_t);
        assert_eq!(m.apply(0.5).unwrap().value, 0.25);
    }

    #[test]
    fn nested_first_return() {
        let text = r#"{"kind":"first_return","base":{"kind":"doubling"},"eps":0.5,"max_return_time":40}"#;
        let m = MapConfig::from_json(text).unwrap().build(1e-9).unwrap();
        // return-time-1 branch [3/4, 1] rescales to [1/2, 1]
        assert_eq!(m.prefix()[0].a(), 0.5);
    }

    #[test]
    fn builtins_by_kind() {
        let m = MapConfig::from_json(r#"{"kind":"conjugated_exp","k":3}"#).unwrap().build(1e-8).unwrap();
        assert_eq!(m.prefix_len(), 3);
    }
}
