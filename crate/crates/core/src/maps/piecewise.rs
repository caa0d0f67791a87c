use std::fmt;
use std::sync::{Arc, RwLock};

use super::branch::Branch;
use crate::error::{Error, Result};
use crate::step::Observable;

/// Tail branches generated on demand are memoized up to this many.
const MEMO_CAP: usize = 1 << 16;
/// Search ceiling for truncation depths.
const MAX_DEPTH: usize = 1 << 40;

type IndexFn<T> = Arc<dyn Fn(usize) -> T + Send + Sync>;

/// Analytic description of the branches beyond a stored prefix.
///
/// All index arguments are counts: `slope_sum(i0)` bounds `Σ 1/τ_i′(a_i)` over
/// branches with 0-based index `i ≥ i0`, and likewise for the other sums.
#[derive(Clone)]
pub struct TailDescriptor {
    generator: IndexFn<Option<Branch>>,
    slope_sum: IndexFn<f64>,
    length: IndexFn<f64>,
    endpoint_sum: Option<IndexFn<f64>>,
    locate: Option<Arc<dyn Fn(f64) -> Option<usize> + Send + Sync>>,
    hull: Option<IndexFn<(f64, f64)>>,
    limit: Option<usize>,
}

impl TailDescriptor {
    pub fn new(
        generator: impl Fn(usize) -> Option<Branch> + Send + Sync + 'static,
        slope_sum: impl Fn(usize) -> f64 + Send + Sync + 'static,
        length: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            generator: Arc::new(generator),
            slope_sum: Arc::new(slope_sum),
            length: Arc::new(length),
            endpoint_sum: None,
            locate: None,
            hull: None,
            limit: None,
        }
    }

    /// Bound on `Σ_{i ≥ i0} 1/(a_i τ_i′(a_i))`, used for the additive Lasota–Yorke constant.
    pub fn with_endpoint_sum(mut self, f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        self.endpoint_sum = Some(Arc::new(f));
        self
    }

    /// Closed-form branch lookup for points in the tail.
    pub fn with_locate(mut self, f: impl Fn(f64) -> Option<usize> + Send + Sync + 'static) -> Self {
        self.locate = Some(Arc::new(f));
        self
    }

    /// Declare that every tail branch is affine and onto [0,1], that `slope_sum`
    /// and `length` are exact, and that `hull(i0)` encloses the domains of all
    /// branches with index `≥ i0`. Operator sums then close the tail analytically.
    pub fn with_exact_onto_tail(mut self, hull: impl Fn(usize) -> (f64, f64) + Send + Sync + 'static) -> Self {
        self.hull = Some(Arc::new(hull));
        self
    }

    /// The generator refuses every index `≥ limit`.
    pub fn with_limit(mut self, limit: usize) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn generate(&self, i: usize) -> Option<Branch> {
        if self.limit.is_some_and(|l| i >= l) {
            return None;
        }
        (self.generator)(i)
    }

    pub fn slope_sum(&self, i0: usize) -> f64 {
        (self.slope_sum)(i0)
    }

    pub fn length(&self, i0: usize) -> f64 {
        (self.length)(i0)
    }

    pub fn endpoint_sum(&self, i0: usize) -> Option<f64> {
        self.endpoint_sum.as_ref().map(|f| f(i0))
    }

    pub fn hull(&self, i0: usize) -> Option<(f64, f64)> {
        self.hull.as_ref().map(|f| f(i0))
    }

    pub fn is_exact_onto(&self) -> bool {
        self.hull.is_some()
    }

    pub fn limit(&self) -> Option<usize> {
        self.limit
    }
}

/// How far an infinite family was materialized and what the remainder is worth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depth {
    pub count: usize,
    pub bound: f64,
}

/// A tail that is closed analytically instead of being summed branch by branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailClosure {
    /// Branches below this index are summed explicitly.
    pub count: usize,
    /// Midpoint of the observable's enclosure on the tail hull.
    pub value: f64,
    /// Bound on `|Σ_{i ≥ count} f(x_i)/τ_i′ − value·slope_sum|`; zero when the observable is constant there.
    pub error: f64,
    /// Exact `Σ_{i ≥ count} 1/τ_i′`.
    pub slope_sum: f64,
    /// Exact total length of the tail domains.
    pub length: f64,
    pub hull: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    pub value: f64,
    pub slope: f64,
    pub index: usize,
}

/// A piecewise monotone map of [0,1]: a stored prefix of branches plus an optional analytic tail.
pub struct PiecewiseMap {
    name: String,
    prefix: Vec<Branch>,
    tail: Option<TailDescriptor>,
    accumulates_at_zero: bool,
    by_left: Vec<usize>,
    memo: RwLock<Vec<Branch>>,
}

impl Clone for PiecewiseMap {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            prefix: self.prefix.clone(),
            tail: self.tail.clone(),
            accumulates_at_zero: self.accumulates_at_zero,
            by_left: self.by_left.clone(),
            memo: RwLock::new(self.memo.read().expect("memo lock").clone()),
        }
    }
}

impl fmt::Debug for PiecewiseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseMap")
            .field("name", &self.name)
            .field("prefix", &self.prefix.len())
            .field("infinite", &self.tail.is_some())
            .field("accumulates_at_zero", &self.accumulates_at_zero)
            .finish()
    }
}

impl PiecewiseMap {
    pub fn new(
        name: impl Into<String>,
        prefix: Vec<Branch>,
        tail: Option<TailDescriptor>,
        accumulates_at_zero: bool,
    ) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::MalformedBranch {
                index: 0,
                reason: "map has no branches".into(),
            });
        }
        let mut by_left: Vec<usize> = (0..prefix.len()).collect();
        by_left.sort_by(|&i, &j| prefix[i].a().total_cmp(&prefix[j].a()));
        for w in by_left.windows(2) {
            let (p, q) = (&prefix[w[0]], &prefix[w[1]]);
            if q.a() < p.b() {
                return Err(Error::MalformedBranch {
                    index: w[1],
                    reason: format!(
                        "domain [{}, {}) overlaps branch {} on [{}, {})",
                        q.a(),
                        q.b(),
                        w[0],
                        p.a(),
                        p.b()
                    ),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            prefix,
            tail,
            accumulates_at_zero,
            by_left,
            memo: RwLock::new(Vec::new()),
        })
    }

    /// A finite family; 0 is not an accumulation point.
    pub fn finite(name: impl Into<String>, branches: Vec<Branch>) -> Result<Self> {
        Self::new(name, branches, None, false)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn prefix(&self) -> &[Branch] {
        &self.prefix
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix.len()
    }

    pub fn tail(&self) -> Option<&TailDescriptor> {
        self.tail.as_ref()
    }

    pub fn is_finite(&self) -> bool {
        self.tail.is_none()
    }

    pub fn accumulates_at_zero(&self) -> bool {
        self.accumulates_at_zero
    }

    /// Branch `i` (0-based), generating and memoizing tail branches as needed.
    pub fn branch(&self, i: usize) -> Option<Branch> {
        if let Some(br) = self.prefix.get(i) {
            return Some(br.clone());
        }
        let tail = self.tail.as_ref()?;
        let t = i - self.prefix.len();
        if t >= MEMO_CAP {
            return tail.generate(i);
        }
        if let Some(br) = self.memo.read().expect("memo lock").get(t) {
            return Some(br.clone());
        }
        let mut memo = self.memo.write().expect("memo lock");
        while memo.len() <= t {
            let next = self.prefix.len() + memo.len();
            memo.push(tail.generate(next)?);
        }
        Some(memo[t].clone())
    }

    /// The first `count` branches (fewer if the tail generator refuses).
    pub fn branches(&self, count: usize) -> Vec<Branch> {
        (0..count).map_while(|i| self.branch(i)).collect()
    }

    fn depth_by(&self, tail_tol: f64, measure: impl Fn(&TailDescriptor, usize) -> f64) -> Depth {
        let p = self.prefix.len();
        let Some(tail) = &self.tail else {
            return Depth { count: p, bound: 0.0 };
        };
        let ceiling = tail.limit().unwrap_or(MAX_DEPTH).max(p);
        if measure(tail, p) <= tail_tol || ceiling == p {
            return Depth {
                count: p,
                bound: measure(tail, p),
            };
        }
        // exponential then binary search for the first i0 with measure(i0) <= tol
        let mut lo = p;
        let mut step = 1usize;
        let mut hi = loop {
            let cand = (p + step).min(ceiling);
            if measure(tail, cand) <= tail_tol || cand == ceiling {
                break cand;
            }
            lo = cand;
            step *= 2;
        };
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if measure(tail, mid) <= tail_tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if measure(tail, hi) > tail_tol && hi < ceiling {
            hi = ceiling;
        }
        Depth {
            count: hi,
            bound: measure(tail, hi),
        }
    }

    /// Materialization depth for operator sums: stop once `tail_slope_sum ≤ tail_tol`.
    pub fn operator_depth(&self, tail_tol: f64) -> Depth {
        self.depth_by(tail_tol, |t, i| t.slope_sum(i))
    }

    /// Materialization depth for partitions: stop once `tail_length ≤ tail_tol`.
    pub fn partition_depth(&self, tail_tol: f64) -> Depth {
        self.depth_by(tail_tol, |t, i| t.length(i))
    }

    /// Analytic tail closure for an observable that is (nearly) constant on the tail hull.
    ///
    /// Returns `None` unless the tail is declared exact-onto. Otherwise finds the
    /// smallest materialization count, not beyond the plain operator depth, at
    /// which the observable's enclosure on the remaining hull is a single value
    /// (`exact`) or costs at most `tail_tol·sup|f|` after multiplying by the tail
    /// slope sum.
    pub fn tail_closure<O: Observable + ?Sized>(&self, f: &O, tail_tol: f64, exact: bool) -> Option<TailClosure> {
        let tail = self.tail.as_ref().filter(|t| t.is_exact_onto())?;
        let p = self.prefix.len();
        let plain = self.operator_depth(tail_tol).count.max(p);
        let budget = tail_tol * f.sup_abs();
        let close_at = |i0: usize| -> Option<TailClosure> {
            let hull = tail.hull(i0)?;
            let (lo, hi) = f.range_on(hull.0, hull.1)?;
            let slope_sum = tail.slope_sum(i0);
            let error = 0.5 * (hi - lo) * slope_sum;
            let ok = if exact { lo == hi } else { error <= budget };
            ok.then(|| TailClosure {
                count: i0,
                value: if lo == hi { lo } else { 0.5 * (lo + hi) },
                error,
                slope_sum,
                length: tail.length(i0),
                hull,
            })
        };
        let mut i0 = p;
        let mut step = 1usize;
        loop {
            if let Some(c) = close_at(i0) {
                return Some(c);
            }
            if i0 >= plain {
                return None;
            }
            i0 = (p + step).min(plain);
            step *= 2;
        }
    }

    /// Index of the branch owning `x` (right-continuous convention).
    pub fn locate(&self, x: f64) -> Result<usize> {
        let k = self.by_left.partition_point(|&i| self.prefix[i].a() <= x);
        if k > 0 {
            let i = self.by_left[k - 1];
            if self.prefix[i].contains(x) {
                return Ok(i);
            }
        }
        if let Some(tail) = &self.tail {
            if let Some(loc) = &tail.locate {
                if let Some(i) = loc(x) {
                    for cand in [i, i.saturating_sub(1), i + 1] {
                        if cand >= self.prefix.len() && self.branch(cand).is_some_and(|b| b.contains(x)) {
                            return Ok(cand);
                        }
                    }
                }
            } else {
                let memo_len = self.memo.read().expect("memo lock").len();
                let scan = (self.prefix.len() + memo_len).max(self.prefix.len() + 4096).min(self.prefix.len() + MEMO_CAP);
                for i in self.prefix.len()..scan {
                    match self.branch(i) {
                        Some(b) if b.contains(x) => return Ok(i),
                        Some(_) => {}
                        None => break,
                    }
                }
            }
        }
        Err(Error::PointInTailGap {
            x,
            materialized: self.prefix.len() + self.memo.read().expect("memo lock").len(),
        })
    }

    /// `(τ(x), τ′(x), branch index)`.
    pub fn apply(&self, x: f64) -> Result<Applied> {
        let index = self.locate(x)?;
        let br = self.branch(index).expect("located branch exists");
        Ok(Applied {
            value: br.eval(x),
            slope: br.derivative(x),
            index,
        })
    }

    /// All `(τ_i⁻¹(y), i)` over branches materialized to the operator depth, ordered by index.
    pub fn preimages(&self, y: f64, tail_tol: f64) -> Result<Vec<(f64, usize)>> {
        if !(tail_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tail_tol must be positive, got {tail_tol}")));
        }
        let depth = self.operator_depth(tail_tol);
        let mut out = Vec::new();
        for i in 0..depth.count {
            let Some(br) = self.branch(i) else { break };
            if br.image_contains(y) {
                let x = br.inverse(y).ok_or(Error::InverseFailure { branch: i, y })?;
                out.push((x, i));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use approx::assert_relative_eq;

    #[test]
    fn apply_three_branch() {
        let m = builtin::three_branch();
        let r = m.apply(0.3).unwrap();
        assert_relative_eq!(r.value, 0.1, epsilon = 1e-15);
        assert_eq!((r.slope, r.index), (2.0, 1));
        assert_eq!(m.apply(1.0).unwrap().index, 2);
        assert_eq!(m.apply(0.5).unwrap().value, 0.0);
    }

    #[test]
    fn apply_shifted_linear() {
        let m = builtin::shifted_linear();
        let r = m.apply(0.5).unwrap();
        assert_eq!((r.value, r.slope, r.index), (0.0, 6.0, 1));
        let r = m.apply(0.7).unwrap();
        assert_relative_eq!(r.value, 0.4, epsilon = 1e-13);
        assert_eq!((r.slope, r.index), (12.0, 2));
        // deep in the tail
        let x = 1.0 - 1.0 / 1_000_000.5;
        let r = m.apply(x).unwrap();
        assert_eq!(r.index, 999_999);
        assert!((0.0..=1.0).contains(&r.value));
    }

    #[test]
    fn tail_gap_is_reported() {
        let m = builtin::harmonic();
        assert!(matches!(m.apply(0.0), Err(Error::PointInTailGap { .. })));
    }

    #[test]
    fn preimages_three_branch() {
        let m = builtin::three_branch();
        let p = m.preimages(0.3, 1e-8).unwrap();
        let expect = [(0.15, 0), (0.4, 1), (0.65, 2)];
        assert_eq!(p.len(), 3);
        for ((x, i), (ex, ei)) in p.iter().zip(expect) {
            assert_relative_eq!(*x, ex, epsilon = 1e-15);
            assert_eq!(*i, ei);
        }
        let p = m.preimages(0.7, 1e-8).unwrap();
        assert_eq!(p.len(), 1);
        assert_relative_eq!(p[0].0, 0.85, epsilon = 1e-15);
        assert_eq!(p[0].1, 2);
    }

    #[test]
    fn preimages_of_zero_are_left_endpoints() {
        let m = builtin::shifted_linear();
        let p = m.preimages(0.0, 1e-3).unwrap();
        let depth = m.operator_depth(1e-3);
        assert_eq!(p.len(), depth.count);
        for (x, i) in p {
            assert_eq!(x, m.branch(i).unwrap().a());
        }
        assert!(m.preimages(0.1, 0.0).is_err());
    }

    #[test]
    fn operator_depth_meets_tolerance() {
        let m = builtin::shifted_linear();
        let d = m.operator_depth(1e-4);
        assert!(d.bound <= 1e-4);
        let prev = m.tail().unwrap().slope_sum(d.count - 1);
        assert!(prev > 1e-4);
        let f = builtin::three_branch();
        assert_eq!(f.operator_depth(1e-9), Depth { count: 3, bound: 0.0 });
    }

    #[test]
    fn overlapping_domains_rejected() {
        let b1 = Branch::affine(0.0, 0.6, 2.0, 0.0).unwrap();
        let b2 = Branch::affine(0.5, 1.0, 2.0, -1.0).unwrap();
        assert!(matches!(
            PiecewiseMap::finite("bad", vec![b1, b2]),
            Err(Error::MalformedBranch { index: 1, .. })
        ));
    }

    #[test]
    fn concurrent_memoization_is_consistent() {
        let m = Arc::new(builtin::harmonic());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let m = Arc::clone(&m);
                std::thread::spawn(move || (0..2000).map(|i| m.branch(i + t).unwrap().a()).collect::<Vec<_>>())
            })
            .collect();
        for (t, h) in handles.into_iter().enumerate() {
            let v = h.join().unwrap();
            for (i, a) in v.into_iter().enumerate() {
                assert_eq!(a, 1.0 / (i + t + 2) as f64);
            }
        }
    }
}
