use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Images within this distance of 0 or 1 are snapped onto the endpoint.
pub const IMAGE_SNAP: f64 = 1e-12;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form branch data: forward map, derivative and (optionally) inverse.
pub struct AnalyticForm {
    pub forward: RealFn,
    pub derivative: RealFn,
    pub inverse: Option<RealFn>,
}

#[derive(Clone)]
pub enum BranchKind {
    /// `τ(x) = slope·(x − a) + offset`.
    Affine { slope: f64, offset: f64 },
    Analytic(Arc<AnalyticForm>),
    /// Composition, first element applied first. Empty chain is the identity.
    Chain(Arc<[Branch]>),
    /// `u ↦ (inner(shift + scale·u) − shift) / scale`.
    Rescaled {
        inner: Arc<Branch>,
        shift: f64,
        scale: f64,
    },
}

/// One monotone piece of an interval map, owning the half-open domain `[a, b)`.
#[derive(Clone)]
pub struct Branch {
    a: f64,
    b: f64,
    kind: BranchKind,
    image_left: f64,
    image_right: f64,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            BranchKind::Affine { slope, offset } => format!("affine(slope={slope}, offset={offset})"),
            BranchKind::Analytic(_) => "analytic".to_string(),
            BranchKind::Chain(c) => format!("chain(len={})", c.len()),
            BranchKind::Rescaled { shift, scale, .. } => format!("rescaled(shift={shift}, scale={scale})"),
        };
        f.debug_struct("Branch")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("kind", &kind)
            .field("image", &(self.image_left, self.image_right))
            .finish()
    }
}

fn snap(y: f64) -> f64 {
    if y.abs() <= IMAGE_SNAP {
        0.0
    } else if (y - 1.0).abs() <= IMAGE_SNAP {
        1.0
    } else {
        y
    }
}

fn check_domain(a: f64, b: f64) -> Result<()> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::MalformedBranch {
            index: usize::MAX,
            reason: format!("domain [{a}, {b}) is not an ordered subinterval of [0,1]"),
        });
    }
    Ok(())
}

impl Branch {
    fn with_kind(a: f64, b: f64, kind: BranchKind) -> Self {
        let mut br = Branch {
            a,
            b,
            kind,
            image_left: 0.0,
            image_right: 0.0,
        };
        br.image_left = snap(br.eval_raw(a));
        br.image_right = snap(br.eval_raw(b));
        br
    }

    /// Affine branch `τ(x) = slope·x + intercept` on `[a, b)`.
    pub fn affine(a: f64, b: f64, slope: f64, intercept: f64) -> Result<Self> {
        let offset = slope * a + intercept;
        Self::affine_from_left(a, b, slope, snap(offset))
    }

    /// Affine branch written relative to its left endpoint: `τ(x) = slope·(x − a) + offset`.
    pub fn affine_from_left(a: f64, b: f64, slope: f64, offset: f64) -> Result<Self> {
        check_domain(a, b)?;
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::MalformedBranch {
                index: usize::MAX,
                reason: format!("affine slope {slope} must be positive"),
            });
        }
        Ok(Self::with_kind(a, b, BranchKind::Affine { slope, offset }))
    }

    pub fn analytic(a: f64, b: f64, form: AnalyticForm) -> Result<Self> {
        check_domain(a, b)?;
        Ok(Self::with_kind(a, b, BranchKind::Analytic(Arc::new(form))))
    }

    /// Identity on `[a, b)`.
    pub fn identity(a: f64, b: f64) -> Result<Self> {
        check_domain(a, b)?;
        Ok(Self::with_kind(a, b, BranchKind::Chain(Arc::from(Vec::new()))))
    }

    /// `then ∘ self` restricted to `[lo, hi) ⊂ [a, b)`; caller guarantees `self([lo,hi)) ⊂ dom(then)`.
    pub fn then(&self, then: &Branch, lo: f64, hi: f64) -> Branch {
        let mut chain: Vec<Branch> = match &self.kind {
            BranchKind::Chain(c) => c.to_vec(),
            _ => vec![self.clone()],
        };
        match &then.kind {
            BranchKind::Chain(c) => chain.extend(c.iter().cloned()),
            _ => chain.push(then.clone()),
        }
        Branch::with_kind(lo, hi, BranchKind::Chain(Arc::from(chain)))
    }

    /// Conjugate by the affine rescaling `x = shift + scale·u` of `[shift, shift + scale]` onto [0,1].
    pub fn rescaled(&self, shift: f64, scale: f64) -> Branch {
        let lo = ((self.a - shift) / scale).clamp(0.0, 1.0);
        let hi = ((self.b - shift) / scale).clamp(0.0, 1.0);
        Branch::with_kind(
            lo,
            hi,
            BranchKind::Rescaled {
                inner: Arc::new(self.clone()),
                shift,
                scale,
            },
        )
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn kind(&self) -> &BranchKind {
        &self.kind
    }

    pub fn image_left(&self) -> f64 {
        self.image_left
    }

    pub fn image_right(&self) -> f64 {
        self.image_right
    }

    fn eval_raw(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine { slope, offset } => slope * (x - self.a) + offset,
            BranchKind::Analytic(form) => (form.forward)(x),
            BranchKind::Chain(chain) => chain.iter().fold(x, |y, br| br.eval(y)),
            BranchKind::Rescaled { inner, shift, scale } => (inner.eval(shift + scale * x) - shift) / scale,
        }
    }

    /// Forward value; uses the cached one-sided limits at the domain ends.
    pub fn eval(&self, x: f64) -> f64 {
        if x == self.a {
            self.image_left
        } else if x == self.b {
            self.image_right
        } else {
            self.eval_raw(x)
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Affine { slope, .. } => *slope,
            BranchKind::Analytic(form) => (form.derivative)(x),
            BranchKind::Chain(chain) => {
                let mut y = x;
                let mut d = 1.0;
                for br in chain.iter() {
                    d *= br.derivative(y);
                    y = br.eval(y);
                }
                d
            }
            BranchKind::Rescaled { inner, shift, scale } => inner.derivative(shift + scale * x),
        }
    }

    /// Derivative at the left endpoint (right limit); the infimum of τ′ for convex branches.
    pub fn left_slope(&self) -> f64 {
        self.derivative(self.a)
    }

    /// `Some((slope, offset))` when the branch is affine, possibly through composition.
    pub fn affine_parts(&self) -> Option<(f64, f64)> {
        match &self.kind {
            BranchKind::Affine { slope, offset } => Some((*slope, *offset)),
            BranchKind::Analytic(_) => None,
            BranchKind::Chain(chain) => {
                let mut slope = 1.0;
                for br in chain.iter() {
                    slope *= br.affine_parts()?.0;
                }
                Some((slope, self.image_left))
            }
            BranchKind::Rescaled { inner, .. } => inner.affine_parts().map(|(s, _)| (s, self.image_left)),
        }
    }

    pub fn is_affine(&self) -> bool {
        self.affine_parts().is_some()
    }

    /// Owns `x` under the right-continuous convention (`x = 1` belongs to a branch ending at 1).
    pub fn contains(&self, x: f64) -> bool {
        (self.a <= x && x < self.b) || (x == 1.0 && self.b == 1.0)
    }

    /// `y` lies in the image of the half-open domain; at `y = 1` the left limit is used.
    pub fn image_contains(&self, y: f64) -> bool {
        (self.image_left <= y && y < self.image_right) || (y == 1.0 && self.image_right == 1.0)
    }

    /// Preimage of `y` in `[a, b]`; `None` when `y` is outside the image or bracketing fails.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        if y == self.image_left {
            return Some(self.a);
        }
        if y == self.image_right {
            return Some(self.b);
        }
        if !(self.image_left..=self.image_right).contains(&y) {
            return None;
        }
        let x = match &self.kind {
            BranchKind::Affine { slope, offset } => self.a + (y - offset) / slope,
            BranchKind::Analytic(form) => match &form.inverse {
                Some(inv) => inv(y),
                None => return bracket_inverse(|x| self.eval_raw(x), |x| self.derivative(x), y, self.a, self.b),
            },
            BranchKind::Chain(chain) => {
                let mut x = y;
                for br in chain.iter().rev() {
                    x = br.inverse(x)?;
                }
                x
            }
            BranchKind::Rescaled { inner, shift, scale } => (inner.inverse(shift + scale * y)? - shift) / scale,
        };
        Some(x.clamp(self.a, self.b))
    }
}

/// Solve `f(x) = y` for increasing `f` on `[lo, hi]` by safeguarded Newton/bisection to 1e-12.
pub fn bracket_inverse(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    y: f64,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo) - y, f(hi) - y);
    if !(flo.is_finite() && fhi.is_finite()) || flo > 1e-12 || fhi < -1e-12 {
        return None;
    }
    if flo >= 0.0 {
        return Some(lo);
    }
    if fhi <= 0.0 {
        return Some(hi);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - y;
        if fx == 0.0 {
            return Some(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
            break;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Some(0.5 * (lo + hi))
}
