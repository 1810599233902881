//! Convex functions with a deterministic subgradient selection.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::sets::ConvexSetSpec;
use crate::error::{check_dim, Error, Result};
use crate::linop::LinearMap;

/// A convex function `f: ℝⁿ → ℝ` together with the side information the
/// regularity machinery needs.
pub trait ConvexFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    /// One fixed element of `∂f(x)`.
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Strong convexity constant `α`, or 0 when unknown.
    fn strong_convexity(&self) -> f64 {
        0.0
    }

    /// A point `z` with `f(z) < 0`, if one is known.
    fn slater_point(&self) -> Option<DVector<f64>> {
        None
    }

    /// Upper bound `M` on `‖g‖` for `g ∈ ∂f(x)`, `x ∈ B(center, radius)`.
    fn subgrad_bound(&self, center: &DVector<f64>, radius: f64) -> Option<f64>;

    /// Closed-form projection onto `S(f, 0)` when one exists.
    fn sublevel_projection(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// `S(f, 0)` written as an intersection of simpler sets, when possible.
    fn sublevel_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        None
    }

    /// `{x : f(Ax) ≤ 0}` as an intersection of sets in the domain of `A`.
    fn sublevel_pullback(&self, _map: &LinearMap) -> Option<Vec<ConvexSetSpec>> {
        None
    }
}

pub type FunctionRef = Arc<dyn ConvexFunction>;

/// `f(x) = ⟨a, x⟩ − b`.
#[derive(Debug, Clone)]
pub struct AffineFunction {
    normal: DVector<f64>,
    offset: f64,
    slater: Option<DVector<f64>>,
}

impl AffineFunction {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if normal.norm() == 0.0 {
            return Err(Error::InvalidParameter(
                "affine function with zero normal".into(),
            ));
        }
        Ok(Self {
            normal,
            offset,
            slater: None,
        })
    }

    pub fn with_slater_point(mut self, z: DVector<f64>) -> Result<Self> {
        check_dim(self.normal.len(), z.len())?;
        if self.value(&z) >= 0.0 {
            return Err(Error::InvalidParameter(
                "Slater point must satisfy f(z) < 0".into(),
            ));
        }
        self.slater = Some(z);
        Ok(self)
    }
}

impl ConvexFunction for AffineFunction {
    fn dim(&self) -> usize {
        self.normal.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    fn subgradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.normal.clone()
    }

    fn slater_point(&self) -> Option<DVector<f64>> {
        self.slater.clone()
    }

    fn subgrad_bound(&self, _center: &DVector<f64>, _radius: f64) -> Option<f64> {
        Some(self.normal.norm())
    }

    fn sublevel_projection(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.sublevel_sets()?.first()?.project(x).ok()
    }

    fn sublevel_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        ConvexSetSpec::halfspace(self.normal.clone(), self.offset)
            .ok()
            .map(|h| vec![h])
    }

    fn sublevel_pullback(&self, map: &LinearMap) -> Option<Vec<ConvexSetSpec>> {
        ConvexSetSpec::halfspace(self.normal.clone(), self.offset)
            .ok()?
            .pullback(map)
    }
}

/// `f(x) = ‖x − c‖² − r²`; 2-strongly convex, sublevel set is a ball.
#[derive(Debug, Clone)]
pub struct QuadraticBall {
    center: DVector<f64>,
    radius: f64,
}

impl QuadraticBall {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl ConvexFunction for QuadraticBall {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).norm_squared() - self.radius * self.radius
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * 2.0
    }

    fn strong_convexity(&self) -> f64 {
        2.0
    }

    fn slater_point(&self) -> Option<DVector<f64>> {
        Some(self.center.clone())
    }

    fn subgrad_bound(&self, center: &DVector<f64>, radius: f64) -> Option<f64> {
        Some(2.0 * ((center - &self.center).norm() + radius))
    }

    fn sublevel_projection(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.sublevel_sets()?.first()?.project(x).ok()
    }

    fn sublevel_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        ConvexSetSpec::ball(self.center.clone(), self.radius)
            .ok()
            .map(|b| vec![b])
    }
}

/// `f(x) = maxᵢ (⟨aᵢ, x⟩ − bᵢ)`; the subgradient is the first active `aᵢ`.
#[derive(Debug, Clone)]
pub struct MaxAffine {
    normals: Vec<DVector<f64>>,
    offsets: Vec<f64>,
    slater: Option<DVector<f64>>,
}

impl MaxAffine {
    pub fn new(normals: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() {
            return Err(Error::EmptySequence);
        }
        check_dim(normals.len(), offsets.len())?;
        let n = normals[0].len();
        for a in &normals {
            check_dim(n, a.len())?;
            if a.norm() == 0.0 {
                return Err(Error::InvalidParameter(
                    "zero normal in max-affine function".into(),
                ));
            }
        }
        Ok(Self {
            normals,
            offsets,
            slater: None,
        })
    }

    pub fn with_slater_point(mut self, z: DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), z.len())?;
        if self.value(&z) >= 0.0 {
            return Err(Error::InvalidParameter(
                "Slater point must satisfy f(z) < 0".into(),
            ));
        }
        self.slater = Some(z);
        Ok(self)
    }

    fn active(&self, x: &DVector<f64>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (a, b)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let v = a.dot(x) - b;
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

impl ConvexFunction for MaxAffine {
    fn dim(&self) -> usize {
        self.normals[0].len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.active(x).1
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.normals[self.active(x).0].clone()
    }

    fn slater_point(&self) -> Option<DVector<f64>> {
        self.slater.clone()
    }

    fn subgrad_bound(&self, _center: &DVector<f64>, _radius: f64) -> Option<f64> {
        Some(self.normals.iter().map(|a| a.norm()).fold(0.0, f64::max))
    }

    fn sublevel_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(a, &b)| ConvexSetSpec::halfspace(a.clone(), b).ok())
            .collect()
    }

    fn sublevel_pullback(&self, map: &LinearMap) -> Option<Vec<ConvexSetSpec>> {
        let mut out = Vec::new();
        for h in self.sublevel_sets()? {
            out.extend(h.pullback(map)?);
        }
        Some(out)
    }
}

/// `f(x) = ‖x − c‖∞ − r`; sublevel set is a box.
#[derive(Debug, Clone)]
pub struct InfNormBall {
    center: DVector<f64>,
    radius: f64,
}

impl InfNormBall {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }
}

impl ConvexFunction for InfNormBall {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).amax() - self.radius
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.center;
        let mut g = DVector::zeros(d.len());
        let (j, v) =
            d.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc },
            );
        if v > 0.0 {
            g[j] = d[j].signum();
        }
        g
    }

    fn slater_point(&self) -> Option<DVector<f64>> {
        Some(self.center.clone())
    }

    fn subgrad_bound(&self, _center: &DVector<f64>, _radius: f64) -> Option<f64> {
        Some(1.0)
    }

    fn sublevel_projection(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.sublevel_sets()?.first()?.project(x).ok()
    }

    fn sublevel_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        let r = DVector::from_element(self.center.len(), self.radius);
        ConvexSetSpec::bounding_box(&self.center - &r, &self.center + &r)
            .ok()
            .map(|b| vec![b])
    }

    fn sublevel_pullback(&self, map: &LinearMap) -> Option<Vec<ConvexSetSpec>> {
        self.sublevel_sets()?.first()?.pullback(map)
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type BoundFn = dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync;

/// A function given by closures, for geometry outside the built-in families.
#[derive(Clone)]
pub struct ClosureFunction {
    dim: usize,
    value: Arc<ValueFn>,
    subgradient: Arc<GradFn>,
    bound: Arc<BoundFn>,
    strong_convexity: f64,
    slater: Option<DVector<f64>>,
}

impl fmt::Debug for ClosureFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureFunction")
            .field("dim", &self.dim)
            .field("strong_convexity", &self.strong_convexity)
            .field("slater", &self.slater)
            .finish_non_exhaustive()
    }
}

impl ClosureFunction {
    pub fn new(
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        subgrad_bound: impl Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            subgradient: Arc::new(subgradient),
            bound: Arc::new(subgrad_bound),
            strong_convexity: 0.0,
            slater: None,
        }
    }

    pub fn with_strong_convexity(mut self, alpha: f64) -> Self {
        self.strong_convexity = alpha;
        self
    }

    pub fn with_slater_point(mut self, z: DVector<f64>) -> Result<Self> {
        check_dim(self.dim, z.len())?;
        if (self.value)(&z) >= 0.0 {
            return Err(Error::InvalidParameter(
                "Slater point must satisfy f(z) < 0".into(),
            ));
        }
        self.slater = Some(z);
        Ok(self)
    }
}

impl ConvexFunction for ClosureFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.subgradient)(x)
    }

    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn slater_point(&self) -> Option<DVector<f64>> {
        self.slater.clone()
    }

    fn subgrad_bound(&self, center: &DVector<f64>, radius: f64) -> Option<f64> {
        Some((self.bound)(center, radius))
    }
}
