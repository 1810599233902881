//! Fixed-point operators: projections, subgradient projections, relaxations,
//! products and convex combinations.
//!
//! Each operator carries its strong quasi-nonexpansiveness constant `ρ`
//! (`‖Tx − z‖² ≤ ‖x − z‖² − ρ‖Tx − x‖²` for `z ∈ Fix T`), propagated
//! symbolically through the combinators, and, where possible, a projection
//! onto its fixed-point set.

pub mod checks;
pub mod functions;
pub mod sets;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::oracle::{dykstra, DykstraParams, Exactness};

pub use checks::{check_sqne_equivalences, SqneCheck, SqneReport};
pub use functions::{
    AffineFunction, ClosureFunction, ConvexFunction, FunctionRef, InfNormBall, MaxAffine,
    QuadraticBall,
};
pub use sets::{ConvexSetSpec, SetKind};

/// Distance to a fixed-point set, flagged by how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixDistance {
    pub value: f64,
    pub exactness: Exactness,
}

pub trait FixedPointOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// The SQNE constant `ρ`. `f64::INFINITY` for the identity.
    fn sqne_rho(&self) -> f64;

    /// Projection onto `Fix T`, when an oracle is available.
    fn fix_project(&self, _x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        None
    }

    /// `Fix T` as an intersection of set specifications, when known.
    /// An empty list means the whole space.
    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        None
    }

    fn fix_distance(&self, x: &DVector<f64>) -> Option<Result<FixDistance>> {
        let r = self.fix_project(x)?;
        Some(r.map(|(p, exactness)| FixDistance {
            value: (x - p).norm(),
            exactness,
        }))
    }

    /// `‖Tx − x‖ ≤ tol`.
    fn fix_membership(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok((self.apply(x)? - x).norm() <= tol)
    }

    /// Cutters are exactly the 1-SQNE operators.
    fn is_cutter(&self) -> bool {
        self.sqne_rho() >= 1.0
    }

    fn describe(&self) -> String;
}

pub type OperatorRef = Arc<dyn FixedPointOperator>;

impl fmt::Debug for dyn FixedPointOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (rho = {})", self.describe(), self.sqne_rho())
    }
}

#[derive(Debug, Clone)]
pub struct Identity {
    dim: usize,
}

impl Identity {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl FixedPointOperator for Identity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(x.clone())
    }

    fn sqne_rho(&self) -> f64 {
        f64::INFINITY
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        Some(check_dim(self.dim, x.len()).map(|_| (x.clone(), Exactness::Exact)))
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        Some(Vec::new())
    }

    fn describe(&self) -> String {
        "Id".into()
    }
}

/// Metric projection `P_C`; a cutter with `Fix P_C = C`.
#[derive(Debug, Clone)]
pub struct Projection {
    set: ConvexSetSpec,
}

impl Projection {
    pub fn new(set: ConvexSetSpec) -> Self {
        Self { set }
    }

    pub fn set(&self) -> &ConvexSetSpec {
        &self.set
    }
}

impl FixedPointOperator for Projection {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.set.project(x)
    }

    fn sqne_rho(&self) -> f64 {
        1.0
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        Some(self.set.project_flagged(x))
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        Some(vec![self.set.clone()])
    }

    fn describe(&self) -> String {
        format!("P[{:?}]", self.set)
    }
}

/// `x − (f(x)/‖g‖²) g` when `f(x) > 0`, else `x`.
pub fn subgradient_project(f: &dyn ConvexFunction, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(f.dim(), x.len())?;
    let value = f.value(x);
    if value <= 0.0 {
        return Ok(x.clone());
    }
    let g = f.subgradient(x);
    let g2 = g.norm_squared();
    if g2 == 0.0 {
        return Err(Error::InconsistentSubgradient { value });
    }
    Ok(x - g * (value / g2))
}

/// Subgradient projection `P_f`; a cutter with `Fix P_f = S(f, 0)`.
#[derive(Debug, Clone)]
pub struct SubgradientProjection {
    function: FunctionRef,
}

impl SubgradientProjection {
    pub fn new(function: FunctionRef) -> Self {
        Self { function }
    }

    pub fn function(&self) -> &FunctionRef {
        &self.function
    }
}

impl FixedPointOperator for SubgradientProjection {
    fn dim(&self) -> usize {
        self.function.dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        subgradient_project(self.function.as_ref(), x)
    }

    fn sqne_rho(&self) -> f64 {
        1.0
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        Some(ConvexSetSpec::sublevel(self.function.clone()).project_flagged(x))
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        Some(vec![ConvexSetSpec::sublevel(self.function.clone())])
    }

    fn describe(&self) -> String {
        format!("P_f[{:?}]", self.function)
    }
}

type AlphaFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Relaxation function `α(·)` of a generalized relaxation.
#[derive(Clone)]
pub enum Relaxation {
    Constant(f64),
    /// A variable relaxation with a known supremum.
    Variable {
        alpha: Arc<AlphaFn>,
        sup: f64,
    },
}

impl Relaxation {
    fn at(&self, x: &DVector<f64>) -> f64 {
        match self {
            Relaxation::Constant(l) => *l,
            Relaxation::Variable { alpha, .. } => alpha(x),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Relaxation::Constant(l) => *l,
            Relaxation::Variable { sup, .. } => *sup,
        }
    }
}

/// SQNE constant of the `λ`-relaxation of a `ρ`-SQNE operator:
/// `(ρ + 1 − λ)/λ`, valid for `λ ∈ (0, ρ + 1]`.
pub fn relaxed_rho(rho: f64, lambda: f64) -> f64 {
    if rho.is_infinite() {
        return f64::INFINITY;
    }
    (rho + 1.0 - lambda) / lambda
}

/// `T_α x = x + α(x)(Tx − x)`.
pub struct Relaxed {
    inner: OperatorRef,
    alpha: Relaxation,
    rho: f64,
}

impl Relaxed {
    pub fn inner(&self) -> &OperatorRef {
        &self.inner
    }
}

/// Builds the generalized relaxation `T_α`. The SQNE constant is computed
/// from the supremum of `α`, where `(ρ + 1 − α)/α` is smallest.
pub fn relax(op: OperatorRef, alpha: Relaxation) -> Result<OperatorRef> {
    let sup = alpha.sup();
    if !(sup > 0.0 && sup.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "relaxation must be positive, got {sup}"
        )));
    }
    let rho = op.sqne_rho();
    if sup > rho + 1.0 {
        return Err(Error::InvalidParameter(format!(
            "relaxation {sup} exceeds rho + 1 = {}; result is not quasi-nonexpansive",
            rho + 1.0
        )));
    }
    if let Relaxation::Constant(l) = alpha {
        if l == 1.0 {
            return Ok(op);
        }
    }
    Ok(Arc::new(Relaxed {
        rho: relaxed_rho(rho, sup),
        inner: op,
        alpha,
    }))
}

impl FixedPointOperator for Relaxed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.alpha.at(x);
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "relaxation function returned {a}"
            )));
        }
        let tx = self.inner.apply(x)?;
        Ok(x + (tx - x) * a)
    }

    fn sqne_rho(&self) -> f64 {
        self.rho
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        self.inner.fix_project(x)
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        self.inner.fix_sets()
    }

    fn describe(&self) -> String {
        format!(
            "relax({}, sup alpha = {})",
            self.inner.describe(),
            self.alpha.sup()
        )
    }
}

fn project_common_fix(
    ops: &[OperatorRef],
    x: &DVector<f64>,
) -> Option<Result<(DVector<f64>, Exactness)>> {
    if ops.len() == 1 {
        return ops[0].fix_project(x);
    }
    // Every member must expose an oracle before Dykstra can run.
    for op in ops {
        let _probe = op.fix_project(x)?;
    }
    let res = dykstra(
        ops.len(),
        |i, y| match ops[i].fix_project(y) {
            Some(r) => r.map(|(p, _)| p),
            None => Err(Error::MissingOracle("fixed-set projection")),
        },
        x,
        DykstraParams::default(),
    );
    Some(res.map(|p| (p, Exactness::Iterative)))
}

fn concat_fix_sets<'a>(ops: impl Iterator<Item = &'a OperatorRef>) -> Option<Vec<ConvexSetSpec>> {
    let mut out = Vec::new();
    for op in ops {
        out.extend(op.fix_sets()?);
    }
    Some(out)
}

fn check_witness(ops: &[OperatorRef], witness: &DVector<f64>, tol: f64) -> Result<()> {
    for (i, op) in ops.iter().enumerate() {
        let residual = (op.apply(witness)? - witness).norm();
        if residual > tol {
            return Err(Error::MissingWitness { index: i, residual });
        }
    }
    Ok(())
}

/// Product `U_m ∘ … ∘ U₁`.
pub struct Product {
    ops: Vec<OperatorRef>,
    rho: f64,
}

/// Tolerance for accepting a common fixed point witness.
pub const WITNESS_TOL: f64 = 1e-10;

/// Builds the product of `ops` (applied first to last). With
/// `ρ = minᵢ ρᵢ > 0` and a common fixed point, the product is
/// `(ρ/m)`-SQNE and its fixed set is the intersection.
pub fn compose_product(ops: Vec<OperatorRef>, witness: &DVector<f64>) -> Result<OperatorRef> {
    if ops.is_empty() {
        return Err(Error::EmptySequence);
    }
    let dim = ops[0].dim();
    for op in &ops {
        check_dim(dim, op.dim())?;
    }
    check_dim(dim, witness.len())?;
    let rho_min = ops
        .iter()
        .map(|o| o.sqne_rho())
        .fold(f64::INFINITY, f64::min);
    if !(rho_min > 0.0) {
        return Err(Error::InvalidParameter(
            "product requires every member to be rho-SQNE with rho > 0".into(),
        ));
    }
    check_witness(&ops, witness, WITNESS_TOL)?;
    if ops.len() == 1 {
        return Ok(ops.into_iter().next().expect("one operator"));
    }
    let rho = rho_min / ops.len() as f64;
    Ok(Arc::new(Product { ops, rho }))
}

impl FixedPointOperator for Product {
    fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut y = x.clone();
        for op in &self.ops {
            y = op.apply(&y)?;
        }
        Ok(y)
    }

    fn sqne_rho(&self) -> f64 {
        self.rho
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        project_common_fix(&self.ops, x)
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        concat_fix_sets(self.ops.iter())
    }

    fn describe(&self) -> String {
        let parts: Vec<_> = self.ops.iter().rev().map(|o| o.describe()).collect();
        parts.join(" o ")
    }
}

/// `Σ ωᵢ Tᵢ`.
pub struct ConvexCombination {
    weights: Vec<f64>,
    ops: Vec<OperatorRef>,
    rho: f64,
}

/// Pointwise weighted average. With a common fixed point the combination of
/// `ρᵢ`-SQNE operators is `min ρᵢ`-SQNE (minimum over positive weights).
pub fn convex_combination(weights: Vec<f64>, ops: Vec<OperatorRef>) -> Result<OperatorRef> {
    if ops.is_empty() {
        return Err(Error::EmptySequence);
    }
    check_dim(ops.len(), weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "weights must sum to 1, got {total}"
        )));
    }
    let dim = ops[0].dim();
    for op in &ops {
        check_dim(dim, op.dim())?;
    }
    let rho = ops
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(o, _)| o.sqne_rho())
        .fold(f64::INFINITY, f64::min);
    if ops.len() == 1 {
        return Ok(ops.into_iter().next().expect("one operator"));
    }
    Ok(Arc::new(ConvexCombination { weights, ops, rho }))
}

impl FixedPointOperator for ConvexCombination {
    fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(x.len());
        for (w, op) in self.weights.iter().zip(&self.ops) {
            if *w > 0.0 {
                acc += op.apply(x)? * *w;
            }
        }
        Ok(acc)
    }

    fn sqne_rho(&self) -> f64 {
        self.rho
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        let active: Vec<_> = self
            .ops
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(o, _)| o.clone())
            .collect();
        project_common_fix(&active, x)
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        let active = self
            .ops
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0);
        concat_fix_sets(active.map(|(o, _)| o))
    }

    fn describe(&self) -> String {
        let parts: Vec<_> = self
            .weights
            .iter()
            .zip(&self.ops)
            .map(|(w, o)| format!("{w}*{}", o.describe()))
            .collect();
        parts.join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Sampler;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn halfspace_proj(a: &[f64], b: f64) -> OperatorRef {
        Arc::new(Projection::new(ConvexSetSpec::halfspace(v(a), b).unwrap()))
    }

    /// Worst violation of the sampled SQNE inequality with constant `rho`.
    fn worst_sqne(op: &OperatorRef, rho: f64, fixed: &[DVector<f64>], seed: u64) -> f64 {
        let mut s = Sampler::new(seed);
        let c = DVector::zeros(op.dim());
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let x = s.in_ball(&c, 5.0);
            let tx = op.apply(&x).unwrap();
            for z in fixed {
                let lhs = (&tx - z).norm_squared();
                let rhs = (&x - z).norm_squared() - rho * (&tx - &x).norm_squared();
                worst = worst.max(lhs - rhs);
            }
        }
        worst
    }

    #[test]
    fn subgradient_projection_of_affine_is_halfspace_projection() {
        let f = AffineFunction::new(v(&[1.0, -2.0]), 0.5).unwrap();
        let h = ConvexSetSpec::halfspace(v(&[1.0, -2.0]), 0.5).unwrap();
        let mut s = Sampler::new(2);
        for _ in 0..200 {
            let x = s.in_ball(&DVector::zeros(2), 4.0);
            let a = subgradient_project(&f, &x).unwrap();
            let b = h.project(&x).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn subgradient_projection_quadratic_by_hand() {
        // f = ‖x‖² − 1 at (2, 0): g = (4, 0), f = 3 → 2 − 3·4/16 = 1.25.
        let f = QuadraticBall::new(v(&[0.0, 0.0]), 1.0).unwrap();
        let p = subgradient_project(&f, &v(&[2.0, 0.0])).unwrap();
        let x = 2.0;
        let (fx, g) = (x * x - 1.0, 2.0 * x);
        assert_relative_eq!(p[0], x - fx * g / (g * g), epsilon = 1e-15);
        assert_relative_eq!(p[0], 1.25, epsilon = 1e-15);
        assert_eq!(p[1], 0.0);
        // Inside: unchanged; boundary f = 0 counts as inside.
        assert_eq!(
            subgradient_project(&f, &v(&[0.5, 0.0])).unwrap(),
            v(&[0.5, 0.0])
        );
        assert_eq!(
            subgradient_project(&f, &v(&[1.0, 0.0])).unwrap(),
            v(&[1.0, 0.0])
        );
    }

    #[test]
    fn zero_subgradient_is_an_error() {
        let f = ClosureFunction::new(1, |_| 1.0, |_| v(&[0.0]), |_, _| 1.0);
        assert!(matches!(
            subgradient_project(&f, &v(&[0.0])),
            Err(Error::InconsistentSubgradient { .. })
        ));
    }

    #[test]
    fn relax_constants() {
        let p = halfspace_proj(&[1.0, 0.0], 0.0);
        let same = relax(p.clone(), Relaxation::Constant(1.0)).unwrap();
        assert!(Arc::ptr_eq(&same, &p));
        let r2 = relax(p.clone(), Relaxation::Constant(2.0)).unwrap();
        assert_eq!(r2.sqne_rho(), 0.0);
        let r05 = relax(p.clone(), Relaxation::Constant(0.5)).unwrap();
        assert_eq!(r05.sqne_rho(), 3.0);
        let fixed: Vec<_> = (0..20)
            .map(|i| v(&[-(i as f64) * 0.3, i as f64 - 10.0]))
            .collect();
        assert!(worst_sqne(&r05, 3.0, &fixed, 7) <= 1e-10);
        assert!(worst_sqne(&r2, 0.0, &fixed, 8) <= 1e-10);
        assert!(relax(p.clone(), Relaxation::Constant(0.0)).is_err());
        assert!(relax(p, Relaxation::Constant(2.5)).is_err());
    }

    #[test]
    fn relax_preserves_fixed_set() {
        let p = halfspace_proj(&[1.0, 1.0], 1.0);
        let r = relax(p, Relaxation::Constant(0.3)).unwrap();
        assert!(r.fix_membership(&v(&[0.0, 0.0]), 1e-14).unwrap());
        assert!(!r.fix_membership(&v(&[2.0, 0.0]), 1e-14).unwrap());
    }

    #[test]
    fn product_of_two_halfspace_projections() {
        let p1 = halfspace_proj(&[1.0, 0.0], 0.0);
        let p2 = halfspace_proj(&[1.0, 1.0], 0.5);
        let w = v(&[-1.0, 0.0]);
        let single = compose_product(vec![p1.clone()], &w).unwrap();
        assert_eq!(single.sqne_rho(), 1.0);
        let prod = compose_product(vec![p1.clone(), p2.clone()], &w).unwrap();
        assert_eq!(prod.sqne_rho(), 0.5);
        let fixed: Vec<_> = (0..30)
            .map(|i| v(&[-0.1 * i as f64, 0.5 - 0.2 * i as f64]))
            .collect();
        assert!(worst_sqne(&prod, 0.5, &fixed, 3) <= 1e-10);
        let d = prod.fix_distance(&v(&[3.0, 3.0])).unwrap().unwrap();
        assert!(d.value > 0.0);
    }

    #[test]
    fn product_errors() {
        let p1 = halfspace_proj(&[1.0, 0.0], 0.0);
        assert!(matches!(
            compose_product(vec![], &v(&[0.0, 0.0])),
            Err(Error::EmptySequence)
        ));
        assert!(matches!(
            compose_product(vec![p1], &v(&[1.0, 0.0])),
            Err(Error::MissingWitness { index: 0, .. })
        ));
    }

    #[test]
    fn convex_combination_cases() {
        let p1 = halfspace_proj(&[1.0, 0.0], 0.0);
        let p2 = halfspace_proj(&[0.0, 1.0], 0.0);
        let single = convex_combination(vec![1.0], vec![p1.clone()]).unwrap();
        assert!(Arc::ptr_eq(&single, &p1));
        let twin = convex_combination(vec![0.5, 0.5], vec![p1.clone(), p1.clone()]).unwrap();
        let x = v(&[2.0, -3.0]);
        assert_relative_eq!(
            twin.apply(&x).unwrap(),
            p1.apply(&x).unwrap(),
            epsilon = 1e-15
        );
        let avg = convex_combination(vec![0.5, 0.5], vec![p1.clone(), p2.clone()]).unwrap();
        // P1(2, 3) = (0, 3), P2(2, 3) = (2, 0).
        assert_relative_eq!(
            avg.apply(&v(&[2.0, 3.0])).unwrap(),
            v(&[1.0, 1.5]),
            epsilon = 1e-15
        );
        let fixed: Vec<_> = (0..20)
            .map(|i| v(&[-0.2 * i as f64, -0.1 * i as f64]))
            .collect();
        assert!(worst_sqne(&avg, avg.sqne_rho(), &fixed, 5) <= 1e-10);
        assert!(convex_combination(vec![0.5, 0.6], vec![p1.clone(), p2.clone()]).is_err());
    }

    #[test]
    fn identity_properties() {
        let id: OperatorRef = Arc::new(Identity::new(3));
        let x = v(&[1.0, 2.0, 3.0]);
        assert_eq!(id.apply(&x).unwrap(), x);
        assert!(id.fix_membership(&x, 0.0).unwrap());
        assert_eq!(id.fix_distance(&x).unwrap().unwrap().value, 0.0);
    }
}
