//! The Landweber transform `L{T}x = x + ‖A‖⁻² A*(T(Ax) − Ax)` and its
//! extrapolated and relaxed variants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::fixops::{relaxed_rho, ConvexSetSpec, FixedPointOperator, OperatorRef};
use crate::linop::LinearMap;
use crate::oracle::{Exactness, Intersection};
use crate::sampling::Sampler;

/// Relative tolerance deciding `Ax ∈ Fix T`: `‖T(Ax) − Ax‖ ≤ 1e-12 (1 + ‖Ax‖)`.
pub const FIX_TOL: f64 = 1e-12;

fn fix_tol(ax: &DVector<f64>) -> f64 {
    FIX_TOL * (1.0 + ax.norm())
}

/// `(Ax, T(Ax) − Ax)`.
fn image_residual(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(a.rows(), t.dim())?;
    let ax = a.apply(x)?;
    let r = t.apply(&ax)? - &ax;
    Ok((ax, r))
}

fn landweber_with<F>(a: &LinearMap, t: F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let ax = a.apply(x)?;
    let r = t(&ax)? - &ax;
    let norm2 = a.op_norm() * a.op_norm();
    Ok(x + a.apply_adjoint(&r)? / norm2)
}

pub fn landweber_apply(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(a.rows(), t.dim())?;
    landweber_with(a, |y| t.apply(y), x)
}

/// Extrapolation bound `τ(x) = (‖A‖‖r‖ / ‖A*r‖)²` with `r = T(Ax) − Ax`,
/// and 1 when `Ax ∈ Fix T`.
pub fn tau(a: &LinearMap, t: &dyn FixedPointOperator, x: &DVector<f64>) -> Result<f64> {
    let (ax, r) = image_residual(a, t, x)?;
    let rn = r.norm();
    if rn <= fix_tol(&ax) {
        return Ok(1.0);
    }
    let atr = adjoint_residual(a, &r, rn)?;
    Ok((a.op_norm() * rn / atr.norm()).powi(2))
}

fn adjoint_residual(a: &LinearMap, r: &DVector<f64>, rn: f64) -> Result<DVector<f64>> {
    let atr = a.apply_adjoint(r)?;
    if atr.norm() <= 1e-15 * a.op_norm() * rn {
        return Err(Error::FixedSetEquivalenceViolated { residual: rn });
    }
    Ok(atr)
}

type SigmaFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Choice of the extrapolation function `σ(x) ∈ [1, τ(x)]`.
#[derive(Clone)]
pub enum SigmaMode {
    One,
    Tau,
    Custom(Arc<SigmaFn>),
}

impl fmt::Debug for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaMode::One => f.write_str("one"),
            SigmaMode::Tau => f.write_str("tau"),
            SigmaMode::Custom(_) => f.write_str("custom"),
        }
    }
}

/// One extrapolated step: the image point and the `σ` used.
#[derive(Debug, Clone)]
pub struct ExtrapolatedStep {
    pub point: DVector<f64>,
    pub sigma: f64,
}

/// `x + λσ(x)(L{T}x − x)`. With [`SigmaMode::Tau`] the step is evaluated in
/// the norm-free form `x + λ(‖r‖²/‖A*r‖²)A*r`, which does not involve `‖A‖`.
pub fn extrapolated_step(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    sigma: &SigmaMode,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<ExtrapolatedStep> {
    let (ax, r) = image_residual(a, t, x)?;
    let rn = r.norm();
    if rn <= fix_tol(&ax) {
        return Ok(ExtrapolatedStep {
            point: x.clone(),
            sigma: 1.0,
        });
    }
    let atr = adjoint_residual(a, &r, rn)?;
    let norm2 = a.op_norm() * a.op_norm();
    let atr2 = atr.norm_squared();
    match sigma {
        SigmaMode::One => Ok(ExtrapolatedStep {
            point: x + &atr * (lambda / norm2),
            sigma: 1.0,
        }),
        SigmaMode::Tau => {
            let step = rn * rn / atr2;
            Ok(ExtrapolatedStep {
                point: x + &atr * (lambda * step),
                sigma: step * norm2,
            })
        }
        SigmaMode::Custom(f) => {
            let s = f(x);
            let tau = norm2 * rn * rn / atr2;
            if !(s >= 1.0 - 1e-12 && s <= tau * (1.0 + 1e-12)) {
                return Err(Error::ExtrapolationExceedsTau { sigma: s, tau });
            }
            Ok(ExtrapolatedStep {
                point: x + &atr * (lambda * s / norm2),
                sigma: s,
            })
        }
    }
}

pub fn extrapolated_apply(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    sigma: &SigmaMode,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(extrapolated_step(a, t, sigma, 1.0, x)?.point)
}

/// `A⁻¹(Fix T)` as an intersection in the domain of `A`.
pub fn preimage_sets(a: &LinearMap, t: &dyn FixedPointOperator) -> Option<Vec<ConvexSetSpec>> {
    let mut out = Vec::new();
    for set in t.fix_sets()? {
        out.extend(set.pullback(a)?);
    }
    Some(out)
}

/// `d(x, Fix L{T}) = d(x, A⁻¹(Fix T))`.
pub fn preimage_distance(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    x: &DVector<f64>,
) -> Result<(f64, Exactness)> {
    let sets = preimage_sets(a, t).ok_or(Error::MissingOracle("preimage of Fix T"))?;
    if sets.is_empty() {
        return Ok((0.0, Exactness::Exact));
    }
    Intersection::new(sets)?.distance(x)
}

/// `d(y, im A ∩ Fix T)` for `y ∈ im A`, computed in coordinates of the
/// range basis `U`: `im A ∩ Fix T = U · {c : Uc ∈ Fix T}`.
pub fn range_fix_distance(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    y: &DVector<f64>,
) -> Result<(f64, Exactness)> {
    check_dim(a.rows(), y.len())?;
    let off_range = (y - a.project_onto_range(y)?).norm();
    if a.is_surjective() {
        let d = t
            .fix_distance(y)
            .ok_or(Error::MissingOracle("distance to Fix T"))??;
        return Ok((d.value, d.exactness));
    }
    let basis = LinearMap::new(a.range_basis().clone())?;
    let coords = a.range_basis().tr_mul(y);
    let sets = preimage_sets(&basis, t).ok_or(Error::MissingOracle("Fix T within im A"))?;
    let (d, ex) = if sets.is_empty() {
        (0.0, Exactness::Exact)
    } else {
        Intersection::new(sets)?.distance(&coords)?
    };
    Ok((d.hypot(off_range), ex))
}

/// `(d(Ax, im A ∩ Fix T)/‖A‖, d(x, Fix L{T}), d(Ax, im A ∩ Fix T)/|A|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    pub exactness: Exactness,
}

impl Sandwich {
    /// Largest amount by which the chain `lower ≤ mid ≤ upper` fails.
    pub fn violation(&self) -> f64 {
        (self.lower - self.mid).max(self.mid - self.upper).max(0.0)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.violation() <= tol
    }
}

pub fn sandwich_check(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    x: &DVector<f64>,
) -> Result<Sandwich> {
    let ax = a.apply(x)?;
    let (d_img, e1) = range_fix_distance(a, t, &ax)?;
    let (mid, e2) = preimage_distance(a, t, x)?;
    Ok(Sandwich {
        lower: d_img / a.op_norm(),
        mid,
        upper: d_img / a.min_pos_sv(),
        exactness: e1.and(e2),
    })
}

/// `‖T(Ax) − Ax‖²` against `(2‖A‖²/(ρ+1)) ‖L{T}x − x‖ d(x, Fix L{T})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl ResidualBound {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

pub fn residual_bound_check(
    a: &LinearMap,
    t: &dyn FixedPointOperator,
    x: &DVector<f64>,
) -> Result<ResidualBound> {
    let (_, r) = image_residual(a, t, x)?;
    let lx = landweber_apply(a, t, x)?;
    let (d, _) = preimage_distance(a, t, x)?;
    let rho = t.sqne_rho();
    let coeff = if rho.is_finite() {
        2.0 * a.op_norm().powi(2) / (rho + 1.0)
    } else {
        0.0
    };
    Ok(ResidualBound {
        lhs: r.norm_squared(),
        rhs: coeff * (lx - x).norm() * d,
    })
}

/// `L_{λσ}{T}` as a fixed-point operator on the domain of `A`.
pub struct LandweberOperator {
    map: LinearMap,
    inner: OperatorRef,
    sigma: SigmaMode,
    lambda: f64,
}

impl LandweberOperator {
    /// Requires a witness `w` with `Aw ∈ Fix T`, which makes the transform
    /// inherit the SQNE constant of `T`.
    pub fn new(map: LinearMap, inner: OperatorRef, witness: &DVector<f64>) -> Result<Self> {
        check_dim(map.rows(), inner.dim())?;
        check_dim(map.cols(), witness.len())?;
        let aw = map.apply(witness)?;
        let residual = (inner.apply(&aw)? - &aw).norm();
        if residual > 1e-10 * (1.0 + aw.norm()) {
            return Err(Error::MissingWitness { index: 0, residual });
        }
        Ok(Self {
            map,
            inner,
            sigma: SigmaMode::One,
            lambda: 1.0,
        })
    }

    pub fn with_sigma(mut self, sigma: SigmaMode) -> Self {
        self.sigma = sigma;
        self
    }

    /// Relaxation `λ ∈ (0, 1]`.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0, 1], got {lambda}"
            )));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn inner(&self) -> &OperatorRef {
        &self.inner
    }

    pub fn sigma(&self) -> &SigmaMode {
        &self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step(&self, x: &DVector<f64>) -> Result<ExtrapolatedStep> {
        extrapolated_step(&self.map, self.inner.as_ref(), &self.sigma, self.lambda, x)
    }
}

impl FixedPointOperator for LandweberOperator {
    fn dim(&self) -> usize {
        self.map.cols()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.step(x)?.point)
    }

    fn sqne_rho(&self) -> f64 {
        relaxed_rho(self.inner.sqne_rho(), self.lambda)
    }

    fn fix_sets(&self) -> Option<Vec<ConvexSetSpec>> {
        preimage_sets(&self.map, self.inner.as_ref())
    }

    fn fix_project(&self, x: &DVector<f64>) -> Option<Result<(DVector<f64>, Exactness)>> {
        let sets = self.fix_sets()?;
        if sets.is_empty() {
            return Some(Ok((x.clone(), Exactness::Exact)));
        }
        Some(Intersection::new(sets).and_then(|i| i.project(x)))
    }

    fn describe(&self) -> String {
        format!(
            "L[{:?}, lambda = {}]{{{}}}",
            self.sigma,
            self.lambda,
            self.inner.describe()
        )
    }
}

/// Inputs to [`transform_identity_suite`].
#[derive(Clone)]
pub struct TransformInputs {
    pub ops: Vec<OperatorRef>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
}

/// Maximum deviation of each transform identity over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformReport {
    /// `L{T_λ}` against `(L{T})_λ`, over every operator.
    pub relaxation: f64,
    /// `L{Σ ωᵢTᵢ}` against `Σ ωᵢ L{Tᵢ}`.
    pub combination: f64,
    /// `L{∏Tᵢ}` against `∏L{Tᵢ}`; only meaningful when `A*A = Id`.
    pub product: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl TransformReport {
    pub fn max_deviation(&self) -> f64 {
        self.relaxation
            .max(self.combination)
            .max(self.product.unwrap_or(0.0))
    }
}

fn is_isometry(a: &LinearMap) -> bool {
    let gram = a.entries().tr_mul(a.entries());
    let n = gram.nrows();
    (gram - nalgebra::DMatrix::<f64>::identity(n, n)).amax() <= 1e-12
}

pub fn transform_identity_suite(
    a: &LinearMap,
    inputs: &TransformInputs,
) -> Result<TransformReport> {
    if inputs.ops.is_empty() {
        return Err(Error::EmptySequence);
    }
    check_dim(inputs.ops.len(), inputs.weights.len())?;
    for op in &inputs.ops {
        check_dim(a.rows(), op.dim())?;
    }
    let lambda = inputs.lambda;
    let isometry = is_isometry(a);
    let mut sampler = Sampler::new(inputs.seed);
    let center = DVector::zeros(a.cols());
    let mut report = TransformReport {
        relaxation: 0.0,
        combination: 0.0,
        product: isometry.then_some(0.0),
        samples: inputs.samples,
        seed: inputs.seed,
    };
    for _ in 0..inputs.samples {
        let x = sampler.in_ball(&center, inputs.radius);

        for op in &inputs.ops {
            let lhs = landweber_with(a, |y| Ok(y + (op.apply(y)? - y) * lambda), &x)?;
            let lx = landweber_apply(a, op.as_ref(), &x)?;
            let rhs = &x + (lx - &x) * lambda;
            report.relaxation = report.relaxation.max((lhs - rhs).norm());
        }

        let lhs = landweber_with(
            a,
            |y| {
                let mut acc = DVector::zeros(y.len());
                for (w, op) in inputs.weights.iter().zip(&inputs.ops) {
                    acc += op.apply(y)? * *w;
                }
                Ok(acc)
            },
            &x,
        )?;
        let mut rhs = DVector::zeros(x.len());
        for (w, op) in inputs.weights.iter().zip(&inputs.ops) {
            rhs += landweber_apply(a, op.as_ref(), &x)? * *w;
        }
        report.combination = report.combination.max((lhs - rhs).norm());

        if let Some(worst) = report.product.as_mut() {
            let lhs = landweber_with(
                a,
                |y| {
                    let mut z = y.clone();
                    for op in &inputs.ops {
                        z = op.apply(&z)?;
                    }
                    Ok(z)
                },
                &x,
            )?;
            let mut rhs = x.clone();
            for op in &inputs.ops {
                rhs = landweber_apply(a, op.as_ref(), &rhs)?;
            }
            *worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(report)
}
