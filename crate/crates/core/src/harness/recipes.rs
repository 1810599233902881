//! Benchmark instance recipes with certified solution sets.
//!
//! Every recipe places a witness strictly inside `F`, records the moduli it
//! knows analytically, samples the rest, and re-checks its own claims against
//! the operators and the Dykstra oracle before returning.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::fixops::{
    AffineFunction, ConvexFunction, ConvexSetSpec, FunctionRef, InfNormBall, MaxAffine,
    OperatorRef, Projection, QuadraticBall, SetKind, SubgradientProjection,
};
use crate::landweber::preimage_sets;
use crate::linop::LinearMap;
use crate::regularity::{
    sample_family_modulus, sample_operator_modulus, subgradient_projection_modulus,
    two_halfspace_kappa, Estimate, Provenance,
};
use crate::sampling::Sampler;
use crate::solver::SCFPInstance;

/// Tolerance for re-verifying recorded ground truths.
pub const VERIFY_TOL: f64 = 1e-9;
/// Samples used for sampled moduli at generation time.
pub const MODULUS_SAMPLES: usize = 400;
const VERIFY_SAMPLES: usize = 200;
const VERIFY_PROJECTIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Halfspace,
    BallHalfspace,
    SublevelSlater,
    OrthogonalA,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [
        Recipe::Halfspace,
        Recipe::BallHalfspace,
        Recipe::SublevelSlater,
        Recipe::OrthogonalA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Halfspace => "halfspace",
            Recipe::BallHalfspace => "ball-halfspace",
            Recipe::SublevelSlater => "sublevel-slater",
            Recipe::OrthogonalA => "orthogonal-A",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown recipe `{s}`")))
    }
}

/// Moduli over `B(witness, radius)` (and `B(A·witness, ‖A‖·radius)` on the
/// image side).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub radius: f64,
    /// `δ` of the instance operators `S`, `T`.
    pub delta_s: Estimate,
    pub delta_t: Estimate,
    /// `δ` of the subgradient projections `P_c`, `P_q`, when functions exist.
    pub delta_sub: Option<(Estimate, Estimate)>,
    /// `{Fix S, A⁻¹(Fix T)}`.
    pub kappa1: Estimate,
    /// `{im A, Fix T}`.
    pub kappa2: Estimate,
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: SCFPInstance,
    pub recipe: Option<Recipe>,
    pub seed: u64,
    /// Default starting point, chosen away from `F`.
    pub x0: DVector<f64>,
    pub truth: GroundTruth,
}

/// Singular values decaying geometrically from 2 to 0.5.
fn spread_values(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![1.5];
    }
    (0..k)
        .map(|i| 2.0 * 0.25f64.powf(i as f64 / (k - 1) as f64))
        .collect()
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}

/// Normal `a` in the image space with `‖A*a‖ = 1`.
fn pulled_unit_normal(s: &mut Sampler, a: &LinearMap) -> Result<(DVector<f64>, DVector<f64>)> {
    for _ in 0..100 {
        let g = s.gaussian_vector(a.rows());
        let w = a.apply_adjoint(&g)?;
        let wn = w.norm();
        if wn > 1e-6 * g.norm() * a.op_norm() {
            return Ok((g / wn, w / wn));
        }
    }
    Err(Error::InvalidParameter(
        "could not draw a normal outside ker A*".into(),
    ))
}

fn random_map(s: &mut Sampler, n: usize, m: usize) -> Result<LinearMap> {
    let values = spread_values(m.min(n));
    LinearMap::new(s.with_singular_values(m, n, &values))
}

pub fn generate_instance(recipe: &str, n: usize, m: usize, seed: u64) -> Result<GeneratedInstance> {
    let recipe = Recipe::parse(recipe)?;
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(
            "dimensions must be positive".into(),
        ));
    }
    let label = format!("{}-{n}x{m}-s{seed}", recipe.as_str());
    let mut s = Sampler::new(seed);
    let parts = match recipe {
        Recipe::Halfspace => halfspace_parts(&mut s, n, m)?,
        Recipe::BallHalfspace => ball_halfspace_parts(&mut s, n, m)?,
        Recipe::SublevelSlater => sublevel_parts(&mut s, n, m)?,
        Recipe::OrthogonalA => orthogonal_parts(&mut s, n, m)?,
    };
    finish(label, Some(recipe), seed, parts)
}

struct Parts {
    map: LinearMap,
    c: ConvexSetSpec,
    q: ConvexSetSpec,
    functions: Option<(FunctionRef, FunctionRef)>,
    /// Use subgradient projections as `S`, `T` instead of metric projections.
    subgradient_ops: bool,
    /// Known exact modulus of the subgradient projections (affine functions).
    exact_sub_delta: (Option<f64>, Option<f64>),
    witness: DVector<f64>,
    x0: DVector<f64>,
}

/// Two halfspaces forming a wedge of opening angle `β ∈ [0.3, 0.8]` with a
/// surjective `A`, so `κ₁ = 1/sin(β/2)` and `κ₂ = 1`.
fn halfspace_parts(s: &mut Sampler, n: usize, m: usize) -> Result<Parts> {
    if n < 2 || m > n {
        return Err(Error::InvalidParameter(format!(
            "halfspace recipe needs 2 <= n and m <= n, got n = {n}, m = {m}"
        )));
    }
    let map = random_map(s, n, m)?;
    let beta = s.uniform(0.3, 0.8);
    let phi = std::f64::consts::PI - beta;
    let (a, w) = pulled_unit_normal(s, &map)?;
    let perp = loop {
        let r = s.gaussian_vector(n);
        let r = &r - &w * w.dot(&r);
        if r.norm() > 1e-3 {
            break unit(r);
        }
    };
    let u = &w * phi.cos() + &perp * phi.sin();
    let apex = s.gaussian_vector(n);
    let c_off = u.dot(&apex);
    let q_off = w.dot(&apex);
    let bis = unit(&u + &w);
    let witness = &apex - &bis * 0.5;
    let x0 = &apex + &bis * 2.0;
    let c = ConvexSetSpec::halfspace(u.clone(), c_off)?;
    let q = ConvexSetSpec::halfspace(a.clone(), q_off)?;
    let cf: FunctionRef = Arc::new(AffineFunction::new(u, c_off)?);
    let qf: FunctionRef = Arc::new(AffineFunction::new(a, q_off)?);
    Ok(Parts {
        map,
        c,
        q,
        functions: Some((cf, qf)),
        subgradient_ops: false,
        exact_sub_delta: (Some(1.0), Some(1.0)),
        witness,
        x0,
    })
}

/// Unit ball `C` around `c₀` and a halfspace `Q` whose preimage cuts the
/// ball at distance 0.5 from its center.
fn ball_halfspace_parts(s: &mut Sampler, n: usize, m: usize) -> Result<Parts> {
    let map = random_map(s, n, m)?;
    let c0 = s.gaussian_vector(n) * 0.5;
    let (a, w) = pulled_unit_normal(s, &map)?;
    let q_off = a.dot(&map.apply(&c0)?) + 0.5;
    let c = ConvexSetSpec::ball(c0.clone(), 1.0)?;
    let q = ConvexSetSpec::halfspace(a.clone(), q_off)?;
    let cf: FunctionRef = Arc::new(QuadraticBall::new(c0.clone(), 1.0)?);
    let qf: FunctionRef = Arc::new(AffineFunction::new(a, q_off)?);
    let dir = unit(&w + s.unit_vector(n) * 0.5);
    let x0 = &c0 + dir * 2.0;
    Ok(Parts {
        map,
        c,
        q,
        functions: Some((cf, qf)),
        subgradient_ops: false,
        exact_sub_delta: (None, Some(1.0)),
        witness: c0,
        x0,
    })
}

/// `c(x) = ‖x − c₀‖² − 1` and `q(y) = maxᵢ ⟨aᵢ, y⟩ − bᵢ` (three pieces),
/// with Slater point `c₀`: `c(c₀) = −1` and `q(Ac₀) < 0`.
fn sublevel_parts(s: &mut Sampler, n: usize, m: usize) -> Result<Parts> {
    let map = random_map(s, n, m)?;
    let c0 = s.gaussian_vector(n) * 0.5;
    let ac0 = map.apply(&c0)?;
    let mut normals = Vec::new();
    let mut offsets = Vec::new();
    for _ in 0..3 {
        let (a, _) = pulled_unit_normal(s, &map)?;
        offsets.push(a.dot(&ac0) + s.uniform(0.3, 0.8));
        normals.push(a);
    }
    let cfun = QuadraticBall::new(c0.clone(), 1.0)?;
    let qfun = MaxAffine::new(normals, offsets)?.with_slater_point(ac0.clone())?;
    if !(cfun.value(&c0) < 0.0 && qfun.value(&ac0) < 0.0) {
        return Err(Error::InstanceInvariant {
            invariant: "slater_point",
            detail: "generated center is not a Slater point".into(),
        });
    }
    let cf: FunctionRef = Arc::new(cfun);
    let qf: FunctionRef = Arc::new(qfun);
    let c = ConvexSetSpec::ball(c0.clone(), 1.0)?;
    let q = ConvexSetSpec::sublevel(qf.clone());
    let x0 = &c0 + s.unit_vector(n) * 2.5;
    Ok(Parts {
        map,
        c,
        q,
        functions: Some((cf, qf)),
        subgradient_ops: true,
        exact_sub_delta: (None, None),
        witness: c0,
        x0,
    })
}

/// Orthogonal `A` (so `τ ≡ 1`), halfspace `C` and cube `Q`.
fn orthogonal_parts(s: &mut Sampler, n: usize, m: usize) -> Result<Parts> {
    if n != m {
        return Err(Error::InvalidParameter(format!(
            "orthogonal-A recipe needs n = m, got n = {n}, m = {m}"
        )));
    }
    let map = LinearMap::new(s.orthogonal(n))?;
    let z = s.gaussian_vector(n) * 0.5;
    let u = s.unit_vector(n);
    let c_off = u.dot(&z) + 0.3;
    let az = map.apply(&z)?;
    let h = 0.5;
    let c = ConvexSetSpec::halfspace(u.clone(), c_off)?;
    let hv = DVector::from_element(m, h);
    let q = ConvexSetSpec::bounding_box(&az - &hv, &az + &hv)?;
    let cf: FunctionRef = Arc::new(AffineFunction::new(u, c_off)?);
    let qf: FunctionRef = Arc::new(InfNormBall::new(az, h)?);
    let x0 = &z + s.unit_vector(n) * 3.0;
    Ok(Parts {
        map,
        c,
        q,
        functions: Some((cf, qf)),
        subgradient_ops: false,
        exact_sub_delta: (Some(1.0), None),
        witness: z,
        x0,
    })
}

/// An instance from an explicit map and sets, with metric projections as
/// `S` and `T`. Halfspaces and balls also get the matching functions.
pub fn custom_instance(
    label: impl Into<String>,
    map: LinearMap,
    c: ConvexSetSpec,
    q: ConvexSetSpec,
    witness: DVector<f64>,
    x0: Option<DVector<f64>>,
    seed: u64,
) -> Result<GeneratedInstance> {
    check_dim(map.cols(), c.dim())?;
    check_dim(map.rows(), q.dim())?;
    check_dim(map.cols(), witness.len())?;
    let as_function = |set: &ConvexSetSpec| -> Option<(FunctionRef, Option<f64>)> {
        match set.kind() {
            SetKind::Halfspace { normal, offset } => Some((
                Arc::new(AffineFunction::new(normal.clone(), *offset).ok()?) as FunctionRef,
                Some(1.0),
            )),
            SetKind::Ball { center, radius } => Some((
                Arc::new(QuadraticBall::new(center.clone(), *radius).ok()?) as FunctionRef,
                None,
            )),
            _ => None,
        }
    };
    let (functions, exact) = match (as_function(&c), as_function(&q)) {
        (Some((cf, dc)), Some((qf, dq))) => (Some((cf, qf)), (dc, dq)),
        _ => (None, (None, None)),
    };
    let x0 = match x0 {
        Some(x) => x,
        None => {
            let mut s = Sampler::new(seed);
            &witness + s.unit_vector(map.cols()) * 2.0
        }
    };
    let parts = Parts {
        map,
        c,
        q,
        functions,
        subgradient_ops: false,
        exact_sub_delta: exact,
        witness,
        x0,
    };
    finish(label.into(), None, seed, parts)
}

fn sub_delta(
    f: &FunctionRef,
    exact: Option<f64>,
    center: &DVector<f64>,
    radius: f64,
) -> Result<Estimate> {
    match exact {
        Some(d) => Ok(Estimate::theoretical(d)),
        None => Ok(Estimate::theoretical(subgradient_projection_modulus(
            f.as_ref(),
            center,
            radius,
        )?)),
    }
}

fn single_halfspace(sets: &[ConvexSetSpec]) -> Option<&DVector<f64>> {
    match sets {
        [set] => match set.kind() {
            SetKind::Halfspace { normal, .. } => Some(normal),
            _ => None,
        },
        _ => None,
    }
}

/// `im A` as the affine set `{y : (I − UUᵀ)y = 0}`.
pub fn range_set(map: &LinearMap) -> Result<ConvexSetSpec> {
    let u = map.range_basis();
    let m = map.rows();
    let proj = DMatrix::<f64>::identity(m, m) - u * u.transpose();
    ConvexSetSpec::affine(proj, DVector::zeros(m))
}

fn finish(label: String, recipe: Option<Recipe>, seed: u64, p: Parts) -> Result<GeneratedInstance> {
    let (s_op, t_op): (OperatorRef, OperatorRef) = if p.subgradient_ops {
        let (cf, qf) = p
            .functions
            .as_ref()
            .ok_or(Error::MissingOracle("functions"))?;
        (
            Arc::new(SubgradientProjection::new(cf.clone())),
            Arc::new(SubgradientProjection::new(qf.clone())),
        )
    } else {
        (
            Arc::new(Projection::new(p.c.clone())),
            Arc::new(Projection::new(p.q.clone())),
        )
    };
    let mut instance = SCFPInstance::new(
        label,
        p.map.clone(),
        s_op.clone(),
        t_op.clone(),
        p.witness.clone(),
    )?
    .with_sets(p.c.clone(), p.q.clone())?;
    if let Some((cf, qf)) = &p.functions {
        instance = instance.with_functions(cf.clone(), qf.clone())?;
    }

    let map = &p.map;
    let z = &p.witness;
    let radius = (2.0 * (&p.x0 - z).norm()).max(1.0);
    let az = map.apply(z)?;
    let radius_img = map.op_norm() * radius;
    let fns = p.functions.as_ref();

    let delta_sub = match fns {
        Some((cf, qf)) => Some((
            sub_delta(cf, p.exact_sub_delta.0, z, radius)?,
            sub_delta(qf, p.exact_sub_delta.1, &az, radius_img)?,
        )),
        None => None,
    };
    let (delta_s, delta_t) = match (p.subgradient_ops, delta_sub) {
        (true, Some(pair)) => pair,
        _ => (Estimate::theoretical(1.0), Estimate::theoretical(1.0)),
    };

    let fix_s = s_op.fix_sets().ok_or(Error::MissingOracle("Fix S"))?;
    let pre_t = preimage_sets(map, t_op.as_ref()).ok_or(Error::MissingOracle("A^-1(Fix T)"))?;
    let kappa1 = match (single_halfspace(&fix_s), single_halfspace(&pre_t)) {
        (Some(u), Some(v)) => Estimate::theoretical(two_halfspace_kappa(u, v)?),
        _ => {
            let mut family = fix_s.clone();
            family.extend(pre_t.iter().cloned());
            Estimate::sampled(
                sample_family_modulus(&family, z, radius, MODULUS_SAMPLES, seed ^ 0x6b31)?
                    .value
                    .max(1.0),
            )
        }
    };
    let kappa2 = if map.is_surjective() {
        Estimate::theoretical(1.0)
    } else {
        let mut family = vec![range_set(map)?];
        family.extend(t_op.fix_sets().ok_or(Error::MissingOracle("Fix T"))?);
        Estimate::sampled(
            sample_family_modulus(&family, &az, radius_img, MODULUS_SAMPLES, seed ^ 0x6b32)?
                .value
                .max(1.0),
        )
    };

    let truth = GroundTruth {
        radius,
        delta_s,
        delta_t,
        delta_sub,
        kappa1,
        kappa2,
    };
    let generated = GeneratedInstance {
        instance,
        recipe,
        seed,
        x0: p.x0,
        truth,
    };
    verify_ground_truth(&generated, &s_op, &t_op, &fix_s, &pre_t)?;
    Ok(generated)
}

fn truth_error(detail: String) -> Error {
    Error::InstanceInvariant {
        invariant: "ground_truth",
        detail,
    }
}

/// Re-checks the solution-set description and every theoretical modulus.
fn verify_ground_truth(
    g: &GeneratedInstance,
    s_op: &OperatorRef,
    t_op: &OperatorRef,
    fix_s: &[ConvexSetSpec],
    pre_t: &[ConvexSetSpec],
) -> Result<()> {
    let inst = &g.instance;
    let z = &inst.witness;
    let mut s = Sampler::new(g.seed ^ 0x7e57);

    // The solution oracle agrees with Dykstra and lands in Fix S ∩ A⁻¹(Fix T).
    for _ in 0..VERIFY_PROJECTIONS {
        let y = s.in_ball(z, g.truth.radius);
        let (p, _) = inst.solution.project(&y)?;
        let pd = inst.solution.project_dykstra(&y)?;
        let gap = (&p - &pd).norm();
        if gap > VERIFY_TOL * (1.0 + y.norm()) {
            return Err(truth_error(format!(
                "solution projection differs from Dykstra by {gap:e}"
            )));
        }
        let rs = (s_op.apply(&p)? - &p).norm();
        let ap = inst.map.apply(&p)?;
        let rt = (t_op.apply(&ap)? - &ap).norm();
        if rs.max(rt) > VERIFY_TOL * (1.0 + ap.norm()) {
            return Err(truth_error(format!(
                "projection onto F is not fixed: |Sp - p| = {rs:e}, |T(Ap) - Ap| = {rt:e}"
            )));
        }
    }

    // Analytic κ₁ can never be exceeded by a Dykstra-measured ratio.
    if g.truth.kappa1.provenance == Provenance::TheoreticalBound {
        let mut family = fix_s.to_vec();
        family.extend(pre_t.iter().cloned());
        let inter = crate::oracle::Intersection::new(family.clone())?;
        for _ in 0..VERIFY_SAMPLES / 4 {
            let x = s.in_ball(z, g.truth.radius);
            let d = (&x - inter.project_dykstra(&x)?).norm();
            let mut worst: f64 = 0.0;
            for set in &family {
                worst = worst.max(set.distance(&x)?);
            }
            if d > g.truth.kappa1.value * worst + VERIFY_TOL {
                return Err(truth_error(format!(
                    "kappa1 = {} violated: d(x, F) = {d:e}, max d(x, C_i) = {worst:e}",
                    g.truth.kappa1.value
                )));
            }
        }
    }

    // Theoretical δ are lower bounds for sampled ratios.
    let az = inst.map.apply(z)?;
    let checks = [
        (s_op, g.truth.delta_s, z.clone(), g.truth.radius),
        (
            t_op,
            g.truth.delta_t,
            az.clone(),
            inst.map.op_norm() * g.truth.radius,
        ),
    ];
    for (i, (op, delta, center, r)) in checks.into_iter().enumerate() {
        let est =
            sample_operator_modulus(op.as_ref(), &center, r, VERIFY_SAMPLES, g.seed + i as u64)?;
        if est.value < delta.value - VERIFY_TOL {
            return Err(truth_error(format!(
                "delta {} exceeds sampled ratio {}",
                delta.value, est.value
            )));
        }
    }
    Ok(())
}
