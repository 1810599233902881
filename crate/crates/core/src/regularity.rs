//! Regularity moduli: sampled estimates, theoretical bounds and the rate
//! constants of the projected Landweber iteration.
//!
//! Sampled estimates can only falsify a claimed modulus. An operator modulus
//! estimate is a minimum of observed ratios (an over-estimate of the true
//! infimum); a set-family estimate is a maximum (an under-estimate of the
//! true supremum). Theoretical values are authoritative where available.

use std::fmt::{self, Write as _};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::fixops::{ConvexFunction, ConvexSetSpec, FixedPointOperator};
use crate::linop::LinearMap;
use crate::oracle::Intersection;
use crate::sampling::Sampler;

/// Samples closer than this to the target set are skipped to avoid `0/0`.
pub const SKIP_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    TheoreticalBound,
    SampledEstimate,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::TheoreticalBound => "theoretical-bound",
            Provenance::SampledEstimate => "sampled-estimate",
        }
    }

    /// A value derived from several inputs is only as strong as the weakest.
    pub fn and(self, other: Provenance) -> Provenance {
        if self == Provenance::TheoreticalBound && other == Provenance::TheoreticalBound {
            Provenance::TheoreticalBound
        } else {
            Provenance::SampledEstimate
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub provenance: Provenance,
}

impl Estimate {
    pub fn theoretical(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::TheoreticalBound,
        }
    }

    pub fn sampled(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::SampledEstimate,
        }
    }
}

/// Outcome of a sampled ratio estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledModulus {
    pub value: f64,
    pub valid: usize,
    /// Samples within [`SKIP_DISTANCE`] of the target set.
    pub skipped: usize,
    /// Samples whose distance oracle failed.
    pub invalid: usize,
    pub seed: u64,
}

enum Sample {
    Ratio(f64),
    Skipped,
    Invalid,
}

fn draw_points(center: &DVector<f64>, radius: f64, samples: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut sampler = Sampler::new(seed);
    (0..samples)
        .map(|_| sampler.in_ball(center, radius))
        .collect()
}

/// Draws points sequentially from the seed, evaluates them in parallel and
/// reduces with `min` or `max`, so the result does not depend on the number
/// of worker threads.
fn reduce_samples<F>(points: &[DVector<f64>], seed: u64, take_max: bool, eval: F) -> SampledModulus
where
    F: Fn(&DVector<f64>) -> Result<Sample> + Sync,
{
    let results: Vec<Sample> = points
        .par_iter()
        .map(|x| eval(x).unwrap_or(Sample::Invalid))
        .collect();
    let mut out = SampledModulus {
        value: if take_max {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        },
        valid: 0,
        skipped: 0,
        invalid: 0,
        seed,
    };
    for r in results {
        match r {
            Sample::Ratio(v) if v.is_finite() => {
                out.valid += 1;
                out.value = if take_max {
                    out.value.max(v)
                } else {
                    out.value.min(v)
                };
            }
            Sample::Ratio(_) | Sample::Invalid => out.invalid += 1,
            Sample::Skipped => out.skipped += 1,
        }
    }
    out
}

/// `min ‖Tx − x‖ / d(x, Fix T)` over points sampled uniformly from
/// `B(center, radius)`.
pub fn sample_operator_modulus(
    op: &dyn FixedPointOperator,
    center: &DVector<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<SampledModulus> {
    check_dim(op.dim(), center.len())?;
    let probe = draw_points(center, radius, 1, seed);
    op.fix_distance(&probe[0])
        .ok_or(Error::MissingOracle("distance to Fix T"))??;
    let points = draw_points(center, radius, samples, seed);
    let out = reduce_samples(&points, seed, false, |x| {
        let d = op
            .fix_distance(x)
            .ok_or(Error::MissingOracle("distance to Fix T"))??;
        if d.value < SKIP_DISTANCE {
            return Ok(Sample::Skipped);
        }
        Ok(Sample::Ratio((op.apply(x)? - x).norm() / d.value))
    });
    if out.valid == 0 {
        return Err(Error::NoValidSamples(format!(
            "{} skipped, {} invalid of {samples}",
            out.skipped, out.invalid
        )));
    }
    Ok(out)
}

/// `δ = −f(z)/(M r)`, the modulus of the subgradient projection over
/// `B(z, r)` certified by the Slater point `z = center`.
pub fn subgradient_projection_modulus(
    f: &dyn ConvexFunction,
    center: &DVector<f64>,
    radius: f64,
) -> Result<f64> {
    check_dim(f.dim(), center.len())?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let fz = f.value(center);
    if !(fz < 0.0) {
        return Err(Error::NotCertified(format!(
            "center is not a Slater point (f = {fz})"
        )));
    }
    let m = f
        .subgrad_bound(center, radius)
        .ok_or_else(|| Error::NotCertified("no subgradient bound on the ball".into()))?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::NotCertified(format!(
            "subgradient bound {m} unusable"
        )));
    }
    Ok(-fz / (m * radius))
}

/// `max d(x, ∩Cᵢ) / maxᵢ d(x, Cᵢ)` over sampled points.
pub fn sample_family_modulus(
    sets: &[ConvexSetSpec],
    center: &DVector<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<SampledModulus> {
    if sets.is_empty() {
        return Err(Error::EmptySequence);
    }
    let inter = Intersection::new(sets.to_vec())?;
    if !inter.contains(center, 1e-9)? {
        return Err(Error::InvalidParameter(
            "center must lie in the intersection".into(),
        ));
    }
    let points = draw_points(center, radius, samples, seed);
    let out = reduce_samples(&points, seed, true, |x| {
        let (d, _) = inter.distance(x)?;
        if d < SKIP_DISTANCE {
            return Ok(Sample::Skipped);
        }
        let mut worst: f64 = 0.0;
        for s in sets {
            worst = worst.max(s.distance(x)?);
        }
        Ok(Sample::Ratio(d / worst))
    });
    if out.valid == 0 {
        return Err(Error::OracleFailure(format!(
            "no usable intersection distances ({} skipped, {} invalid)",
            out.skipped, out.invalid
        )));
    }
    Ok(out)
}

/// Analytic modulus of two halfspaces with normals `u`, `v` and nonempty
/// intersection: `1/cos(φ/2)` for the angle `φ` between the normals, and 1
/// for antiparallel normals (a slab or hyperplane).
pub fn two_halfspace_kappa(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidParameter("zero normal".into()));
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    if c <= -1.0 + 1e-12 {
        return Ok(1.0);
    }
    Ok((2.0 / (1.0 + c)).sqrt())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// `Δ = ((ρ+1)/2)(δ|A|/(κ‖A‖))²`.
pub fn landweber_modulus(rho: f64, delta: f64, kappa: f64, a: &LinearMap) -> Result<f64> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rho must be finite and nonnegative, got {rho}"
        )));
    }
    positive("delta", delta)?;
    positive("kappa", kappa)?;
    let ratio = delta * a.min_pos_sv() / (kappa * a.op_norm());
    Ok((rho + 1.0) / 2.0 * ratio * ratio)
}

/// `δ_P = ρ δ²/(2 m κ²)` with `δ = minᵢ δᵢ`.
///
/// Uses the smallest `δᵢ`, so the bound holds for every factor.
pub fn product_modulus(rho: f64, deltas: &[f64], kappa: f64, m: usize) -> Result<f64> {
    positive("rho", rho)?;
    positive("kappa", kappa)?;
    if deltas.is_empty() || m == 0 {
        return Err(Error::EmptySequence);
    }
    for d in deltas {
        positive("delta", *d)?;
    }
    let delta = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(rho * delta * delta / (2.0 * m as f64 * kappa * kappa))
}

/// `γ_r = |A|/(κ₁κ₂)`, the constant in `d(Ax, Q) ≥ γ_r d(x, C ∩ A⁻¹(Q))`.
pub fn scfp_regularity_bound(a: &LinearMap, kappa1: f64, kappa2: f64) -> Result<f64> {
    positive("kappa1", kappa1)?;
    positive("kappa2", kappa2)?;
    Ok(a.min_pos_sv() / (kappa1 * kappa2))
}

/// Rate constants of the projected Landweber iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound {
    pub gamma: f64,
    pub q: f64,
}

/// `Γ = min{ρ_S, ρ_T}(min{δ_S, εΔ}/(2κ₁))²` and `q = √(1 − min{ρ_S, ρ_T}Γ²/2)`.
pub fn rate_bound(
    rho_s: f64,
    rho_t: f64,
    delta_s: f64,
    big_delta: f64,
    epsilon: f64,
    kappa1: f64,
) -> Result<RateBound> {
    let rho = rho_s.min(rho_t);
    positive("min(rho_S, rho_T)", rho)?;
    positive("delta_S", delta_s)?;
    positive("Delta", big_delta)?;
    positive("epsilon", epsilon)?;
    positive("kappa1", kappa1)?;
    let m = delta_s.min(epsilon * big_delta) / (2.0 * kappa1);
    let gamma = rho * m * m;
    let q2 = 1.0 - rho * gamma * gamma / 2.0;
    if !(q2 > 0.0) {
        return Err(Error::ModuliInconsistent { q_squared: q2 });
    }
    Ok(RateBound {
        gamma,
        q: q2.sqrt(),
    })
}

/// Regularity report for one instance over `B(center, radius)`.
#[derive(Debug, Clone)]
pub struct RegularityEstimate {
    pub center: DVector<f64>,
    pub radius: f64,
    pub rho_s: f64,
    pub rho_t: f64,
    pub epsilon: f64,
    pub delta_s: Estimate,
    pub delta_t: Estimate,
    pub kappa1: Estimate,
    pub kappa2: Estimate,
    pub delta_landweber: Estimate,
    pub gamma: Estimate,
    pub q_rate: Estimate,
    pub gamma_r: Estimate,
    pub seed: u64,
    pub notes: Vec<String>,
}

/// Inputs from which [`RegularityEstimate::assemble`] derives `Δ`, `Γ`, `q`
/// and `γ_r`.
#[derive(Debug, Clone)]
pub struct ModuliInputs {
    pub center: DVector<f64>,
    pub radius: f64,
    pub rho_s: f64,
    pub rho_t: f64,
    pub epsilon: f64,
    pub delta_s: Estimate,
    pub delta_t: Estimate,
    pub kappa1: Estimate,
    pub kappa2: Estimate,
    pub seed: u64,
}

impl RegularityEstimate {
    pub fn assemble(a: &LinearMap, inputs: ModuliInputs) -> Result<Self> {
        let big_delta =
            landweber_modulus(inputs.rho_t, inputs.delta_t.value, inputs.kappa2.value, a)?;
        let dprov = inputs.delta_t.provenance.and(inputs.kappa2.provenance);
        let rb = rate_bound(
            inputs.rho_s,
            inputs.rho_t,
            inputs.delta_s.value,
            big_delta,
            inputs.epsilon,
            inputs.kappa1.value,
        )?;
        let rprov = dprov
            .and(inputs.delta_s.provenance)
            .and(inputs.kappa1.provenance);
        let gamma_r = scfp_regularity_bound(a, inputs.kappa1.value, inputs.kappa2.value)?;
        let gprov = inputs.kappa1.provenance.and(inputs.kappa2.provenance);
        Ok(Self {
            center: inputs.center,
            radius: inputs.radius,
            rho_s: inputs.rho_s,
            rho_t: inputs.rho_t,
            epsilon: inputs.epsilon,
            delta_s: inputs.delta_s,
            delta_t: inputs.delta_t,
            kappa1: inputs.kappa1,
            kappa2: inputs.kappa2,
            delta_landweber: Estimate {
                value: big_delta,
                provenance: dprov,
            },
            gamma: Estimate {
                value: rb.gamma,
                provenance: rprov,
            },
            q_rate: Estimate {
                value: rb.q,
                provenance: rprov,
            },
            gamma_r: Estimate {
                value: gamma_r,
                provenance: gprov,
            },
            seed: inputs.seed,
            notes: Vec::new(),
        })
    }

    /// `key: value` lines.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let center: Vec<String> = self.center.iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(s, "center: {}", center.join(" "));
        let _ = writeln!(s, "radius: {:.17e}", self.radius);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "rho_S: {:.17e}", self.rho_s);
        let _ = writeln!(s, "rho_T: {:.17e}", self.rho_t);
        let _ = writeln!(s, "epsilon: {:.17e}", self.epsilon);
        for (key, e) in [
            ("delta_S", &self.delta_s),
            ("delta_T", &self.delta_t),
            ("kappa1", &self.kappa1),
            ("kappa2", &self.kappa2),
            ("Delta", &self.delta_landweber),
            ("Gamma", &self.gamma),
            ("q", &self.q_rate),
            ("gamma_r", &self.gamma_r),
        ] {
            let _ = writeln!(s, "{key}: {:.17e}", e.value);
            let _ = writeln!(s, "{key}.provenance: {}", e.provenance);
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixops::{Identity, InfNormBall, Projection, SubgradientProjection};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_modulus_is_one() {
        let p = Projection::new(ConvexSetSpec::halfspace(v(&[1.0, 1.0]), 0.0).unwrap());
        let est = sample_operator_modulus(&p, &v(&[0.0, 0.0]), 3.0, 500, 1).unwrap();
        assert_relative_eq!(est.value, 1.0, epsilon = 1e-12);
        assert!(est.skipped > 0);
    }

    #[test]
    fn identity_modulus_is_undefined() {
        let id = Identity::new(2);
        assert!(matches!(
            sample_operator_modulus(&id, &v(&[0.0, 0.0]), 1.0, 100, 1),
            Err(Error::NoValidSamples(_))
        ));
    }

    #[test]
    fn inf_norm_subgradient_projection() {
        let f = Arc::new(InfNormBall::new(v(&[0.0, 0.0]), 1.0).unwrap());
        let delta = subgradient_projection_modulus(f.as_ref(), &v(&[0.0, 0.0]), 2.0).unwrap();
        assert_relative_eq!(delta, 0.5);
        let p = SubgradientProjection::new(f);
        let est = sample_operator_modulus(&p, &v(&[0.0, 0.0]), 2.0, 1000, 3).unwrap();
        assert!(est.value >= delta - 1e-12, "{est:?}");
    }

    #[test]
    fn slater_modulus_formula() {
        let f = crate::fixops::AffineFunction::new(v(&[1.0, 0.0]), 0.0).unwrap();
        let z = v(&[-1.0, 0.0]);
        assert_relative_eq!(subgradient_projection_modulus(&f, &z, 1.0).unwrap(), 1.0);
        assert_relative_eq!(subgradient_projection_modulus(&f, &z, 2.0).unwrap(), 0.5);
        assert!(matches!(
            subgradient_projection_modulus(&f, &v(&[1.0, 0.0]), 1.0),
            Err(Error::NotCertified(_))
        ));
    }

    #[test]
    fn family_modulus_basic() {
        let h = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), 0.0).unwrap();
        let one =
            sample_family_modulus(std::slice::from_ref(&h), &v(&[0.0, 0.0]), 2.0, 200, 1).unwrap();
        assert_relative_eq!(one.value, 1.0, epsilon = 1e-12);
        let two = sample_family_modulus(&[h.clone(), h], &v(&[0.0, 0.0]), 2.0, 200, 1).unwrap();
        assert_relative_eq!(two.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn family_modulus_grows_as_wedge_closes() {
        let mut last = 0.0;
        for theta in [
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_4,
            std::f64::consts::FRAC_PI_8,
        ] {
            // Wedge of opening angle θ at the origin.
            let u = v(&[0.0, -1.0]);
            let w = v(&[-theta.sin(), theta.cos()]);
            let sets = vec![
                ConvexSetSpec::halfspace(u.clone(), 0.0).unwrap(),
                ConvexSetSpec::halfspace(w.clone(), 0.0).unwrap(),
            ];
            let est = sample_family_modulus(&sets, &v(&[0.0, 0.0]), 1.0, 2000, 5).unwrap();
            let exact = two_halfspace_kappa(&u, &w).unwrap();
            assert_relative_eq!(exact, 1.0 / (theta / 2.0).sin(), epsilon = 1e-12);
            assert!(est.value <= exact + 1e-9 && est.value > last, "{est:?}");
            assert!(est.value >= 0.95 * exact);
            last = est.value;
        }
    }

    #[test]
    fn estimator_is_deterministic_across_thread_counts() {
        let p = Projection::new(ConvexSetSpec::ball(v(&[0.0, 0.0]), 1.0).unwrap());
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sample_operator_modulus(&p, &v(&[0.0, 0.0]), 3.0, 300, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn closed_form_moduli() {
        let id = LinearMap::identity(2).unwrap();
        assert_relative_eq!(landweber_modulus(1.0, 1.0, 1.0, &id).unwrap(), 1.0);
        assert_relative_eq!(landweber_modulus(0.0, 1.0, 1.0, &id).unwrap(), 0.5);
        let a = LinearMap::diagonal(&[2.0, 1.0]).unwrap();
        assert_relative_eq!(landweber_modulus(1.0, 0.5, 2.0, &a).unwrap(), 0.015625);
        assert!(landweber_modulus(1.0, 0.0, 1.0, &a).is_err());

        assert_relative_eq!(product_modulus(2.0, &[1.0], 1.0, 1).unwrap(), 1.0);
        assert_relative_eq!(product_modulus(1.0, &[1.0, 1.0], 1.0, 2).unwrap(), 0.25);
        assert!(
            product_modulus(1.0, &[1.0], 2.0, 1).unwrap()
                < product_modulus(1.0, &[1.0], 1.5, 1).unwrap()
        );

        assert_relative_eq!(scfp_regularity_bound(&id, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(scfp_regularity_bound(&a, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rate_bound_examples() {
        let r = rate_bound(1.0, 1.0, 2.0, 2.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(r.gamma, 1.0);
        assert_relative_eq!(r.q, 0.5f64.sqrt());
        let r = rate_bound(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(r.gamma, 0.25);
        assert_relative_eq!(r.q, (1.0 - 1.0 / 32.0f64).sqrt());
        let worse = rate_bound(1.0, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert!(worse.q > r.q);
        assert!(matches!(
            rate_bound(10.0, 10.0, 2.0, 2.0, 1.0, 1.0),
            Err(Error::ModuliInconsistent { .. })
        ));
    }

    #[test]
    fn report_recomputes_delta() {
        let a = LinearMap::diagonal(&[2.0, 1.0]).unwrap();
        let est = RegularityEstimate::assemble(
            &a,
            ModuliInputs {
                center: v(&[0.0, 0.0]),
                radius: 1.0,
                rho_s: 1.0,
                rho_t: 1.0,
                epsilon: 1.0,
                delta_s: Estimate::theoretical(1.0),
                delta_t: Estimate::theoretical(1.0),
                kappa1: Estimate::theoretical(1.0),
                kappa2: Estimate::sampled(1.0),
                seed: 0,
            },
        )
        .unwrap();
        assert_relative_eq!(est.delta_landweber.value, 0.25);
        assert_eq!(est.delta_landweber.provenance, Provenance::SampledEstimate);
        assert_eq!(est.gamma_r.provenance, Provenance::SampledEstimate);
        let text = est.to_report();
        assert!(text.contains("Delta: 2.5"));
        assert!(text.contains("q.provenance: sampled-estimate"));
    }
}
