mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use splitfeas::fixops::{
    relax, ConvexSetSpec, FixedPointOperator, OperatorRef, Projection, QuadraticBall, Relaxation,
    SubgradientProjection,
};
use splitfeas::landweber::{extrapolated_step, landweber_apply, tau, LandweberOperator, SigmaMode};
use splitfeas::LinearMap;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

struct Setup {
    map: LinearMap,
    w: Vec<f64>,
    ops: Vec<OperatorRef>,
    /// Every point of `B(w, margin)` lies in `A⁻¹(Fix T)` for each operator.
    margin: f64,
    /// A halfspace `{⟨a, y⟩ ≤ b}` equal to `Fix` of the first operator.
    halfspace: (Vec<f64>, f64),
}

/// Operators on `ℝᵐ` whose fixed sets all contain `B(Aw, 1/2)`.
fn setup(seed: u64, m: usize, n: usize) -> Setup {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, m, n);
    let map = LinearMap::new(DMatrix::from_fn(m, n, |i, j| a[i][j])).unwrap();
    let w = gaussian_vec(&mut r, n);
    let aw = matvec(&a, &w);
    let normal = gaussian_vec(&mut r, m);
    let b = dot(&normal, &aw) + 0.5 * norm(&normal);
    let widths: Vec<f64> = (0..m).map(|_| 0.5 + uniform(&mut r, 0.0, 1.0)).collect();
    let lo: Vec<f64> = aw.iter().zip(&widths).map(|(c, h)| c - h).collect();
    let hi: Vec<f64> = aw.iter().zip(&widths).map(|(c, h)| c + h).collect();
    let u = gaussian_vec(&mut r, m);
    let center = axpy(0.3 / norm(&u), &u, &aw);
    let half: OperatorRef = Arc::new(Projection::new(
        ConvexSetSpec::halfspace(dv(&normal), b).unwrap(),
    ));
    let ops: Vec<OperatorRef> = vec![
        half.clone(),
        Arc::new(Projection::new(
            ConvexSetSpec::bounding_box(dv(&lo), dv(&hi)).unwrap(),
        )),
        Arc::new(Projection::new(
            ConvexSetSpec::ball(dv(&center), 0.8).unwrap(),
        )),
        relax(half, Relaxation::Constant(1.5)).unwrap(),
        Arc::new(SubgradientProjection::new(Arc::new(
            QuadraticBall::new(dv(&center), 0.8).unwrap(),
        ))),
    ];
    let margin = 0.5 / map.op_norm();
    Setup {
        map,
        w,
        ops,
        margin,
        halfspace: (normal, b),
    }
}

fn fixed_points(s: &Setup, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let mut zs = vec![s.w.clone()];
    for _ in 0..8 {
        zs.push(in_ball(&mut r, &s.w, s.margin));
    }
    zs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn landweber_operators_keep_rho(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, lambda in 0.05f64..1.0) {
        let s = setup(seed, m, n);
        let zs = fixed_points(&s, seed ^ 3);
        let mut r = rng(seed ^ 4);
        for t in &s.ops {
            let rho = t.sqne_rho();
            let base = || LandweberOperator::new(s.map.clone(), t.clone(), &dv(&s.w)).unwrap();
            let ls = [
                base(),
                base().with_sigma(SigmaMode::Tau),
                base().with_sigma(SigmaMode::Tau).with_lambda(lambda).unwrap(),
            ];
            for l in &ls {
                prop_assert!(l.sqne_rho() >= rho - 1e-15);
                for _ in 0..20 {
                    let x = in_ball(&mut r, &s.w, 5.0);
                    let lx = l.apply(&dv(&x)).unwrap();
                    for z in &zs {
                        let v = norm(&sub(lx.as_slice(), z)).powi(2) - norm(&sub(&x, z)).powi(2)
                            + rho * norm(&sub(lx.as_slice(), &x)).powi(2);
                        prop_assert!(v <= 1e-10, "{}: {}", l.describe(), v);
                    }
                }
            }
        }
    }

    #[test]
    fn step_is_equivalent_to_the_image_residual(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
        let s = setup(seed, m, n);
        let norm_a = s.map.op_norm();
        let mut r = rng(seed ^ 5);
        for t in &s.ops {
            let lam = 2.0 / (1.0 + t.sqne_rho());
            for _ in 0..20 {
                let x = in_ball(&mut r, &s.w, 5.0);
                let ax = s.map.apply(&dv(&x)).unwrap();
                let res = (t.apply(&ax).unwrap() - &ax).norm();
                let step = (landweber_apply(&s.map, t.as_ref(), &dv(&x)).unwrap() - dv(&x)).norm();
                // ‖r‖²/(λ‖x − w‖) ≤ ‖A‖²‖L{T}x − x‖ ≤ ‖A‖‖r‖, with λ the
                // relaxation of the underlying cutter, so both vanish together.
                let dxw = norm(&sub(&x, &s.w));
                prop_assert!(norm_a * norm_a * step <= norm_a * res * (1.0 + 1e-12) + 1e-15);
                prop_assert!(res * res / (lam * dxw) <= norm_a * norm_a * step * (1.0 + 1e-10) + 1e-15);
            }
            for z in fixed_points(&s, seed) {
                let step = (landweber_apply(&s.map, t.as_ref(), &dv(&z)).unwrap() - dv(&z)).norm();
                prop_assert!(step <= 1e-12);
            }
        }
    }

    #[test]
    fn tau_is_at_least_one(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
        let s = setup(seed, m, n);
        let mut r = rng(seed ^ 6);
        for t in &s.ops {
            for _ in 0..20 {
                let x = in_ball(&mut r, &s.w, 5.0);
                prop_assert!(tau(&s.map, t.as_ref(), &dv(&x)).unwrap() >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn tau_step_ignores_power_of_two_scaling(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, e in -3i32..4) {
        let s = setup(seed, m, n);
        let c = 2f64.powi(e);
        let (a, b) = &s.halfspace;
        let t = Projection::new(ConvexSetSpec::halfspace(dv(a), *b).unwrap());
        let tc = Projection::new(ConvexSetSpec::halfspace(dv(a), c * b).unwrap());
        let scaled = s.map.scaled(c).unwrap();
        let mut r = rng(seed ^ 7);
        for _ in 0..20 {
            let x = dv(&in_ball(&mut r, &s.w, 5.0));
            let p1 = extrapolated_step(&s.map, &t, &SigmaMode::Tau, 0.9, &x).unwrap();
            let p2 = extrapolated_step(&scaled, &tc, &SigmaMode::Tau, 0.9, &x).unwrap();
            prop_assert_eq!(p1.point.as_slice(), p2.point.as_slice());
        }
    }

    #[test]
    fn nonexpansive_inner_gives_nonexpansive_landweber(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
        let s = setup(seed, m, n);
        let mut r = rng(seed ^ 8);
        for t in s.ops.iter().take(3) {
            for _ in 0..20 {
                let x = dv(&in_ball(&mut r, &s.w, 5.0));
                let y = dv(&in_ball(&mut r, &s.w, 5.0));
                let lx = landweber_apply(&s.map, t.as_ref(), &x).unwrap();
                let ly = landweber_apply(&s.map, t.as_ref(), &y).unwrap();
                prop_assert!((lx - ly).norm() <= (&x - &y).norm() + 1e-10);
            }
        }
    }

    #[test]
    fn relaxed_cutter_scales_the_step(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, lambda in 0.01f64..2.0) {
        let s = setup(seed, m, n);
        let t = s.ops[0].clone();
        let tl = relax(t.clone(), Relaxation::Constant(lambda)).unwrap();
        let mut r = rng(seed ^ 9);
        for _ in 0..20 {
            let x = dv(&in_ball(&mut r, &s.w, 5.0));
            let base = (landweber_apply(&s.map, t.as_ref(), &x).unwrap() - &x).norm();
            let relaxed = (landweber_apply(&s.map, tl.as_ref(), &x).unwrap() - &x).norm();
            prop_assert!((relaxed - lambda * base).abs() <= 1e-12 * (1.0 + base));
        }
    }
}
