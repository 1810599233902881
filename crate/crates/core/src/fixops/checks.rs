//! Sampled verification of the four equivalent SQNE characterizations.

use nalgebra::DVector;

use super::FixedPointOperator;
use crate::error::{check_dim, Error, Result};
use crate::sampling::Sampler;

/// Number of fixed points drawn from the fixed-set oracle.
const FIXED_POINTS: usize = 24;

#[derive(Debug, Clone)]
pub struct SqneCheck {
    pub rho: f64,
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

/// Worst violations (positive means violated) of the four conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SqneReport {
    pub rho: f64,
    pub samples: usize,
    pub fixed_points: usize,
    pub seed: u64,
    /// `‖Tx − z‖² − ‖x − z‖² + ρ‖Tx − x‖²`
    pub sqne: f64,
    /// `⟨z − Ux, x − Ux⟩` with `U = T_{(ρ+1)/2}`
    pub cutter: f64,
    /// `(ρ+1)/2 ‖Tx − x‖² − ⟨Tx − x, z − x⟩`
    pub inner_product: f64,
    /// the relaxed inequality for sampled `α(x) ∈ (0, ρ + 1]`
    pub relaxed: f64,
    pub tol: f64,
}

impl SqneReport {
    pub fn worst(&self) -> f64 {
        self.sqne
            .max(self.cutter)
            .max(self.inner_product)
            .max(self.relaxed)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tol
    }
}

/// Samples `x` uniformly from `B(center, radius)` and `z` from `Fix T`
/// (the center, which must be fixed, plus projections of random points when
/// an oracle exists) and evaluates all four inequalities.
pub fn check_sqne_equivalences(
    op: &dyn FixedPointOperator,
    center: &DVector<f64>,
    radius: f64,
    check: &SqneCheck,
) -> Result<SqneReport> {
    check_dim(op.dim(), center.len())?;
    let rho = check.rho;
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be nonnegative, got {rho}"
        )));
    }
    let residual = (op.apply(center)? - center).norm();
    if residual > 1e-10 {
        return Err(Error::MissingWitness { index: 0, residual });
    }
    let mut sampler = Sampler::new(check.seed);
    let mut fixed = vec![center.clone()];
    for _ in 0..FIXED_POINTS.min(check.samples) {
        let y = sampler.in_ball(center, radius);
        match op.fix_project(&y) {
            Some(r) => fixed.push(r?.0),
            None => break,
        }
    }

    let half = (rho + 1.0) / 2.0;
    let alpha_cap = if rho.is_finite() { rho + 1.0 } else { 4.0 };
    let mut report = SqneReport {
        rho,
        samples: check.samples,
        fixed_points: fixed.len(),
        seed: check.seed,
        sqne: f64::NEG_INFINITY,
        cutter: f64::NEG_INFINITY,
        inner_product: f64::NEG_INFINITY,
        relaxed: f64::NEG_INFINITY,
        tol: check.tol,
    };
    for _ in 0..check.samples {
        let x = sampler.in_ball(center, radius);
        let tx = op.apply(&x)?;
        let step = &tx - &x;
        let s2 = step.norm_squared();
        let alpha = sampler.uniform(0.0, 1.0).max(1e-3) * alpha_cap;
        let relaxed = &x + &step * alpha;
        let r2 = (&relaxed - &x).norm_squared();
        for z in &fixed {
            let xz2 = (&x - z).norm_squared();
            if rho.is_infinite() {
                // Only T = Id qualifies; every inequality reduces to Tx = x.
                let v = step.norm();
                report.sqne = report.sqne.max(v);
                report.cutter = report.cutter.max(v);
                report.inner_product = report.inner_product.max(v);
                report.relaxed = report.relaxed.max(v);
                continue;
            }
            let sqne = (&tx - z).norm_squared() - xz2 + rho * s2;
            let u = &x + &step * half;
            let cutter = (z - &u).dot(&(&x - &u));
            let inner = half * s2 - step.dot(&(z - &x));
            let coeff = rho / alpha + (1.0 - alpha) / alpha;
            let rel = (&relaxed - z).norm_squared() - xz2 + coeff * r2;
            report.sqne = report.sqne.max(sqne);
            report.cutter = report.cutter.max(cutter);
            report.inner_product = report.inner_product.max(inner);
            report.relaxed = report.relaxed.max(rel);
        }
    }
    Ok(report)
}
