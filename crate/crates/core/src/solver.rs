//! Projected (extrapolated) Landweber iteration
//! `x_{k+1} = S(x_k + λ_k σ(x_k)/‖A‖² A*(T(Ax_k) − Ax_k))` and its CQ special
//! cases, with Fejér, rate and tail audits.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::fixops::{
    relaxed_rho, ConvexSetSpec, FunctionRef, OperatorRef, Projection, SubgradientProjection,
};
use crate::landweber::{extrapolated_step, preimage_sets, SigmaMode};
use crate::linop::LinearMap;
use crate::oracle::{Exactness, Intersection};
use crate::sampling::Sampler;

/// Tolerance for the instance invariants on the witness.
pub const WITNESS_TOL: f64 = 1e-10;
/// Running Fejér slack above which a run is aborted.
pub const FEJER_ABORT: f64 = 1e-6;
/// Distances at or below this are treated as zero by the rate estimator.
pub const RATE_FLOOR: f64 = 1e-13;

/// A split convex feasibility problem: find `x ∈ Fix S` with `Ax ∈ Fix T`.
#[derive(Clone)]
pub struct SCFPInstance {
    pub label: String,
    pub map: LinearMap,
    pub s: OperatorRef,
    pub t: OperatorRef,
    pub witness: DVector<f64>,
    /// `F = Fix S ∩ A⁻¹(Fix T)` as an intersection in the domain of `A`.
    pub solution: Intersection,
    /// `C` and `Q`, for the classic CQ variant.
    pub sets: Option<(ConvexSetSpec, ConvexSetSpec)>,
    /// `c` and `q`, for the subgradient CQ variant.
    pub functions: Option<(FunctionRef, FunctionRef)>,
}

impl fmt::Debug for SCFPInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SCFPInstance")
            .field("label", &self.label)
            .field("n", &self.map.cols())
            .field("m", &self.map.rows())
            .field("S", &self.s.describe())
            .field("T", &self.t.describe())
            .finish_non_exhaustive()
    }
}

impl SCFPInstance {
    /// Builds the instance and checks its invariants. The solution-set
    /// oracle is assembled from the fixed-set descriptions of `S` and `T`.
    pub fn new(
        label: impl Into<String>,
        map: LinearMap,
        s: OperatorRef,
        t: OperatorRef,
        witness: DVector<f64>,
    ) -> Result<Self> {
        check_dim(map.cols(), s.dim())?;
        check_dim(map.rows(), t.dim())?;
        let mut sets = s.fix_sets().ok_or(Error::MissingOracle("Fix S"))?;
        sets.extend(preimage_sets(&map, t.as_ref()).ok_or(Error::MissingOracle("A^-1(Fix T)"))?);
        let solution = Intersection::new(sets)?;
        Self::with_solution(label, map, s, t, witness, solution)
    }

    pub fn with_solution(
        label: impl Into<String>,
        map: LinearMap,
        s: OperatorRef,
        t: OperatorRef,
        witness: DVector<f64>,
        solution: Intersection,
    ) -> Result<Self> {
        check_dim(map.cols(), s.dim())?;
        check_dim(map.rows(), t.dim())?;
        check_dim(map.cols(), witness.len())?;
        let inst = Self {
            label: label.into(),
            map,
            s,
            t,
            witness,
            solution,
            sets: None,
            functions: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_sets(mut self, c: ConvexSetSpec, q: ConvexSetSpec) -> Result<Self> {
        check_dim(self.map.cols(), c.dim())?;
        check_dim(self.map.rows(), q.dim())?;
        self.sets = Some((c, q));
        Ok(self)
    }

    pub fn with_functions(mut self, c: FunctionRef, q: FunctionRef) -> Result<Self> {
        check_dim(self.map.cols(), c.dim())?;
        check_dim(self.map.rows(), q.dim())?;
        self.functions = Some((c, q));
        Ok(self)
    }

    /// Replaces the witness without revalidating. Used to build deliberately
    /// broken instances; [`SCFPInstance::validate`] reports them.
    pub fn with_witness_unchecked(mut self, witness: DVector<f64>) -> Self {
        self.witness = witness;
        self
    }

    pub fn n(&self) -> usize {
        self.map.cols()
    }

    pub fn m(&self) -> usize {
        self.map.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let rs = self.s.sqne_rho();
        let rt = self.t.sqne_rho();
        if !(rs > 0.0 && rt > 0.0) {
            return Err(Error::InstanceInvariant {
                invariant: "positive_rho",
                detail: format!("rho_S = {rs}, rho_T = {rt}"),
            });
        }
        let z = &self.witness;
        let rs = (self.s.apply(z)? - z).norm();
        if rs > WITNESS_TOL {
            return Err(Error::InstanceInvariant {
                invariant: "witness_fix_s",
                detail: format!("|S(z) - z| = {rs:e}"),
            });
        }
        let az = self.map.apply(z)?;
        let rt = (self.t.apply(&az)? - &az).norm();
        if rt > WITNESS_TOL {
            return Err(Error::InstanceInvariant {
                invariant: "witness_fix_t",
                detail: format!("|T(Az) - Az| = {rt:e}"),
            });
        }
        let (d, _) = self.solution.distance(z)?;
        if d > WITNESS_TOL {
            return Err(Error::InstanceInvariant {
                invariant: "witness_solution_distance",
                detail: format!("d(z, F) = {d:e}"),
            });
        }
        Ok(())
    }

    pub fn solution_distance(&self, x: &DVector<f64>) -> Result<(f64, Exactness)> {
        self.solution.distance(x)
    }

    /// Points of `F` strictly between the witness and projections of random
    /// points, so that small oracle errors cannot push them outside `F`.
    pub fn sample_solutions(
        &self,
        count: usize,
        radius: f64,
        seed: u64,
    ) -> Result<Vec<DVector<f64>>> {
        let mut sampler = Sampler::new(seed);
        let mut out = vec![self.witness.clone()];
        for _ in 0..count {
            let y = sampler.in_ball(&self.witness, radius);
            let (p, _) = self.solution.project(&y)?;
            out.push(&self.witness + (p - &self.witness) * 0.9);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `S`, `T` are `ρ`-SQNE, `λ_k ∈ [ε, 1]`.
    LandweberSqne,
    /// `S`, `T` are cutters, `λ_k ∈ [ε, 2 − ε]`.
    CutterRelaxed,
    /// `S = P_C`, `T = P_Q`, `λ_k ∈ [ε, 2 − ε]`.
    ClassicCq,
    /// `S = P_c`, `T = P_q` (subgradient projections), `λ_k ∈ [ε, 2 − ε]`.
    SubgradientCq,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LandweberSqne => "landweber_sqne",
            Variant::CutterRelaxed => "cutter_relaxed",
            Variant::ClassicCq => "classic_cq",
            Variant::SubgradientCq => "subgradient_cq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "landweber_sqne" => Variant::LandweberSqne,
            "cutter_relaxed" => Variant::CutterRelaxed,
            "classic_cq" => Variant::ClassicCq,
            "subgradient_cq" => Variant::SubgradientCq,
            other => return Err(Error::Parse(format!("unknown variant `{other}`"))),
        })
    }

    pub fn is_cutter(self) -> bool {
        self != Variant::LandweberSqne
    }
}

type LambdaFn = dyn Fn(usize) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum LambdaSchedule {
    Constant(f64),
    /// `a` on even iterations, `b` on odd ones.
    Alternating(f64, f64),
    /// Arbitrary schedule with its infimum and supremum.
    Custom {
        f: Arc<LambdaFn>,
        min: f64,
        max: f64,
    },
}

impl fmt::Debug for LambdaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSchedule::Constant(v) => write!(f, "constant:{v}"),
            LambdaSchedule::Alternating(a, b) => write!(f, "alternating:{a},{b}"),
            LambdaSchedule::Custom { min, max, .. } => write!(f, "custom[{min},{max}]"),
        }
    }
}

impl LambdaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            LambdaSchedule::Constant(v) => *v,
            LambdaSchedule::Alternating(a, b) => {
                if k.is_multiple_of(2) {
                    *a
                } else {
                    *b
                }
            }
            LambdaSchedule::Custom { f, .. } => f(k),
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            LambdaSchedule::Constant(v) => (*v, *v),
            LambdaSchedule::Alternating(a, b) => (a.min(*b), a.max(*b)),
            LambdaSchedule::Custom { min, max, .. } => (*min, *max),
        }
    }

    /// Parses `constant:v` or `alternating:a,b`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad lambda schedule `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match kind.trim() {
            "constant" => Ok(LambdaSchedule::Constant(num(rest)?)),
            "alternating" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                Ok(LambdaSchedule::Alternating(num(a)?, num(b)?))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub variant: Variant,
    pub sigma: SigmaMode,
    pub epsilon: f64,
    pub lambda: LambdaSchedule,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub seed: u64,
    /// Compute `d(x_k, F)` every `dist_every` iterations.
    pub dist_every: usize,
    /// Number of sampled points of `F` used for the running Fejér check.
    pub fejer_witnesses: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::LandweberSqne,
            sigma: SigmaMode::One,
            epsilon: 0.05,
            lambda: LambdaSchedule::Constant(1.0),
            max_iter: 10_000,
            stop_tol: 1e-10,
            seed: 0,
            dist_every: 1,
            fejer_witnesses: 4,
        }
    }
}

impl SolverConfig {
    pub fn lambda_bounds(&self) -> (f64, f64) {
        if self.variant.is_cutter() {
            (self.epsilon, 2.0 - self.epsilon)
        } else {
            (self.epsilon, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        let (lo, hi) = self.lambda_bounds();
        let (min, max) = self.lambda.range();
        if min < lo || max > hi {
            return Err(Error::InvalidParameter(format!(
                "lambda range [{min}, {max}] outside [{lo}, {hi}] for {}",
                self.variant.as_str()
            )));
        }
        if !(self.stop_tol > 0.0) || self.max_iter == 0 || self.dist_every == 0 {
            return Err(Error::InvalidParameter(
                "stop_tol, max_iter and dist_every must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Largest `ε` for which the schedule satisfies the variant's range;
    /// never below the configured `ε`.
    pub fn effective_epsilon(&self) -> f64 {
        let (min, max) = self.lambda.range();
        let eps = if self.variant.is_cutter() {
            min.min(2.0 - max)
        } else {
            min
        };
        eps.min(1.0 - f64::EPSILON).max(self.epsilon)
    }
}

/// `(S, T)` as used by the variant.
pub fn variant_operators(
    inst: &SCFPInstance,
    variant: Variant,
) -> Result<(OperatorRef, OperatorRef)> {
    Ok(match variant {
        Variant::LandweberSqne => (inst.s.clone(), inst.t.clone()),
        Variant::CutterRelaxed => {
            if !(inst.s.is_cutter() && inst.t.is_cutter()) {
                return Err(Error::InvalidParameter(
                    "cutter_relaxed requires S and T to be cutters".into(),
                ));
            }
            (inst.s.clone(), inst.t.clone())
        }
        Variant::ClassicCq => {
            let (c, q) = inst
                .sets
                .as_ref()
                .ok_or(Error::MissingOracle("sets C and Q"))?;
            (
                Arc::new(Projection::new(c.clone())) as OperatorRef,
                Arc::new(Projection::new(q.clone())) as OperatorRef,
            )
        }
        Variant::SubgradientCq => {
            let (c, q) = inst
                .functions
                .as_ref()
                .ok_or(Error::MissingOracle("functions c and q"))?;
            (
                Arc::new(SubgradientProjection::new(c.clone())) as OperatorRef,
                Arc::new(SubgradientProjection::new(q.clone())) as OperatorRef,
            )
        }
    })
}

/// SQNE constants `(ρ_S, ρ_T)` the convergence theory works with. Cutter
/// variants go through `U = Id + (2 − ε)(T − Id)`, which is `ε/(2 − ε)`-SQNE.
pub fn effective_rhos(inst: &SCFPInstance, config: &SolverConfig) -> Result<(f64, f64)> {
    let (s, t) = variant_operators(inst, config.variant)?;
    if config.variant.is_cutter() {
        let eps = config.effective_epsilon();
        Ok((s.sqne_rho(), relaxed_rho(1.0, 2.0 - eps)))
    } else {
        Ok((s.sqne_rho(), t.sqne_rho()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub step_norm: f64,
    pub dist_f: Option<f64>,
    pub ratio: Option<f64>,
    pub fejer_slack: f64,
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub label: String,
    pub variant: Variant,
    pub records: Vec<IterRecord>,
    pub final_x: DVector<f64>,
    pub final_dist: Option<f64>,
    pub converged: bool,
    /// `min{ρ_S, ρ_T}/2` for the strengthened Fejér inequality.
    pub fejer_coefficient: f64,
    pub witnesses: Vec<DVector<f64>>,
    pub exactness: Exactness,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// `x_k` for `k ≤ iterations()`.
    pub fn x(&self, k: usize) -> &DVector<f64> {
        if k < self.records.len() {
            &self.records[k].x
        } else {
            &self.final_x
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,step_norm,dist_F,ratio,fejer_slack,tau")?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{:.16e},{},{},{:.16e},{:.16e}",
                r.k,
                r.step_norm,
                opt(r.dist_f),
                opt(r.ratio),
                r.fejer_slack,
                r.sigma
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Runs the iteration from `x0` until the relative step norm falls below
/// `stop_tol` or `max_iter` steps have been taken.
pub fn run(
    inst: &SCFPInstance,
    config: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<IterationTrace> {
    config.validate()?;
    check_dim(inst.n(), x0.len())?;
    let (s, t) = variant_operators(inst, config.variant)?;
    let (rho_s, rho_t) = effective_rhos(inst, config)?;
    let radius = (x0 - &inst.witness).norm().max(1.0);
    let witnesses = inst.sample_solutions(config.fejer_witnesses, radius, config.seed)?;

    let a = &inst.map;
    let mut exactness = Exactness::Exact;
    let mut dist = |x: &DVector<f64>, k: usize| -> Result<Option<f64>> {
        if !k.is_multiple_of(config.dist_every) {
            return Ok(None);
        }
        let (d, e) = inst.solution_distance(x)?;
        exactness = exactness.and(e);
        Ok(Some(d))
    };

    let mut records: Vec<IterRecord> = Vec::new();
    let mut x = x0.clone();
    let mut dist_x = dist(&x, 0)?;
    let mut converged = false;
    for k in 0..config.max_iter {
        let lambda = config.lambda.at(k);
        let (lo, hi) = config.lambda_bounds();
        if !(lambda >= lo && lambda <= hi) {
            return Err(Error::InvalidParameter(format!(
                "lambda_{k} = {lambda} outside [{lo}, {hi}]"
            )));
        }
        let step = extrapolated_step(a, t.as_ref(), &config.sigma, lambda, &x)?;
        let next = s.apply(&step.point)?;
        let step_norm = (&next - &x).norm();
        let mut slack = f64::NEG_INFINITY;
        for z in &witnesses {
            slack = slack.max((&next - z).norm() - (&x - z).norm());
        }
        if slack > FEJER_ABORT {
            return Err(Error::SqneViolation {
                iteration: k,
                slack,
            });
        }
        let dist_next = dist(&next, k + 1)?;
        let ratio = match (dist_x, dist_next) {
            (Some(d0), Some(d1)) if d0 > 0.0 => Some(d1 / d0),
            _ => None,
        };
        let stop = step_norm <= config.stop_tol * (1.0 + x.norm());
        records.push(IterRecord {
            k,
            x: std::mem::replace(&mut x, next),
            step_norm,
            dist_f: dist_x,
            ratio,
            fejer_slack: slack,
            sigma: step.sigma,
            lambda,
        });
        dist_x = dist_next;
        if stop {
            converged = true;
            break;
        }
    }
    let final_dist = match dist_x {
        Some(d) => Some(d),
        None => Some(inst.solution_distance(&x)?.0),
    };
    Ok(IterationTrace {
        label: inst.label.clone(),
        variant: config.variant,
        records,
        final_x: x,
        final_dist,
        converged,
        fejer_coefficient: rho_s.min(rho_t) / 2.0,
        witnesses,
        exactness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FejerReport {
    /// `max (‖x_{k+1} − z‖ − ‖x_k − z‖)`
    pub worst_plain: f64,
    /// `max (‖x_{k+1} − z‖² − ‖x_k − z‖² + c‖x_{k+1} − x_k‖²)`
    pub worst_strengthened: f64,
    pub coefficient: f64,
    pub worst_iteration: Option<usize>,
    pub checked: usize,
}

impl FejerReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_plain <= tol && self.worst_strengthened <= tol
    }
}

pub fn fejer_audit(trace: &IterationTrace, witnesses: &[DVector<f64>]) -> FejerReport {
    let c = trace.fejer_coefficient;
    let mut report = FejerReport {
        worst_plain: f64::NEG_INFINITY,
        worst_strengthened: f64::NEG_INFINITY,
        coefficient: c,
        worst_iteration: None,
        checked: 0,
    };
    for k in 0..trace.iterations() {
        let (x, next) = (trace.x(k), trace.x(k + 1));
        let step2 = (next - x).norm_squared();
        for z in witnesses {
            let (a, b) = ((next - z).norm(), (x - z).norm());
            report.worst_plain = report.worst_plain.max(a - b);
            let strong = a * a - b * b + c * step2;
            if strong > report.worst_strengthened {
                report.worst_strengthened = strong;
                report.worst_iteration = Some(k);
            }
            report.checked += 1;
        }
    }
    if report.checked == 0 {
        report.worst_plain = 0.0;
        report.worst_strengthened = 0.0;
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRate {
    /// `max d(x_{k+1}, F)/d(x_k, F)` after the burn-in.
    pub max_ratio: f64,
    /// `exp` of the least-squares slope of `log d(x_k, F)`.
    pub fitted: f64,
    pub used: usize,
}

pub fn observed_rate(trace: &IterationTrace, burn_in: usize) -> Result<ObservedRate> {
    observed_rate_above(trace, burn_in, RATE_FLOOR)
}

/// [`observed_rate`] ignoring distances at or below `floor`, for distance
/// oracles whose error is larger than rounding.
pub fn observed_rate_above(
    trace: &IterationTrace,
    burn_in: usize,
    floor: f64,
) -> Result<ObservedRate> {
    let floor = floor.max(RATE_FLOOR);
    let usable = trace
        .records
        .iter()
        .filter(|r| r.dist_f.is_some_and(|d| d > floor))
        .count();
    let needed = burn_in + 10;
    if usable < needed {
        return Err(Error::InsufficientIterations {
            needed,
            available: usable,
        });
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut pts = Vec::new();
    for r in trace.records.iter().skip(burn_in) {
        let Some(d) = r.dist_f.filter(|d| *d > floor) else {
            continue;
        };
        pts.push((r.k as f64, d.ln()));
        if let Some(q) = r.ratio {
            max_ratio = max_ratio.max(q);
        }
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    let fitted = if sxx > 0.0 {
        (sxy / sxx).exp()
    } else {
        f64::NAN
    };
    Ok(ObservedRate {
        max_ratio,
        fitted,
        used: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub q: f64,
    pub violations: usize,
    /// `max (‖x_k − x∞‖ − 2 d(x₀, F) q^k)`
    pub worst_slack: f64,
    pub checked: usize,
}

pub fn tail_bound_check(trace: &IterationTrace, q: f64) -> Result<TailReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "q must lie in (0, 1), got {q}"
        )));
    }
    let d0 = trace
        .records
        .first()
        .and_then(|r| r.dist_f)
        .or(trace.final_dist)
        .ok_or(Error::MissingOracle("d(x_0, F)"))?;
    let x_inf = &trace.final_x;
    let mut report = TailReport {
        q,
        violations: 0,
        worst_slack: f64::NEG_INFINITY,
        checked: 0,
    };
    for k in 0..=trace.iterations() {
        let bound = 2.0 * d0 * q.powi(k as i32);
        let slack = (trace.x(k) - x_inf).norm() - bound;
        report.worst_slack = report.worst_slack.max(slack);
        if slack > 1e-8 {
            report.violations += 1;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixops::Identity;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn diag_instance() -> SCFPInstance {
        let a = LinearMap::diagonal(&[2.0, 1.0]).unwrap();
        let c = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), 0.0).unwrap();
        let q = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), -1.0).unwrap();
        SCFPInstance::new(
            "diag",
            a,
            Arc::new(Projection::new(c.clone())),
            Arc::new(Projection::new(q.clone())),
            v(&[-1.0, 0.0]),
        )
        .unwrap()
        .with_sets(c, q)
        .unwrap()
    }

    #[test]
    fn starting_at_the_witness_stops_immediately() {
        let inst = diag_instance();
        let tr = run(&inst, &SolverConfig::default(), &inst.witness.clone()).unwrap();
        assert_eq!(tr.iterations(), 1);
        assert!(tr.converged);
        assert!(tr.records[0].step_norm <= 1e-10);
    }

    #[test]
    fn identity_reduces_to_single_projection() {
        let a = LinearMap::identity(2).unwrap();
        let q = ConvexSetSpec::halfspace(v(&[1.0, 1.0]), 0.0).unwrap();
        let inst = SCFPInstance::new(
            "id",
            a,
            Arc::new(Identity::new(2)),
            Arc::new(Projection::new(q.clone())),
            v(&[-1.0, -1.0]),
        )
        .unwrap();
        let x0 = v(&[2.0, 1.0]);
        let tr = run(&inst, &SolverConfig::default(), &x0).unwrap();
        assert_relative_eq!(tr.x(1), &q.project(&x0).unwrap(), epsilon = 1e-15);
        assert_eq!(tr.records[1].step_norm, 0.0);
        assert_eq!(tr.final_dist, Some(0.0));
    }

    #[test]
    fn corrupted_witness_is_rejected() {
        let inst = diag_instance().with_witness_unchecked(v(&[1.0, 0.0]));
        assert!(matches!(
            inst.validate(),
            Err(Error::InstanceInvariant {
                invariant: "witness_fix_s",
                ..
            })
        ));
    }

    #[test]
    fn lambda_range_is_enforced() {
        let inst = diag_instance();
        let cfg = SolverConfig {
            lambda: LambdaSchedule::Constant(1.5),
            ..Default::default()
        };
        assert!(run(&inst, &cfg, &v(&[1.0, 1.0])).is_err());
        let cfg = SolverConfig {
            variant: Variant::ClassicCq,
            lambda: LambdaSchedule::Constant(1.5),
            ..Default::default()
        };
        assert!(run(&inst, &cfg, &v(&[1.0, 1.0])).is_ok());
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(LambdaSchedule::parse("constant:0.5").unwrap().at(3), 0.5);
        let alt = LambdaSchedule::parse("alternating:0.5, 1.5").unwrap();
        assert_eq!((alt.at(0), alt.at(1)), (0.5, 1.5));
        assert!(LambdaSchedule::parse("zigzag:1").is_err());
    }

    fn synthetic(dists: &[f64]) -> IterationTrace {
        let records = dists
            .iter()
            .enumerate()
            .map(|(k, d)| IterRecord {
                k,
                x: v(&[*d]),
                step_norm: 0.0,
                dist_f: Some(*d),
                ratio: dists.get(k + 1).map(|n| n / d),
                fejer_slack: 0.0,
                sigma: 1.0,
                lambda: 1.0,
            })
            .collect();
        IterationTrace {
            label: "synthetic".into(),
            variant: Variant::LandweberSqne,
            records,
            final_x: v(&[0.0]),
            final_dist: Some(0.0),
            converged: true,
            fejer_coefficient: 0.5,
            witnesses: vec![v(&[0.0])],
            exactness: Exactness::Exact,
        }
    }

    #[test]
    fn halving_trace_rate() {
        let d: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        let r = observed_rate(&synthetic(&d), 5).unwrap();
        assert_relative_eq!(r.max_ratio, 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.fitted, 0.5, epsilon = 1e-12);
        assert!(observed_rate(&synthetic(&[0.0; 30]), 0).is_err());
    }

    #[test]
    fn tail_bound_sensitivity() {
        let d: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        let tr = synthetic(&d);
        assert_eq!(tail_bound_check(&tr, 0.5).unwrap().violations, 0);
        assert!(tail_bound_check(&tr, 0.3).unwrap().violations > 0);
    }

    #[test]
    fn fejer_audit_detects_perturbation() {
        let inst = diag_instance();
        let mut tr = run(&inst, &SolverConfig::default(), &v(&[3.0, 1.0])).unwrap();
        let w = tr.witnesses.clone();
        assert!(fejer_audit(&tr, &w).passed(1e-10));
        assert!(tr.iterations() >= 2);
        tr.records[1].x[0] += 5.0;
        assert!(!fejer_audit(&tr, &w).passed(1e-10));
    }

    #[test]
    fn csv_shape() {
        let inst = diag_instance();
        let tr = run(&inst, &SolverConfig::default(), &v(&[3.0, 1.0])).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("k,step_norm,dist_F,ratio,fejer_slack,tau")
        );
        assert_eq!(lines.count(), tr.iterations());
    }
}
