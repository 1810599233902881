//! Batch runs with per-entry traces, regularity reports and audits.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::SuiteConfig;
use super::recipes::GeneratedInstance;
use crate::error::{Error, Result};
use crate::oracle::Exactness;
use crate::regularity::{Estimate, ModuliInputs, RegularityEstimate};
use crate::solver::{
    effective_rhos, fejer_audit, observed_rate_above, run, tail_bound_check, SolverConfig, Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

/// Slack allowed in the strengthened Fejér inequality.
pub const FEJER_TOL: f64 = 1e-10;
/// Distances below this are not used for rates when `d(x, F)` comes from
/// Dykstra rather than a closed form.
pub const ITERATIVE_RATE_FLOOR: f64 = 1e-8;

/// Regularity report for `g` under `config`, with the moduli of the
/// operators the variant actually iterates with.
pub fn certify(g: &GeneratedInstance, config: &SolverConfig) -> Result<RegularityEstimate> {
    let inst = &g.instance;
    let (rho_s, rho_t) = effective_rhos(inst, config)?;
    let truth = &g.truth;
    let (delta_s, delta_t) = match config.variant {
        Variant::LandweberSqne | Variant::CutterRelaxed => (truth.delta_s, truth.delta_t),
        Variant::ClassicCq => (Estimate::theoretical(1.0), Estimate::theoretical(1.0)),
        Variant::SubgradientCq => truth
            .delta_sub
            .ok_or(Error::MissingOracle("functions c and q"))?,
    };
    let mut notes = Vec::new();
    let (delta_t, epsilon) = if config.variant.is_cutter() {
        // U = Id + (2 − ε)(T − Id) with step λ/(2 − ε).
        let eps = config.effective_epsilon();
        notes.push(format!("cutter reparametrization with epsilon = {eps}"));
        (
            Estimate {
                value: (2.0 - eps) * delta_t.value,
                provenance: delta_t.provenance,
            },
            config.lambda.range().0 / (2.0 - eps),
        )
    } else {
        (delta_t, config.effective_epsilon())
    };
    let mut est = RegularityEstimate::assemble(
        &inst.map,
        ModuliInputs {
            center: inst.witness.clone(),
            radius: truth.radius,
            rho_s,
            rho_t,
            epsilon,
            delta_s,
            delta_t,
            kappa1: truth.kappa1,
            kappa2: truth.kappa2,
            seed: g.seed,
        },
    )?;
    est.notes = notes;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub instance: String,
    pub config: String,
    pub variant: String,
    pub iterations: usize,
    pub final_dist: Option<f64>,
    pub observed_q: Option<f64>,
    pub theoretical_q: Option<f64>,
    /// `None` when either rate is unavailable.
    pub bound_satisfied: Option<bool>,
    pub failed_audits: Vec<String>,
}

impl SummaryLine {
    pub const HEADER: &'static str =
        "instance,config,variant,iterations,final_dist_F,observed_q,theoretical_q,bound_satisfied,audits";

    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let bound = match self.bound_satisfied {
            Some(true) => "yes",
            Some(false) => "no",
            None => "n/a",
        };
        let audits = if self.failed_audits.is_empty() {
            "ok".to_string()
        } else {
            self.failed_audits.join(";")
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.config,
            self.variant,
            self.iterations,
            num(self.final_dist),
            num(self.observed_q),
            num(self.theoretical_q),
            bound,
            audits
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub entry: usize,
    pub audit: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutcome {
    pub exit_code: i32,
    pub lines: Vec<SummaryLine>,
    pub failures: Vec<AuditFailure>,
    /// Set when the suite could not be run at all.
    pub input_error: Option<String>,
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Entry<'a> {
    idx: usize,
    inst: &'a GeneratedInstance,
    config: SolverConfig,
    config_label: String,
}

fn run_entry(e: &Entry<'_>, out: &Path) -> Result<(SummaryLine, Vec<AuditFailure>)> {
    let inst = &e.inst.instance;
    let mut line = SummaryLine {
        instance: inst.label.clone(),
        config: e.config_label.clone(),
        variant: e.config.variant.as_str().to_string(),
        iterations: 0,
        final_dist: None,
        observed_q: None,
        theoretical_q: None,
        bound_satisfied: None,
        failed_audits: Vec::new(),
    };
    let mut failures = Vec::new();
    let mut fail = |line: &mut SummaryLine, audit: String, detail: String| {
        line.failed_audits.push(audit.clone());
        failures.push(AuditFailure {
            entry: e.idx,
            audit,
            detail,
        });
    };

    if let Err(err) = inst.validate() {
        let name = match &err {
            Error::InstanceInvariant { invariant, .. } => *invariant,
            _ => "instance",
        };
        fail(&mut line, name.to_string(), err.to_string());
        return Ok((line, failures));
    }

    let stem = format!(
        "{:03}_{}_{}",
        e.idx,
        file_stem(&inst.label),
        file_stem(&e.config_label)
    );
    let trace = match run(inst, &e.config, &e.inst.x0) {
        Ok(t) => t,
        Err(err @ Error::SqneViolation { .. }) => {
            fail(&mut line, "fejer".into(), err.to_string());
            return Ok((line, failures));
        }
        Err(err @ Error::InvalidParameter(_)) => return Err(err),
        Err(err) => {
            fail(&mut line, "solver".into(), err.to_string());
            return Ok((line, failures));
        }
    };
    std::fs::write(out.join(format!("{stem}.csv")), trace.to_csv())?;
    line.iterations = trace.iterations();
    line.final_dist = trace.final_dist;

    let fejer = fejer_audit(&trace, &trace.witnesses);
    if !fejer.passed(FEJER_TOL) {
        fail(
            &mut line,
            "fejer".into(),
            format!(
                "strengthened slack {:e} at iteration {:?}",
                fejer.worst_strengthened, fejer.worst_iteration
            ),
        );
    }

    let floor = match trace.exactness {
        Exactness::Exact => 0.0,
        Exactness::Iterative => ITERATIVE_RATE_FLOOR,
    };
    line.observed_q = observed_rate_above(&trace, 0, floor)
        .ok()
        .map(|r| r.max_ratio);

    let report = match certify(e.inst, &e.config) {
        Ok(est) => {
            line.theoretical_q = Some(est.q_rate.value);
            est.to_report()
        }
        Err(err) => format!("error: {err}\n"),
    };
    std::fs::write(out.join(format!("{stem}_regularity.txt")), report)?;

    if let (Some(obs), Some(q)) = (line.observed_q, line.theoretical_q) {
        let ok = obs <= q;
        line.bound_satisfied = Some(ok);
        if !ok {
            fail(
                &mut line,
                "rate_bound".into(),
                format!("observed q {obs} > theoretical q {q}"),
            );
        }
    }
    if let Some(q) = line.theoretical_q {
        // q rounds to 1 when Γ is tiny; the tail bound is then vacuous.
        if trace.converged && q < 1.0 {
            let tail = tail_bound_check(&trace, q)?;
            if tail.violations > 0 {
                fail(
                    &mut line,
                    "tail_bound".into(),
                    format!(
                        "{} violations, worst slack {:e}",
                        tail.violations, tail.worst_slack
                    ),
                );
            }
        }
    }
    Ok((line, failures))
}

fn input_error(msg: String) -> SuiteOutcome {
    SuiteOutcome {
        exit_code: EXIT_INPUT,
        input_error: Some(msg),
        ..Default::default()
    }
}

/// Runs every (instance, config) pair, writes `summary.csv` and returns the
/// exit code: 0 when every audit passes, 2 on an audit failure, 3 when the
/// suite cannot be run.
pub fn run_suite(suite: &SuiteConfig, out: &Path) -> SuiteOutcome {
    if let Err(e) = std::fs::create_dir_all(out) {
        return input_error(format!("cannot create {}: {e}", out.display()));
    }
    let mut configs = Vec::new();
    for (j, c) in suite.configs.iter().enumerate() {
        match c.to_config(suite.seed) {
            Ok(cfg) => configs.push((c.label(j), cfg)),
            Err(e) => return input_error(format!("config {j}: {e}")),
        }
    }

    let mut outcome = SuiteOutcome::default();
    let mut instances = Vec::new();
    for (i, spec) in suite.instances.iter().enumerate() {
        match spec.build(suite.instance_seed(i), &suite.base_dir) {
            Ok(g) => instances.push(Some(g)),
            Err(e @ Error::InstanceInvariant { .. }) => {
                let audit = match &e {
                    Error::InstanceInvariant { invariant, .. } => invariant.to_string(),
                    _ => unreachable!(),
                };
                outcome.failures.push(AuditFailure {
                    entry: i,
                    audit,
                    detail: e.to_string(),
                });
                instances.push(None);
            }
            Err(e) => return input_error(format!("instance {i}: {e}")),
        }
    }

    let mut entries = Vec::new();
    for g in instances.iter().flatten() {
        for (label, cfg) in &configs {
            entries.push(Entry {
                idx: entries.len(),
                inst: g,
                config: cfg.clone(),
                config_label: label.clone(),
            });
        }
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(suite.workers.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => return input_error(format!("thread pool: {e}")),
    };
    let results: Vec<Result<(SummaryLine, Vec<AuditFailure>)>> =
        pool.install(|| entries.par_iter().map(|e| run_entry(e, out)).collect());

    for r in results {
        match r {
            Ok((line, failures)) => {
                outcome.lines.push(line);
                outcome.failures.extend(failures);
            }
            Err(e) => return input_error(e.to_string()),
        }
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "{}", SummaryLine::HEADER);
    for line in &outcome.lines {
        let _ = writeln!(summary, "{}", line.to_csv());
    }
    if let Err(e) = std::fs::write(out.join("summary.csv"), summary) {
        return input_error(format!("cannot write summary: {e}"));
    }
    outcome.exit_code = if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_AUDIT
    };
    outcome
}
