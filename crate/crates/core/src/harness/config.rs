//! TOML suite and run configurations.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use super::io::read_matrix;
use super::recipes::{custom_instance, generate_instance, GeneratedInstance};
use crate::error::{Error, Result};
use crate::fixops::ConvexSetSpec;
use crate::landweber::SigmaMode;
use crate::solver::{LambdaSchedule, SolverConfig, Variant};

fn default_workers() -> usize {
    1
}

/// Solver settings as written in a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub label: Option<String>,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_sigma")]
    pub sigma: String,
    pub epsilon: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: String,
    pub max_iter: Option<usize>,
    pub stop_tol: Option<f64>,
    pub dist_every: Option<usize>,
    pub fejer_witnesses: Option<usize>,
    pub seed: Option<u64>,
}

fn default_variant() -> String {
    "landweber_sqne".into()
}

fn default_sigma() -> String {
    "one".into()
}

fn default_lambda() -> String {
    "constant:1".into()
}

impl SolverSection {
    pub fn to_config(&self, seed: u64) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let sigma = match self.sigma.as_str() {
            "one" => SigmaMode::One,
            "tau" => SigmaMode::Tau,
            other => return Err(Error::Parse(format!("unknown sigma mode `{other}`"))),
        };
        let cfg = SolverConfig {
            variant: Variant::parse(&self.variant)?,
            sigma,
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            lambda: LambdaSchedule::parse(&self.lambda)?,
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            stop_tol: self.stop_tol.unwrap_or(d.stop_tol),
            seed: self.seed.unwrap_or(seed),
            dist_every: self.dist_every.unwrap_or(d.dist_every),
            fejer_witnesses: self.fejer_witnesses.unwrap_or(d.fejer_witnesses),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self, idx: usize) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}{idx}", self.variant))
    }
}

/// A set given by its parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetSection {
    Halfspace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl SetSection {
    pub fn to_set(&self) -> Result<ConvexSetSpec> {
        let v = |xs: &[f64]| DVector::from_column_slice(xs);
        match self {
            SetSection::Halfspace { normal, offset } => {
                ConvexSetSpec::halfspace(v(normal), *offset)
            }
            SetSection::Ball { center, radius } => ConvexSetSpec::ball(v(center), *radius),
            SetSection::Box { lo, hi } => ConvexSetSpec::bounding_box(v(lo), v(hi)),
        }
    }
}

/// Either a recipe with dimensions or a matrix file with explicit sets.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub label: Option<String>,
    pub recipe: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub matrix: Option<PathBuf>,
    pub c: Option<SetSection>,
    pub q: Option<SetSection>,
    /// Replaces the witness. For a recipe the replacement is not checked at
    /// load time, so the suite audit reports it.
    pub witness: Option<Vec<f64>>,
}

impl InstanceSection {
    /// `base` resolves a relative matrix path.
    pub fn build(&self, seed: u64, base: &Path) -> Result<GeneratedInstance> {
        let mut g = match (&self.recipe, &self.matrix) {
            (Some(recipe), None) => {
                let (n, m) = self
                    .n
                    .zip(self.m)
                    .ok_or_else(|| Error::Parse("recipe instances need `n` and `m`".into()))?;
                generate_instance(recipe, n, m, seed)?
            }
            (None, Some(path)) => {
                let map = read_matrix(&base.join(path))?;
                let (c, q) =
                    self.c.as_ref().zip(self.q.as_ref()).ok_or_else(|| {
                        Error::Parse("matrix instances need sets `c` and `q`".into())
                    })?;
                let w = self
                    .witness
                    .as_ref()
                    .ok_or_else(|| Error::Parse("matrix instances need a `witness`".into()))?;
                let label = self.label.clone().unwrap_or_else(|| "matrix".into());
                return custom_instance(
                    label,
                    map,
                    c.to_set()?,
                    q.to_set()?,
                    DVector::from_column_slice(w),
                    None,
                    seed,
                );
            }
            _ => {
                return Err(Error::Parse(
                    "an instance needs exactly one of `recipe` and `matrix`".into(),
                ))
            }
        };
        if let Some(label) = &self.label {
            g.instance.label = label.clone();
        }
        if let Some(w) = &self.witness {
            if w.len() != g.instance.n() {
                return Err(Error::DimensionMismatch {
                    expected: g.instance.n(),
                    got: w.len(),
                });
            }
            g.instance = g
                .instance
                .with_witness_unchecked(DVector::from_column_slice(w));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, rename = "instance")]
    pub instances: Vec<InstanceSection>,
    #[serde(default, rename = "config")]
    pub configs: Vec<SolverSection>,
    /// Directory for relative matrix paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::parse(&std::fs::read_to_string(path)?)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    /// Seed of instance `idx`: its own seed (default `idx`) offset by the
    /// suite seed.
    pub fn instance_seed(&self, idx: usize) -> u64 {
        let own = self.instances[idx].seed.unwrap_or(idx as u64);
        self.seed.wrapping_mul(1_000_003).wrapping_add(own)
    }
}

/// Single instance and solver, for `solve` and `certify`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub instance: InstanceSection,
    pub solver: SolverSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Self::parse(&std::fs::read_to_string(path)?)?;
        r.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(r)
    }

    pub fn build(&self) -> Result<(GeneratedInstance, SolverConfig)> {
        let seed = self.instance.seed.unwrap_or(self.seed);
        let g = self.instance.build(seed, &self.base_dir)?;
        Ok((g, self.solver.to_config(self.seed)?))
    }
}
