//! Reference projections onto intersections of convex sets.
//!
//! These are the distance oracles every audit in the crate is measured
//! against: an exact active-set solver for small polyhedra, Dykstra's
//! algorithm for general intersections, and Haugazeau's scheme for sublevel
//! sets that only expose a subgradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::fixops::functions::ConvexFunction;
use crate::fixops::sets::{ConvexSetSpec, SetKind};

/// Whether a projection or distance came from a closed form or from an
/// iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    Exact,
    Iterative,
}

impl Exactness {
    pub fn and(self, other: Exactness) -> Exactness {
        if self == Exactness::Exact && other == Exactness::Exact {
            Exactness::Exact
        } else {
            Exactness::Iterative
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Exactness::Exact => "exact",
            Exactness::Iterative => "oracle-by-iteration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykstraParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DykstraParams {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 100_000,
        }
    }
}

/// Dykstra's alternating projection for `count` sets, each given by
/// `project(i, x)`. Converges to the projection of `x0` onto the
/// intersection.
pub fn dykstra<P>(
    count: usize,
    project: P,
    x0: &DVector<f64>,
    params: DykstraParams,
) -> Result<DVector<f64>>
where
    P: Fn(usize, &DVector<f64>) -> Result<DVector<f64>>,
{
    if count == 0 {
        return Ok(x0.clone());
    }
    if count == 1 {
        return project(0, x0);
    }
    let n = x0.len();
    let scale = x0.norm().max(1.0);
    let mut x = x0.clone();
    let mut increments = vec![DVector::<f64>::zeros(n); count];
    for _ in 0..params.max_iter {
        let start = x.clone();
        let mut inc_change = 0.0_f64;
        for (i, inc) in increments.iter_mut().enumerate() {
            let shifted = &x + &*inc;
            let y = project(i, &shifted)?;
            let new_inc = shifted - &y;
            inc_change += (&new_inc - &*inc).norm_squared();
            *inc = new_inc;
            x = y;
        }
        let change = (&x - &start).norm();
        if change <= params.tol * scale && inc_change.sqrt() <= params.tol * scale {
            return Ok(x);
        }
    }
    Err(Error::OracleFailure(format!(
        "Dykstra did not reach tolerance {:e} within {} sweeps",
        params.tol, params.max_iter
    )))
}

/// Exact projection onto `{y : ⟨aᵢ, y⟩ ≤ bᵢ}` by enumerating candidate
/// active sets. The projection is the nearest feasible candidate.
pub fn project_polyhedron_exact(
    normals: &[DVector<f64>],
    offsets: &[f64],
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let count = normals.len();
    if count > 12 {
        return Err(Error::InvalidParameter(format!(
            "exact polyhedral projection supports at most 12 halfspaces, got {count}"
        )));
    }
    let n = x.len();
    let feasible = |y: &DVector<f64>| {
        normals.iter().zip(offsets).all(|(a, &b)| {
            let slack = 1e-12 * (1.0 + b.abs() + a.norm() * y.norm());
            a.dot(y) - b <= slack
        })
    };
    if feasible(x) {
        return Ok(x.clone());
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1u32 << count) {
        let active: Vec<usize> = (0..count).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let rows = DMatrix::from_fn(active.len(), n, |r, c| normals[active[r]][c]);
        let gram = &rows * rows.transpose();
        let Some(chol) = gram.clone().cholesky() else {
            continue;
        };
        let residual = DVector::from_fn(active.len(), |r, _| {
            normals[active[r]].dot(x) - offsets[active[r]]
        });
        let lambda = chol.solve(&residual);
        let y = x - rows.tr_mul(&lambda);
        if !feasible(&y) {
            continue;
        }
        let d = (&y - x).norm();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.map(|(_, y)| y)
        .ok_or_else(|| Error::OracleFailure("empty polyhedron".into()))
}

/// Projection onto a finite intersection of [`ConvexSetSpec`]s.
#[derive(Debug, Clone)]
pub struct Intersection {
    sets: Vec<ConvexSetSpec>,
    dim: Option<usize>,
    params: DykstraParams,
}

impl Intersection {
    pub fn new(sets: Vec<ConvexSetSpec>) -> Result<Self> {
        let dim = sets.first().map(ConvexSetSpec::dim);
        if let Some(d) = dim {
            for s in &sets {
                check_dim(d, s.dim())?;
            }
        }
        Ok(Self {
            sets,
            dim,
            params: DykstraParams::default(),
        })
    }

    pub fn with_params(mut self, params: DykstraParams) -> Self {
        self.params = params;
        self
    }

    pub fn sets(&self) -> &[ConvexSetSpec] {
        &self.sets
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        for s in &self.sets {
            if !s.contains(x, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn halfspaces(&self) -> Option<(Vec<DVector<f64>>, Vec<f64>)> {
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for s in &self.sets {
            match s.kind() {
                SetKind::Halfspace { normal, offset } => {
                    normals.push(normal.clone());
                    offsets.push(*offset);
                }
                _ => return None,
            }
        }
        Some((normals, offsets))
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Exactness)> {
        if let Some(d) = self.dim {
            check_dim(d, x.len())?;
        }
        match self.sets.len() {
            0 => return Ok((x.clone(), Exactness::Exact)),
            1 => return self.sets[0].project_flagged(x),
            _ => {}
        }
        if let Some((normals, offsets)) = self.halfspaces() {
            if normals.len() <= 8 {
                return Ok((
                    project_polyhedron_exact(&normals, &offsets, x)?,
                    Exactness::Exact,
                ));
            }
        }
        let p = dykstra(
            self.sets.len(),
            |i, y| self.sets[i].project(y),
            x,
            self.params,
        )?;
        Ok((p, Exactness::Iterative))
    }

    /// Projection forced through Dykstra, used to cross-check closed forms.
    pub fn project_dykstra(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        dykstra(
            self.sets.len(),
            |i, y| self.sets[i].project(y),
            x,
            self.params,
        )
    }

    pub fn distance(&self, x: &DVector<f64>) -> Result<(f64, Exactness)> {
        let (p, e) = self.project(x)?;
        Ok(((x - p).norm(), e))
    }
}

/// Haugazeau-type outer approximation: strongly convergent to the
/// projection of `x` onto `S(f, 0)` using subgradient projections only.
pub fn haugazeau_sublevel(f: &dyn ConvexFunction, x: &DVector<f64>) -> Result<DVector<f64>> {
    const MAX_ITER: usize = 100_000;
    let anchor = x.clone();
    let mut y = x.clone();
    for _ in 0..MAX_ITER {
        let value = f.value(&y);
        if value <= 0.0 {
            return Ok(y);
        }
        let g = f.subgradient(&y);
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return Err(Error::InconsistentSubgradient { value });
        }
        let z = &y - &g * (value / g2);
        if (&z - &y).norm() <= 1e-10 * (1.0 + y.norm()) {
            return Ok(z);
        }
        y = haugazeau_step(&anchor, &y, &z)?;
    }
    Err(Error::OracleFailure(
        "sublevel projection did not converge".into(),
    ))
}

/// Projection of `x` onto `H(x, y) ∩ H(y, z)` where
/// `H(a, b) = {u : ⟨u − b, a − b⟩ ≤ 0}`.
fn haugazeau_step(x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    let xy = x - y;
    let yz = y - z;
    let pi = xy.dot(&yz);
    let mu = xy.norm_squared();
    let nu = yz.norm_squared();
    let rho = mu * nu - pi * pi;
    let tiny = 1e-300;
    if rho <= tiny * (1.0 + mu * nu) {
        if pi >= 0.0 {
            return Ok(z.clone());
        }
        return Err(Error::OracleFailure("empty Haugazeau intersection".into()));
    }
    if pi * nu >= rho {
        Ok(x + (z - y) * (1.0 + pi / nu))
    } else {
        Ok(y + (xy * pi + (z - y) * mu) * (nu / rho))
    }
}
