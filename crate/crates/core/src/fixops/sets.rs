//! Closed convex sets with Euclidean projections.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::functions::{ClosureFunction, FunctionRef};
use crate::error::{check_dim, Error, Result};
use crate::linop::LinearMap;
use crate::oracle::{self, Exactness};

#[derive(Clone)]
pub enum SetKind {
    /// `{x : ⟨a, x⟩ ≤ b}`
    Halfspace {
        normal: DVector<f64>,
        offset: f64,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    /// `{x : Mx = d}`; `pinv` is the cached pseudo-inverse of `M`.
    Affine {
        matrix: DMatrix<f64>,
        rhs: DVector<f64>,
        pinv: DMatrix<f64>,
    },
    /// `S(f, 0) = {x : f(x) ≤ 0}`
    Sublevel(FunctionRef),
}

#[derive(Clone)]
pub struct ConvexSetSpec {
    kind: SetKind,
    dim: usize,
}

impl fmt::Debug for ConvexSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SetKind::Halfspace { normal, offset } => f
                .debug_struct("Halfspace")
                .field("normal", &normal.as_slice())
                .field("offset", offset)
                .finish(),
            SetKind::Ball { center, radius } => f
                .debug_struct("Ball")
                .field("center", &center.as_slice())
                .field("radius", radius)
                .finish(),
            SetKind::Box { lo, hi } => f
                .debug_struct("Box")
                .field("lo", &lo.as_slice())
                .field("hi", &hi.as_slice())
                .finish(),
            SetKind::Affine { matrix, rhs, .. } => f
                .debug_struct("Affine")
                .field("shape", &matrix.shape())
                .field("rhs", &rhs.as_slice())
                .finish(),
            SetKind::Sublevel(func) => f.debug_tuple("Sublevel").field(func).finish(),
        }
    }
}

impl ConvexSetSpec {
    pub fn halfspace(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if !(normal.norm() > 0.0) || !offset.is_finite() {
            return Err(Error::InvalidParameter(
                "halfspace requires a nonzero normal".into(),
            ));
        }
        let dim = normal.len();
        Ok(Self {
            kind: SetKind::Halfspace { normal, offset },
            dim,
        })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let dim = center.len();
        Ok(Self {
            kind: SetKind::Ball { center, radius },
            dim,
        })
    }

    pub fn bounding_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter(
                "box requires lo <= hi componentwise".into(),
            ));
        }
        let dim = lo.len();
        Ok(Self {
            kind: SetKind::Box { lo, hi },
            dim,
        })
    }

    pub fn affine(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        check_dim(matrix.nrows(), rhs.len())?;
        let pinv = matrix
            .clone()
            .pseudo_inverse(1e-12 * matrix.norm().max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let residual = (&matrix * (&pinv * &rhs) - &rhs).norm();
        if residual > 1e-10 * (1.0 + rhs.norm()) {
            return Err(Error::InvalidParameter(format!(
                "inconsistent affine system (residual {residual:e})"
            )));
        }
        let dim = matrix.ncols();
        Ok(Self {
            kind: SetKind::Affine { matrix, rhs, pinv },
            dim,
        })
    }

    pub fn sublevel(f: FunctionRef) -> Self {
        let dim = f.dim();
        Self {
            kind: SetKind::Sublevel(f),
            dim,
        }
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_halfspace(&self) -> bool {
        matches!(self.kind, SetKind::Halfspace { .. })
    }

    /// Euclidean projection. Sublevel sets without a closed form fall back
    /// to an iterative solve; use [`Self::project_flagged`] to see which.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.project_flagged(x).map(|(p, _)| p)
    }

    pub fn project_flagged(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Exactness)> {
        check_dim(self.dim, x.len())?;
        let exact = |p| Ok((p, Exactness::Exact));
        match &self.kind {
            SetKind::Halfspace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess <= 0.0 {
                    exact(x.clone())
                } else {
                    exact(x - normal * (excess / normal.norm_squared()))
                }
            }
            SetKind::Ball { center, radius } => {
                let d = x - center;
                let norm = d.norm();
                if norm <= *radius {
                    exact(x.clone())
                } else {
                    exact(center + d * (radius / norm))
                }
            }
            SetKind::Box { lo, hi } => exact(x.zip_zip_map(lo, hi, |v, l, h| v.clamp(l, h))),
            SetKind::Affine {
                matrix, rhs, pinv, ..
            } => exact(x - pinv * (matrix * x - rhs)),
            SetKind::Sublevel(f) => {
                if f.value(x) <= 0.0 {
                    return exact(x.clone());
                }
                if let Some(p) = f.sublevel_projection(x) {
                    return exact(p);
                }
                if let Some(sets) = f.sublevel_sets() {
                    return oracle::Intersection::new(sets)?.project(x);
                }
                oracle::haugazeau_sublevel(f.as_ref(), x).map(|p| (p, Exactness::Iterative))
            }
        }
    }

    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    /// Membership with an absolute tolerance on the defining residual.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        Ok(match &self.kind {
            SetKind::Halfspace { normal, offset } => normal.dot(x) - offset <= tol * normal.norm(),
            SetKind::Ball { center, radius } => (x - center).norm() <= radius + tol,
            SetKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            SetKind::Affine { matrix, rhs, .. } => (matrix * x - rhs).norm() <= tol,
            SetKind::Sublevel(f) => f.value(x) <= tol,
        })
    }

    /// `{x : Ax ∈ self}` as an intersection of sets in the domain of `A`.
    ///
    /// A ball pulls back to the sublevel set of `‖Ax − c‖² − r²`, whose
    /// projection is iterative. Returns `None` when the preimage is empty.
    pub fn pullback(&self, map: &LinearMap) -> Option<Vec<ConvexSetSpec>> {
        if map.rows() != self.dim {
            return None;
        }
        let scale = map.op_norm();
        let pull_halfspace = |a: &DVector<f64>, b: f64| -> Option<Option<ConvexSetSpec>> {
            let pulled = map.apply_adjoint(a).ok()?;
            if pulled.norm() <= 1e-14 * scale * a.norm() {
                // ⟨a, Ax⟩ = 0 for every x: whole space or empty.
                return if b >= 0.0 { Some(None) } else { None };
            }
            Some(Some(ConvexSetSpec::halfspace(pulled, b).ok()?))
        };
        match &self.kind {
            SetKind::Halfspace { normal, offset } => {
                Some(pull_halfspace(normal, *offset)?.into_iter().collect())
            }
            SetKind::Box { lo, hi } => {
                let mut out = Vec::new();
                for i in 0..self.dim {
                    let mut e = DVector::zeros(self.dim);
                    e[i] = 1.0;
                    out.extend(pull_halfspace(&e, hi[i])?);
                    e[i] = -1.0;
                    out.extend(pull_halfspace(&e, -lo[i])?);
                }
                Some(out)
            }
            SetKind::Affine { matrix, rhs, .. } => {
                let composed = matrix * map.entries();
                Some(vec![ConvexSetSpec::affine(composed, rhs.clone()).ok()?])
            }
            SetKind::Ball { center, radius } => {
                let gap = (center - map.project_onto_range(center).ok()?).norm();
                if gap > *radius {
                    return None;
                }
                let r2 = radius * radius;
                let a = map.entries().clone();
                let c = center.clone();
                let (a1, c1, a2, c2) = (a.clone(), c.clone(), a.clone(), c.clone());
                let at = a.transpose();
                let f = ClosureFunction::new(
                    map.cols(),
                    move |x| (&a1 * x - &c1).norm_squared() - r2,
                    move |x| &at * (&a2 * x - &c2) * 2.0,
                    move |z, rad| 2.0 * scale * ((&a * z - &c).norm() + scale * rad),
                );
                Some(vec![ConvexSetSpec::sublevel(Arc::new(f))])
            }
            SetKind::Sublevel(f) => f.sublevel_pullback(map),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixops::functions::QuadraticBall;
    use crate::sampling::Sampler;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn sample_sets() -> Vec<ConvexSetSpec> {
        vec![
            ConvexSetSpec::halfspace(v(&[1.0, 2.0, -1.0]), 0.5).unwrap(),
            ConvexSetSpec::ball(v(&[0.2, 0.0, -0.3]), 1.2).unwrap(),
            ConvexSetSpec::bounding_box(v(&[-1.0, -0.5, 0.0]), v(&[1.0, 0.5, 2.0])).unwrap(),
            ConvexSetSpec::affine(
                DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0]),
                v(&[1.0, 0.0]),
            )
            .unwrap(),
            ConvexSetSpec::sublevel(Arc::new(
                QuadraticBall::new(v(&[0.0, 1.0, 0.0]), 0.8).unwrap(),
            )),
        ]
    }

    #[test]
    fn closed_form_examples() {
        let h = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(h.project(&v(&[2.0, 3.0])).unwrap(), v(&[0.0, 3.0]));
        assert_eq!(h.project(&v(&[-2.0, 3.0])).unwrap(), v(&[-2.0, 3.0]));
        let b = ConvexSetSpec::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(
            b.project(&v(&[3.0, 4.0])).unwrap(),
            v(&[0.6, 0.8]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ball_projection_matches_grid_minimization() {
        // Brute-force: minimize ‖x − y‖ over a fine polar grid of the disc.
        let b = ConvexSetSpec::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let x = v(&[3.0, 4.0]);
        let mut best = (f64::INFINITY, v(&[0.0, 0.0]));
        let steps = 4000;
        for i in 0..steps {
            let t = i as f64 / steps as f64 * std::f64::consts::TAU;
            for r in [0.98, 0.99, 1.0] {
                let y = v(&[r * t.cos(), r * t.sin()]);
                let d = (&x - &y).norm();
                if d < best.0 {
                    best = (d, y);
                }
            }
        }
        let p = b.project(&x).unwrap();
        assert!((p - best.1).norm() < 2e-3);
    }

    #[test]
    fn projections_land_in_set_and_satisfy_variational_inequality() {
        let mut s = Sampler::new(11);
        let c = DVector::zeros(3);
        for set in sample_sets() {
            // Members z are produced by projecting random points.
            let members: Vec<_> = (0..50)
                .map(|_| set.project(&s.in_ball(&c, 4.0)).unwrap())
                .collect();
            for _ in 0..200 {
                let x = s.in_ball(&c, 4.0);
                let p = set.project(&x).unwrap();
                assert!(set.contains(&p, 1e-10).unwrap(), "{set:?}");
                for z in &members {
                    assert!((&x - &p).dot(&(z - &p)) <= 1e-10, "{set:?}");
                }
            }
        }
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(ConvexSetSpec::halfspace(v(&[0.0, 0.0]), 1.0).is_err());
        assert!(ConvexSetSpec::ball(v(&[0.0]), 0.0).is_err());
        assert!(ConvexSetSpec::bounding_box(v(&[1.0]), v(&[0.0])).is_err());
        let inconsistent = ConvexSetSpec::affine(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            v(&[0.0, 1.0]),
        );
        assert!(inconsistent.is_err());
    }

    #[test]
    fn projection_dimension_mismatch() {
        let h = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), 0.0).unwrap();
        assert!(matches!(
            h.project(&v(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sublevel_without_closed_form_uses_iterative_projection() {
        // f(x) = ‖x‖² − 1 through closures only: no closed form is exposed.
        let f = ClosureFunction::new(
            2,
            |x| x.norm_squared() - 1.0,
            |x| x * 2.0,
            |c, r| 2.0 * (c.norm() + r),
        );
        let set = ConvexSetSpec::sublevel(Arc::new(f));
        let (p, flag) = set.project_flagged(&v(&[3.0, 4.0])).unwrap();
        assert_eq!(flag, Exactness::Iterative);
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-8);
    }

    #[test]
    fn halfspace_pullback() {
        let a = LinearMap::diagonal(&[2.0, 1.0]).unwrap();
        let q = ConvexSetSpec::halfspace(v(&[1.0, 0.0]), -1.0).unwrap();
        let pulled = q.pullback(&a).unwrap();
        assert_eq!(pulled.len(), 1);
        // {2 x₁ ≤ −1}
        assert!(pulled[0].contains(&v(&[-0.5, 7.0]), 1e-12).unwrap());
        assert!(!pulled[0].contains(&v(&[-0.4, 7.0]), 1e-12).unwrap());
    }

    #[test]
    fn ball_pullback_is_an_ellipsoidal_cylinder() {
        // A = [[2, 0], [0, 1], [0, 0]] maps onto the plane z = 0.
        let map = LinearMap::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let ball = ConvexSetSpec::ball(v(&[0.0, 0.0, 0.6]), 1.0).unwrap();
        let pulled = ball.pullback(&map).unwrap();
        let mut s = Sampler::new(4);
        for _ in 0..200 {
            let x = s.in_ball(&v(&[0.0, 0.0]), 2.0);
            let ax = map.apply(&x).unwrap();
            assert_eq!(
                pulled[0].contains(&x, 0.0).unwrap(),
                ball.contains(&ax, 0.0).unwrap()
            );
        }
        // {4x₁² + x₂² ≤ 0.64}: the projection of (1, 0) is (0.4, 0).
        let p = pulled[0].project(&v(&[1.0, 0.0])).unwrap();
        assert!((p - v(&[0.4, 0.0])).norm() < 1e-6);

        let far = ConvexSetSpec::ball(v(&[0.0, 0.0, 1.5]), 1.0).unwrap();
        assert!(far.pullback(&map).is_none());
    }
}
