//! Dense finite-dimensional linear maps and their spectral constants.
//!
//! Every [`LinearMap`] carries two cached constants: the operator norm
//! `‖A‖` (largest singular value) and `|A|`, the infimum of `‖Ax‖` over unit
//! vectors of `(ker A)⊥`. In finite dimension `|A|` is the smallest positive
//! singular value, so it is always strictly positive for a nonzero map.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Default numerical-rank threshold, relative to `‖A‖`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearMap {
    entries: DMatrix<f64>,
    op_norm: f64,
    min_pos_sv: f64,
    rank_tol: f64,
    /// Orthonormal basis of `im A` (left singular vectors of positive singular values).
    range_basis: DMatrix<f64>,
    /// Orthonormal basis of `(ker A)⊥` (right singular vectors of positive singular values).
    coimage_basis: DMatrix<f64>,
}

struct Spectrum {
    op_norm: f64,
    min_pos_sv: f64,
    range_basis: DMatrix<f64>,
    coimage_basis: DMatrix<f64>,
}

fn spectrum(entries: &DMatrix<f64>, rank_tol: f64) -> Result<Spectrum> {
    if !(rank_tol > 0.0 && rank_tol.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rank_tol must be positive and finite, got {rank_tol}"
        )));
    }
    if entries.nrows() == 0 || entries.ncols() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    if entries.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroOperator);
    }
    // Singular values alone are reliable; the vectors are taken from a
    // validated decomposition below.
    let values = entries.clone().svd(false, false).singular_values;
    let op_norm = values.max();
    if op_norm <= 0.0 {
        return Err(Error::ZeroOperator);
    }
    let threshold = rank_tol * op_norm;
    let kept: Vec<f64> = values.iter().copied().filter(|&s| s > threshold).collect();
    if kept.is_empty() {
        return Err(Error::ZeroOperator);
    }
    let min_pos_sv = kept.iter().copied().fold(f64::INFINITY, f64::min);
    let (range_basis, coimage_basis) = singular_bases(entries, kept.len());
    Ok(Spectrum {
        op_norm,
        min_pos_sv,
        range_basis,
        coimage_basis,
    })
}

/// Leading `r` left and right singular vectors of `b` from a full SVD, if
/// the decomposition reproduces `b`. With some rank-deficient inputs the
/// vector computation returns an inconsistent factorization.
fn checked_svd_bases(b: &DMatrix<f64>, r: usize) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = b.clone().svd(true, true);
    let (u, v_t) = (svd.u.as_ref()?, svd.v_t.as_ref()?);
    let recomposed = u * DMatrix::from_diagonal(&svd.singular_values) * v_t;
    if (recomposed - b).norm() > 1e-12 * (1.0 + b.norm()) * (b.nrows() + b.ncols()) as f64 {
        return None;
    }
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let top = &order[..r];
    let ur = DMatrix::from_fn(b.nrows(), r, |row, c| u[(row, top[c])]);
    let vr = DMatrix::from_fn(b.ncols(), r, |row, c| v_t[(top[c], row)]);
    Some((ur, vr))
}

/// Orthonormal bases of `im A` and `(ker A)⊥` for a map of rank `r`.
fn singular_bases(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    if let Some(bases) = checked_svd_bases(a, r) {
        return bases;
    }
    if let Some((v, u)) = checked_svd_bases(&a.transpose(), r) {
        return (u, v);
    }
    // Leading eigenvectors of A*A span (ker A)⊥; their images span im A.
    let eig = a.tr_mul(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let v = DMatrix::from_fn(a.ncols(), r, |row, c| eig.eigenvectors[(row, order[c])]);
    let u = (a * &v).qr().q();
    (u, v)
}

/// Computes `(‖A‖, |A|)` for a dense matrix.
///
/// Singular values at or below `rank_tol · ‖A‖` are treated as zero.
pub fn spectral_constants(entries: &DMatrix<f64>, rank_tol: f64) -> Result<(f64, f64)> {
    let s = spectrum(entries, rank_tol)?;
    Ok((s.op_norm, s.min_pos_sv))
}

/// The four quantities `|A|`, `|A*|`, `√|AA*|`, `√|A*A|`, each computed
/// from its own matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedRangeReport {
    pub abs_a: f64,
    pub abs_adjoint: f64,
    pub sqrt_abs_aat: f64,
    pub sqrt_abs_ata: f64,
    /// Maximum over pairs of `|a - b| / max(a, b)`.
    pub max_rel_deviation: f64,
}

impl ClosedRangeReport {
    pub fn values(&self) -> [f64; 4] {
        [
            self.abs_a,
            self.abs_adjoint,
            self.sqrt_abs_aat,
            self.sqrt_abs_ata,
        ]
    }
}

impl LinearMap {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_rank_tol(entries, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        let s = spectrum(&entries, rank_tol)?;
        Ok(Self {
            entries,
            op_norm: s.op_norm,
            min_pos_sv: s.min_pos_sv,
            rank_tol,
            range_basis: s.range_basis,
            coimage_basis: s.coimage_basis,
        })
    }

    /// Builds a map from row vectors. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim(n, r.len())?;
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `‖A‖`.
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    /// `|A|`, the smallest positive singular value.
    pub fn min_pos_sv(&self) -> f64 {
        self.min_pos_sv
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn rank(&self) -> usize {
        self.range_basis.ncols()
    }

    /// True when `im A` is the whole target space.
    pub fn is_surjective(&self) -> bool {
        self.rank() == self.rows()
    }

    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.range_basis
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.cols(), x.len())?;
        Ok(&self.entries * x)
    }

    /// `A* y`; the adjoint of a real matrix is its transpose.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.rows(), y.len())?;
        Ok(self.entries.tr_mul(y))
    }

    /// The adjoint as a map of its own.
    pub fn adjoint(&self) -> Result<Self> {
        Self::with_rank_tol(self.entries.transpose(), self.rank_tol)
    }

    /// `c · A` for `c ≠ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor {c}")));
        }
        Self::with_rank_tol(&self.entries * c, self.rank_tol)
    }

    /// Splits `x = x_ker + x_perp` with `x_ker ∈ ker A` and `x_perp ∈ (ker A)⊥`.
    pub fn kernel_decompose(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim(self.cols(), x.len())?;
        let coeffs = self.coimage_basis.tr_mul(x);
        let x_perp = &self.coimage_basis * coeffs;
        let x_ker = x - &x_perp;
        Ok((x_ker, x_perp))
    }

    /// Orthogonal projection of `y` onto `im A`.
    pub fn project_onto_range(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.rows(), y.len())?;
        let coeffs = self.range_basis.tr_mul(y);
        Ok(&self.range_basis * coeffs)
    }

    pub fn closed_range_identity_check(&self) -> Result<ClosedRangeReport> {
        let tol = self.rank_tol;
        let (_, abs_a) = spectral_constants(&self.entries, tol)?;
        let adjoint = self.entries.transpose();
        let (_, abs_adjoint) = spectral_constants(&adjoint, tol)?;
        let aat = &self.entries * &adjoint;
        let ata = &adjoint * &self.entries;
        let (_, abs_aat) = spectral_constants(&aat, tol)?;
        let (_, abs_ata) = spectral_constants(&ata, tol)?;
        let values = [abs_a, abs_adjoint, abs_aat.sqrt(), abs_ata.sqrt()];
        let mut worst = 0.0_f64;
        for i in 0..values.len() {
            for j in (i + 1)..values.len() {
                let scale = values[i].max(values[j]);
                worst = worst.max((values[i] - values[j]).abs() / scale);
            }
        }
        Ok(ClosedRangeReport {
            abs_a: values[0],
            abs_adjoint: values[1],
            sqrt_abs_aat: values[2],
            sqrt_abs_ata: values[3],
            max_rel_deviation: worst,
        })
    }
}
