//! Dense symmetric eigendecomposition, singular value decomposition and
//! the derived primitives used by every solver.
//!
//! All decompositions are returned in a canonical form so that repeated
//! runs (and golden files) are bit-stable:
//!
//! * values sorted in non-increasing order, ties kept in original column order;
//! * inside a group of (numerically) equal values the basis is replaced by
//!   the Gram-Schmidt orthonormalisation of the projections of `e_0, e_1, ...`
//!   onto the group's eigenspace, taken in index order;
//! * every vector is signed so that its largest-magnitude entry is positive.
//!
//! Tolerances are relative to the magnitude of the input with an absolute
//! floor of `1e-300` so that the zero matrix is handled.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Floor used wherever a tolerance is scaled by a matrix norm.
pub const NORM_FLOOR: f64 = 1e-300;

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative spread under which adjacent eigen/singular values form a tie group.
pub const TIE_TOL: f64 = 1e-10;

/// Relative negativity accepted for a positive semi-definite input.
pub const PSD_TOL: f64 = 1e-10;

/// Default pseudo-inverse cutoff, relative to the largest eigenvalue.
pub const DEFAULT_EPS_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `i` pairs with `values[i]`.
    pub basis: DMatrix<f64>,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// First `k` eigenvectors as a `d x k` matrix.
    pub fn top(&self, k: usize) -> DMatrix<f64> {
        self.basis.columns(0, k).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.basis, &self.values);
        scaled * self.basis.transpose()
    }

    /// `basis * diag(f(values)) * basis^T`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        scale_columns(&self.basis, &mapped) * self.basis.transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvdTriple {
    /// Left singular vectors (`R`), one per column.
    pub left: DMatrix<f64>,
    /// Singular values, non-increasing and non-negative.
    pub singulars: Vec<f64>,
    /// Right singular vectors (`P`), one per column.
    pub right: DMatrix<f64>,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    /// `left * diag(singulars) * right^T`.
    pub fn approximant(&self) -> DMatrix<f64> {
        scale_columns(&self.left, &self.singulars) * self.right.transpose()
    }

    pub fn truncate(&self, k: usize) -> SvdTriple {
        SvdTriple {
            left: self.left.columns(0, k).into_owned(),
            singulars: self.singulars[..k].to_vec(),
            right: self.right.columns(0, k).into_owned(),
        }
    }
}

/// Options for [`spd_inv_sqrt`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InvSqrtOptions {
    /// Eigenvalues at or below this are treated as zero. Defaults to
    /// `1e-12 * largest eigenvalue`.
    pub eps: Option<f64>,
    /// Fail with [`Error::SingularMatrix`] instead of pseudo-inverting.
    pub strict: bool,
}

impl InvSqrtOptions {
    pub fn strict() -> Self {
        InvSqrtOptions { eps: None, strict: true }
    }
}

pub fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_square(m: &DMatrix<f64>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Multiplies column `j` of `m` by `factors[j]`.
pub fn scale_columns(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &f) in factors.iter().enumerate() {
        out.column_mut(j).scale_mut(f);
    }
    out
}

/// `X^T X`. An explicit transpose routes the product through the blocked
/// GEMM kernel, which is much faster than `tr_mul` for tall matrices.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * x
}

/// `X^T X / n` for an `n x d` data matrix.
pub fn second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows().max(1) as f64;
    symmetrize(&(gram(x) / n))
}

/// Symmetric eigendecomposition, sorted but with eigenvectors as computed.
///
/// Use this for matrix functions: the canonical basis of [`sym_eig`] is
/// only an approximate eigenbasis when tied eigenvalues differ by rounding,
/// which would leak that difference into `f(M)`.
pub fn sym_eig_raw(m: &DMatrix<f64>) -> Result<EigenPair> {
    let (values, basis) = sorted_eig(m)?;
    Ok(EigenPair { values, basis })
}

fn sorted_eig(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let scale = m.norm().max(NORM_FLOOR);
    let asymmetry = (m - m.transpose()).norm() * 0.5;
    let tolerance = SYMMETRY_TOL * scale;
    if asymmetry > tolerance {
        return Err(Error::NonSymmetric { asymmetry, tolerance });
    }
    let d = m.nrows();
    if d == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }

    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps the lowest original index first among equal values.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, basis))
}

/// Symmetric eigendecomposition in canonical form.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenPair> {
    let (values, mut basis) = sorted_eig(m)?;
    let d = values.len();

    let spread = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(NORM_FLOOR);
    for (start, end) in tie_groups(&values, TIE_TOL * spread) {
        if end - start > 1 {
            let canon = canonical_basis(&basis.columns(start, end - start).into_owned());
            basis.columns_mut(start, end - start).copy_from(&canon);
        }
    }
    for j in 0..d {
        if sign_flip_needed(&basis.column(j).into_owned()) {
            basis.column_mut(j).neg_mut();
        }
    }
    Ok(EigenPair { values, basis })
}

/// Half-open index ranges of adjacent sorted values closer than `tol`.
fn tie_groups(values: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i - 1] - values[i]).abs() > tol {
            groups.push((start, i));
            start = i;
        }
    }
    groups
}

/// Canonical orthonormal basis of the column span of `u` (orthonormal `d x m`).
///
/// Projections of the standard basis vectors are orthonormalised in index
/// order, keeping those whose residual exceeds `1/(2d)` in squared norm.
/// That threshold always yields `m` vectors: otherwise the residual
/// projector would have trace at most 1/2.
fn canonical_basis(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, m) = u.shape();
    let threshold = 0.5 / d as f64;
    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(m);
    for j in 0..d {
        if chosen.len() == m {
            break;
        }
        let mut v = u * u.row(j).transpose();
        for _ in 0..2 {
            for c in &chosen {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm2 = v.norm_squared();
        if norm2 > threshold {
            chosen.push(v / norm2.sqrt());
        }
    }
    if chosen.len() < m {
        // Unreachable for orthonormal input; keep the original basis.
        return u.clone();
    }
    DMatrix::from_columns(&chosen)
}

/// True when the largest-magnitude entry (lowest index on ties) is negative.
fn sign_flip_needed(v: &DVector<f64>) -> bool {
    let mut best = 0.0f64;
    let mut sign_negative = false;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < 0.0;
        }
    }
    sign_negative
}

/// Square root of a positive semi-definite matrix through its eigenbasis.
///
/// Slightly negative eigenvalues (rounding) are clamped to zero, so this
/// works for rank-deficient covariances where Cholesky fails.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig_raw(m)?;
    check_psd(&eig)?;
    Ok(eig.map_spectrum(|v| v.max(0.0).sqrt()))
}

fn check_psd(eig: &EigenPair) -> Result<()> {
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(NORM_FLOOR);
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Verifies that `m` is symmetric positive semi-definite.
pub fn ensure_psd(m: &DMatrix<f64>) -> Result<()> {
    check_psd(&sym_eig(m)?)
}

/// (Pseudo-)inverse square root of a symmetric PSD matrix.
///
/// Eigenvalues `v > eps` map to `v^{-1/2}`; the rest map to zero unless
/// `opts.strict` is set, in which case [`Error::SingularMatrix`] is returned.
pub fn spd_inv_sqrt(m: &DMatrix<f64>, opts: InvSqrtOptions) -> Result<DMatrix<f64>> {
    let eig = sym_eig_raw(m)?;
    check_psd(&eig)?;
    let largest = eig.values.first().copied().unwrap_or(0.0).max(NORM_FLOOR);
    let eps = opts.eps.unwrap_or(DEFAULT_EPS_REL * largest);
    let smallest = eig.values.last().copied().unwrap_or(0.0);
    if opts.strict && smallest <= eps {
        return Err(Error::SingularMatrix { eigenvalue: smallest, threshold: eps });
    }
    Ok(eig.map_spectrum(|v| if v > eps { v.sqrt().recip() } else { 0.0 }))
}

/// Thin SVD (`r = min(rows, cols)` triplets) in canonical form.
pub fn svd(a: &DMatrix<f64>) -> Result<SvdTriple> {
    ensure_finite(a)?;
    let (rows, cols) = a.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(SvdTriple {
            left: DMatrix::zeros(rows, 0),
            singulars: Vec::new(),
            right: DMatrix::zeros(cols, 0),
        });
    }
    let raw = SVD::new(a.clone(), true, true);
    let u = raw.u.expect("left vectors requested");
    let v = raw.v_t.expect("right vectors requested").transpose();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| raw.singular_values[j].total_cmp(&raw.singular_values[i]));

    let singulars: Vec<f64> = order.iter().map(|&i| raw.singular_values[i].max(0.0)).collect();
    let mut left = DMatrix::zeros(rows, r);
    let mut right = DMatrix::zeros(cols, r);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
    }

    let top = singulars[0].max(NORM_FLOOR);
    let zero_cut = TIE_TOL * top;
    for (start, end) in tie_groups(&singulars, TIE_TOL * top) {
        let m = end - start;
        let is_zero_group = singulars[start] <= zero_cut;
        if is_zero_group {
            // Left and right null directions are unrelated; canonicalise separately.
            if m > 1 {
                let canon_r = canonical_basis(&right.columns(start, m).into_owned());
                right.columns_mut(start, m).copy_from(&canon_r);
                let canon_l = canonical_basis(&left.columns(start, m).into_owned());
                left.columns_mut(start, m).copy_from(&canon_l);
            }
            for j in start..end {
                if sign_flip_needed(&right.column(j).into_owned()) {
                    right.column_mut(j).neg_mut();
                }
                if sign_flip_needed(&left.column(j).into_owned()) {
                    left.column_mut(j).neg_mut();
                }
            }
            continue;
        }
        if m > 1 {
            let old_r = right.columns(start, m).into_owned();
            let canon_r = canonical_basis(&old_r);
            // Rotate the left block by the same m x m rotation to keep A v = s u.
            let rotation = old_r.tr_mul(&canon_r);
            let new_l = left.columns(start, m) * rotation;
            right.columns_mut(start, m).copy_from(&canon_r);
            left.columns_mut(start, m).copy_from(&new_l);
        }
        for j in start..end {
            if sign_flip_needed(&right.column(j).into_owned()) {
                right.column_mut(j).neg_mut();
                left.column_mut(j).neg_mut();
            }
        }
    }
    Ok(SvdTriple { left, singulars, right })
}

/// Frobenius-optimal rank-`k` approximation (Eckart-Young): the top `k`
/// singular triplets of `a`.
pub fn best_rank_k(a: &DMatrix<f64>, k: usize) -> Result<SvdTriple> {
    let r = a.nrows().min(a.ncols());
    if k == 0 || k > r {
        return Err(Error::RankOutOfRange { k, d: r });
    }
    Ok(svd(a)?.truncate(k))
}

/// Orthonormal `d x r` basis of the row space of a `k x d` matrix, where `r`
/// is its numerical rank (at most `k`).
pub fn row_space_basis(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let triple = svd(&w.transpose())?;
    let top = triple.singulars.first().copied().unwrap_or(0.0).max(NORM_FLOOR);
    let rank = triple.singulars.iter().filter(|&&s| s > 1e-12 * top).count();
    Ok(triple.left.columns(0, rank).into_owned())
}

/// `||I - B^T B||_F`.
pub fn orthonormality_defect(b: &DMatrix<f64>) -> f64 {
    (b.tr_mul(b) - DMatrix::<f64>::identity(b.ncols(), b.ncols())).norm()
}

/// Projection distance `||B1 B1^T - B2 B2^T||_F` between the column spans
/// of two orthonormal bases.
pub fn subspace_distance(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<f64> {
    if b1.shape() != b2.shape() {
        return Err(Error::DimensionMismatch(format!(
            "bases have shapes {:?} and {:?}",
            b1.shape(),
            b2.shape()
        )));
    }
    for b in [b1, b2] {
        let defect = orthonormality_defect(b);
        if defect > 1e-8 {
            return Err(Error::NotOrthonormal { defect });
        }
    }
    Ok((b1 * b1.transpose() - b2 * b2.transpose()).norm())
}

/// Subspace distance between the row spaces of two `k x d` matrices.
pub fn row_space_distance(w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> Result<f64> {
    let b1 = row_space_basis(w1)?;
    let b2 = row_space_basis(w2)?;
    if b1.ncols() != b2.ncols() {
        // Spans of different dimension: the projector distance is still defined.
        return Ok((&b1 * b1.transpose() - &b2 * b2.transpose()).norm());
    }
    subspace_distance(&b1, &b2)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration_max(m: &DMatrix<f64>, iters: usize) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(d, |i, _| 1.0 + 0.01 * i as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let norm = w.norm();
        if norm <= NORM_FLOOR {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    estimate.max((m * &v).norm())
}
