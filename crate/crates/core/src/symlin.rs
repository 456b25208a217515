//! Symmetric-matrix linear algebra.
//!
//! Everything the iteration engines touch lives here: `svec`/`smat` packing,
//! the constraint map `A` and its adjoint, the Gram matrix `A A*` with its
//! reusable factorization, symmetric eigendecomposition, and the projections
//! onto the PSD cone, Frobenius balls and the l1 ball.
//!
//! All operations are pure with respect to their inputs. [`ConstraintMap`]
//! and [`GramFactor`] are immutable after construction and safe to share
//! across concurrent solver runs.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::fm;

/// Errors produced by this module.
#[derive(Debug, Clone, PartialEq)]
pub enum SymLinError {
    /// A square matrix was required.
    NotSquare { rows: usize, cols: usize },
    /// Zero-dimensional matrices are rejected.
    EmptyMatrix,
    /// A non-finite entry (NaN or infinity) was found.
    NonFinite,
    /// Vector or matrix dimensions do not match.
    DimensionMismatch { expected: usize, got: usize },
    /// Packed vector length is not a triangular number.
    BadPackedLength { len: usize },
    /// Ball radii must be strictly positive.
    NonPositiveRadius { radius: f64 },
    /// Sparse triplet indices out of bounds.
    IndexOutOfBounds { index: (usize, usize), n: usize },
    /// Two triplets address the same entry.
    DuplicateEntry { index: (usize, usize) },
    /// The constraint matrices are linearly dependent; the Gram matrix is
    /// singular. Carries the indices implicated in the dependency.
    RankDeficientConstraints { dependent: Vec<usize> },
    /// A spectral function returned a non-finite value at an eigenvalue.
    UndefinedAtEigenvalue { eigenvalue: f64 },
    /// Constraint maps need at least one constraint.
    NoConstraints,
}

impl fmt::Display for SymLinError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotSquare { rows, cols } => {
                write!(f, "matrix must be square, got {rows}x{cols}")
            }
            Self::EmptyMatrix => write!(f, "matrix dimension must be at least 1"),
            Self::NonFinite => write!(f, "matrix contains non-finite entries"),
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::BadPackedLength { len } => {
                write!(f, "packed length {len} is not of the form n(n+1)/2")
            }
            Self::NonPositiveRadius { radius } => {
                write!(f, "ball radius must be positive, got {radius}")
            }
            Self::IndexOutOfBounds { index: (i, j), n } => {
                write!(f, "triplet index ({i},{j}) out of bounds for dimension {n}")
            }
            Self::DuplicateEntry { index: (i, j) } => {
                write!(f, "duplicate sparse entry at ({i},{j})")
            }
            Self::RankDeficientConstraints { dependent } => {
                write!(f, "constraint matrices are linearly dependent (indices {dependent:?})")
            }
            Self::UndefinedAtEigenvalue { eigenvalue } => {
                write!(f, "spectral function undefined at eigenvalue {eigenvalue}")
            }
            Self::NoConstraints => write!(f, "constraint map needs at least one matrix"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SymLinError {}

pub type Result<T> = core::result::Result<T, SymLinError>;

/// Packing convention for [`svec`].
///
/// `PaperLiteral` lists the upper-triangular entries verbatim, row by row.
/// It round-trips bit-exactly through [`smat`] but does not preserve the
/// Frobenius inner product. `InnerProductScaled` multiplies strict
/// off-diagonal entries by sqrt(2) so that `dot(svec(A), svec(B)) == <A, B>`;
/// the solver uses this convention internally for the constraint map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SvecConvention {
    PaperLiteral,
    InnerProductScaled,
}

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Dense symmetric matrix. Symmetry is enforced on construction, so
/// `entries[(i, j)] == entries[(j, i)]` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    entries: DMatrix<f64>,
}

impl SymMat {
    /// Symmetrizes `m` as `(M + M^T) / 2` and wraps it.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(SymLinError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(SymLinError::EmptyMatrix);
        }
        let n = m.nrows();
        let mut entries = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (entries[(i, j)] + entries[(j, i)]);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle and mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(SymLinError::EmptyMatrix);
        }
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Ok(Self { n, entries })
    }

    /// Wraps a matrix that is already exactly symmetric. Debug builds check.
    pub(crate) fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Self {
        debug_assert!(entries.is_square());
        debug_assert!({
            let n = entries.nrows();
            (0..n).all(|i| (i..n).all(|j| entries[(i, j)] == entries[(j, i)]))
        });
        Self { n: entries.nrows(), entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, entries: DMatrix::identity(n, n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn frob_norm(&self) -> f64 {
        fm::sqrt(self.entries.iter().map(|v| v * v).sum())
    }

    /// Trace inner product `<A, B> = Tr(A^T B)`.
    pub fn inner(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.entries.iter().zip(other.entries.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, factor: f64) -> SymMat {
        SymMat { n: self.n, entries: &self.entries * factor }
    }

    /// `self + factor * other`, entrywise.
    pub fn axpy(&self, factor: f64, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.n, other.n);
        let mut entries = self.entries.clone();
        entries.zip_apply(&other.entries, |a, b| *a += factor * b);
        SymMat { n: self.n, entries }
    }
}

impl core::ops::Add for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        self.axpy(1.0, rhs)
    }
}

impl core::ops::Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        self.axpy(-1.0, rhs)
    }
}

/// Packed symmetric vector of length `n(n+1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSymVec {
    pub n: usize,
    pub convention: SvecConvention,
    pub data: DVector<f64>,
}

/// Packs the upper triangle of `x` row by row.
///
/// Under `InnerProductScaled` the strict off-diagonal entries are multiplied
/// by sqrt(2), which makes packed dot products equal trace inner products.
pub fn svec(x: &SymMat, convention: SvecConvention) -> PackedSymVec {
    let n = x.n();
    let mut data = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let v = x.mat()[(i, j)];
            data[k] = match convention {
                SvecConvention::PaperLiteral => v,
                SvecConvention::InnerProductScaled => {
                    if i == j {
                        v
                    } else {
                        v * SQRT_2
                    }
                }
            };
            k += 1;
        }
    }
    PackedSymVec { n, convention, data }
}

/// Inverse of [`svec`]. Fails if the length is not a triangular number.
pub fn smat(v: &PackedSymVec) -> Result<SymMat> {
    let len = v.data.len();
    let n = triangular_root(len).ok_or(SymLinError::BadPackedLength { len })?;
    if n != v.n {
        return Err(SymLinError::DimensionMismatch { expected: v.n, got: n });
    }
    let mut entries = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let raw = v.data[k];
            let val = match v.convention {
                SvecConvention::PaperLiteral => raw,
                SvecConvention::InnerProductScaled => {
                    if i == j {
                        raw
                    } else {
                        raw / SQRT_2
                    }
                }
            };
            entries[(i, j)] = val;
            entries[(j, i)] = val;
            k += 1;
        }
    }
    Ok(SymMat::from_symmetric_unchecked(entries))
}

fn triangular_root(len: usize) -> Option<usize> {
    // n(n+1)/2 == len
    let mut n = 0usize;
    let mut acc = 0usize;
    while acc < len {
        n += 1;
        acc += n;
    }
    (acc == len && n > 0).then_some(n)
}

/// Sparse symmetric matrix in upper-triangle triplet storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    /// Entries with `i <= j`; an off-diagonal triplet represents both
    /// mirrored positions.
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Triplets may address either triangle; they are folded to the upper
    /// one. Duplicate positions are rejected.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(SymLinError::EmptyMatrix);
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(SymLinError::IndexOutOfBounds { index: (i, j), n });
            }
            if !v.is_finite() {
                return Err(SymLinError::NonFinite);
            }
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            if entries.iter().any(|&(a, b, _)| a == i && b == j) {
                return Err(SymLinError::DuplicateEntry { index: (i, j) });
            }
            entries.push((i, j, v));
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entry count; this is the matrix's row count
    /// in the packed `svec` representation of the constraint map.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn frob_norm(&self) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            acc += if i == j { v * v } else { 2.0 * v * v };
        }
        fm::sqrt(acc)
    }

    /// Trace inner product with a dense symmetric matrix, `O(nnz)`.
    pub fn inner(&self, x: &SymMat) -> f64 {
        let mut acc = 0.0;
        for &(i, j, v) in &self.entries {
            let w = x.mat()[(i, j)];
            acc += if i == j { v * w } else { 2.0 * v * w };
        }
        acc
    }

    /// Trace inner product with another sparse symmetric matrix.
    pub fn inner_sparse(&self, other: &SparseSym) -> f64 {
        let mut acc = 0.0;
        // Entries are sorted; merge.
        let (mut a, mut b) = (0usize, 0usize);
        while a < self.entries.len() && b < other.entries.len() {
            let (ia, ja, va) = self.entries[a];
            let (ib, jb, vb) = other.entries[b];
            match (ia, ja).cmp(&(ib, jb)) {
                core::cmp::Ordering::Less => a += 1,
                core::cmp::Ordering::Greater => b += 1,
                core::cmp::Ordering::Equal => {
                    acc += if ia == ja { va * vb } else { 2.0 * va * vb };
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn to_dense(&self) -> SymMat {
        let mut entries = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
        SymMat::from_symmetric_unchecked(entries)
    }

    pub fn scaled(&self, factor: f64) -> SparseSym {
        SparseSym {
            n: self.n,
            entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * factor)).collect(),
        }
    }

    /// Accumulates `factor * self` into a dense matrix.
    fn accumulate_into(&self, factor: f64, target: &mut DMatrix<f64>) {
        for &(i, j, v) in &self.entries {
            target[(i, j)] += factor * v;
            if i != j {
                target[(j, i)] += factor * v;
            }
        }
    }
}

/// The constraint map `A(X) = (<A_1, X>, ..., <A_m, X>)` with its adjoint
/// `A*(y) = sum_i y_i A_i`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ConstraintMap {
    m: usize,
    n: usize,
    mats: Vec<SparseSym>,
    frob_norms: Vec<f64>,
    nnz_total: usize,
}

impl ConstraintMap {
    pub fn new(mats: Vec<SparseSym>) -> Result<Self> {
        let m = mats.len();
        if m == 0 {
            return Err(SymLinError::NoConstraints);
        }
        let n = mats[0].n();
        for a in &mats {
            if a.n() != n {
                return Err(SymLinError::DimensionMismatch { expected: n, got: a.n() });
            }
        }
        let frob_norms = mats.iter().map(SparseSym::frob_norm).collect();
        let nnz_total = mats.iter().map(SparseSym::nnz).sum();
        Ok(Self { m, n, mats, frob_norms, nnz_total })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mats(&self) -> &[SparseSym] {
        &self.mats
    }

    /// Frobenius norms `alpha_i = ||A_i||_F`, the block-encoding
    /// normalization weights.
    pub fn frob_norms(&self) -> &[f64] {
        &self.frob_norms
    }

    /// `s_A`: total stored nonzero count across all constraint matrices.
    pub fn nnz_total(&self) -> usize {
        self.nnz_total
    }

    /// Applies the map: component `i` is `<A_i, X>`.
    pub fn apply(&self, x: &SymMat) -> Result<DVector<f64>> {
        if x.n() != self.n {
            return Err(SymLinError::DimensionMismatch { expected: self.n, got: x.n() });
        }
        Ok(DVector::from_iterator(self.m, self.mats.iter().map(|a| a.inner(x))))
    }

    /// Applies the adjoint: `sum_i y_i A_i`.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Result<SymMat> {
        if y.len() != self.m {
            return Err(SymLinError::DimensionMismatch { expected: self.m, got: y.len() });
        }
        let mut acc = DMatrix::zeros(self.n, self.n);
        for (a, &yi) in self.mats.iter().zip(y.iter()) {
            if yi != 0.0 {
                a.accumulate_into(yi, &mut acc);
            }
        }
        Ok(SymMat::from_symmetric_unchecked(acc))
    }

    /// The `m x n(n+1)/2` matrix whose rows are `svec(A_i)` in the
    /// inner-product-scaled convention, so `A(X) = A_mat * svec(X)`.
    pub fn svec_matrix(&self) -> DMatrix<f64> {
        let cols = self.n * (self.n + 1) / 2;
        let mut a = DMatrix::zeros(self.m, cols);
        for (row, mat) in self.mats.iter().enumerate() {
            for &(i, j, v) in mat.triplets() {
                let k = packed_index(self.n, i, j);
                a[(row, k)] = if i == j { v } else { v * SQRT_2 };
            }
        }
        a
    }

    /// Builds the Gram matrix `A A*` and its Cholesky factorization.
    ///
    /// The factorization is computed once and reused across all iterations;
    /// the map is fixed so refactorization is never needed.
    pub fn gram(&self) -> Result<GramFactor> {
        let mut gram = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in i..self.m {
                let v = self.mats[i].inner_sparse(&self.mats[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let factor = match nalgebra::Cholesky::new(gram.clone()) {
            Some(f) => f,
            None => {
                return Err(SymLinError::RankDeficientConstraints {
                    dependent: dependent_indices(&gram),
                })
            }
        };
        let eig = gram.clone().symmetric_eigen();
        let mut lambda_min = f64::INFINITY;
        let mut lambda_max = f64::NEG_INFINITY;
        for &l in eig.eigenvalues.iter() {
            lambda_min = lambda_min.min(l);
            lambda_max = lambda_max.max(l);
        }
        if lambda_min <= 0.0 {
            return Err(SymLinError::RankDeficientConstraints {
                dependent: dependent_indices(&gram),
            });
        }
        Ok(GramFactor { gram, factor, kappa_sq: lambda_max / lambda_min })
    }
}

/// Index of entry `(i, j)`, `i <= j`, in the row-major upper-triangle packing.
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

/// Indices implicated in a Gram-matrix null space, for the rank-deficiency
/// diagnostic.
fn dependent_indices(gram: &DMatrix<f64>) -> Vec<usize> {
    let eig = gram.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * lambda_max.max(1.0);
    let mut dependent = Vec::new();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= tol {
            let col = eig.eigenvectors.column(k);
            let peak = col.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            for (i, v) in col.iter().enumerate() {
                if v.abs() > 1e-6 * peak.max(1e-300) && !dependent.contains(&i) {
                    dependent.push(i);
                }
            }
        }
    }
    dependent.sort_unstable();
    dependent
}

/// Gram matrix `A A*` with a reusable Cholesky factorization and the
/// condition number `kappa_A^2 = lambda_max / lambda_min`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    gram: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    kappa_sq: f64,
}

impl GramFactor {
    pub fn m(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    /// Solves `(A A*) x = rhs` using the stored factorization.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigSym {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl EigSym {
    /// Rebuilds `U diag(g(lambda)) U^T`.
    pub fn assemble(&self, g: impl Fn(f64) -> f64) -> Result<SymMat> {
        let n = self.values.len();
        let mut d = DVector::zeros(n);
        for (k, &l) in self.values.iter().enumerate() {
            let v = g(l);
            if !v.is_finite() {
                return Err(SymLinError::UndefinedAtEigenvalue { eigenvalue: l });
            }
            d[k] = v;
        }
        let scaled = &self.vectors * DMatrix::from_diagonal(&d);
        let m = &scaled * self.vectors.transpose();
        // The product is symmetric up to roundoff; symmetrize exactly.
        SymMat::from_matrix(m)
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending. Reconstruction is accurate to about `1e-10 * max(1, ||X||_F)`.
pub fn eig_sym(x: &SymMat) -> Result<EigSym> {
    if !x.is_finite() {
        return Err(SymLinError::NonFinite);
    }
    let eig = x.mat().clone().symmetric_eigen();
    let n = x.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigSym { values, vectors })
}

/// Projection onto the PSD cone (positive spectral part).
pub fn proj_psd(x: &SymMat) -> Result<SymMat> {
    eig_sym(x)?.assemble(|l| l.max(0.0))
}

/// Projection onto the negative-semidefinite cone (negative spectral part).
/// Together with [`proj_psd`] this is the Moreau decomposition:
/// `X == proj_psd(X) + proj_nsd(X)` and the parts are trace-orthogonal.
pub fn proj_nsd(x: &SymMat) -> Result<SymMat> {
    eig_sym(x)?.assemble(|l| l.min(0.0))
}

/// Projection onto the Frobenius ball of radius `r` (radial scaling).
pub fn proj_frob_ball(x: &SymMat, radius: f64) -> Result<SymMat> {
    if !(radius > 0.0) {
        return Err(SymLinError::NonPositiveRadius { radius });
    }
    let norm = x.frob_norm();
    if norm <= radius {
        Ok(x.clone())
    } else {
        Ok(x.scale(radius / norm))
    }
}

/// Exact projection onto `{X PSD, ||X||_F <= r}`: PSD projection followed by
/// radial scaling. The ball is centered at the origin and radial scaling
/// preserves positive semidefiniteness, so the composition is the true
/// Euclidean projection onto the intersection.
pub fn proj_psd_ball(x: &SymMat, radius: f64) -> Result<SymMat> {
    proj_frob_ball(&proj_psd(x)?, radius)
}

/// Euclidean projection onto the l1 ball of radius `r`, by the sorted
/// soft-threshold rule `max(0, |y_i| - theta)`.
pub fn proj_l1_ball(y: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    if !(radius > 0.0) {
        return Err(SymLinError::NonPositiveRadius { radius });
    }
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return Ok(y.clone());
    }
    let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (k as f64 + 1.0);
        if t >= u {
            break;
        }
        theta = t;
    }
    Ok(y.map(|v| v.signum() * (v.abs() - theta).max(0.0)))
}

/// Eigenvalue transformation `U diag(g(lambda)) U^T`.
pub fn spectral_apply(g: impl Fn(f64) -> f64, x: &SymMat) -> Result<SymMat> {
    eig_sym(x)?.assemble(g)
}
