//! Dense small-matrix primitives: Kronecker products, spectral radius,
//! operator norm and block assembly.
//!
//! Everything downstream of this module works with families of a handful of
//! matrices of dimension at most a few dozen, so storage is dense and the
//! eigenvalue routine is a full real Schur decomposition. Lifted matrices
//! (Kronecker powers, Markov lifts) grow quickly, which is why every
//! constructor that multiplies dimensions goes through [`Limits::check_dim`].

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative accuracy the eigenvalue routine is documented to deliver.
pub const EIG_REL_TOL: f64 = 1e-10;

/// Default cap on the row count of any lifted matrix.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Default cap on the number of matrix products an enumeration may visit.
pub const DEFAULT_PRODUCT_BUDGET: u64 = 1_000_000;

/// Resource limits shared by every operation that lifts or enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub dim_cap: usize,
    pub product_budget: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            dim_cap: DEFAULT_DIM_CAP,
            product_budget: DEFAULT_PRODUCT_BUDGET,
        }
    }
}

impl Limits {
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim > self.dim_cap {
            Err(Error::DimensionCap { dim, cap: self.dim_cap })
        } else {
            Ok(())
        }
    }

    /// Checks that `count` products fit into the enumeration budget.
    pub fn check_products(&self, count: u128) -> Result<()> {
        if count > u128::from(self.product_budget) {
            Err(Error::BudgetExceeded {
                count,
                budget: self.product_budget,
            })
        } else {
            Ok(())
        }
    }
}

/// Multiplies dimensions, failing on `usize` overflow as a cap violation.
pub(crate) fn checked_dim(limits: &Limits, factors: &[usize]) -> Result<usize> {
    let mut dim: usize = 1;
    for &f in factors {
        dim = dim.checked_mul(f).ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: limits.dim_cap,
        })?;
    }
    limits.check_dim(dim)?;
    Ok(dim)
}

/// A dense real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, &entries))
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut entries = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != ncols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(nrows, ncols, entries)
    }

    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::Shape("empty matrix".into()));
        }
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    pub(crate) fn from_dmatrix_unchecked(inner: DMatrix<f64>) -> Self {
        Self { inner }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut inner = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            inner[(i, i)] = d;
        }
        Self { inner }
    }

    /// 1x1 matrix holding `value`.
    pub fn scalar(value: f64) -> Self {
        Self {
            inner: DMatrix::from_element(1, 1, value),
        }
    }

    /// The quarter-turn rotation `[[0, -1], [1, 0]]`.
    pub fn rotation_quarter() -> Self {
        Self {
            inner: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.inner[(i, j)]).collect())
            .collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.to_rows().into_iter().flatten().collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { inner: &self.inner * c }
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols() != other.rows() {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(Self {
            inner: &self.inner * &other.inner,
        })
    }

    pub fn pow(&self, k: u32) -> Result<Matrix> {
        self.require_square()?;
        let mut out = Matrix::identity(self.rows());
        for _ in 0..k {
            out = &out * self;
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(
            (self.rows(), self.cols()),
            (other.rows(), other.cols()),
            "shape mismatch in max_abs_diff"
        );
        (&self.inner - &other.inner).amax()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.inner.iter().all(|&x| x >= 0.0)
    }

    pub fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                rows: self.rows(),
                cols: self.cols(),
            })
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix {
            inner: &self.inner * &rhs.inner,
        }
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn kron_dm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for l in 0..cb {
                for k in 0..rb {
                    out[(i * rb + k, j * cb + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix, limits: &Limits) -> Result<Matrix> {
    checked_dim(limits, &[a.rows(), b.rows()])?;
    checked_dim(limits, &[a.cols(), b.cols()])?;
    Ok(Matrix::from_dmatrix_unchecked(kron_dm(&a.inner, &b.inner)))
}

/// `p`-fold Kronecker power; `p = 1` returns a copy of `a`.
pub fn kron_power(a: &Matrix, p: u32, limits: &Limits) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::InvalidArgument("Kronecker power needs p >= 1".into()));
    }
    checked_dim(limits, &vec![a.rows(); p as usize])?;
    checked_dim(limits, &vec![a.cols(); p as usize])?;
    let mut out = a.inner.clone();
    for _ in 1..p {
        out = kron_dm(&out, &a.inner);
    }
    Ok(Matrix::from_dmatrix_unchecked(out))
}

/// Spectral radius together with the backward error of the Schur factorization
/// it was read from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub radius: f64,
    /// Frobenius norm of `A - Q T Qᵀ`; zero for the closed-form small cases.
    pub residual: f64,
}

pub(crate) fn rho_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        half_tr.abs() + disc.sqrt()
    } else {
        // complex pair: |λ|² = det
        (a * d - b * c).max(0.0).sqrt()
    }
}

struct Decomposition {
    radius: f64,
    q: DMatrix<f64>,
    t: DMatrix<f64>,
}

fn try_schur(a: &DMatrix<f64>, eps: f64, max_iter: usize) -> Option<Decomposition> {
    let s = nalgebra::linalg::Schur::try_new(a.clone(), eps, max_iter)?;
    let radius = s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (q, t) = s.unpack();
    Some(Decomposition { radius, q, t })
}

/// Householder reflection along `(1, 2, …, n)`.
fn fixed_reflection(n: usize) -> DMatrix<f64> {
    let v = nalgebra::DVector::from_fn(n, |i, _| (i + 1) as f64);
    DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared())
}

enum Decomposed {
    Full(Decomposition),
    /// Radius and a residual estimate only.
    Radius(f64, f64),
}

/// Real Schur form `A = Q T Qᵀ`, or the spectral radius alone when the QR
/// iteration stalls on every retry.
///
/// The iteration occasionally stalls on highly structured input, such as
/// block anti-diagonal matrices. The retries run it on an orthogonally similar
/// matrix and then on `A²`, whose spectral radius is `ρ(A)²`.
fn decompose(a: &DMatrix<f64>, depth: u32) -> Result<Decomposed> {
    let n = a.nrows();
    if let Some(d) = try_schur(a, f64::EPSILON, 100 * n.max(10)) {
        return Ok(Decomposed::Full(d));
    }
    let h = fixed_reflection(n);
    if let Some(d) = try_schur(&(&h * a * &h), f64::EPSILON, 1000 * n.max(10)) {
        return Ok(Decomposed::Full(Decomposition {
            radius: d.radius,
            q: &h * d.q,
            t: d.t,
        }));
    }
    if depth >= 3 {
        return Err(Error::NoConvergence(n));
    }
    let (r2, res2) = match decompose(&(a * a), depth + 1)? {
        Decomposed::Full(d) => {
            let res = (a * a - &d.q * &d.t * d.q.transpose()).norm();
            (d.radius, res)
        }
        Decomposed::Radius(r, res) => (r, res),
    };
    let radius = r2.sqrt();
    // d sqrt(x) = dx / (2 sqrt(x)); cap the blow-up near zero
    let res = if radius > 0.0 {
        res2 / (2.0 * radius)
    } else {
        res2.sqrt()
    };
    Ok(Decomposed::Radius(radius, res))
}

fn radius_and_residual(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    match decompose(a, 0)? {
        Decomposed::Full(d) => {
            let residual = (a - &d.q * d.t * d.q.transpose()).norm();
            Ok((d.radius, residual))
        }
        Decomposed::Radius(r, res) => Ok((r, res)),
    }
}

pub(crate) fn rho_dm(a: &DMatrix<f64>) -> Result<f64> {
    match a.nrows() {
        1 => Ok(a[(0, 0)].abs()),
        2 => Ok(rho_2x2(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)])),
        _ => Ok(radius_and_residual(a)?.0),
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    a.require_square()?;
    rho_dm(&a.inner)
}

/// Spectral radius with the Schur residual attached.
pub fn spectrum(a: &Matrix) -> Result<SpectralEstimate> {
    a.require_square()?;
    if a.rows() <= 2 {
        return Ok(SpectralEstimate {
            radius: rho_dm(&a.inner)?,
            residual: 0.0,
        });
    }
    let (radius, residual) = radius_and_residual(&a.inner)?;
    Ok(SpectralEstimate { radius, residual })
}

pub(crate) fn norm_dm(a: &DMatrix<f64>) -> f64 {
    match a.shape() {
        (1, 1) => a[(0, 0)].abs(),
        (2, 2) => {
            let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
            0.5 * ((p + s).hypot(r - q) + (p - s).hypot(q + r))
        }
        _ => a.singular_values().iter().copied().fold(0.0, f64::max),
    }
}

/// Largest singular value.
pub fn operator_norm(a: &Matrix) -> f64 {
    norm_dm(&a.inner)
}

/// Assembles a rectangular grid of blocks. Every block in a grid row must share
/// its row count, and every block in a grid column its column count.
pub fn block_matrix(blocks: &[Vec<Matrix>]) -> Result<Matrix> {
    let grid_rows = blocks.len();
    if grid_rows == 0 {
        return Err(Error::Shape("empty block grid".into()));
    }
    let grid_cols = blocks[0].len();
    if grid_cols == 0 || blocks.iter().any(|r| r.len() != grid_cols) {
        return Err(Error::Shape("block grid is ragged".into()));
    }
    let row_heights: Vec<usize> = blocks.iter().map(|r| r[0].rows()).collect();
    let col_widths: Vec<usize> = blocks[0].iter().map(Matrix::cols).collect();
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, block) in row.iter().enumerate() {
            if block.rows() != row_heights[bi] || block.cols() != col_widths[bj] {
                return Err(Error::Shape(format!(
                    "block ({bi}, {bj}) is {}x{}, expected {}x{}",
                    block.rows(),
                    block.cols(),
                    row_heights[bi],
                    col_widths[bj]
                )));
            }
        }
    }
    let total_rows: usize = row_heights.iter().sum();
    let total_cols: usize = col_widths.iter().sum();
    let mut out = DMatrix::zeros(total_rows, total_cols);
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, block) in row.iter().enumerate() {
            out.view_mut((r0, c0), (row_heights[bi], col_widths[bj]))
                .copy_from(&block.inner);
            c0 += col_widths[bj];
        }
        r0 += row_heights[bi];
    }
    Ok(Matrix::from_dmatrix_unchecked(out))
}
