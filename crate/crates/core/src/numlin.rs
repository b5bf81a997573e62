//! Dense complex matrices and the SVD-backed primitives everything else is
//! built on: rank, kernel and range bases, operator norms, unitarity.
//!
//! Matrices may be empty (zero rows or zero columns). Zero-multiplicity
//! blocks of a module are `0 × n` matrices, so every routine here accepts
//! them: the norm of an empty matrix is `0` and the kernel of a `0 × n`
//! matrix is the whole of `ℂⁿ`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative threshold below which a singular value counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// A dense complex matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major entries, checking the length and that
    /// every entry is finite.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        let m = CMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "from_real: wrong entry count");
        CMatrix {
            rows,
            cols,
            data: data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// A column vector.
    pub fn column_vector(entries: Vec<C64>) -> Self {
        CMatrix {
            rows: entries.len(),
            cols: 1,
            data: entries,
        }
    }

    /// The matrix unit `E_{r,c}` of the given shape.
    pub fn unit(rows: usize, cols: usize, r: usize, c: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(r, c)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("matrix has non-finite entries"))
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self* · other` without materializing the adjoint.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_mul: row mismatch");
        let mut out = CMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for r in 0..self.cols {
                let a = self[(k, r)].conj();
                if a == ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = CMatrix::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self[(r1, c1)];
                if a == ZERO {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out[(r1 * other.rows + r2, c1 * other.cols + c2)] = a * other[(r2, c2)];
                    }
                }
            }
        }
        out
    }

    pub fn column(&self, c: usize) -> CMatrix {
        CMatrix::from_fn(self.rows, 1, |r, _| self[(r, c)])
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> CMatrix {
        let start = range.start;
        CMatrix::from_fn(self.rows, range.len(), |r, c| self[(r, start + c)])
    }

    pub fn rows_range(&self, range: std::ops::Range<usize>) -> CMatrix {
        let start = range.start;
        CMatrix::from_fn(range.len(), self.cols, |r, c| self[(start + r, c)])
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn hstack(parts: &[CMatrix]) -> CMatrix {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "hstack: row mismatch");
            out.set_submatrix(0, c0, p);
            c0 += p.cols;
        }
        out
    }

    pub fn vstack(parts: &[CMatrix]) -> CMatrix {
        let cols = parts.first().map_or(0, |p| p.cols);
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack: column mismatch");
            out.set_submatrix(r0, 0, p);
            r0 += p.rows;
        }
        out
    }

    /// Block-diagonal matrix with the given blocks.
    pub fn block_diag(parts: &[CMatrix]) -> CMatrix {
        let rows = parts.iter().map(|p| p.rows).sum();
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            out.set_submatrix(r0, c0, p);
            r0 += p.rows;
            c0 += p.cols;
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus; `0` for empty matrices.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hilbert–Schmidt inner product `tr(self* · other)`.
    pub fn hs_inner(&self, other: &CMatrix) -> C64 {
        assert_eq!(self.shape(), other.shape(), "hs_inner: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Reshapes a row-major `rows × cols` matrix into a column vector.
    pub fn vectorize(&self) -> CMatrix {
        CMatrix::column_vector(self.data.clone())
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> CMatrix {
        assert_eq!(rows * cols, self.data.len(), "reshape: entry count");
        CMatrix {
            rows,
            cols,
            data: self.data.clone(),
        }
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> CMatrix {
        CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Singular value decomposition `M = U Σ V*` with singular values sorted in
/// decreasing order.
///
/// `v` is always square (`cols × cols`): the trailing columns past
/// `min(rows, cols)` complete an orthonormal basis of the domain, which is
/// what the kernel computations need. `u` holds one left singular vector per
/// column of `v` (zero columns for the padding).
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Number of singular values strictly above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        let cut = tol * smax;
        self.singular_values.iter().filter(|&&s| s > cut).count()
    }
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    m.check_finite()?;
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(Svd {
            u: CMatrix::zeros(rows, 0),
            singular_values: vec![],
            v: CMatrix::zeros(0, 0),
        });
    }
    if rows == 0 {
        return Ok(Svd {
            u: CMatrix::zeros(0, cols),
            singular_values: vec![0.0; cols],
            v: CMatrix::identity(cols),
        });
    }
    // Pad with zero rows so the thin decomposition already yields a full
    // right basis; padded rows of U stay zero and are dropped below.
    let padded_rows = rows.max(cols);
    let mut a = DMatrix::<C64>::zeros(padded_rows, cols);
    a.view_mut((0, 0), (rows, cols)).copy_from(&m.to_nalgebra());
    let dec = a
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::invalid("SVD failed to converge"))?;
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v_t requested");
    let sv = dec.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));

    let u_full = CMatrix::from_nalgebra(&u);
    let vt_full = CMatrix::from_nalgebra(&v_t);
    let u_sorted = CMatrix::from_fn(rows, order.len(), |r, c| u_full[(r, order[c])]);
    let v_sorted = CMatrix::from_fn(cols, order.len(), |r, c| vt_full[(order[c], r)].conj());
    let singular_values = order.iter().map(|&i| sv[i]).collect();
    Ok(Svd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    })
}

/// Singular values only, in decreasing order.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    m.check_finite()?;
    if m.is_empty() {
        return Ok(vec![0.0; m.rows.min(m.cols)]);
    }
    let mut sv: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

/// Orthonormal basis of `ker M`, one basis vector per column.
///
/// A singular value `σ` counts as zero when `σ ≤ tol · σ_max`.
pub fn kernel_basis(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !(tol > 0.0) {
        return Err(Error::invalid("kernel_basis: tol must be positive"));
    }
    let dec = svd(m)?;
    let r = dec.rank(tol);
    Ok(dec.v.columns(r..m.cols()))
}

/// Orthonormal basis of the column space of `M`.
pub fn range_basis(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    if !(tol > 0.0) {
        return Err(Error::invalid("range_basis: tol must be positive"));
    }
    let dec = svd(m)?;
    let r = dec.rank(tol);
    Ok(dec.u.columns(0..r))
}

pub fn rank(m: &CMatrix, tol: f64) -> Result<usize> {
    Ok(svd(m)?.rank(tol))
}

/// Largest singular value; `0` for empty matrices.
pub fn op_norm(m: &CMatrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// `op_norm` for matrices already known to be finite.
pub(crate) fn norm(m: &CMatrix) -> f64 {
    op_norm(m).unwrap_or(f64::INFINITY)
}

/// True iff `M` is square with `‖M*M − I‖ ≤ tol` and `‖MM* − I‖ ≤ tol`.
pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    unitarity_residual(m).is_some_and(|r| r <= tol)
}

/// `max(‖M*M − I‖, ‖MM* − I‖)`, or `None` when `M` is not square.
pub fn unitarity_residual(m: &CMatrix) -> Option<f64> {
    if !m.is_square() {
        return None;
    }
    let id = CMatrix::identity(m.rows());
    let a = norm(&(&m.adjoint_mul(m) - &id));
    let b = norm(&(&m.matmul(&m.adjoint()) - &id));
    Some(a.max(b))
}

/// Sine of the largest principal angle between the column spans of two
/// matrices with orthonormal columns, computed as `‖Q − P P*Q‖` so that
/// small angles keep full relative precision. Spans of different dimension
/// are at distance `1`.
pub fn subspace_distance(p: &CMatrix, q: &CMatrix) -> f64 {
    assert_eq!(p.rows(), q.rows(), "subspace_distance: ambient mismatch");
    if p.cols() != q.cols() {
        return 1.0;
    }
    let a = norm(&(q - &p.matmul(&p.adjoint_mul(q))));
    let b = norm(&(p - &q.matmul(&q.adjoint_mul(p))));
    a.max(b)
}

/// [`subspace_distance`] for bases whose columns are each supported on
/// coordinates of a single label; the spans are compared label by label.
/// Falls back to the global computation when a column mixes labels.
pub fn labelled_subspace_distance(p: &CMatrix, q: &CMatrix, labels: &[usize]) -> f64 {
    assert_eq!(p.rows(), labels.len(), "labelled_subspace_distance: labels");
    let support = |m: &CMatrix| -> Option<Vec<usize>> {
        (0..m.cols())
            .map(|c| {
                let mut lab = None;
                for r in 0..m.rows() {
                    if m[(r, c)] != ZERO {
                        match lab {
                            None => lab = Some(labels[r]),
                            Some(l) if l != labels[r] => return None,
                            _ => {}
                        }
                    }
                }
                Some(lab.unwrap_or(usize::MAX))
            })
            .collect()
    };
    let (Some(sp), Some(sq)) = (support(p), support(q)) else {
        return subspace_distance(p, q);
    };
    let mut keys: Vec<usize> = labels.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let mut worst: f64 = 0.0;
    for k in keys {
        let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == k).collect();
        let pick = |m: &CMatrix, sup: &[usize]| {
            let cols: Vec<usize> = (0..m.cols()).filter(|&c| sup[c] == k).collect();
            CMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
        };
        worst = worst.max(subspace_distance(&pick(p, &sp), &pick(q, &sq)));
    }
    // Zero columns would carry no label; they cannot occur in orthonormal bases.
    if sp.contains(&usize::MAX) || sq.contains(&usize::MAX) {
        return 1.0;
    }
    worst
}

/// Orthogonal projector onto the column span of `m` (columns need not be
/// orthonormal).
pub fn projector_onto_span(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let b = range_basis(m, tol)?;
    Ok(b.matmul(&b.adjoint()))
}

/// Matrix of a linear map given as a function on coordinate vectors, by
/// probing the standard basis.
pub fn matrix_of_linear<F>(dim_in: usize, dim_out: usize, f: F) -> Result<CMatrix>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut out = CMatrix::zeros(dim_out, dim_in);
    let mut e = vec![ZERO; dim_in];
    for c in 0..dim_in {
        e[c] = ONE;
        let col = f(&e)?;
        e[c] = ZERO;
        if col.len() != dim_out {
            return Err(Error::invalid(format!(
                "linear map produced {} coordinates, expected {dim_out}",
                col.len()
            )));
        }
        for (r, z) in col.into_iter().enumerate() {
            out[(r, c)] = z;
        }
    }
    Ok(out)
}

/// Kernel basis of a map that does not mix coordinates with different
/// labels, computed one label at a time.
///
/// Returns the orthonormal basis (columns in the ambient input coordinates)
/// and the largest entry that links coordinates of different labels, which
/// must be zero for the decomposition to be valid.
pub fn labelled_kernel_basis(
    m: &CMatrix,
    in_labels: &[usize],
    out_labels: &[usize],
    tol: f64,
) -> Result<(CMatrix, f64)> {
    assert_eq!(m.cols(), in_labels.len(), "labelled_kernel_basis: input labels");
    assert_eq!(m.rows(), out_labels.len(), "labelled_kernel_basis: output labels");
    let mut cross: f64 = 0.0;
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if in_labels[c] != out_labels[r] {
                cross = cross.max(m[(r, c)].norm());
            }
        }
    }
    let mut labels: Vec<usize> = in_labels.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let mut pieces = Vec::new();
    for &k in &labels {
        let cols: Vec<usize> = (0..in_labels.len()).filter(|&c| in_labels[c] == k).collect();
        let rows: Vec<usize> = (0..out_labels.len()).filter(|&r| out_labels[r] == k).collect();
        let sub = CMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])]);
        let ker = kernel_basis(&sub, tol)?;
        let mut embedded = CMatrix::zeros(m.cols(), ker.cols());
        for (a, &c) in cols.iter().enumerate() {
            for b in 0..ker.cols() {
                embedded[(c, b)] = ker[(a, b)];
            }
        }
        pieces.push(embedded);
    }
    let basis = if pieces.is_empty() {
        CMatrix::zeros(m.cols(), 0)
    } else {
        CMatrix::hstack(&pieces)
    };
    Ok((basis, cross))
}

/// `H^{-1/2}` for a Hermitian positive definite matrix.
pub fn inverse_sqrt_hermitian(h: &CMatrix) -> Result<CMatrix> {
    let d = svd(h)?;
    if d.singular_values.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid("inverse square root of a singular matrix"));
    }
    let s = CMatrix::diag(
        &d.singular_values
            .iter()
            .map(|&x| C64::new(1.0 / x.sqrt(), 0.0))
            .collect::<Vec<_>>(),
    );
    Ok(d.v.matmul(&s).matmul(&d.v.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    // Deterministic pseudo-random entries for unit tests.
    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        CMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    /// Rank by Gaussian elimination with partial pivoting; independent of
    /// the SVD path.
    fn row_reduce_rank(m: &CMatrix, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = a.shape();
        let scale = a.max_abs().max(1.0);
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows {
                break;
            }
            let (piv, best) = (rank..rows)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((rank, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= tol * scale {
                continue;
            }
            for c2 in 0..cols {
                let tmp = a[(rank, c2)];
                a[(rank, c2)] = a[(piv, c2)];
                a[(piv, c2)] = tmp;
            }
            for r in 0..rows {
                if r != rank {
                    let f = a[(r, col)] / a[(rank, col)];
                    for c2 in 0..cols {
                        let v = a[(rank, c2)];
                        a[(r, c2)] -= f * v;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Largest singular value by power iteration on `M*M`.
    fn power_iteration_norm(m: &CMatrix) -> f64 {
        let g = m.adjoint_mul(m);
        let mut v = CMatrix::from_fn(g.rows(), 1, |r, _| c(1.0 + r as f64 * 0.37, 0.25));
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w = g.matmul(&v);
            let n = w.frobenius_norm();
            if n == 0.0 {
                return 0.0;
            }
            lambda = n / v.frobenius_norm();
            v = w.scale_real(1.0 / n);
        }
        lambda.sqrt()
    }

    #[test]
    fn kernel_of_rank_one_diagonal() {
        let m = CMatrix::diag(&[ONE, ZERO]);
        let k = kernel_basis(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.shape(), (2, 1));
        assert!(k[(0, 0)].norm() < 1e-14);
        assert!((k[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_of_zero_matrix_is_everything() {
        let k = kernel_basis(&CMatrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.shape(), (2, 2));
        assert!(is_unitary(&k, 1e-14));
    }

    #[test]
    fn kernel_of_low_rank_product_matches_row_reduction() {
        let m = lcg_matrix(3, 2, 7).matmul(&lcg_matrix(2, 5, 11));
        let rank_rr = row_reduce_rank(&m, 1e-10);
        assert_eq!(rank_rr, 2);
        let k = kernel_basis(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.cols(), 5 - rank_rr);
        assert_eq!(k.cols(), 3);
        assert!(norm(&m.matmul(&k)) <= 1e-10 * norm(&m).max(1.0));
        let gram = k.adjoint_mul(&k);
        assert!(norm(&(&gram - &CMatrix::identity(3))) < 1e-12);
    }

    #[test]
    fn empty_matrix_conventions() {
        assert_eq!(op_norm(&CMatrix::zeros(0, 3)).unwrap(), 0.0);
        assert_eq!(op_norm(&CMatrix::zeros(3, 0)).unwrap(), 0.0);
        let k = kernel_basis(&CMatrix::zeros(0, 3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k, CMatrix::identity(3));
        let k = kernel_basis(&CMatrix::zeros(3, 0), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.shape(), (0, 0));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut m = CMatrix::identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(kernel_basis(&m, 1e-10), Err(Error::InvalidInput(_))));
        assert!(matches!(op_norm(&m), Err(Error::InvalidInput(_))));
        assert!(kernel_basis(&CMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&CMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        let d = CMatrix::diag(&[c(2.0, 0.0), ONE]);
        assert!((op_norm(&d).unwrap() - 2.0).abs() < 1e-14);
        let m = lcg_matrix(4, 3, 99);
        let oracle = power_iteration_norm(&m);
        assert!((op_norm(&m).unwrap() - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn unitarity_examples() {
        assert!(is_unitary(&CMatrix::identity(4), 1e-12));
        for theta in [0.0, 0.3, 1.7, std::f64::consts::PI] {
            let u = CMatrix::diag(&[ONE, C64::from_polar(1.0, theta)]);
            assert!(is_unitary(&u, 1e-12));
        }
        // 2x3 isometry (rows orthonormal) is not square.
        let iso = CMatrix::from_real(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(!is_unitary(&iso, 1e-12));
        assert!(!is_unitary(&CMatrix::diag(&[ONE, c(2.0, 0.0)]), 1e-12));
    }

    #[test]
    fn wide_and_tall_svd_reconstruct() {
        for (r, cc) in [(2, 5), (5, 2), (3, 3), (1, 4)] {
            let m = lcg_matrix(r, cc, (r * 10 + cc) as u64);
            let d = svd(&m).unwrap();
            let n = r.min(cc);
            let sigma = CMatrix::diag(
                &d.singular_values[..n].iter().map(|&s| c(s, 0.0)).collect::<Vec<_>>(),
            );
            let rec = d.u.columns(0..n).matmul(&sigma).matmul(&d.v.columns(0..n).adjoint());
            assert!(norm(&(&rec - &m)) < 1e-12);
            assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn subspace_distance_detects_equal_spans() {
        let a = lcg_matrix(5, 2, 3);
        let p = range_basis(&a, 1e-12).unwrap();
        let mix = CMatrix::from_real(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let q = range_basis(&a.matmul(&mix), 1e-12).unwrap();
        assert!(subspace_distance(&p, &q) < 1e-12);
        let other = range_basis(&lcg_matrix(5, 2, 4), 1e-12).unwrap();
        assert!(subspace_distance(&p, &other) > 1e-3);
    }
}
