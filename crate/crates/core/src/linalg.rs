//! Dense complex matrices, tensor structure and the spectral routines used
//! everywhere else. Eigen and singular value decompositions go through
//! nalgebra; everything else is done directly on the row-major storage.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative Hermiticity tolerance.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default PSD tolerance, scaled by the spectral norm.
pub const PSD_TOL: f64 = 1e-9;
/// Default relative threshold for ranks (Schmidt, Kraus).
pub const RANK_TOL: f64 = 1e-8;

pub const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub const fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>9.5}{:+.5}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = re(1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real rows; panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cl = rows[0].len();
        assert!(rows.iter().all(|row| row.len() == cl), "ragged rows");
        Self::from_fn(r, cl, |i, j| re(rows[i][j]))
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn real_diag(entries: &[f64]) -> Self {
        let v: Vec<C64> = entries.iter().map(|&x| re(x)).collect();
        Self::diag(&v)
    }

    /// Projector |i⟩⟨i| in dimension `n`.
    pub fn projector(n: usize, i: usize) -> Self {
        Self::unit(n, n, i, i)
    }

    /// Matrix unit |i⟩⟨j|.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(i, j)] = re(1.0);
        m
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_fn(v.len(), 1, |i, _| v[i])
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hilbert–Schmidt inner product Tr(self† other).
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest |m_ij − conj(m_ji)|; infinite for non-square input.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut d = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= HERMITIAN_TOL * (1.0 + self.max_abs())
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == re(0.0)))
    }

    /// (m + m†)/2.
    pub fn hermitian_part(&self) -> Self {
        let a = self.adjoint();
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + a[(i, j)]) * 0.5)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == re(0.0) {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Embeds the matrix into the top-left corner of a larger zero matrix.
    pub fn pad_to(&self, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| {
            if i < self.rows && j < self.cols {
                self[(i, j)]
            } else {
                re(0.0)
            }
        })
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in elementwise op");
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self + &rhs
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self - &rhs
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

/// Matrix product; panics on incompatible shapes (use [`ComplexMatrix::matmul`] to get an error).
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("incompatible shapes in matrix product")
    }
}

impl std::iter::Sum for ComplexMatrix {
    /// Panics on an empty iterator since the shape is unknown.
    fn sum<I: Iterator<Item = ComplexMatrix>>(mut iter: I) -> Self {
        let first = iter.next().expect("sum of an empty matrix iterator");
        iter.fold(first, |acc, m| &acc + &m)
    }
}

/// Local dimensions per party, party 1 leftmost (most significant).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyDims(Vec<usize>);

impl PartyDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Argument(format!("invalid party dimensions {dims:?}")));
        }
        Ok(Self(dims))
    }

    pub fn qubits(parties: usize) -> Self {
        Self(vec![2; parties.max(1)])
    }

    pub fn single(d: usize) -> Self {
        Self(vec![d.max(1)])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn parties(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn concat(&self, other: &PartyDims) -> PartyDims {
        PartyDims(self.0.iter().chain(&other.0).copied().collect())
    }

    /// Row-major strides, one per party.
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.0[k + 1];
        }
        s
    }

    /// Full-space offsets for every configuration of `parties`, ordered with
    /// the first listed party most significant.
    fn offsets(&self, parties: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut offs = vec![0usize];
        for &p in parties {
            let step = strides[p];
            offs = offs
                .iter()
                .flat_map(|&o| (0..self.0[p]).map(move |x| o + x * step))
                .collect();
        }
        offs
    }
}

/// Kronecker product of the factors, left to right.
pub fn kron(factors: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Argument("kron of an empty list".into()))?;
    Ok(rest.iter().fold(first.clone(), |acc, f| kron2(&acc, f)))
}

pub fn kron2(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = b.shape();
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Traces out every party not listed in `keep` (0-based party indices).
pub fn partial_trace(m: &ComplexMatrix, dims: &PartyDims, keep: &[usize]) -> Result<ComplexMatrix> {
    let d = dims.total();
    if m.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "{}x{} operator on a space of dimension {d}",
            m.rows, m.cols
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&p| p >= dims.parties()) {
        return Err(Error::Argument(format!(
            "party index out of range in {keep:?} for {} parties",
            dims.parties()
        )));
    }
    let traced: Vec<usize> = (0..dims.parties()).filter(|p| !kept.contains(p)).collect();
    let ko = dims.offsets(&kept);
    let to = dims.offsets(&traced);
    Ok(ComplexMatrix::from_fn(ko.len(), ko.len(), |a, b| {
        to.iter().map(|&t| m[(ko[a] + t, ko[b] + t)]).sum()
    }))
}

/// Hermitian eigendecomposition with eigenvalues ascending. The input is
/// symmetrized first, so it must already be Hermitian within tolerance.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::Dimension("eigh of a non-square matrix".into()));
    }
    if !m.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: m.hermitian_defect(),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(m.hermitian_part().to_nalgebra());
    let mut order: Vec<usize> = (0..m.rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(m.rows, m.rows, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigvalsh of a non-square matrix".into()));
    }
    if !m.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: m.hermitian_defect(),
        });
    }
    let mut v: Vec<f64> = m
        .hermitian_part()
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Singular values, descending.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    svd(m).1
}

/// Thin SVD (u, σ, v†) with singular values descending, by one-sided Jacobi
/// rotations on the columns of m (or of m† when m is wide).
pub fn svd(m: &ComplexMatrix) -> (ComplexMatrix, Vec<f64>, ComplexMatrix) {
    if m.rows < m.cols {
        let (u, s, vt) = svd(&m.adjoint());
        return (vt.adjoint(), s, u.adjoint());
    }
    let (rows, n) = m.shape();
    // column-major working copies
    let mut a: Vec<Vec<C64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n).map(|j| ket(n, j)).collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = a[p].iter().zip(&a[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // rotate column q's phase so the overlap is real, then a real rotation
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for cols in [&mut a, &mut v] {
                    for k in 0..cols[p].len() {
                        let x = cols[p][k];
                        let y = cols[q][k] * phase;
                        cols[p][k] = x * cs - y * sn;
                        cols[q][k] = x * sn + y * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = ComplexMatrix::zeros(rows, n);
    for (jj, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            for i in 0..rows {
                u[(i, jj)] = a[j][i] / norms[j];
            }
        }
    }
    complete_orthonormal_columns(&mut u, &s);
    let vt = ComplexMatrix::from_fn(n, n, |i, k| v[order[i]][k].conj());
    (u, s, vt)
}

/// Replaces the columns of u that belong to zero singular values with unit
/// vectors orthogonal to the rest (Gram–Schmidt against the standard basis).
fn complete_orthonormal_columns(u: &mut ComplexMatrix, s: &[f64]) {
    let (rows, n) = u.shape();
    let mut cand = 0;
    for j in 0..n {
        if s[j] > 0.0 {
            continue;
        }
        while cand < rows {
            let mut w = ket(rows, cand);
            cand += 1;
            for _ in 0..2 {
                for k in 0..n {
                    if k == j || (s[k] == 0.0 && k > j) {
                        continue;
                    }
                    let ov: C64 = (0..rows).map(|i| u[(i, k)].conj() * w[i]).sum();
                    for (i, wi) in w.iter_mut().enumerate() {
                        *wi -= ov * u[(i, k)];
                    }
                }
            }
            let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nw > 1e-6 {
                for (i, wi) in w.iter().enumerate() {
                    u[(i, j)] = wi / nw;
                }
                break;
            }
        }
    }
}

/// Sum of singular values. Hermitian input uses the eigenvalue route.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    if m.is_square() && m.is_hermitian() {
        if let Ok(ev) = eigvalsh(m) {
            return ev.iter().map(|x| x.abs()).sum();
        }
    }
    singular_values(m).iter().sum()
}

/// Largest singular value.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
}

/// λ_min(m) ≥ −tol·(1 + ‖m‖) with ‖m‖ the spectral norm.
pub fn psd_check(m: &ComplexMatrix, tol: f64) -> Result<PsdReport> {
    if !m.is_hermitian() {
        return Err(Error::Argument(format!(
            "psd_check on a non-Hermitian matrix (defect {:.3e})",
            m.hermitian_defect()
        )));
    }
    let ev = eigvalsh(m)?;
    let min = ev[0];
    let norm = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let threshold = -tol * (1.0 + norm);
    Ok(PsdReport {
        is_psd: min >= threshold,
        min_eigenvalue: min,
        threshold,
    })
}

/// Square root of a PSD matrix. Diagonal input is handled entrywise, the
/// general case spectrally with negative eigenvalues clamped to zero.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.is_diagonal() {
        let d: Vec<f64> = (0..m.rows).map(|i| m[(i, i)].re.max(0.0).sqrt()).collect();
        return Ok(ComplexMatrix::real_diag(&d));
    }
    let (vals, vecs) = eigh(m)?;
    Ok(spectral_fn(&vals, &vecs, |x| x.max(0.0).sqrt()))
}

/// Σ f(λ_k) v_k v_k†.
pub fn spectral_fn(vals: &[f64], vecs: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let n = vecs.rows;
    let fv: Vec<f64> = vals.iter().map(|&x| f(x)).collect();
    ComplexMatrix::from_fn(n, n, |i, j| {
        (0..vals.len())
            .filter(|&k| fv[k] != 0.0)
            .map(|k| vecs[(i, k)] * vecs[(j, k)].conj() * fv[k])
            .sum()
    })
}

/// Realigns an operator on A⊗B (dA, dB) into the dA²×dB² matrix whose
/// singular values are the operator-Schmidt coefficients across the cut.
pub fn realign(m: &ComplexMatrix, da: usize, db: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(da * da, db * db, |r, cl| {
        let (i1, j1) = (r / da, r % da);
        let (i2, j2) = (cl / db, cl % db);
        m[(i1 * db + i2, j1 * db + j2)]
    })
}

/// Fixes the phase of a factor so its trace (or, when the trace vanishes, its
/// largest entry) is real positive, and scales it to unit Frobenius norm.
/// Returns the normalized factor and the scalar that was removed.
pub fn normalize_factor(f: &ComplexMatrix) -> (ComplexMatrix, C64) {
    let norm = f.frobenius_norm();
    if norm == 0.0 {
        return (f.clone(), re(0.0));
    }
    let tr = f.trace();
    let anchor = if tr.norm() > 1e-8 * norm {
        tr
    } else {
        *f.data
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("nonempty matrix")
    };
    let phase = anchor / anchor.norm();
    let scalar = phase * norm;
    (f.scale(re(1.0) / scalar), scalar)
}

/// Splits `m` into local factors if it is a product operator across every
/// cut {1}|{2..P} recursively. Factors after the first are normalized (see
/// [`normalize_factor`]) and every scalar is absorbed into the first.
pub fn product_factor_check(m: &ComplexMatrix, dims: &PartyDims, tol: f64) -> Option<Vec<ComplexMatrix>> {
    let d = dims.total();
    if m.shape() != (d, d) {
        return None;
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        let mut fs: Vec<ComplexMatrix> = dims.dims().iter().map(|&k| ComplexMatrix::zeros(k, k)).collect();
        fs[1..].iter_mut().for_each(|f| *f = ComplexMatrix::identity(f.rows));
        return Some(fs);
    }
    let mut factors = Vec::with_capacity(dims.parties());
    let mut rest = m.clone();
    let mut scalar = re(1.0);
    for (k, &dk) in dims.dims().iter().enumerate() {
        if k + 1 == dims.parties() {
            let (f, s) = normalize_factor(&rest);
            factors.push(f);
            scalar *= s;
            break;
        }
        let db = rest.rows / dk;
        let r = realign(&rest, dk, db);
        let (u, s, vt) = svd(&r);
        let smax = s[0];
        if smax == 0.0 || s.iter().skip(1).any(|&x| x > tol * smax) {
            return None;
        }
        let a = ComplexMatrix::from_fn(dk, dk, |i, j| u[(i * dk + j, 0)]);
        let b = ComplexMatrix::from_fn(db, db, |i, j| vt[(0, i * db + j)] * smax);
        let (a, sa) = normalize_factor(&a);
        factors.push(a);
        scalar *= sa;
        rest = b;
    }
    factors[0] = factors[0].scale(scalar);
    let recon = kron(&factors).ok()?;
    if (&recon - m).frobenius_norm() <= tol * norm {
        Some(factors)
    } else {
        None
    }
}

/// Largest ratio σ₂/σ₁ of operator-Schmidt coefficients over the contiguous
/// cuts {1..k}|{k+1..P}; zero exactly for product operators.
pub fn schmidt_defect(m: &ComplexMatrix, dims: &PartyDims) -> f64 {
    let d = dims.dims();
    (1..d.len())
        .map(|k| {
            let da: usize = d[..k].iter().product();
            let db: usize = d[k..].iter().product();
            let s = singular_values(&realign(m, da, db));
            if s[0] == 0.0 {
                0.0
            } else {
                s.get(1).copied().unwrap_or(0.0) / s[0]
            }
        })
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the real space of n×n Hermitian matrices under the
/// Hilbert–Schmidt inner product: diagonal units, then (E_ij+E_ji)/√2 and
/// i(E_ij−E_ji)/√2 for i<j. Ordering matches [`hermitian_coords`].
pub fn hermitian_basis(n: usize) -> Vec<ComplexMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: Vec<ComplexMatrix> = (0..n).map(|i| ComplexMatrix::projector(n, i)).collect();
    for i in 0..n {
        for j in i + 1..n {
            let mut s = ComplexMatrix::zeros(n, n);
            s[(i, j)] = re(h);
            s[(j, i)] = re(h);
            out.push(s);
            let mut a = ComplexMatrix::zeros(n, n);
            a[(i, j)] = c(0.0, -h);
            a[(j, i)] = c(0.0, h);
            out.push(a);
        }
    }
    out
}

/// Real coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coords(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.rows;
    let s2 = std::f64::consts::SQRT_2;
    let mut v: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    for i in 0..n {
        for j in i + 1..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            v.push(s2 * z.re);
            v.push(-s2 * z.im);
        }
    }
    v
}

/// Inverse of [`hermitian_coords`].
pub fn from_hermitian_coords(n: usize, v: &[f64]) -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = re(v[i]);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = c(v[k] * h, -v[k + 1] * h);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Standard basis ket |i⟩ in dimension n.
pub fn ket(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![re(0.0); n];
    v[i] = re(1.0);
    v
}
