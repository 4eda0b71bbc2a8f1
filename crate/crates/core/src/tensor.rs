//! Dense complex matrices and the tensor-leg kernels shared by every other
//! module: Kronecker products, partial traces over labelled legs, leg
//! permutations, the basis transpose and positivity checks.
//!
//! Storage is row-major. For a matrix acting on `H_a ⊗ H_b` the first leg is
//! the most significant index, so `(i_a, i_b)` maps to `i_a * d_b + i_b`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CombError, Result};

pub type C64 = Complex64;

/// Default tolerance for Hermiticity, positivity and trace conditions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default cap on the number of entries of any constructed matrix.
pub const DEFAULT_DIM_CAP: usize = 1 << 20;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "COMBKIT_DIM_CAP";

/// The active entry cap, read once from `COMBKIT_DIM_CAP`.
pub fn dim_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(DIM_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_DIM_CAP)
    })
}

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    let cap = dim_cap();
    match rows.checked_mul(cols) {
        Some(n) if n <= cap => Ok(()),
        Some(n) => Err(CombError::Size { entries: n, cap }),
        None => Err(CombError::Size {
            entries: usize::MAX,
            cap,
        }),
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Wire form: `{rows, cols, data: [[re, im], ...]}` in row-major order.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = CombError;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        ComplexMatrix::new(
            r.rows,
            r.cols,
            r.data
                .into_iter()
                .map(|[re, im]| C64::new(re, im))
                .collect(),
        )
    }
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, validating length, finiteness
    /// and the entry cap.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CombError::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        check_cap(rows, cols)?;
        if data.len() != rows * cols {
            return Err(CombError::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(CombError::NonFinite(i));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(z: C64) -> Self {
        ComplexMatrix {
            rows: 1,
            cols: 1,
            data: vec![z],
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

    pub fn real_diag(entries: &[f64]) -> Self {
        let v: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&v)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    /// `|u⟩⟨v|`.
    pub fn ket_bra(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    /// `|u⟩⟨u|`.
    pub fn projector(u: &[C64]) -> Self {
        Self::ket_bra(u, u)
    }

    /// Matrix unit `|r⟩⟨c|` of the given shape.
    pub fn unit(rows: usize, cols: usize, r: usize, c: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(r, c)] = C64::new(1.0, 0.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn conj(&self) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * z).collect(),
        }
    }

    pub fn scale_real(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    /// Matrix product. Panics on an inner-dimension mismatch.
    pub fn dot(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matrix product of {}x{} and {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `Σ_ab self[a,b] · other[a,b]`, i.e. `tr[selfᵀ · other]`.
    pub fn bilinear_pairing(&self, other: &ComplexMatrix) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `⟨u|self|u⟩`.
    pub fn expectation(&self, u: &[C64]) -> C64 {
        let mu = self.apply(u);
        u.iter().zip(&mu).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest entrywise modulus of `self - other`; infinite on a shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - self†`.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Eigenvalues of the Hermitian part `(m + m†)/2`, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_square() {
            return Err(CombError::Shape(format!(
                "eigenvalues need a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let h = DMatrix::from_fn(n, n, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.hermitian_eigenvalues()?[0])
    }

    /// `(U ⊗ 1) · self · (U ⊗ 1)†` where `U` acts on the leading factor.
    pub fn conjugate_leading(&self, u: &ComplexMatrix) -> ComplexMatrix {
        let lead = u.rows;
        assert!(u.is_square() && self.is_square() && self.rows.is_multiple_of(lead));
        let rest = self.rows / lead;
        let n = self.rows;
        // left: (U ⊗ 1) self
        let mut left = Self::zeros(n, n);
        for a in 0..lead {
            for b in 0..lead {
                let uab = u[(a, b)];
                if uab.re == 0.0 && uab.im == 0.0 {
                    continue;
                }
                for r in 0..rest {
                    let src = &self.data[(b * rest + r) * n..(b * rest + r + 1) * n];
                    let dst = &mut left.data[(a * rest + r) * n..(a * rest + r + 1) * n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += uab * s;
                    }
                }
            }
        }
        // right: left (U ⊗ 1)†, column index (b, r) -> (a, r) with conj(U[a,b])
        let mut out = Self::zeros(n, n);
        for row in 0..n {
            let src = &left.data[row * n..(row + 1) * n];
            let dst = &mut out.data[row * n..(row + 1) * n];
            for a in 0..lead {
                for b in 0..lead {
                    let w = u[(a, b)].conj();
                    if w.re == 0.0 && w.im == 0.0 {
                        continue;
                    }
                    for r in 0..rest {
                        dst[a * rest + r] += src[b * rest + r] * w;
                    }
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.dot(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
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

/// One tensor factor of a matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub label: String,
    pub dim: usize,
}

/// Ordered factorization of a square matrix's index space into labelled legs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegStructure {
    legs: Vec<Leg>,
}

impl LegStructure {
    pub fn new<S: Into<String>>(legs: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut out: Vec<Leg> = Vec::new();
        for (label, dim) in legs {
            let label = label.into();
            if dim == 0 {
                return Err(CombError::Shape(format!("leg `{label}` has dimension 0")));
            }
            if out.iter().any(|l| l.label == label) {
                return Err(CombError::DuplicateLabel(label));
            }
            out.push(Leg { label, dim });
        }
        Ok(LegStructure { legs: out })
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.legs.iter().map(|l| l.dim).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.legs
            .iter()
            .position(|l| l.label == label)
            .ok_or_else(|| CombError::UnknownLabel(label.to_string()))
    }

    fn check_matrix(&self, m: &ComplexMatrix) -> Result<()> {
        if !m.is_square() {
            return Err(CombError::Shape(format!(
                "expected a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if m.rows() != self.total_dim() {
            return Err(CombError::DimensionMismatch(format!(
                "matrix dimension {} does not match leg product {}",
                m.rows(),
                self.total_dim()
            )));
        }
        Ok(())
    }
}

/// Splits a flat index into per-leg digits (first leg most significant).
fn digits(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (d, n)| acc * n + d)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows).ok_or(CombError::Size {
        entries: usize::MAX,
        cap: dim_cap(),
    })?;
    let cols = a.cols.checked_mul(b.cols).ok_or(CombError::Size {
        entries: usize::MAX,
        cap: dim_cap(),
    })?;
    check_cap(rows, cols)?;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let x = a[(i1, j1)];
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            for i2 in 0..b.rows {
                let dst = (i1 * b.rows + i2) * cols + j1 * b.cols;
                let src = &b.data[i2 * b.cols..(i2 + 1) * b.cols];
                for (d, s) in out.data[dst..dst + b.cols].iter_mut().zip(src) {
                    *d = x * s;
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a sequence, left to right. An empty sequence gives `[[1]]`.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut acc = ComplexMatrix::scalar(C64::new(1.0, 0.0));
    for f in factors {
        acc = kron(&acc, f)?;
    }
    Ok(acc)
}

/// Traces out the legs named in `traced`. The remaining legs keep their order.
pub fn partial_trace(
    m: &ComplexMatrix,
    structure: &LegStructure,
    traced: &[&str],
) -> Result<ComplexMatrix> {
    structure.check_matrix(m)?;
    let mut is_traced = vec![false; structure.legs.len()];
    for label in traced {
        is_traced[structure.position(label)?] = true;
    }
    if !is_traced.iter().any(|&t| t) {
        return Ok(m.clone());
    }
    let dims = structure.dims();
    let kept_dims: Vec<usize> = dims
        .iter()
        .zip(&is_traced)
        .filter(|(_, &t)| !t)
        .map(|(&d, _)| d)
        .collect();
    let traced_dims: Vec<usize> = dims
        .iter()
        .zip(&is_traced)
        .filter(|(_, &t)| t)
        .map(|(&d, _)| d)
        .collect();
    let n = m.rows;
    let kept_total: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();

    // group flat indices by their traced-leg multi-index
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); traced_total];
    let mut dig = vec![0; dims.len()];
    let mut kd = Vec::with_capacity(kept_dims.len());
    let mut td = Vec::with_capacity(traced_dims.len());
    for f in 0..n {
        digits(f, &dims, &mut dig);
        kd.clear();
        td.clear();
        for (k, &t) in is_traced.iter().enumerate() {
            if t {
                td.push(dig[k]);
            } else {
                kd.push(dig[k]);
            }
        }
        groups[compose(&td, &traced_dims)].push((f, compose(&kd, &kept_dims)));
    }
    let mut out = ComplexMatrix::zeros(kept_total, kept_total);
    for group in &groups {
        for &(r, kr) in group {
            let row = &m.data[r * n..(r + 1) * n];
            let dst = &mut out.data[kr * kept_total..(kr + 1) * kept_total];
            for &(c, kc) in group {
                dst[kc] += row[c];
            }
        }
    }
    Ok(out)
}

/// Reorders the legs of `m` so that they appear in `order` (a permutation of
/// the structure's labels). Returns the permuted matrix and its structure.
pub fn permute_legs(
    m: &ComplexMatrix,
    structure: &LegStructure,
    order: &[&str],
) -> Result<(ComplexMatrix, LegStructure)> {
    structure.check_matrix(m)?;
    if order.len() != structure.legs.len() {
        return Err(CombError::Shape(format!(
            "permutation names {} legs, structure has {}",
            order.len(),
            structure.legs.len()
        )));
    }
    let perm: Vec<usize> = order
        .iter()
        .map(|l| structure.position(l))
        .collect::<Result<_>>()?;
    let new_structure = LegStructure::new(perm.iter().map(|&p| {
        let leg = &structure.legs[p];
        (leg.label.clone(), leg.dim)
    }))?;
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok((m.clone(), new_structure));
    }
    let dims = structure.dims();
    let new_dims = new_structure.dims();
    let n = m.rows;
    let mut dig = vec![0; dims.len()];
    let mut nd = vec![0; dims.len()];
    let map: Vec<usize> = (0..n)
        .map(|f| {
            digits(f, &dims, &mut dig);
            for (k, &p) in perm.iter().enumerate() {
                nd[k] = dig[p];
            }
            compose(&nd, &new_dims)
        })
        .collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for (r, &nr) in map.iter().enumerate() {
        for (c, &nc) in map.iter().enumerate() {
            out.data[nr * n + nc] = m.data[r * n + c];
        }
    }
    Ok((out, new_structure))
}

/// `tr_B[(1_A ⊗ a) · m]` where `m` acts on `H_A ⊗ H_B` and `a` on `H_B`.
pub fn contract_trailing(m: &ComplexMatrix, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() || !a.is_square() || !m.rows.is_multiple_of(a.rows) {
        return Err(CombError::DimensionMismatch(format!(
            "cannot contract {}x{} operator against trailing {}x{} factor",
            m.rows, m.cols, a.rows, a.cols
        )));
    }
    let db = a.rows;
    let da = m.rows / db;
    let n = m.rows;
    let mut out = ComplexMatrix::zeros(da, da);
    // out[x,y] = Σ_{r,s} a[r,s] m[(x,s),(y,r)]
    for x in 0..da {
        for y in 0..da {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..db {
                for s in 0..db {
                    let w = a.data[r * db + s];
                    if w.re == 0.0 && w.im == 0.0 {
                        continue;
                    }
                    acc += w * m.data[(x * db + s) * n + (y * db + r)];
                }
            }
            out.data[x * da + y] = acc;
        }
    }
    Ok(out)
}

/// Transpose in the reference basis (no conjugation).
pub fn basis_transpose(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(CombError::Shape(format!(
            "basis transpose needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    Ok(m.transpose())
}

/// Unnormalized maximally entangled state `Φ+ = Σ_ij |ii⟩⟨jj|` on `C^d ⊗ C^d`.
pub fn max_entangled(d: usize) -> Result<ComplexMatrix> {
    if d == 0 {
        return Err(CombError::Shape(
            "maximally entangled state needs d >= 1".into(),
        ));
    }
    let n = d.checked_mul(d).ok_or(CombError::Size {
        entries: usize::MAX,
        cap: dim_cap(),
    })?;
    check_cap(n, n)?;
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = C64::new(1.0, 0.0);
        }
    }
    Ok(m)
}

/// Positive semidefiniteness: the smallest eigenvalue is at least `-tol`.
/// Errors if `m` is not square or not Hermitian within `tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(CombError::Shape(format!(
            "positivity needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let herr = m.hermiticity_error();
    if herr > tol {
        return Err(CombError::Shape(format!(
            "matrix is not Hermitian: deviation {herr:e} exceeds {tol:e}"
        )));
    }
    Ok(m.min_eigenvalue()? >= -tol)
}

/// Checks that `rho` is a density matrix: Hermitian, PSD and unit trace within `tol`.
pub fn check_density_matrix(rho: &ComplexMatrix, tol: f64) -> Result<()> {
    if !is_psd(rho, tol).map_err(|e| CombError::InvalidState(e.to_string()))? {
        return Err(CombError::InvalidState(
            "state is not positive semidefinite".into(),
        ));
    }
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > tol {
        return Err(CombError::InvalidState(format!(
            "state has trace {tr}, expected 1"
        )));
    }
    Ok(())
}

/// Checks `u u† = 1` within `tol`.
pub fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
    u.is_square()
        && u.dot(&u.adjoint())
            .max_abs_diff(&ComplexMatrix::identity(u.rows))
            <= tol
}
