//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on square matrices stored row-major. Hermitian
//! eigendecompositions are cached by callers so that `exp(-iHt)` becomes a
//! cheap re-synthesis for every time point.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances::{max_dim, TOLERANCES};

pub mod propagator;

pub use propagator::{Propagator, SparseVec};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        if self.dim <= 8 {
            for r in 0..self.dim {
                let row: Vec<String> = self
                    .row(r)
                    .iter()
                    .map(|z| format!("{:+.4}{:+.4}i", z.re, z.im))
                    .collect();
                writeln!(f, "  [{}]", row.join(", "))?;
            }
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                m.data[r * dim + c] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from row-major data. Fails if the length is not a
    /// perfect square.
    pub fn from_vec(data: Vec<C64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != data.len() {
            return Err(Error::Dimension(format!(
                "{} entries do not form a square matrix",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("rows do not form a square matrix".into()));
        }
        Ok(Self {
            dim,
            data: rows.concat(),
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |r, c| C64::new(rows[r][c], 0.0))
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diagonal(&d)
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Result<Self> {
        if u.len() != v.len() || u.is_empty() {
            return Err(Error::Dimension("outer product of mismatched vectors".into()));
        }
        Ok(Self::from_fn(u.len(), |r, c| u[r] * v[c].conj()))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.dim).map(|r| self.data[r * self.dim + c]).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self * other` with zero entries of `self` skipped, which makes
    /// block-sparse left factors cheap.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            let out_row = &mut out[r * n..(r + 1) * n];
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: n, data: out }
    }

    /// `[self, other] = self*other - other*self`
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Tr(self * other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for r in 0..n {
            for k in 0..n {
                acc += self.data[r * n + k] * other.data[k * n + r];
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim;
        for r in 0..n {
            for c in r..n {
                if (self.data[r * n + c] - self.data[c * n + r].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&Self::identity(self.dim))
            <= tol
    }

    /// Hermitian with no eigenvalue below `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        match herm_eig(self) {
            Ok(sd) => sd.eigenvalues.first().is_none_or(|&l| l >= -tol),
            Err(_) => false,
        }
    }

    /// Unit trace, Hermitian and positive semidefinite.
    pub fn is_density_matrix(&self, tol: f64) -> bool {
        (self.trace() - ONE).norm() <= tol && self.is_psd(tol)
    }

    /// `(self + self†) / 2`
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| (self.data[r * n + c] + self.data[c * n + r].conj()) * 0.5)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&z| z == ZERO)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Kronecker product. Entry `(i*db + k, j*db + l)` is `a[i,j] * b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (da, db) = (a.dim, b.dim);
    let dim = da
        .checked_mul(db)
        .filter(|&d| d <= max_dim())
        .ok_or(Error::SpaceTooLarge {
            requested: da.saturating_mul(db),
            limit: max_dim(),
        })?;
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..da {
        for j in 0..da {
            let x = a.data[i * da + j];
            if x == ZERO {
                continue;
            }
            for k in 0..db {
                let dst = (i * db + k) * dim + j * db;
                let src = &b.data[k * db..(k + 1) * db];
                for (o, &y) in out.data[dst..dst + db].iter_mut().zip(src) {
                    *o = x * y;
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Dimension("empty Kronecker product".into()))?;
    rest.iter().try_fold(first.clone(), |acc, f| kron(&acc, f))
}

/// Partial trace over every factor of `dims` not listed in `keep`.
///
/// `keep` is interpreted as a set; the kept factors appear in the result in
/// their original order.
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || dims.contains(&0) || total != m.dim {
        return Err(Error::Layout(format!(
            "factor dimensions {:?} do not multiply to matrix dimension {}",
            dims, m.dim
        )));
    }
    if keep.is_empty() || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Layout(format!(
            "keep set {:?} is empty or out of range for {} factors",
            keep,
            dims.len()
        )));
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        kept[k] = true;
    }
    let kept_dims: Vec<usize> = (0..dims.len()).filter(|&i| kept[i]).map(|i| dims[i]).collect();
    let traced_dims: Vec<usize> = (0..dims.len()).filter(|&i| !kept[i]).map(|i| dims[i]).collect();
    let out_dim: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();

    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let kept_strides: Vec<usize> = (0..dims.len()).filter(|&i| kept[i]).map(|i| strides[i]).collect();
    let traced_strides: Vec<usize> = (0..dims.len()).filter(|&i| !kept[i]).map(|i| strides[i]).collect();

    let offsets = |sizes: &[usize], strides: &[usize], count: usize| -> Vec<usize> {
        (0..count)
            .map(|mut idx| {
                let mut off = 0;
                for f in (0..sizes.len()).rev() {
                    off += (idx % sizes[f]) * strides[f];
                    idx /= sizes[f];
                }
                off
            })
            .collect()
    };
    let kept_off = offsets(&kept_dims, &kept_strides, out_dim);
    let traced_off = offsets(&traced_dims, &traced_strides, traced_total);

    let mut out = ComplexMatrix::zeros(out_dim);
    for (r, &ro) in kept_off.iter().enumerate() {
        for (c, &co) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += m[(ro + t, co + t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a Hermitian matrix: `h = V diag(λ) V†`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: ComplexMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_function(|l| C64::new(l, 0.0))
    }

    /// `V f(Λ) V†`
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let fl: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut vf = v.clone();
        for r in 0..n {
            for c in 0..n {
                vf[(r, c)] *= fl[c];
            }
        }
        vf.matmul(&v.adjoint())
    }
}

/// Hermitian eigendecomposition.
///
/// The input is symmetrized first. Independent blocks of the sparsity
/// pattern are found and diagonalized separately, so the eigenvectors of a
/// block-diagonal matrix carry exact zeros outside their block. Eigenvalues
/// are sorted ascending (ties broken by the index of the first nonzero
/// component) and every eigenvector has its first nonzero component real
/// and positive.
pub fn herm_eig(h: &ComplexMatrix) -> Result<SpectralDecomposition> {
    let tol = TOLERANCES.hermitian;
    if !h.is_hermitian(tol * h.max_abs().max(1.0)) {
        return Err(Error::NotHermitian {
            deviation: h.max_abs_diff(&h.adjoint()),
        });
    }
    let h = h.hermitian_part();
    let n = h.dim;
    let blocks = connected_blocks(&h);

    let mut pairs: Vec<(f64, usize, Vec<(usize, C64)>)> = Vec::with_capacity(n);
    for block in &blocks {
        let b = block.len();
        if b == 1 {
            let i = block[0];
            pairs.push((h[(i, i)].re, i, vec![(i, ONE)]));
            continue;
        }
        let sub = DMatrix::from_fn(b, b, |r, c| h[(block[r], block[c])]);
        let eig = nalgebra::SymmetricEigen::new(sub);
        for k in 0..b {
            let col: Vec<(usize, C64)> = (0..b).map(|r| (block[r], eig.eigenvectors[(r, k)])).collect();
            let lead = col
                .iter()
                .find(|(_, z)| z.norm() > 1e-12)
                .map(|(i, _)| *i)
                .unwrap_or(block[0]);
            pairs.push((eig.eigenvalues[k], lead, fix_phase(col)));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut v = ComplexMatrix::zeros(n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (c, (l, _, col)) in pairs.into_iter().enumerate() {
        eigenvalues.push(l);
        for (r, z) in col {
            v[(r, c)] = z;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: v,
    })
}

fn fix_phase(mut col: Vec<(usize, C64)>) -> Vec<(usize, C64)> {
    let norm = col.iter().map(|(_, z)| z.norm_sqr()).sum::<f64>().sqrt();
    if let Some(&(_, lead)) = col.iter().find(|(_, z)| z.norm() > 1e-12) {
        let phase = lead.conj() / lead.norm() / norm;
        for (_, z) in col.iter_mut() {
            *z *= phase;
        }
    }
    col
}

/// Connected components of the graph with an edge wherever `h[r,c] != 0`.
fn connected_blocks(h: &ComplexMatrix) -> Vec<Vec<usize>> {
    let n = h.dim;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for r in 0..n {
        for c in (r + 1)..n {
            if h[(r, c)] != ZERO {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        by_root[root].push(i);
    }
    by_root.into_iter().filter(|b| !b.is_empty()).collect()
}

/// `exp(-i H t)` from a cached decomposition of `H`.
pub fn evolve_unitary(sd: &SpectralDecomposition, t: f64) -> ComplexMatrix {
    sd.apply_function(|l| C64::from_polar(1.0, -l * t))
}

fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let svd = nalgebra::linalg::SVD::new(m.to_nalgebra(), false, false);
    svd.singular_values.iter().copied().collect()
}

/// Largest singular value.
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    if m.is_zero() {
        return 0.0;
    }
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Largest eigenvalue of `m† m`, i.e. the squared spectral norm.
pub fn spectral_norm_squared(m: &ComplexMatrix) -> f64 {
    spectral_norm(m).powi(2)
}

/// Sum of singular values. Hermitian input takes the `Σ|λ|` route, which
/// keeps tiny eigenvalues from being inflated by a square root.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    if m.is_zero() {
        return 0.0;
    }
    let scale = m.max_abs();
    if m.is_hermitian(1e-13 * scale.max(1.0)) {
        if let Ok(sd) = herm_eig(m) {
            return sd.eigenvalues.iter().map(|l| l.abs()).sum();
        }
    }
    singular_values(m).into_iter().sum()
}

/// Gibbs state `exp(-h/T) / Tr exp(-h/T)` with `k_B = 1`.
pub fn thermal_state(h: &ComplexMatrix, temperature: f64) -> Result<ComplexMatrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    let sd = herm_eig(h)?;
    let ground = sd.eigenvalues[0];
    let weights: Vec<f64> = sd
        .eigenvalues
        .iter()
        .map(|&l| (-(l - ground) / temperature).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let rho = sd.apply_function(|l| C64::new((-(l - ground) / temperature).exp() / z, 0.0));
    Ok(rho.hermitian_part())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub fn random_matrix(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    pub fn random_hermitian(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
        random_matrix(rng, dim).hermitian_part()
    }

    pub fn random_density(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
        let g = random_matrix(rng, dim);
        let p = g.matmul(&g.adjoint());
        let tr = p.trace().re;
        p.scale_real(1.0 / tr)
    }
}
