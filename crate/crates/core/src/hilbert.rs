//! Composite-space bookkeeping: factor layouts, local operators and their
//! embeddings, spin/boson primitives, product states.
//!
//! Factor order is fixed: system factors first, environment factors after.
//! Qubit basis state `|0>` is the `+1` eigenstate of `σᶻ`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron_all, partial_trace, ComplexMatrix, SparseVec, C64, I, ONE, ZERO};
use crate::tolerances::{max_dim, TOLERANCES};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    dims: Vec<usize>,
    system_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    System,
    Composite,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>, system_count: usize) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Layout(format!("invalid factor dimensions {dims:?}")));
        }
        if system_count == 0 || system_count > dims.len() {
            return Err(Error::Layout(format!(
                "system_count {system_count} outside 1..={}",
                dims.len()
            )));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if total > max_dim() {
            return Err(Error::SpaceTooLarge {
                requested: total,
                limit: max_dim(),
            });
        }
        Ok(Self { dims, system_count })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn system_count(&self) -> usize {
        self.system_count
    }

    pub fn factor_count(&self) -> usize {
        self.dims.len()
    }

    pub fn system_dims(&self) -> &[usize] {
        &self.dims[..self.system_count]
    }

    pub fn env_dims(&self) -> &[usize] {
        &self.dims[self.system_count..]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dims().iter().product()
    }

    pub fn env_dim(&self) -> usize {
        self.env_dims().iter().product()
    }

    pub fn scope_dims(&self, scope: Scope) -> &[usize] {
        match scope {
            Scope::System => self.system_dims(),
            Scope::Composite => &self.dims,
        }
    }

    pub fn partial_trace(&self, m: &ComplexMatrix, keep: &[usize]) -> Result<ComplexMatrix> {
        partial_trace(m, &self.dims, keep)
    }

    /// Reduced system state: traces out every environment factor.
    pub fn trace_env(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.system_count == self.dims.len() {
            return Ok(m.clone());
        }
        let keep: Vec<usize> = (0..self.system_count).collect();
        partial_trace(m, &self.dims, &keep)
    }
}

/// An operator acting on a single factor.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub site: usize,
    pub op: ComplexMatrix,
    pub label: String,
}

impl LocalOperator {
    pub fn new(site: usize, op: ComplexMatrix, label: impl Into<String>) -> Self {
        Self {
            site,
            op,
            label: label.into(),
        }
    }

    pub fn spin(kind: SpinKind, site: usize) -> Self {
        Self::new(site, spin_op(kind), format!("{kind}@{site}"))
    }

    pub fn identity(site: usize, dim: usize) -> Self {
        Self::new(site, ComplexMatrix::identity(dim), format!("identity@{site}"))
    }
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` over the factors of `scope`.
pub fn embed(local: &LocalOperator, layout: &SpaceLayout, scope: Scope) -> Result<ComplexMatrix> {
    embed_product(&[local], layout, scope)
}

/// Tensor product of several operators on distinct sites, identity elsewhere.
pub fn embed_product(locals: &[&LocalOperator], layout: &SpaceLayout, scope: Scope) -> Result<ComplexMatrix> {
    let dims = layout.scope_dims(scope);
    let mut factors: Vec<Option<&ComplexMatrix>> = vec![None; dims.len()];
    for local in locals {
        if local.site >= dims.len() {
            return Err(Error::BadSite {
                site: local.site,
                count: dims.len(),
            });
        }
        if local.op.dim() != dims[local.site] {
            return Err(Error::Dimension(format!(
                "operator {} has dimension {} but factor {} has dimension {}",
                local.label,
                local.op.dim(),
                local.site,
                dims[local.site]
            )));
        }
        if factors[local.site].replace(&local.op).is_some() {
            return Err(Error::BadSite {
                site: local.site,
                count: dims.len(),
            });
        }
    }
    // collapse runs of identities so the kron chain stays short
    let mut chain: Vec<ComplexMatrix> = Vec::new();
    let mut pending_identity = 1usize;
    for (f, d) in factors.into_iter().zip(dims) {
        match f {
            Some(op) => {
                if pending_identity > 1 {
                    chain.push(ComplexMatrix::identity(pending_identity));
                }
                pending_identity = 1;
                chain.push(op.clone());
            }
            None => pending_identity *= d,
        }
    }
    if pending_identity > 1 || chain.is_empty() {
        chain.push(ComplexMatrix::identity(pending_identity));
    }
    kron_all(&chain)
}

/// Adds `coef · (⊗ locals)` into `acc` without materializing the embedding.
///
/// Cost is `dim · Π d_site` over the active sites rather than `dim²`.
pub fn add_embedded(acc: &mut ComplexMatrix, coef: C64, locals: &[&LocalOperator], dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if acc.dim() != total {
        return Err(Error::Dimension(format!(
            "accumulator has dimension {} but layout has {total}",
            acc.dim()
        )));
    }
    let mut seen = vec![false; dims.len()];
    for local in locals {
        if local.site >= dims.len() || seen[local.site] {
            return Err(Error::BadSite {
                site: local.site,
                count: dims.len(),
            });
        }
        seen[local.site] = true;
        if local.op.dim() != dims[local.site] {
            return Err(Error::Dimension(format!(
                "operator {} has dimension {} but factor {} has dimension {}",
                local.label,
                local.op.dim(),
                local.site,
                dims[local.site]
            )));
        }
    }
    let strides: Vec<usize> = locals
        .iter()
        .map(|l| dims[l.site + 1..].iter().product())
        .collect();
    let sizes: Vec<usize> = locals.iter().map(|l| dims[l.site]).collect();
    let combos: usize = sizes.iter().product();
    let mut row_digits = vec![0usize; locals.len()];
    let mut col_digits = vec![0usize; locals.len()];
    for r in 0..total {
        let mut base = r;
        for (k, (&stride, &d)) in strides.iter().zip(&sizes).enumerate() {
            row_digits[k] = (r / stride) % d;
            base -= row_digits[k] * stride;
        }
        col_digits.iter_mut().for_each(|c| *c = 0);
        for _ in 0..combos {
            let mut val = coef;
            let mut col = base;
            for (k, local) in locals.iter().enumerate() {
                val *= local.op[(row_digits[k], col_digits[k])];
                col += col_digits[k] * strides[k];
            }
            if val != ZERO {
                acc[(r, col)] += val;
            }
            // odometer over column digits
            for k in (0..locals.len()).rev() {
                col_digits[k] += 1;
                if col_digits[k] < sizes[k] {
                    break;
                }
                col_digits[k] = 0;
            }
        }
    }
    Ok(())
}

/// Applies a single-factor operator to a composite vector.
pub fn apply_local(op: &ComplexMatrix, site: usize, dims: &[usize], x: &[(usize, C64)]) -> SparseVec {
    let d = dims[site];
    let stride: usize = dims[site + 1..].iter().product();
    let mut out: Vec<(usize, C64)> = Vec::with_capacity(x.len() * d);
    for &(idx, v) in x {
        let digit = (idx / stride) % d;
        let base = idx - digit * stride;
        for r in 0..d {
            let m = op[(r, digit)];
            if m != ZERO {
                out.push((base + r * stride, m * v));
            }
        }
    }
    out.sort_unstable_by_key(|&(i, _)| i);
    let mut merged: SparseVec = Vec::with_capacity(out.len());
    for (i, v) in out {
        match merged.last_mut() {
            Some((j, acc)) if *j == i => *acc += v,
            _ => merged.push((i, v)),
        }
    }
    merged
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinKind {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl fmt::Display for SpinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpinKind::X => "sigma_x",
            SpinKind::Y => "sigma_y",
            SpinKind::Z => "sigma_z",
            SpinKind::Plus => "sigma_plus",
            SpinKind::Minus => "sigma_minus",
        };
        f.write_str(s)
    }
}

impl FromStr for SpinKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "sigma_x" => Ok(SpinKind::X),
            "y" | "sigma_y" => Ok(SpinKind::Y),
            "z" | "sigma_z" => Ok(SpinKind::Z),
            "plus" | "sigma_plus" => Ok(SpinKind::Plus),
            "minus" | "sigma_minus" => Ok(SpinKind::Minus),
            other => Err(Error::InvalidParameter(format!("unknown spin operator `{other}`"))),
        }
    }
}

/// Pauli and ladder matrices in the `{|0>, |1>}` basis with `σᶻ = diag(1, -1)`.
///
/// `σ⁺ = (σˣ + iσʸ)/2 = |0><1|` raises `σᶻ` by two.
pub fn spin_op(kind: SpinKind) -> ComplexMatrix {
    let z = ZERO;
    let rows: [[C64; 2]; 2] = match kind {
        SpinKind::X => [[z, ONE], [ONE, z]],
        SpinKind::Y => [[z, -I], [I, z]],
        SpinKind::Z => [[ONE, z], [z, -ONE]],
        SpinKind::Plus => [[z, ONE], [z, z]],
        SpinKind::Minus => [[z, z], [ONE, z]],
    };
    ComplexMatrix::from_fn(2, |r, c| rows[r][c])
}

/// Truncated annihilation and creation operators, `a|n> = √n |n-1>`.
pub fn boson_ops(cutoff: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if cutoff < 2 {
        return Err(Error::InvalidParameter(format!("Fock cutoff {cutoff} must be at least 2")));
    }
    let mut a = ComplexMatrix::zeros(cutoff);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    Ok((a, ad))
}

/// Tensor product of single-site kets.
pub fn product_ket(kets: &[Vec<C64>]) -> Result<Vec<C64>> {
    if kets.is_empty() {
        return Err(Error::Dimension("empty product state".into()));
    }
    let mut total = 1usize;
    for k in kets {
        let norm = k.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if k.is_empty() || (norm - 1.0).abs() > TOLERANCES.normalization {
            return Err(Error::NotNormalized { norm });
        }
        total = total.saturating_mul(k.len());
    }
    if total > max_dim() {
        return Err(Error::SpaceTooLarge {
            requested: total,
            limit: max_dim(),
        });
    }
    let mut psi = vec![ONE];
    for k in kets {
        psi = psi
            .iter()
            .flat_map(|&a| k.iter().map(move |&b| a * b))
            .collect();
    }
    Ok(psi)
}

/// Density matrix of a tensor-product pure state.
pub fn product_state(kets: &[Vec<C64>]) -> Result<ComplexMatrix> {
    let psi = product_ket(kets)?;
    ComplexMatrix::outer(&psi, &psi)
}
