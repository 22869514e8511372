//! Sparse-aware application of `exp(-iHt)` to vectors.
//!
//! The eigenvector matrix of a block-structured Hamiltonian is mostly exact
//! zeros; storing only its nonzero entries by row and by column makes
//! `V diag(e^{-iλt}) V† x` cost proportional to the overlap of `x` with the
//! blocks it touches rather than to `dim²`.

use super::{SpectralDecomposition, C64, ZERO};

/// Sparse vector as `(index, value)` pairs with ascending indices.
pub type SparseVec = Vec<(usize, C64)>;

#[derive(Clone, Debug)]
pub struct Propagator {
    dim: usize,
    eigenvalues: Vec<f64>,
    cols: Vec<Vec<(usize, C64)>>,
    rows: Vec<Vec<(usize, C64)>>,
}

/// Reusable buffers for [`Propagator::apply`].
#[derive(Debug)]
pub struct Workspace {
    y: Vec<C64>,
    y_mark: Vec<bool>,
    y_touched: Vec<usize>,
    z: Vec<C64>,
    z_mark: Vec<bool>,
    z_touched: Vec<usize>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            y: vec![ZERO; dim],
            y_mark: vec![false; dim],
            y_touched: Vec::new(),
            z: vec![ZERO; dim],
            z_mark: vec![false; dim],
            z_touched: Vec::new(),
        }
    }
}

impl Propagator {
    pub fn new(sd: &SpectralDecomposition) -> Self {
        let dim = sd.dim();
        let v = &sd.eigenvectors;
        let mut cols = vec![Vec::new(); dim];
        let mut rows = vec![Vec::new(); dim];
        for r in 0..dim {
            for (c, &z) in v.row(r).iter().enumerate() {
                if z != ZERO {
                    rows[r].push((c, z));
                    cols[c].push((r, z));
                }
            }
        }
        Self {
            dim,
            eigenvalues: sd.eigenvalues.clone(),
            cols,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored eigenvector entries.
    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// `e^{-iλ_j t}` for every eigenvalue.
    pub fn phases(&self, t: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * t))
            .collect()
    }

    /// `U x` with `U = V diag(phases) V†`, or `U† x` when `adjoint` is set.
    pub fn apply(&self, phases: &[C64], x: &[(usize, C64)], adjoint: bool, ws: &mut Workspace) -> SparseVec {
        debug_assert_eq!(phases.len(), self.dim);
        ws.y_touched.clear();
        for &(i, xi) in x {
            if xi == ZERO {
                continue;
            }
            for &(j, v) in &self.rows[i] {
                if !ws.y_mark[j] {
                    ws.y_mark[j] = true;
                    ws.y_touched.push(j);
                }
                ws.y[j] += v.conj() * xi;
            }
        }
        ws.z_touched.clear();
        for &j in &ws.y_touched {
            let phase = if adjoint { phases[j].conj() } else { phases[j] };
            let yj = ws.y[j] * phase;
            ws.y[j] = ZERO;
            ws.y_mark[j] = false;
            if yj == ZERO {
                continue;
            }
            for &(i, v) in &self.cols[j] {
                if !ws.z_mark[i] {
                    ws.z_mark[i] = true;
                    ws.z_touched.push(i);
                }
                ws.z[i] += v * yj;
            }
        }
        ws.z_touched.sort_unstable();
        let mut out = Vec::with_capacity(ws.z_touched.len());
        for &i in &ws.z_touched {
            out.push((i, ws.z[i]));
            ws.z[i] = ZERO;
            ws.z_mark[i] = false;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::random_hermitian;
    use crate::linalg::{evolve_unitary, herm_eig, ComplexMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_apply(u: &ComplexMatrix, x: &[(usize, C64)]) -> Vec<C64> {
        let n = u.dim();
        let mut out = vec![ZERO; n];
        for r in 0..n {
            for &(c, xc) in x {
                out[r] += u[(r, c)] * xc;
            }
        }
        out
    }

    #[test]
    fn matches_dense_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 7);
        let sd = herm_eig(&h).unwrap();
        let p = Propagator::new(&sd);
        let mut ws = Workspace::new(7);
        let x = vec![(1, C64::new(0.3, -0.2)), (4, C64::new(-1.0, 0.5))];
        let t = 1.3;
        let got = p.apply(&p.phases(t), &x, false, &mut ws);
        let want = dense_apply(&evolve_unitary(&sd, t), &x);
        for (i, z) in got {
            assert!((z - want[i]).norm() < 1e-13);
        }
        let got = p.apply(&p.phases(t), &x, true, &mut ws);
        let want = dense_apply(&evolve_unitary(&sd, -t), &x);
        for (i, z) in got {
            assert!((z - want[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn block_structure_stays_sparse() {
        let h = ComplexMatrix::from_real_rows(&[
            &[1.0, 0.5, 0.0, 0.0],
            &[0.5, -1.0, 0.0, 0.0],
            &[0.0, 0.0, 2.0, 0.0],
            &[0.0, 0.0, 0.0, 3.0],
        ]);
        let p = Propagator::new(&herm_eig(&h).unwrap());
        assert_eq!(p.nnz(), 6);
        let mut ws = Workspace::new(4);
        let out = p.apply(&p.phases(0.9), &[(0, C64::new(1.0, 0.0))], false, &mut ws);
        assert!(out.iter().all(|&(i, _)| i < 2));
    }
}
