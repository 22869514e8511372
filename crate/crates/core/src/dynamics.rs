//! Forward/backward composite propagation and the reduced maps built on it.
//!
//! Every reduced map is anchored at `t = 0` with the fixed initial bath
//! state. With `ρ_E = Σ_k q_k |φ_k><φ_k|` the map
//! `x ↦ Tr_E[U (x ⊗ ρ_E) U†]` has Kraus operators
//! `K_{e,k} = √q_k (I ⊗ <e|) U (I ⊗ |φ_k>)`, which are assembled column by
//! column from `U |a, φ_k>` without forming `U` densely.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::propagator::Workspace;
use crate::linalg::{herm_eig, ComplexMatrix, Propagator, SparseVec, SpectralDecomposition, C64, ZERO};
use crate::models::{check_density, ModelInstance};
use crate::tolerances::TOLERANCES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `U_f(t) = e^{-i H_f t}`
    Forward,
    /// `U_b(t) = e^{-i H_b t}`
    Backward,
    /// `U_b(t) U_f(t)`, the joint forward-then-backward composite evolution.
    Echo,
}

/// Spectral components of a density matrix with non-negligible weight.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub weights: Vec<f64>,
    pub states: Vec<SparseVec>,
}

impl Ensemble {
    pub fn new(rho: &ComplexMatrix) -> Result<Self> {
        let sd = herm_eig(rho)?;
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for (k, &q) in sd.eigenvalues.iter().enumerate().rev() {
            if q <= TOLERANCES.bath_weight {
                continue;
            }
            let v: SparseVec = sd
                .eigenvectors
                .column(k)
                .into_iter()
                .enumerate()
                .filter(|(_, z)| *z != ZERO)
                .collect();
            weights.push(q);
            states.push(v);
        }
        Ok(Self { weights, states })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }
}

/// Operator-sum representation `x ↦ Σ K x K†` on the system space.
#[derive(Clone, Debug)]
pub struct KrausSet {
    dim: usize,
    ops: Vec<ComplexMatrix>,
    adjoints: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(dim: usize, ops: Vec<ComplexMatrix>) -> Self {
        let adjoints = ops.iter().map(ComplexMatrix::adjoint).collect();
        Self { dim, ops, adjoints }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        for (k, kd) in self.ops.iter().zip(&self.adjoints) {
            out += &k.matmul(x).matmul(kd);
        }
        out
    }

    /// Heisenberg-picture dual `a ↦ Σ K† a K`.
    pub fn apply_adjoint(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        for (k, kd) in self.ops.iter().zip(&self.adjoints) {
            out += &kd.matmul(a).matmul(k);
        }
        out
    }
}

/// Cached decompositions of `H_f` and `H_b` for one model and perturbation.
#[derive(Debug)]
pub struct EvolutionEngine {
    model: ModelInstance,
    delta: ComplexMatrix,
    sd_forward: SpectralDecomposition,
    sd_backward: SpectralDecomposition,
    forward: Propagator,
    backward: Propagator,
    bath: Ensemble,
}

impl EvolutionEngine {
    /// `delta` is the backward perturbation on the system space.
    pub fn new(model: ModelInstance, delta: ComplexMatrix) -> Result<Self> {
        let d_s = model.layout.system_dim();
        if delta.dim() != d_s {
            return Err(Error::Dimension(format!(
                "perturbation has dimension {} but the system has {d_s}",
                delta.dim()
            )));
        }
        if !delta.is_hermitian(TOLERANCES.hermitian) {
            return Err(Error::NotHermitian {
                deviation: delta.max_abs_diff(&delta.adjoint()),
            });
        }
        check_density(&model.rho_s0, d_s, "system state")?;
        check_density(&model.rho_e0, model.layout.env_dim(), "environment state")?;
        let sd_forward = herm_eig(&model.h_forward())?;
        let sd_backward = herm_eig(&model.h_backward(&delta)?)?;
        let forward = Propagator::new(&sd_forward);
        let backward = Propagator::new(&sd_backward);
        let bath = Ensemble::new(&model.rho_e0)?;
        Ok(Self {
            model,
            delta,
            sd_forward,
            sd_backward,
            forward,
            backward,
            bath,
        })
    }

    pub fn unperturbed(model: ModelInstance) -> Result<Self> {
        let d = model.layout.system_dim();
        Self::new(model, ComplexMatrix::zeros(d))
    }

    pub fn model(&self) -> &ModelInstance {
        &self.model
    }

    pub fn delta(&self) -> &ComplexMatrix {
        &self.delta
    }

    pub fn sd_forward(&self) -> &SpectralDecomposition {
        &self.sd_forward
    }

    pub fn sd_backward(&self) -> &SpectralDecomposition {
        &self.sd_backward
    }

    pub fn bath(&self) -> &Ensemble {
        &self.bath
    }

    pub fn system_dim(&self) -> usize {
        self.model.layout.system_dim()
    }

    pub fn env_dim(&self) -> usize {
        self.model.layout.env_dim()
    }

    /// Reusable scratch buffers sized for the composite space.
    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.model.layout.total_dim())
    }

    /// `U(t) x` (or `U(t)† x` when `adjoint`) on a sparse composite vector.
    pub fn evolve_vector(&self, direction: Direction, t: f64, x: &[(usize, C64)], adjoint: bool, ws: &mut Workspace) -> SparseVec {
        let phases = self.phases(direction, t);
        self.evolve_with(&phases, direction, x, adjoint, ws)
    }

    /// `None` at `t = 0`, where every direction is exactly the identity.
    pub(crate) fn phases(&self, direction: Direction, t: f64) -> Option<(Vec<C64>, Vec<C64>)> {
        if t == 0.0 {
            return None;
        }
        Some(match direction {
            Direction::Forward => (self.forward.phases(t), Vec::new()),
            Direction::Backward => (Vec::new(), self.backward.phases(t)),
            Direction::Echo => (self.forward.phases(t), self.backward.phases(t)),
        })
    }

    pub(crate) fn evolve_with(
        &self,
        phases: &Option<(Vec<C64>, Vec<C64>)>,
        direction: Direction,
        x: &[(usize, C64)],
        adjoint: bool,
        ws: &mut Workspace,
    ) -> SparseVec {
        let Some((pf, pb)) = phases else {
            return x.to_vec();
        };
        match direction {
            Direction::Forward => self.forward.apply(pf, x, adjoint, ws),
            Direction::Backward => self.backward.apply(pb, x, adjoint, ws),
            Direction::Echo if !adjoint => {
                let y = self.forward.apply(pf, x, false, ws);
                self.backward.apply(pb, &y, false, ws)
            }
            Direction::Echo => {
                let y = self.backward.apply(pb, x, true, ws);
                self.forward.apply(pf, &y, true, ws)
            }
        }
    }

    /// Kraus operators of the reduced map at time `t` for the model's bath state.
    pub fn kraus(&self, direction: Direction, t: f64) -> KrausSet {
        self.kraus_with_bath(direction, t, &self.bath)
    }

    /// Kraus operators with an explicit bath decomposition.
    pub fn kraus_with_bath(&self, direction: Direction, t: f64, bath: &Ensemble) -> KrausSet {
        let d_s = self.system_dim();
        let d_e = self.env_dim();
        let phases = self.phases(direction, t);
        let mut ws = self.workspace();
        let mut ops = Vec::new();
        let mut input: SparseVec = Vec::new();
        for (q, phi) in bath.weights.iter().zip(&bath.states) {
            let amp = q.sqrt();
            // one operator per environment output index, created on first touch
            let mut by_env: BTreeMap<usize, ComplexMatrix> = BTreeMap::new();
            for a in 0..d_s {
                input.clear();
                input.extend(phi.iter().map(|&(e, v)| (a * d_e + e, v)));
                for (idx, v) in self.evolve_with(&phases, direction, &input, false, &mut ws) {
                    let (s, e) = (idx / d_e, idx % d_e);
                    let k = by_env.entry(e).or_insert_with(|| ComplexMatrix::zeros(d_s));
                    k[(s, a)] = v * amp;
                }
            }
            ops.extend(by_env.into_values().filter(|k| !k.is_zero()));
        }
        KrausSet::new(d_s, ops)
    }

    /// `Tr_E[U (ρ_S ⊗ ρ_E) U†]` propagating only the spectral components of
    /// both states, which is much cheaper than the Kraus route for pure inputs.
    pub fn evolve_state(&self, direction: Direction, t: f64, system: &Ensemble, bath: &Ensemble) -> ComplexMatrix {
        let d_s = self.system_dim();
        let d_e = self.env_dim();
        let phases = self.phases(direction, t);
        let mut ws = self.workspace();
        let mut out = ComplexMatrix::zeros(d_s);
        let mut input: SparseVec = Vec::new();
        let mut by_env: Vec<Vec<(usize, C64)>> = vec![Vec::new(); d_e];
        for (p, chi) in system.weights.iter().zip(&system.states) {
            for (q, phi) in bath.weights.iter().zip(&bath.states) {
                input.clear();
                for &(s, a) in chi {
                    input.extend(phi.iter().map(|&(e, b)| (s * d_e + e, a * b)));
                }
                let y = self.evolve_with(&phases, direction, &input, false, &mut ws);
                by_env.iter_mut().for_each(Vec::clear);
                for (idx, v) in y {
                    by_env[idx % d_e].push((idx / d_e, v));
                }
                let w = p * q;
                for col in &by_env {
                    for &(r, vr) in col {
                        for &(c, vc) in col {
                            out[(r, c)] += vr * vc.conj() * w;
                        }
                    }
                }
            }
        }
        out
    }

    fn check_system(&self, x: &ComplexMatrix) -> Result<()> {
        if x.dim() != self.system_dim() {
            return Err(Error::Dimension(format!(
                "operator has dimension {} but the system has {}",
                x.dim(),
                self.system_dim()
            )));
        }
        Ok(())
    }

    /// `ξ_f(t)·x = Tr_E[U_f (x ⊗ ρ_E) U_f†]`
    pub fn forward_map(&self, x: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        self.check_system(x)?;
        Ok(self.kraus(Direction::Forward, t).apply(x))
    }

    /// `ξ_b(t)·x = Tr_E[U_b (x ⊗ ρ_E) U_b†]`
    pub fn backward_map(&self, x: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        self.check_system(x)?;
        Ok(self.kraus(Direction::Backward, t).apply(x))
    }

    /// `Tr_E[(I ⊗ ρ_E) U† (a ⊗ I) U]`
    pub fn adjoint_map(&self, direction: Direction, a: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        self.check_system(a)?;
        Ok(self.kraus(direction, t).apply_adjoint(a))
    }

    /// `A(t) = ξ_f†(t)·a`
    pub fn heisenberg_operator(&self, a: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        self.adjoint_map(Direction::Forward, a, t)
    }
}
