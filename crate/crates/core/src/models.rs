//! Tavis-Cummings and tilted-field Ising builders, perturbations and the
//! named initial-state family.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{add_embedded, boson_ops, product_state, LocalOperator, SpaceLayout, SpinKind};
use crate::linalg::{thermal_state, ComplexMatrix, C64, ONE, ZERO};
use crate::tolerances::TOLERANCES;

/// Single-site reference ket `(√3/2)|0> + (1/2)|1>`.
pub fn reference_ket() -> Vec<C64> {
    vec![C64::new(3f64.sqrt() / 2.0, 0.0), C64::new(0.5, 0.0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TCSpec {
    pub n_atoms: usize,
    pub omega0: f64,
    pub omega_c: f64,
    pub lambda: f64,
    pub j_s: f64,
    pub temperature: f64,
    pub fock_cutoff: usize,
}

impl Default for TCSpec {
    fn default() -> Self {
        Self {
            n_atoms: 4,
            omega0: 2.0,
            omega_c: 2.0,
            lambda: 2.0,
            j_s: 0.0,
            temperature: 10.0,
            fock_cutoff: 30,
        }
    }
}

impl TCSpec {
    /// Per-atom coupling `λ / (2√N)`.
    pub fn j_tc(&self) -> f64 {
        self.lambda / (2.0 * (self.n_atoms as f64).sqrt())
    }

    pub fn lambda_for_j_tc(j_tc: f64, n_atoms: usize) -> f64 {
        2.0 * (n_atoms as f64).sqrt() * j_tc
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be at least 1".into()));
        }
        if self.fock_cutoff < 2 {
            return Err(Error::InvalidParameter(format!(
                "Fock cutoff {} must be at least 2",
                self.fock_cutoff
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TFIMSpec {
    pub b_field: f64,
    pub j_coupling: f64,
    pub theta: f64,
    pub n_system: usize,
    pub n_bath: usize,
}

impl Default for TFIMSpec {
    fn default() -> Self {
        Self {
            b_field: 0.5,
            j_coupling: 0.8,
            theta: FRAC_PI_2,
            n_system: 4,
            n_bath: 4,
        }
    }
}

impl TFIMSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_system == 0 || self.n_bath == 0 {
            return Err(Error::InvalidParameter("n_system and n_bath must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tc(TCSpec),
    Tfim(TFIMSpec),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Tc(_) => "tc",
            ModelSpec::Tfim(_) => "tfim",
        }
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        match self {
            ModelSpec::Tc(s) => {
                s.validate()?;
                let mut dims = vec![2; s.n_atoms];
                dims.push(s.fock_cutoff);
                SpaceLayout::new(dims, s.n_atoms)
            }
            ModelSpec::Tfim(s) => {
                s.validate()?;
                SpaceLayout::new(vec![2; s.n_system + s.n_bath], s.n_system)
            }
        }
    }

    pub fn system_sites(&self) -> usize {
        match self {
            ModelSpec::Tc(s) => s.n_atoms,
            ModelSpec::Tfim(s) => s.n_system,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    #[default]
    None,
    Delta1,
    Delta2,
    Delta3,
    TcSigmaZ,
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationKind::None => "none",
            PerturbationKind::Delta1 => "delta1",
            PerturbationKind::Delta2 => "delta2",
            PerturbationKind::Delta3 => "delta3",
            PerturbationKind::TcSigmaZ => "tc_sigma_z",
        })
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "delta1" => Ok(Self::Delta1),
            "delta2" => Ok(Self::Delta2),
            "delta3" => Ok(Self::Delta3),
            "tc_sigma_z" => Ok(Self::TcSigmaZ),
            other => Err(Error::InvalidParameter(format!("unknown perturbation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub omega_d: f64,
    /// Restrict the site sum to one system site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(kind: PerturbationKind, omega_d: f64) -> Self {
        Self {
            kind,
            omega_d,
            site: None,
        }
    }
}

/// Hamiltonian pieces on the composite space plus the default initial states.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub spec: ModelSpec,
    pub layout: SpaceLayout,
    pub h_system: ComplexMatrix,
    pub h_env: ComplexMatrix,
    pub h_int: ComplexMatrix,
    pub rho_s0: ComplexMatrix,
    pub rho_e0: ComplexMatrix,
}

impl ModelInstance {
    /// `H_S + H_E + H_SE`.
    pub fn h_forward(&self) -> ComplexMatrix {
        let mut h = &self.h_system + &self.h_env;
        h += &self.h_int;
        h
    }

    /// `-(H_S + Δ) + H_E + H_SE` with `delta` given on the system space.
    pub fn h_backward(&self, delta: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut h = &self.h_env + &self.h_int;
        h += &(-&self.h_system);
        if !delta.is_zero() {
            let env_id = ComplexMatrix::identity(self.layout.env_dim());
            h += &(-&crate::linalg::kron(delta, &env_id)?);
        }
        Ok(h)
    }

    /// Replaces the initial states after validating them.
    pub fn with_initial_states(mut self, rho_s: Option<ComplexMatrix>, rho_e: Option<ComplexMatrix>) -> Result<Self> {
        if let Some(r) = rho_s {
            check_density(&r, self.layout.system_dim(), "system state")?;
            self.rho_s0 = r;
        }
        if let Some(r) = rho_e {
            check_density(&r, self.layout.env_dim(), "environment state")?;
            self.rho_e0 = r;
        }
        Ok(self)
    }
}

pub(crate) fn check_density(r: &ComplexMatrix, dim: usize, what: &str) -> Result<()> {
    if r.dim() != dim {
        return Err(Error::Dimension(format!("{what} has dimension {} but expected {dim}", r.dim())));
    }
    if !r.is_density_matrix(TOLERANCES.density) {
        return Err(Error::NotDensityMatrix(format!("{what} is not Hermitian PSD with unit trace")));
    }
    Ok(())
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn spin(kind: SpinKind, site: usize) -> LocalOperator {
    LocalOperator::spin(kind, site)
}

/// Tilted field plus nearest-neighbour `σᶻσᶻ` on an open chain occupying `sites`.
fn add_tilted_chain(h: &mut ComplexMatrix, dims: &[usize], sites: std::ops::Range<usize>, b: f64, j: f64, theta: f64) -> Result<()> {
    let (bx, bz) = (b * theta.sin(), b * theta.cos());
    for i in sites.clone() {
        if bx != 0.0 {
            add_embedded(h, real(bx), &[&spin(SpinKind::X, i)], dims)?;
        }
        if bz != 0.0 {
            add_embedded(h, real(bz), &[&spin(SpinKind::Z, i)], dims)?;
        }
    }
    if j != 0.0 {
        for i in sites.start..sites.end.saturating_sub(1) {
            add_embedded(h, real(j), &[&spin(SpinKind::Z, i), &spin(SpinKind::Z, i + 1)], dims)?;
        }
    }
    Ok(())
}

pub fn build_tc(spec: &TCSpec) -> Result<ModelInstance> {
    let model = ModelSpec::Tc(spec.clone());
    let layout = model.layout()?;
    let dims = layout.dims().to_vec();
    let n = spec.n_atoms;
    let total = layout.total_dim();

    let mut h_system = ComplexMatrix::zeros(total);
    add_tilted_chain(&mut h_system, &dims, 0..n, spec.omega0, spec.j_s, 0.0)?;

    let (a, ad) = boson_ops(spec.fock_cutoff)?;
    let number = ad.matmul(&a);
    let mut h_env = ComplexMatrix::zeros(total);
    add_embedded(&mut h_env, real(spec.omega_c), &[&LocalOperator::new(n, number.clone(), "n")], &dims)?;

    let mut h_int = ComplexMatrix::zeros(total);
    let g = spec.j_tc();
    if g != 0.0 {
        let a_op = LocalOperator::new(n, a, "a");
        let ad_op = LocalOperator::new(n, ad, "a_dagger");
        for i in 0..n {
            add_embedded(&mut h_int, real(g), &[&spin(SpinKind::Plus, i), &a_op], &dims)?;
            add_embedded(&mut h_int, real(g), &[&spin(SpinKind::Minus, i), &ad_op], &dims)?;
        }
    }

    let rho_s0 = product_state(&vec![reference_ket(); n])?;
    let rho_e0 = thermal_state(&number.scale_real(spec.omega_c), spec.temperature)?;
    Ok(ModelInstance {
        spec: model,
        layout,
        h_system,
        h_env,
        h_int,
        rho_s0,
        rho_e0,
    })
}

pub fn build_tfim(spec: &TFIMSpec) -> Result<ModelInstance> {
    let model = ModelSpec::Tfim(spec.clone());
    let layout = model.layout()?;
    let dims = layout.dims().to_vec();
    let (ns, nb) = (spec.n_system, spec.n_bath);
    let total = layout.total_dim();

    let mut h_system = ComplexMatrix::zeros(total);
    add_tilted_chain(&mut h_system, &dims, 0..ns, spec.b_field, spec.j_coupling, spec.theta)?;
    let mut h_env = ComplexMatrix::zeros(total);
    add_tilted_chain(&mut h_env, &dims, ns..ns + nb, spec.b_field, spec.j_coupling, spec.theta)?;
    let mut h_int = ComplexMatrix::zeros(total);
    add_embedded(
        &mut h_int,
        real(spec.j_coupling),
        &[&spin(SpinKind::Z, ns - 1), &spin(SpinKind::Z, ns)],
        &dims,
    )?;

    let rho_s0 = product_state(&vec![reference_ket(); ns])?;
    let rho_e0 = product_state(&vec![reference_ket(); nb])?;
    Ok(ModelInstance {
        spec: model,
        layout,
        h_system,
        h_env,
        h_int,
        rho_s0,
        rho_e0,
    })
}

pub fn build(spec: &ModelSpec) -> Result<ModelInstance> {
    match spec {
        ModelSpec::Tc(s) => build_tc(s),
        ModelSpec::Tfim(s) => build_tfim(s),
    }
}

/// Backward-evolution perturbation on the system space (`d_S × d_S`).
///
/// The tilt angle for `delta1` comes from the TFIM spec.
pub fn build_perturbation(spec: &PerturbationSpec, model: &ModelSpec) -> Result<ComplexMatrix> {
    if !(spec.omega_d >= 0.0 && spec.omega_d.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega_d = {} must be nonnegative", spec.omega_d)));
    }
    let n = model.system_sites();
    let dims = vec![2; n];
    let mut delta = ComplexMatrix::zeros(1 << n);
    let (sx, sz) = match (spec.kind, model) {
        (PerturbationKind::None, _) => return Ok(delta),
        (PerturbationKind::Delta1, ModelSpec::Tfim(t)) => (t.theta.sin(), t.theta.cos()),
        (PerturbationKind::Delta2, ModelSpec::Tfim(_)) => (1.0, 1.0),
        (PerturbationKind::Delta3, ModelSpec::Tfim(_)) => (1.0, 0.0),
        (PerturbationKind::TcSigmaZ, ModelSpec::Tc(_)) => (0.0, 1.0),
        (kind, m) => {
            return Err(Error::PerturbationMismatch(format!(
                "{kind} does not apply to the {} model",
                m.name()
            )))
        }
    };
    let sites: Vec<usize> = match spec.site {
        Some(s) if s >= n => return Err(Error::BadSite { site: s, count: n }),
        Some(s) => vec![s],
        None => (0..n).collect(),
    };
    for i in sites {
        if sx != 0.0 {
            add_embedded(&mut delta, real(spec.omega_d * sx), &[&spin(SpinKind::X, i)], &dims)?;
        }
        if sz != 0.0 {
            add_embedded(&mut delta, real(spec.omega_d * sz), &[&spin(SpinKind::Z, i)], &dims)?;
        }
    }
    Ok(delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    Rho1,
    Rho2,
    Rho3,
    Rho4,
    Rho5,
    Plus,
    Minus,
}

impl NamedState {
    pub const ALL: [NamedState; 7] = [
        NamedState::Rho1,
        NamedState::Rho2,
        NamedState::Rho3,
        NamedState::Rho4,
        NamedState::Rho5,
        NamedState::Plus,
        NamedState::Minus,
    ];
}

impl fmt::Display for NamedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NamedState::Rho1 => "rho1",
            NamedState::Rho2 => "rho2",
            NamedState::Rho3 => "rho3",
            NamedState::Rho4 => "rho4",
            NamedState::Rho5 => "rho5",
            NamedState::Plus => "plus",
            NamedState::Minus => "minus",
        })
    }
}

impl FromStr for NamedState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NamedState::ALL
            .into_iter()
            .find(|n| n.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown initial state `{s}`")))
    }
}

/// `n_sites`-fold tensor power of the named single-site state.
pub fn named_initial_state(name: NamedState, n_sites: usize) -> Result<ComplexMatrix> {
    if n_sites == 0 {
        return Err(Error::InvalidParameter("n_sites must be at least 1".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let ket = match name {
        NamedState::Rho2 => {
            let dim = 1usize
                .checked_shl(n_sites as u32)
                .filter(|&d| d <= crate::tolerances::max_dim())
                .ok_or(Error::SpaceTooLarge {
                    requested: usize::MAX,
                    limit: crate::tolerances::max_dim(),
                })?;
            return Ok(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64));
        }
        NamedState::Rho1 => reference_ket(),
        NamedState::Rho3 | NamedState::Plus => vec![real(h), real(h)],
        NamedState::Rho4 => vec![ONE, ZERO],
        NamedState::Rho5 => vec![ZERO, ONE],
        NamedState::Minus => vec![real(h), real(-h)],
    };
    product_state(&vec![ket; n_sites])
}

/// Boltzmann weight of the Fock levels discarded by the cutoff, `e^{-ω_c·cutoff/T}`.
pub fn thermal_tail_weight(spec: &TCSpec) -> f64 {
    (-spec.omega_c * spec.fock_cutoff as f64 / spec.temperature).exp()
}
