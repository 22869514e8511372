//! Flat JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::TimeGrid;
use crate::error::{Error, Result};
use crate::hilbert::{LocalOperator, SpinKind};
use crate::models::{ModelSpec, NamedState, PerturbationKind, PerturbationSpec, TCSpec, TFIMSpec};

pub const DEFAULT_GRID: TimeGrid = TimeGrid {
    t_start: 0.0,
    t_end: 20.0,
    n_points: 400,
};

pub const DEFAULT_LOSCHMIDT_GRID: TimeGrid = TimeGrid {
    t_start: 0.0,
    t_end: 50.0,
    n_points: 1001,
};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Fotoc,
    FotocProtocol,
    FotocCorrected,
    Correlators,
    Loschmidt,
    CommutatorNorm,
    Blp,
    Lightcone,
}

impl DiagnosticKind {
    pub const ALL: [DiagnosticKind; 8] = [
        DiagnosticKind::Fotoc,
        DiagnosticKind::FotocProtocol,
        DiagnosticKind::FotocCorrected,
        DiagnosticKind::Correlators,
        DiagnosticKind::Loschmidt,
        DiagnosticKind::CommutatorNorm,
        DiagnosticKind::Blp,
        DiagnosticKind::Lightcone,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticKind::Fotoc => "fotoc",
            DiagnosticKind::FotocProtocol => "fotoc_protocol",
            DiagnosticKind::FotocCorrected => "fotoc_corrected",
            DiagnosticKind::Correlators => "correlators",
            DiagnosticKind::Loschmidt => "loschmidt",
            DiagnosticKind::CommutatorNorm => "commutator_norm",
            DiagnosticKind::Blp => "blp",
            DiagnosticKind::Lightcone => "lightcone",
        }
    }

    /// Keys that must be present for this diagnostic.
    pub fn required_keys(&self) -> &'static [&'static str] {
        match self {
            DiagnosticKind::Fotoc
            | DiagnosticKind::FotocProtocol
            | DiagnosticKind::FotocCorrected
            | DiagnosticKind::Correlators
            | DiagnosticKind::CommutatorNorm => &["a_op", "b_op"],
            DiagnosticKind::Lightcone => &["b_op"],
            DiagnosticKind::Blp => &["initial_state", "second_state"],
            DiagnosticKind::Loschmidt => &[],
        }
    }

    fn default_grid(&self) -> TimeGrid {
        match self {
            DiagnosticKind::Loschmidt => DEFAULT_LOSCHMIDT_GRID,
            _ => DEFAULT_GRID,
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagnosticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DiagnosticKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown diagnostic `{s}`")))
    }
}

/// A Pauli-type operator on one site, written `sigma_z@1` (sites count from 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OpSpec {
    pub kind: SpinKind,
    pub site: usize,
}

impl OpSpec {
    pub fn new(kind: SpinKind, site: usize) -> Self {
        Self { kind, site }
    }

    pub fn z(site: usize) -> Self {
        Self::new(SpinKind::Z, site)
    }

    pub fn local(&self) -> LocalOperator {
        LocalOperator::spin(self.kind, self.site)
    }

    /// Compact form for filenames: `z2`, `x0`.
    pub fn short(&self) -> String {
        let k = match self.kind {
            SpinKind::X => "x",
            SpinKind::Y => "y",
            SpinKind::Z => "z",
            SpinKind::Plus => "p",
            SpinKind::Minus => "m",
        };
        format!("{k}{}", self.site)
    }
}

impl fmt::Display for OpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.site)
    }
}

impl FromStr for OpSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, site) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("operator `{s}` must look like sigma_z@1")))?;
        let kind: SpinKind = kind.trim().parse()?;
        let site = site
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("operator `{s}` has a bad site index")))?;
        Ok(Self { kind, site })
    }
}

/// On-disk form. Every key is optional here so that validation can name
/// exactly what is missing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock_cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalate: Option<bool>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_field: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_coupling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_system: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_bath: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_op: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_op: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation_site: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bath_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_fraction: Option<f64>,
}

const TC_KEYS: [&str; 8] = ["n_atoms", "omega0", "omega_c", "lambda", "j_s", "temperature", "fock_cutoff", "escalate"];
const TFIM_KEYS: [&str; 5] = ["b_field", "j_coupling", "theta", "n_system", "n_bath"];

impl RawConfig {
    /// Parses JSON text. Blank input counts as an empty object so that the
    /// error lists the required keys.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn present_keys(&self) -> Vec<&'static str> {
        let v = serde_json::to_value(self).expect("raw config serializes");
        let obj = v.as_object().expect("raw config is an object");
        TC_KEYS.iter().chain(TFIM_KEYS.iter()).copied().filter(|k| obj.contains_key(*k)).collect()
    }
}

/// A validated run description with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub diagnostic: DiagnosticKind,
    pub a_op: Option<OpSpec>,
    pub b_op: Option<OpSpec>,
    pub perturbation: PerturbationSpec,
    /// `None` keeps the model's own initial state.
    pub initial_state: Option<NamedState>,
    pub bath_state: Option<NamedState>,
    pub second_state: Option<NamedState>,
    pub grid: TimeGrid,
    pub output_path: PathBuf,
    pub label: String,
    pub tag: Option<String>,
    pub normalize: bool,
    pub threshold_fraction: f64,
    /// Double the TC Fock cutoff until the run is converged.
    pub escalate: bool,
}

fn parse_opt<T: FromStr<Err = Error>>(key: &str, v: &Option<String>) -> Result<Option<T>> {
    v.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("key `{key}`: {e}"))))
        .transpose()
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut missing: Vec<&str> = Vec::new();
        if raw.model.is_none() {
            missing.push("model");
        }
        if raw.diagnostic.is_none() {
            missing.push("diagnostic");
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required fields: {}", missing.join(", "))));
        }
        let diagnostic: DiagnosticKind = raw.diagnostic.as_deref().unwrap_or_default().parse()?;
        let model_name = raw.model.as_deref().unwrap_or_default();

        let present = raw.present_keys();
        let model = match model_name {
            "tc" => {
                if let Some(k) = present.iter().find(|k| TFIM_KEYS.contains(k)) {
                    return Err(Error::Config(format!("key `{k}` does not apply to model tc")));
                }
                let d = TCSpec::default();
                ModelSpec::Tc(TCSpec {
                    n_atoms: raw.n_atoms.unwrap_or(d.n_atoms),
                    omega0: raw.omega0.unwrap_or(d.omega0),
                    omega_c: raw.omega_c.unwrap_or(d.omega_c),
                    lambda: raw.lambda.unwrap_or(d.lambda),
                    j_s: raw.j_s.unwrap_or(d.j_s),
                    temperature: raw.temperature.unwrap_or(d.temperature),
                    fock_cutoff: raw.fock_cutoff.unwrap_or(d.fock_cutoff),
                })
            }
            "tfim" => {
                if let Some(k) = present.iter().find(|k| TC_KEYS.contains(k)) {
                    return Err(Error::Config(format!("key `{k}` does not apply to model tfim")));
                }
                let d = TFIMSpec::default();
                ModelSpec::Tfim(TFIMSpec {
                    b_field: raw.b_field.unwrap_or(d.b_field),
                    j_coupling: raw.j_coupling.unwrap_or(d.j_coupling),
                    theta: raw.theta.unwrap_or(d.theta),
                    n_system: raw.n_system.unwrap_or(d.n_system),
                    n_bath: raw.n_bath.unwrap_or(d.n_bath),
                })
            }
            other => return Err(Error::Config(format!("key `model`: unknown model `{other}`, expected tc or tfim"))),
        };
        match &model {
            ModelSpec::Tc(s) => s.validate()?,
            ModelSpec::Tfim(s) => s.validate()?,
        }

        let json = serde_json::to_value(raw).expect("raw config serializes");
        let missing: Vec<&str> = diagnostic.required_keys().iter().copied().filter(|k| json.get(*k).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("diagnostic {diagnostic} requires: {}", missing.join(", "))));
        }

        let a_op: Option<OpSpec> = parse_opt("a_op", &raw.a_op)?;
        let b_op: Option<OpSpec> = parse_opt("b_op", &raw.b_op)?;
        let n_sites = model.system_sites();
        for (key, op) in [("a_op", &a_op), ("b_op", &b_op)] {
            if let Some(op) = op {
                if op.site >= n_sites {
                    return Err(Error::Config(format!("key `{key}`: site {} outside the {n_sites} system sites", op.site)));
                }
            }
        }

        let kind: PerturbationKind = parse_opt("perturbation", &raw.perturbation)?.unwrap_or_default();
        let omega_d = raw.omega_d.unwrap_or(0.0);
        if kind != PerturbationKind::None && raw.omega_d.is_none() {
            return Err(Error::Config(format!("perturbation {kind} requires: omega_d")));
        }
        let perturbation = PerturbationSpec {
            kind,
            omega_d,
            site: raw.perturbation_site,
        };

        let grid = match &raw.grid {
            Some(g) => g.parse().map_err(|e| Error::Config(format!("key `grid`: {e}")))?,
            None => diagnostic.default_grid(),
        };
        let threshold_fraction = raw.threshold_fraction.unwrap_or(DEFAULT_THRESHOLD);
        if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
            return Err(Error::Config(format!("key `threshold_fraction`: {threshold_fraction} outside (0, 1)")));
        }
        let label = raw.label.clone().unwrap_or_else(|| "run".to_string());
        if label.is_empty() || label.contains(['_', '/', '\\']) {
            return Err(Error::Config(format!("key `label`: `{label}` must be nonempty without `_` or path separators")));
        }
        if let Some(tag) = &raw.tag {
            if tag.is_empty() || tag.contains(['/', '\\']) {
                return Err(Error::Config(format!("key `tag`: `{tag}` is not a valid filename part")));
            }
        }

        Ok(Self {
            model,
            diagnostic,
            a_op,
            b_op,
            perturbation,
            initial_state: parse_opt("initial_state", &raw.initial_state)?,
            bath_state: parse_opt("bath_state", &raw.bath_state)?,
            second_state: parse_opt("second_state", &raw.second_state)?,
            grid,
            output_path: PathBuf::from(raw.output_path.clone().unwrap_or_else(|| ".".to_string())),
            label,
            tag: raw.tag.clone(),
            normalize: raw.normalize.unwrap_or(true),
            threshold_fraction,
            escalate: raw.escalate.unwrap_or(true),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_raw(&RawConfig::from_path(path)?)
    }

    /// Fully explicit raw form; `from_raw(to_raw(c)) == c`.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig {
            model: Some(self.model.name().to_string()),
            diagnostic: Some(self.diagnostic.to_string()),
            a_op: self.a_op.map(|o| o.to_string()),
            b_op: self.b_op.map(|o| o.to_string()),
            perturbation: Some(self.perturbation.kind.to_string()),
            omega_d: Some(self.perturbation.omega_d),
            perturbation_site: self.perturbation.site,
            initial_state: self.initial_state.map(|s| s.to_string()),
            bath_state: self.bath_state.map(|s| s.to_string()),
            second_state: self.second_state.map(|s| s.to_string()),
            grid: Some(self.grid.to_string()),
            output_path: Some(self.output_path.display().to_string()),
            label: Some(self.label.clone()),
            tag: self.tag.clone(),
            normalize: Some(self.normalize),
            threshold_fraction: Some(self.threshold_fraction),
            ..RawConfig::default()
        };
        match &self.model {
            ModelSpec::Tc(s) => {
                raw.n_atoms = Some(s.n_atoms);
                raw.omega0 = Some(s.omega0);
                raw.omega_c = Some(s.omega_c);
                raw.lambda = Some(s.lambda);
                raw.j_s = Some(s.j_s);
                raw.temperature = Some(s.temperature);
                raw.fock_cutoff = Some(s.fock_cutoff);
                raw.escalate = Some(self.escalate);
            }
            ModelSpec::Tfim(s) => {
                raw.b_field = Some(s.b_field);
                raw.j_coupling = Some(s.j_coupling);
                raw.theta = Some(s.theta);
                raw.n_system = Some(s.n_system);
                raw.n_bath = Some(s.n_bath);
            }
        }
        raw
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("raw config serializes")
    }

    /// Filename tag: explicit, else derived from the operators or states.
    pub fn file_tag(&self) -> String {
        if let Some(t) = &self.tag {
            return t.clone();
        }
        match (self.diagnostic, self.a_op, self.b_op) {
            (DiagnosticKind::Lightcone, _, Some(b)) => b.short(),
            (_, Some(a), Some(b)) => format!("{}to{}", b.short(), a.short()),
            (DiagnosticKind::Blp, _, _) => format!(
                "{}to{}",
                self.initial_state.map(|s| s.to_string()).unwrap_or_default(),
                self.second_state.map(|s| s.to_string()).unwrap_or_default()
            ),
            _ => {
                let state = self.initial_state.map(|s| s.to_string()).unwrap_or_else(|| "default".into());
                match self.perturbation.kind {
                    PerturbationKind::None => format!("{state}_none"),
                    k => format!("{state}_{k}_wd{}", self.perturbation.omega_d),
                }
            }
        }
    }

    /// Stem shared by all files of this run: `<label>_<diagnostic>_<tag>`.
    pub fn file_stem(&self, kind: &str) -> String {
        format!("{}_{}_{}", self.label, kind, self.file_tag())
    }
}

/// Flag-style overrides applied on top of a file configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub diagnostic: Option<String>,
    pub theta: Option<f64>,
    pub a_op: Option<String>,
    pub b_op: Option<String>,
    pub output_path: Option<String>,
    pub grid: Option<String>,
    pub fock_cutoff: Option<usize>,
    pub normalize: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, raw: &mut RawConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    raw.$field = Some(v.clone());
                }
            };
        }
        set!(model);
        set!(diagnostic);
        set!(theta);
        set!(a_op);
        set!(b_op);
        set!(output_path);
        set!(grid);
        set!(fock_cutoff);
        set!(normalize);
    }
}
