//! Configuration-driven runs: model construction, Fock-cutoff escalation,
//! CSV output and run manifests.

mod config;
mod figures;

pub use config::{DiagnosticKind, OpSpec, Overrides, RawConfig, RunConfig, DEFAULT_GRID, DEFAULT_LOSCHMIDT_GRID, DEFAULT_THRESHOLD};
pub use figures::{figure_configs, run_figure, FigureOutput, FIGURES};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, DiagnosticSeries, Flag, TimeGrid};
use crate::dynamics::EvolutionEngine;
use crate::error::{Error, Result};
use crate::hilbert::LocalOperator;
use crate::models::{self, ModelInstance, ModelSpec, NamedState, TCSpec};

/// Tail weight the converged cutoff must reach.
pub const TAIL_TOLERANCE: f64 = 1e-8;
/// Largest probe change accepted between a cutoff and its double.
pub const PROBE_TOLERANCE: f64 = 1e-4;
pub const MAX_ESCALATIONS: usize = 4;
pub const PROBE_POINTS: usize = 21;

pub const CSV_HEADER: &str = "t,value_re,value_im,flag";

/// One cutoff tried by the escalator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffStep {
    pub cutoff: usize,
    pub tail_weight: f64,
    /// Max probe change against twice this cutoff.
    pub probe_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPlan {
    pub cutoff: usize,
    pub history: Vec<CutoffStep>,
}

/// Probe F-OTOC used for convergence: `A = σᶻ` on the last atom, `B = σᶻ`
/// on the first, sampled at [`PROBE_POINTS`] points of `grid`'s span.
pub fn probe_series(spec: &TCSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
    let engine = EvolutionEngine::unperturbed(models::build_tc(spec)?)?;
    let probe = TimeGrid::new(grid.t_start, grid.t_end, PROBE_POINTS)?;
    let a = OpSpec::z(spec.n_atoms - 1).local();
    let b = OpSpec::z(0).local();
    let rho = engine.model().rho_s0.clone();
    Ok(diagnostics::f_otoc_direct(&engine, &a, &b, &rho, &probe)?.real())
}

/// Doubles the cutoff from `spec.fock_cutoff` until the thermal tail is below
/// [`TAIL_TOLERANCE`] and the probe moves by less than [`PROBE_TOLERANCE`]
/// when the cutoff is doubled again.
pub fn plan_cutoff(spec: &TCSpec, grid: &TimeGrid) -> Result<CutoffPlan> {
    let mut history = Vec::new();
    let mut cutoff = spec.fock_cutoff;
    let at = |c: usize| TCSpec {
        fock_cutoff: c,
        ..spec.clone()
    };
    let mut current = probe_series(&at(cutoff), grid)?;
    for _ in 0..=MAX_ESCALATIONS {
        let tail_weight = models::thermal_tail_weight(&at(cutoff));
        let doubled = probe_series(&at(2 * cutoff), grid)?;
        let probe_change = current.iter().zip(&doubled).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        history.push(CutoffStep {
            cutoff,
            tail_weight,
            probe_change,
        });
        if tail_weight < TAIL_TOLERANCE && probe_change < PROBE_TOLERANCE {
            return Ok(CutoffPlan { cutoff, history });
        }
        cutoff *= 2;
        current = doubled;
    }
    Err(Error::Unconverged(format!(
        "no cutoff passed after {MAX_ESCALATIONS} doublings from {}; history {}",
        spec.fock_cutoff,
        serde_json::to_string(&history).unwrap_or_default()
    )))
}

/// Renders a series in the CSV schema. Numbers use 17 significant digits.
pub fn series_to_csv(series: &DiagnosticSeries) -> String {
    let mut out = String::with_capacity(64 * (series.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let num = |x: f64| if x.is_nan() { "nan".to_string() } else { format!("{x:.16e}") };
    for (i, (v, flag)) in series.values.iter().zip(&series.flags).enumerate() {
        let _ = writeln!(out, "{},{},{},{}", num(series.grid.t(i)), num(v.re), num(v.im), flag);
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Value,
    pub version: String,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    /// Fock cutoff used (TC only).
    pub cutoff: Option<usize>,
    pub cutoff_history: Vec<CutoffStep>,
    pub files: Vec<OutputFile>,
    /// Diagnostic-specific summaries such as the light-cone fit.
    pub results: Value,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub series: Vec<DiagnosticSeries>,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Memo of converged cutoffs keyed by the TC spec, shared across the runs of
/// a figure.
#[derive(Default)]
pub struct CutoffCache(HashMap<String, CutoffPlan>);

impl CutoffCache {
    fn plan(&mut self, spec: &TCSpec, grid: &TimeGrid) -> Result<CutoffPlan> {
        let key = format!("{}|{}", serde_json::to_string(spec).unwrap_or_default(), grid);
        if let Some(p) = self.0.get(&key) {
            return Ok(p.clone());
        }
        let p = plan_cutoff(spec, grid)?;
        self.0.insert(key, p.clone());
        Ok(p)
    }
}

fn state(name: NamedState, n_sites: usize) -> Result<crate::linalg::ComplexMatrix> {
    models::named_initial_state(name, n_sites)
}

fn build_model(config: &RunConfig, spec: &ModelSpec) -> Result<ModelInstance> {
    let model = models::build(spec)?;
    let rho_s = config.initial_state.map(|s| state(s, model.layout.system_count())).transpose()?;
    let rho_e = match (config.bath_state, spec) {
        (Some(s), ModelSpec::Tfim(t)) => Some(state(s, t.n_bath)?),
        (Some(_), ModelSpec::Tc(_)) => return Err(Error::Config("key `bath_state`: the TC bath is always thermal".into())),
        (None, _) => None,
    };
    model.with_initial_states(rho_s, rho_e)
}

fn required(op: Option<OpSpec>, key: &str, config: &RunConfig) -> Result<LocalOperator> {
    op.map(|o| o.local())
        .ok_or_else(|| Error::Config(format!("diagnostic {} requires: {key}", config.diagnostic)))
}

fn compute(config: &RunConfig, engine: &EvolutionEngine) -> Result<(Vec<DiagnosticSeries>, Value)> {
    let grid = &config.grid;
    let rho = engine.model().rho_s0.clone();
    Ok(match config.diagnostic {
        DiagnosticKind::Fotoc => {
            let (a, b) = (required(config.a_op, "a_op", config)?, required(config.b_op, "b_op", config)?);
            (vec![diagnostics::f_otoc_direct(engine, &a, &b, &rho, grid)?], Value::Null)
        }
        DiagnosticKind::FotocProtocol => {
            let (a, b) = (required(config.a_op, "a_op", config)?, required(config.b_op, "b_op", config)?);
            (vec![diagnostics::f_otoc_protocol(engine, &a, &b, &rho, grid)?], Value::Null)
        }
        DiagnosticKind::FotocCorrected => {
            let (a, b) = (required(config.a_op, "a_op", config)?, required(config.b_op, "b_op", config)?);
            let corrected = diagnostics::corrected_f_otoc(engine, &a, &b, &rho, grid)?;
            let plain = diagnostics::f_otoc_direct(engine, &a, &b, &rho, grid)?;
            let divergent = corrected.flags.iter().filter(|f| **f == Flag::Divergent).count();
            (vec![corrected, plain], json!({ "divergent_points": divergent }))
        }
        DiagnosticKind::Correlators => {
            let (a, b) = (required(config.a_op, "a_op", config)?, required(config.b_op, "b_op", config)?);
            let c = diagnostics::correlator_decomposition(engine, &a, &b, grid)?;
            (vec![c.c, c.d, c.i, c.f], Value::Null)
        }
        DiagnosticKind::CommutatorNorm => {
            let (a, b) = (required(config.a_op, "a_op", config)?, required(config.b_op, "b_op", config)?);
            (vec![diagnostics::commutator_growth(engine, &a, &b, grid)?], Value::Null)
        }
        DiagnosticKind::Loschmidt => {
            let m = engine.model();
            (vec![diagnostics::loschmidt_echo(engine, &m.rho_s0, &m.rho_e0, grid, config.normalize)?], Value::Null)
        }
        DiagnosticKind::Blp => {
            let n = engine.model().layout.system_count();
            let missing = || Error::Config("diagnostic blp requires: initial_state, second_state".into());
            let r1 = state(config.initial_state.ok_or_else(missing)?, n)?;
            let r2 = state(config.second_state.ok_or_else(missing)?, n)?;
            let s = diagnostics::blp_trace_distance(engine, &r1, &r2, grid)?;
            let revivals = diagnostics::blp_revivals(&s, 0.0);
            let largest = revivals.iter().map(|r| r.increase).fold(0.0, f64::max);
            (vec![s], json!({ "revivals": revivals.len(), "largest_increase": largest }))
        }
        DiagnosticKind::Lightcone => {
            let b = required(config.b_op, "b_op", config)?;
            let n = engine.model().layout.system_count();
            let b_op = config.b_op.expect("checked above");
            // walk along the longer side of the chain
            let sites: Vec<usize> = if n - 1 - b.site >= b.site {
                (b.site + 1..n).collect()
            } else {
                (0..b.site).rev().collect()
            };
            let a_kind = config.a_op.map(|a| a.kind).unwrap_or(b_op.kind);
            let series = sites
                .iter()
                .map(|&s| diagnostics::commutator_growth(engine, &OpSpec::new(a_kind, s).local(), &b, grid))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(f64, &DiagnosticSeries)> = sites.iter().zip(&series).map(|(&s, x)| (s.abs_diff(b.site) as f64, x)).collect();
            let fit = diagnostics::light_cone_fit(&pairs, config.threshold_fraction)?;
            (series, json!({ "fit": fit, "a_sites": sites }))
        }
    })
}

/// Stem for the `i`-th series of a run.
fn series_stem(config: &RunConfig, series: &DiagnosticSeries) -> String {
    if config.diagnostic == DiagnosticKind::Lightcone {
        let b = config.b_op.expect("lightcone has b_op");
        let a = series.metadata["a"]["site"].as_u64().unwrap_or(0) as usize;
        let a_kind = config.a_op.map(|a| a.kind).unwrap_or(b.kind);
        return format!("{}_{}_{}to{}", config.label, series.kind, b.short(), OpSpec::new(a_kind, a).short());
    }
    config.file_stem(&series.kind)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs one configuration, writing one CSV per series plus a manifest.
///
/// `threads = Some(n)` evaluates grid points on a dedicated pool of `n`
/// workers; `None` uses the ambient pool. Output bytes do not depend on it.
pub fn run(config: &RunConfig, threads: Option<usize>) -> Result<RunOutput> {
    run_cached(config, threads, &mut CutoffCache::default())
}

pub fn run_cached(config: &RunConfig, threads: Option<usize>, cache: &mut CutoffCache) -> Result<RunOutput> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let body = |cache: &mut CutoffCache| -> Result<(Vec<DiagnosticSeries>, Value, Option<CutoffPlan>)> {
        let (spec, plan) = match &config.model {
            ModelSpec::Tc(tc) if config.escalate => {
                let plan = cache.plan(tc, &config.grid)?;
                let spec = ModelSpec::Tc(TCSpec {
                    fock_cutoff: plan.cutoff,
                    ..tc.clone()
                });
                (spec, Some(plan))
            }
            other => (other.clone(), None),
        };
        let model = build_model(config, &spec)?;
        let delta = models::build_perturbation(&config.perturbation, &spec)?;
        let engine = EvolutionEngine::new(model, delta)?;
        let (series, results) = compute(config, &engine)?;
        Ok((series, results, plan))
    };
    let (series, results, plan) = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| body(cache))?,
        None => body(cache)?,
    };

    std::fs::create_dir_all(&config.output_path).map_err(|source| Error::Io {
        path: config.output_path.display().to_string(),
        source,
    })?;
    let mut files = Vec::with_capacity(series.len());
    for s in &series {
        let path = config.output_path.join(format!("{}.csv", series_stem(config, s)));
        let csv = series_to_csv(s);
        write_file(&path, csv.as_bytes())?;
        files.push(OutputFile {
            path,
            rows: s.len(),
            sha256: sha256_hex(csv.as_bytes()),
        });
    }

    let manifest = RunManifest {
        config: serde_json::to_value(config.to_raw()).expect("raw config serializes"),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        cutoff: plan.as_ref().map(|p| p.cutoff),
        cutoff_history: plan.map(|p| p.history).unwrap_or_default(),
        files,
        results,
    };
    let manifest_path = config.output_path.join(format!("{}_manifest.json", config.file_stem(config.diagnostic.name())));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, text.as_bytes())?;
    Ok(RunOutput {
        series,
        manifest,
        manifest_path,
    })
}
