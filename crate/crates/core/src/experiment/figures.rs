//! Run lists that regenerate each figure's curves.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DiagnosticKind, RawConfig, RunConfig};
use super::{run_cached, CutoffCache, OutputFile};
use crate::error::{Error, Result};

pub const FIGURES: [&str; 11] = ["fig1", "fig2", "fig3", "fig4", "fig5a", "fig5b", "fig6", "fig7", "fig8", "fig9", "figB"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureOutput {
    pub figure: String,
    pub files: Vec<OutputFile>,
    pub manifest_path: PathBuf,
}

fn tc(js: f64) -> RawConfig {
    RawConfig {
        model: Some("tc".into()),
        omega0: Some(2.0),
        omega_c: Some(2.0),
        lambda: Some(2.0),
        j_s: Some(js),
        temperature: Some(10.0),
        ..RawConfig::default()
    }
}

fn tfim(b: f64, j: f64, theta: f64) -> RawConfig {
    RawConfig {
        model: Some("tfim".into()),
        b_field: Some(b),
        j_coupling: Some(j),
        theta: Some(theta),
        ..RawConfig::default()
    }
}

fn with(base: &RawConfig, label: &str, diagnostic: DiagnosticKind) -> RawConfig {
    RawConfig {
        label: Some(label.into()),
        diagnostic: Some(diagnostic.to_string()),
        ..base.clone()
    }
}

/// One run per (B, A) pair, `B` at `b` and `A` at each of `a_sites`.
fn pairs(base: &RawConfig, label: &str, diagnostic: DiagnosticKind, b: usize, a_sites: &[usize]) -> Vec<RawConfig> {
    a_sites
        .iter()
        .map(|&a| RawConfig {
            a_op: Some(format!("sigma_z@{a}")),
            b_op: Some(format!("sigma_z@{b}")),
            ..with(base, label, diagnostic)
        })
        .collect()
}

/// Both chain ends: `B` on the first site spreading right and on the last
/// site spreading left.
fn both_ends(base: &RawConfig, labels: [&str; 2], diagnostic: DiagnosticKind) -> Vec<RawConfig> {
    let mut v = pairs(base, labels[0], diagnostic, 0, &[1, 2, 3]);
    v.extend(pairs(base, labels[1], diagnostic, 3, &[2, 1, 0]));
    v
}

fn loschmidt(base: &RawConfig, label: &str, kind: &str, omega_d: f64, tag: String) -> RawConfig {
    RawConfig {
        perturbation: Some(kind.into()),
        omega_d: Some(omega_d),
        tag: Some(tag),
        ..with(base, label, DiagnosticKind::Loschmidt)
    }
}

fn raw_configs(name: &str) -> Result<Vec<RawConfig>> {
    let pi8 = PI / 8.0;
    Ok(match name {
        "fig1" => pairs(&tc(0.0), "fig1", DiagnosticKind::Fotoc, 0, &[1, 2, 3]),
        "fig2" => pairs(&tc(0.5), "fig2", DiagnosticKind::FotocCorrected, 0, &[1, 2, 3]),
        "fig3" => {
            let mut v = both_ends(&tfim(0.5, 0.8, FRAC_PI_2), ["fig3-a", "fig3-b"], DiagnosticKind::Fotoc);
            v.extend(both_ends(&tfim(0.5, 0.8, pi8), ["fig3-c", "fig3-d"], DiagnosticKind::Fotoc));
            v
        }
        "fig4" => pairs(&tfim(0.5, 0.8, FRAC_PI_2), "fig4", DiagnosticKind::FotocCorrected, 0, &[1, 2, 3]),
        "fig5a" => {
            let mut v = pairs(&tfim(0.5, 0.8, FRAC_PI_2), "fig5a-a", DiagnosticKind::FotocCorrected, 0, &[1, 2, 3]);
            v.extend(pairs(&tfim(0.5, 0.8, pi8), "fig5a-b", DiagnosticKind::FotocCorrected, 0, &[1, 2, 3]));
            v
        }
        "fig5b" => {
            let mut v = Vec::new();
            for (label, wc) in [("fig5b-a", 2.0), ("fig5b-b", 8.0)] {
                let base = RawConfig {
                    omega_c: Some(wc),
                    ..tc(0.5)
                };
                for wd in [0.1, 0.5, 1.0] {
                    v.push(loschmidt(&base, label, "tc_sigma_z", wd, format!("wd{wd}")));
                }
            }
            v
        }
        "fig6" => {
            let mut v = Vec::new();
            let thetas = [("theta0", 0.0), ("thetapi8", pi8), ("theta7pi16", 7.0 * PI / 16.0), ("thetapi2", FRAC_PI_2)];
            for (label, kind) in [("fig6-a", "none"), ("fig6-b", "delta1"), ("fig6-c", "delta2"), ("fig6-d", "delta3")] {
                for (tag, theta) in thetas {
                    let wd = if kind == "none" { 0.0 } else { 0.2 };
                    v.push(loschmidt(&tfim(0.5, 0.5, theta), label, kind, wd, tag.into()));
                }
            }
            v
        }
        "fig7" => {
            let mut v = Vec::new();
            for (label, kind, wd) in [("fig7-a", "none", 0.0), ("fig7-b", "delta1", 0.2)] {
                for s in ["rho1", "rho2", "rho3", "rho4", "rho5"] {
                    v.push(RawConfig {
                        initial_state: Some(s.into()),
                        bath_state: Some(s.into()),
                        ..loschmidt(&tfim(0.5, 0.5, FRAC_PI_2), label, kind, wd, s.into())
                    });
                }
            }
            v
        }
        "fig8" => pairs(&tc(0.5), "fig8", DiagnosticKind::CommutatorNorm, 0, &[1, 2, 3]),
        "fig9" => {
            let mut v = both_ends(&tfim(0.5, 0.5, FRAC_PI_2), ["fig9-a", "fig9-b"], DiagnosticKind::CommutatorNorm);
            v.extend(both_ends(&tfim(0.5, 0.5, pi8), ["fig9-c", "fig9-d"], DiagnosticKind::CommutatorNorm));
            v
        }
        "figB" => {
            let tc_b = RawConfig {
                omega0: Some(2.0),
                omega_c: Some(2.5),
                j_s: Some(0.5),
                lambda: Some(1.5),
                temperature: Some(1.0),
                ..tc(0.5)
            };
            [("figB-a", tc_b), ("figB-b", tfim(0.5, 0.75, FRAC_PI_2))]
                .into_iter()
                .map(|(label, base)| RawConfig {
                    initial_state: Some("plus".into()),
                    second_state: Some("minus".into()),
                    ..with(&base, label, DiagnosticKind::Blp)
                })
                .collect()
        }
        other => return Err(Error::Config(format!("unknown figure `{other}`; expected one of {}", FIGURES.join(", ")))),
    })
}

/// Validated run list for a figure, writing into `out`.
pub fn figure_configs(name: &str, out: &Path) -> Result<Vec<RunConfig>> {
    raw_configs(name)?
        .into_iter()
        .map(|raw| {
            RunConfig::from_raw(&RawConfig {
                output_path: Some(out.display().to_string()),
                ..raw
            })
        })
        .collect()
}

/// Emits every curve of a figure plus a `<name>_manifest.json` index.
pub fn run_figure(name: &str, out: &Path, threads: Option<usize>) -> Result<FigureOutput> {
    let configs = figure_configs(name, out)?;
    let mut cache = CutoffCache::default();
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for c in &configs {
        let r = run_cached(c, threads, &mut cache)?;
        files.extend(r.manifest.files.iter().cloned());
        runs.push(r.manifest_path);
    }
    let manifest_path = out.join(format!("{name}_manifest.json"));
    let index = serde_json::json!({
        "figure": name,
        "version": env!("CARGO_PKG_VERSION"),
        "runs": runs,
        "files": files,
    });
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&manifest_path, &text).map_err(|source| Error::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    Ok(FigureOutput {
        figure: name.to_string(),
        files,
        manifest_path,
    })
}
