//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scramble::diagnostics::{self, TimeGrid};
use scramble::dynamics::{Direction, EvolutionEngine};
use scramble::experiment;
use scramble::hilbert::{LocalOperator, SpinKind};
use scramble::linalg::ComplexMatrix;
use scramble::models::{self, ModelSpec, NamedState, PerturbationKind, PerturbationSpec, TCSpec, TFIMSpec};

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

const PAULIS: [SpinKind; 3] = [SpinKind::X, SpinKind::Y, SpinKind::Z];

fn z(site: usize) -> LocalOperator {
    LocalOperator::spin(SpinKind::Z, site)
}

fn tfim(b: f64, j: f64, theta: f64) -> TFIMSpec {
    TFIMSpec {
        b_field: b,
        j_coupling: j,
        theta,
        ..TFIMSpec::default()
    }
}

fn engine(spec: &ModelSpec) -> Result<EvolutionEngine, scramble::Error> {
    EvolutionEngine::unperturbed(models::build(spec)?)
}

fn random_pauli_pair(rng: &mut ChaCha8Rng, n_sites: usize) -> (LocalOperator, LocalOperator) {
    let a_site = rng.gen_range(0..n_sites);
    let mut b_site = rng.gen_range(0..n_sites - 1);
    if b_site >= a_site {
        b_site += 1;
    }
    let a = LocalOperator::spin(PAULIS[rng.gen_range(0..3)], a_site);
    let b = LocalOperator::spin(PAULIS[rng.gen_range(0..3)], b_site);
    (a, b)
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let m = random_matrix(rng, d);
    ComplexMatrix::from_fn(d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

fn random_density(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let m = random_matrix(rng, d);
    let p = m.matmul(&m.adjoint());
    let tr = p.trace().re;
    p.scale_real(1.0 / tr)
}

fn to_na(m: &ComplexMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| m[(i, j)])
}

fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    to_na(m).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn protocol_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = TimeGrid::new(0.0, 10.0, 20)?;
    let specs = [
        ModelSpec::Tfim(TFIMSpec::default()),
        ModelSpec::Tc(TCSpec {
            j_s: 0.5,
            ..TCSpec::default()
        }),
    ];
    let mut worst: f64 = 0.0;
    for spec in &specs {
        let e = engine(spec)?;
        let rho = e.model().rho_s0.clone();
        for _ in 0..5 {
            let (a, b) = random_pauli_pair(&mut rng, spec.system_sites());
            let d = diagnostics::f_otoc_direct(&e, &a, &b, &rho, &g)?;
            let p = diagnostics::f_otoc_protocol(&e, &a, &b, &rho, &g)?;
            for (x, y) in d.values.iter().zip(&p.values) {
                worst = worst.max((x - y).norm());
            }
        }
    }
    Ok((worst < 1e-10, format!("max |direct - protocol| = {worst:.2e} over 2 models x 5 pairs x 20 points (tol 1e-10)")))
}

fn integrable_baselines() -> Check {
    let spec = ModelSpec::Tfim(tfim(0.5, 0.8, 0.0));
    let e = engine(&spec)?;
    let g = DEFAULT_GRID;
    let rho = e.model().rho_s0.clone();
    let (mut f_dev, mut o_max): (f64, f64) = (0.0, 0.0);
    for a in 0..4 {
        for b in 0..4 {
            if a == b {
                continue;
            }
            let f = diagnostics::f_otoc_direct(&e, &z(a), &z(b), &rho, &g)?;
            f_dev = f.real().iter().fold(f_dev, |m, v| m.max((v - 1.0).abs()));
            let o = diagnostics::commutator_growth(&e, &z(a), &z(b), &g)?;
            o_max = o.real().iter().fold(o_max, |m, v| m.max(v.abs()));
        }
    }
    let plus = models::named_initial_state(NamedState::Plus, 4)?;
    let minus = models::named_initial_state(NamedState::Minus, 4)?;
    let blp = diagnostics::blp_trace_distance(&e, &plus, &minus, &g)?;
    let t_dev = blp.real().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    let pass = f_dev < 1e-8 && o_max < 1e-9 && t_dev < 1e-8;
    Ok((pass, format!("max |F-1| = {f_dev:.2e} (tol 1e-8), max O = {o_max:.2e} (tol 1e-9), max |T-1| = {t_dev:.2e} (tol 1e-8)")))
}

const DEFAULT_GRID: TimeGrid = experiment::DEFAULT_GRID;

fn correlator_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let e = engine(&ModelSpec::Tfim(tfim(0.5, 0.8, PI / 8.0)))?;
    let g = TimeGrid::new(0.0, 20.0, 40)?;
    let (mut r3, mut r4): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let (a, b) = random_pauli_pair(&mut rng, 4);
        let c = diagnostics::correlator_decomposition(&e, &a, &b, &g)?;
        for k in 0..g.n_points {
            let (cc, d, i, f) = (c.c.values[k].re, c.d.values[k].re, c.i.values[k].re, c.f.values[k].re);
            r3 = r3.max((cc - (d + i - 2.0 * f)).abs());
            r4 = r4.max((cc - 2.0 * (1.0 - f)).abs());
        }
    }
    Ok((r3 < 1e-9 && r4 < 1e-9, format!("decomposition residual {r3:.2e}, unitary relation residual {r4:.2e} (tol 1e-9)")))
}

fn cptp_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = ModelSpec::Tfim(TFIMSpec {
        n_system: 2,
        n_bath: 2,
        ..TFIMSpec::default()
    });
    let model = models::build(&spec)?;
    let delta = models::build_perturbation(&PerturbationSpec::new(PerturbationKind::Delta2, 0.2), &spec)?;
    let e = EvolutionEngine::new(model, delta)?;
    let d = e.system_dim();
    let (mut tr, mut herm, mut choi_min, mut dual): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for &t in &[0.3, 1.7, 4.1, 9.6] {
        let maps: [&dyn Fn(&ComplexMatrix) -> ComplexMatrix; 2] = [&|x| e.forward_map(x, t).unwrap(), &|x| e.backward_map(x, t).unwrap()];
        for map in maps {
            for _ in 0..5 {
                let rho = random_density(&mut rng, d);
                tr = tr.max((map(&rho).trace() - 1.0).norm());
                let h = random_hermitian(&mut rng, d);
                let out = map(&h);
                herm = herm.max(out.max_abs_diff(&out.adjoint()));
            }
            let mut choi = ComplexMatrix::zeros(d * d);
            for i in 0..d {
                for j in 0..d {
                    let mut unit = ComplexMatrix::zeros(d);
                    unit[(i, j)] = C64::new(1.0, 0.0);
                    let img = map(&unit);
                    for r in 0..d {
                        for c in 0..d {
                            choi[(i * d + r, j * d + c)] = img[(r, c)];
                        }
                    }
                }
            }
            choi_min = choi_min.min(min_eigenvalue(&choi));
        }
    }
    for _ in 0..100 {
        let t = rng.gen_range(0.0..10.0);
        let a = random_matrix(&mut rng, d);
        let x = random_matrix(&mut rng, d);
        let lhs = a.trace_product(&e.forward_map(&x, t)?);
        let rhs = e.adjoint_map(Direction::Forward, &a, t)?.trace_product(&x);
        dual = dual.max((lhs - rhs).norm());
    }
    let pass = tr < 1e-10 && herm < 1e-10 && choi_min >= -1e-9 && dual < 1e-10;
    Ok((
        pass,
        format!("trace {tr:.2e}, hermiticity {herm:.2e} (tol 1e-10), min Choi eigenvalue {choi_min:.2e} (>= -1e-9), duality {dual:.2e} over 100 pairs (tol 1e-10)"),
    ))
}

fn light_cone() -> Check {
    let e = engine(&ModelSpec::Tfim(tfim(0.5, 0.5, FRAC_PI_2)))?;
    let series: Vec<_> = (1..4)
        .map(|d| diagnostics::commutator_growth(&e, &z(d), &z(0), &DEFAULT_GRID))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(f64, &diagnostics::DiagnosticSeries)> = series.iter().enumerate().map(|(i, s)| ((i + 1) as f64, s)).collect();
    let fit = diagnostics::light_cone_fit(&pairs, experiment::DEFAULT_THRESHOLD)?;
    let o = &fit.onset_times;
    let increasing = o.windows(2).all(|w| w[1] > w[0]) && o.iter().all(|x| x.is_finite());
    let pass = increasing && fit.velocity > 0.0 && fit.r_squared > 0.9;
    Ok((
        pass,
        format!("onsets {:.3} {:.3} {:.3}, slope {:.3} sites/time, R^2 {:.4} (need increasing, slope > 0, R^2 > 0.9)", o[0], o[1], o[2], fit.velocity, fit.r_squared),
    ))
}

fn corrected_ordering() -> Check {
    let e = engine(&ModelSpec::Tfim(tfim(0.5, 0.8, FRAC_PI_2)))?;
    let rho = e.model().rho_s0.clone();
    let g = DEFAULT_GRID;
    let mut pass = true;
    let mut parts = Vec::new();
    for a in 1..4 {
        let fc = diagnostics::corrected_f_otoc(&e, &z(a), &z(0), &rho, &g)?;
        let f = diagnostics::f_otoc_direct(&e, &z(a), &z(0), &rho, &g)?;
        let fv = f.real();
        // the initial drop: first point where F leaves 1 by the onset threshold
        let start = fv.iter().position(|v| *v < 1.0 - experiment::DEFAULT_THRESHOLD).unwrap_or(fv.len());
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for k in start..fv.len() {
            let gap = fv[k] - fc.values[k].re;
            if !(fc.values[k].re >= fv[k] - 1e-9) {
                violations += 1;
                worst = worst.max(gap);
            }
        }
        let min_f = fv.iter().copied().fold(f64::INFINITY, f64::min);
        pass &= violations == 0;
        parts.push(format!(
            "z0->z{a}: {violations} violations from t={:.2} (worst F - Fc {worst:.2e}, min F {min_f:.3})",
            g.t(start.min(fv.len() - 1))
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn loschmidt_structure() -> Check {
    let lg = experiment::DEFAULT_LOSCHMIDT_GRID;
    let echo = |theta: f64, kind: PerturbationKind, state: Option<NamedState>| -> Result<Vec<f64>, scramble::Error> {
        let spec = ModelSpec::Tfim(tfim(0.5, 0.5, theta));
        let mut model = models::build(&spec)?;
        if let Some(s) = state {
            model = model.with_initial_states(Some(models::named_initial_state(s, 4)?), Some(models::named_initial_state(s, 4)?))?;
        }
        let delta = models::build_perturbation(&PerturbationSpec::new(kind, 0.2), &spec)?;
        let e = EvolutionEngine::new(model, delta)?;
        let m = e.model();
        Ok(diagnostics::loschmidt_echo(&e, &m.rho_s0, &m.rho_e0, &lg, true)?.real())
    };
    let plain = echo(0.0, PerturbationKind::None, None)?;
    let revisit = plain[1..].iter().map(|v| (v - 1.0).abs()).fold(f64::INFINITY, f64::min);
    let mixed = echo(FRAC_PI_2, PerturbationKind::None, Some(NamedState::Rho2))?;
    let mixed_dev = mixed.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let broken = echo(0.0, PerturbationKind::Delta2, None)?;
    let min_plain = plain.iter().copied().fold(f64::INFINITY, f64::min);
    let min_broken = broken.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = revisit < 1e-3 && mixed_dev < 1e-10 && min_plain - min_broken > 0.05;
    Ok((
        pass,
        format!(
            "closest return to 1 for t>0 {revisit:.2e} (tol 1e-3), maximally mixed max |L-1| {mixed_dev:.2e} (tol 1e-10), min drops {min_plain:.4} -> {min_broken:.4} (need > 0.05)"
        ),
    ))
}

fn non_markovianity(out: &Path) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in experiment::figure_configs("figB", out)? {
        let run = experiment::run(&c, None)?;
        let s = &run.series[0];
        let v = s.real();
        let largest = v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        pass &= largest > 1e-4;
        parts.push(format!("{} {}: largest increase {largest:.2e}", c.label, c.model.name()));
    }
    Ok((pass, format!("{} (need > 1e-4)", parts.join(", "))))
}

fn tc_convergence() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    let cases = [
        ("T=10", TCSpec::default()),
        (
            "T=1",
            TCSpec {
                omega_c: 2.5,
                j_s: 0.5,
                lambda: 1.5,
                temperature: 1.0,
                ..TCSpec::default()
            },
        ),
    ];
    for (name, spec) in cases {
        let plan = experiment::plan_cutoff(&spec, &DEFAULT_GRID)?;
        let c = plan.cutoff;
        let tail = (-spec.omega_c * c as f64 / spec.temperature).exp();
        let probe = TimeGrid::new(DEFAULT_GRID.t_start, DEFAULT_GRID.t_end, experiment::PROBE_POINTS)?;
        let f_at = |cutoff: usize| -> Result<Vec<f64>, scramble::Error> {
            let e = engine(&ModelSpec::Tc(TCSpec {
                fock_cutoff: cutoff,
                ..spec.clone()
            }))?;
            let rho = e.model().rho_s0.clone();
            Ok(diagnostics::f_otoc_direct(&e, &z(spec.n_atoms - 1), &z(0), &rho, &probe)?.real())
        };
        let (lo, hi) = (f_at(c)?, f_at(2 * c)?);
        let change = lo.iter().zip(&hi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        pass &= change < 1e-4 && tail < 1e-8;
        let path: Vec<String> = plan.history.iter().map(|s| s.cutoff.to_string()).collect();
        parts.push(format!("{name}: cutoff {c} (path {}), doubling change {change:.2e}, tail {tail:.2e}", path.join("->")));
    }
    Ok((pass, format!("{} (tol 1e-4, 1e-8)", parts.join("; "))))
}

/// Composite Hamiltonian of the 2+2 chain built independently with nalgebra.
fn oracle_hamiltonian(spec: &TFIMSpec) -> DMatrix<C64> {
    let c = |re: f64, im: f64| C64::new(re, im);
    let id = DMatrix::<C64>::identity(2, 2);
    let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let sz = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let n = spec.n_system + spec.n_bath;
    let op_at = |ops: &[(usize, &DMatrix<C64>)]| {
        let mut m = DMatrix::<C64>::identity(1, 1);
        for site in 0..n {
            let f = ops.iter().find(|(s, _)| *s == site).map(|(_, o)| *o).unwrap_or(&id);
            m = m.kronecker(f);
        }
        m
    };
    let dim = 1 << n;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let field = &sx * c(spec.theta.sin(), 0.0) + &sz * c(spec.theta.cos(), 0.0);
    for site in 0..n {
        h += op_at(&[(site, &field)]) * c(spec.b_field, 0.0);
    }
    for site in 0..n - 1 {
        // intra-chain bonds plus the single system-bath bond, all J σᶻσᶻ
        h += op_at(&[(site, &sz), (site + 1, &sz)]) * c(spec.j_coupling, 0.0);
    }
    h
}

fn oracle_equivalence() -> Check {
    let spec = TFIMSpec {
        n_system: 2,
        n_bath: 2,
        ..TFIMSpec::default()
    };
    let e = engine(&ModelSpec::Tfim(spec.clone()))?;
    let h = oracle_hamiltonian(&spec);
    let rho_e = to_na(&e.model().rho_e0);
    let (ds, de) = (4usize, 4usize);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let t = rng.gen_range(0.0..12.0);
        let x = random_matrix(&mut rng, ds);
        let u = (&h * C64::new(0.0, -t)).exp();
        let got = e.forward_map(&x, t)?;
        for s in 0..ds {
            for s2 in 0..ds {
                let mut acc = C64::new(0.0, 0.0);
                for env in 0..de {
                    for a in 0..ds {
                        for f in 0..de {
                            let left = u[(s * de + env, a * de + f)];
                            if left == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for a2 in 0..ds {
                                for f2 in 0..de {
                                    acc += left * x[(a, a2)] * rho_e[(f, f2)] * u[(s2 * de + env, a2 * de + f2)].conj();
                                }
                            }
                        }
                    }
                }
                worst = worst.max((acc - got[(s, s2)]).norm());
            }
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.2e} over 50 random inputs (tol 1e-10)")))
}

fn read_csvs(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            let bytes = std::fs::read(&p)?;
            Ok((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), bytes))
        })
        .collect::<std::io::Result<_>>()?;
    files.sort();
    Ok(files)
}

fn determinism(root: &Path) -> Check {
    let runs = [("parallel-1", Some(4)), ("parallel-2", Some(4)), ("serial", Some(1))];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        let dir = root.join(name);
        experiment::run_figure("fig3", &dir, threads)?;
        outputs.push(read_csvs(&dir)?);
    }
    let n = outputs[0].len();
    let repeat = outputs[0] == outputs[1];
    let serial = outputs[0] == outputs[2];
    Ok((n == 12 && repeat && serial, format!("{n} CSVs; repeated run identical: {repeat}; serial = parallel: {serial}")))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let blp_dir = tmp.path().join("blp");
    let det_dir = tmp.path().join("determinism");
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("protocol equivalence", Box::new(protocol_equivalence)),
        ("integrable baselines", Box::new(integrable_baselines)),
        ("correlator identities", Box::new(correlator_identities)),
        ("CPTP contract", Box::new(cptp_contract)),
        ("light cone", Box::new(light_cone)),
        ("corrected-OTOC ordering", Box::new(corrected_ordering)),
        ("Loschmidt structure", Box::new(loschmidt_structure)),
        ("non-Markovianity witness", Box::new(move || non_markovianity(&blp_dir))),
        ("TC cutoff convergence", Box::new(tc_convergence)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("determinism", Box::new(move || determinism(&det_dir))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let clock = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, clock.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
