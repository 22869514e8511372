//! Scrambling diagnostics evaluated on a time grid.
//!
//! Grid points are independent, so each series is sampled with rayon in the
//! ambient thread pool and collected in index order. Wrap calls in
//! `ThreadPool::install` to control the worker count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{Direction, Ensemble, EvolutionEngine, KrausSet};
use crate::error::{Error, Result};
use crate::hilbert::{apply_local, embed, LocalOperator, Scope};
use crate::linalg::{kron, spectral_norm, spectral_norm_squared, trace_norm, ComplexMatrix, SparseVec, C64, I, ZERO};
use crate::models::check_density;
use crate::tolerances::TOLERANCES;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_start >= 0.0 && t_start.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid start {t_start} must be finite and >= 0")));
        }
        if !(t_end > t_start && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid end {t_end} must exceed start {t_start}")));
        }
        if n_points < 2 {
            return Err(Error::InvalidParameter(format!("grid needs at least 2 points, got {n_points}")));
        }
        Ok(Self {
            t_start,
            t_end,
            n_points,
        })
    }

    pub fn t(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            return self.t_end;
        }
        self.t_start + (self.t_end - self.t_start) * i as f64 / (self.n_points - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.t(i)).collect()
    }
}

/// `start:end:n_points`
impl FromStr for TimeGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("grid `{s}` is not of the form start:end:n_points"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Self::new(a, b, n)
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.t_start, self.t_end, self.n_points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Ok,
    Divergent,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Ok => "ok",
            Flag::Divergent => "divergent",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DiagnosticSeries {
    pub grid: TimeGrid,
    pub values: Vec<C64>,
    pub flags: Vec<Flag>,
    pub kind: String,
    pub metadata: Value,
}

impl DiagnosticSeries {
    pub fn new(grid: TimeGrid, kind: &str, values: Vec<C64>, metadata: Value) -> Self {
        let flags = vec![Flag::Ok; values.len()];
        Self {
            grid,
            values,
            flags,
            kind: kind.to_string(),
            metadata,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }
}

fn sample<T: Send>(grid: &TimeGrid, f: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..grid.n_points).into_par_iter().map(|i| f(grid.t(i))).collect()
}

fn operator_metadata(engine: &EvolutionEngine, ops: &[(&str, &LocalOperator)]) -> Value {
    let mut m = json!({ "model": engine.model().spec });
    for (name, op) in ops {
        m[*name] = json!({ "label": op.label, "site": op.site });
    }
    m
}

/// System-space embedding of a local operator; `require_unitary` enforces the
/// protocol's precondition.
fn system_operator(engine: &EvolutionEngine, op: &LocalOperator, require_unitary: bool) -> Result<ComplexMatrix> {
    let m = embed(op, &engine.model().layout, Scope::System)?;
    if require_unitary && !op.op.is_unitary(TOLERANCES.unitary) {
        return Err(Error::OperatorNotUnitary(op.label.clone()));
    }
    Ok(m)
}

/// `Tr[(ξ_b†·B†) A (ξ_f·(Bρ)) A†]` for precomputed Kraus sets.
fn fotoc_value(kf: &KrausSet, kb: &KrausSet, a: &ComplexMatrix, b: &ComplexMatrix, rho: &ComplexMatrix) -> C64 {
    let evolved = kf.apply(&b.matmul(rho));
    let probed = a.matmul(&evolved).matmul(&a.adjoint());
    let b_back = kb.apply_adjoint(&b.adjoint());
    b_back.trace_product(&probed)
}

/// F-OTOC from the closed-form trace. The real part is the reported value.
pub fn f_otoc_direct(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, rho_s0: &ComplexMatrix, grid: &TimeGrid) -> Result<DiagnosticSeries> {
    let am = system_operator(engine, a, true)?;
    let bm = system_operator(engine, b, true)?;
    check_density(rho_s0, engine.system_dim(), "initial system state")?;
    let values = sample(grid, |t| {
        let kf = engine.kraus(Direction::Forward, t);
        let kb = engine.kraus(Direction::Backward, t);
        Ok(fotoc_value(&kf, &kb, &am, &bm, rho_s0))
    })?;
    Ok(DiagnosticSeries::new(*grid, "fotoc", values, operator_metadata(engine, &[("a", a), ("b", b)])))
}

/// F-OTOC from the five-step control-qubit interferometer.
///
/// The control qubit is the last factor. The real part is `Tr[(I⊗σˣ)ρ_f]`
/// and the imaginary part `Tr[(I⊗σʸ)ρ_f]`.
pub fn f_otoc_protocol(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, rho_s0: &ComplexMatrix, grid: &TimeGrid) -> Result<DiagnosticSeries> {
    let am = system_operator(engine, a, true)?;
    let bm = system_operator(engine, b, true)?;
    check_density(rho_s0, engine.system_dim(), "initial system state")?;
    let d = engine.system_dim();
    let id = ComplexMatrix::identity(d);
    let id_c = ComplexMatrix::identity(2);
    let p0 = ComplexMatrix::real_diagonal(&[1.0, 0.0]);
    let p1 = ComplexMatrix::real_diagonal(&[0.0, 1.0]);
    let plus = ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
    let sigma_x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let sigma_y = ComplexMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]])?;

    let rho_init = kron(rho_s0, &plus)?;
    let s1 = &kron(&id, &p0)? + &kron(&bm, &p1)?;
    let s3 = kron(&am, &id_c)?;
    let s5 = &kron(&bm, &p0)? + &kron(&id, &p1)?;
    let obs_x = kron(&id, &sigma_x)?;
    let obs_y = kron(&id, &sigma_y)?;
    let conj = |u: &ComplexMatrix, r: &ComplexMatrix| u.matmul(r).matmul(&u.adjoint());
    let rho2 = conj(&s1, &rho_init);

    let values = sample(grid, |t| {
        let lift = |k: &KrausSet| -> Result<KrausSet> {
            let ops = k.ops().iter().map(|op| kron(op, &id_c)).collect::<Result<Vec<_>>>()?;
            Ok(KrausSet::new(2 * d, ops))
        };
        let s2 = lift(&engine.kraus(Direction::Forward, t))?;
        let s4 = lift(&engine.kraus(Direction::Backward, t))?;
        let rho3 = s2.apply(&rho2);
        let rho4 = conj(&s3, &rho3);
        let rho5 = s4.apply(&rho4);
        let rho_f = conj(&s5, &rho5);
        let re = obs_x.trace_product(&rho_f).re;
        let im = obs_y.trace_product(&rho_f).re;
        Ok(C64::new(re, im))
    })?;
    Ok(DiagnosticSeries::new(*grid, "fotoc_protocol", values, operator_metadata(engine, &[("a", a), ("b", b)])))
}

/// `Re F(t,A,B) / Re F(t,I,B)`; points where the denominator vanishes are
/// emitted as NaN and flagged divergent.
pub fn corrected_f_otoc(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, rho_s0: &ComplexMatrix, grid: &TimeGrid) -> Result<DiagnosticSeries> {
    let (fab, fib) = f_otoc_pair(engine, a, b, rho_s0, grid)?;
    let mut values = Vec::with_capacity(grid.n_points);
    let mut flags = Vec::with_capacity(grid.n_points);
    for (num, den) in fab.values.iter().zip(&fib.values) {
        if den.re.abs() < TOLERANCES.divergence {
            values.push(C64::new(f64::NAN, 0.0));
            flags.push(Flag::Divergent);
        } else {
            values.push(C64::new(num.re / den.re, 0.0));
            flags.push(Flag::Ok);
        }
    }
    let mut series = DiagnosticSeries::new(*grid, "fotoc_corrected", values, operator_metadata(engine, &[("a", a), ("b", b)]));
    series.flags = flags;
    Ok(series)
}

/// `F(t,A,B)` and `F(t,I,B)` sharing the Kraus sets at every grid point.
pub fn f_otoc_pair(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, rho_s0: &ComplexMatrix, grid: &TimeGrid) -> Result<(DiagnosticSeries, DiagnosticSeries)> {
    let am = system_operator(engine, a, true)?;
    let bm = system_operator(engine, b, true)?;
    check_density(rho_s0, engine.system_dim(), "initial system state")?;
    let id = ComplexMatrix::identity(engine.system_dim());
    let pairs = sample(grid, |t| {
        let kf = engine.kraus(Direction::Forward, t);
        let kb = engine.kraus(Direction::Backward, t);
        Ok((fotoc_value(&kf, &kb, &am, &bm, rho_s0), fotoc_value(&kf, &kb, &id, &bm, rho_s0)))
    })?;
    let (fab, fib): (Vec<C64>, Vec<C64>) = pairs.into_iter().unzip();
    let identity = LocalOperator::identity(a.site, a.op.dim());
    Ok((
        DiagnosticSeries::new(*grid, "fotoc", fab, operator_metadata(engine, &[("a", a), ("b", b)])),
        DiagnosticSeries::new(*grid, "fotoc", fib, operator_metadata(engine, &[("a", &identity), ("b", b)])),
    ))
}

/// The four correlators of the commutator decomposition.
#[derive(Clone, Debug)]
pub struct Correlators {
    pub c: DiagnosticSeries,
    pub d: DiagnosticSeries,
    pub i: DiagnosticSeries,
    pub f: DiagnosticSeries,
}

fn sparse_dot(x: &[(usize, C64)], y: &[(usize, C64)]) -> C64 {
    // <x, y> for index-sorted vectors
    let (mut p, mut q, mut acc) = (0, 0, ZERO);
    while p < x.len() && q < y.len() {
        match x[p].0.cmp(&y[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                acc += x[p].1.conj() * y[q].1;
                p += 1;
                q += 1;
            }
        }
    }
    acc
}

fn sparse_norm_sqr(x: &[(usize, C64)]) -> f64 {
    x.iter().map(|(_, z)| z.norm_sqr()).sum()
}

/// `C`, `D`, `I` and `F` at infinite system temperature.
///
/// Heisenberg operators live on the composite space, `A_t = U†(A⊗I)U`, and
/// averages are taken in `(I/d_S) ⊗ ρ_E`. In this picture `C = D + I − 2 Re F`
/// holds identically and unitary `A`, `B` give `D = I = 1`.
pub fn correlator_decomposition(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, grid: &TimeGrid) -> Result<Correlators> {
    system_operator(engine, a, false)?;
    system_operator(engine, b, false)?;
    let dims = engine.model().layout.dims().to_vec();
    let d_s = engine.system_dim();
    let d_e = engine.env_dim();
    let bath = engine.bath();
    // purification-free sampling vectors √(q_k/d_S) |s> ⊗ |φ_k>
    let mut psis: Vec<SparseVec> = Vec::with_capacity(d_s * bath.rank());
    for s in 0..d_s {
        for (q, phi) in bath.weights.iter().zip(&bath.states) {
            let w = (q / d_s as f64).sqrt();
            psis.push(phi.iter().map(|&(e, v)| (s * d_e + e, v * w)).collect());
        }
    }
    let rows = sample(grid, |t| {
        let mut ws = engine.workspace();
        let a_t = |x: &SparseVec, ws: &mut _| {
            let u = engine.evolve_vector(Direction::Forward, t, x, false, ws);
            let au = apply_local(&a.op, a.site, &dims, &u);
            engine.evolve_vector(Direction::Forward, t, &au, true, ws)
        };
        let (mut c, mut d, mut i, mut f) = (0.0, 0.0, 0.0, ZERO);
        for psi in &psis {
            let bpsi = apply_local(&b.op, b.site, &dims, psi);
            let atb = a_t(&bpsi, &mut ws);
            let at = a_t(psi, &mut ws);
            let bat = apply_local(&b.op, b.site, &dims, &at);
            d += sparse_norm_sqr(&atb);
            i += sparse_norm_sqr(&bat);
            f += sparse_dot(&bat, &atb);
            let mut diff = atb.clone();
            diff.extend(bat.iter().map(|&(k, v)| (k, -v)));
            diff.sort_unstable_by_key(|&(k, _)| k);
            let mut merged: SparseVec = Vec::with_capacity(diff.len());
            for (k, v) in diff {
                match merged.last_mut() {
                    Some((j, acc)) if *j == k => *acc += v,
                    _ => merged.push((k, v)),
                }
            }
            c += sparse_norm_sqr(&merged);
        }
        Ok((c, d, i, f))
    })?;
    let meta = operator_metadata(engine, &[("a", a), ("b", b)]);
    let col = |kind: &str, pick: &dyn Fn(&(f64, f64, f64, C64)) -> C64| {
        DiagnosticSeries::new(*grid, kind, rows.iter().map(pick).collect(), meta.clone())
    };
    Ok(Correlators {
        c: col("correlator_c", &|r| C64::new(r.0, 0.0)),
        d: col("correlator_d", &|r| C64::new(r.1, 0.0)),
        i: col("correlator_i", &|r| C64::new(r.2, 0.0)),
        f: col("correlator_f", &|r| r.3),
    })
}

/// `Tr[ρ ρ']` with `ρ' = Tr_E[U_b U_f (ρ ⊗ ρ_E) U_f† U_b†]`, optionally divided by `Tr ρ²`.
pub fn loschmidt_echo(engine: &EvolutionEngine, rho_s0: &ComplexMatrix, rho_e0: &ComplexMatrix, grid: &TimeGrid, normalize: bool) -> Result<DiagnosticSeries> {
    check_density(rho_s0, engine.system_dim(), "initial system state")?;
    check_density(rho_e0, engine.env_dim(), "initial environment state")?;
    let system = Ensemble::new(rho_s0)?;
    let bath = Ensemble::new(rho_e0)?;
    let purity = rho_s0.trace_product(rho_s0).re;
    let scale = if normalize { 1.0 / purity } else { 1.0 };
    let values = sample(grid, |t| {
        let echoed = engine.evolve_state(Direction::Echo, t, &system, &bath);
        Ok(C64::new(rho_s0.trace_product(&echoed).re * scale, 0.0))
    })?;
    let mut meta = json!({ "model": engine.model().spec, "normalize": normalize });
    meta["purity"] = json!(purity);
    Ok(DiagnosticSeries::new(*grid, "loschmidt", values, meta))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Spectral,
    SpectralSquared,
}

/// `O(t) = ‖[ξ_f†(t)·A, B]‖`
pub fn commutator_growth(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, grid: &TimeGrid) -> Result<DiagnosticSeries> {
    commutator_growth_with(engine, a, b, grid, NormKind::Spectral)
}

pub fn commutator_growth_with(engine: &EvolutionEngine, a: &LocalOperator, b: &LocalOperator, grid: &TimeGrid, norm: NormKind) -> Result<DiagnosticSeries> {
    let am = system_operator(engine, a, false)?;
    let bm = system_operator(engine, b, false)?;
    let values = sample(grid, |t| {
        let at = engine.heisenberg_operator(&am, t)?;
        let comm = at.commutator(&bm);
        let v = match norm {
            NormKind::Spectral => spectral_norm(&comm),
            NormKind::SpectralSquared => spectral_norm_squared(&comm),
        };
        Ok(C64::new(v, 0.0))
    })?;
    let mut meta = operator_metadata(engine, &[("a", a), ("b", b)]);
    meta["norm"] = json!(norm);
    Ok(DiagnosticSeries::new(*grid, "commutator_norm", values, meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeFit {
    pub distances: Vec<f64>,
    /// `+inf` where a series never crosses the threshold.
    pub onset_times: Vec<f64>,
    /// Sites per unit time; NaN when the fit is degenerate.
    pub velocity: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub threshold: f64,
    pub k0_xi0_fit: Option<(f64, f64)>,
    /// Onsets strictly increase with distance.
    pub ordered: bool,
    pub degenerate: bool,
    /// Indices left out of the fit because they never crossed.
    pub excluded: Vec<usize>,
}

/// First time the real part exceeds `fraction × max`, interpolated linearly.
pub fn onset_time(series: &DiagnosticSeries, fraction: f64) -> f64 {
    let v = series.real();
    let t = series.times();
    let max = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return f64::INFINITY;
    }
    let level = fraction * max;
    for i in 0..v.len() {
        if v[i] > level {
            if i == 0 {
                return t[0];
            }
            let (v0, v1) = (v[i - 1], v[i]);
            return t[i - 1] + (level - v0) / (v1 - v0) * (t[i] - t[i - 1]);
        }
    }
    f64::INFINITY
}

pub fn light_cone_fit(series_by_distance: &[(f64, &DiagnosticSeries)], threshold_fraction: f64) -> Result<LightConeFit> {
    if series_by_distance.len() < 2 {
        return Err(Error::InvalidParameter("light-cone fit needs at least two distances".into()));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold fraction {threshold_fraction} outside (0, 1)")));
    }
    let distances: Vec<f64> = series_by_distance.iter().map(|(d, _)| *d).collect();
    let onset_times: Vec<f64> = series_by_distance.iter().map(|(_, s)| onset_time(s, threshold_fraction)).collect();
    let excluded: Vec<usize> = (0..onset_times.len()).filter(|&i| !onset_times[i].is_finite()).collect();
    let pts: Vec<(f64, f64)> = onset_times
        .iter()
        .zip(&distances)
        .filter(|(o, _)| o.is_finite())
        .map(|(&o, &d)| (o, d))
        .collect();

    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&i, &j| distances[i].total_cmp(&distances[j]));
    let ordered = excluded.is_empty() && order.windows(2).all(|w| onset_times[w[1]] > onset_times[w[0]]);

    let n = pts.len() as f64;
    let (mut velocity, mut intercept, mut r_squared, mut degenerate) = (f64::NAN, f64::NAN, f64::NAN, true);
    if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 1e-12 * (1.0 + mx * mx) {
            velocity = sxy / sxx;
            intercept = my - velocity * mx;
            r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
            degenerate = false;
        }
    }
    Ok(LightConeFit {
        distances,
        onset_times,
        velocity,
        intercept,
        r_squared,
        threshold: threshold_fraction,
        k0_xi0_fit: None,
        ordered,
        degenerate,
        excluded,
    })
}

/// `T(t) = ½ ‖ξ_f(t)·ρ₁ − ξ_f(t)·ρ₂‖₁`
pub fn blp_trace_distance(engine: &EvolutionEngine, rho1: &ComplexMatrix, rho2: &ComplexMatrix, grid: &TimeGrid) -> Result<DiagnosticSeries> {
    check_density(rho1, engine.system_dim(), "first state")?;
    check_density(rho2, engine.system_dim(), "second state")?;
    let e1 = Ensemble::new(rho1)?;
    let e2 = Ensemble::new(rho2)?;
    let values = sample(grid, |t| {
        let r1 = engine.evolve_state(Direction::Forward, t, &e1, engine.bath());
        let r2 = engine.evolve_state(Direction::Forward, t, &e2, engine.bath());
        Ok(C64::new(0.5 * trace_norm(&(&r1 - &r2)), 0.0))
    })?;
    let meta = json!({ "model": engine.model().spec });
    Ok(DiagnosticSeries::new(*grid, "blp", values, meta))
}

/// A strict increase of the trace distance between consecutive grid points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevivalEvent {
    pub index: usize,
    pub t: f64,
    pub increase: f64,
}

/// Increases larger than `min_increase`, each a non-Markovianity witness.
pub fn blp_revivals(series: &DiagnosticSeries, min_increase: f64) -> Vec<RevivalEvent> {
    let v = series.real();
    (1..v.len())
        .filter(|&i| v[i] - v[i - 1] > min_increase)
        .map(|i| RevivalEvent {
            index: i,
            t: series.grid.t(i),
            increase: v[i] - v[i - 1],
        })
        .collect()
}

/// Identity on the site of `op`; convenience for `F(t, I, B)`.
pub fn identity_like(op: &LocalOperator) -> LocalOperator {
    LocalOperator::identity(op.site, op.op.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::small_tfim;
    use crate::linalg::ONE;
    use crate::hilbert::SpinKind;
    use crate::linalg::testutil::random_density;
    use crate::linalg::{evolve_unitary, herm_eig};
    use crate::models::{build_tc, build_tfim, named_initial_state, NamedState, TCSpec, TFIMSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn z(site: usize) -> LocalOperator {
        LocalOperator::spin(SpinKind::Z, site)
    }

    fn grid(n: usize, end: f64) -> TimeGrid {
        TimeGrid::new(0.0, end, n).unwrap()
    }

    fn tfim3(theta: f64) -> EvolutionEngine {
        EvolutionEngine::unperturbed(
            build_tfim(&TFIMSpec {
                theta,
                n_system: 3,
                n_bath: 2,
                ..TFIMSpec::default()
            })
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn grid_parsing_and_endpoints() {
        let g: TimeGrid = "0:20:400".parse().unwrap();
        assert_eq!(g.n_points, 400);
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(399), 20.0);
        assert_eq!(g.to_string().parse::<TimeGrid>().unwrap(), g);
        assert!("1:0:5".parse::<TimeGrid>().is_err());
        assert!("0:1:1".parse::<TimeGrid>().is_err());
        assert!("0:1".parse::<TimeGrid>().is_err());
    }

    #[test]
    fn fotoc_is_one_at_time_zero_for_distinct_sites() {
        let e = tfim3(0.7);
        let rho = e.model().rho_s0.clone();
        let s = f_otoc_direct(&e, &z(2), &z(0), &rho, &grid(2, 1.0)).unwrap();
        assert!((s.values[0] - ONE).norm() < 1e-12);
    }

    #[test]
    fn fotoc_theta_zero_is_one() {
        let e = tfim3(0.0);
        let rho = e.model().rho_s0.clone();
        let s = f_otoc_direct(&e, &z(1), &z(0), &rho, &grid(15, 20.0)).unwrap();
        assert!(s.values.iter().all(|v| (v.re - 1.0).abs() < 1e-8));
    }

    #[test]
    fn protocol_matches_direct_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let kinds = [SpinKind::X, SpinKind::Y, SpinKind::Z];
        let tc = EvolutionEngine::unperturbed(
            build_tc(&TCSpec {
                n_atoms: 2,
                j_s: 0.5,
                fock_cutoff: 6,
                temperature: 2.0,
                ..TCSpec::default()
            })
            .unwrap(),
        )
        .unwrap();
        for e in [&tfim3(1.1), &tc] {
            let n = e.model().layout.system_count();
            let rho = e.model().rho_s0.clone();
            for _ in 0..3 {
                let a = LocalOperator::spin(kinds[rng.gen_range(0..3)], rng.gen_range(0..n));
                let b = LocalOperator::spin(kinds[rng.gen_range(0..3)], rng.gen_range(0..n));
                let g = grid(6, 5.0);
                let d = f_otoc_direct(e, &a, &b, &rho, &g).unwrap();
                let p = f_otoc_protocol(e, &a, &b, &rho, &g).unwrap();
                for (x, y) in d.values.iter().zip(&p.values) {
                    assert!((x - y).norm() < 1e-10, "{x} vs {y}");
                    assert!(x.norm() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn hermitian_operators_give_real_fotoc_at_infinite_temperature() {
        // Tr[ξ_b†(B) A ξ_f(B) A] / d is its own conjugate by cyclicity; a
        // generic pure state carries a genuine imaginary part.
        let e = tfim3(0.9);
        let mixed = named_initial_state(NamedState::Rho2, 3).unwrap();
        let g = grid(7, 6.0);
        for (ka, kb) in [(SpinKind::Z, SpinKind::Z), (SpinKind::X, SpinKind::Y)] {
            let s = f_otoc_direct(&e, &LocalOperator::spin(ka, 2), &LocalOperator::spin(kb, 0), &mixed, &g).unwrap();
            assert!(s.values.iter().all(|v| v.im.abs() < 1e-9));
        }
        let pure = e.model().rho_s0.clone();
        let s = f_otoc_direct(&e, &z(2), &z(0), &pure, &g).unwrap();
        assert!(s.values.iter().any(|v| v.im.abs() > 1e-3));
    }

    #[test]
    fn closed_system_matches_heisenberg_otoc() {
        let mut model = small_tfim(1.0);
        model.h_int = ComplexMatrix::zeros(16);
        let hs = ComplexMatrix::from_fn(4, |i, j| model.h_system[(i * 4, j * 4)]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rho = random_density(&mut rng, 4);
        let e = EvolutionEngine::unperturbed(model).unwrap();
        let (a, b) = (LocalOperator::spin(SpinKind::X, 1), z(0));
        let am = embed(&a, &e.model().layout, Scope::System).unwrap();
        let bm = embed(&b, &e.model().layout, Scope::System).unwrap();
        let g = grid(5, 3.0);
        let p = f_otoc_protocol(&e, &a, &b, &rho, &g).unwrap();
        let sd = herm_eig(&hs).unwrap();
        for (k, t) in g.times().into_iter().enumerate() {
            let u = evolve_unitary(&sd, t);
            let at = u.adjoint().matmul(&am).matmul(&u);
            let otoc = at.adjoint().matmul(&bm.adjoint()).matmul(&at).matmul(&bm).trace_product(&rho);
            assert!((p.values[k].re - otoc.re).abs() < 1e-12);
        }
    }

    #[test]
    fn non_unitary_operator_rejected() {
        let e = tfim3(0.5);
        let rho = e.model().rho_s0.clone();
        let p = LocalOperator::spin(SpinKind::Plus, 1);
        let err = f_otoc_direct(&e, &p, &z(0), &rho, &grid(2, 1.0)).unwrap_err();
        assert!(err.to_string().contains("operator not unitary"));
    }

    #[test]
    fn corrected_fotoc_cases() {
        let mut model = small_tfim(0.8);
        model.h_int = ComplexMatrix::zeros(16);
        let e = EvolutionEngine::unperturbed(model).unwrap();
        let rho = e.model().rho_s0.clone();
        let g = grid(6, 4.0);
        let fc = corrected_f_otoc(&e, &z(1), &z(0), &rho, &g).unwrap();
        let f = f_otoc_direct(&e, &z(1), &z(0), &rho, &g).unwrap();
        for (x, y) in fc.values.iter().zip(&f.values) {
            assert!((x.re - y.re).abs() < 1e-10);
        }
        assert!((fc.values[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlator_identities() {
        let e = tfim3(std::f64::consts::PI / 8.0);
        let g = grid(8, 6.0);
        let c = correlator_decomposition(&e, &LocalOperator::spin(SpinKind::X, 2), &z(0), &g).unwrap();
        for k in 0..g.n_points {
            let (cc, d, i, f) = (c.c.values[k].re, c.d.values[k].re, c.i.values[k].re, c.f.values[k]);
            assert!((cc - (d + i - 2.0 * f.re)).abs() < 1e-9);
            assert!((cc - 2.0 * (1.0 - f.re)).abs() < 1e-9);
        }
        assert!(c.c.values[0].re.abs() < 1e-12);
        assert!((c.f.values[0] - ONE).norm() < 1e-12);
    }

    #[test]
    fn correlators_with_non_unitary_operator_still_decompose() {
        let e = tfim3(1.0);
        let g = grid(5, 3.0);
        let a = LocalOperator::spin(SpinKind::Plus, 1);
        let c = correlator_decomposition(&e, &a, &LocalOperator::spin(SpinKind::X, 0), &g).unwrap();
        for k in 0..g.n_points {
            let resid = c.c.values[k].re - (c.d.values[k].re + c.i.values[k].re - 2.0 * c.f.values[k].re);
            assert!(resid.abs() < 1e-9);
        }
    }

    #[test]
    fn loschmidt_cases() {
        let e = tfim3(FRAC_PI_2);
        let g = grid(10, 8.0);
        let rho_e = e.model().rho_e0.clone();
        let raw = loschmidt_echo(&e, &e.model().rho_s0, &rho_e, &g, false).unwrap();
        assert!((raw.values[0].re - 1.0).abs() < 1e-12);
        let mixed = named_initial_state(NamedState::Rho2, 3).unwrap();
        let mixed_e = named_initial_state(NamedState::Rho2, 2).unwrap();
        let l = loschmidt_echo(&e, &mixed, &mixed_e, &g, true).unwrap();
        assert!(l.values.iter().all(|v| (v.re - 1.0).abs() < 1e-10));
    }

    #[test]
    fn commutator_growth_cases() {
        let e = tfim3(0.0);
        let g = grid(10, 10.0);
        let o = commutator_growth(&e, &z(2), &z(0), &g).unwrap();
        assert!(o.values.iter().all(|v| v.re.abs() < 1e-9));
        let e = tfim3(FRAC_PI_2);
        let o = commutator_growth(&e, &z(2), &z(0), &g).unwrap();
        assert!(o.values[0].re.abs() < 1e-12);
        assert!(o.values.iter().all(|v| v.re <= 2.0 + 1e-9));
        let sq = commutator_growth_with(&e, &z(2), &z(0), &g, NormKind::SpectralSquared).unwrap();
        for (a, b) in o.values.iter().zip(&sq.values) {
            assert!((a.re * a.re - b.re).abs() < 1e-9);
        }
    }

    #[test]
    fn commutator_growth_two_spin_closed_oracle() {
        // H = σᶻσᶻ on a 2-spin system with a decoupled 1-spin bath
        let mut model = build_tfim(&TFIMSpec {
            b_field: 0.0,
            j_coupling: 1.0,
            theta: 0.0,
            n_system: 2,
            n_bath: 1,
        })
        .unwrap();
        model.h_int = ComplexMatrix::zeros(8);
        let e = EvolutionEngine::unperturbed(model).unwrap();
        let g = grid(7, 3.0);
        let o = commutator_growth(&e, &LocalOperator::spin(SpinKind::X, 0), &LocalOperator::spin(SpinKind::X, 1), &g).unwrap();
        // σˣ₀(t) = σˣ₀ (cos 2t − i sin 2t σᶻ₀σᶻ₁), so ‖[σˣ₀(t), σˣ₁]‖ = 2|sin 2t|
        for (k, t) in g.times().into_iter().enumerate() {
            assert!((o.values[k].re - 2.0 * (2.0 * t).sin().abs()).abs() < 1e-10);
        }
    }

    fn synthetic(onset: f64) -> DiagnosticSeries {
        let g = grid(101, 10.0);
        let values = g.times().into_iter().map(|t| C64::new(if t >= onset { 1.0 } else { 0.0 }, 0.0)).collect();
        DiagnosticSeries::new(g, "synthetic", values, Value::Null)
    }

    #[test]
    fn light_cone_synthetic_steps() {
        let s: Vec<DiagnosticSeries> = [1.0, 2.0, 3.0].iter().map(|&o| synthetic(o)).collect();
        let fit = light_cone_fit(&[(1.0, &s[0]), (2.0, &s[1]), (3.0, &s[2])], 0.05).unwrap();
        assert!((fit.velocity - 1.0).abs() < 1e-9);
        assert!(fit.ordered && !fit.degenerate);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn light_cone_degenerate_and_never_crossing() {
        let s = synthetic(2.0);
        let fit = light_cone_fit(&[(1.0, &s), (2.0, &s), (3.0, &s)], 0.05).unwrap();
        assert!(fit.degenerate && fit.velocity.is_nan() && !fit.ordered);
        let flat = DiagnosticSeries::new(grid(11, 1.0), "flat", vec![ZERO; 11], Value::Null);
        let fit = light_cone_fit(&[(1.0, &s), (2.0, &flat)], 0.05).unwrap();
        assert_eq!(fit.excluded, vec![1]);
        assert!(fit.onset_times[1].is_infinite() && fit.degenerate);
        assert!(light_cone_fit(&[(1.0, &s)], 0.05).is_err());
    }

    #[test]
    fn blp_cases() {
        let e = tfim3(0.0);
        let g = grid(12, 15.0);
        let plus = named_initial_state(NamedState::Plus, 3).unwrap();
        let minus = named_initial_state(NamedState::Minus, 3).unwrap();
        let s = blp_trace_distance(&e, &plus, &minus, &g).unwrap();
        assert!(s.values.iter().all(|v| (v.re - 1.0).abs() < 1e-8));
        let same = blp_trace_distance(&e, &plus, &plus, &g).unwrap();
        assert!(same.values.iter().all(|v| v.re.abs() < 1e-12));
        let rev = blp_revivals(&s, 1e-6);
        assert!(rev.is_empty());
    }

    #[test]
    fn parallel_matches_serial() {
        let e = tfim3(1.2);
        let rho = e.model().rho_s0.clone();
        let g = grid(9, 5.0);
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| f_otoc_direct(&e, &z(2), &z(0), &rho, &g).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.values, b.values);
    }
}
