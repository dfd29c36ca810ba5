//! Experiment drivers: the certified test family, the rate study and the
//! bundled verification suite used by the `wfstein` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::DirichletLaw;
use crate::error::{Error, Result};
use crate::interp::{interpolation_error, AnalyticFn, WeightKernel, STENCIL};
use crate::kernel::{stationary_distribution, TransitionKernel, STATIONARY_RESIDUAL_TOL};
use crate::lattice::{multi_indices, GridFunction, LatticeState, ModelParams, SimplexLattice};
use crate::moments::{
    binomial_tail_bound, central_moment_exact, diffusion, drift, fourth_abs_moment, third_moment_diagonal,
    third_moment_envelope, ENUMERATION_CAP, MC_DRAWS,
};
use crate::stein::{
    ancestry_coupling_sim, dirichlet_characterization, factor_bound, series_solution, solve_stein, TestFunction,
    STEIN_RESIDUAL_TOL,
};

/// Every family member is scaled so its certified constant is at most this.
pub const C_STAR: f64 = 1.0;
/// Number of random polynomial mixtures in the family.
pub const MIXTURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub beta: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub family_seed: u64,
    pub mc_seed: u64,
    pub quadrature_order: usize,
    pub output_path: PathBuf,
    /// Requires every `N > 100K²` when set.
    #[serde(default)]
    pub generator_expansion: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            beta: vec![2.0, 12.0],
            k: 2,
            n_list: vec![8, 16, 32, 64, 128],
            family_seed: 20_240_601,
            mc_seed: 7,
            quadrature_order: crate::dirichlet::DEFAULT_QUADRATURE_ORDER,
            output_path: PathBuf::from("out"),
            generator_expansion: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return bad(format!("K must be at least 2, got {}", self.k));
        }
        if self.beta.len() != self.k {
            return bad(format!("beta has {} entries but K = {}", self.beta.len(), self.k));
        }
        if self.beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return bad("beta entries must be positive and finite".into());
        }
        if self.n_list.is_empty() {
            return bad("N_list is empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("N_list must be strictly increasing".into());
        }
        if self.quadrature_order < 2 {
            return bad("quadrature_order must be at least 2".into());
        }
        for &n in &self.n_list {
            ModelParams::new(n, self.beta.clone()).map_err(|e| Error::Config(format!("N = {n}: {e}")))?;
            if self.generator_expansion && n <= 100 * self.k * self.k {
                return bad(format!("generator expansion needs N > 100K² = {}, got {n}", 100 * self.k * self.k));
            }
        }
        Ok(())
    }

    pub fn params(&self, n: usize) -> Result<ModelParams> {
        ModelParams::new(n, self.beta.clone()).map_err(|e| e.at_n(n))
    }
}

/// A smooth function on the simplex from which lattice test functions are cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FamilyKind {
    Monomial(Vec<usize>),
    /// `Σ c_a u^a`
    Mixture(Vec<(f64, Vec<usize>)>),
    /// `exp(⟨w, u⟩)`
    ExpLinear(Vec<f64>),
    /// `exp(−exp(⟨w, u⟩))`
    ExpExpLinear(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyMember {
    pub id: String,
    pub kind: FamilyKind,
    pub scale: f64,
}

fn monomial(x: &[f64], a: &[usize]) -> f64 {
    x.iter().zip(a).map(|(v, &e)| v.powi(e as i32)).product()
}

impl FamilyMember {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot = |w: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let raw = match &self.kind {
            FamilyKind::Monomial(a) => monomial(x, a),
            FamilyKind::Mixture(terms) => terms.iter().map(|(c, a)| c * monomial(x, a)).sum(),
            FamilyKind::ExpLinear(w) => dot(w).exp(),
            FamilyKind::ExpExpLinear(w) => (-dot(w).exp()).exp(),
        };
        self.scale * raw
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.kind, FamilyKind::Monomial(_) | FamilyKind::Mixture(_))
    }

    /// `E h(Z)` with an error estimate: exact moments for polynomials,
    /// otherwise Gauss-Jacobi at `order` with `|Q(order) − Q(order/2)|`.
    pub fn dirichlet_mean(&self, law: &DirichletLaw, order: usize) -> Result<(f64, f64)> {
        let full = |a: &[usize]| {
            let mut v = a.to_vec();
            v.push(0);
            v
        };
        match &self.kind {
            FamilyKind::Monomial(a) => Ok((self.scale * law.monomial_moment(&full(a))?, 0.0)),
            FamilyKind::Mixture(terms) => {
                let mut acc = 0.0;
                for (c, a) in terms {
                    acc += c * law.monomial_moment(&full(a))?;
                }
                Ok((self.scale * acc, 0.0))
            }
            _ => {
                let q = law.expectation(|x| self.eval(x), order)?;
                let coarse = law.expectation(|x| self.eval(x), (order / 2).max(1))?;
                Ok((q, (q - coarse).abs()))
            }
        }
    }

    pub fn on_lattice(&self, lattice: &Arc<SimplexLattice>) -> GridFunction {
        GridFunction::from_fn(lattice.clone(), |s| self.eval(s.value()))
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self { scale, ..self.clone() }
    }
}

fn index_label(a: &[usize]) -> String {
    a.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("")
}

/// Unscaled family on `d = K − 1` coordinates: all monomials with
/// `1 ≤ |a| ≤ 4`, [`MIXTURES`] random mixtures of those monomials with
/// coefficients in `[−1, 1]`, and `exp(⟨w,u⟩)`, `exp(−exp(⟨w,u⟩))` with
/// `w ∈ [−1, 1]^d`, all drawn from `seed`.
pub fn family_members(k: usize, seed: u64) -> Vec<FamilyMember> {
    let d = k - 1;
    let monos: Vec<Vec<usize>> = (1..=4).flat_map(|o| multi_indices(d, o)).collect();
    let mut out: Vec<FamilyMember> = monos
        .iter()
        .map(|a| FamilyMember { id: format!("mono_{}", index_label(a)), kind: FamilyKind::Monomial(a.clone()), scale: 1.0 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 0..MIXTURES {
        let terms = monos.iter().map(|a| (rng.random_range(-1.0..=1.0), a.clone())).collect();
        out.push(FamilyMember { id: format!("mix_{m}"), kind: FamilyKind::Mixture(terms), scale: 1.0 });
    }
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    out.push(FamilyMember { id: "exp_lin".into(), kind: FamilyKind::ExpLinear(w.clone()), scale: 1.0 });
    out.push(FamilyMember { id: "exp_exp_lin".into(), kind: FamilyKind::ExpExpLinear(w), scale: 1.0 });
    out
}

/// The family restricted to `lattice`, each member certified and scaled so
/// that its constant equals [`C_STAR`].
pub fn build_test_family(lattice: &Arc<SimplexLattice>, seed: u64) -> Vec<TestFunction> {
    family_members(lattice.params().k(), seed)
        .iter()
        .map(|m| TestFunction::certify(m.id.clone(), m.on_lattice(lattice)).scaled_to(C_STAR))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub h_id: String,
    #[serde(rename = "E_h_U")]
    pub e_h_u: f64,
    #[serde(rename = "E_h_Z")]
    pub e_h_z: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    #[serde(rename = "N")]
    pub n: usize,
    /// `max_h |E_π h(U) − E h(Z)|`
    pub e: f64,
    pub worst_h: String,
    pub e_times_n: f64,
    /// Largest quadrature error estimate among non-polynomial members.
    pub quadrature_error: f64,
    pub stationary_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub beta: Vec<f64>,
    pub c_star: f64,
    pub family: Vec<FamilyMember>,
    pub rows: Vec<RateRow>,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log e(N)` against `log N`.
    pub slope: f64,
    pub median_e_times_n: f64,
    /// `e(N)·N ≤ 2 × median` for every `N`.
    pub bounded: bool,
    /// Quadrature error estimate below `e(N)/100` for every `N`.
    pub quadrature_ok: bool,
}

/// Runs the study over `cfg.n_list`. Family members are scaled by one
/// factor across all `N`, chosen so the certified constant is at most
/// [`C_STAR`] on every lattice.
pub fn rate_study(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let base = family_members(cfg.k, cfg.family_seed);
    let law = DirichletLaw::new(cfg.beta.clone())?;

    let lattices: Vec<Arc<SimplexLattice>> = cfg
        .n_list
        .par_iter()
        .map(|&n| Ok(Arc::new(SimplexLattice::new(cfg.params(n)?).map_err(|e| e.at_n(n))?)))
        .collect::<Result<_>>()?;

    let mut family = base.clone();
    for (m, member) in family.iter_mut().enumerate() {
        let c_max = lattices
            .par_iter()
            .map(|l| TestFunction::certify(base[m].id.clone(), base[m].on_lattice(l)).c())
            .reduce(|| 0.0, f64::max);
        if c_max > 0.0 {
            *member = base[m].with_scale(C_STAR / c_max);
        }
    }

    let z_means: Vec<(f64, f64)> = family
        .par_iter()
        .map(|m| m.dirichlet_mean(&law, cfg.quadrature_order))
        .collect::<Result<_>>()?;

    let per_n: Vec<(Vec<RateRow>, RatePoint)> = lattices
        .par_iter()
        .map(|lattice| {
            let n = lattice.n();
            let kernel = TransitionKernel::new(lattice.clone());
            let pi = stationary_distribution(&kernel).map_err(|e| e.at_n(n))?;
            let rows: Vec<RateRow> = family
                .iter()
                .zip(&z_means)
                .map(|(m, &(ez, _))| {
                    let eu = pi.expectation(m.on_lattice(lattice).values());
                    RateRow { n, h_id: m.id.clone(), e_h_u: eu, e_h_z: ez, abs_err: (eu - ez).abs() }
                })
                .collect();
            let worst = rows
                .iter()
                .max_by(|a, b| a.abs_err.total_cmp(&b.abs_err))
                .expect("family is non-empty");
            let quadrature_error = z_means.iter().map(|z| z.1).fold(0.0, f64::max);
            let point = RatePoint {
                n,
                e: worst.abs_err,
                worst_h: worst.h_id.clone(),
                e_times_n: worst.abs_err * n as f64,
                quadrature_error,
                stationary_residual: pi.residual(),
            };
            Ok((rows, point))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (r, p) in per_n {
        rows.extend(r);
        points.push(p);
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let es: Vec<f64> = points.iter().map(|p| p.e).collect();
    let slope = if points.len() >= 2 && es.iter().all(|e| *e > 0.0) {
        crate::interp::log_log_slope(&ns, &es)
    } else {
        f64::NAN
    };
    let mut en: Vec<f64> = points.iter().map(|p| p.e_times_n).collect();
    en.sort_by(f64::total_cmp);
    let median = if en.len() % 2 == 1 {
        en[en.len() / 2]
    } else {
        0.5 * (en[en.len() / 2 - 1] + en[en.len() / 2])
    };
    let bounded = points.iter().all(|p| p.e_times_n <= 2.0 * median);
    let quadrature_ok = points.iter().all(|p| p.quadrature_error < p.e / 100.0);
    Ok(RateReport {
        beta: cfg.beta.clone(),
        c_star: C_STAR,
        family,
        rows,
        points,
        slope,
        median_e_times_n: median,
        bounded,
        quadrature_ok,
    })
}

/// Writes `N,h_id,E_h_U,E_h_Z,abs_err`.
pub fn write_rate_csv(report: &RateReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RateSummary<'a> {
    beta: &'a [f64],
    c_star: f64,
    slope: f64,
    median_e_times_n: f64,
    bounded_tolerance: &'static str,
    bounded: bool,
    quadrature_tolerance: &'static str,
    quadrature_ok: bool,
    points: &'a [RatePoint],
}

pub fn write_rate_summary(report: &RateReport, path: &Path) -> Result<()> {
    let summary = RateSummary {
        beta: &report.beta,
        c_star: report.c_star,
        slope: report.slope,
        median_e_times_n: report.median_e_times_n,
        bounded_tolerance: "e(N)*N <= 2 * median over N_list",
        bounded: report.bounded,
        quadrature_tolerance: "quadrature error estimate < e(N)/100",
        quadrature_ok: report.quadrature_ok,
        points: &report.points,
    };
    fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// One invariant check: passes when `value ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value <= bound }
    }

    /// A check that failed to run at all.
    pub fn errored(name: impl Into<String>, e: &Error) -> Self {
        Self { name: format!("{} ({e})", name.into()), value: f64::NAN, bound: f64::NAN, passed: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed)
    }
}

fn push(records: &mut Vec<CheckRecord>, name: &str, r: Result<Vec<CheckRecord>>) {
    match r {
        Ok(v) => records.extend(v),
        Err(e) => records.push(CheckRecord::errored(name, &e)),
    }
}

/// Floating-point interpolation identities of a weight kernel: grid
/// interpolation, partition of unity and cubic reproduction on `[0, 1]`.
pub fn interpolator_checks(weights: &WeightKernel) -> Vec<CheckRecord> {
    let ts: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let at0 = weights.eval(0.0, 0);
    let interp = (0..STENCIL).map(|i| (at0[i] - if i == 0 { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max);
    let mut sum_err: f64 = 0.0;
    let mut cubic_err: f64 = 0.0;
    for &t in &ts {
        let w = weights.eval(t, 0);
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
        for p in 1..=3 {
            let s: f64 = w.iter().enumerate().map(|(i, wi)| wi * (i as f64).powi(p)).sum();
            cubic_err = cubic_err.max((s - t.powi(p)).abs());
        }
    }
    let mut out = vec![
        CheckRecord::new("interp.grid_interpolation", interp, 1e-12),
        CheckRecord::new("interp.sum_to_one", sum_err, 1e-10),
        CheckRecord::new("interp.cubic_reproduction", cubic_err, 1e-10),
    ];
    if let Some(ex) = weights.exact_identities() {
        out.push(CheckRecord::new("interp.exact_identities", if ex.all() { 0.0 } else { 1.0 }, 0.0));
    }
    out
}

struct SinProduct;

impl AnalyticFn for SinProduct {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        (3.0 * x[0]).sin() * (-x[0]).exp()
    }
    fn partial(&self, x: &[f64], a: &[usize]) -> f64 {
        // d^n/dx^n Im(e^{(3i − 1)x}) = Im((3i − 1)^n e^{(3i − 1)x})
        let n = a[0] as i32;
        let r = 10f64.sqrt().powi(n) * (-x[0]).exp();
        let phase = n as f64 * (3f64).atan2(-1.0) + 3.0 * x[0];
        r * phase.sin()
    }
}

fn order_check() -> Result<Vec<CheckRecord>> {
    let rep = interpolation_error(&SinProduct, &[0.5], &[1.5], 1.0 / 8.0, 4)?;
    Ok(vec![CheckRecord::new("interp.order_deviation_from_4", (rep.fitted_order - 4.0).abs(), 0.3)])
}

fn moment_checks(seed: u64) -> Result<Vec<CheckRecord>> {
    let cases: [(usize, Vec<f64>); 3] = [(4, vec![1.0, 1.0]), (6, vec![0.5, 2.0]), (5, vec![0.5, 1.0, 0.8])];
    let mut drift_err: f64 = 0.0;
    let mut diff_err: f64 = 0.0;
    let mut third_err: f64 = 0.0;
    let mut c_ratio: f64 = 0.0;
    let mut d_ratio: f64 = 0.0;
    let mut tail_ratio: f64 = 0.0;
    for (n, beta) in cases {
        let params = ModelParams::new(n, beta)?;
        let lattice = SimplexLattice::new(params.clone())?;
        let d = params.dim();
        for u in lattice.states() {
            for i in 0..d {
                drift_err = drift_err.max((central_moment_exact(&lattice, u, &[i])? - drift(&params, u, i)).abs());
                let c3 = central_moment_exact(&lattice, u, &[i, i, i])?;
                third_err = third_err.max((c3 - third_moment_diagonal(&params, u, i)).abs());
                for j in 0..d {
                    let e = central_moment_exact(&lattice, u, &[i, j])?;
                    diff_err = diff_err.max((e - diffusion(&params, u, i, j)).abs());
                    for k in 0..d {
                        let c = central_moment_exact(&lattice, u, &[i, j, k])?;
                        c_ratio = c_ratio.max(c.abs() / third_moment_envelope(&params));
                    }
                }
                let f = fourth_abs_moment(&params, u, [i; 4], ENUMERATION_CAP, MC_DRAWS, seed)?;
                d_ratio = d_ratio.max(f.value / f.envelope);
            }
            if params.sigma() > params.p()[params.k() - 1] {
                for m in 0..n {
                    let (exact, bound) = binomial_tail_bound(&params, u, m)?;
                    tail_ratio = tail_ratio.max(exact / bound);
                }
            }
        }
    }
    Ok(vec![
        CheckRecord::new("moments.drift_vs_enumeration", drift_err, 1e-12),
        CheckRecord::new("moments.diffusion_vs_enumeration", diff_err, 1e-12),
        CheckRecord::new("moments.third_diagonal_vs_enumeration", third_err, 1e-12),
        CheckRecord::new("moments.third_over_envelope", c_ratio, 1.0),
        CheckRecord::new("moments.fourth_over_envelope", d_ratio, 1.0),
        CheckRecord::new("moments.binomial_tail_over_bound", tail_ratio, 1.0),
    ])
}

fn stein_checks(cfg: &ExperimentConfig, n: usize) -> Result<Vec<CheckRecord>> {
    let params = cfg.params(n)?;
    let lattice = Arc::new(SimplexLattice::new(params.clone()).map_err(|e| e.at_n(n))?);
    let kernel = TransitionKernel::new(lattice.clone());
    let pi = stationary_distribution(&kernel).map_err(|e| e.at_n(n))?;
    let family = build_test_family(&lattice, cfg.family_seed);
    let per_h: Vec<(f64, f64, f64, f64)> = family
        .par_iter()
        .map(|t| {
            let sol = solve_stein(&kernel, &pi, t.h()).map_err(|e| e.at_n(n))?;
            let (series, _) = series_solution(&kernel, &pi, t.h(), 1e-11, 1_000_000).map_err(|e| e.at_n(n))?;
            let gap = series.iter().zip(sol.f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let ratio = (1..=4)
                .map(|i| sol.factors[i - 1] / factor_bound(t.c(), &params, i))
                .fold(0.0, f64::max);
            Ok((sol.residual, sol.pi_f.abs(), gap, ratio))
        })
        .collect::<Result<_>>()?;
    let max = |f: fn(&(f64, f64, f64, f64)) -> f64| per_h.iter().map(f).fold(0.0, f64::max);
    Ok(vec![
        CheckRecord::new(format!("stationary.residual N={n}"), pi.residual(), STATIONARY_RESIDUAL_TOL),
        CheckRecord::new(format!("stein.residual N={n}"), max(|r| r.0), STEIN_RESIDUAL_TOL),
        CheckRecord::new(format!("stein.pi_f N={n}"), max(|r| r.1), STEIN_RESIDUAL_TOL),
        CheckRecord::new(format!("stein.series_gap N={n}"), max(|r| r.2), 1e-8),
        CheckRecord::new(format!("stein.factor_over_bound N={n}"), max(|r| r.3), 1.0 + 1e-9),
    ])
}

fn coupling_checks(seed: u64) -> Result<Vec<CheckRecord>> {
    let params = ModelParams::new(50, vec![2.0, 2.0])?;
    let pts = ancestry_coupling_sim(&params, 2, 20, 20_000, seed)?;
    let z = |m: f64, th: f64, se: f64| if se > 0.0 { (m - th).abs() / se } else if m == th { 0.0 } else { f64::INFINITY };
    let z1 = pts.iter().map(|p| z(p.mean_v1, p.theory_v1, p.se_v1)).fold(0.0, f64::max);
    let z2 = pts
        .iter()
        .filter_map(|p| p.joint.as_ref())
        .map(|j| z(j.mean, j.exact, j.se))
        .fold(0.0, f64::max);
    Ok(vec![
        CheckRecord::new("coupling.mean_v1_z", z1, 4.0),
        CheckRecord::new("coupling.joint_exact_recursion_z", z2, 4.0),
    ])
}

fn beta_tail_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let law = DirichletLaw::new(cfg.beta.clone())?;
    [400usize, 1600]
        .iter()
        .map(|&n| {
            let (t, bound) = law.tail_envelope(n);
            let tail = law.beta_tail(t)?;
            Ok(CheckRecord::new(format!("dirichlet.beta_tail_minus_envelope N={n}"), tail - bound, 1e-10))
        })
        .collect()
}

fn characterization_check(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let n = cfg.n_list[0];
    let lattice = Arc::new(SimplexLattice::new(cfg.params(n)?)?);
    let kernel = TransitionKernel::new(lattice.clone());
    let pi = stationary_distribution(&kernel)?;
    let h = GridFunction::from_fn(lattice, |s: &LatticeState| s.value()[0].powi(2));
    let sol = solve_stein(&kernel, &pi, &h)?;
    let (mean, se) = dirichlet_characterization(&sol.f, 100_000, cfg.mc_seed)?;
    Ok(vec![CheckRecord::new(format!("stein.dirichlet_characterization_z N={n}"), mean.abs() / se, 4.0)])
}

fn rate_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckRecord>> {
    let rep = rate_study(cfg)?;
    let ratio = rep.points.iter().map(|p| p.e_times_n / rep.median_e_times_n).fold(0.0, f64::max);
    let quad = rep.points.iter().map(|p| p.quadrature_error / (p.e / 100.0)).fold(0.0, f64::max);
    Ok(vec![
        CheckRecord::new("rate.slope_deviation_from_minus_1", (rep.slope + 1.0).abs(), 0.3),
        CheckRecord::new("rate.e_times_n_over_median", ratio, 2.0),
        CheckRecord::new("rate.quadrature_over_budget", quad, 1.0),
    ])
}

/// Runs every module's invariant checks; failures are recorded and the suite continues.
pub fn run_verification_suite(cfg: &ExperimentConfig, weights: &WeightKernel) -> VerificationReport {
    let mut records = interpolator_checks(weights);
    push(&mut records, "interp.order", order_check());
    push(&mut records, "moments", moment_checks(cfg.mc_seed));
    for &n in cfg.n_list.iter().take(3) {
        push(&mut records, &format!("stein N={n}"), stein_checks(cfg, n));
    }
    push(&mut records, "coupling", coupling_checks(cfg.mc_seed));
    push(&mut records, "dirichlet.beta_tail", beta_tail_checks(cfg));
    push(&mut records, "stein.dirichlet_characterization", characterization_check(cfg));
    push(&mut records, "rate", rate_checks(cfg));
    VerificationReport { records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::standard_kernel;

    fn lattice(n: usize, beta: Vec<f64>) -> Arc<SimplexLattice> {
        Arc::new(SimplexLattice::new(ModelParams::new(n, beta).unwrap()).unwrap())
    }

    #[test]
    fn default_config_is_valid() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut c = ExperimentConfig::default();
        c.n_list = vec![16, 8];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.n_list = vec![8, 16];
        c.generator_expansion = true;
        assert!(c.validate().is_err());
        c.beta = vec![1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"N_list\"") && text.contains("\"K\""));
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn linear_member_certifies_to_one() {
        let l = lattice(12, vec![1.0, 1.0, 1.0]);
        let m = FamilyMember { id: "u1".into(), kind: FamilyKind::Monomial(vec![1, 0]), scale: 1.0 };
        let t = TestFunction::certify("u1", m.on_lattice(&l));
        let delta = l.delta();
        assert!((crate::lattice::sup_difference(t.h(), 1) - delta).abs() < 1e-15);
        assert!(crate::lattice::sup_difference(t.h(), 2) < 1e-15);
        assert!((t.c() - 1.0).abs() < 1e-12);

        let m = FamilyMember { id: "u1u2".into(), kind: FamilyKind::Monomial(vec![1, 1]), scale: 1.0 };
        let g = m.on_lattice(&l);
        let v = crate::lattice::forward_difference(&g, &[2, 3], &[1, 1]);
        assert!((v - delta * delta).abs() < 1e-15);
    }

    #[test]
    fn family_is_certified() {
        let l = lattice(10, vec![1.0, 2.0, 1.5]);
        let fam = build_test_family(&l, 3);
        assert_eq!(fam.len(), 14 + MIXTURES + 2);
        for t in &fam {
            assert!(t.verify(), "{}", t.id());
            assert!(t.c() <= C_STAR * (1.0 + 1e-12));
        }
    }

    #[test]
    fn symmetric_first_moment_vanishes() {
        let cfg = ExperimentConfig { beta: vec![1.0, 1.0], n_list: vec![4, 8], ..Default::default() };
        let rep = rate_study(&cfg).unwrap();
        for row in rep.rows.iter().filter(|r| r.h_id == "mono_1") {
            assert!(row.abs_err < 1e-12, "{row:?}");
        }
        assert!(rep.points.iter().all(|p| p.e >= 0.0));
    }

    #[test]
    fn rate_study_is_deterministic() {
        let cfg = ExperimentConfig { n_list: vec![8, 16], ..Default::default() };
        let a = rate_study(&cfg).unwrap();
        let b = rate_study(&cfg).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_rate_csv(&a, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("N,h_id,E_h_U,E_h_Z,abs_err\n"));
        assert_eq!(text.lines().count(), 1 + a.rows.len());
    }

    #[test]
    fn interpolator_checks_catch_corruption() {
        assert!(interpolator_checks(standard_kernel()).iter().all(|r| r.passed));
        let mut coeffs = *standard_kernel().coefficients();
        coeffs[2][5] += 1e-3;
        let bad = WeightKernel::from_coefficients(coeffs);
        let recs = interpolator_checks(&bad);
        assert!(!recs.iter().find(|r| r.name == "interp.cubic_reproduction").unwrap().passed);
    }

    #[test]
    fn analytic_test_function_derivatives() {
        let f = SinProduct;
        let x = [0.7];
        let h = 1e-5;
        let num = (f.value(&[x[0] + h]) - f.value(&[x[0] - h])) / (2.0 * h);
        assert!((num - f.partial(&x, &[1])).abs() < 1e-8);
        assert!((f.partial(&x, &[0]) - f.value(&x)).abs() < 1e-14);
    }
}
