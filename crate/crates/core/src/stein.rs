//! The discrete Stein equation `G_U f = h − πh`, Stein factors, the ancestry
//! coupling behind the factor bounds, and the generator-expansion residual.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::dirichlet::{apply_generator_z, DirichletLaw};
use crate::error::{Error, Result};
use crate::interp::Interpolant;
use crate::kernel::{StationaryDistribution, TransitionKernel};
use crate::lattice::{sup_difference, GridFunction, ModelParams, SimplexLattice};

/// Tolerance on the Stein residual and on `πf`.
pub const STEIN_RESIDUAL_TOL: f64 = 1e-10;

/// A lattice function with its certified class constant `c`:
/// `|Δ^a h| ≤ c δ^{|a|}` at every in-simplex stencil, `1 ≤ |a| ≤ 4`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    id: String,
    h: GridFunction,
    c: f64,
}

impl TestFunction {
    /// Certifies `c = max_{1 ≤ i ≤ 4} B_i(h) / δ^i` by exhaustive enumeration.
    pub fn certify(id: impl Into<String>, h: GridFunction) -> Self {
        let c = certified_constant(&h);
        Self { id: id.into(), h, c }
    }

    /// The same function multiplied so that its constant equals `target`
    /// (left unchanged when the constant is zero).
    pub fn scaled_to(&self, target: f64) -> Self {
        if self.c == 0.0 {
            return self.clone();
        }
        let k = target / self.c;
        Self::certify(self.id.clone(), self.h.map(|v| v * k))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn h(&self) -> &GridFunction {
        &self.h
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Re-checks `B_i(h) ≤ c δ^i` for `i = 1..4`.
    pub fn verify(&self) -> bool {
        let delta = self.h.lattice().delta();
        (1..=4).all(|i| sup_difference(&self.h, i) <= self.c * delta.powi(i as i32) * (1.0 + 1e-12))
    }
}

pub fn certified_constant(h: &GridFunction) -> f64 {
    let delta = h.lattice().delta();
    (1..=4)
        .map(|i| sup_difference(h, i) / delta.powi(i as i32))
        .fold(0.0, f64::max)
}

/// Solution `f` of `G_U f = h − πh` with `πf = 0`.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub h: GridFunction,
    pub f: GridFunction,
    pub pi_h: f64,
    pub pi_f: f64,
    /// `max_u |G_U f(u) − (h(u) − πh)|`
    pub residual: f64,
    /// `B_1(f)..B_4(f)`
    pub factors: [f64; 4],
}

/// Direct solve of `(I − P + 1πᵀ) f = −(h − πh)`.
pub fn solve_stein(kernel: &TransitionKernel, pi: &StationaryDistribution, h: &GridFunction) -> Result<SteinSolution> {
    let lattice = kernel.lattice();
    if !Arc::ptr_eq(lattice, pi.lattice()) || !Arc::ptr_eq(lattice, h.lattice()) {
        return Err(Error::InvalidParameter("kernel, stationary law and h must share one lattice".into()));
    }
    let n = kernel.len();
    let p = pi.pi();
    let pi_h = pi.expectation(h.values());
    let g: Vec<f64> = h.values().iter().map(|v| v - pi_h).collect();

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let row = kernel.row(i);
        for j in 0..n {
            a[(i, j)] = p[j] - row[j];
        }
        a[(i, i)] += 1.0;
    }
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Stein system I − P + 1πᵀ".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("Stein system produced non-finite values".into()));
    }
    let f = GridFunction::from_values(lattice.clone(), sol.iter().copied().collect())?;
    let gen = kernel.generator(f.values());
    let residual = gen.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pi_f = pi.expectation(f.values());
    let factors = stein_factors(&f);
    Ok(SteinSolution { h: h.clone(), f, pi_h, pi_f, residual, factors })
}

/// `B_i(f)` for `i = 1..4`.
pub fn stein_factors(f: &GridFunction) -> [f64; 4] {
    [1, 2, 3, 4].map(|i| sup_difference(f, i))
}

/// `c δ^i / (1 − (1 − Σ)^i)`.
pub fn factor_bound(c: f64, params: &ModelParams, i: usize) -> f64 {
    c * params.delta().powi(i as i32) / (1.0 - (1.0 - params.sigma()).powi(i as i32))
}

/// Series oracle `f = −Σ_{t ≥ 0} P^t (h − πh)`, truncated once the tail
/// estimate `‖P^t g‖∞ / Σ` drops below `tol`. Returns the values and the
/// number of terms used.
pub fn series_solution(
    kernel: &TransitionKernel,
    pi: &StationaryDistribution,
    h: &GridFunction,
    tol: f64,
    max_terms: usize,
) -> Result<(Vec<f64>, usize)> {
    let sigma = kernel.lattice().params().sigma();
    if !(sigma > 0.0) {
        return Err(Error::Domain("series oracle needs Σ > 0".into()));
    }
    let pi_h = pi.expectation(h.values());
    let mut g: Vec<f64> = h.values().iter().map(|v| v - pi_h).collect();
    let mut f = vec![0.0; g.len()];
    for t in 0..max_terms {
        for (fi, gi) in f.iter_mut().zip(&g) {
            *fi -= gi;
        }
        g = kernel.apply(&g);
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm / sigma < tol {
            return Ok((f, t + 1));
        }
    }
    Err(Error::Domain(format!("series did not reach tolerance {tol} within {max_terms} terms")))
}

/// One time point of the ancestry simulation.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingPoint {
    pub t: usize,
    pub mean_v1: f64,
    pub se_v1: f64,
    /// `δ(1 − Σ)^t`
    pub theory_v1: f64,
    pub joint: Option<JointPoint>,
}

/// Estimates of `E[N² V₁(t) V₂(t)]`.
#[derive(Debug, Clone, Serialize)]
pub struct JointPoint {
    pub mean: f64,
    pub se: f64,
    /// `N(N − 1) δ² (1 − Σ)^{2t}`
    pub stated: f64,
    /// `((N − 1)/N)^t (1 − Σ)^{2t}`, from the one-step multinomial recursion.
    pub exact: f64,
}

/// Forward simulation of the descendants of one or two tagged individuals,
/// lines that mutate being dropped. `V_j(t)` is the descendant fraction;
/// `V(0) = δ` per tag. Replicate `r` draws from stream `r` of a generator
/// seeded by `seed`, and all sums are exact integers, so the output does not
/// depend on thread scheduling.
pub fn ancestry_coupling_sim(params: &ModelParams, tagged: usize, t_max: usize, reps: usize, seed: u64) -> Result<Vec<CouplingPoint>> {
    if !(1..=2).contains(&tagged) {
        return Err(Error::InvalidParameter(format!("tagged must be 1 or 2, got {tagged}")));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let n = params.n() as u64;
    if tagged == 2 && n < 2 {
        return Err(Error::InvalidParameter("two tags need N >= 2".into()));
    }
    let keep = 1.0 - params.sigma();
    let width = t_max + 1;
    // per t: Σ c1, Σ c1², Σ c1 c2, Σ (c1 c2)²
    let sums = (0..reps as u64)
        .into_par_iter()
        .fold(
            || vec![[0u128; 4]; width],
            |mut acc, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r);
                let (mut c1, mut c2) = (1u64, if tagged == 2 { 1u64 } else { 0 });
                for (t, slot) in acc.iter_mut().enumerate() {
                    if t > 0 {
                        let q1 = c1 as f64 / n as f64 * keep;
                        let q2 = c2 as f64 / n as f64 * keep;
                        let x1 = if q1 > 0.0 { Binomial::new(n, q1).unwrap().sample(&mut rng) } else { 0 };
                        let x2 = if q2 > 0.0 && x1 < n {
                            Binomial::new(n - x1, (q2 / (1.0 - q1)).min(1.0)).unwrap().sample(&mut rng)
                        } else {
                            0
                        };
                        c1 = x1;
                        c2 = x2;
                    }
                    let prod = (c1 * c2) as u128;
                    slot[0] += c1 as u128;
                    slot[1] += (c1 as u128) * (c1 as u128);
                    slot[2] += prod;
                    slot[3] += prod * prod;
                }
                acc
            },
        )
        .reduce(
            || vec![[0u128; 4]; width],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for k in 0..4 {
                        x[k] += y[k];
                    }
                }
                a
            },
        );

    let delta = params.delta();
    let r = reps as f64;
    let mean_se = |s: u128, s2: u128, scale: f64| -> (f64, f64) {
        let m = s as f64 / r;
        let var = if reps > 1 { ((s2 as f64 / r) - m * m).max(0.0) * r / (r - 1.0) } else { 0.0 };
        (m * scale, (var / r).sqrt() * scale)
    };
    Ok(sums
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let (mean_v1, se_v1) = mean_se(s[0], s[1], delta);
            let decay = keep.powi(2 * t as i32);
            let joint = (tagged == 2).then(|| {
                let (mean, se) = mean_se(s[2], s[3], 1.0);
                let nf = params.n() as f64;
                JointPoint {
                    mean,
                    se,
                    stated: nf * (nf - 1.0) * delta * delta * decay,
                    exact: ((nf - 1.0) / nf).powi(t as i32) * decay,
                }
            });
            CouplingPoint { t, mean_v1, se_v1, theory_v1: delta * keep.powi(t as i32), joint }
        })
        .collect())
}

/// Region on which the generator expansion is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum InnerRegion {
    /// `Conv(S_N)` with `S_N = {Σ u_i ≤ 1 − 10K/sqrt(N)}`; requires `N > 100K²`.
    Margin,
    /// Points whose whole `5^{K−1}` stencil lies in `S`.
    StencilAdmissible,
}

impl InnerRegion {
    /// Whether `x` lies in the region for the given lattice.
    pub fn check(&self, lattice: &SimplexLattice, x: &[f64]) -> Result<()> {
        let n = lattice.n();
        let k = lattice.params().k();
        if x.len() != lattice.dim() {
            return Err(Error::Domain(format!("point has {} coordinates, expected {}", x.len(), lattice.dim())));
        }
        if x.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Domain(format!("{x:?} has a negative coordinate")));
        }
        match self {
            Self::Margin => {
                if n <= 100 * k * k {
                    return Err(Error::Domain(format!("need N > 100K² = {}, got N = {n}", 100 * k * k)));
                }
                let m = lattice
                    .inner_region_max_total()
                    .ok_or_else(|| Error::Domain("inner region is empty".into()))?;
                if x.iter().sum::<f64>() > m as f64 * lattice.delta() * (1.0 + 1e-12) {
                    return Err(Error::Domain(format!("{x:?} is outside Conv(S_N)")));
                }
            }
            Self::StencilAdmissible => {
                let base: i64 = x.iter().map(|&v| crate::interp::locate(v, lattice.delta()).0).sum();
                if base + 4 * lattice.dim() as i64 > n as i64 {
                    return Err(Error::Domain(format!("stencil at {x:?} leaves the simplex")));
                }
            }
        }
        Ok(())
    }
}

/// `lhs = A(G_U(A f_h))(x)`, `rhs = δ G_Z A f_h(x)`, `eps = lhs − rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub eps: f64,
}

/// Generator values `G_U f` on the lattice, as a grid function.
pub fn generator_grid(kernel: &TransitionKernel, f: &GridFunction) -> Result<GridFunction> {
    GridFunction::from_values(kernel.lattice().clone(), kernel.generator(f.values()))
}

pub fn generator_expansion_residual(
    kernel: &TransitionKernel,
    sol: &SteinSolution,
    x: &[f64],
    region: InnerRegion,
) -> Result<ExpansionResidual> {
    let gen = generator_grid(kernel, &sol.f)?;
    expansion_residual_with(kernel.lattice(), &gen, &sol.f, x, region)
}

/// As [`generator_expansion_residual`] with `G_U f_h` precomputed.
pub fn expansion_residual_with(
    lattice: &SimplexLattice,
    gen: &GridFunction,
    f: &GridFunction,
    x: &[f64],
    region: InnerRegion,
) -> Result<ExpansionResidual> {
    region.check(lattice, x)?;
    let delta = lattice.delta();
    let lhs = Interpolant::new(gen, delta).value(x);
    let (_, grad, hess) = Interpolant::new(f, delta).jet2(x);
    let rhs = delta * apply_generator_z(lattice.params().beta(), &grad, &hess, x);
    Ok(ExpansionResidual { lhs, rhs, eps: lhs - rhs })
}

/// Monte Carlo mean and standard error of `G_Z A f(Z)` for `Z ~ Dirichlet(β)`.
pub fn dirichlet_characterization(f: &GridFunction, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let lattice = f.lattice();
    let params = lattice.params();
    let law = DirichletLaw::new(params.beta().to_vec())?;
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let zs = law.sample(seed, samples);
    let delta = lattice.delta();
    let beta = params.beta();
    let values: Vec<f64> = zs
        .par_iter()
        .map(|z| {
            let (_, grad, hess) = Interpolant::new(f, delta).jet2(z);
            apply_generator_z(beta, &grad, &hess, z)
        })
        .collect();
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
