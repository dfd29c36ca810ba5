//! Closed-form conditional moments of one step of the chain, with
//! enumeration and Monte Carlo evaluators for the higher-order terms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{step, transition_row};
use crate::lattice::{LatticeState, ModelParams, SimplexLattice};
use crate::special::ln_gamma;

/// Default cap on enumerated outcome vectors.
pub const ENUMERATION_CAP: u128 = 500_000;
/// Default Monte Carlo sample size above the cap.
pub const MC_DRAWS: usize = 1_000_000;

/// The multinomial moment patterns with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentPattern {
    /// `E X_i`
    First(usize),
    /// `E X_i²`
    Square(usize),
    /// `E X_i X_j`, `i ≠ j`
    Pair(usize, usize),
    /// `E X_i X_j X_k`, distinct
    Triple(usize, usize, usize),
    /// `E X_i² X_j`, `i ≠ j`
    SquarePair(usize, usize),
    /// `E X_i³`
    Cube(usize),
}

impl MomentPattern {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            Self::First(i) | Self::Square(i) | Self::Cube(i) => vec![i],
            Self::Pair(i, j) | Self::SquarePair(i, j) => vec![i, j],
            Self::Triple(i, j, k) => vec![i, j, k],
        }
    }

    /// Exponent vector over `k` categories.
    pub fn exponents(&self, k: usize) -> Vec<u32> {
        let mut e = vec![0u32; k];
        match *self {
            Self::First(i) => e[i] = 1,
            Self::Square(i) => e[i] = 2,
            Self::Cube(i) => e[i] = 3,
            Self::Pair(i, j) => {
                e[i] += 1;
                e[j] += 1;
            }
            Self::SquarePair(i, j) => {
                e[i] += 2;
                e[j] += 1;
            }
            Self::Triple(i, j, k2) => {
                e[i] += 1;
                e[j] += 1;
                e[k2] += 1;
            }
        }
        e
    }
}

/// Closed-form `E[...]` for `X ~ Multinomial(N, p)`.
pub fn multinomial_moment(n: usize, p: &[f64], pattern: MomentPattern) -> Result<f64> {
    let idx = pattern.indices();
    if let Some(&bad) = idx.iter().find(|&&i| i >= p.len()) {
        return Err(Error::InvalidParameter(format!("category {bad} out of range for {} categories", p.len())));
    }
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if idx[a] == idx[b] {
                return Err(Error::IndexCollision(idx));
            }
        }
    }
    let n = n as f64;
    let f2 = n * (n - 1.0);
    let f3 = f2 * (n - 2.0);
    Ok(match pattern {
        MomentPattern::First(i) => n * p[i],
        MomentPattern::Square(i) => f2 * p[i] * p[i] + n * p[i],
        MomentPattern::Pair(i, j) => f2 * p[i] * p[j],
        MomentPattern::Triple(i, j, k) => f3 * p[i] * p[j] * p[k],
        MomentPattern::SquarePair(i, j) => f3 * p[i] * p[i] * p[j] + f2 * p[i] * p[j],
        MomentPattern::Cube(i) => f3 * p[i].powi(3) + 3.0 * f2 * p[i] * p[i] + n * p[i],
    })
}

/// `ū_i = u_i Σ − p_i` for the first `K − 1` coordinates.
pub fn ubar(params: &ModelParams, u: &[f64]) -> Vec<f64> {
    let sigma = params.sigma();
    u.iter().zip(params.p()).map(|(ui, pi)| ui * sigma - pi).collect()
}

/// `b_i(u) = −ū_i`.
pub fn drift(params: &ModelParams, u: &LatticeState, i: usize) -> f64 {
    -(u.value()[i] * params.sigma() - params.p()[i])
}

fn diffusion_from(ubar: &[f64], u: &[f64], n: usize, i: usize, j: usize) -> f64 {
    let kron = if i == j { 1.0 } else { 0.0 };
    let mi = u[i] - ubar[i];
    let mj = u[j] - ubar[j];
    ubar[i] * ubar[j] + mi * (kron - mj) / n as f64
}

/// `a_ij(u) = ū_i ū_j + (u_i − ū_i)(δ_ij − (u_j − ū_j)) / N`.
pub fn diffusion(params: &ModelParams, u: &LatticeState, i: usize, j: usize) -> f64 {
    let ub = ubar(params, u.value());
    diffusion_from(&ub, u.value(), params.n(), i, j)
}

/// `c_iii(u) = E_u (U_i − u_i)³` in closed form, from the binomial law of `U_i`.
pub fn third_moment_diagonal(params: &ModelParams, u: &LatticeState, i: usize) -> f64 {
    let n = params.n() as f64;
    let ub = u.value()[i] * params.sigma() - params.p()[i];
    let m = u.value()[i] - ub;
    let var = m * (1.0 - m);
    -ub.powi(3) - 3.0 * ub * var / n + var * (1.0 - 2.0 * m) / (n * n)
}

/// Drift, diffusion matrix and the third and fourth moment envelopes at one state.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub state: LatticeState,
    pub ubar: Vec<f64>,
    pub b: Vec<f64>,
    /// Row-major `(K−1)²`.
    pub a: Vec<f64>,
    /// `(1/N + Σ)²`
    pub c_bound: f64,
    /// `(2/sqrt(N) + Σ)⁴`
    pub dbar_bound: f64,
}

pub fn moment_report(params: &ModelParams, u: &LatticeState) -> MomentReport {
    let d = params.dim();
    let ub = ubar(params, u.value());
    let b = ub.iter().map(|v| -v).collect();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = diffusion_from(&ub, u.value(), params.n(), i, j);
        }
    }
    MomentReport {
        state: u.clone(),
        ubar: ub,
        b,
        a,
        c_bound: third_moment_envelope(params),
        dbar_bound: fourth_moment_envelope(params),
    }
}

pub fn third_moment_envelope(params: &ModelParams) -> f64 {
    (params.delta() + params.sigma()).powi(2)
}

pub fn fourth_moment_envelope(params: &ModelParams) -> f64 {
    (2.0 / (params.n() as f64).sqrt() + params.sigma()).powi(4)
}

/// Exact `c_ijk(u)` with the envelope `(1/N + Σ)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThirdMoment {
    pub value: f64,
    pub envelope: f64,
}

/// `E_u (U_i − u_i)(U_j − u_j)(U_k − u_k)` by enumerating the transition row.
pub fn third_moment_exact(lattice: &SimplexLattice, u: &LatticeState, idx: [usize; 3], cap: u128) -> Result<ThirdMoment> {
    if lattice.len() as u128 > cap {
        return Err(Error::Capacity { states: lattice.len() as u128, cap });
    }
    let value = central_product_expectation(lattice, u, &idx, false)?;
    Ok(ThirdMoment { value, envelope: third_moment_envelope(lattice.params()) })
}

/// `E_u Π_{i ∈ idx} (U_i − u_i)` by enumerating the transition row.
pub fn central_moment_exact(lattice: &SimplexLattice, u: &LatticeState, idx: &[usize]) -> Result<f64> {
    central_product_expectation(lattice, u, idx, false)
}

fn central_product_expectation(lattice: &SimplexLattice, u: &LatticeState, idx: &[usize], abs: bool) -> Result<f64> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= lattice.dim()) {
        return Err(Error::InvalidParameter(format!("axis {bad} out of range")));
    }
    let row = transition_row(lattice, &u.signed_counts())?;
    let uv = u.value();
    Ok(lattice
        .states()
        .iter()
        .zip(&row)
        .map(|(y, pr)| {
            let prod: f64 = idx.iter().map(|&i| y.value()[i] - uv[i]).product();
            pr * if abs { prod.abs() } else { prod }
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EvaluationMethod {
    Enumeration,
    MonteCarlo,
}

/// `d̄_ijkl(u) = E_u |Π (U_· − u_·)|` with its envelope `(2/sqrt(N) + Σ)⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthMoment {
    pub value: f64,
    /// Zero for exact enumeration.
    pub std_error: f64,
    pub envelope: f64,
    pub method: EvaluationMethod,
}

/// Enumerates when the lattice has at most `cap` states; otherwise averages
/// `draws` simulated steps seeded by `seed`.
pub fn fourth_abs_moment(
    params: &ModelParams,
    u: &LatticeState,
    idx: [usize; 4],
    cap: u128,
    draws: usize,
    seed: u64,
) -> Result<FourthMoment> {
    let envelope = fourth_moment_envelope(params);
    match SimplexLattice::with_cap(params.clone(), cap) {
        Ok(lattice) => Ok(FourthMoment {
            value: central_product_expectation(&lattice, u, &idx, true)?,
            std_error: 0.0,
            envelope,
            method: EvaluationMethod::Enumeration,
        }),
        Err(Error::Capacity { .. }) => {
            let (value, std_error) = fourth_abs_moment_mc(params, u, idx, draws, seed)?;
            Ok(FourthMoment { value, std_error, envelope, method: EvaluationMethod::MonteCarlo })
        }
        Err(e) => Err(e),
    }
}

/// Monte Carlo estimate and standard error of `E_u |Π (U_· − u_·)|`.
pub fn fourth_abs_moment_mc(
    params: &ModelParams,
    u: &LatticeState,
    idx: [usize; 4],
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if u.counts().len() != params.dim() || u.total() > params.n() {
        return Err(Error::InvalidState(u.signed_counts()));
    }
    if draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = params.delta();
    let uv = u.value();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..draws {
        let y = step(params, u.counts(), &mut rng);
        let v: f64 = idx.iter().map(|&i| y[i] as f64 * delta - uv[i]).product::<f64>().abs();
        sum += v;
        sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// `P_u(U_K(1) ≤ M/N)` and the bound `(M+1) N^M / (Σ − p_K)^M · (1 − u_K(1 − Σ))^N`.
pub fn binomial_tail_bound(params: &ModelParams, u: &LatticeState, m: usize) -> Result<(f64, f64)> {
    let k = params.k();
    let sigma = params.sigma();
    let pk = params.p()[k - 1];
    if sigma <= pk {
        return Err(Error::Domain(format!("need Σ > p_K, got Σ = {sigma}, p_K = {pk}")));
    }
    let n = params.n();
    let uk = 1.0 - u.value().iter().sum::<f64>();
    let q = (uk * (1.0 - sigma) + pk).clamp(0.0, 1.0);
    let exact = if m >= n {
        1.0
    } else {
        (0..=m)
            .map(|x| {
                let ln_c = ln_gamma(n as f64 + 1.0) - ln_gamma(x as f64 + 1.0) - ln_gamma((n - x) as f64 + 1.0);
                let lp = if x == 0 { 0.0 } else { x as f64 * q.ln() };
                let lq = if n == x { 0.0 } else { (n - x) as f64 * (1.0 - q).ln() };
                (ln_c + lp + lq).exp()
            })
            .sum::<f64>()
            .min(1.0)
    };
    let ln_bound = ((m + 1) as f64).ln() + m as f64 * (n as f64).ln() - m as f64 * (sigma - pk).ln()
        + n as f64 * (1.0 - uk * (1.0 - sigma)).ln();
    Ok((exact, ln_bound.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    // Oracle: enumerate every outcome of Multinomial(n, p) with its pmf.
    fn enumerate(n: usize, p: &[f64], e: &[u32]) -> f64 {
        let mut total = 0.0;
        let mut x = vec![0usize; p.len()];
        fn rec(pos: usize, left: usize, x: &mut Vec<usize>, p: &[f64], e: &[u32], n: usize, total: &mut f64) {
            if pos == p.len() - 1 {
                x[pos] = left;
                let mut lp = ln_gamma(n as f64 + 1.0);
                for (j, &xj) in x.iter().enumerate() {
                    lp -= ln_gamma(xj as f64 + 1.0);
                    if xj > 0 {
                        lp += xj as f64 * p[j].ln();
                    }
                }
                let mono: f64 = x.iter().zip(e).map(|(&v, &ej)| (v as f64).powi(ej as i32)).product();
                *total += lp.exp() * mono;
                return;
            }
            for c in 0..=left {
                x[pos] = c;
                rec(pos + 1, left - c, x, p, e, n, total);
            }
        }
        rec(0, n, &mut x, p, e, n, &mut total);
        total
    }

    fn patterns() -> Vec<MomentPattern> {
        use MomentPattern::*;
        vec![First(0), Square(1), Pair(0, 2), Triple(0, 1, 2), SquarePair(2, 0), Cube(1)]
    }

    #[test]
    fn six_formulas_match_enumeration() {
        let p = [0.2, 0.3, 0.5];
        for pat in patterns() {
            let closed = multinomial_moment(3, &p, pat).unwrap();
            let brute = enumerate(3, &p, &pat.exponents(3));
            assert!((closed - brute).abs() < 1e-14 * (1.0 + brute.abs()), "{pat:?}: {closed} vs {brute}");
        }
        assert_eq!(multinomial_moment(7, &p, MomentPattern::First(1)).unwrap(), 7.0 * 0.3);
        assert!((multinomial_moment(7, &p, MomentPattern::Pair(0, 1)).unwrap() - 42.0 * 0.06).abs() < 1e-14);
    }

    #[test]
    fn formulas_on_probability_grid() {
        let grid = [0.05, 0.2, 0.35, 0.5, 0.65];
        for n in 1..=6 {
            for &a in &grid {
                for &b in &grid {
                    if a + b >= 1.0 {
                        continue;
                    }
                    let p = [a, b, 1.0 - a - b];
                    for pat in patterns() {
                        let closed = multinomial_moment(n, &p, pat).unwrap();
                        let brute = enumerate(n, &p, &pat.exponents(3));
                        assert!((closed - brute).abs() < 1e-12 * (1.0 + brute.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn index_collision() {
        let p = [0.5, 0.5];
        assert!(matches!(multinomial_moment(3, &p, MomentPattern::Pair(1, 1)), Err(Error::IndexCollision(_))));
        assert!(multinomial_moment(3, &p, MomentPattern::First(2)).is_err());
    }

    fn lattice(n: usize, beta: Vec<f64>) -> Arc<SimplexLattice> {
        Arc::new(SimplexLattice::new(ModelParams::new(n, beta).unwrap()).unwrap())
    }

    #[test]
    fn drift_and_diffusion_match_kernel() {
        for (n, beta) in [(2, vec![1.0, 1.0]), (6, vec![2.0, 3.0]), (5, vec![1.0, 2.0, 1.5]), (8, vec![0.5, 0.5, 3.0])] {
            let l = lattice(n, beta);
            let p = l.params();
            for s in l.states() {
                let row = transition_row(&l, &s.signed_counts()).unwrap();
                let rep = moment_report(p, s);
                let d = l.dim();
                for i in 0..d {
                    let m: f64 = l.states().iter().zip(&row).map(|(y, pr)| pr * (y.value()[i] - s.value()[i])).sum();
                    assert!((m - drift(p, s, i)).abs() < 1e-12);
                    assert!((rep.b[i] - drift(p, s, i)).abs() < 1e-15);
                    for j in 0..d {
                        let c: f64 = l
                            .states()
                            .iter()
                            .zip(&row)
                            .map(|(y, pr)| pr * (y.value()[i] - s.value()[i]) * (y.value()[j] - s.value()[j]))
                            .sum();
                        assert!((c - diffusion(p, s, i, j)).abs() < 1e-12);
                        assert_eq!(diffusion(p, s, i, j), diffusion(p, s, j, i));
                    }
                    assert!(rep.a[i * d + i] >= -1e-14);
                }
                let bk: f64 = -rep.b.iter().sum::<f64>();
                let uk = 1.0 - s.value().iter().sum::<f64>();
                let pk = p.p()[p.k() - 1];
                assert!((bk - -(uk * p.sigma() - pk)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn drift_vanishes_at_balance_and_without_mutation() {
        let p = ModelParams::new(10, vec![2.0, 3.0]).unwrap();
        let balance = p.p()[0] / p.sigma();
        let s = LatticeState::new(vec![4], 10);
        assert!((balance - 0.4).abs() < 1e-15);
        assert!(drift(&p, &s, 0).abs() < 1e-15);
        let z = ModelParams::with_mutation_probs(10, vec![0.0, 0.0]).unwrap();
        assert_eq!(drift(&z, &LatticeState::new(vec![3], 10), 0), 0.0);
        assert_eq!(diffusion(&z, &LatticeState::new(vec![0], 10), 0, 0), 0.0);
    }

    #[test]
    fn third_moment_closed_form_and_envelope() {
        let mut worst: f64 = 0.0;
        for n in [4, 8, 16] {
            let l = lattice(n, vec![1.0, 2.0, 1.5]);
            for s in l.states() {
                for i in 0..2 {
                    let ex = third_moment_exact(&l, s, [i, i, i], ENUMERATION_CAP).unwrap();
                    assert!((ex.value - third_moment_diagonal(l.params(), s, i)).abs() < 1e-12);
                }
                for idx in [[0, 0, 1], [0, 1, 1], [1, 1, 1]] {
                    let ex = third_moment_exact(&l, s, idx, ENUMERATION_CAP).unwrap();
                    worst = worst.max(ex.value.abs() / ex.envelope);
                }
            }
        }
        assert!(worst.is_finite() && worst < 10.0, "ratio {worst}");
        let l = lattice(4, vec![1.0, 1.0]);
        assert!(third_moment_exact(&l, l.state(0), [0, 0, 0], 2).is_err());
    }

    #[test]
    fn deterministic_vertex_has_zero_moments() {
        let p = ModelParams::with_mutation_probs(6, vec![0.0, 0.0, 0.0]).unwrap();
        let l = SimplexLattice::new(p.clone()).unwrap();
        let v = LatticeState::new(vec![6, 0], 6);
        assert_eq!(third_moment_exact(&l, &v, [0, 1, 0], ENUMERATION_CAP).unwrap().value, 0.0);
        assert_eq!(fourth_abs_moment(&p, &v, [0, 0, 1, 1], ENUMERATION_CAP, 10, 1).unwrap().value, 0.0);
    }

    #[test]
    fn fourth_moment_envelope_and_mc_agreement() {
        for n in [4, 8] {
            let l = lattice(n, vec![1.0, 1.0]);
            for s in l.states() {
                let f = fourth_abs_moment(l.params(), s, [0; 4], ENUMERATION_CAP, 10, 0).unwrap();
                assert_eq!(f.method, EvaluationMethod::Enumeration);
                assert!(f.value <= f.envelope);
            }
        }
        let p = ModelParams::new(4, vec![1.0, 1.0]).unwrap();
        let s = LatticeState::new(vec![2], 4);
        let exact = fourth_abs_moment(&p, &s, [0; 4], ENUMERATION_CAP, 10, 0).unwrap().value;
        let mc = fourth_abs_moment(&p, &s, [0; 4], 1, 200_000, 42).unwrap();
        assert_eq!(mc.method, EvaluationMethod::MonteCarlo);
        assert!((mc.value - exact).abs() <= 4.0 * mc.std_error, "{} vs {exact} ± {}", mc.value, mc.std_error);
    }

    #[test]
    fn binomial_tail_examples() {
        for n in [16, 64] {
            let l = lattice(n, vec![2.0, 2.0]);
            for s in l.states() {
                let (exact, bound) = binomial_tail_bound(l.params(), s, 8).unwrap();
                assert!(exact <= bound * (1.0 + 1e-12));
            }
            let (exact, _) = binomial_tail_bound(l.params(), l.state(3), n).unwrap();
            assert_eq!(exact, 1.0);
        }
        let p = ModelParams::with_mutation_probs(5, vec![0.3, 0.0]).unwrap();
        let s = LatticeState::new(vec![0], 5);
        let (exact, _) = binomial_tail_bound(&p, &s, 0).unwrap();
        assert!((exact - 0.3f64.powi(5)).abs() < 1e-15);
        let bad = ModelParams::with_mutation_probs(5, vec![0.0, 0.3]).unwrap();
        assert!(binomial_tail_bound(&bad, &s, 0).is_err());
    }
}
