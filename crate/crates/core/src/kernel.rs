//! The Wright-Fisher transition law, its stationary distribution, forward
//! simulation and the discrete generator `G_U`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeState, ModelParams, SimplexLattice};
use crate::special::ln_gamma;

/// Tolerance on `‖πP − π‖₁` for an accepted stationary solve.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-12;

/// Per-offspring type probabilities `q_j = u_j (1 − Σ) + p_j` for all `K` types.
pub fn offspring_probs(params: &ModelParams, counts: &[usize]) -> Vec<f64> {
    let n = params.n() as f64;
    let keep = 1.0 - params.sigma();
    let d = params.dim();
    let mut q: Vec<f64> = (0..d).map(|j| counts[j] as f64 / n * keep + params.p()[j]).collect();
    let rest: f64 = q.iter().sum();
    q.push((1.0 - rest).max(0.0));
    q
}

fn ln_factorials(n: usize) -> Vec<f64> {
    (0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect()
}

fn multinomial_pmf(ln_fact: &[f64], n: usize, y: &[usize], q: &[f64]) -> f64 {
    let used: usize = y.iter().sum();
    if used > n {
        return 0.0;
    }
    let last = n - used;
    let mut lp = ln_fact[n];
    for (j, &yj) in y.iter().chain(std::iter::once(&last)).enumerate() {
        if yj == 0 {
            continue;
        }
        if q[j] <= 0.0 {
            return 0.0;
        }
        lp += yj as f64 * q[j].ln() - ln_fact[yj];
    }
    lp.exp()
}

fn check_state(lattice: &SimplexLattice, counts: &[i64]) -> Result<usize> {
    lattice.index_of(counts).ok_or_else(|| Error::InvalidState(counts.to_vec()))
}

/// Law of `U(1)` given `U(0) = u`, as a probability vector over the states of `lattice`.
pub fn transition_row(lattice: &SimplexLattice, counts: &[i64]) -> Result<Vec<f64>> {
    let i = check_state(lattice, counts)?;
    let ln_fact = ln_factorials(lattice.n());
    Ok(row_for(lattice, &ln_fact, lattice.state(i)))
}

fn row_for(lattice: &SimplexLattice, ln_fact: &[f64], state: &LatticeState) -> Vec<f64> {
    let q = offspring_probs(lattice.params(), state.counts());
    let mut row: Vec<f64> = lattice
        .states()
        .iter()
        .map(|y| multinomial_pmf(ln_fact, lattice.n(), y.counts(), &q))
        .collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

/// Dense row-stochastic matrix over the lattice states.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    lattice: Arc<SimplexLattice>,
    rows: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(lattice: Arc<SimplexLattice>) -> Self {
        let ln_fact = ln_factorials(lattice.n());
        let rows: Vec<Vec<f64>> = lattice
            .states()
            .par_iter()
            .map(|s| row_for(&lattice, &ln_fact, s))
            .collect();
        Self { lattice, rows: rows.concat() }
    }

    pub fn lattice(&self) -> &Arc<SimplexLattice> {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.rows[i * n..(i + 1) * n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_row_slice(n, n, &self.rows)
    }

    /// `(P g)(u) = Σ_y P_u(y) g(y)` for every state.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.row(i).iter().zip(g).map(|(p, v)| p * v).sum())
            .collect()
    }

    /// `(μ P)(y) = Σ_u μ(u) P_u(y)`.
    pub fn apply_left(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (i, m) in mu.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += m * p;
            }
        }
        out
    }

    /// `G_U f(u) = Σ_y P_u(y) f(y) − f(u)`.
    pub fn apply_generator_u(&self, f: &GridFunction, counts: &[i64]) -> Result<f64> {
        let i = check_state(&self.lattice, counts)?;
        Ok(self.generator_at(f.values(), i))
    }

    pub fn generator_at(&self, f: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(f).map(|(p, v)| p * v).sum::<f64>() - f[i]
    }

    /// `G_U f` at every state.
    pub fn generator(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f).into_iter().zip(f).map(|(pf, v)| pf - v).collect()
    }
}

/// Stationary law `π` with its balance residual `‖πP − π‖₁`.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    lattice: Arc<SimplexLattice>,
    pi: Vec<f64>,
    residual: f64,
}

impl StationaryDistribution {
    pub fn lattice(&self) -> &Arc<SimplexLattice> {
        &self.lattice
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.pi.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// Solves `πP = π`, `Σπ = 1` by LU on `Pᵀ − I` with the last balance equation
/// replaced by the normalization.
pub fn stationary_distribution(kernel: &TransitionKernel) -> Result<StationaryDistribution> {
    let n = kernel.len();
    let mut a = kernel.to_matrix().transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("stationary balance system".into()))?;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-10) {
        return Err(Error::Singular("stationary balance system gave an invalid solution".into()));
    }
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let pp = kernel.apply_left(&pi);
    let residual = pp.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
    Ok(StationaryDistribution { lattice: kernel.lattice().clone(), pi, residual })
}

/// `iters` steps of `μ ← μP` from the uniform law.
pub fn power_iteration(kernel: &TransitionKernel, iters: usize) -> Vec<f64> {
    let n = kernel.len();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        mu = kernel.apply_left(&mu);
    }
    mu
}

/// One draw of the next generation's counts by sequential conditional binomials.
pub fn step<R: rand::Rng>(params: &ModelParams, counts: &[usize], rng: &mut R) -> Vec<usize> {
    let q = offspring_probs(params, counts);
    let mut left = params.n() as u64;
    let mut mass = 1.0;
    let mut next = Vec::with_capacity(params.dim());
    for &qj in q.iter().take(params.dim()) {
        let prob = if mass > 0.0 { (qj / mass).clamp(0.0, 1.0) } else { 0.0 };
        let x = if left == 0 {
            0
        } else {
            Binomial::new(left, prob).expect("probability clamped to [0, 1]").sample(rng)
        };
        next.push(x as usize);
        left -= x;
        mass -= qj;
    }
    next
}

/// A trajectory `U(0), ..., U(T)` of the chain, deterministic in `seed`.
pub fn simulate(params: &ModelParams, u0: &LatticeState, t: usize, seed: u64) -> Result<Vec<LatticeState>> {
    if u0.counts().len() != params.dim() || u0.total() > params.n() {
        return Err(Error::InvalidState(u0.signed_counts()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(t + 1);
    path.push(u0.clone());
    let mut cur = u0.counts().to_vec();
    for _ in 0..t {
        cur = step(params, &cur, &mut rng);
        path.push(LatticeState::new(cur.clone(), params.n()));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(n: usize, beta: Vec<f64>) -> (Arc<SimplexLattice>, TransitionKernel) {
        let l = Arc::new(SimplexLattice::new(ModelParams::new(n, beta).unwrap()).unwrap());
        let k = TransitionKernel::new(l.clone());
        (l, k)
    }

    #[test]
    fn single_individual_row() {
        let p = ModelParams::new(1, vec![0.2, 0.3]).unwrap();
        let l = SimplexLattice::new(p.clone()).unwrap();
        let row = transition_row(&l, &[1]).unwrap();
        let p2 = p.p()[1];
        assert_relative_eq!(row[1], 1.0 - p2, epsilon = 1e-15);
        assert!(transition_row(&l, &[2]).is_err());
    }

    #[test]
    fn rows_are_stochastic_with_drift_mean() {
        for (n, beta) in [(2, vec![1.0, 1.0]), (7, vec![2.0, 3.0, 1.0]), (12, vec![0.5, 4.0])] {
            let (l, k) = setup(n, beta);
            let p = l.params();
            for (i, s) in l.states().iter().enumerate() {
                let row = k.row(i);
                assert!(row.iter().all(|v| *v >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for axis in 0..l.dim() {
                    let mean: f64 =
                        l.states().iter().zip(row).map(|(y, pr)| pr * y.value()[axis]).sum();
                    let u = s.value()[axis];
                    let ubar = u * p.sigma() - p.p()[axis];
                    assert!((mean - (u - ubar)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_state_stationary() {
        // β = (1, 1) at N = 1 puts Σ at exactly 1, outside the standard constructor
        let p = ModelParams::with_mutation_probs(1, vec![0.5, 0.5]).unwrap();
        let k = TransitionKernel::new(Arc::new(SimplexLattice::new(p).unwrap()));
        let st = stationary_distribution(&k).unwrap();
        assert_relative_eq!(st.pi()[1], 0.5, epsilon = 1e-14);
        assert!(st.residual() <= STATIONARY_RESIDUAL_TOL);
    }

    #[test]
    fn stationary_agrees_with_power_iteration() {
        for (n, beta) in [(5, vec![2.0, 2.0]), (10, vec![1.0, 3.0]), (8, vec![1.0, 2.0, 3.0]), (10, vec![2.0, 2.0, 2.0])] {
            let (_, k) = setup(n, beta);
            let st = stationary_distribution(&k).unwrap();
            assert!(st.residual() <= STATIONARY_RESIDUAL_TOL, "residual {}", st.residual());
            let mu = power_iteration(&k, 10_000);
            let tv: f64 = mu.iter().zip(st.pi()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            assert!(tv < 1e-9, "tv {tv}");
        }
    }

    #[test]
    fn exchangeable_types_give_symmetric_stationary_law() {
        let (l, k) = setup(9, vec![1.5, 1.5, 1.5]);
        let st = stationary_distribution(&k).unwrap();
        for (i, s) in l.states().iter().enumerate() {
            let c = s.signed_counts();
            let third = l.n() as i64 - c[0] - c[1];
            for perm in [[c[1], c[0]], [third, c[1]], [c[0], third]] {
                let j = l.index_of(&perm).unwrap();
                assert!((st.pi()[i] - st.pi()[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn generator_examples() {
        let (l, k) = setup(6, vec![1.0, 2.0, 1.5]);
        let st = stationary_distribution(&k).unwrap();
        let konst = GridFunction::from_fn(l.clone(), |_| 4.2);
        let lin = GridFunction::from_fn(l.clone(), |s| s.value()[1]);
        let p = l.params().clone();
        for s in l.states() {
            let c = s.signed_counts();
            assert!(k.apply_generator_u(&konst, &c).unwrap().abs() < 1e-13);
            let g = k.apply_generator_u(&lin, &c).unwrap();
            let ubar = s.value()[1] * p.sigma() - p.p()[1];
            assert!((g + ubar).abs() < 1e-13);
        }
        let wild = GridFunction::from_fn(l.clone(), |s| (s.counts()[0] as f64 * 1.7).cos() + s.counts()[1] as f64);
        let mean = st.expectation(&k.generator(wild.values()));
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = ModelParams::new(20, vec![2.0, 1.0, 3.0]).unwrap();
        let u0 = LatticeState::new(vec![5, 5], 20);
        let a = simulate(&p, &u0, 50, 7).unwrap();
        let b = simulate(&p, &u0, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate(&p, &u0, 0, 1).unwrap(), vec![u0.clone()]);
        let c = simulate(&p, &u0, 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_mutation_fixation_is_absorbing() {
        let p = ModelParams::with_mutation_probs(10, vec![0.0, 0.0]).unwrap();
        let u0 = LatticeState::new(vec![5], 10);
        let path = simulate(&p, &u0, 2000, 3).unwrap();
        let hit = path.iter().position(|s| s.counts()[0] == 0 || s.counts()[0] == 10);
        let t = hit.expect("fixation within 2000 generations");
        assert!(path[t..].iter().all(|s| s == &path[t]));
    }
}
