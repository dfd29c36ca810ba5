//! The rescaled simplex lattice `S = {u in δZ^{K-1} : u >= 0, Σ u_i <= 1}`,
//! functions on it, and forward-difference calculus.
//!
//! States are stored by their integer counts `n_i = N u_i` for the first
//! `K - 1` types. The canonical order is colexicographic on the counts: the
//! last coordinate is the most significant, the first varies fastest.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of lattice states.
pub const DEFAULT_STATE_CAP: u128 = 2_000_000;

/// Margin constant of the inner region `S_N = {u : Σ u_i <= 1 - 10 K / sqrt(N)}`.
pub const INNER_REGION_MARGIN: f64 = 10.0;

const INNER_REGION_SLACK: f64 = 1e-9;

/// Population size, number of types and mutation parameters.
///
/// Under the standard scaling the mutation probabilities are `p_i = beta_i / (2N)`.
/// [`ModelParams::with_mutation_probs`] accepts arbitrary probabilities with
/// `Σ p_i <= 1`, including the mutation-free chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n: usize,
    beta: Vec<f64>,
    p: Vec<f64>,
}

impl ModelParams {
    pub fn new(n: usize, beta: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("population size N must be >= 1".into()));
        }
        if beta.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need K >= 2 types, got {}",
                beta.len()
            )));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidParameter(format!("beta entries must be positive, got {b}")));
        }
        let p: Vec<f64> = beta.iter().map(|b| b / (2.0 * n as f64)).collect();
        let sigma: f64 = p.iter().sum();
        if sigma >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "total mutation probability {sigma} must be < 1 (N too small for beta)"
            )));
        }
        Ok(Self { n, beta, p })
    }

    /// General parent-independent mutation probabilities, `p_i >= 0`, `Σ p_i <= 1`.
    pub fn with_mutation_probs(n: usize, p: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("population size N must be >= 1".into()));
        }
        if p.len() < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2 types, got {}", p.len())));
        }
        if p.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::InvalidParameter("mutation probabilities must be >= 0".into()));
        }
        let sigma: f64 = p.iter().sum();
        if sigma > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "total mutation probability {sigma} exceeds 1"
            )));
        }
        let beta = p.iter().map(|q| 2.0 * n as f64 * q).collect();
        Ok(Self { n, beta, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of types `K`.
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    /// Lattice dimension `K - 1`.
    pub fn dim(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Total mutation probability `Σ = Σ_i p_i`.
    pub fn sigma(&self) -> f64 {
        self.p.iter().sum()
    }

    /// `s = Σ_i beta_i`.
    pub fn s(&self) -> f64 {
        self.beta.iter().sum()
    }
}

/// A point of `S`, stored as integer counts of the first `K - 1` types.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    counts: Vec<usize>,
    value: Vec<f64>,
}

impl LatticeState {
    pub fn new(counts: Vec<usize>, n: usize) -> Self {
        let value = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Self { counts, value }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Coordinates `u_i = δ n_i`.
    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn signed_counts(&self) -> Vec<i64> {
        self.counts.iter().map(|&c| c as i64).collect()
    }
}

/// `binomial(n, k)` in u128, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The enumerated lattice `S` for given model parameters.
#[derive(Debug, Clone)]
pub struct SimplexLattice {
    params: ModelParams,
    states: Vec<LatticeState>,
    index: HashMap<Vec<usize>, usize>,
}

impl SimplexLattice {
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::with_cap(params, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(params: ModelParams, cap: u128) -> Result<Self> {
        let n = params.n();
        let d = params.dim();
        let count = binomial((n + d) as u64, d as u64);
        if count > cap {
            return Err(Error::Capacity { states: count, cap });
        }
        let mut states = Vec::with_capacity(count as usize);
        let mut counts = vec![0usize; d];
        enumerate_colex(d, n, &mut counts, &mut |c| states.push(LatticeState::new(c.to_vec(), n)));
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.counts.clone(), i))
            .collect();
        Ok(Self { params, states, index })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn delta(&self) -> f64 {
        self.params.delta()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[LatticeState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &LatticeState {
        &self.states[i]
    }

    /// Ordinal of the state with the given counts, if it lies in `S`.
    pub fn index_of(&self, counts: &[i64]) -> Option<usize> {
        if counts.len() != self.dim() || counts.iter().any(|&c| c < 0) {
            return None;
        }
        let mut buf = [0usize; 16];
        if counts.len() <= buf.len() {
            for (b, &c) in buf.iter_mut().zip(counts) {
                *b = c as usize;
            }
            return self.index.get(&buf[..counts.len()]).copied();
        }
        let key: Vec<usize> = counts.iter().map(|&c| c as usize).collect();
        self.index.get(&key).copied()
    }

    pub fn contains(&self, counts: &[i64]) -> bool {
        counts.len() == self.dim()
            && counts.iter().all(|&c| c >= 0)
            && counts.iter().sum::<i64>() <= self.n() as i64
    }

    /// Membership in `S_N`, i.e. `Σ u_i <= 1 - 10 K / sqrt(N)` up to a 1e-9 slack.
    pub fn in_inner_region(&self, counts: &[i64]) -> bool {
        self.contains(counts) && {
            let total: i64 = counts.iter().sum();
            total as f64 * self.delta() <= inner_region_threshold(self.n(), self.params.k()) + INNER_REGION_SLACK
        }
    }

    /// Largest `Σ n_i` over `S_N`, or `None` when `S_N` is empty.
    pub fn inner_region_max_total(&self) -> Option<usize> {
        let bound = inner_region_threshold(self.n(), self.params.k()) + INNER_REGION_SLACK;
        if bound < 0.0 {
            return None;
        }
        let m = (bound * self.n() as f64).floor() as usize;
        Some(m.min(self.n()))
    }
}

/// `1 - 10 K / sqrt(N)`.
pub fn inner_region_threshold(n: usize, k: usize) -> f64 {
    1.0 - INNER_REGION_MARGIN * k as f64 / (n as f64).sqrt()
}

// Outer loop on the last coordinate, inner on the first.
fn enumerate_colex(d: usize, budget: usize, counts: &mut [usize], emit: &mut impl FnMut(&[usize])) {
    if d == 0 {
        emit(counts);
        return;
    }
    for c in 0..=budget {
        counts[d - 1] = c;
        enumerate_colex(d - 1, budget - c, counts, emit);
    }
    counts[d - 1] = 0;
}

/// Anything that can be evaluated at integer lattice coordinates `k` (point `δk`).
pub trait LatticeFn {
    fn at(&self, k: &[i64]) -> f64;
}

impl<F: Fn(&[i64]) -> f64> LatticeFn for F {
    fn at(&self, k: &[i64]) -> f64 {
        self(k)
    }
}

/// Real values on `S`, extended by zero to all of `δZ^{K-1}`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    lattice: Arc<SimplexLattice>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(lattice: Arc<SimplexLattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                lattice.len(),
                values.len()
            )));
        }
        Ok(Self { lattice, values })
    }

    pub fn from_fn(lattice: Arc<SimplexLattice>, f: impl Fn(&LatticeState) -> f64) -> Self {
        let values = lattice.states().iter().map(f).collect();
        Self { lattice, values }
    }

    pub fn zeros(lattice: Arc<SimplexLattice>) -> Self {
        let values = vec![0.0; lattice.len()];
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Arc<SimplexLattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise map, keeping the lattice.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { lattice: self.lattice.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl LatticeFn for GridFunction {
    fn at(&self, k: &[i64]) -> f64 {
        match self.lattice.index_of(k) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }
}

/// All multi-indices `a` in `d` dimensions with `|a|_1 = order`.
pub fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for c in (0..=left).rev() {
            cur[pos] = c;
            rec(pos + 1, left - c, cur, out);
        }
    }
    if d == 0 {
        return out;
    }
    rec(0, order, &mut cur, &mut out);
    out
}

/// `Δ^a f(δ base)`: the composition of `|a|_1` unit forward differences,
/// `a_i` of them along axis `i`. Points outside the domain of `f` follow
/// whatever extension `f` implements (zero for [`GridFunction`]).
pub fn forward_difference<F: LatticeFn + ?Sized>(f: &F, base: &[i64], a: &[usize]) -> f64 {
    debug_assert_eq!(base.len(), a.len());
    // Σ_{0 <= j <= a} (-1)^{|a| - |j|} Π C(a_i, j_i) f(base + j)
    let d = a.len();
    let mut j = vec![0usize; d];
    let mut point = base.to_vec();
    let mut total = 0.0;
    let order: usize = a.iter().sum();
    loop {
        let mut coeff = 1.0;
        for i in 0..d {
            coeff *= binomial(a[i] as u64, j[i] as u64) as f64;
        }
        let parity = order - j.iter().sum::<usize>();
        if parity % 2 == 1 {
            coeff = -coeff;
        }
        total += coeff * f.at(&point);

        // odometer over 0..=a
        let mut axis = 0;
        loop {
            if axis == d {
                return total;
            }
            if j[axis] < a[axis] {
                j[axis] += 1;
                point[axis] += 1;
                break;
            }
            point[axis] -= j[axis] as i64;
            j[axis] = 0;
            axis += 1;
        }
    }
}

/// `B_i(f) = max |Δ^a f(u)|` over `|a|_1 = i` and `u, u + δa ∈ S`. Zero if no
/// such pair exists.
pub fn sup_difference(f: &GridFunction, order: usize) -> f64 {
    let lattice = f.lattice();
    let n = lattice.n();
    if order > n {
        return 0.0;
    }
    let dirs = multi_indices(lattice.dim(), order);
    let mut best: f64 = 0.0;
    for state in lattice.states() {
        // a >= 0, so u + δa ∈ S iff Σ n_i + |a| <= N; every stencil point is then in S
        if state.total() + order > n {
            continue;
        }
        let base = state.signed_counts();
        for a in &dirs {
            best = best.max(forward_difference(f, &base, a).abs());
        }
    }
    best
}
