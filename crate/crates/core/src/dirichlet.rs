//! The Dirichlet limit law and the Wright-Fisher diffusion generator `G_Z`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::special::{beta_reg, gauss_jacobi_beta, ln_gamma, rising_factorial, Quadrature};

/// Per-axis Gauss-Jacobi order for `E h(Z)` with non-polynomial `h`.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// `Dirichlet(beta_1, ..., beta_K)` on the simplex, parametrized by its first `K - 1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletLaw {
    beta: Vec<f64>,
    s: f64,
}

impl DirichletLaw {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2, got {}", beta.len())));
        }
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidParameter("Dirichlet parameters must be positive".into()));
        }
        let s = beta.iter().sum();
        Ok(Self { beta, s })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn dim(&self) -> usize {
        self.beta.len() - 1
    }

    fn ln_norm(&self) -> f64 {
        ln_gamma(self.s) - self.beta.iter().map(|&b| ln_gamma(b)).sum::<f64>()
    }

    /// Density at an interior point given by its first `K - 1` coordinates.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        let last = 1.0 - x.iter().sum::<f64>();
        if x.iter().any(|&v| !(v > 0.0)) || !(last > 0.0) {
            return Err(Error::Domain(format!("{x:?} is not in the open simplex")));
        }
        let ln_kernel: f64 = x
            .iter()
            .chain(std::iter::once(&last))
            .zip(&self.beta)
            .map(|(&v, &b)| (b - 1.0) * v.ln())
            .sum();
        Ok((self.ln_norm() + ln_kernel).exp())
    }

    /// `E Π_i Z_i^{a_i}` over all `K` coordinates.
    pub fn monomial_moment(&self, a: &[usize]) -> Result<f64> {
        if a.len() != self.k() {
            return Err(Error::InvalidParameter(format!(
                "exponent needs {} entries, got {}",
                self.k(),
                a.len()
            )));
        }
        let total: usize = a.iter().sum();
        let num: f64 = a.iter().zip(&self.beta).map(|(&ai, &b)| rising_factorial(b, ai)).product();
        Ok(num / rising_factorial(self.s, total))
    }

    /// `n` draws (first `K - 1` coordinates) by Gamma normalization.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas: Vec<Gamma<f64>> = self
            .beta
            .iter()
            .map(|&b| Gamma::new(b, 1.0).expect("positive shape"))
            .collect();
        let mut out = Vec::with_capacity(n);
        let mut g = vec![0.0; self.k()];
        while out.len() < n {
            for (gi, dist) in g.iter_mut().zip(&gammas) {
                *gi = dist.sample(&mut rng);
            }
            let total: f64 = g.iter().sum();
            let x: Vec<f64> = g[..self.dim()].iter().map(|v| v / total).collect();
            let last = 1.0 - x.iter().sum::<f64>();
            // redraw the rare underflowed point on the boundary
            if x.iter().all(|&v| v > 0.0) && last > 0.0 {
                out.push(x);
            }
        }
        out
    }

    /// `P(Z_K <= t)` where `Z_K ~ Beta(beta_K, s - beta_K)`.
    pub fn beta_tail(&self, t: f64) -> Result<f64> {
        let bk = self.beta[self.k() - 1];
        beta_reg(bk, self.s - bk, t)
    }

    /// The closed-form upper bound on `P(Z_K <= 10K/sqrt(N))`:
    /// `Γ(s)/(Γ(s − β_K)Γ(β_K)) · t^{β_K}/β_K · (1 + (1 − 1/sqrt(N))^{−|s − β_K − 1|})`
    /// with `t = 10K/sqrt(N)`. Returns `(t, bound)`.
    pub fn tail_envelope(&self, n: usize) -> (f64, f64) {
        let k = self.k() as f64;
        let rn = (n as f64).sqrt();
        let t = 10.0 * k / rn;
        let bk = self.beta[self.k() - 1];
        let rest = self.s - bk;
        let front = (ln_gamma(self.s) - ln_gamma(rest) - ln_gamma(bk)).exp() / bk;
        let tail = 1.0 + (1.0 - 1.0 / rn).powf(-(rest - 1.0).abs());
        (t, front * t.powf(bk) * tail)
    }

    /// `E h(Z)` by a stick-breaking tensor Gauss-Jacobi rule of the given per-axis order.
    pub fn expectation(&self, h: impl Fn(&[f64]) -> f64, order: usize) -> Result<f64> {
        let d = self.dim();
        let mut rules: Vec<Quadrature> = Vec::with_capacity(d);
        let mut rest = self.s;
        for i in 0..d {
            rest -= self.beta[i];
            rules.push(gauss_jacobi_beta(order, self.beta[i], rest)?);
        }
        let mut x = vec![0.0; d];
        Ok(stick_rec(&rules, 0, 1.0, 1.0, &mut x, &h))
    }
}

fn stick_rec(rules: &[Quadrature], axis: usize, left: f64, weight: f64, x: &mut [f64], h: &impl Fn(&[f64]) -> f64) -> f64 {
    if axis == rules.len() {
        return weight * h(x);
    }
    let rule = &rules[axis];
    let mut acc = 0.0;
    for (&v, &w) in rule.nodes.iter().zip(&rule.weights) {
        x[axis] = left * v;
        acc += stick_rec(rules, axis + 1, left * (1.0 - v), weight * w, x, h);
    }
    acc
}

/// `G_Z f(x) = ½[Σ_{ij} x_i(δ_ij − x_j) ∂_ij f + Σ_i (β_i − s x_i) ∂_i f]`,
/// given the gradient and the row-major Hessian of `f` at `x`.
pub fn apply_generator_z(beta: &[f64], grad: &[f64], hess: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    debug_assert_eq!(grad.len(), d);
    debug_assert_eq!(hess.len(), d * d);
    let s: f64 = beta.iter().sum();
    let mut second = 0.0;
    for i in 0..d {
        for j in 0..d {
            let kron = if i == j { 1.0 } else { 0.0 };
            second += x[i] * (kron - x[j]) * hess[i * d + j];
        }
    }
    let first: f64 = (0..d).map(|i| (beta[i] - s * x[i]) * grad[i]).sum();
    0.5 * (second + first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gauss_legendre_unit;
    use approx::assert_relative_eq;

    fn law(beta: &[f64]) -> DirichletLaw {
        DirichletLaw::new(beta.to_vec()).unwrap()
    }

    #[test]
    fn density_examples() {
        assert_relative_eq!(law(&[1.0, 1.0]).density(&[0.3]).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(law(&[2.0, 1.0]).density(&[0.5]).unwrap(), 1.0, epsilon = 1e-14);
        assert!(law(&[2.0, 1.0]).density(&[0.0]).is_err());
        assert!(law(&[2.0, 1.0, 1.0]).density(&[0.6, 0.4]).is_err());
    }

    // Collapsed-coordinates map x1 = a, x2 = (1 - a) b with Jacobian (1 - a).
    fn simplex_integral(f: impl Fn(&[f64]) -> f64, d: usize) -> f64 {
        let q = gauss_legendre_unit(60).unwrap();
        match d {
            1 => q.integrate(|a| f(&[a])),
            2 => q.integrate(|a| (1.0 - a) * q.integrate(|b| f(&[a, (1.0 - a) * b]))),
            _ => unreachable!(),
        }
    }

    #[test]
    fn density_normalizes() {
        for beta in [vec![1.0, 1.0], vec![2.0, 3.0], vec![2.0, 2.0, 2.0], vec![3.0, 2.0, 2.5]] {
            let l = law(&beta);
            let total = simplex_integral(|x| l.density(x).unwrap(), l.dim());
            assert!((total - 1.0).abs() < 1e-6, "{beta:?}: {total}");
        }
    }

    #[test]
    fn monomial_moments_match_quadrature() {
        for beta in [vec![1.0, 1.0], vec![2.0, 3.0], vec![2.0, 2.0, 2.0]] {
            let l = law(&beta);
            let k = l.k();
            for total in 0..=4 {
                for a in crate::lattice::multi_indices(k, total) {
                    let exact = l.monomial_moment(&a).unwrap();
                    let quad = simplex_integral(
                        |x| {
                            let last = 1.0 - x.iter().sum::<f64>();
                            let mono: f64 = x
                                .iter()
                                .chain(std::iter::once(&last))
                                .zip(&a)
                                .map(|(v, &e)| v.powi(e as i32))
                                .product();
                            mono * l.density(x).unwrap()
                        },
                        l.dim(),
                    );
                    assert_relative_eq!(exact, quad, max_relative = 1e-6);
                    let stick = l
                        .expectation(
                            |x| {
                                let last = 1.0 - x.iter().sum::<f64>();
                                x.iter().chain(std::iter::once(&last)).zip(&a).map(|(v, &e)| v.powi(e as i32)).product()
                            },
                            16,
                        )
                        .unwrap();
                    assert_relative_eq!(exact, stick, max_relative = 1e-12);
                }
            }
        }
        let l = law(&[1.0, 1.0]);
        assert_eq!(l.monomial_moment(&[0, 0]).unwrap(), 1.0);
        assert_relative_eq!(l.monomial_moment(&[1, 0]).unwrap(), 0.5);
        assert_relative_eq!(l.monomial_moment(&[2, 0]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn sampling_mean_and_determinism() {
        let l = law(&[2.0, 3.0]);
        let n = 1_000_000;
        let xs = l.sample(11, n);
        assert!(xs.iter().all(|x| x[0] > 0.0 && x[0] < 1.0));
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        let var = l.monomial_moment(&[2, 0]).unwrap() - 0.16;
        assert!((mean - 0.4).abs() < 4.0 * (var / n as f64).sqrt());
        assert_eq!(l.sample(3, 10), l.sample(3, 10));
    }

    #[test]
    fn beta_tail_examples() {
        let l = law(&[2.0, 12.0]);
        assert_eq!(l.beta_tail(0.0).unwrap(), 0.0);
        assert_eq!(l.beta_tail(1.0).unwrap(), 1.0);
        let u = law(&[1.0, 1.0]);
        for t in [0.1, 0.37, 0.9] {
            assert_relative_eq!(u.beta_tail(t).unwrap(), t, epsilon = 1e-14);
        }
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = l.beta_tail(i as f64 / 1000.0).unwrap();
            assert!(v >= prev - 1e-15);
            assert!(v - prev < 0.01);
            prev = v;
        }
    }

    #[test]
    fn tail_below_envelope() {
        let l = law(&[2.0, 12.0]);
        for n in [400, 1600] {
            let (t, bound) = l.tail_envelope(n);
            assert!(l.beta_tail(t).unwrap() <= bound);
        }
    }

    #[test]
    fn generator_examples() {
        let beta = [2.0, 3.0, 4.0];
        let x = [0.2, 0.3];
        assert_eq!(apply_generator_z(&beta, &[0.0, 0.0], &[0.0; 4], &x), 0.0);
        let g = apply_generator_z(&beta, &[0.0, 1.0], &[0.0; 4], &x);
        assert_relative_eq!(g, (3.0 - 9.0 * 0.3) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn generator_has_zero_mean_on_polynomials() {
        // f(x) = x1^2 x2 + x2^3
        let l = law(&[2.0, 3.0, 1.5]);
        let beta = l.beta().to_vec();
        let e = l
            .expectation(
                |x| {
                    let grad = [2.0 * x[0] * x[1], x[0] * x[0] + 3.0 * x[1] * x[1]];
                    let hess = [2.0 * x[1], 2.0 * x[0], 2.0 * x[0], 6.0 * x[1]];
                    apply_generator_z(&beta, &grad, &hess, x)
                },
                12,
            )
            .unwrap();
        assert!(e.abs() < 1e-14);
    }
}
