//! Special functions and Gaussian quadrature rules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Rising factorial `x (x + 1) ... (x + n - 1)`.
pub fn rising_factorial(x: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (x + i as f64))
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("beta_reg needs a, b > 0, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta_reg needs 0 <= x <= 1, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x)? / b)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::Domain(format!("incomplete beta continued fraction did not converge at ({a}, {b}, {x})")))
}

/// A quadrature rule on `[0, 1]` whose weights sum to one.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss rule for the Beta(a, b) law on `[0, 1]`: exact for polynomials of
/// degree `2n - 1` integrated against the normalized density.
pub fn gauss_jacobi_beta(n: usize, a: f64, b: f64) -> Result<Quadrature> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!("Beta parameters must be > 0, got ({a}, {b})")));
    }
    // Jacobi weight (1 - y)^al (1 + y)^be on [-1, 1]; x = (1 + y) / 2
    let al = b - 1.0;
    let be = a - 1.0;
    let ab = al + be;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let k = i as f64;
        let diag = if i == 0 {
            (be - al) / (ab + 2.0)
        } else {
            (be * be - al * al) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
        };
        jac[(i, i)] = diag;
        if i + 1 < n {
            let m = k + 1.0;
            let bn = if i == 0 {
                4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let t = 2.0 * m + ab;
                4.0 * m * (m + al) * (m + be) * (m + ab) / (t * t * (t + 1.0) * (t - 1.0))
            };
            let off = bn.sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            ((1.0 + eig.eigenvalues[i]) / 2.0, v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(Quadrature {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss-Legendre rule for the uniform law on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Result<Quadrature> {
    gauss_jacobi_beta(n, 1.0, 1.0)
}
