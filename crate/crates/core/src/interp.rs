//! The lattice interpolation operator `A`: five-point degree-7 Hermite weights
//! in one dimension and their tensor-product extension to `δZ^d`.
//!
//! On the cell with base `k` and local coordinate `t = (x − δk)/δ ∈ [0, 1)`,
//!
//! ```text
//! A f(x) = f(δk) + t (Δ − Δ²/2 + Δ³/3) f(δk) + t²/2 (Δ² − Δ³) f(δk) + t³/6 Δ³ f(δk)
//!        + (−23/3 t⁴ + 41/2 t⁵ − 55/3 t⁶ + 11/2 t⁷) Δ⁴ f(δk).
//! ```
//!
//! Collecting the coefficient of each `f(δ(k + i))` gives the weights `α_{k+i}^k`.

use std::sync::OnceLock;

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::lattice::{binomial, forward_difference, multi_indices, GridFunction, LatticeFn};

/// Stencil width.
pub const STENCIL: usize = 5;
/// Number of monomial coefficients per weight polynomial.
pub const DEGREE: usize = 8;
/// Highest derivative order the interpolant carries.
pub const MAX_ORDER: usize = 4;

type RatTable = [[Rational64; DEGREE]; STENCIL];
type Table = [[f64; DEGREE]; STENCIL];

/// Coefficient of `t^m` attached to `Δ^j f(δk)` (rows `j = 0..4`).
pub fn standard_delta_table() -> RatTable {
    let r = |n: i64, d: i64| Rational64::new(n, d);
    let z = Rational64::from_integer(0);
    let mut tab = [[z; DEGREE]; STENCIL];
    tab[0][0] = r(1, 1);
    tab[1][1] = r(1, 1);
    tab[2][1] = r(-1, 2);
    tab[3][1] = r(1, 3);
    tab[2][2] = r(1, 2);
    tab[3][2] = r(-1, 2);
    tab[3][3] = r(1, 6);
    tab[4][4] = r(-23, 3);
    tab[4][5] = r(41, 2);
    tab[4][6] = r(-55, 3);
    tab[4][7] = r(11, 2);
    tab
}

/// Expands `Δ^j f(δk) = Σ_i (−1)^{j−i} C(j, i) f(δ(k+i))` and collects the
/// coefficient of `t^m` for each stencil point `i`.
pub fn weights_from_delta_table(delta_table: &RatTable) -> RatTable {
    let z = Rational64::from_integer(0);
    let mut w = [[z; DEGREE]; STENCIL];
    for (j, row) in delta_table.iter().enumerate() {
        for i in 0..=j {
            let sign = if (j - i) % 2 == 0 { 1 } else { -1 };
            let c = Rational64::from_integer(sign * binomial(j as u64, i as u64) as i64);
            for m in 0..DEGREE {
                w[i][m] += c * row[m];
            }
        }
    }
    w
}

/// The five weight polynomials `α_{k+i}^k` as functions of `t`, with derivative tables.
#[derive(Debug, Clone)]
pub struct WeightKernel {
    exact: Option<RatTable>,
    deriv: [Table; MAX_ORDER + 1],
}

impl WeightKernel {
    pub fn from_rational(exact: RatTable) -> Self {
        let mut coeffs = [[0.0; DEGREE]; STENCIL];
        for i in 0..STENCIL {
            for m in 0..DEGREE {
                coeffs[i][m] = *exact[i][m].numer() as f64 / *exact[i][m].denom() as f64;
            }
        }
        let mut k = Self::from_coefficients(coeffs);
        k.exact = Some(exact);
        k
    }

    /// A kernel from arbitrary floating-point coefficients (no exact form).
    pub fn from_coefficients(coeffs: Table) -> Self {
        let mut deriv = [[[0.0; DEGREE]; STENCIL]; MAX_ORDER + 1];
        deriv[0] = coeffs;
        for r in 1..=MAX_ORDER {
            for i in 0..STENCIL {
                for m in 0..DEGREE - 1 {
                    deriv[r][i][m] = deriv[r - 1][i][m + 1] * (m + 1) as f64;
                }
            }
        }
        Self { exact: None, deriv }
    }

    pub fn standard() -> Self {
        Self::from_rational(weights_from_delta_table(&standard_delta_table()))
    }

    pub fn exact(&self) -> Option<&RatTable> {
        self.exact.as_ref()
    }

    pub fn coefficients(&self) -> &Table {
        &self.deriv[0]
    }

    /// `d^r/dt^r α_{k+i}^k` at local coordinate `t`, for `i = 0..4`.
    pub fn eval(&self, t: f64, r: usize) -> [f64; STENCIL] {
        let tab = &self.deriv[r];
        let mut out = [0.0; STENCIL];
        for (o, row) in out.iter_mut().zip(tab) {
            *o = row.iter().rev().fold(0.0, |acc, c| acc * t + c);
        }
        out
    }

    /// Exact check of `α_k^k(δk) = 1`, `α_{k+i}^k(δk) = 0`, `Σ_i α_{k+i}^k ≡ 1`
    /// and reproduction of `t^p` for `p ≤ 3`. `None` without exact coefficients.
    pub fn exact_identities(&self) -> Option<ExactIdentities> {
        let w = self.exact.as_ref()?;
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        let interpolates = (0..STENCIL).all(|i| w[i][0] == if i == 0 { one } else { zero });
        let sums_to_one = (0..DEGREE).all(|m| {
            let s: Rational64 = (0..STENCIL).map(|i| w[i][m]).sum();
            s == if m == 0 { one } else { zero }
        });
        let reproduces_cubics = (0..=3).all(|p| {
            (0..DEGREE).all(|m| {
                let s: Rational64 = (0..STENCIL)
                    .map(|i| w[i][m] * Rational64::from_integer((i as i64).pow(p as u32)))
                    .sum();
                s == if m == p { one } else { zero }
            })
        });
        Some(ExactIdentities { interpolates, sums_to_one, reproduces_cubics })
    }

    /// `sup_{t ∈ [0,1]} |α_{k+i}^k|` per stencil point, by dense sampling.
    pub fn weight_bounds(&self) -> [f64; STENCIL] {
        let mut best = [0.0f64; STENCIL];
        for t in sample_unit(20_001) {
            for (b, w) in best.iter_mut().zip(self.eval(t, 0)) {
                *b = b.max(w.abs());
            }
        }
        best
    }

    /// Coefficients `c` with `Σ_i α^{(r)}_{k+i}(t) f_i = Σ_m c_m Δ^r f_m`,
    /// `m = 0..4−r`. Valid whenever the order-`r` derivative weights annihilate
    /// polynomials of degree below `r`.
    pub fn difference_form(&self, t: f64, r: usize) -> Vec<f64> {
        let mut v = self.eval(t, r).to_vec();
        for _ in 0..r {
            let mut acc = 0.0;
            let next: Vec<f64> = v[..v.len() - 1]
                .iter()
                .map(|x| {
                    acc -= x;
                    acc
                })
                .collect();
            v = next;
        }
        v
    }

    /// `L_r = sup_t Σ_m |c_m(t)|` for `r = 0..4`, so that on one axis
    /// `|∂^r A f| ≤ L_r δ^{−r} max_m |Δ^r f_m|`.
    pub fn derivative_constants(&self) -> [f64; MAX_ORDER + 1] {
        let mut best = [0.0f64; MAX_ORDER + 1];
        for t in sample_unit(20_001) {
            for (r, b) in best.iter_mut().enumerate() {
                let l: f64 = self.difference_form(t, r).iter().map(|c| c.abs()).sum();
                *b = b.max(l);
            }
        }
        best
    }

    /// The tensor constant `C(d) = max_{|a| ≤ 4} Π_j L_{a_j}` for the bound
    /// `|D^a A f(x)| ≤ C(d) δ^{−|a|} max_{0 ≤ i ≤ 4e − a} |Δ^a f(δ(k + i))|`.
    pub fn multibound_constant(&self, d: usize) -> f64 {
        let l = self.derivative_constants();
        (0..=MAX_ORDER)
            .flat_map(|o| multi_indices(d, o))
            .map(|a| a.iter().map(|&r| l[r]).product::<f64>())
            .fold(0.0, f64::max)
    }

    /// Constant `C` with `|A(fg) − Af·Ag| ≤ C · M_f · M_g`, where `M` is the
    /// largest first difference on the `5^d` stencil.
    pub fn product_constant(&self, d: usize) -> f64 {
        let per_axis = match d {
            1 => 20_001,
            2 => 201,
            3 => 41,
            _ => 13,
        };
        let ts = sample_unit(per_axis);
        let ws: Vec<[f64; STENCIL]> = ts.iter().map(|&t| self.eval(t, 0)).collect();
        let mut idx = vec![0usize; d];
        let mut best: f64 = 0.0;
        loop {
            let axes: Vec<&[f64; STENCIL]> = idx.iter().map(|&i| &ws[i]).collect();
            let mut s1 = 0.0;
            let mut terms = Vec::with_capacity(STENCIL.pow(d as u32));
            for_each_stencil(d, |i| {
                let w: f64 = i.iter().enumerate().map(|(j, &ij)| axes[j][ij]).product();
                let norm: usize = i.iter().sum();
                s1 += w.abs() * norm as f64;
                terms.push((w.abs(), norm as f64));
            });
            let c: f64 = terms.iter().map(|(w, n)| w * (n + s1) * n).sum();
            best = best.max(c);
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < ts.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                return best;
            }
        }
    }
}

/// Outcome of [`WeightKernel::exact_identities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactIdentities {
    pub interpolates: bool,
    pub sums_to_one: bool,
    pub reproduces_cubics: bool,
}

impl ExactIdentities {
    pub fn all(&self) -> bool {
        self.interpolates && self.sums_to_one && self.reproduces_cubics
    }
}

fn sample_unit(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn for_each_stencil(d: usize, mut f: impl FnMut(&[usize])) {
    let mut i = vec![0usize; d];
    loop {
        f(&i);
        let mut j = 0;
        while j < d {
            i[j] += 1;
            if i[j] < STENCIL {
                break;
            }
            i[j] = 0;
            j += 1;
        }
        if j == d {
            return;
        }
    }
}

/// The process-wide kernel derived from the Δ-table.
pub fn standard_kernel() -> &'static WeightKernel {
    static KERNEL: OnceLock<WeightKernel> = OnceLock::new();
    KERNEL.get_or_init(WeightKernel::standard)
}

/// Cell index `k = floor(x/δ)` and local coordinate `t`, snapping points
/// within a few ulp of a grid node onto it.
pub fn locate(x: f64, delta: f64) -> (i64, f64) {
    let q = x / delta;
    let r = q.round();
    if (q - r).abs() <= 8.0 * f64::EPSILON * q.abs().max(1.0) {
        return (r as i64, 0.0);
    }
    let k = q.floor();
    (k as i64, q - k)
}

/// `(k, w)` with `w_i = α_{k+i}^k(x)`.
pub fn weights_1d(x: f64, delta: f64) -> (i64, [f64; STENCIL]) {
    let (k, t) = locate(x, delta);
    (k, standard_kernel().eval(t, 0))
}

/// `A f` for a lattice function `f` on `δZ^d`.
#[derive(Clone, Copy)]
pub struct Interpolant<'a, F: LatticeFn + ?Sized> {
    f: &'a F,
    delta: f64,
    kernel: &'a WeightKernel,
}

impl<'a, F: LatticeFn + ?Sized> Interpolant<'a, F> {
    pub fn new(f: &'a F, delta: f64) -> Self {
        Self { f, delta, kernel: standard_kernel() }
    }

    pub fn with_kernel(f: &'a F, delta: f64, kernel: &'a WeightKernel) -> Self {
        Self { f, delta, kernel }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn combine(&self, base: &[i64], axes: &[[f64; STENCIL]]) -> f64 {
        let d = base.len();
        let mut point = base.to_vec();
        let mut total = 0.0;
        for_each_stencil(d, |i| {
            let mut w = 1.0;
            for j in 0..d {
                w *= axes[j][i[j]];
                point[j] = base[j] + i[j] as i64;
            }
            if w != 0.0 {
                total += w * self.f.at(&point);
            }
        });
        total
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut base = Vec::with_capacity(x.len());
        let mut axes = Vec::with_capacity(x.len());
        for &xj in x {
            let (k, t) = locate(xj, self.delta);
            base.push(k);
            axes.push(self.kernel.eval(t, 0));
        }
        self.combine(&base, &axes)
    }

    /// `D^a A f(x)`. Fails for `|a| > 4`, and for `a_j = 4` when `x_j` is on a cell face.
    pub fn derivative(&self, x: &[f64], a: &[usize]) -> Result<f64> {
        if a.len() != x.len() {
            return Err(Error::InvalidParameter("multi-index and point differ in dimension".into()));
        }
        if a.iter().sum::<usize>() > MAX_ORDER {
            return Err(Error::InvalidParameter(format!("derivative order {a:?} exceeds {MAX_ORDER}")));
        }
        let mut base = Vec::with_capacity(x.len());
        for (&xj, &aj) in x.iter().zip(a) {
            let (k, t) = locate(xj, self.delta);
            if aj == MAX_ORDER && t == 0.0 {
                return Err(Error::Domain(format!(
                    "fourth derivative along an axis is undefined on the cell face x = {xj}"
                )));
            }
            base.push(k);
        }
        Ok(self.derivative_in_cell(x, a, &base))
    }

    /// `D^a` of the polynomial piece attached to the cell with base `base`,
    /// evaluated at `x` (which need not lie in that cell).
    pub fn derivative_in_cell(&self, x: &[f64], a: &[usize], base: &[i64]) -> f64 {
        let mut axes = Vec::with_capacity(x.len());
        let mut scale = 1.0;
        for ((&xj, &aj), &kj) in x.iter().zip(a).zip(base) {
            let t = xj / self.delta - kj as f64;
            axes.push(self.kernel.eval(t, aj));
            scale *= self.delta.powi(-(aj as i32));
        }
        scale * self.combine(base, &axes)
    }

    /// Value, gradient and row-major Hessian of `A f` at `x`.
    pub fn jet2(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = x.len();
        let mut base = Vec::with_capacity(d);
        let mut w: Vec<[[f64; STENCIL]; 3]> = Vec::with_capacity(d);
        for &xj in x {
            let (k, t) = locate(xj, self.delta);
            base.push(k);
            w.push([self.kernel.eval(t, 0), self.kernel.eval(t, 1), self.kernel.eval(t, 2)]);
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut point = base.clone();
        for_each_stencil(d, |i| {
            for j in 0..d {
                point[j] = base[j] + i[j] as i64;
            }
            let fv = self.f.at(&point);
            if fv == 0.0 {
                return;
            }
            let w0: Vec<f64> = (0..d).map(|j| w[j][0][i[j]]).collect();
            let prod_except = |skip: &[usize]| -> f64 {
                (0..d).filter(|j| !skip.contains(j)).map(|j| w0[j]).product()
            };
            value += fv * w0.iter().product::<f64>();
            for p in 0..d {
                grad[p] += fv * w[p][1][i[p]] * prod_except(&[p]);
                for q in 0..d {
                    let h = if p == q {
                        w[p][2][i[p]] * prod_except(&[p])
                    } else {
                        w[p][1][i[p]] * w[q][1][i[q]] * prod_except(&[p, q])
                    };
                    hess[p * d + q] += fv * h;
                }
            }
        });
        let inv = 1.0 / self.delta;
        grad.iter_mut().for_each(|g| *g *= inv);
        hess.iter_mut().for_each(|h| *h *= inv * inv);
        (value, grad, hess)
    }
}

/// `A f(x)` with the standard kernel.
pub fn eval_interpolant<F: LatticeFn + ?Sized>(f: &F, delta: f64, x: &[f64]) -> f64 {
    Interpolant::new(f, delta).value(x)
}

/// `D^a A f(x)` with the standard kernel.
pub fn eval_derivative<F: LatticeFn + ?Sized>(f: &F, delta: f64, x: &[f64], a: &[usize]) -> Result<f64> {
    Interpolant::new(f, delta).derivative(x, a)
}

/// Coefficients of `Δ̃^{(j)}` as a polynomial in `Δ`, `j = 0..3`.
const TILDE: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, -0.5, 1.0 / 3.0],
    [0.0, 0.0, 1.0, -1.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// `Δ̃_i^{(j)} f(δ base)` along `axis`.
pub fn tilde_delta<F: LatticeFn + ?Sized>(f: &F, base: &[i64], axis: usize, order: usize) -> Result<f64> {
    let mut a = vec![0usize; base.len()];
    if axis >= base.len() {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
    }
    a[axis] = order;
    tilde_delta_multi(f, base, &a)
}

/// `Δ̃_1^{(a_1)} ⋯ Δ̃_d^{(a_d)} f(δ base)` for `a_j ≤ 3`.
pub fn tilde_delta_multi<F: LatticeFn + ?Sized>(f: &F, base: &[i64], a: &[usize]) -> Result<f64> {
    if a.iter().any(|&aj| aj > 3) || a.len() != base.len() {
        return Err(Error::InvalidParameter(format!("tilde-Δ order {a:?} must have entries <= 3")));
    }
    let d = a.len();
    let mut m = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let c: f64 = (0..d).map(|j| TILDE[a[j]][m[j]]).product();
        if c != 0.0 {
            total += c * forward_difference(f, base, &m);
        }
        let mut j = 0;
        while j < d {
            m[j] += 1;
            if m[j] < 4 {
                break;
            }
            m[j] = 0;
            j += 1;
        }
        if j == d {
            return Ok(total);
        }
    }
}

/// `(A f(x) · A g(x), A(fg)(x) − A f(x) · A g(x))`.
pub fn product_decomposition<F, G>(f: &F, g: &G, delta: f64, x: &[f64]) -> (f64, f64)
where
    F: LatticeFn + ?Sized,
    G: LatticeFn + ?Sized,
{
    let af = eval_interpolant(f, delta, x);
    let ag = eval_interpolant(g, delta, x);
    let fg = |k: &[i64]| f.at(k) * g.at(k);
    let main = af * ag;
    (main, eval_interpolant(&fg, delta, x) - main)
}

/// Largest first difference of `f` over the `5^d` stencil anchored at `base`.
pub fn stencil_first_difference<F: LatticeFn + ?Sized>(f: &F, base: &[i64]) -> f64 {
    stencil_difference(f, base, 1)
}

/// `max_{|a| = order} max_{0 ≤ i ≤ 4e − a} |Δ^a f(δ(base + i))|`.
pub fn stencil_difference<F: LatticeFn + ?Sized>(f: &F, base: &[i64], order: usize) -> f64 {
    let d = base.len();
    let mut best: f64 = 0.0;
    for a in multi_indices(d, order) {
        best = best.max(stencil_difference_along(f, base, &a));
    }
    best
}

/// `max_{0 ≤ i ≤ 4e − a} |Δ^a f(δ(base + i))|` for one multi-index.
pub fn stencil_difference_along<F: LatticeFn + ?Sized>(f: &F, base: &[i64], a: &[usize]) -> f64 {
    let d = base.len();
    let mut best: f64 = 0.0;
    let mut point = base.to_vec();
    for_each_stencil(d, |i| {
        if (0..d).any(|j| i[j] + a[j] > 4) {
            return;
        }
        for j in 0..d {
            point[j] = base[j] + i[j] as i64;
        }
        best = best.max(forward_difference(f, &point, a).abs());
    });
    best
}

/// A smooth function on `R^d` with exact partial derivatives.
pub trait AnalyticFn: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn partial(&self, x: &[f64], a: &[usize]) -> f64;
}

/// Observed interpolation error over a sequence of halved grid spacings.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InterpolationErrorReport {
    pub smoothness: usize,
    pub deltas: Vec<f64>,
    pub errors: Vec<f64>,
    /// `error / (δ^s · max_{|a|=s} |D^a f|)` per spacing.
    pub normalized: Vec<f64>,
    /// Least-squares slope of `log error` against `log δ`.
    pub fitted_order: f64,
}

/// `max |f − A f|` over a sample grid of the box `[lo, hi]`, at
/// `δ ∈ {δ₀, δ₀/2, δ₀/4, δ₀/8}`.
pub fn interpolation_error(
    f: &dyn AnalyticFn,
    lo: &[f64],
    hi: &[f64],
    delta0: f64,
    smoothness: usize,
) -> Result<InterpolationErrorReport> {
    let d = f.dim();
    if lo.len() != d || hi.len() != d || !(delta0 > 0.0) || !(1..=4).contains(&smoothness) {
        return Err(Error::InvalidParameter("bad region, spacing or smoothness".into()));
    }
    let per_axis = match d {
        1 => 401,
        2 => 41,
        _ => 13,
    };
    let mut points = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        points.push(
            (0..d)
                .map(|j| lo[j] + (hi[j] - lo[j]) * (idx[j] as f64 + 0.5) / per_axis as f64)
                .collect::<Vec<f64>>(),
        );
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    let dirs = multi_indices(d, smoothness);
    let m_s = points
        .iter()
        .flat_map(|x| dirs.iter().map(move |a| f.partial(x, a).abs()))
        .fold(0.0, f64::max);

    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    let mut normalized = Vec::new();
    for h in 0..4 {
        let delta = delta0 / 2f64.powi(h);
        let g = |k: &[i64]| {
            let x: Vec<f64> = k.iter().map(|&c| c as f64 * delta).collect();
            f.value(&x)
        };
        let interp = Interpolant::new(&g, delta);
        let err = points
            .iter()
            .map(|x| (f.value(x) - interp.value(x)).abs())
            .fold(0.0, f64::max);
        deltas.push(delta);
        errors.push(err);
        normalized.push(if m_s > 0.0 { err / (delta.powi(smoothness as i32) * m_s) } else { 0.0 });
    }
    let fitted_order = log_log_slope(&deltas, &errors);
    Ok(InterpolationErrorReport { smoothness, deltas, errors, normalized, fitted_order })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `A f` on a lattice function, evaluated at each state of its own lattice.
pub fn grid_values_via_interpolant(f: &GridFunction) -> Vec<f64> {
    let delta = f.lattice().delta();
    let interp = Interpolant::new(f, delta);
    f.lattice().states().iter().map(|s| interp.value(s.value())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn derived_weights_match_independent_expansion() {
        // Oracle: coefficients expanded by hand from the Δ-table, one stencil point per row.
        let want = [
            [r(1, 1), r(-11, 6), r(1, 1), r(-1, 6), r(-23, 3), r(41, 2), r(-55, 3), r(11, 2)],
            [r(0, 1), r(3, 1), r(-5, 2), r(1, 2), r(92, 3), r(-82, 1), r(220, 3), r(-22, 1)],
            [r(0, 1), r(-3, 2), r(2, 1), r(-1, 2), r(-46, 1), r(123, 1), r(-110, 1), r(33, 1)],
            [r(0, 1), r(1, 3), r(-1, 2), r(1, 6), r(92, 3), r(-82, 1), r(220, 3), r(-22, 1)],
            [r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(-23, 3), r(41, 2), r(-55, 3), r(11, 2)],
        ];
        assert_eq!(weights_from_delta_table(&standard_delta_table()), want);
    }

    #[test]
    fn exact_identities_hold() {
        let ids = WeightKernel::standard().exact_identities().unwrap();
        assert!(ids.all(), "{ids:?}");
    }

    #[test]
    fn grid_point_weights() {
        for (x, delta) in [(0.0, 0.125), (0.375, 0.125), (3.0 / 32.0, 1.0 / 32.0), (-0.25, 0.125)] {
            let (k, w) = weights_1d(x, delta);
            assert_eq!(k as f64 * delta, x);
            assert_eq!(w, [1.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn weights_are_c3_across_faces() {
        // piece k at t = 1 against piece k + 1 at t = 0, stencils offset by one
        let k = standard_kernel();
        for r in 0..=3 {
            let left = k.eval(1.0, r);
            let right = k.eval(0.0, r);
            let mut lhs = [0.0; 6];
            let mut rhs = [0.0; 6];
            for i in 0..5 {
                lhs[i] += left[i];
                rhs[i + 1] += right[i];
            }
            for i in 0..6 {
                assert!((lhs[i] - rhs[i]).abs() < 1e-11, "order {r}, point {i}");
            }
        }
        let left = k.eval(1.0, 4);
        let right = k.eval(0.0, 4);
        assert!((left[0] - 0.0).abs() > 1e-6 || (left[4] - right[3]).abs() > 1e-6);
    }

    #[test]
    fn tilde_delta_examples() {
        let delta = 0.125;
        let lin = |k: &[i64]| -3.0 * delta * k[0] as f64;
        assert!((tilde_delta(&lin, &[2], 0, 1).unwrap() + 3.0 * delta).abs() < 1e-15);
        let c = |_: &[i64]| 2.0;
        for j in 1..=3 {
            assert_eq!(tilde_delta(&c, &[0], 0, j).unwrap(), 0.0);
        }
        let q = |k: &[i64]| (delta * k[0] as f64).powi(2);
        assert!((tilde_delta(&q, &[5], 0, 2).unwrap() - 2.0 * delta * delta).abs() < 1e-15);
        assert_eq!(tilde_delta(&q, &[5], 0, 0).unwrap(), q(&[5]));
    }

    #[test]
    fn dform_identity_at_grid_points() {
        let delta = 1.0 / 8.0;
        let f = |k: &[i64]| ((k[0] as f64) * 0.7).sin() + ((k[1] * k[0]) as f64 * 0.13).cos();
        let interp = Interpolant::new(&f, delta);
        for base in [[0i64, 0], [3, 2], [-4, 7]] {
            let x = [base[0] as f64 * delta, base[1] as f64 * delta];
            for o in 1..=3 {
                for a in multi_indices(2, o) {
                    let lhs = interp.derivative(&x, &a).unwrap();
                    let rhs = delta.powi(-(o as i32)) * tilde_delta_multi(&f, &base, &a).unwrap();
                    let scale = delta.powi(-(o as i32)) * stencil_difference(&f, &base, 0);
                    assert!((lhs - rhs).abs() <= 8.0 * f64::EPSILON * scale, "a={a:?} base={base:?}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn fourth_derivative_on_face_is_an_error() {
        let f = |k: &[i64]| (k[0] as f64).powi(5);
        let interp = Interpolant::new(&f, 0.25);
        assert!(matches!(interp.derivative(&[0.5], &[4]), Err(Error::Domain(_))));
        assert!(interp.derivative(&[0.6], &[4]).is_ok());
        assert!(interp.derivative(&[0.6], &[5]).is_err());
    }

    #[test]
    fn constants_and_linear_interpolate_exactly() {
        let c = |_: &[i64]| 1.75;
        let delta = 1.0 / 32.0;
        for x in [0.013, 0.5, 0.99, -2.3] {
            assert!((eval_interpolant(&c, delta, &[x]) - 1.75).abs() < 1e-13);
            assert!(eval_derivative(&c, delta, &[x], &[1]).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn jet_matches_single_derivatives() {
        let delta = 0.125;
        let f = |k: &[i64]| ((k[0] as f64) * 0.31 + (k[1] as f64) * 0.17).sin();
        let interp = Interpolant::new(&f, delta);
        let x = [0.4321, 0.777];
        let (v, g, h) = interp.jet2(&x);
        assert!((v - interp.value(&x)).abs() < 1e-13);
        assert!((g[0] - interp.derivative(&x, &[1, 0]).unwrap()).abs() < 1e-11);
        assert!((g[1] - interp.derivative(&x, &[0, 1]).unwrap()).abs() < 1e-11);
        assert!((h[0] - interp.derivative(&x, &[2, 0]).unwrap()).abs() < 1e-9);
        assert!((h[1] - interp.derivative(&x, &[1, 1]).unwrap()).abs() < 1e-9);
        assert_eq!(h[1], h[2]);
        assert!((h[3] - interp.derivative(&x, &[0, 2]).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn product_decomposition_trivial_cases() {
        let delta = 0.125;
        let f = |k: &[i64]| (k[0] as f64 * 0.4).exp();
        let c = |_: &[i64]| -2.0;
        let (_, eps) = product_decomposition(&f, &c, delta, &[0.37]);
        assert!(eps.abs() < 1e-13);
        let (main, eps) = product_decomposition(&f, &f, delta, &[0.375]);
        assert!(eps.abs() < 1e-14);
        assert!((main - f(&[3]).powi(2)).abs() < 1e-13);
    }

    #[test]
    fn difference_form_reconstructs_derivatives() {
        let k = standard_kernel();
        let f = [0.3, -1.2, 2.5, 0.7, -0.4];
        for r in 0..=4 {
            for t in [0.1, 0.5, 0.93] {
                let direct: f64 = k.eval(t, r).iter().zip(&f).map(|(w, v)| w * v).sum();
                let mut diffs = f.to_vec();
                for _ in 0..r {
                    diffs = diffs.windows(2).map(|p| p[1] - p[0]).collect();
                }
                let c = k.difference_form(t, r);
                let via: f64 = c.iter().zip(&diffs).map(|(a, b)| a * b).sum();
                assert!((direct - via).abs() < 1e-10 * (1.0 + direct.abs()), "r={r} t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(x in -10.0f64..10.0, e in 3u32..7) {
            let delta = 0.5f64.powi(e as i32);
            let (_, w) = weights_1d(x, delta);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-13);
        }

        #[test]
        fn translation_invariance(x in 0.0f64..1.0, j in -20i64..20) {
            let delta = 0.125;
            let (k0, w0) = weights_1d(x, delta);
            let (k1, w1) = weights_1d(x + j as f64 * delta, delta);
            prop_assert_eq!(k1, k0 + j);
            for i in 0..5 {
                prop_assert!((w0[i] - w1[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn cubic_reproduction_2d(c in prop::collection::vec(-1.0f64..1.0, 10), x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let poly = |u: f64, v: f64| c[0] + c[1]*u + c[2]*v + c[3]*u*u + c[4]*u*v + c[5]*v*v
                + c[6]*u*u*u + c[7]*u*u*v + c[8]*u*v*v + c[9]*v*v*v;
            let delta = 1.0 / 32.0;
            let f = |k: &[i64]| poly(k[0] as f64 * delta, k[1] as f64 * delta);
            let norm: f64 = c.iter().map(|v| v.abs()).sum();
            prop_assert!((eval_interpolant(&f, delta, &[x, y]) - poly(x, y)).abs() <= 1e-9 * (1.0 + norm));
            let dx = c[1] + 2.0*c[3]*x + c[4]*y + 3.0*c[6]*x*x + 2.0*c[7]*x*y + c[8]*y*y;
            prop_assert!((eval_derivative(&f, delta, &[x, y], &[1, 0]).unwrap() - dx).abs() <= 1e-8 * (1.0 + norm));
        }

        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -1.0f64..1.0) {
            let delta = 0.125;
            let f = |k: &[i64]| (k[0] as f64).sin();
            let g = |k: &[i64]| (k[0] as f64 * 0.3).exp();
            let h = |k: &[i64]| a * f(k) + b * g(k);
            let lhs = eval_interpolant(&h, delta, &[x]);
            let rhs = a * eval_interpolant(&f, delta, &[x]) + b * eval_interpolant(&g, delta, &[x]);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
