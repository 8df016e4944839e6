//! Mean-field linearization of the driven generalized coupling
//!
//! ```text
//! H = Δ₀ a†a + ω_b b†b + g′F(a†, a)(b† + b) + f(a† + a)
//! ```
//!
//! around a coherent product state `|α⟩|β⟩`. `F` is a normal-ordered
//! polynomial with `x ↔ a†`, `y ↔ a`, so its coherent-state expectation is
//! `F(α*, α)`. The stationarity conditions of `E(α, β) = ⟨H⟩` are
//!
//! ```text
//! β = −g′F(α*, α)/ω_b
//! α = −[f + g′(β + β*) ∂_xF(α*, α)]/Δ₀
//! ```
//!
//! and the fluctuation Hamiltonian has the position-position form with
//! `Δ = Δ₀ + g′(β + β*) ∂²_{xy}F` and `g = g′ ∂_xF`.
//!
//! `f` is the rotating-frame drive amplitude. A lab-frame drive
//! `f₀ cos(ω_d t)(a† + a)/2` maps to `f = f₀/4` after dropping the
//! counter-rotating part.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{CouplingKind, SystemConfig};
use crate::scalar::Real;

/// `c · x^m y^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial<T> {
    pub m: u32,
    pub n: u32,
    pub coeff: T,
}

/// Polynomial coupling function `F(x, y) = Σ c_{mn} x^m y^n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FSpec<T> {
    pub monomials: Vec<Monomial<T>>,
}

impl<T: Real> FSpec<T> {
    pub fn new(terms: impl IntoIterator<Item = (u32, u32, T)>) -> Self {
        FSpec {
            monomials: terms
                .into_iter()
                .map(|(m, n, coeff)| Monomial { m, n, coeff })
                .collect(),
        }
    }

    /// `a†a`, the radiation-pressure case.
    pub fn number() -> Self {
        Self::new([(1, 1, T::one())])
    }

    /// `a† + a`.
    pub fn position() -> Self {
        Self::new([(1, 0, T::one()), (0, 1, T::one())])
    }

    fn combined(&self) -> BTreeMap<(u32, u32), T> {
        let mut map = BTreeMap::new();
        for t in &self.monomials {
            let e = map.entry((t.m, t.n)).or_insert(T::zero());
            *e = *e + t.coeff;
        }
        map
    }

    /// Every `(m, n, c)` must be matched by `(n, m, c)`.
    pub fn check_hermitian(&self) -> Result<()> {
        let map = self.combined();
        let scale = map.values().fold(T::one(), |acc, c| acc.max(c.abs()));
        for (&(m, n), &c) in &map {
            let partner = map.get(&(n, m)).copied().unwrap_or(T::zero());
            if (partner - c).abs() > T::epsilon() * T::lit(64.0) * scale {
                return Err(Error::invalid(
                    "coupling.f_spec",
                    format!("not Hermitian: coefficient of x^{m} y^{n} is {c} but x^{n} y^{m} has {partner}"),
                ));
            }
        }
        Ok(())
    }

    /// Coefficients of `F(t, t)` and `∂_xF(t, t)` as polynomials in `t`.
    fn diagonal_polynomials(&self) -> (Vec<T>, Vec<T>) {
        let deg = self
            .monomials
            .iter()
            .map(|t| (t.m + t.n) as usize)
            .max()
            .unwrap_or(0);
        let mut p = vec![T::zero(); deg + 1];
        let mut q = vec![T::zero(); deg.max(1)];
        for t in &self.monomials {
            let d = (t.m + t.n) as usize;
            p[d] = p[d] + t.coeff;
            if t.m > 0 {
                q[d - 1] = q[d - 1] + T::lit(t.m as f64) * t.coeff;
            }
        }
        (p, q)
    }
}

/// `F` and its low-order partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FValue<T> {
    pub value: Complex<T>,
    pub dx: Complex<T>,
    pub dy: Complex<T>,
    pub dxy: Complex<T>,
    pub dxx: Complex<T>,
    pub dyy: Complex<T>,
}

fn cpow<T: Real>(z: Complex<T>, k: u32) -> Complex<T> {
    let mut acc = Complex::new(T::one(), T::zero());
    for _ in 0..k {
        acc = acc * z;
    }
    acc
}

/// Evaluates `F` and its partials exactly.
pub fn eval_f<T: Real>(spec: &FSpec<T>, x: Complex<T>, y: Complex<T>) -> FValue<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = FValue {
        value: zero,
        dx: zero,
        dy: zero,
        dxy: zero,
        dxx: zero,
        dyy: zero,
    };
    for t in &spec.monomials {
        let c = Complex::new(t.coeff, T::zero());
        let (m, n) = (t.m, t.n);
        let mf = T::lit(m as f64);
        let nf = T::lit(n as f64);
        out.value = out.value + c * cpow(x, m) * cpow(y, n);
        if m > 0 {
            out.dx = out.dx + c * mf * cpow(x, m - 1) * cpow(y, n);
        }
        if n > 0 {
            out.dy = out.dy + c * nf * cpow(x, m) * cpow(y, n - 1);
        }
        if m > 0 && n > 0 {
            out.dxy = out.dxy + c * mf * nf * cpow(x, m - 1) * cpow(y, n - 1);
        }
        if m > 1 {
            out.dxx = out.dxx + c * mf * T::lit((m - 1) as f64) * cpow(x, m - 2) * cpow(y, n);
        }
        if n > 1 {
            out.dyy = out.dyy + c * nf * T::lit((n - 1) as f64) * cpow(x, m) * cpow(y, n - 2);
        }
    }
    out
}

/// Parameters of the driven model.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenModel<T> {
    pub spec: FSpec<T>,
    pub g_prime: T,
    pub f_drive: T,
    pub delta0: T,
    pub omega_b: T,
}

impl<T: Real> DrivenModel<T> {
    /// Driven-model parameters of a [`CouplingKind::Generalized`] config,
    /// with `Δ₀ = ω_a − ω_d`.
    pub fn from_config(config: &SystemConfig<T>) -> Result<Self> {
        match &config.coupling {
            CouplingKind::Generalized {
                spec,
                f_drive,
                g_prime,
            } => Ok(DrivenModel {
                spec: spec.clone(),
                g_prime: *g_prime,
                f_drive: *f_drive,
                delta0: config.delta(),
                omega_b: config.omega_b(),
            }),
            other => Err(Error::UnsupportedModel(format!(
                "linearization needs generalized coupling, got `{}`",
                other.name()
            ))),
        }
    }

    /// Mean-field energy `⟨H⟩` at `(α, β)`.
    pub fn mean_field_energy(&self, alpha: Complex<T>, beta: Complex<T>) -> T {
        let two = T::lit(2.0);
        let fv = eval_f(&self.spec, alpha.conj(), alpha).value.re;
        self.delta0 * alpha.norm_sqr()
            + self.omega_b * beta.norm_sqr()
            + self.g_prime * fv * two * beta.re
            + self.f_drive * two * alpha.re
    }

    /// `(∂⟨H⟩/∂α*, ∂⟨H⟩/∂β*)`.
    pub fn stationarity(&self, alpha: Complex<T>, beta: Complex<T>) -> (Complex<T>, Complex<T>) {
        let fv = eval_f(&self.spec, alpha.conj(), alpha);
        let two_re_beta = T::lit(2.0) * beta.re;
        let ra = alpha * self.delta0 + fv.dx * (self.g_prime * two_re_beta)
            + Complex::new(self.f_drive, T::zero());
        let rb = beta * self.omega_b + fv.value * self.g_prime;
        (ra, rb)
    }

    pub fn residual(&self, alpha: Complex<T>, beta: Complex<T>) -> T {
        let (ra, rb) = self.stationarity(alpha, beta);
        ra.norm().max(rb.norm())
    }

    fn beta_of(&self, alpha: Complex<T>) -> Complex<T> {
        -eval_f(&self.spec, alpha.conj(), alpha).value * (self.g_prime / self.omega_b)
    }

    /// Reduced scalar equation `G(α) = 0` for real `α`, as polynomial
    /// coefficients in ascending order.
    fn reduced_polynomial(&self, g_prime: T) -> Vec<T> {
        let (p, q) = self.spec.diagonal_polynomials();
        let k = T::lit(-2.0) * g_prime * g_prime / self.omega_b;
        let mut g = vec![T::zero(); (p.len() + q.len()).max(2)];
        for (i, &pi) in p.iter().enumerate() {
            for (j, &qj) in q.iter().enumerate() {
                g[i + j] = g[i + j] + k * pi * qj;
            }
        }
        g[0] = g[0] + self.f_drive;
        g[1] = g[1] + self.delta0;
        while g.len() > 1 && *g.last().unwrap() == T::zero() {
            g.pop();
        }
        g
    }
}

fn poly_eval<T: Real>(c: &[T], x: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &a| acc * x + a)
}

fn poly_derivative<T: Real>(c: &[T]) -> Vec<T> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &a)| a * T::lit(i as f64))
        .collect()
}

fn bisect<T: Real>(c: &[T], mut lo: T, mut hi: T) -> T {
    let mut flo = poly_eval(c, lo);
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = poly_eval(c, mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == (flo < T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::lit(0.5)
}

/// All real roots of a polynomial (ascending coefficients), isolated on the
/// monotone intervals between the real roots of its derivative.
pub(crate) fn real_roots<T: Real>(c: &[T]) -> Vec<T> {
    let mut c = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == T::zero() {
        c.pop();
    }
    match c.len() {
        0 | 1 => return Vec::new(),
        2 => return vec![-c[0] / c[1]],
        _ => {}
    }
    let lead = *c.last().unwrap();
    let bound = T::one()
        + c[..c.len() - 1]
            .iter()
            .fold(T::zero(), |acc, &a| acc.max((a / lead).abs()));
    let mut knots = vec![-bound];
    knots.extend(
        real_roots(&poly_derivative(&c))
            .into_iter()
            .filter(|x| x.abs() < bound),
    );
    knots.push(bound);
    let scale = c.iter().fold(T::zero(), |acc, &a| acc.max(a.abs()));
    let mut roots: Vec<T> = Vec::new();
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (poly_eval(&c, lo), poly_eval(&c, hi));
        if flo == T::zero() {
            roots.push(lo);
        } else if (flo < T::zero()) != (fhi < T::zero()) && fhi != T::zero() {
            roots.push(bisect(&c, lo, hi));
        } else if flo.abs() <= T::epsilon() * T::lit(1e3) * scale {
            // touching root at a critical point
            roots.push(lo);
        }
    }
    if poly_eval(&c, bound) == T::zero() {
        roots.push(bound);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * T::lit(16.0) * (T::one() + b.abs()));
    roots
}

/// A real stationary point of the mean-field energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRoot<T> {
    pub alpha: T,
    pub beta: T,
    pub residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumMethod {
    FixedPoint,
    Continuation,
}

/// Selected equilibrium plus every real root of the self-consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T> {
    pub alpha: Complex<T>,
    pub beta: Complex<T>,
    pub residual: T,
    pub method: EquilibriumMethod,
    pub roots: Vec<RealRoot<T>>,
    /// Index into `roots` of the root connected to `g′ = 0`, when found.
    pub default_root: Option<usize>,
}

impl<T> Equilibrium<T> {
    pub fn is_multistable(&self) -> bool {
        self.roots.len() > 1
    }
}

const MAX_ITERATIONS: usize = 20_000;
const CONTINUATION_STEPS: usize = 64;

fn damped_fixed_point<T: Real>(model: &DrivenModel<T>, tol: T) -> Option<(Complex<T>, Complex<T>)> {
    let lambda = T::lit(0.5);
    let mut alpha = Complex::new(-model.f_drive / model.delta0, T::zero());
    let mut beta = model.beta_of(alpha);
    for _ in 0..MAX_ITERATIONS {
        beta = model.beta_of(alpha);
        let fv = eval_f(&model.spec, alpha.conj(), alpha);
        let target = -(Complex::new(model.f_drive, T::zero())
            + fv.dx * (model.g_prime * T::lit(2.0) * beta.re))
            / model.delta0;
        let next = alpha * (T::one() - lambda) + target * lambda;
        if !next.re.is_finite() || !next.im.is_finite() {
            return None;
        }
        let step = (next - alpha).norm();
        alpha = next;
        if step <= tol * T::lit(1e-3) * (T::one() + alpha.norm()) {
            beta = model.beta_of(alpha);
            if model.residual(alpha, beta) < tol {
                return Some((alpha, beta));
            }
        }
    }
    let _ = beta;
    None
}

/// Follows the real root from `g′ = 0` (where `α = −f/Δ₀`) to the target
/// coupling with Newton corrections.
fn continuation<T: Real>(model: &DrivenModel<T>, tol: T) -> Option<T> {
    let mut alpha = -model.f_drive / model.delta0;
    for k in 1..=CONTINUATION_STEPS {
        let gp = model.g_prime * T::lit(k as f64) / T::lit(CONTINUATION_STEPS as f64);
        let poly = model.reduced_polynomial(gp);
        let dpoly = poly_derivative(&poly);
        let mut converged = false;
        for _ in 0..100 {
            let g = poly_eval(&poly, alpha);
            let dg = poly_eval(&dpoly, alpha);
            if dg == T::zero() || !dg.is_finite() {
                return None;
            }
            let step = g / dg;
            alpha = alpha - step;
            if step.abs() <= T::epsilon() * T::lit(8.0) * (T::one() + alpha.abs()) {
                converged = true;
                break;
            }
        }
        if !converged && poly_eval(&poly, alpha).abs() > tol {
            return None;
        }
    }
    Some(alpha)
}

/// Solves the mean-field self-consistency for `(α, β)`.
///
/// Tries damped fixed-point iteration and, independently, continuation of
/// the real root from `g′ = 0`; the continuation root is preferred when both
/// succeed. All real roots of the reduced scalar equation are reported.
pub fn equilibrium_displacements<T: Real>(model: &DrivenModel<T>, tol: T) -> Result<Equilibrium<T>> {
    if model.delta0 == T::zero() {
        return Err(Error::Precondition("Δ₀ must be non-zero".into()));
    }
    if !(model.omega_b > T::zero()) {
        return Err(Error::Precondition("ω_b must be positive".into()));
    }
    model.spec.check_hermitian()?;

    let roots: Vec<RealRoot<T>> = real_roots(&model.reduced_polynomial(model.g_prime))
        .into_iter()
        .map(|a| {
            let ca = Complex::new(a, T::zero());
            let beta = model.beta_of(ca);
            RealRoot {
                alpha: a,
                beta: beta.re,
                residual: model.residual(ca, beta),
            }
        })
        .collect();
    let nearest = |a: T| -> Option<usize> {
        roots
            .iter()
            .enumerate()
            .min_by(|x, y| {
                (x.1.alpha - a)
                    .abs()
                    .partial_cmp(&(y.1.alpha - a).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
    };

    if let Some(a) = continuation(model, tol) {
        let alpha = Complex::new(a, T::zero());
        let beta = model.beta_of(alpha);
        let residual = model.residual(alpha, beta);
        if residual < tol {
            return Ok(Equilibrium {
                alpha,
                beta,
                residual,
                method: EquilibriumMethod::Continuation,
                default_root: nearest(a),
                roots,
            });
        }
    }
    if let Some((alpha, beta)) = damped_fixed_point(model, tol) {
        return Ok(Equilibrium {
            alpha,
            beta,
            residual: model.residual(alpha, beta),
            method: EquilibriumMethod::FixedPoint,
            default_root: if alpha.im == T::zero() { nearest(alpha.re) } else { None },
            roots,
        });
    }
    Err(Error::Multistability {
        iterations: MAX_ITERATIONS,
        roots: roots.iter().map(|r| r.alpha.to_f64_lossy()).collect(),
    })
}

/// `(Δ_eff, g_eff)` of the fluctuation Hamiltonian around `(α, β)`.
pub fn linearized_params<T: Real>(
    spec: &FSpec<T>,
    g_prime: T,
    alpha: Complex<T>,
    beta: Complex<T>,
    delta0: T,
) -> (T, Complex<T>) {
    let fv = eval_f(spec, alpha.conj(), alpha);
    let delta_eff = delta0 + g_prime * T::lit(2.0) * beta.re * fv.dxy.re;
    (delta_eff, fv.dx * g_prime)
}

/// Linearized two-mode model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel<T> {
    pub alpha: Complex<T>,
    pub beta: Complex<T>,
    pub delta_eff: T,
    /// Complex in general; its phase can be absorbed into mode `a`.
    pub g_eff: Complex<T>,
    pub residual: T,
    pub equilibrium: Equilibrium<T>,
}

pub fn linearize<T: Real>(model: &DrivenModel<T>, tol: T) -> Result<LinearizedModel<T>> {
    let eq = equilibrium_displacements(model, tol)?;
    let (delta_eff, g_eff) = linearized_params(&model.spec, model.g_prime, eq.alpha, eq.beta, model.delta0);
    Ok(LinearizedModel {
        alpha: eq.alpha,
        beta: eq.beta,
        delta_eff,
        g_eff,
        residual: eq.residual,
        equilibrium: eq,
    })
}

/// Replaces a generalized coupling with the equivalent position-position
/// model around its default equilibrium. Other couplings pass through.
pub fn reduce_to_full<T: Real>(config: &SystemConfig<T>, tol: T) -> Result<(SystemConfig<T>, Option<LinearizedModel<T>>)> {
    if !matches!(config.coupling, CouplingKind::Generalized { .. }) {
        return Ok((config.clone(), None));
    }
    let model = DrivenModel::from_config(config)?;
    let lin = linearize(&model, tol)?;
    let mut out = config.clone();
    out.coupling = CouplingKind::Full;
    out.drive.amplitude = lin.g_eff.norm();
    out.set_delta(lin.delta_eff);
    Ok((out, Some(lin)))
}

/// Finite-difference check of the quadratic expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionResidual<T> {
    /// Max-norm of the numerical gradient of `⟨H⟩`; zero at equilibrium.
    pub linear: T,
    /// Max-norm of the difference between the numerical Hessian and the one
    /// predicted by `(Δ_eff, g_eff, ω_b)`.
    pub quadratic: T,
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Expands `⟨H⟩` around `(α, β)` in the real coordinates
/// `(Re δα, Im δα, Re δβ, Im δβ)` with Richardson-refined central
/// differences and compares against the position-position prediction.
pub fn expansion_residual<T: Real>(
    model: &DrivenModel<T>,
    alpha: Complex<T>,
    beta: Complex<T>,
    step: T,
) -> ExpansionResidual<T> {
    let energy = |u: [T; 4]| -> T {
        model.mean_field_energy(alpha + Complex::new(u[0], u[1]), beta + Complex::new(u[2], u[3]))
    };
    let unit = |i: usize, h: T| -> [T; 4] {
        let mut u = [T::zero(); 4];
        u[i] = h;
        u
    };
    let add = |a: [T; 4], b: [T; 4]| -> [T; 4] { [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]] };
    let neg = |a: [T; 4]| -> [T; 4] { [-a[0], -a[1], -a[2], -a[3]] };
    let zero = [T::zero(); 4];
    let e0 = energy(zero);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let three = T::lit(3.0);

    let grad = |i: usize, h: T| (energy(unit(i, h)) - energy(unit(i, -h))) / (two * h);
    let hess = |i: usize, j: usize, h: T| -> T {
        if i == j {
            (energy(unit(i, h)) - two * e0 + energy(unit(i, -h))) / (h * h)
        } else {
            let (ei, ej) = (unit(i, h), unit(j, h));
            (energy(add(ei, ej)) - energy(add(ei, neg(ej))) - energy(add(neg(ei), ej))
                + energy(neg(add(ei, ej))))
                / (four * h * h)
        }
    };
    let richardson = |d: &dyn Fn(T) -> T| (four * d(step / two) - d(step)) / three;

    let (delta_eff, g_eff) = linearized_params(&model.spec, model.g_prime, alpha, beta, model.delta0);
    let mut predicted = [[T::zero(); 4]; 4];
    predicted[0][0] = two * delta_eff;
    predicted[1][1] = two * delta_eff;
    predicted[2][2] = two * model.omega_b;
    predicted[3][3] = two * model.omega_b;
    predicted[0][2] = four * g_eff.re;
    predicted[2][0] = four * g_eff.re;
    predicted[1][2] = four * g_eff.im;
    predicted[2][1] = four * g_eff.im;

    let mut linear = T::zero();
    let mut quadratic = T::zero();
    for i in 0..4 {
        linear = linear.max(richardson(&|h| grad(i, h)).abs());
        for j in 0..4 {
            let num = richardson(&|h| hess(i, j, h));
            quadratic = quadratic.max((num - predicted[i][j]).abs());
        }
    }
    ExpansionResidual { linear, quadratic }
}
