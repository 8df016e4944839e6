//! Adaptive Dormand–Prince 5(4) integrator with 4th-order dense output.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem<T> {
    fn dim(&self) -> usize;
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]);
}

impl<T, F> OdeSystem<T> for (usize, F)
where
    F: Fn(T, &[T], &mut [T]),
{
    fn dim(&self) -> usize {
        self.0
    }
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) {
        (self.1)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<T>,
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Tolerances<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Tolerances {
            rtol,
            atol,
            h0: None,
            h_max: None,
            max_steps: 10_000_000,
        }
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Stateful stepper. After each accepted step the interval
/// `[t_prev, t]` can be sampled with [`Dopri5::dense`].
pub struct Dopri5<'a, T, S: ?Sized> {
    sys: &'a S,
    tol: Tolerances<T>,
    t: T,
    t_prev: T,
    h: T,
    y: Vec<T>,
    k: [Vec<T>; 7],
    cont: [Vec<T>; 5],
    scratch: Vec<T>,
    steps: usize,
    rejected: usize,
}

impl<'a, T: Real, S: OdeSystem<T> + ?Sized> Dopri5<'a, T, S> {
    pub fn new(sys: &'a S, t0: T, y0: &[T], tol: Tolerances<T>) -> Self {
        let n = sys.dim();
        assert_eq!(y0.len(), n, "initial state has wrong dimension");
        let mut k: [Vec<T>; 7] = std::array::from_fn(|_| vec![T::zero(); n]);
        sys.rhs(t0, y0, &mut k[0]);
        let h = tol.h0.unwrap_or_else(|| initial_step(y0, &k[0], &tol));
        Dopri5 {
            sys,
            tol,
            t: t0,
            t_prev: t0,
            h,
            y: y0.to_vec(),
            k,
            cont: std::array::from_fn(|_| y0.to_vec()),
            scratch: vec![T::zero(); n],
            steps: 0,
            rejected: 0,
        }
    }

    #[inline]
    pub fn t(&self) -> T {
        self.t
    }

    #[inline]
    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Derivative at the current point (FSAL stage).
    #[inline]
    pub fn dy(&self) -> &[T] {
        &self.k[0]
    }

    #[inline]
    pub fn steps(&self) -> (usize, usize) {
        (self.steps, self.rejected)
    }

    /// Takes one accepted step, never stepping past `t_limit`.
    pub fn step(&mut self, t_limit: T) -> Result<()> {
        let n = self.y.len();
        let lit = T::lit;
        loop {
            if self.steps + self.rejected >= self.tol.max_steps {
                return Err(Error::Integration {
                    residual: f64::NAN,
                    reason: format!("exceeded {} steps", self.tol.max_steps),
                });
            }
            let mut h = self.h;
            if let Some(hm) = self.tol.h_max {
                h = h.min(hm);
            }
            let remaining = t_limit - self.t;
            if h >= remaining {
                h = remaining;
            }
            let h_floor = T::epsilon() * lit(64.0) * self.t.abs().max(T::one());
            if h < h_floor && remaining > h_floor {
                return Err(Error::Stiffness {
                    t: self.t.to_f64_lossy(),
                    hint: format!(
                        "step size {} underflowed; reduce the coupling-time product (e.g. smaller amplitude·dt) or loosen tolerances",
                        h
                    ),
                });
            }
            let t = self.t;
            let y = &self.y;
            let (k0, rest) = self.k.split_first_mut().unwrap();
            let [k1, k2, k3, k4, k5, k6] = rest else { unreachable!() };
            let tmp = &mut self.scratch;

            for i in 0..n {
                tmp[i] = y[i] + h * lit(A21) * k0[i];
            }
            self.sys.rhs(t + lit(C2) * h, tmp, k1);
            for i in 0..n {
                tmp[i] = y[i] + h * (lit(A31) * k0[i] + lit(A32) * k1[i]);
            }
            self.sys.rhs(t + lit(C3) * h, tmp, k2);
            for i in 0..n {
                tmp[i] = y[i] + h * (lit(A41) * k0[i] + lit(A42) * k1[i] + lit(A43) * k2[i]);
            }
            self.sys.rhs(t + lit(C4) * h, tmp, k3);
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (lit(A51) * k0[i] + lit(A52) * k1[i] + lit(A53) * k2[i] + lit(A54) * k3[i]);
            }
            self.sys.rhs(t + lit(C5) * h, tmp, k4);
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (lit(A61) * k0[i]
                        + lit(A62) * k1[i]
                        + lit(A63) * k2[i]
                        + lit(A64) * k3[i]
                        + lit(A65) * k4[i]);
            }
            self.sys.rhs(t + h, tmp, k5);
            // 5th-order solution into tmp
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (lit(A71) * k0[i]
                        + lit(A73) * k2[i]
                        + lit(A74) * k3[i]
                        + lit(A75) * k4[i]
                        + lit(A76) * k5[i]);
            }
            self.sys.rhs(t + h, tmp, k6);

            let mut err = T::zero();
            for i in 0..n {
                let e = h
                    * (lit(E1) * k0[i]
                        + lit(E3) * k2[i]
                        + lit(E4) * k3[i]
                        + lit(E5) * k4[i]
                        + lit(E6) * k5[i]
                        + lit(E7) * k6[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(tmp[i].abs());
                let r = e / sc;
                err = err + r * r;
            }
            err = (err / lit(n.max(1) as f64)).sqrt();

            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * lit(0.1);
                continue;
            }
            let fac = if err == T::zero() {
                lit(10.0)
            } else {
                (lit(0.9) * err.powf(lit(-0.2))).max(lit(0.2)).min(lit(10.0))
            };
            if err <= T::one() {
                for i in 0..n {
                    let dy = tmp[i] - y[i];
                    let bspl = h * k0[i] - dy;
                    self.cont[0][i] = y[i];
                    self.cont[1][i] = dy;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = dy - h * k6[i] - bspl;
                    self.cont[4][i] = h
                        * (lit(D1) * k0[i]
                            + lit(D3) * k2[i]
                            + lit(D4) * k3[i]
                            + lit(D5) * k4[i]
                            + lit(D6) * k5[i]
                            + lit(D7) * k6[i]);
                }
                std::mem::swap(&mut self.y, &mut self.scratch);
                self.k.swap(0, 6);
                self.t_prev = self.t;
                self.t = if h == remaining { t_limit } else { t + h };
                self.h = h * fac;
                self.steps += 1;
                return Ok(());
            }
            self.rejected += 1;
            self.h = h * fac.min(T::one());
        }
    }

    /// Continuous extension on the last accepted step.
    pub fn dense(&self, t: T, out: &mut [T]) {
        let h = self.t - self.t_prev;
        if h == T::zero() {
            out.copy_from_slice(&self.y);
            return;
        }
        let s = (t - self.t_prev) / h;
        let s1 = T::one() - s;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * self.cont[4][i])));
        }
    }
}

fn initial_step<T: Real>(y: &[T], f: &[T], tol: &Tolerances<T>) -> T {
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for (&yi, &fi) in y.iter().zip(f) {
        let sc = tol.atol + tol.rtol * yi.abs();
        d0 = d0 + (yi / sc) * (yi / sc);
        d1 = d1 + (fi / sc) * (fi / sc);
    }
    let n = T::lit(y.len().max(1) as f64);
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    };
    match tol.h_max {
        Some(hm) => h.min(hm),
        None => h,
    }
}

/// Integrates from `t0` and samples the solution at each time in `t_eval`
/// (ascending, all `≥ t0`) using dense output.
pub fn integrate<T: Real, S: OdeSystem<T> + ?Sized>(
    sys: &S,
    t0: T,
    y0: &[T],
    t_eval: &[T],
    tol: Tolerances<T>,
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(t_eval.len());
    let Some(&t_end) = t_eval.last() else {
        return Ok(out);
    };
    let mut stepper = Dopri5::new(sys, t0, y0, tol);
    let mut buf = vec![T::zero(); y0.len()];
    let mut idx = 0;
    while idx < t_eval.len() && t_eval[idx] <= t0 {
        out.push(y0.to_vec());
        idx += 1;
    }
    while idx < t_eval.len() {
        stepper.step(t_end)?;
        while idx < t_eval.len() && t_eval[idx] <= stepper.t() {
            if t_eval[idx] == stepper.t() {
                out.push(stepper.y().to_vec());
            } else {
                stepper.dense(t_eval[idx], &mut buf);
                out.push(buf.clone());
            }
            idx += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let sys = (1usize, |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0]);
        let ts: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let sol = integrate(&sys, 0.0, &[3.0], &ts, Tolerances::new(1e-10, 1e-14)).unwrap();
        for (t, y) in ts.iter().zip(&sol) {
            let exact = 3.0 * (-2.0 * t).exp();
            assert!((y[0] - exact).abs() <= 1e-8 * exact.max(1e-6), "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let sys = (2usize, |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        });
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 * 0.137).collect();
        let sol = integrate(&sys, 0.0, &[1.0, 0.0], &ts, Tolerances::new(1e-9, 1e-12)).unwrap();
        for (t, y) in ts.iter().zip(&sol) {
            assert!((y[0] - t.cos()).abs() < 1e-7);
            assert!((y[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn f32_integration() {
        let sys = (1usize, |_t: f32, y: &[f32], dy: &mut [f32]| dy[0] = -y[0]);
        let sol = integrate(&sys, 0.0f32, &[1.0], &[1.0], Tolerances::new(1e-5, 1e-7)).unwrap();
        assert!((sol[0][0] - (-1.0f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn max_steps_is_reported() {
        let sys = (1usize, |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -1e6 * y[0]);
        let mut tol = Tolerances::new(1e-12, 1e-14);
        tol.max_steps = 50;
        assert!(integrate(&sys, 0.0, &[1.0], &[10.0], tol).is_err());
    }
}
