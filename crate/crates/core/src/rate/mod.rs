//! Closed second-moment (rate) equations of the beam-splitter model.
//!
//! The moments `n_a = ⟨a†a⟩`, `n_b = ⟨b†b⟩` and `Σ = ⟨a†b⟩` obey
//!
//! ```text
//! dn_a/dt = γ_a(n̄_a − n_a) − iΩ(Σ − Σ*)
//! dn_b/dt = γ_b(n̄_b − n_b) + iΩ(Σ − Σ*)
//! dΣ/dt   = −ζΣ + iΩ(n_b − n_a),     ζ = (γ_a + γ_b)/2 + i(ω_b − Δ)
//! ```
//!
//! The coherent exchange terms in the two population equations are exact
//! negatives, so `n_a + n_b` is conserved when both decay rates vanish.
//! Written as a real system in `(n_a, n_b, Re Σ, Im Σ)` the equations are
//! linear, `dx/dt = A x + c`.

mod langevin;

pub use langevin::{langevin_sample, LangevinEstimate};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::model::{CouplingKind, SystemConfig};
use crate::ode::{self, Tolerances};
use crate::scalar::Real;

/// `(⟨a†a⟩, ⟨b†b⟩, ⟨a†b⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentState<T> {
    pub n_a: T,
    pub n_b: T,
    pub sigma: Complex<T>,
}

impl<T: Real> MomentState<T> {
    pub fn new(n_a: T, n_b: T, sigma: Complex<T>) -> Self {
        MomentState { n_a, n_b, sigma }
    }

    /// Uncoupled thermal state of both baths.
    pub fn thermal(config: &SystemConfig<T>) -> Self {
        MomentState::new(config.nbar_a(), config.nbar_b(), Complex::new(T::zero(), T::zero()))
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.n_a, self.n_b, self.sigma.re, self.sigma.im]
    }

    pub fn from_slice(x: &[T]) -> Self {
        MomentState::new(x[0], x[1], Complex::new(x[2], x[3]))
    }

    /// Checks the physical-state conditions: non-negative populations (down
    /// to a `−1e-12` floor) and the Cauchy–Schwarz bound on `|Σ|²`.
    pub fn is_physical(&self, tol: T) -> bool {
        let floor = T::lit(-1e-12);
        let bound = self.n_a * self.n_b + self.n_a.min(self.n_b) + T::one();
        self.n_a >= floor && self.n_b >= floor && self.sigma.norm_sqr() <= bound + tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(&b)
            .map(|(x, y)| (*x - *y).abs())
            .fold(T::zero(), T::max)
    }
}

/// Complex rates entering the Langevin and rate equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCoefficients<T> {
    /// `Γ_a = γ_a/2 + iΔ`
    pub gamma_a_complex: Complex<T>,
    /// `Γ_b = γ_b/2 + iω_b`
    pub gamma_b_complex: Complex<T>,
    /// `ζ = (γ_a + γ_b)/2 + i(ω_b − Δ)`
    pub zeta: Complex<T>,
}

impl<T: Real> RateCoefficients<T> {
    pub fn from_config(config: &SystemConfig<T>) -> Self {
        let half = T::lit(0.5);
        let delta = config.delta();
        let wb = config.omega_b();
        let gamma_a_complex = Complex::new(half * config.gamma_a(), delta);
        let gamma_b_complex = Complex::new(half * config.gamma_b(), wb);
        RateCoefficients {
            gamma_a_complex,
            gamma_b_complex,
            zeta: Complex::new(half * (config.gamma_a() + config.gamma_b()), wb - delta),
        }
    }
}

/// Time-ordered moment samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<MomentState<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> Option<&MomentState<T>> {
        self.states.last()
    }
}

fn require_beam_splitter<T>(config: &SystemConfig<T>) -> Result<()> {
    match config.coupling {
        CouplingKind::BeamSplitter => Ok(()),
        ref other => Err(Error::UnsupportedModel(format!(
            "moment equations close only for beam-splitter coupling, got `{}`; use the Lindblad oracle",
            other.name()
        ))),
    }
}

/// The linear system `dx/dt = A x + c` in `(n_a, n_b, Re Σ, Im Σ)`.
pub fn linear_system<T: Real>(config: &SystemConfig<T>) -> Result<(SquareMatrix<T>, [T; 4])> {
    require_beam_splitter(config)?;
    let z = T::zero();
    let two = T::lit(2.0);
    let ga = config.gamma_a();
    let gb = config.gamma_b();
    let om = config.amplitude();
    let zeta = RateCoefficients::from_config(config).zeta;
    let (kappa, theta) = (zeta.re, zeta.im);
    let a = SquareMatrix::from_rows(&[
        &[-ga, z, z, two * om],
        &[z, -gb, z, -two * om],
        &[z, z, -kappa, theta],
        &[-om, om, -theta, -kappa],
    ]);
    Ok((a, [ga * config.nbar_a(), gb * config.nbar_b(), z, z]))
}

/// Time derivative of the moments.
pub fn moment_derivatives<T: Real>(
    state: &MomentState<T>,
    config: &SystemConfig<T>,
) -> Result<MomentState<T>> {
    require_beam_splitter(config)?;
    let i = Complex::new(T::zero(), T::one());
    let om = config.amplitude();
    let zeta = RateCoefficients::from_config(config).zeta;
    let exchange = -(i * om * (state.sigma - state.sigma.conj())).re;
    Ok(MomentState {
        n_a: config.gamma_a() * (config.nbar_a() - state.n_a) + exchange,
        n_b: config.gamma_b() * (config.nbar_b() - state.n_b) - exchange,
        sigma: -zeta * state.sigma + i * om * (state.n_b - state.n_a),
    })
}

/// Steady state of the rate equations and the 1-norm condition number of
/// the linear system that produced it.
pub fn steady_moments_with_condition<T: Real>(
    config: &SystemConfig<T>,
) -> Result<(MomentState<T>, T)> {
    let (a, c) = linear_system(config)?;
    if config.gamma_a() + config.gamma_b() <= T::zero() {
        return Err(Error::DegenerateConfig(
            "both decay rates are zero; the rate equations have no unique steady state".into(),
        ));
    }
    let lu = a.lu().ok_or_else(|| {
        Error::DegenerateConfig(
            "singular rate-equation system (an undamped mode is decoupled)".into(),
        )
    })?;
    let rhs: Vec<T> = c.iter().map(|&x| -x).collect();
    let x = lu.solve(&rhs);
    let cond = a.condition_1().unwrap_or(T::infinity());
    Ok((MomentState::from_slice(&x), cond))
}

/// Steady state of the rate equations by direct linear solve.
pub fn steady_moments<T: Real>(config: &SystemConfig<T>) -> Result<MomentState<T>> {
    steady_moments_with_condition(config).map(|(s, _)| s)
}

/// Exact moments at time `t` from the matrix exponential of the augmented
/// affine system.
pub fn exact_moments<T: Real>(
    initial: &MomentState<T>,
    config: &SystemConfig<T>,
    t: T,
) -> Result<MomentState<T>> {
    let (a, c) = linear_system(config)?;
    let mut aug = SquareMatrix::zeros(5);
    for i in 0..4 {
        for j in 0..4 {
            aug[(i, j)] = a[(i, j)] * t;
        }
        aug[(i, 4)] = c[i] * t;
    }
    let e = aug.expm();
    let x0 = initial.to_array();
    let v = e.mul_vec(&[x0[0], x0[1], x0[2], x0[3], T::one()]);
    Ok(MomentState::from_slice(&v))
}

struct MomentOde<T> {
    a: SquareMatrix<T>,
    c: [T; 4],
}

impl<T: Real> ode::OdeSystem<T> for MomentOde<T> {
    fn dim(&self) -> usize {
        4
    }
    fn rhs(&self, _t: T, y: &[T], dy: &mut [T]) {
        for (i, d) in dy.iter_mut().enumerate() {
            let mut acc = self.c[i];
            for j in 0..4 {
                acc = acc + self.a[(i, j)] * y[j];
            }
            *d = acc;
        }
    }
}

pub const DEFAULT_OUTPUT_POINTS: usize = 201;

/// Integrates the rate equations to `t_final`, sampling
/// [`DEFAULT_OUTPUT_POINTS`] uniformly spaced times.
pub fn evolve_moments<T: Real>(
    initial: &MomentState<T>,
    config: &SystemConfig<T>,
    t_final: T,
    rel_tol: T,
) -> Result<Trajectory<T>> {
    if !(t_final > T::zero()) {
        return Err(Error::Precondition(format!("t_final must be positive, got {t_final}")));
    }
    let n = DEFAULT_OUTPUT_POINTS;
    let times: Vec<T> = (0..n)
        .map(|k| t_final * T::lit(k as f64) / T::lit((n - 1) as f64))
        .collect();
    evolve_moments_at(initial, config, &times, rel_tol)
}

/// Integrates the rate equations and samples at the given ascending times
/// (the first of which is the initial time).
pub fn evolve_moments_at<T: Real>(
    initial: &MomentState<T>,
    config: &SystemConfig<T>,
    times: &[T],
    rel_tol: T,
) -> Result<Trajectory<T>> {
    if !(rel_tol > T::lit(1e-14) && rel_tol < T::lit(1e-2)) {
        return Err(Error::Precondition(format!(
            "rel_tol must lie in (1e-14, 1e-2), got {rel_tol}"
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("output times must be strictly increasing".into()));
    }
    let Some(&t0) = times.first() else {
        return Ok(Trajectory {
            times: Vec::new(),
            states: Vec::new(),
        });
    };
    let (a, c) = linear_system(config)?;
    let x0 = initial.to_array();
    let scale = x0
        .iter()
        .map(|v| v.abs())
        .chain([config.nbar_a(), config.nbar_b(), T::one()])
        .fold(T::zero(), T::max);
    // local tolerances two decades below the requested global accuracy
    let local = (rel_tol * T::lit(0.01)).max(T::epsilon() * T::lit(4.0));
    let tol = Tolerances::new(local, local * scale);
    let sys = MomentOde { a, c };
    let sol = ode::integrate(&sys, t0, &x0, times, tol)?;
    Ok(Trajectory {
        times: times.to_vec(),
        states: sol.iter().map(|y| MomentState::from_slice(y)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> SystemConfig<f64> {
        SystemConfig::beam_splitter(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0).unwrap()
    }

    fn zero() -> Complex<f64> {
        Complex::new(0.0, 0.0)
    }

    #[test]
    fn thermal_state_is_fixed_point_without_drive() {
        let cfg = SystemConfig::beam_splitter(0.3, 1.0, 0.0, 1.0, 0.2, 0.7, 3.0).unwrap();
        let d = moment_derivatives(&MomentState::thermal(&cfg), &cfg).unwrap();
        assert_eq!(d, MomentState::new(0.0, 0.0, zero()));
    }

    #[test]
    fn exchange_conserves_total_without_damping() {
        let cfg = SystemConfig::<f64>::beam_splitter(0.3, 1.0, 2.5, 0.0, 0.0, 0.7, 3.0).unwrap();
        let s = MomentState::new(2.0, 5.0, Complex::new(0.3, -1.1));
        let d = moment_derivatives(&s, &cfg).unwrap();
        assert!((d.n_a + d.n_b).abs() < 1e-15);
        assert!(d.n_a != 0.0);
    }

    #[test]
    fn reference_steady_state() {
        let s = steady_moments(&reference()).unwrap();
        // ξ = 101 / (1.0201 · 100.0025)
        let xi = 101.0 / (1.0201 * 100.0025);
        assert!((s.n_b - 100.0 * (1.0 - xi)).abs() < 1e-12);
        assert!((s.n_b - 0.9925).abs() < 1e-4);
        // n_a follows from the sum rule γ_a(n̄_a − n_a) + γ_b(n̄_b − n_b) = 0
        assert!((s.n_a - 0.01 * (100.0 - s.n_b)).abs() < 1e-12);
        assert!(s.is_physical(1e-8));
    }

    #[test]
    fn undriven_steady_state_is_thermal() {
        let cfg = SystemConfig::<f64>::beam_splitter(0.3, 1.0, 0.0, 1.0, 0.2, 0.7, 3.0).unwrap();
        let s = steady_moments(&cfg).unwrap();
        assert!(s.max_abs_diff(&MomentState::thermal(&cfg)) < 1e-14);
    }

    #[test]
    fn equal_baths_stay_thermal() {
        let cfg = SystemConfig::<f64>::beam_splitter(-0.4, 1.3, 2.0, 1.0, 0.2, 4.0, 4.0).unwrap();
        let s = steady_moments(&cfg).unwrap();
        assert!(s.max_abs_diff(&MomentState::new(4.0, 4.0, zero())) < 1e-12);
    }

    #[test]
    fn zero_damping_is_degenerate() {
        let cfg = SystemConfig::<f64>::beam_splitter(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(steady_moments(&cfg), Err(Error::DegenerateConfig(_))));
        let cfg = SystemConfig::<f64>::beam_splitter(1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(steady_moments(&cfg), Err(Error::DegenerateConfig(_))));
    }

    #[test]
    fn full_coupling_is_unsupported() {
        let cfg = SystemConfig::full(1.0, 1.0, 0.1, 1.0, 0.01, 0.0, 1.0).unwrap();
        let s = MomentState::thermal(&cfg);
        assert!(matches!(moment_derivatives(&s, &cfg), Err(Error::UnsupportedModel(_))));
        assert!(matches!(steady_moments(&cfg), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn decoupled_relaxation_matches_exponential() {
        let cfg = SystemConfig::<f64>::beam_splitter(0.4, 1.0, 0.0, 1.0, 0.3, 0.5, 2.0).unwrap();
        let init = MomentState::new(5.0, 7.0, zero());
        let rel_tol = 1e-8;
        let traj = evolve_moments(&init, &cfg, 6.0, rel_tol).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let na = 0.5 + 4.5 * (-t).exp();
            let nb = 2.0 + 5.0 * (-0.3 * t).exp();
            assert!((s.n_a - na).abs() <= rel_tol * na, "t={t}");
            assert!((s.n_b - nb).abs() <= rel_tol * nb, "t={t}");
        }
    }

    #[test]
    fn steady_state_is_stationary_under_evolution() {
        let cfg = reference();
        let ss = steady_moments(&cfg).unwrap();
        let traj = evolve_moments(&ss, &cfg, 50.0, 1e-9).unwrap();
        for s in &traj.states {
            assert!(s.max_abs_diff(&ss) <= 1e-9 * 100.0, "{}", s.max_abs_diff(&ss));
        }
    }

    #[test]
    fn long_evolution_reaches_steady_state() {
        let cfg = reference();
        let ss = steady_moments(&cfg).unwrap();
        let traj = evolve_moments(&MomentState::thermal(&cfg), &cfg, 20.0 / 0.01, 1e-9).unwrap();
        let last = traj.last().unwrap();
        assert!((last.n_b - ss.n_b).abs() < 1e-6, "{} vs {}", last.n_b, ss.n_b);
    }

    #[test]
    fn integrator_matches_matrix_exponential() {
        let cfg = SystemConfig::<f64>::beam_splitter(0.7, 1.0, 1.3, 0.8, 0.05, 0.2, 9.0).unwrap();
        let init = MomentState::new(1.0, 9.0, Complex::new(0.2, -0.4));
        let rel_tol = 1e-7;
        let traj = evolve_moments(&init, &cfg, 15.0, rel_tol).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let exact = exact_moments(&init, &cfg, *t).unwrap();
            assert!(s.max_abs_diff(&exact) <= rel_tol * 9.0, "t={t}");
        }
    }

    #[test]
    fn evolve_rejects_bad_tolerance() {
        let cfg = reference();
        let s = MomentState::thermal(&cfg);
        assert!(evolve_moments(&s, &cfg, 1.0, 0.1).is_err());
        assert!(evolve_moments(&s, &cfg, 1.0, 1e-15).is_err());
        assert!(evolve_moments(&s, &cfg, 0.0, 1e-6).is_err());
    }

    #[test]
    fn zeta_is_conjugate_combination() {
        let c = RateCoefficients::from_config(&reference());
        let sum = c.gamma_a_complex.conj() + c.gamma_b_complex;
        assert!((sum - c.zeta).norm() < 1e-12);
    }

    #[test]
    fn f32_steady_state() {
        let cfg = SystemConfig::<f32>::beam_splitter(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0).unwrap();
        let s = steady_moments(&cfg).unwrap();
        assert!((s.n_b - 0.9925).abs() < 1e-3);
    }

    fn config_strategy() -> impl Strategy<Value = SystemConfig<f64>> {
        (
            -5.0f64..5.0,
            0.1f64..5.0,
            0.0f64..10.0,
            0.01f64..2.0,
            0.0f64..1.0,
            0.0f64..5.0,
            0.0f64..50.0,
        )
            .prop_map(|(d, wb, om, ga, gb, na, nb)| {
                SystemConfig::<f64>::beam_splitter(d, wb, om, ga, gb, na, nb).unwrap()
            })
    }

    proptest! {
        #[test]
        fn steady_state_is_a_fixed_point(cfg in config_strategy()) {
            let s = steady_moments(&cfg).unwrap();
            let d = moment_derivatives(&s, &cfg).unwrap();
            let scale = 1.0 + cfg.nbar_a().max(cfg.nbar_b());
            prop_assert!(d.n_a.abs() < 1e-10 * scale);
            prop_assert!(d.n_b.abs() < 1e-10 * scale);
            prop_assert!(d.sigma.norm() < 1e-10 * scale);
            prop_assert!(s.is_physical(1e-8));
        }

        #[test]
        fn steady_state_scales_linearly(cfg in config_strategy(), k in 0.1f64..10.0) {
            let s = steady_moments(&cfg).unwrap();
            let mut scaled = cfg.clone();
            scaled.mode_a.bath_occupation *= k;
            scaled.mode_b.bath_occupation *= k;
            let t = steady_moments(&scaled).unwrap();
            let tol = 1e-10 * k * (1.0 + cfg.nbar_a().max(cfg.nbar_b()));
            prop_assert!((t.n_a - k * s.n_a).abs() < tol);
            prop_assert!((t.n_b - k * s.n_b).abs() < tol);
            prop_assert!((t.sigma - s.sigma * k).norm() < tol);
        }

        #[test]
        fn only_detuning_difference_matters(cfg in config_strategy(), shift in 0.0f64..20.0) {
            let s = steady_moments(&cfg).unwrap();
            let t = steady_moments(&cfg.shifted(shift)).unwrap();
            prop_assert!(s.max_abs_diff(&t) < 1e-9 * (1.0 + cfg.nbar_b()));
        }

        #[test]
        fn exchange_terms_are_antisymmetric(cfg in config_strategy(), na in 0.0f64..10.0, nb in 0.0f64..10.0, re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let s = MomentState::new(na, nb, Complex::new(re, im));
            let d = moment_derivatives(&s, &cfg).unwrap();
            let ex_a = d.n_a - cfg.gamma_a() * (cfg.nbar_a() - na);
            let ex_b = d.n_b - cfg.gamma_b() * (cfg.nbar_b() - nb);
            prop_assert!((ex_a + ex_b).abs() < 1e-12 * (1.0 + ex_a.abs()));
        }
    }
}
