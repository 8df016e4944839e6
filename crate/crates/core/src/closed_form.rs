//! Analytic steady-state results for the two-mode cooling problem.

use crate::error::{Error, Result};
use crate::model::{CouplingKind, SystemConfig, UnitSystem};
use crate::rate;
use crate::scalar::Real;

/// Default threshold for `x ≪ y` regime flags.
pub const DEFAULT_REGIME_RATIO: f64 = 0.01;
/// Default threshold on `γ_a/ω_b` for the resolved-sideband flag.
pub const DEFAULT_RESOLVED_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateReport<T> {
    pub xi: T,
    pub n_b_final: T,
    pub n_a_final: T,
    /// Kelvin in SI units, units of `ω_b` (with `k_B = 1`) when scaled.
    pub t_eff: T,
}

/// A limiting occupation together with whether the regime it assumes holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeLimit<T> {
    pub limit: T,
    pub regime_holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandLimit<T> {
    pub limit: T,
    pub optimal_detuning: T,
    pub resolved: bool,
}

fn check_beam_splitter<T>(config: &SystemConfig<T>) -> Result<()> {
    match config.coupling {
        CouplingKind::BeamSplitter => Ok(()),
        ref k => Err(Error::UnsupportedModel(format!(
            "closed-form cooling efficiency applies to beam-splitter coupling, got `{}`",
            k.name()
        ))),
    }
}

fn check_damped<T: Real>(config: &SystemConfig<T>) -> Result<()> {
    if config.gamma_a() + config.gamma_b() > T::zero() {
        Ok(())
    } else {
        Err(Error::DegenerateConfig("γ_a + γ_b must be positive".into()))
    }
}

/// Fraction ξ of the bath-occupation difference removed from mode `b`:
///
/// ```text
/// ξ = Ω²γ_a(γ_a+γ_b) / [(γ_a+γ_b)²(Ω² + γ_aγ_b/4) + γ_aγ_b(Δ−ω_b)²]
/// ```
pub fn cooling_efficiency_xi<T: Real>(config: &SystemConfig<T>) -> Result<T> {
    check_beam_splitter(config)?;
    check_damped(config)?;
    let ga = config.gamma_a();
    let gb = config.gamma_b();
    let om2 = config.amplitude() * config.amplitude();
    let sum = ga + gb;
    let detuning = config.detunings().cooling;
    let num = om2 * ga * sum;
    if num == T::zero() {
        return Ok(T::zero());
    }
    let den = sum * sum * (om2 + ga * gb / T::lit(4.0)) + ga * gb * detuning * detuning;
    Ok(num / den)
}

/// Steady `(n_b, n_a)`. `n_b = n̄_b − ξ(n̄_b − n̄_a)`; `n_a` comes from the
/// rate-equation steady state.
pub fn steady_population<T: Real>(config: &SystemConfig<T>) -> Result<(T, T)> {
    let xi = cooling_efficiency_xi(config)?;
    let n_b = config.nbar_b() - xi * (config.nbar_b() - config.nbar_a());
    let n_a = rate::steady_moments(config)?.n_a;
    Ok((n_b, n_a))
}

/// Temperature whose Bose–Einstein occupation at `omega_b` equals
/// `n_b_final`. Zero occupation maps to zero temperature.
pub fn effective_temperature<T: Real>(n_b_final: T, omega_b: T, units: UnitSystem) -> Result<T> {
    if !(n_b_final >= T::zero()) {
        return Err(Error::Domain(format!(
            "occupation must be non-negative, got {n_b_final}"
        )));
    }
    if !(omega_b > T::zero()) {
        return Err(Error::Domain(format!("ω_b must be positive, got {omega_b}")));
    }
    if n_b_final == T::zero() {
        return Ok(T::zero());
    }
    let ratio = (T::one() / n_b_final).ln_1p();
    Ok(units.temperature_from_ratio(omega_b, ratio))
}

/// Resonant strong-drive occupation `(γ_b n̄_b + γ_a n̄_a)/(γ_a + γ_b)`.
pub fn resonant_strong_drive_population<T: Real>(config: &SystemConfig<T>) -> Result<T> {
    check_damped(config)?;
    let ga = config.gamma_a();
    let gb = config.gamma_b();
    Ok((gb * config.nbar_b() + ga * config.nbar_a()) / (ga + gb))
}

/// Limit `n̄_a` of the beam-splitter model, flagged by `γ_b n̄_b < ratio·γ_a n̄_a`.
pub fn jc_cooling_limit<T: Real>(config: &SystemConfig<T>, ratio: T) -> RegimeLimit<T> {
    let lhs = config.gamma_b() * config.nbar_b();
    let rhs = config.gamma_a() * config.nbar_a();
    RegimeLimit {
        limit: config.nbar_a(),
        regime_holds: lhs < ratio * rhs,
    }
}

/// Usual sideband limit `n̄_a + γ_a²/4ω_b²`, reached at `Δ = √(ω_b² + γ_a²)`.
/// `resolved` is `γ_a/ω_b < resolved_ratio`.
pub fn sideband_cooling_limit<T: Real>(
    config: &SystemConfig<T>,
    resolved_ratio: T,
) -> Result<SidebandLimit<T>> {
    let wb = config.omega_b();
    if !(wb > T::zero()) {
        return Err(Error::Domain(format!("ω_b must be positive, got {wb}")));
    }
    let ga = config.gamma_a();
    Ok(SidebandLimit {
        limit: config.nbar_a() + ga * ga / (T::lit(4.0) * wb * wb),
        optimal_detuning: (wb * wb + ga * ga).sqrt(),
        resolved: ga / wb < resolved_ratio,
    })
}

pub fn steady_state_report<T: Real>(config: &SystemConfig<T>) -> Result<SteadyStateReport<T>> {
    let xi = cooling_efficiency_xi(config)?;
    let (n_b_final, n_a_final) = steady_population(config)?;
    let t_eff = effective_temperature(n_b_final.max(T::zero()), config.omega_b(), config.units)?;
    Ok(SteadyStateReport {
        xi,
        n_b_final,
        n_a_final,
        t_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{thermal_occupation, HBAR, K_B};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bs(delta: f64, wb: f64, om: f64, ga: f64, gb: f64, na: f64, nb: f64) -> SystemConfig<f64> {
        SystemConfig::beam_splitter(delta, wb, om, ga, gb, na, nb).unwrap()
    }

    #[test]
    fn xi_vanishes_without_drive() {
        assert_eq!(cooling_efficiency_xi(&bs(1.0, 1.0, 0.0, 1.0, 0.01, 0.0, 100.0)).unwrap(), 0.0);
    }

    #[test]
    fn xi_reference_value() {
        let xi = cooling_efficiency_xi(&bs(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0)).unwrap();
        assert!((xi - 0.990075).abs() < 1e-6, "{xi}");
        // oracle: linear solve of the rate equations
        let ss = rate::steady_moments(&bs(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0)).unwrap();
        assert_relative_eq!(1.0 - ss.n_b / 100.0, xi, max_relative = 1e-12);
    }

    #[test]
    fn xi_strong_drive_limit() {
        let xi = cooling_efficiency_xi(&bs(1.0, 1.0, 1e7, 1.0, 0.01, 0.0, 100.0)).unwrap();
        assert_relative_eq!(xi, 1.0 / 1.01, max_relative = 1e-10);
    }

    #[test]
    fn degenerate_and_unsupported() {
        let cfg = bs(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(cooling_efficiency_xi(&cfg), Err(Error::DegenerateConfig(_))));
        let full = SystemConfig::full(1.0, 1.0, 0.02, 0.2, 1e-4, 0.0, 0.5).unwrap();
        assert!(matches!(cooling_efficiency_xi(&full), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn population_examples() {
        let (nb, na) = steady_population(&bs(0.2, 1.0, 3.0, 1.0, 0.1, 2.5, 2.5)).unwrap();
        assert_relative_eq!(nb, 2.5, max_relative = 1e-14);
        assert_relative_eq!(na, 2.5, max_relative = 1e-12);
        let (nb, _) = steady_population(&bs(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0)).unwrap();
        let xi = 100.0 * 1.01 / (1.01f64.powi(2) * (100.0 + 0.0025));
        assert_relative_eq!(nb, 100.0 * (1.0 - xi), max_relative = 1e-12);
        assert!((nb - 0.9925).abs() < 1e-4, "{nb}");
        let (nb, na) = steady_population(&bs(1.0, 1.0, 0.0, 1.0, 0.01, 0.3, 100.0)).unwrap();
        assert_eq!(nb, 100.0);
        assert_relative_eq!(na, 0.3, max_relative = 1e-14);
    }

    #[test]
    fn effective_temperature_examples() {
        let t = effective_temperature(1.0 / (std::f64::consts::E - 1.0), 3.0, UnitSystem::Scaled).unwrap();
        assert_relative_eq!(t, 3.0, max_relative = 1e-14);
        let w = 2.0 * std::f64::consts::PI * 1e9;
        let t = effective_temperature(1.0 / (std::f64::consts::E - 1.0), w, UnitSystem::Si).unwrap();
        assert_relative_eq!(t, HBAR * w / K_B, max_relative = 1e-14);
        let n = thermal_occupation(w, 300.0).unwrap();
        assert_relative_eq!(effective_temperature(n, w, UnitSystem::Si).unwrap(), 300.0, max_relative = 1e-9);
        let big = 1e9;
        let t = effective_temperature(big, 1.0, UnitSystem::Scaled).unwrap();
        assert_relative_eq!(t / big, 1.0, max_relative = 1e-8);
        assert_eq!(effective_temperature(0.0, 1.0, UnitSystem::Scaled).unwrap(), 0.0);
        assert!(matches!(effective_temperature(-1.0, 1.0, UnitSystem::Scaled), Err(Error::Domain(_))));
    }

    #[test]
    fn strong_drive_population_examples() {
        let cfg = bs(1.0, 1.0, 100.0, 1.0, 0.01, 0.0, 100.0);
        let lim = resonant_strong_drive_population(&cfg).unwrap();
        assert!((lim - 0.990099).abs() < 1e-6);
        let (nb, _) = steady_population(&cfg).unwrap();
        assert!((nb - lim).abs() < 1e-3);
        assert_eq!(resonant_strong_drive_population(&bs(1.0, 1.0, 1.0, 1.0, 0.0, 0.25, 100.0)).unwrap(), 0.25);
        assert_relative_eq!(
            resonant_strong_drive_population(&bs(1.0, 1.0, 1.0, 0.7, 0.3, 4.0, 4.0)).unwrap(),
            4.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn jc_limit_flags() {
        // γ_b n̄_b = 1e-2 against γ_a n̄_a = 0.1: ratio 0.1
        let cfg = bs(1.0, 1.0, 1.0, 1.0, 1e-6, 0.1, 1e4);
        let r = jc_cooling_limit(&cfg, DEFAULT_REGIME_RATIO);
        assert_eq!(r.limit, 0.1);
        assert!(!r.regime_holds);
        assert!(jc_cooling_limit(&cfg, 0.3).regime_holds);

        let r = jc_cooling_limit(&bs(1.0, 1.0, 1.0, 1.0, 0.01, 0.0, 100.0), DEFAULT_REGIME_RATIO);
        assert_eq!(r.limit, 0.0);
        assert!(!r.regime_holds);

        let r = jc_cooling_limit(&bs(1.0, 1.0, 1.0, 1.0, 0.01, 1e-7, 100.0), DEFAULT_REGIME_RATIO);
        assert_eq!(r.limit, 1e-7);
        assert!(!r.regime_holds);
    }

    #[test]
    fn sideband_limit_examples() {
        let cfg = SystemConfig::full(1.0, 1.0, 0.02, 0.2, 1e-4, 0.0, 0.5).unwrap();
        let s = sideband_cooling_limit(&cfg, DEFAULT_RESOLVED_RATIO).unwrap();
        assert_relative_eq!(s.limit, 0.01, max_relative = 1e-14);
        assert_relative_eq!(s.optimal_detuning, 1.04f64.sqrt(), max_relative = 1e-14);
        assert!(s.resolved);
        let cfg = SystemConfig::full(1.0, 1.0, 0.02, 0.0, 1e-4, 0.3, 0.5).unwrap();
        let s = sideband_cooling_limit(&cfg, DEFAULT_RESOLVED_RATIO).unwrap();
        assert_eq!((s.limit, s.optimal_detuning), (0.3, 1.0));
    }

    #[test]
    fn report_is_consistent() {
        let r = steady_state_report(&bs(1.0, 1.0, 10.0, 1.0, 0.01, 0.0, 100.0)).unwrap();
        assert_relative_eq!(
            effective_temperature(r.n_b_final, 1.0, UnitSystem::Scaled).unwrap(),
            r.t_eff
        );
        assert!(r.n_a_final >= 0.0);
    }

    fn config_strategy() -> impl Strategy<Value = SystemConfig<f64>> {
        (-5.0f64..5.0, 0.1f64..5.0, 0.0f64..10.0, 0.01f64..2.0, 0.0f64..1.0, 0.0f64..5.0, 0.0f64..50.0)
            .prop_map(|(d, wb, om, ga, gb, na, nb)| bs(d, wb, om, ga, gb, na, nb))
    }

    proptest! {
        #[test]
        fn xi_in_unit_interval(cfg in config_strategy()) {
            let xi = cooling_efficiency_xi(&cfg).unwrap();
            prop_assert!((0.0..1.0).contains(&xi));
        }

        #[test]
        fn xi_peaks_at_cooling_resonance(cfg in config_strategy(), offset in -3.0f64..3.0) {
            let wb = cfg.omega_b();
            let mut at = cfg.clone();
            at.set_delta(wb);
            let mut off = cfg.clone();
            off.set_delta(wb + offset);
            prop_assert!(cooling_efficiency_xi(&off).unwrap() <= cooling_efficiency_xi(&at).unwrap() * (1.0 + 1e-14));
        }

        #[test]
        fn xi_monotone_in_drive(cfg in config_strategy(), extra in 0.0f64..5.0) {
            let mut stronger = cfg.clone();
            stronger.drive.amplitude += extra;
            prop_assert!(cooling_efficiency_xi(&stronger).unwrap() >= cooling_efficiency_xi(&cfg).unwrap() * (1.0 - 1e-14));
        }

        #[test]
        fn population_depends_on_detuning_difference(cfg in config_strategy(), s in 0.0f64..10.0) {
            let (a, _) = steady_population(&cfg).unwrap();
            let (b, _) = steady_population(&cfg.shifted(s)).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn cooling_b_heats_a(cfg in config_strategy()) {
            prop_assume!(cfg.nbar_b() > cfg.nbar_a());
            let (nb, na) = steady_population(&cfg).unwrap();
            let tol = 1e-10 * (1.0 + cfg.nbar_b());
            prop_assert!(nb >= cfg.nbar_a() - tol && nb <= cfg.nbar_b() + tol);
            prop_assert!(na >= cfg.nbar_a() - tol);
        }

        #[test]
        fn jc_limit_beats_sideband_limit(ga in 0.01f64..1.0, wb in 0.5f64..5.0, frac in 0.0f64..0.99) {
            let na = frac * ga * ga / (4.0 * wb * wb);
            let cfg = bs(wb, wb, 1.0, ga, 1e-4, na, 1.0);
            let jc = jc_cooling_limit(&cfg, DEFAULT_REGIME_RATIO).limit;
            let sb = sideband_cooling_limit(&cfg, DEFAULT_RESOLVED_RATIO).unwrap().limit;
            prop_assert!(jc < sb);
        }

        #[test]
        fn temperature_round_trip(x in 1e-3f64..500.0, t in 0.01f64..100.0) {
            // beyond x ≈ 709 the occupation underflows to zero
            let w = x * t;
            let mut cfg = bs(1.0, w, 1.0, 1.0, 0.1, 0.0, 0.0);
            cfg = cfg.with_temperature(t).unwrap();
            let back = effective_temperature(cfg.nbar_b(), w, UnitSystem::Scaled).unwrap();
            prop_assert!((back - t).abs() <= 1e-9 * t);
        }
    }
}
