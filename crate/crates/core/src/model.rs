//! Shared parameter types for a two-mode cooling problem.
//!
//! Mode `a` is the lossy high-frequency oscillator, mode `b` the one being
//! cooled. All Hamiltonians are written in the frame rotating at the drive
//! frequency, so only `Δ = ω_a − ω_d` and `ω_b` enter the dynamics.

use crate::error::{Error, Result};
use crate::linearization::FSpec;
use crate::scalar::Real;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Default threshold used to decide `x ≪ y` as `x < ratio · y`.
pub const DEFAULT_RWA_STRICTNESS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitSystem {
    /// Rates in units of a reference rate, `ħ = k_B = 1`.
    #[default]
    Scaled,
    /// Angular frequencies in rad/s, temperatures in kelvin.
    Si,
}

impl UnitSystem {
    /// `ħω / k_B T` in this unit system.
    pub fn energy_ratio<T: Real>(self, frequency: T, temperature: T) -> T {
        match self {
            UnitSystem::Scaled => frequency / temperature,
            UnitSystem::Si => T::lit(HBAR) * frequency / (T::lit(K_B) * temperature),
        }
    }

    /// Temperature corresponding to the energy ratio `x = ħω / k_B T`.
    pub fn temperature_from_ratio<T: Real>(self, frequency: T, ratio: T) -> T {
        match self {
            UnitSystem::Scaled => frequency / ratio,
            UnitSystem::Si => T::lit(HBAR) * frequency / (T::lit(K_B) * ratio),
        }
    }
}

/// One damped oscillator coupled to a thermal bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams<T> {
    pub frequency: T,
    pub decay_rate: T,
    pub bath_occupation: T,
}

impl<T: Real> ModeParams<T> {
    pub fn new(frequency: T, decay_rate: T, bath_occupation: T) -> Result<Self> {
        let m = ModeParams {
            frequency,
            decay_rate,
            bath_occupation,
        };
        m.validate("mode")?;
        Ok(m)
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        if !(self.frequency > T::zero()) || !self.frequency.is_finite() {
            return Err(Error::invalid(
                &format!("{name}.frequency"),
                format!("must be positive and finite, got {}", self.frequency),
            ));
        }
        if !(self.decay_rate >= T::zero()) || !self.decay_rate.is_finite() {
            return Err(Error::invalid(
                &format!("{name}.decay_rate"),
                format!("must be non-negative, got {}", self.decay_rate),
            ));
        }
        if !(self.bath_occupation >= T::zero()) || !self.bath_occupation.is_finite() {
            return Err(Error::invalid(
                &format!("{name}.bath_occupation"),
                format!("must be non-negative, got {}", self.bath_occupation),
            ));
        }
        Ok(())
    }
}

/// Classical drive. `amplitude` is Ω for the beam-splitter model and g for the
/// position-position model; it is taken real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams<T> {
    pub amplitude: T,
    pub drive_frequency: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKind<T> {
    /// `Ω(a†b + b†a)`.
    BeamSplitter,
    /// `g(a† + a)(b† + b)`.
    Full,
    /// `g′F(a†, a)(b† + b) + f(a† + a)`, reduced to [`CouplingKind::Full`]
    /// around its mean-field equilibrium.
    Generalized {
        spec: FSpec<T>,
        f_drive: T,
        g_prime: T,
    },
}

impl<T> CouplingKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingKind::BeamSplitter => "beam_splitter",
            CouplingKind::Full => "full",
            CouplingKind::Generalized { .. } => "generalized",
        }
    }
}

/// Complete parameter set of a two-mode cooling problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig<T> {
    pub mode_a: ModeParams<T>,
    pub mode_b: ModeParams<T>,
    pub drive: DriveParams<T>,
    pub coupling: CouplingKind<T>,
    pub units: UnitSystem,
    /// Bath temperature; when set, both bath occupations follow from it.
    pub temperature: Option<T>,
}

/// `Δ = ω_a − ω_d`, `Δ_c = Δ − ω_b`, `Δ_h = Δ + ω_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings<T> {
    pub delta: T,
    pub cooling: T,
    pub heating: T,
}

impl<T: Real> SystemConfig<T> {
    /// Scaled-unit configuration specified directly by its rotating-frame
    /// parameters. The lab-frame drive frequency is placed far above every
    /// other scale so the rotating-wave conditions hold.
    #[allow(clippy::too_many_arguments)]
    pub fn rotating_frame(
        coupling: CouplingKind<T>,
        delta: T,
        omega_b: T,
        amplitude: T,
        gamma_a: T,
        gamma_b: T,
        nbar_a: T,
        nbar_b: T,
    ) -> Result<Self> {
        let scale = T::one()
            .max(delta.abs())
            .max(omega_b.abs())
            .max(amplitude.abs())
            .max(gamma_a.abs())
            .max(gamma_b.abs());
        // A power of two keeps `(ω_d + Δ) − ω_d` close to exact.
        let drive_frequency = T::lit(2.0).powi(scale.log2().ceil().to_i32().unwrap_or(0) + 10);
        let cfg = SystemConfig {
            mode_a: ModeParams {
                frequency: drive_frequency + delta,
                decay_rate: gamma_a,
                bath_occupation: nbar_a,
            },
            mode_b: ModeParams {
                frequency: omega_b,
                decay_rate: gamma_b,
                bath_occupation: nbar_b,
            },
            drive: DriveParams {
                amplitude,
                drive_frequency,
            },
            coupling,
            units: UnitSystem::Scaled,
            temperature: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Beam-splitter model in scaled units.
    #[allow(clippy::too_many_arguments)]
    pub fn beam_splitter(
        delta: T,
        omega_b: T,
        omega: T,
        gamma_a: T,
        gamma_b: T,
        nbar_a: T,
        nbar_b: T,
    ) -> Result<Self> {
        Self::rotating_frame(
            CouplingKind::BeamSplitter,
            delta,
            omega_b,
            omega,
            gamma_a,
            gamma_b,
            nbar_a,
            nbar_b,
        )
    }

    /// Position-position model in scaled units.
    #[allow(clippy::too_many_arguments)]
    pub fn full(
        delta: T,
        omega_b: T,
        g: T,
        gamma_a: T,
        gamma_b: T,
        nbar_a: T,
        nbar_b: T,
    ) -> Result<Self> {
        Self::rotating_frame(
            CouplingKind::Full,
            delta,
            omega_b,
            g,
            gamma_a,
            gamma_b,
            nbar_a,
            nbar_b,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.mode_a.validate("mode_a")?;
        self.mode_b.validate("mode_b")?;
        let amp = self.drive.amplitude;
        if !(amp >= T::zero()) || !amp.is_finite() {
            return Err(Error::invalid(
                "drive.amplitude",
                format!("must be real and non-negative, got {amp}"),
            ));
        }
        let wd = self.drive.drive_frequency;
        if !(wd >= T::zero()) || !wd.is_finite() {
            return Err(Error::invalid(
                "drive.drive_frequency",
                format!("must be non-negative, got {wd}"),
            ));
        }
        if let Some(t) = self.temperature {
            if !(t > T::zero()) {
                return Err(Error::invalid(
                    "temperature",
                    format!("must be positive, got {t}"),
                ));
            }
            for (name, mode) in [("mode_a", &self.mode_a), ("mode_b", &self.mode_b)] {
                let expected = bose_einstein(self.units.energy_ratio(mode.frequency, t));
                let rel = ((mode.bath_occupation - expected) / expected).abs();
                if rel > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
                    return Err(Error::invalid(
                        &format!("{name}.bath_occupation"),
                        format!("inconsistent with temperature {t}: {} vs {expected}", mode.bath_occupation),
                    ));
                }
            }
        }
        if let CouplingKind::Generalized { spec, .. } = &self.coupling {
            spec.check_hermitian()?;
        }
        Ok(())
    }

    /// Sets the bath temperature and recomputes both occupations from it.
    pub fn with_temperature(mut self, temperature: T) -> Result<Self> {
        if !(temperature > T::zero()) {
            return Err(Error::Domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.mode_a.bath_occupation =
            bose_einstein(self.units.energy_ratio(self.mode_a.frequency, temperature));
        self.mode_b.bath_occupation =
            bose_einstein(self.units.energy_ratio(self.mode_b.frequency, temperature));
        self.temperature = Some(temperature);
        Ok(self)
    }

    /// Rotating-frame detuning `Δ = ω_a − ω_d`.
    #[inline]
    pub fn delta(&self) -> T {
        self.mode_a.frequency - self.drive.drive_frequency
    }

    pub fn detunings(&self) -> Detunings<T> {
        let delta = self.delta();
        let wb = self.mode_b.frequency;
        Detunings {
            delta,
            cooling: delta - wb,
            heating: delta + wb,
        }
    }

    /// Moves the drive so the rotating-frame detuning becomes `delta`.
    pub fn set_delta(&mut self, delta: T) {
        self.drive.drive_frequency = self.mode_a.frequency - delta;
    }

    /// Shifts `Δ` and `ω_b` together, leaving `Δ − ω_b` unchanged.
    pub fn shifted(&self, shift: T) -> Self {
        let mut c = self.clone();
        c.mode_b.frequency = c.mode_b.frequency + shift;
        c.set_delta(self.delta() + shift);
        c
    }

    #[inline]
    pub fn gamma_a(&self) -> T {
        self.mode_a.decay_rate
    }

    #[inline]
    pub fn gamma_b(&self) -> T {
        self.mode_b.decay_rate
    }

    #[inline]
    pub fn nbar_a(&self) -> T {
        self.mode_a.bath_occupation
    }

    #[inline]
    pub fn nbar_b(&self) -> T {
        self.mode_b.bath_occupation
    }

    #[inline]
    pub fn omega_b(&self) -> T {
        self.mode_b.frequency
    }

    #[inline]
    pub fn amplitude(&self) -> T {
        self.drive.amplitude
    }
}

/// `1 / (e^x − 1)`.
#[inline]
pub fn bose_einstein<T: Real>(x: T) -> T {
    T::one() / x.exp_m1()
}

/// Bose–Einstein mean occupation of an oscillator at angular frequency
/// `frequency` (rad/s) in a bath at `temperature` (K).
pub fn thermal_occupation<T: Real>(frequency: T, temperature: T) -> Result<T> {
    thermal_occupation_in(UnitSystem::Si, frequency, temperature)
}

pub fn thermal_occupation_in<T: Real>(units: UnitSystem, frequency: T, temperature: T) -> Result<T> {
    if !(frequency > T::zero()) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    if !(temperature > T::zero()) {
        return Err(Error::Domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(bose_einstein(units.energy_ratio(frequency, temperature)))
}

/// Result of checking the rotating-wave conditions
/// `{|ω_ab − ω_d|, |Ω|} ≪ ω_ab + ω_d` with `ω_ab = ω_a − ω_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwaReport<T> {
    pub strictness: T,
    pub detuning_lhs: T,
    pub amplitude_lhs: T,
    pub rhs: T,
    pub detuning_ok: bool,
    pub amplitude_ok: bool,
}

impl<T: Real> RwaReport<T> {
    pub fn passed(&self) -> bool {
        self.detuning_ok && self.amplitude_ok
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let bound = self.strictness * self.rhs;
        if !self.detuning_ok {
            out.push(format!(
                "|w_ab - w_d| = {} is not << w_ab + w_d (bound {})",
                self.detuning_lhs, bound
            ));
        }
        if !self.amplitude_ok {
            out.push(format!(
                "|amplitude| = {} is not << w_ab + w_d (bound {})",
                self.amplitude_lhs, bound
            ));
        }
        out
    }
}

pub fn validate_rwa<T: Real>(config: &SystemConfig<T>, strictness: T) -> RwaReport<T> {
    let w_ab = config.mode_a.frequency - config.mode_b.frequency;
    let wd = config.drive.drive_frequency;
    let rhs = w_ab + wd;
    let detuning_lhs = (w_ab - wd).abs();
    let amplitude_lhs = config.drive.amplitude.abs();
    let bound = strictness * rhs;
    RwaReport {
        strictness,
        detuning_lhs,
        amplitude_lhs,
        rhs,
        detuning_ok: detuning_lhs < bound,
        amplitude_ok: amplitude_lhs < bound,
    }
}
