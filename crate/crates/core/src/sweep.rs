//! Parameter sweeps over the steady-state engines and their CSV output.
//!
//! Grid points are independent and run on a worker pool; results are kept
//! in grid order, so the output does not depend on the thread count. Each
//! point draws its Langevin seed from stream `k` of the sweep seed.

use std::fmt::Write as _;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::closed_form;
use crate::error::{Error, Result};
use crate::lindblad::{self, FockDims, PhysicalReport};
use crate::model::{CouplingKind, SystemConfig};
use crate::rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Rotating-frame detuning `Δ`; moves the drive frequency.
    Delta,
    OmegaDrive,
    /// Drive amplitude (Ω or g).
    Amplitude,
    /// `g′` for generalized coupling, the amplitude otherwise.
    G,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::OmegaDrive => "omega_drive",
            SweepParameter::Amplitude => "amplitude",
            SweepParameter::G => "g",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "delta" => SweepParameter::Delta,
            "omega_drive" => SweepParameter::OmegaDrive,
            "amplitude" => SweepParameter::Amplitude,
            "g" => SweepParameter::G,
            _ => return None,
        })
    }

    /// Copy of `config` with this parameter set to `value`.
    pub fn apply(self, config: &SystemConfig<f64>, value: f64) -> Result<SystemConfig<f64>> {
        let mut c = config.clone();
        match self {
            SweepParameter::Delta => c.set_delta(value),
            SweepParameter::OmegaDrive => c.drive.drive_frequency = value,
            SweepParameter::Amplitude => c.drive.amplitude = value,
            SweepParameter::G => match &mut c.coupling {
                CouplingKind::Generalized { g_prime, .. } => *g_prime = value,
                _ => c.drive.amplitude = value,
            },
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    ClosedForm,
    Rate,
    Lindblad,
    Langevin,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::ClosedForm, Engine::Rate, Engine::Lindblad, Engine::Langevin];

    pub fn name(self) -> &'static str {
        match self {
            Engine::ClosedForm => "closed_form",
            Engine::Rate => "rate",
            Engine::Lindblad => "lindblad",
            Engine::Langevin => "langevin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Engine::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub engines: Vec<Engine>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.start < self.stop) {
            return Err(Error::invalid(
                "sweep.range",
                format!("need finite start < stop, got [{}, {}]", self.start, self.stop),
            ));
        }
        if self.points < 2 {
            return Err(Error::invalid("sweep.points", format!("need at least 2, got {}", self.points)));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0) {
            return Err(Error::invalid("sweep.start", "log spacing needs start > 0"));
        }
        if self.engines.is_empty() {
            return Err(Error::invalid("sweep.engines", "no engine requested"));
        }
        Ok(())
    }

    /// Grid values; the last point is exactly `stop`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    return self.stop;
                }
                let f = k as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * f,
                    Spacing::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * f).exp(),
                }
            })
            .collect()
    }

    /// Requested engines in canonical order without duplicates.
    pub fn engine_set(&self) -> Vec<Engine> {
        let mut e = self.engines.clone();
        e.sort();
        e.dedup();
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinOptions {
    pub n_traj: usize,
    /// Step size; `None` picks `0.08 / max(|Γ_a|, |Γ_b|, Ω)`.
    pub dt: Option<f64>,
    /// Sampling time; `None` waits 10 slowest relaxation times of the
    /// moment equations.
    pub t_final: Option<f64>,
}

impl Default for LangevinOptions {
    fn default() -> Self {
        LangevinOptions {
            n_traj: 1000,
            dt: None,
            t_final: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Truncation tolerance for the Lindblad engine.
    pub lindblad_tol: f64,
    pub start_dims: FockDims,
    pub max_total_dim: usize,
    pub langevin: LangevinOptions,
    pub seed: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            lindblad_tol: 1e-3,
            start_dims: FockDims { dim_a: 2, dim_b: 2 },
            max_total_dim: lindblad::DEFAULT_MAX_TOTAL_DIM,
            langevin: LangevinOptions::default(),
            seed: 0,
        }
    }
}

/// One engine's steady-state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineValue {
    pub n_b: f64,
    pub n_a: f64,
    /// Lindblad: `‖Lρ‖_max`; Langevin: standard error of `n_b`.
    pub uncertainty: Option<f64>,
    pub dims: Option<FockDims>,
    pub physical: Option<PhysicalReport>,
}

/// Relaxation time scale of the moment equations, `1 / min |Re λ|`.
fn slowest_relaxation(config: &SystemConfig<f64>) -> Result<f64> {
    let (a, _) = rate::linear_system(config)?;
    let m = nalgebra::DMatrix::from_fn(4, 4, |i, j| a[(i, j)]);
    let slowest = m
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if !(slowest > 0.0) {
        return Err(Error::DegenerateConfig("moment equations have no relaxation".into()));
    }
    Ok(1.0 / slowest)
}

pub fn run_engine(engine: Engine, config: &SystemConfig<f64>, opts: &EngineOptions) -> Result<EngineValue> {
    let plain = |n_b: f64, n_a: f64| EngineValue {
        n_b,
        n_a,
        uncertainty: None,
        dims: None,
        physical: None,
    };
    match engine {
        Engine::ClosedForm => {
            let (n_b, n_a) = closed_form::steady_population(config)?;
            Ok(plain(n_b, n_a))
        }
        Engine::Rate => {
            let s = rate::steady_moments(config)?;
            Ok(plain(s.n_b, s.n_a))
        }
        Engine::Lindblad => {
            let s = lindblad::truncated_steady(config, opts.start_dims, opts.lindblad_tol, opts.max_total_dim)?;
            Ok(EngineValue {
                n_b: s.n_b,
                n_a: s.n_a,
                uncertainty: Some(s.residual),
                dims: Some(s.rho.dims),
                physical: Some(s.rho.physical_report()),
            })
        }
        Engine::Langevin => {
            let lo = opts.langevin;
            let rates = rate::RateCoefficients::from_config(config);
            let fastest = rates
                .gamma_a_complex
                .norm()
                .max(rates.gamma_b_complex.norm())
                .max(config.amplitude());
            let dt = lo.dt.unwrap_or(0.08 / fastest);
            let t_final = match lo.t_final {
                Some(t) => t,
                None => 10.0 * slowest_relaxation(config)?,
            };
            let est = rate::langevin_sample(config, lo.n_traj, opts.seed, t_final, dt)?;
            Ok(EngineValue {
                n_b: est.mean.n_b,
                n_a: est.mean.n_a,
                uncertainty: Some(est.se_n_b),
                dims: None,
                physical: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// In [`SweepSpec::engine_set`] order.
    pub results: Vec<(Engine, std::result::Result<EngineValue, Error>)>,
    pub t_eff: Option<f64>,
    pub reason: String,
}

impl SweepRow {
    pub fn get(&self, engine: Engine) -> Option<&EngineValue> {
        self.results
            .iter()
            .find(|(e, _)| *e == engine)
            .and_then(|(_, r)| r.as_ref().ok())
    }

    pub fn all_failed(&self) -> bool {
        self.results.iter().all(|(_, r)| r.is_err())
    }
}

/// Engines are compared pairwise: deterministic ones to `1e-8` relative,
/// the Lindblad engine to 2% (plus its truncation tolerance), Langevin to
/// four standard errors.
fn disagreements(row: &SweepRow, lindblad_tol: f64) -> Vec<String> {
    let ok: Vec<(Engine, &EngineValue)> = row
        .results
        .iter()
        .filter_map(|(e, r)| r.as_ref().ok().map(|v| (*e, v)))
        .collect();
    let mut out = Vec::new();
    for i in 0..ok.len() {
        for j in i + 1..ok.len() {
            let (ea, a) = ok[i];
            let (eb, b) = ok[j];
            let scale = a.n_b.abs().max(b.n_b.abs());
            let allowed = match (ea, eb) {
                (_, Engine::Langevin) | (Engine::Langevin, _) => {
                    4.0 * a.uncertainty.filter(|_| ea == Engine::Langevin).or(b.uncertainty).unwrap_or(0.0)
                }
                (_, Engine::Lindblad) | (Engine::Lindblad, _) => 0.02 * scale + lindblad_tol,
                _ => 1e-8 * scale.max(1e-300),
            };
            if (a.n_b - b.n_b).abs() > allowed {
                out.push(format!(
                    "{} and {} disagree ({} vs {})",
                    ea.name(),
                    eb.name(),
                    a.n_b,
                    b.n_b
                ));
            }
        }
    }
    out
}

pub fn evaluate_point(
    config: &SystemConfig<f64>,
    engines: &[Engine],
    opts: &EngineOptions,
    value: f64,
) -> SweepRow {
    let results: Vec<_> = engines.iter().map(|&e| (e, run_engine(e, config, opts))).collect();
    let mut row = SweepRow {
        value,
        results,
        t_eff: None,
        reason: String::new(),
    };
    row.t_eff = row
        .results
        .iter()
        .find_map(|(_, r)| r.as_ref().ok())
        .and_then(|v| closed_form::effective_temperature(v.n_b.max(0.0), config.omega_b(), config.units).ok());
    let mut reasons: Vec<String> = row
        .results
        .iter()
        .filter_map(|(e, r)| r.as_ref().err().map(|err| format!("{}: {err}", e.name())))
        .collect();
    reasons.extend(disagreements(&row, opts.lindblad_tol));
    row.reason = reasons.join("; ");
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetadata {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub parameter: SweepParameter,
    pub spacing: Spacing,
    pub coupling: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub engines: Vec<Engine>,
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Seed for grid point `k`: the first word of ChaCha stream `k`.
pub fn point_seed(seed: u64, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng.next_u64()
}

/// Runs the sweep on `threads` workers (`None`: rayon default). Points are
/// split into contiguous blocks, one per worker.
pub fn run_sweep(
    config: &SystemConfig<f64>,
    spec: &SweepSpec,
    opts: &EngineOptions,
    threads: Option<usize>,
    config_sha256: String,
) -> Result<SweepResult> {
    spec.validate()?;
    let engines = spec.engine_set();
    let grid = spec.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads().max(1);
    let block = grid.len().div_ceil(workers);
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .with_min_len(block)
            .map(|(k, &v)| {
                let point_opts = EngineOptions {
                    seed: point_seed(opts.seed, k),
                    ..*opts
                };
                match spec.parameter.apply(config, v) {
                    Ok(cfg) => evaluate_point(&cfg, &engines, &point_opts, v),
                    Err(e) => SweepRow {
                        value: v,
                        results: engines.iter().map(|&en| (en, Err(e.clone()))).collect(),
                        t_eff: None,
                        reason: format!("invalid point: {e}"),
                    },
                }
            })
            .collect()
    });
    Ok(SweepResult {
        engines,
        rows,
        metadata: SweepMetadata {
            tool: "sideband".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256,
            seed: opts.seed,
            parameter: spec.parameter,
            spacing: spec.spacing,
            coupling: config.coupling.name(),
        },
    })
}

/// Shortest round-trip representation; NaN is written `nan`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

impl SweepResult {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![self.metadata.parameter.name().to_string()];
        for e in &self.engines {
            h.push(format!("{}_n_b", e.name()));
            h.push(format!("{}_n_a", e.name()));
            match e {
                Engine::Lindblad => h.push("lindblad_residual".into()),
                Engine::Langevin => h.push("langevin_se_n_b".into()),
                _ => {}
            }
        }
        h.push("t_eff".into());
        h.push("reason".into());
        h
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(SweepRow::all_failed)
    }

    /// Writes the metadata block, header and rows. `timestamp`, when given,
    /// is added to the metadata; leaving it out keeps output reproducible
    /// byte for byte.
    pub fn write_csv<W: Write>(&self, out: &mut W, timestamp: Option<&str>) -> Result<()> {
        let m = &self.metadata;
        let mut meta = String::new();
        let _ = writeln!(meta, "# tool: {} {}", m.tool, m.version);
        if let Some(ts) = timestamp {
            let _ = writeln!(meta, "# timestamp: {ts}");
        }
        let _ = writeln!(meta, "# config_sha256: {}", m.config_sha256);
        let _ = writeln!(meta, "# coupling: {}", m.coupling);
        let _ = writeln!(meta, "# seed: {}", m.seed);
        let _ = writeln!(
            meta,
            "# sweep: {} ({})",
            m.parameter.name(),
            match m.spacing {
                Spacing::Linear => "linear",
                Spacing::Log => "log",
            }
        );
        out.write_all(meta.as_bytes())?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(self.header()).map_err(io)?;
        for row in &self.rows {
            let mut rec = vec![format_float(row.value)];
            for (e, r) in &row.results {
                let (nb, na, u) = match r {
                    Ok(v) => (v.n_b, v.n_a, v.uncertainty.unwrap_or(f64::NAN)),
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN),
                };
                rec.push(format_float(nb));
                rec.push(format_float(na));
                if matches!(e, Engine::Lindblad | Engine::Langevin) {
                    rec.push(format_float(u));
                }
            }
            rec.push(format_float(row.t_eff.unwrap_or(f64::NAN)));
            rec.push(row.reason.clone());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, timestamp: Option<&str>) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, timestamp)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs() -> SystemConfig<f64> {
        SystemConfig::beam_splitter(1.0, 1.0, 3.0, 1.0, 0.05, 0.0, 1.0).unwrap()
    }

    fn spec(engines: Vec<Engine>) -> SweepSpec {
        SweepSpec {
            parameter: SweepParameter::Delta,
            start: -4.0,
            stop: 6.0,
            points: 21,
            spacing: Spacing::Linear,
            engines,
        }
    }

    #[test]
    fn grid_endpoints_and_spacing() {
        let s = spec(vec![Engine::Rate]);
        let g = s.grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -4.0);
        assert_eq!(g[20], 6.0);
        assert!((g[10] - 1.0).abs() < 1e-15);
        let mut l = s.clone();
        l.spacing = Spacing::Log;
        assert!(l.validate().is_err());
        l.start = 0.01;
        l.stop = 100.0;
        l.points = 5;
        let g = l.grid();
        for (x, want) in g.iter().zip([0.01, 0.1, 1.0, 10.0, 100.0]) {
            assert!((x / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(vec![Engine::Rate]);
        s.points = 1;
        assert!(s.validate().is_err());
        let mut s = spec(vec![Engine::Rate]);
        s.stop = s.start;
        assert!(s.validate().is_err());
        assert!(spec(vec![]).validate().is_err());
    }

    #[test]
    fn parameters_apply() {
        let cfg = bs();
        assert_eq!(SweepParameter::Delta.apply(&cfg, 0.25).unwrap().delta(), 0.25);
        assert_eq!(SweepParameter::Amplitude.apply(&cfg, 0.5).unwrap().amplitude(), 0.5);
        assert_eq!(SweepParameter::G.apply(&cfg, 0.5).unwrap().amplitude(), 0.5);
        let wd = cfg.drive.drive_frequency;
        assert_eq!(SweepParameter::OmegaDrive.apply(&cfg, wd - 2.0).unwrap().delta(), cfg.delta() + 2.0);
        assert!(SweepParameter::Amplitude.apply(&cfg, -1.0).is_err());
    }

    #[test]
    fn resonance_minimum() {
        let s = spec(vec![Engine::ClosedForm, Engine::Rate]);
        let r = run_sweep(&bs(), &s, &EngineOptions::default(), Some(3), "x".into()).unwrap();
        let nb: Vec<f64> = r.rows.iter().map(|row| row.get(Engine::Rate).unwrap().n_b).collect();
        let k = nb.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(r.rows[k].value, 1.0);
        assert!(r.rows.iter().all(|row| row.reason.is_empty()));
    }

    #[test]
    fn undriven_rows_keep_bath_occupation() {
        let cfg = SystemConfig::beam_splitter(1.0, 1.0, 0.0, 1.0, 0.05, 0.0, 1.0).unwrap();
        let r = run_sweep(&cfg, &spec(vec![Engine::ClosedForm]), &EngineOptions::default(), None, "x".into()).unwrap();
        assert!(r.rows.iter().all(|row| row.get(Engine::ClosedForm).unwrap().n_b == 1.0));
    }

    #[test]
    fn columns_follow_engines_and_failures_are_nan() {
        let full = SystemConfig::full(1.0, 1.0, 0.02, 0.2, 1e-3, 0.0, 0.5).unwrap();
        let mut s = spec(vec![Engine::Rate, Engine::ClosedForm]);
        s.points = 2;
        let r = run_sweep(&full, &s, &EngineOptions::default(), Some(1), "x".into()).unwrap();
        assert_eq!(r.header(), ["delta", "closed_form_n_b", "closed_form_n_a", "rate_n_b", "rate_n_a", "t_eff", "reason"]);
        assert!(r.all_failed());
        let csv = r.to_csv_string(None).unwrap();
        let line = csv.lines().find(|l| l.starts_with("-4.0,")).unwrap();
        assert!(line.starts_with("-4.0,nan,nan,nan,nan,nan,"), "{line}");
        assert!(line.contains("unsupported model"));
    }

    #[test]
    fn csv_is_independent_of_thread_count() {
        let mut s = spec(vec![Engine::Rate, Engine::Langevin]);
        s.points = 4;
        let opts = EngineOptions {
            langevin: LangevinOptions {
                n_traj: 200,
                dt: Some(0.005),
                t_final: Some(5.0),
            },
            seed: 17,
            ..EngineOptions::default()
        };
        let a = run_sweep(&bs(), &s, &opts, Some(1), "h".into()).unwrap().to_csv_string(None).unwrap();
        let b = run_sweep(&bs(), &s, &opts, Some(4), "h".into()).unwrap().to_csv_string(None).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# tool: sideband "));
        assert!(!a.contains("timestamp"));
        let c = run_sweep(&bs(), &s, &opts, Some(2), "h".into()).unwrap().to_csv_string(Some("2026-01-01T00:00:00Z")).unwrap();
        assert!(c.contains("# timestamp: 2026-01-01T00:00:00Z\n"));
    }

    #[test]
    fn point_seeds_differ() {
        assert_ne!(point_seed(1, 0), point_seed(1, 1));
        assert_eq!(point_seed(1, 3), point_seed(1, 3));
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1e-20), "1e-20");
    }
}
