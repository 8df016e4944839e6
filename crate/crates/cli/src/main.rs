//! `sideband`: steady states, dynamics and parameter sweeps for two-mode
//! sideband cooling.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 every
//! sweep point failed, 4 capacity exceeded outside a sweep.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sideband_core::atomic::{self, AtomicConfig};
use sideband_core::closed_form::{self, DEFAULT_REGIME_RATIO, DEFAULT_RESOLVED_RATIO};
use sideband_core::config_file;
use sideband_core::lindblad::{self, DensityMatrix, FockDims};
use sideband_core::linearization::{self, DrivenModel};
use sideband_core::model::{validate_rwa, CouplingKind, DEFAULT_RWA_STRICTNESS};
use sideband_core::rate::{self, MomentState};
use sideband_core::sweep::{self, Engine, EngineOptions, LangevinOptions, Spacing, SweepParameter, SweepSpec};
use sideband_core::{Error, SystemConfig};

#[derive(Parser, Debug)]
#[command(name = "sideband", version, about = "Sideband cooling of a low-frequency oscillator through a lossy partner mode")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; CSV for tables, JSON for reports. Tables go to stdout
    /// when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, env = "SIDEBAND_SIM_THREADS")]
    threads: Option<usize>,
    /// Numerical tolerance (truncation tolerance for Lindblad runs,
    /// relative tolerance for integration).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Add an ISO-8601 timestamp to CSV metadata (output is then no longer
    /// byte-reproducible).
    #[arg(long, global = true)]
    timestamp: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady state at the configured point, from each requested engine.
    Steady {
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<EngineArg>>,
    },
    /// Time evolution of the moments from the thermal state.
    Evolve {
        #[arg(long)]
        t_final: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, value_enum, default_value_t = EvolveEngine::Rate)]
        engine: EvolveEngine,
        /// Fock dimensions `dim_a,dim_b` for the Lindblad engine.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Parameter sweep written as CSV.
    Sweep {
        #[arg(long, value_enum)]
        param: ParamArg,
        #[arg(long, allow_hyphen_values = true)]
        start: f64,
        #[arg(long, allow_hyphen_values = true)]
        stop: f64,
        #[arg(long)]
        points: usize,
        #[arg(long, value_enum, default_value_t = SpacingArg::Linear)]
        spacing: SpacingArg,
        #[arg(long, value_delimiter = ',', default_value = "closed_form,rate")]
        engines: Vec<EngineArg>,
        /// Trajectories per point for the Langevin engine.
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
    },
    /// Lindblad steady state with automatic truncation.
    Lindblad {
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Exact atomic ensemble against the two-oscillator model.
    Ensemble {
        #[arg(long)]
        atoms: usize,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long)]
        omega_b: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
        /// Initial excitations `m_a,n_b`.
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        init: Vec<usize>,
        #[arg(long)]
        t_final: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Mean-field equilibrium and linearized parameters of a generalized
    /// coupling.
    Linearize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum EngineArg {
    ClosedForm,
    Rate,
    Lindblad,
    Langevin,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::ClosedForm => Engine::ClosedForm,
            EngineArg::Rate => Engine::Rate,
            EngineArg::Lindblad => Engine::Lindblad,
            EngineArg::Langevin => Engine::Langevin,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvolveEngine {
    Rate,
    Lindblad,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ParamArg {
    Delta,
    OmegaDrive,
    Amplitude,
    G,
}

impl From<ParamArg> for SweepParameter {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Delta => SweepParameter::Delta,
            ParamArg::OmegaDrive => SweepParameter::OmegaDrive,
            ParamArg::Amplitude => SweepParameter::Amplitude,
            ParamArg::G => SweepParameter::G,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpacingArg {
    Linear,
    Log,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } | Error::InvalidParameter { .. } => 2,
            Error::Capacity(_) => 4,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(1, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load(global: &Global) -> CliResult<(SystemConfig, Vec<u8>)> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Failure::new(2, "this command needs --config PATH"))?;
    let bytes = fs::read(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Failure::new(2, format!("{}: not UTF-8: {e}", path.display())))?;
    let cfg = config_file::parse_config(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    Ok((cfg, bytes))
}

fn emit_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Prints the text report; writes the JSON form to `--out` when given.
fn emit_report(out: Option<&Path>, text: &str, value: &Value) -> CliResult<()> {
    io::stdout().write_all(text.as_bytes())?;
    if let Some(p) = out {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
        s.push('\n');
        fs::write(p, s)?;
    }
    Ok(())
}

fn timestamp(global: &Global) -> Option<String> {
    global
        .timestamp
        .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn dims_arg(dims: &Option<Vec<usize>>) -> CliResult<Option<FockDims>> {
    match dims.as_deref() {
        None => Ok(None),
        Some([a, b]) => Ok(Some(FockDims::new(*a, *b)?)),
        Some(_) => Err(Failure::new(2, "--dims takes two values")),
    }
}

fn engine_options(global: &Global) -> EngineOptions {
    EngineOptions {
        lindblad_tol: global.tol.unwrap_or(1e-3),
        seed: global.seed,
        ..EngineOptions::default()
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(sweep::format_float(x))
    }
}

fn run_steady(global: &Global, engines: &Option<Vec<EngineArg>>) -> CliResult<()> {
    let (cfg, _) = load(global)?;
    let engines: Vec<Engine> = match engines {
        Some(e) => e.iter().map(|&x| x.into()).collect(),
        None if matches!(cfg.coupling, CouplingKind::BeamSplitter) => vec![Engine::ClosedForm, Engine::Rate],
        None => vec![Engine::Lindblad],
    };
    let opts = engine_options(global);
    let row = sweep::evaluate_point(&cfg, &engines, &opts, cfg.delta());

    let mut text = String::new();
    let d = cfg.detunings();
    let _ = writeln!(text, "coupling        {}", cfg.coupling.name());
    let _ = writeln!(text, "delta           {}", d.delta);
    let _ = writeln!(text, "delta_c         {}", d.cooling);
    let _ = writeln!(text, "amplitude       {}", cfg.amplitude());
    let xi = closed_form::cooling_efficiency_xi(&cfg).ok();
    if let Some(xi) = xi {
        let _ = writeln!(text, "xi              {xi}");
    }
    let mut engine_json = serde_json::Map::new();
    for (e, r) in &row.results {
        match r {
            Ok(v) => {
                let _ = writeln!(text, "{:<15} n_b = {}  n_a = {}", e.name(), v.n_b, v.n_a);
                engine_json.insert(e.name().into(), json!({"n_b": num(v.n_b), "n_a": num(v.n_a), "uncertainty": v.uncertainty.map(num)}));
            }
            Err(err) => {
                let _ = writeln!(text, "{:<15} failed: {err}", e.name());
                engine_json.insert(e.name().into(), json!({"error": err.to_string()}));
            }
        }
    }
    if let Some(t) = row.t_eff {
        let _ = writeln!(text, "t_eff           {t}");
    }
    let jc = closed_form::jc_cooling_limit(&cfg, DEFAULT_REGIME_RATIO);
    let sb = closed_form::sideband_cooling_limit(&cfg, DEFAULT_RESOLVED_RATIO)?;
    let strong = closed_form::resonant_strong_drive_population(&cfg).ok();
    let _ = writeln!(text, "jc_limit        {} (regime {})", jc.limit, if jc.regime_holds { "holds" } else { "does not hold" });
    let _ = writeln!(
        text,
        "sideband_limit  {} at delta = {} ({})",
        sb.limit,
        sb.optimal_detuning,
        if sb.resolved { "resolved" } else { "unresolved" }
    );
    if let Some(s) = strong {
        let _ = writeln!(text, "strong_drive    {s}");
    }
    let mut flags = Vec::new();
    if cfg.amplitude() == 0.0 {
        flags.push("no cooling (decoupled)".to_string());
    }
    if jc.regime_holds {
        flags.push("jc limit regime".into());
    }
    if sb.resolved {
        flags.push("resolved sideband".into());
    }
    let rwa = validate_rwa(&cfg, DEFAULT_RWA_STRICTNESS);
    flags.extend(rwa.warnings().into_iter().map(|w| format!("rwa: {w}")));
    for f in &flags {
        let _ = writeln!(text, "flag            {f}");
    }
    if !row.reason.is_empty() {
        let _ = writeln!(text, "note            {}", row.reason);
    }
    let value = json!({
        "coupling": cfg.coupling.name(),
        "delta": num(d.delta),
        "delta_c": num(d.cooling),
        "amplitude": num(cfg.amplitude()),
        "xi": xi.map(num),
        "engines": engine_json,
        "t_eff": row.t_eff.map(num),
        "jc_limit": {"limit": num(jc.limit), "regime_holds": jc.regime_holds},
        "sideband_limit": {"limit": num(sb.limit), "optimal_delta": num(sb.optimal_detuning), "resolved": sb.resolved},
        "strong_drive_limit": strong.map(num),
        "flags": flags,
        "reason": row.reason,
    });
    emit_report(global.out.as_deref(), &text, &value)?;
    for (_, r) in &row.results {
        if let Err(e @ Error::Capacity(_)) = r {
            return Err(Failure::new(4, e.to_string()));
        }
    }
    if row.all_failed() {
        return Err(Failure::new(1, "every engine failed"));
    }
    Ok(())
}

fn run_evolve(
    global: &Global,
    t_final: f64,
    points: usize,
    engine: EvolveEngine,
    dims: &Option<Vec<usize>>,
) -> CliResult<()> {
    let (cfg, bytes) = load(global)?;
    if points < 2 {
        return Err(Failure::new(2, "--points must be at least 2"));
    }
    let times: Vec<f64> = (0..points)
        .map(|k| if k + 1 == points { t_final } else { t_final * k as f64 / (points - 1) as f64 })
        .collect();
    let tol = global.tol.unwrap_or(1e-8);
    let mut csv = String::new();
    let _ = writeln!(csv, "# tool: sideband {}", env!("CARGO_PKG_VERSION"));
    if let Some(ts) = timestamp(global) {
        let _ = writeln!(csv, "# timestamp: {ts}");
    }
    let _ = writeln!(csv, "# config_sha256: {}", sweep::sha256_hex(&bytes));
    let f = sweep::format_float;
    match engine {
        EvolveEngine::Rate => {
            let traj = rate::evolve_moments_at(&MomentState::thermal(&cfg), &cfg, &times, tol)?;
            let _ = writeln!(csv, "# engine: rate");
            let _ = writeln!(csv, "t,n_a,n_b,sigma_re,sigma_im");
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let _ = writeln!(csv, "{},{},{},{},{}", f(*t), f(s.n_a), f(s.n_b), f(s.sigma.re), f(s.sigma.im));
            }
        }
        EvolveEngine::Lindblad => {
            let dims = match dims_arg(dims)? {
                Some(d) => d,
                None => lindblad::truncation_check(&cfg, FockDims::new(2, 2)?, 1e-3, lindblad::DEFAULT_MAX_TOTAL_DIM)?,
            };
            let rho0 = DensityMatrix::thermal(dims, cfg.nbar_a(), cfg.nbar_b());
            let states = lindblad::evolve_density_at(&rho0, &cfg, &times, tol)?;
            let _ = writeln!(csv, "# engine: lindblad ({}, {})", dims.dim_a, dims.dim_b);
            let _ = writeln!(csv, "t,n_a,n_b");
            for (t, s) in times.iter().zip(&states) {
                let (na, nb) = s.occupations();
                let _ = writeln!(csv, "{},{},{}", f(*t), f(na), f(nb));
            }
        }
    }
    emit_text(global.out.as_deref(), &csv)
}

#[allow(clippy::too_many_arguments)]
fn run_sweep_cmd(
    global: &Global,
    param: ParamArg,
    start: f64,
    stop: f64,
    points: usize,
    spacing: SpacingArg,
    engines: &[EngineArg],
    n_traj: usize,
) -> CliResult<()> {
    let (cfg, bytes) = load(global)?;
    let spec = SweepSpec {
        parameter: param.into(),
        start,
        stop,
        points,
        spacing: match spacing {
            SpacingArg::Linear => Spacing::Linear,
            SpacingArg::Log => Spacing::Log,
        },
        engines: engines.iter().map(|&e| e.into()).collect(),
    };
    let opts = EngineOptions {
        langevin: LangevinOptions {
            n_traj,
            ..LangevinOptions::default()
        },
        ..engine_options(global)
    };
    let result = sweep::run_sweep(&cfg, &spec, &opts, global.threads, sweep::sha256_hex(&bytes))?;
    let csv = result.to_csv_string(timestamp(global).as_deref())?;
    emit_text(global.out.as_deref(), &csv)?;
    if result.all_failed() {
        return Err(Failure::new(3, "every sweep point failed"));
    }
    Ok(())
}

fn run_lindblad(global: &Global, dims: &Option<Vec<usize>>) -> CliResult<()> {
    let (cfg, _) = load(global)?;
    let tol = global.tol.unwrap_or(1e-3);
    let sol = match dims_arg(dims)? {
        Some(d) => lindblad::steady_density(&cfg, d, &lindblad::SteadyOptions::default())?,
        None => lindblad::truncated_steady(&cfg, FockDims::new(2, 2)?, tol, lindblad::DEFAULT_MAX_TOTAL_DIM)?,
    };
    let r = sol.rho.physical_report();
    let d = sol.rho.dims;
    let mut text = String::new();
    let _ = writeln!(text, "dims            ({}, {})", d.dim_a, d.dim_b);
    let _ = writeln!(text, "n_b             {}", sol.n_b);
    let _ = writeln!(text, "n_a             {}", sol.n_a);
    let _ = writeln!(text, "residual        {:e}", sol.residual);
    let _ = writeln!(text, "truncation_ok   {}", sol.truncation_flag);
    let _ = writeln!(text, "trace_dev       {:e}", r.trace_deviation);
    let _ = writeln!(text, "hermiticity_dev {:e}", r.hermiticity_deviation);
    let _ = writeln!(text, "min_eigenvalue  {:e}", r.min_eigenvalue);
    let value = json!({
        "dims": [d.dim_a, d.dim_b],
        "n_b": num(sol.n_b),
        "n_a": num(sol.n_a),
        "residual": num(sol.residual),
        "truncation_ok": sol.truncation_flag,
        "trace_deviation": num(r.trace_deviation),
        "hermiticity_deviation": num(r.hermiticity_deviation),
        "min_eigenvalue": num(r.min_eigenvalue),
    });
    emit_report(global.out.as_deref(), &text, &value)
}

#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    global: &Global,
    atoms: usize,
    delta: f64,
    omega_b: f64,
    omega: f64,
    init: &[usize],
    t_final: f64,
    points: usize,
) -> CliResult<()> {
    let cfg = AtomicConfig::new(atoms, delta, omega_b, omega)?;
    let &[m_a, n_b] = init else {
        return Err(Failure::new(2, "--init takes two values"));
    };
    if points < 2 || !(t_final > 0.0) {
        return Err(Failure::new(2, "need --points ≥ 2 and --t-final > 0"));
    }
    let times: Vec<f64> = (0..points).map(|k| t_final * k as f64 / (points - 1) as f64).collect();
    let r = atomic::compare_dynamics(&cfg, (m_a, n_b), &times)?;
    let f = sweep::format_float;
    let mut csv = String::new();
    let _ = writeln!(csv, "# tool: sideband {}", env!("CARGO_PKG_VERSION"));
    if let Some(ts) = timestamp(global) {
        let _ = writeln!(csv, "# timestamp: {ts}");
    }
    let _ = writeln!(csv, "# atoms: {atoms}, initial: ({m_a}, {n_b})");
    let _ = writeln!(csv, "# max_deviation: {}", f(r.max_deviation));
    let _ = writeln!(csv, "# symmetry_deviation: {}", f(r.symmetry_deviation));
    let _ = writeln!(csv, "t,atomic_n_b,bosonic_n_b,deviation");
    for k in 0..times.len() {
        let (a, b) = (r.atomic_n_b[k], r.bosonic_n_b[k]);
        let _ = writeln!(csv, "{},{},{},{}", f(times[k]), f(a), f(b), f((a - b).abs()));
    }
    emit_text(global.out.as_deref(), &csv)?;
    eprintln!("max deviation {:e}", r.max_deviation);
    Ok(())
}

fn run_linearize(global: &Global) -> CliResult<()> {
    let (cfg, _) = load(global)?;
    let model = DrivenModel::from_config(&cfg)?;
    let tol = global.tol.unwrap_or(1e-12);
    let lin = linearization::linearize(&model, tol)?;
    let res = linearization::expansion_residual(&model, lin.alpha, lin.beta, linearization::DEFAULT_FD_STEP);
    let eq = &lin.equilibrium;
    let mut text = String::new();
    let _ = writeln!(text, "alpha           {} {:+}i", lin.alpha.re, lin.alpha.im);
    let _ = writeln!(text, "beta            {} {:+}i", lin.beta.re, lin.beta.im);
    let _ = writeln!(text, "delta_eff       {}", lin.delta_eff);
    let _ = writeln!(text, "g_eff           {} {:+}i", lin.g_eff.re, lin.g_eff.im);
    let _ = writeln!(text, "residual        {:e}", lin.residual);
    let _ = writeln!(text, "linear_fd       {:e}", res.linear);
    let _ = writeln!(text, "quadratic_fd    {:e}", res.quadratic);
    let _ = writeln!(text, "method          {:?}", eq.method);
    for (k, root) in eq.roots.iter().enumerate() {
        let mark = if eq.default_root == Some(k) { "  (default)" } else { "" };
        let _ = writeln!(text, "root {k}          alpha = {}  beta = {}{mark}", root.alpha, root.beta);
    }
    if eq.is_multistable() {
        let _ = writeln!(text, "flag            multistable ({} real roots)", eq.roots.len());
    }
    let value = json!({
        "alpha": [num(lin.alpha.re), num(lin.alpha.im)],
        "beta": [num(lin.beta.re), num(lin.beta.im)],
        "delta_eff": num(lin.delta_eff),
        "g_eff": [num(lin.g_eff.re), num(lin.g_eff.im)],
        "residual": num(lin.residual),
        "linear_fd_residual": num(res.linear),
        "quadratic_fd_mismatch": num(res.quadratic),
        "roots": eq.roots.iter().enumerate().map(|(k, r)| json!({
            "alpha": num(r.alpha), "beta": num(r.beta), "residual": num(r.residual),
            "default": eq.default_root == Some(k),
        })).collect::<Vec<_>>(),
        "multistable": eq.is_multistable(),
    });
    emit_report(global.out.as_deref(), &text, &value)
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    if let Some(tol) = g.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Failure::new(2, format!("--tol must lie in (0, 1), got {tol}")));
        }
    }
    if g.threads == Some(0) {
        return Err(Failure::new(2, "--threads must be positive"));
    }
    match &cli.command {
        Command::Steady { engines } => run_steady(g, engines),
        Command::Evolve {
            t_final,
            points,
            engine,
            dims,
        } => run_evolve(g, *t_final, *points, *engine, dims),
        Command::Sweep {
            param,
            start,
            stop,
            points,
            spacing,
            engines,
            n_traj,
        } => run_sweep_cmd(g, *param, *start, *stop, *points, *spacing, engines, *n_traj),
        Command::Lindblad { dims } => run_lindblad(g, dims),
        Command::Ensemble {
            atoms,
            delta,
            omega_b,
            omega,
            init,
            t_final,
            points,
        } => run_ensemble(g, *atoms, *delta, *omega_b, *omega, init, *t_final, *points),
        Command::Linearize => run_linearize(g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
