//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_complex::Complex;

use sideband_core::atomic::{self, AtomicConfig};
use sideband_core::closed_form;
use sideband_core::lindblad::{self, FockDims, PhysicalReport, SteadySolution};
use sideband_core::linearization::{self, DrivenModel, FSpec, DEFAULT_FD_STEP};
use sideband_core::rate;
use sideband_core::sweep::{self, Engine, EngineOptions, LangevinOptions, Spacing, SweepParameter, SweepSpec};
use sideband_core::SystemConfig;

/// Physical-state reports gathered from every Lindblad run for criterion 10.
static REPORTS: Mutex<Vec<(String, PhysicalReport)>> = Mutex::new(Vec::new());

fn record(label: impl Into<String>, r: PhysicalReport) {
    REPORTS.lock().unwrap().push((label.into(), r));
}

fn lindblad_steady(cfg: &SystemConfig, label: &str) -> SteadySolution {
    let s = lindblad::truncated_steady(cfg, FockDims::new(2, 2).unwrap(), 1e-3, lindblad::DEFAULT_MAX_TOTAL_DIM)
        .unwrap_or_else(|e| panic!("{label}: {e}"));
    record(label, s.rho.physical_report());
    s
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn xi_formula_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for &gb in &logspace(1e-4, 1.0, 5) {
        for &om in &logspace(0.1, 100.0, 5) {
            for &dd in &linspace(-10.0, 10.0, 5) {
                for &nb in &logspace(0.1, 1e4, 5) {
                    let cfg = SystemConfig::beam_splitter(1.0 + dd, 1.0, om, 1.0, gb, 0.0, nb).unwrap();
                    let cf = closed_form::steady_population(&cfg).unwrap().0;
                    let rt = rate::steady_moments(&cfg).unwrap().n_b;
                    worst = worst.max((cf - rt).abs() / cf.abs());
                }
            }
        }
    }
    check(worst < 1e-10, format!("625 points, max relative error {worst:.2e}"))
}

fn criterion2_config() -> SystemConfig {
    SystemConfig::beam_splitter(1.0, 1.0, 100.0, 1.0, 0.01, 0.0, 100.0).unwrap()
}

fn strong_drive_limit() -> Outcome {
    let cfg = criterion2_config();
    let cf = closed_form::steady_population(&cfg).unwrap().0;
    let rt = rate::steady_moments(&cfg).unwrap().n_b;
    let target = 0.990099;
    check(
        (cf - target).abs() < 1e-3 && (rt - target).abs() < 1e-3,
        format!("closed form {cf:.6}, rate {rt:.6}, target {target}"),
    )
}

fn lindblad_moment_agreement() -> Outcome {
    let cfg = SystemConfig::beam_splitter(5.0, 5.0, 3.0, 1.0, 0.05, 0.0, 1.0).unwrap();
    let dims = lindblad::truncation_check(&cfg, FockDims::new(2, 2).unwrap(), 1e-3, lindblad::DEFAULT_MAX_TOTAL_DIM)
        .map_err(|e| e.to_string())?;
    let s = lindblad::steady_density(&cfg, dims, &lindblad::SteadyOptions::default()).map_err(|e| e.to_string())?;
    record("criterion 3", s.rho.physical_report());
    let cf = closed_form::steady_population(&cfg).unwrap().0;
    let rel = (s.n_b - cf).abs() / cf;
    check(
        rel < 0.01 && (cf - 0.0489).abs() < 1e-4,
        format!(
            "dims ({}, {}), oracle {:.6}, closed form {cf:.6}, relative gap {rel:.2e}",
            dims.dim_a, dims.dim_b, s.n_b
        ),
    )
}

fn sideband_limit_sweep() -> Outcome {
    let cfg = SystemConfig::full(1.0, 1.0, 0.02, 0.2, 1e-4, 0.0, 0.5).unwrap();
    let spec = SweepSpec {
        parameter: SweepParameter::Delta,
        start: 0.5,
        stop: 1.5,
        points: 41,
        spacing: Spacing::Linear,
        engines: vec![Engine::Lindblad],
    };
    let result =
        sweep::run_sweep(&cfg, &spec, &EngineOptions::default(), None, String::new()).map_err(|e| e.to_string())?;
    let mut best = (f64::INFINITY, f64::NAN);
    for row in &result.rows {
        let v = row.get(Engine::Lindblad).ok_or_else(|| format!("Δ = {}: {}", row.value, row.reason))?;
        if let Some(r) = v.physical {
            record(format!("criterion 4, Δ = {}", row.value), r);
        }
        if v.n_b < best.0 {
            best = (v.n_b, row.value);
        }
    }
    let limit = closed_form::sideband_cooling_limit(&cfg, closed_form::DEFAULT_RESOLVED_RATIO).unwrap();
    let step = 1.0 / 40.0;
    let rel = (best.0 - limit.limit).abs() / limit.limit;
    let steps_off = (best.1 - limit.optimal_detuning).abs() / step;
    check(
        rel < 0.3 && steps_off <= 2.0 + 1e-9,
        format!(
            "min n_b {:.5} at Δ = {:.4}; limit {:.5} at Δ = {:.4}; gap {:.1}%, {:.2} grid steps",
            best.0,
            best.1,
            limit.limit,
            limit.optimal_detuning,
            100.0 * rel,
            steps_off
        ),
    )
}

fn limit_breaking() -> Outcome {
    let (ga, wb) = (0.2, 1.0);
    let cfg = SystemConfig::beam_splitter(wb, wb, 10.0 * ga, ga, 1e-4, 1e-4, 0.5).unwrap();
    let bound = 0.2 * ga * ga / (4.0 * wb * wb);
    let rt = rate::steady_moments(&cfg).unwrap().n_b;
    let lb = lindblad_steady(&cfg, "criterion 5").n_b;
    check(
        rt < bound && lb < bound,
        format!("rate {rt:.3e}, Lindblad {lb:.3e}, bound {bound:.3e}"),
    )
}

fn heating_cooling_asymmetry() -> Outcome {
    // γ_b = 10⁻⁴ makes the Δ = −ω_b point parametrically unstable
    // (4g²/γ_a > γ_b); 0.05 keeps it stable with margin.
    let (wb, g, ga, gb, nb) = (1.0, 0.02, 0.2, 0.05, 0.5);
    let full = |d: f64| {
        let cfg = SystemConfig::full(d, wb, g, ga, gb, 0.0, nb).unwrap();
        lindblad_steady(&cfg, &format!("criterion 6, full, Δ = {d}")).n_b
    };
    let (cool, mid, heat) = (full(wb), full(0.0), full(-wb));
    let bs = SystemConfig::beam_splitter(-wb, wb, g, ga, gb, 0.0, nb).unwrap();
    let bs_heat = lindblad_steady(&bs, "criterion 6, beam splitter, Δ = −ω_b").n_b;
    check(
        cool < mid && mid < heat && bs_heat <= nb + 1e-6,
        format!("full: {cool:.4} < {mid:.4} < {heat:.4}; beam splitter at Δ = −ω_b: {bs_heat:.4} (n̄_b = {nb})"),
    )
}

fn bosonization() -> Outcome {
    let grid = linspace(0.0, 20.0, 81);
    let mut single: f64 = 0.0;
    for n in 1..=6 {
        let cfg = AtomicConfig::new(n, 1.0, 1.0, 0.3).unwrap();
        let r = atomic::compare_dynamics(&cfg, (0, 1), &grid).map_err(|e| e.to_string())?;
        single = single.max(r.max_deviation);
    }
    let two: Vec<f64> = (3..=5)
        .map(|n| {
            let cfg = AtomicConfig::new(n, 1.0, 1.0, 0.3).unwrap();
            atomic::compare_dynamics(&cfg, (0, 2), &grid).unwrap().max_deviation
        })
        .collect();
    let mut vacuum_exact = true;
    for n in 1..=6 {
        let ops = atomic::collective_operators(n).unwrap();
        let vac = ops.vacuum();
        for b_mode in [false, true] {
            let c = ops.self_commutator(b_mode);
            vacuum_exact &= vac.dotc(&(&c * &vac)) == Complex::new(1.0, 0.0);
        }
    }
    check(
        single < 1e-10 && two[0] > two[1] && two[1] > two[2] && vacuum_exact,
        format!(
            "single-excitation max {single:.2e}; two-excitation N=3,4,5: {:.3e}, {:.3e}, {:.3e}; vacuum commutator exact: {vacuum_exact}",
            two[0], two[1], two[2]
        ),
    )
}

fn linearization_example() -> Outcome {
    let model = DrivenModel {
        spec: FSpec::number(),
        g_prime: 0.01,
        f_drive: 0.5,
        delta0: 1.0,
        omega_b: 0.1,
    };
    let lin = linearization::linearize(&model, 1e-12).map_err(|e| e.to_string())?;
    // fixed-point oracle: α = −(f + 2βg′α)/Δ₀, β = −g′α²/ω_b
    let (mut a, mut b) = (-0.5f64, 0.0f64);
    for _ in 0..200 {
        b = -0.01 * a * a / 0.1;
        a = -(0.5 + 2.0 * b * 0.01 * a) / 1.0;
    }
    let res = linearization::expansion_residual(&model, lin.alpha, lin.beta, DEFAULT_FD_STEP);
    let ok = (lin.alpha.re - a).abs() < 1e-10
        && (lin.beta.re - b).abs() < 1e-10
        && (lin.alpha.re + 0.50025).abs() < 1e-5
        && (lin.beta.re + 0.025025).abs() < 1e-6
        && (lin.delta_eff - 0.99950).abs() < 1e-5
        && (lin.g_eff.re + 0.0050025).abs() < 1e-7
        && res.linear < 1e-8
        && res.quadratic < 1e-6;
    check(
        ok,
        format!(
            "α {:.6}, β {:.6}, Δ_eff {:.6}, g_eff {:.7}; linear {:.1e}, quadratic {:.1e}",
            lin.alpha.re, lin.beta.re, lin.delta_eff, lin.g_eff.re, res.linear, res.quadratic
        ),
    )
}

fn langevin_monte_carlo() -> Outcome {
    let cfg = criterion2_config();
    let steady = rate::steady_moments(&cfg).unwrap().n_b;
    let run = |n_traj: usize| {
        let opts = EngineOptions {
            seed: 2024,
            langevin: LangevinOptions {
                n_traj,
                ..LangevinOptions::default()
            },
            ..EngineOptions::default()
        };
        sweep::run_engine(Engine::Langevin, &cfg, &opts).unwrap()
    };
    let runs: Vec<_> = [100, 1000, 10000].into_iter().map(|n| (n, run(n))).collect();
    let big = &runs[2].1;
    let se = big.uncertainty.unwrap();
    let z = (big.n_b - steady).abs() / se;
    // least-squares slope of log SE against log n_traj
    let pts: Vec<(f64, f64)> = runs
        .iter()
        .map(|(n, v)| ((*n as f64).ln(), v.uncertainty.unwrap().ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    check(
        z < 3.0 && (slope + 0.5).abs() <= 0.1,
        format!(
            "10⁴ trajectories: {:.5} ± {se:.5} vs rate {steady:.5} ({z:.2} SE); SE slope {slope:.3}",
            big.n_b
        ),
    )
}

fn invariants_and_determinism() -> Outcome {
    let reports = REPORTS.lock().unwrap().clone();
    let bad: Vec<&String> = reports.iter().filter(|(_, r)| !r.is_physical()).map(|(l, _)| l).collect();
    let worst = |f: fn(&PhysicalReport) -> f64| reports.iter().map(|(_, r)| f(r)).fold(0.0f64, f64::max);
    let trace = worst(|r| r.trace_deviation);
    let herm = worst(|r| r.hermiticity_deviation);
    let min_eig = reports.iter().map(|(_, r)| r.min_eigenvalue).fold(f64::INFINITY, f64::min);

    let cfg = SystemConfig::beam_splitter(1.0, 1.0, 0.3, 1.0, 0.05, 0.0, 1.0).unwrap();
    let spec = SweepSpec {
        parameter: SweepParameter::Delta,
        start: 0.0,
        stop: 2.0,
        points: 9,
        spacing: Spacing::Linear,
        engines: vec![Engine::ClosedForm, Engine::Rate, Engine::Lindblad, Engine::Langevin],
    };
    let opts = EngineOptions {
        seed: 11,
        langevin: LangevinOptions {
            n_traj: 200,
            ..LangevinOptions::default()
        },
        ..EngineOptions::default()
    };
    let csv = |threads| {
        sweep::run_sweep(&cfg, &spec, &opts, Some(threads), "0".repeat(64))
            .and_then(|r| r.to_csv_string(None))
            .unwrap()
    };
    let identical = csv(1) == csv(3) && csv(1) == csv(1);
    check(
        bad.is_empty() && !reports.is_empty() && identical,
        format!(
            "{} Lindblad states, max trace dev {trace:.1e}, max Hermiticity dev {herm:.1e}, min eigenvalue {min_eig:.1e}{}; CSV byte-identical: {identical}",
            reports.len(),
            if bad.is_empty() { String::new() } else { format!(", unphysical: {bad:?}") }
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("ξ-formula equivalence", Duration::from_secs(1), xi_formula_equivalence),
        ("resonant strong-drive limit", Duration::from_secs(1), strong_drive_limit),
        ("Lindblad–moment agreement", Duration::from_secs(30), lindblad_moment_agreement),
        ("sideband cooling limit", Duration::from_secs(300), sideband_limit_sweep),
        ("limit-breaking claim", Duration::from_secs(60), limit_breaking),
        ("heating/cooling asymmetry", Duration::from_secs(120), heating_cooling_asymmetry),
        ("bosonization validation", Duration::from_secs(60), bosonization),
        ("linearization", Duration::from_secs(1), linearization_example),
        ("Langevin Monte Carlo", Duration::from_secs(120), langevin_monte_carlo),
        ("physical-state invariants", Duration::from_secs(600), invariants_and_determinism),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let over = elapsed > *budget;
        let (ok, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.2} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
