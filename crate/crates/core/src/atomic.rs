//! Exact simulation of `N` three-level atoms `{|g⟩, |a⟩, |b⟩}` in the
//! rotating frame,
//!
//! ```text
//! H = Δ Σᵢ σ_aa⁽ⁱ⁾ + ω_b Σᵢ σ_bb⁽ⁱ⁾ + Ω Σᵢ (σ_ba⁽ⁱ⁾ + σ_ab⁽ⁱ⁾)
//! ```
//!
//! and of the collective operators `â = Σᵢ σ_ga⁽ⁱ⁾/√N`, `b̂ = Σᵢ σ_gb⁽ⁱ⁾/√N`
//! that become independent bosons for `N → ∞` at low excitation.
//!
//! Product states are indexed in base 3 with atom 0 as the most significant
//! digit and levels `g = 0`, `a = 1`, `b = 2`. The Hamiltonian is real in
//! this basis, so evolution uses a real symmetric eigendecomposition.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{self, CMatrix, FockDims, C64};
use crate::model::SystemConfig;

pub const MAX_ATOMS: usize = 6;

const G: usize = 0;
const A: usize = 1;
const B: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicConfig {
    pub n_atoms: usize,
    pub delta: f64,
    pub omega_b: f64,
    pub omega: f64,
}

impl AtomicConfig {
    pub fn new(n_atoms: usize, delta: f64, omega_b: f64, omega: f64) -> Result<Self> {
        check_atoms(n_atoms)?;
        for (name, v) in [("delta", delta), ("omega_b", omega_b), ("omega", omega)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        Ok(AtomicConfig {
            n_atoms,
            delta,
            omega_b,
            omega,
        })
    }

    pub fn dim(&self) -> usize {
        3usize.pow(self.n_atoms as u32)
    }
}

fn check_atoms(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ATOMS {
        return Err(Error::Capacity(format!(
            "atom count must lie in [1, {MAX_ATOMS}] (3^N ≤ 729), got {n}"
        )));
    }
    Ok(())
}

fn level(state: usize, atom: usize, n: usize) -> usize {
    (state / 3usize.pow((n - 1 - atom) as u32)) % 3
}

fn with_level(state: usize, atom: usize, n: usize, new: usize) -> usize {
    let p = 3usize.pow((n - 1 - atom) as u32);
    state - level(state, atom, n) * p + new * p
}

/// `Σᵢ |to⟩⟨from|⁽ⁱ⁾` on the product space, as a real matrix.
fn collective_transition(n: usize, to: usize, from: usize) -> DMatrix<f64> {
    let d = 3usize.pow(n as u32);
    let mut m = DMatrix::zeros(d, d);
    for s in 0..d {
        for atom in 0..n {
            if level(s, atom, n) == from {
                m[(with_level(s, atom, n, to), s)] += 1.0;
            }
        }
    }
    m
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

fn real_hamiltonian(cfg: &AtomicConfig) -> DMatrix<f64> {
    let n = cfg.n_atoms;
    collective_transition(n, A, A) * cfg.delta
        + collective_transition(n, B, B) * cfg.omega_b
        + (collective_transition(n, B, A) + collective_transition(n, A, B)) * cfg.omega
}

/// Rotating-frame Hamiltonian on the full `3^N` product space.
pub fn build_atomic_hamiltonian(cfg: &AtomicConfig) -> Result<CMatrix> {
    check_atoms(cfg.n_atoms)?;
    Ok(to_complex(&real_hamiltonian(cfg)))
}

/// Total non-ground population `Σᵢ (σ_aa⁽ⁱ⁾ + σ_bb⁽ⁱ⁾)`.
pub fn excitation_number(n_atoms: usize) -> Result<CMatrix> {
    check_atoms(n_atoms)?;
    Ok(to_complex(
        &(collective_transition(n_atoms, A, A) + collective_transition(n_atoms, B, B)),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveOps {
    pub n_atoms: usize,
    pub op_a: CMatrix,
    pub op_b: CMatrix,
    /// Unnormalized sums `Σᵢ σ_gC⁽ⁱ⁾`, integer valued.
    raw_a: DMatrix<f64>,
    raw_b: DMatrix<f64>,
}

pub fn collective_operators(n_atoms: usize) -> Result<CollectiveOps> {
    check_atoms(n_atoms)?;
    let s = 1.0 / (n_atoms as f64).sqrt();
    let raw_a = collective_transition(n_atoms, G, A);
    let raw_b = collective_transition(n_atoms, G, B);
    Ok(CollectiveOps {
        n_atoms,
        op_a: to_complex(&(&raw_a * s)),
        op_b: to_complex(&(&raw_b * s)),
        raw_a,
        raw_b,
    })
}

impl CollectiveOps {
    /// `[Ĉ, Ĉ†]` for `C = a` (`b_mode == false`) or `C = b`, formed from the
    /// integer sums and divided by `N` once, so entries are exact ratios.
    pub fn self_commutator(&self, b_mode: bool) -> CMatrix {
        let r = if b_mode { &self.raw_b } else { &self.raw_a };
        let rt = r.transpose();
        to_complex(&((r * &rt - &rt * r) / self.n_atoms as f64))
    }

    /// `[â, b̂†]`, which equals `−Σᵢ σ_ba⁽ⁱ⁾ / N`.
    pub fn cross_commutator(&self) -> CMatrix {
        let bt = self.raw_b.transpose();
        to_complex(&((&self.raw_a * &bt - &bt * &self.raw_a) / self.n_atoms as f64))
    }

    pub fn dim(&self) -> usize {
        self.op_a.nrows()
    }

    pub fn vacuum(&self) -> DVector<C64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = Complex::new(1.0, 0.0);
        v
    }

    /// `(â†)^m_a (b̂†)^n_b |g…g⟩`, normalized.
    pub fn symmetric_state(&self, m_a: usize, n_b: usize) -> Result<DVector<C64>> {
        let ad = self.op_a.adjoint();
        let bd = self.op_b.adjoint();
        let mut v = self.vacuum();
        for _ in 0..n_b {
            v = &bd * v;
        }
        for _ in 0..m_a {
            v = &ad * v;
        }
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(Error::Precondition(format!(
                "({m_a}, {n_b}) excitations do not fit in {} atoms",
                self.n_atoms
            )));
        }
        Ok(v / Complex::new(norm, 0.0))
    }
}

#[cfg(test)]
fn commutator(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y - y * x
}

/// `max_C ‖([Ĉ, Ĉ†] − 1)|ψ⟩‖` over `C ∈ {a, b}`.
pub fn bosonization_error(ops: &CollectiveOps, state: &DVector<C64>) -> Result<f64> {
    if state.len() != ops.dim() {
        return Err(Error::Domain(format!(
            "state has length {}, expected {}",
            state.len(),
            ops.dim()
        )));
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("state is not normalized (norm {norm})")));
    }
    let mut worst = 0.0f64;
    for b_mode in [false, true] {
        let v = ops.self_commutator(b_mode) * state - state;
        worst = worst.max(v.norm());
    }
    Ok(worst)
}

/// Convenience wrapper building the operators for `n_atoms`.
pub fn bosonization_error_for(n_atoms: usize, state: &DVector<C64>) -> Result<f64> {
    bosonization_error(&collective_operators(n_atoms)?, state)
}

/// Exact unitary propagator `t ↦ e^{−iHt}` for a real symmetric `H`.
struct Propagator {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Propagator {
    fn new(h: DMatrix<f64>) -> Self {
        Propagator {
            eig: SymmetricEigen::new(h),
        }
    }

    fn evolve(&self, psi0: &DVector<C64>, t: f64) -> DVector<C64> {
        let v = &self.eig.eigenvectors;
        let vc = to_complex(v);
        let mut coeff = vc.transpose() * psi0;
        for (k, e) in self.eig.eigenvalues.iter().enumerate() {
            coeff[k] *= Complex::new(0.0, -e * t).exp();
        }
        vc * coeff
    }
}

fn expectation(op: &CMatrix, psi: &DVector<C64>) -> f64 {
    psi.dotc(&(op * psi)).re
}

/// Atomic and bosonic `⟨n̂_b⟩(t)` for the same parameters and excitations.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsComparison {
    pub n_atoms: usize,
    pub initial: (usize, usize),
    pub times: Vec<f64>,
    pub atomic_n_b: Vec<f64>,
    pub bosonic_n_b: Vec<f64>,
    pub max_deviation: f64,
    /// Largest change of the atomic state under an atom swap or cyclic
    /// shift; zero when the evolution stays in the symmetric subspace.
    pub symmetry_deviation: f64,
}

fn permutation_deviation(psi: &DVector<C64>, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let d = psi.len();
    let mut worst = 0.0f64;
    let permuted = |map: &dyn Fn(usize) -> usize| -> f64 {
        (0..d).map(|s| (psi[map(s)] - psi[s]).norm()).fold(0.0, f64::max)
    };
    let swap = |s: usize| {
        let (l0, l1) = (level(s, 0, n), level(s, 1, n));
        with_level(with_level(s, 0, n, l1), 1, n, l0)
    };
    let shift = |s: usize| {
        let mut out = 0;
        for atom in 0..n {
            out = with_level(out, (atom + 1) % n, n, level(s, atom, n));
        }
        out
    };
    worst = worst.max(permuted(&swap));
    worst.max(permuted(&shift))
}

/// Evolves the symmetric atomic state with `(m_a, n_b)` excitations and
/// the two-oscillator model from `|m_a⟩|n_b⟩`, both without dissipation.
pub fn compare_dynamics(cfg: &AtomicConfig, initial: (usize, usize), t_grid: &[f64]) -> Result<DynamicsComparison> {
    let (m_a, n_b) = initial;
    if m_a + n_b > 2 {
        return Err(Error::Precondition(format!(
            "at most two excitations are supported, got ({m_a}, {n_b})"
        )));
    }
    let ops = collective_operators(cfg.n_atoms)?;
    let psi0 = ops.symmetric_state(m_a, n_b)?;
    let atomic = Propagator::new(real_hamiltonian(cfg));
    let nb_atomic_op = ops.op_b.adjoint() * &ops.op_b;

    let levels = m_a + n_b + 1;
    let dims = FockDims::new(levels.max(2), levels.max(2))?;
    // b̂ → −b̂ maps Ω → −Ω without changing ⟨n̂_b⟩
    let boson_cfg = SystemConfig::beam_splitter(cfg.delta, cfg.omega_b, cfg.omega.abs(), 0.0, 0.0, 0.0, 0.0)?;
    let hb = lindblad::build_hamiltonian(&boson_cfg, dims)?;
    let bosonic = Propagator::new(hb.map(|z| z.re));
    let (_, b) = lindblad::ladder_operators(dims);
    let nb_boson_op = b.adjoint() * &b;
    let mut phi0 = DVector::<C64>::zeros(dims.total());
    phi0[dims.index(m_a, n_b)] = Complex::new(1.0, 0.0);

    let mut out = DynamicsComparison {
        n_atoms: cfg.n_atoms,
        initial,
        times: t_grid.to_vec(),
        atomic_n_b: Vec::with_capacity(t_grid.len()),
        bosonic_n_b: Vec::with_capacity(t_grid.len()),
        max_deviation: 0.0,
        symmetry_deviation: 0.0,
    };
    for &t in t_grid {
        let psi = atomic.evolve(&psi0, t);
        let phi = bosonic.evolve(&phi0, t);
        let na = expectation(&nb_atomic_op, &psi);
        let nb = expectation(&nb_boson_op, &phi);
        out.max_deviation = out.max_deviation.max((na - nb).abs());
        out.symmetry_deviation = out.symmetry_deviation.max(permutation_deviation(&psi, cfg.n_atoms));
        out.atomic_n_b.push(na);
        out.bosonic_n_b.push(nb);
    }
    Ok(out)
}

/// Runs independent comparisons in parallel, returning results in input
/// order.
pub fn compare_many(
    cases: &[(AtomicConfig, (usize, usize))],
    t_grid: &[f64],
) -> Vec<Result<DynamicsComparison>> {
    cases
        .par_iter()
        .map(|(cfg, init)| compare_dynamics(cfg, *init, t_grid))
        .collect()
}
