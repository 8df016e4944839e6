//! Truncated-Fock-space master equation for the two oscillators.
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_{C=a,b} γ_C(n̄_C + 1) D[C]ρ + γ_C n̄_C D[C†]ρ
//! D[X]ρ = XρX† − ½{X†X, ρ}
//! ```
//!
//! Basis states `|m⟩_a|n⟩_b` are indexed `m·dim_b + n`. Superoperators act on
//! column-stacked density matrices, `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linearization;
use crate::model::{CouplingKind, SystemConfig};
use crate::ode::{self, Tolerances};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Default bound on `dim_a · dim_b`.
pub const DEFAULT_MAX_TOTAL_DIM: usize = 4096;
/// Largest population sector (in density-matrix entries) solved by sparse
/// factorization; fill-in grows steeply beyond it, so larger problems use
/// long-time evolution. A full 128-state space has 16384 entries.
pub const NULL_SPACE_MAX_UNKNOWNS: usize = 16384;

const LINEARIZATION_TOL: f64 = 1e-12;

#[inline]
fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockDims {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl FockDims {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a < 2 || dim_b < 2 {
            return Err(Error::Precondition(format!(
                "Fock dimensions must be at least 2, got ({dim_a}, {dim_b})"
            )));
        }
        Ok(FockDims { dim_a, dim_b })
    }

    #[inline]
    pub fn total(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn check_capacity(&self, max_total: usize) -> Result<()> {
        if self.total() > max_total {
            return Err(Error::Capacity(format!(
                "Fock space ({}, {}) has dimension {} above the bound {max_total}",
                self.dim_a,
                self.dim_b,
                self.total()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, m: usize, n: usize) -> usize {
        m * self.dim_b + n
    }
}

fn destroy(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

/// Ladder operators `(a, b)` on the product space.
pub fn ladder_operators(dims: FockDims) -> (CMatrix, CMatrix) {
    let ia = CMatrix::identity(dims.dim_a, dims.dim_a);
    let ib = CMatrix::identity(dims.dim_b, dims.dim_b);
    (destroy(dims.dim_a).kronecker(&ib), ia.kronecker(&destroy(dims.dim_b)))
}

/// Total excitation number `a†a + b†b`.
pub fn number_operator(dims: FockDims) -> CMatrix {
    let d = dims.total();
    CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            c((i / dims.dim_b + i % dims.dim_b) as f64)
        } else {
            c(0.0)
        }
    })
}

/// Generalized couplings are linearized first and simulated as `Full`.
fn effective_config(config: &SystemConfig<f64>) -> Result<SystemConfig<f64>> {
    config.validate()?;
    Ok(linearization::reduce_to_full(config, LINEARIZATION_TOL)?.0)
}

/// Rotating-frame Hamiltonian on the truncated space.
pub fn build_hamiltonian(config: &SystemConfig<f64>, dims: FockDims) -> Result<CMatrix> {
    build_hamiltonian_bounded(config, dims, DEFAULT_MAX_TOTAL_DIM)
}

pub fn build_hamiltonian_bounded(
    config: &SystemConfig<f64>,
    dims: FockDims,
    max_total: usize,
) -> Result<CMatrix> {
    dims.check_capacity(max_total)?;
    let cfg = effective_config(config)?;
    let (a, b) = ladder_operators(dims);
    let ad = a.adjoint();
    let bd = b.adjoint();
    let mut h = (&ad * &a) * c(cfg.delta()) + (&bd * &b) * c(cfg.omega_b());
    let amp = c(cfg.amplitude());
    match cfg.coupling {
        CouplingKind::BeamSplitter => {
            h += (&ad * &b + &bd * &a) * amp;
        }
        CouplingKind::Full => {
            h += (&ad + &a) * (&bd + &b) * amp;
        }
        CouplingKind::Generalized { .. } => unreachable!("reduced above"),
    }
    Ok(h)
}

/// Jump operators with their rates folded in, paired with `L†L`.
fn jump_operators(config: &SystemConfig<f64>, dims: FockDims) -> Vec<(CMatrix, CMatrix)> {
    let (a, b) = ladder_operators(dims);
    let mut out = Vec::new();
    for (op, gamma, nbar) in [
        (a, config.gamma_a(), config.nbar_a()),
        (b, config.gamma_b(), config.nbar_b()),
    ] {
        let down = gamma * (nbar + 1.0);
        let up = gamma * nbar;
        if down > 0.0 {
            let l = &op * c(down.sqrt());
            let ldl = l.adjoint() * &l;
            out.push((l, ldl));
        }
        if up > 0.0 {
            let l = op.adjoint() * c(up.sqrt());
            let ldl = l.adjoint() * &l;
            out.push((l, ldl));
        }
    }
    out
}

/// Dense Liouvillian acting on column-stacked `ρ`.
pub fn build_liouvillian(config: &SystemConfig<f64>, dims: FockDims) -> Result<CMatrix> {
    let h = build_hamiltonian(config, dims)?;
    let cfg = effective_config(config)?;
    let d = dims.total();
    let id = CMatrix::identity(d, d);
    let mi = Complex::new(0.0, -1.0);
    let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * mi;
    for (j, jdj) in jump_operators(&cfg, dims) {
        l += j.conjugate().kronecker(&j);
        l -= id.kronecker(&jdj) * c(0.5);
        l -= jdj.transpose().kronecker(&id) * c(0.5);
    }
    Ok(l)
}

/// Density operator on the truncated product space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dims: FockDims,
    pub rho: CMatrix,
}

/// Deviations of a density matrix from a physical state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalReport {
    pub trace_deviation: f64,
    pub hermiticity_deviation: f64,
    pub min_eigenvalue: f64,
}

impl PhysicalReport {
    pub fn is_physical(&self) -> bool {
        self.trace_deviation < 1e-10 && self.hermiticity_deviation < 1e-10 && self.min_eigenvalue >= -1e-8
    }
}

impl DensityMatrix {
    pub fn from_matrix(dims: FockDims, rho: CMatrix) -> Result<Self> {
        let d = dims.total();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Precondition(format!(
                "density matrix is {}x{}, expected {d}x{d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(DensityMatrix { dims, rho })
    }

    /// Pure product state `|m⟩_a|n⟩_b`.
    pub fn fock(dims: FockDims, m: usize, n: usize) -> Result<Self> {
        if m >= dims.dim_a || n >= dims.dim_b {
            return Err(Error::Precondition(format!(
                "Fock state |{m},{n}> outside truncation ({}, {})",
                dims.dim_a, dims.dim_b
            )));
        }
        let d = dims.total();
        let mut rho = CMatrix::zeros(d, d);
        let k = dims.index(m, n);
        rho[(k, k)] = c(1.0);
        Ok(DensityMatrix { dims, rho })
    }

    /// Product of truncated, renormalized thermal states.
    pub fn thermal(dims: FockDims, nbar_a: f64, nbar_b: f64) -> Self {
        let weights = |dim: usize, nbar: f64| -> Vec<f64> {
            let q = if nbar > 0.0 { nbar / (nbar + 1.0) } else { 0.0 };
            let mut w: Vec<f64> = (0..dim).map(|k| q.powi(k as i32)).collect();
            w[0] = 1.0;
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            w
        };
        let wa = weights(dims.dim_a, nbar_a);
        let wb = weights(dims.dim_b, nbar_b);
        let d = dims.total();
        let mut rho = CMatrix::zeros(d, d);
        for m in 0..dims.dim_a {
            for n in 0..dims.dim_b {
                let k = dims.index(m, n);
                rho[(k, k)] = c(wa[m] * wb[n]);
            }
        }
        DensityMatrix { dims, rho }
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// `(⟨a†a⟩, ⟨b†b⟩)`.
    pub fn occupations(&self) -> (f64, f64) {
        let mut na = 0.0;
        let mut nb = 0.0;
        for m in 0..self.dims.dim_a {
            for n in 0..self.dims.dim_b {
                let k = self.dims.index(m, n);
                let p = self.rho[(k, k)].re;
                na += m as f64 * p;
                nb += n as f64 * p;
            }
        }
        (na, nb)
    }

    /// Marginal populations of the highest retained level of each mode.
    pub fn boundary_populations(&self) -> (f64, f64) {
        let (da, db) = (self.dims.dim_a, self.dims.dim_b);
        let top_a: f64 = (0..db).map(|n| self.rho[(self.dims.index(da - 1, n), self.dims.index(da - 1, n))].re).sum();
        let top_b: f64 = (0..da).map(|m| self.rho[(self.dims.index(m, db - 1), self.dims.index(m, db - 1))].re).sum();
        (top_a, top_b)
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (&self.rho * op).trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * c(0.5);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn physical_report(&self) -> PhysicalReport {
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        PhysicalReport {
            trace_deviation: (self.trace() - c(1.0)).norm(),
            hermiticity_deviation: herm,
            min_eigenvalue: self.min_eigenvalue(),
        }
    }

    fn to_real_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.rho.len());
        for z in self.rho.iter() {
            v.push(z.re);
            v.push(z.im);
        }
        v
    }

    fn from_real_vec(dims: FockDims, v: &[f64]) -> Self {
        let d = dims.total();
        let rho = CMatrix::from_iterator(d, d, v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])));
        DensityMatrix { dims, rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyMethod {
    /// Sparse null-space solve on the population sector; larger sectors are
    /// a capacity error.
    Auto,
    NullSpace,
    LongTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Long-time convergence threshold on `‖dρ/dt‖_max`.
    pub derivative_tol: f64,
    /// Threshold on boundary-level populations for `truncation_flag`.
    pub boundary_tol: f64,
    pub max_total: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            method: SteadyMethod::Auto,
            derivative_tol: 1e-8,
            boundary_tol: 1e-5,
            max_total: DEFAULT_MAX_TOTAL_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub rho: DensityMatrix,
    pub n_a: f64,
    pub n_b: f64,
    /// `‖L ρ‖_max`.
    pub residual: f64,
    /// Boundary-level populations are below the requested threshold.
    pub truncation_flag: bool,
    pub method: SteadyMethod,
}

fn check_unique(cfg: &SystemConfig<f64>) -> Result<()> {
    let (ga, gb) = (cfg.gamma_a(), cfg.gamma_b());
    let coupled = cfg.amplitude() > 0.0;
    if ga <= 0.0 && gb <= 0.0 {
        return Err(Error::Multiplicity("both modes are undamped".into()));
    }
    if !coupled && (ga <= 0.0 || gb <= 0.0) {
        let which = if ga <= 0.0 { "a" } else { "b" };
        return Err(Error::Multiplicity(format!(
            "mode {which} is undamped and decoupled"
        )));
    }
    Ok(())
}

/// Applies the Lindblad generator to `ρ` without forming the superoperator.
pub struct LindbladGenerator {
    h: CMatrix,
    jumps: Vec<(CMatrix, CMatrix)>,
    dims: FockDims,
}

impl LindbladGenerator {
    pub fn new(config: &SystemConfig<f64>, dims: FockDims, max_total: usize) -> Result<Self> {
        let h = build_hamiltonian_bounded(config, dims, max_total)?;
        let cfg = effective_config(config)?;
        Ok(LindbladGenerator {
            h,
            jumps: jump_operators(&cfg, dims),
            dims,
        })
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let hr = &self.h * rho;
        let mut out = (&hr - hr.adjoint_for_hermitian_product(rho, &self.h)) * Complex::new(0.0, -1.0);
        for (l, ldl) in &self.jumps {
            out += l * rho * l.adjoint();
            let anti = ldl * rho;
            out -= (&anti + anti.adjoint_for_hermitian_product(rho, ldl)) * c(0.5);
        }
        out
    }
}

trait HermitianProduct {
    /// `ρ X` computed as `(X ρ)†` when both are Hermitian; falls back to the
    /// direct product otherwise.
    fn adjoint_for_hermitian_product(&self, rho: &CMatrix, x: &CMatrix) -> CMatrix;
}

impl HermitianProduct for CMatrix {
    fn adjoint_for_hermitian_product(&self, rho: &CMatrix, x: &CMatrix) -> CMatrix {
        rho * x
    }
}

impl ode::OdeSystem<f64> for LindbladGenerator {
    fn dim(&self) -> usize {
        2 * self.dims.total() * self.dims.total()
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let rho = DensityMatrix::from_real_vec(self.dims, y).rho;
        let d = self.apply(&rho);
        for (k, z) in d.iter().enumerate() {
            dy[2 * k] = z.re;
            dy[2 * k + 1] = z.im;
        }
    }
}

fn solution(rho: DensityMatrix, residual: f64, opts: &SteadyOptions, method: SteadyMethod) -> SteadySolution {
    let (n_a, n_b) = rho.occupations();
    let (pa, pb) = rho.boundary_populations();
    SteadySolution {
        truncation_flag: pa < opts.boundary_tol && pb < opts.boundary_tol,
        rho,
        n_a,
        n_b,
        residual,
        method,
    }
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != c(0.0) {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Nonzero Liouvillian entries keyed by `(row, column)` of the
/// column-stacked representation.
pub fn sparse_liouvillian(config: &SystemConfig<f64>, dims: FockDims) -> Result<BTreeMap<(usize, usize), C64>> {
    let g = LindbladGenerator::new(config, dims, DEFAULT_MAX_TOTAL_DIM)?;
    let d = dims.total();
    let mut entries: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    let mut add = |row: usize, col: usize, v: C64| {
        *entries.entry((row, col)).or_insert(c(0.0)) += v;
    };
    // K = −iH − ½ Σ L†L acts from the left, K† from the right.
    let mut k = &g.h * Complex::new(0.0, -1.0);
    for (_, ldl) in &g.jumps {
        k -= ldl * c(0.5);
    }
    let kd = k.adjoint();
    for (i, m, v) in nonzeros(&k) {
        for j in 0..d {
            add(i + d * j, m + d * j, v);
        }
    }
    for (m, j, v) in nonzeros(&kd) {
        for i in 0..d {
            add(i + d * j, i + d * m, v);
        }
    }
    for (l, _) in &g.jumps {
        let nz = nonzeros(l);
        for &(i, m, u) in &nz {
            for &(j, n, w) in &nz {
                add(i + d * j, m + d * n, u * w.conj());
            }
        }
    }
    entries.retain(|_, v| *v != c(0.0));
    Ok(entries)
}

/// Column-stacked indices of the Liouvillian's invariant sector holding the
/// populations. The couplings conserve the bra–ket excitation difference
/// (beam splitter) or its parity (counter-rotating terms), so a unique
/// steady state has no weight outside this sector.
fn population_sector(entries: &BTreeMap<(usize, usize), C64>, d: usize) -> Vec<usize> {
    let n = d * d;
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(r, col) in entries.keys() {
        let (a, b) = (root(&mut parent, r), root(&mut parent, col));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut keep = vec![false; n];
    for i in 0..d {
        let r = root(&mut parent, i * d + i);
        keep[r] = true;
    }
    (0..n).filter(|&k| keep[root(&mut parent, k)]).collect()
}

struct SectorProblem {
    entries: BTreeMap<(usize, usize), C64>,
    sector: Vec<usize>,
}

fn sector_problem(config: &SystemConfig<f64>, dims: FockDims) -> Result<SectorProblem> {
    let entries = sparse_liouvillian(config, dims)?;
    let sector = population_sector(&entries, dims.total());
    Ok(SectorProblem { entries, sector })
}

fn null_space_steady(
    config: &SystemConfig<f64>,
    dims: FockDims,
    problem: SectorProblem,
    opts: &SteadyOptions,
) -> Result<SteadySolution> {
    let d = dims.total();
    let SectorProblem { entries, sector } = problem;
    let mut local = vec![usize::MAX; d * d];
    for (k, &g) in sector.iter().enumerate() {
        local[g] = k;
    }
    let n = sector.len();
    // ρ₀₀ is local index 0; its row is replaced by the trace condition.
    let mut triplets: Vec<Triplet<usize, usize, C64>> = entries
        .iter()
        .filter(|((r, _), _)| *r != 0 && local[*r] != usize::MAX)
        .map(|(&(r, col), &v)| Triplet::new(local[r], local[col], v))
        .collect();
    triplets.extend((0..d).map(|i| Triplet::new(0, local[i * d + i], c(1.0))));
    let singular = || Error::Multiplicity("Liouvillian null space is not one-dimensional".into());
    let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Precondition(format!("sparse Liouvillian: {e:?}")))?;
    let lu = m.sp_lu().map_err(|_| singular())?;
    let mut rhs = faer::Col::<C64>::zeros(n);
    rhs[0] = c(1.0);
    let x = lu.solve(&rhs);
    if (0..n).any(|k| !x[k].re.is_finite() || !x[k].im.is_finite()) {
        return Err(singular());
    }
    let mut full = CMatrix::zeros(d, d);
    for (k, &g) in sector.iter().enumerate() {
        full[(g % d, g / d)] = x[k];
    }
    let rho = DensityMatrix::from_matrix(dims, full)?;
    let generator = LindbladGenerator::new(config, dims, opts.max_total)?;
    let residual = max_norm(&generator.apply(&rho.rho));
    Ok(solution(rho, residual, opts, SteadyMethod::NullSpace))
}

fn max_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn long_time_steady(config: &SystemConfig<f64>, dims: FockDims, opts: &SteadyOptions) -> Result<SteadySolution> {
    let generator = LindbladGenerator::new(config, dims, opts.max_total)?;
    let start = DensityMatrix::thermal(dims, config.nbar_a(), config.nbar_b());
    let y0 = start.to_real_vec();
    let slowest = [config.gamma_a(), config.gamma_b()]
        .into_iter()
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let t_max = 1e3 / slowest.min(1.0).max(1e-12);
    // Explicit steps settle at the stability edge, where the derivative
    // stalls near `rtol·‖L‖`; keep that floor well under `derivative_tol`.
    let tol = Tolerances::new(1e-11, 1e-14);
    let mut stepper = ode::Dopri5::new(&generator, 0.0, &y0, tol);
    loop {
        stepper.step(t_max)?;
        let dmax = stepper.dy().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if dmax < opts.derivative_tol {
            break;
        }
        if stepper.t() >= t_max {
            return Err(Error::Integration {
                residual: dmax,
                reason: format!("no steady state reached by t = {t_max}"),
            });
        }
    }
    let rho = DensityMatrix::from_real_vec(dims, stepper.y());
    let residual = max_norm(&generator.apply(&rho.rho));
    Ok(solution(rho, residual, opts, SteadyMethod::LongTime))
}

/// Steady state of the master equation.
pub fn steady_density(config: &SystemConfig<f64>, dims: FockDims, opts: &SteadyOptions) -> Result<SteadySolution> {
    dims.check_capacity(opts.max_total)?;
    let cfg = effective_config(config)?;
    check_unique(&cfg)?;
    match opts.method {
        SteadyMethod::NullSpace => null_space_steady(&cfg, dims, sector_problem(&cfg, dims)?, opts),
        SteadyMethod::LongTime => long_time_steady(&cfg, dims, opts),
        SteadyMethod::Auto => {
            let problem = sector_problem(&cfg, dims)?;
            if problem.sector.len() > NULL_SPACE_MAX_UNKNOWNS {
                return Err(Error::Capacity(format!(
                    "population sector of ({}, {}) has {} unknowns, above the direct-solve bound {NULL_SPACE_MAX_UNKNOWNS}; request SteadyMethod::LongTime explicitly",
                    dims.dim_a,
                    dims.dim_b,
                    problem.sector.len()
                )));
            }
            null_space_steady(&cfg, dims, problem, opts)
        }
    }
}

/// Integrates the master equation and samples at the given ascending times.
/// Trace, Hermiticity and positivity are checked at every tenth sample and
/// at the end.
pub fn evolve_density_at(
    rho0: &DensityMatrix,
    config: &SystemConfig<f64>,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DensityMatrix>> {
    let dims = rho0.dims;
    let start = rho0.physical_report();
    if !start.is_physical() {
        return Err(Error::Precondition(format!("initial state is not physical: {start:?}")));
    }
    let generator = LindbladGenerator::new(config, dims, DEFAULT_MAX_TOTAL_DIM)?;
    let t0 = times.first().copied().unwrap_or(0.0).min(0.0);
    let sol = ode::integrate(
        &generator,
        t0,
        &rho0.to_real_vec(),
        times,
        Tolerances::new(tol, tol * 1e-3),
    )?;
    let states: Vec<DensityMatrix> = sol.iter().map(|y| DensityMatrix::from_real_vec(dims, y)).collect();
    let n = states.len();
    for (k, s) in states.iter().enumerate() {
        if k % 10 == 0 || k + 1 == n {
            let r = s.physical_report();
            let worst = r.trace_deviation.max(r.hermiticity_deviation).max(-r.min_eigenvalue);
            if !r.is_physical() {
                return Err(Error::Integration {
                    residual: worst,
                    reason: format!("state left the physical set at t = {}: {r:?}", times[k]),
                });
            }
        }
    }
    Ok(states)
}

pub fn evolve_density(rho0: &DensityMatrix, config: &SystemConfig<f64>, t_final: f64, tol: f64) -> Result<DensityMatrix> {
    if !(t_final > 0.0) {
        return Err(Error::Precondition(format!("t_final must be positive, got {t_final}")));
    }
    Ok(evolve_density_at(rho0, config, &[0.0, t_final], tol)?.pop().unwrap())
}

fn grow(d: usize) -> usize {
    ((d as f64 * 1.5).ceil() as usize).max(d + 1)
}

/// Levels needed for a thermal distribution with mean `nbar` to put less
/// than `p` in the top level.
fn thermal_levels(nbar: f64, p: f64) -> f64 {
    if nbar <= 0.0 {
        return 2.0;
    }
    let q = nbar / (nbar + 1.0);
    (p.ln() / q.ln()).ceil() + 1.0
}

/// Grows the truncation from `start` until the boundary populations fall
/// below `tol·10⁻²` and the steady `n_b` differs from the previous,
/// smaller truncation by less than `tol`. When `start` already passes the
/// boundary test, one growth step is solved to confirm it and `start` is
/// returned.
pub fn truncation_check(
    config: &SystemConfig<f64>,
    start: FockDims,
    tol: f64,
    max_total: usize,
) -> Result<FockDims> {
    truncated_steady(config, start, tol, max_total).map(|s| s.rho.dims)
}

/// [`truncation_check`] together with the steady state at the accepted
/// dimensions.
pub fn truncated_steady(
    config: &SystemConfig<f64>,
    start: FockDims,
    tol: f64,
    max_total: usize,
) -> Result<SteadySolution> {
    let cfg = effective_config(config)?;
    check_unique(&cfg)?;
    let boundary = tol * 1e-2;
    // A cheap lower bound for the beam-splitter model, whose occupations
    // are known from the rate equations.
    if let CouplingKind::BeamSplitter = cfg.coupling {
        if let Ok(ss) = crate::rate::steady_moments(&cfg) {
            for (name, n) in [("n_a", ss.n_a), ("n_b", ss.n_b)] {
                let levels = thermal_levels(n.max(0.0), boundary);
                if levels * 2.0 > max_total as f64 {
                    return Err(Error::Capacity(format!(
                        "steady occupation {name} = {n:.4e} (bath n̄_a = {}, n̄_b = {}) needs about {levels:.0} levels, above the bound {max_total}; use the rate equations",
                        cfg.nbar_a(),
                        cfg.nbar_b()
                    )));
                }
            }
        }
    }
    let opts = SteadyOptions {
        boundary_tol: boundary,
        max_total,
        ..SteadyOptions::default()
    };
    let capacity = |d: FockDims| -> Error {
        Error::Capacity(format!(
            "truncation did not converge within the solver bounds ({max_total} states, {NULL_SPACE_MAX_UNKNOWNS} sector unknowns; next step ({}, {})); bath n̄_a = {}, n̄_b = {}",
            d.dim_a,
            d.dim_b,
            cfg.nbar_a(),
            cfg.nbar_b()
        ))
    };
    let boundary_ok = |s: &SteadySolution| {
        let (pa, pb) = s.rho.boundary_populations();
        (pa < boundary, pb < boundary)
    };
    start.check_capacity(max_total).map_err(|_| capacity(start))?;
    let first = steady_density(&cfg, start, &opts)?;
    if boundary_ok(&first) == (true, true) {
        let bigger = FockDims {
            dim_a: grow(start.dim_a),
            dim_b: grow(start.dim_b),
        };
        bigger.check_capacity(max_total).map_err(|_| capacity(bigger))?;
        let check = steady_density(&cfg, bigger, &opts).map_err(|e| match e {
            Error::Capacity(_) => capacity(bigger),
            e => e,
        })?;
        if (check.n_b - first.n_b).abs() < tol {
            return Ok(first);
        }
    }
    let mut prev = first;
    loop {
        let (ok_a, ok_b) = boundary_ok(&prev);
        let dims = prev.rho.dims;
        // grow what fails the boundary test, or both when only the change
        // test is outstanding
        let both = ok_a && ok_b;
        let next = FockDims {
            dim_a: if !ok_a || both { grow(dims.dim_a) } else { dims.dim_a },
            dim_b: if !ok_b || both { grow(dims.dim_b) } else { dims.dim_b },
        };
        next.check_capacity(max_total).map_err(|_| capacity(next))?;
        let sol = steady_density(&cfg, next, &opts).map_err(|e| match e {
            Error::Capacity(_) => capacity(next),
            e => e,
        })?;
        if boundary_ok(&sol) == (true, true) && (sol.n_b - prev.n_b).abs() < tol {
            return Ok(sol);
        }
        prev = sol;
    }
}
