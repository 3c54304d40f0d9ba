//! Explicit leapfrog integration of `M ü = -S u` on interior dofs.
//!
//! The state carries `u^n` at integer steps and `v^{n+1/2}` at half steps:
//!
//! ```text
//! u^{n+1}     = u^n + dt v^{n+1/2}
//! M v^{n+3/2} = M v^{n+1/2} - dt S u^{n+1}
//! ```
//!
//! Two energies are tracked. `E_h = v̄ᵀ M v̄ + uᵀ S u` uses the averaged velocity
//! `v̄^n = (v^{n-1/2} + v^{n+1/2}) / 2` and oscillates at `O(dt²)`. The staggered
//! `E_lf = v^{n+1/2}ᵀ M v^{n+1/2} + u^nᵀ S u^{n+1}` is conserved up to round-off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{DirichletSystem, SimplicialMesh};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::{conjugate_gradient, dot, SkylineCholesky, SymmetricSparseMatrix};

/// Tolerance on initial data at boundary vertices.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Default `dt / dt_max`.
pub const DEFAULT_CFL_SAFETY: f64 = 0.5;
/// Abort when `E_h` grows past this multiple of its initial value.
pub const BLOWUP_FACTOR: f64 = 10.0;

const POWER_MAX_ITER: usize = 10_000;
const POWER_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MassMode {
    /// Consistent mass, factorised once by profile Cholesky.
    #[default]
    Consistent,
    /// Consistent mass solved by conjugate gradients to the given relative residual.
    ConsistentCg { tol: f64 },
    /// Row-sum lumped mass; mass solves are diagonal.
    Lumped,
}

#[derive(Debug, Clone)]
enum MassSolver {
    Direct(SkylineCholesky),
    Cg { tol: f64 },
    Diagonal(Vec<f64>),
}

/// Interior-dof matrices plus the mass solver used by the stepper.
#[derive(Debug, Clone)]
pub struct WaveSystem {
    mass: SymmetricSparseMatrix,
    stiffness: SymmetricSparseMatrix,
    solver: MassSolver,
    dofs: Vec<usize>,
}

impl WaveSystem {
    pub fn new(system: DirichletSystem, mode: MassMode) -> Result<Self> {
        let DirichletSystem { mass, stiffness, dofs } = system;
        let (mass, solver) = match mode {
            MassMode::Consistent => {
                let chol = SkylineCholesky::factor(&mass)?;
                (mass, MassSolver::Direct(chol))
            }
            MassMode::ConsistentCg { tol } => (mass, MassSolver::Cg { tol }),
            MassMode::Lumped => {
                let diag = mass.lumped();
                let triplets: Vec<_> = diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
                (SymmetricSparseMatrix::from_triplets(diag.len(), &triplets), MassSolver::Diagonal(diag))
            }
        };
        Ok(WaveSystem { mass, stiffness, solver, dofs })
    }

    /// Builds a system directly from interior matrices (mostly for tests).
    pub fn from_matrices(mass: SymmetricSparseMatrix, stiffness: SymmetricSparseMatrix, mode: MassMode) -> Result<Self> {
        let dofs = (0..mass.dim()).collect();
        Self::new(DirichletSystem { mass, stiffness, dofs }, mode)
    }

    pub fn len(&self) -> usize {
        self.mass.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.dim() == 0
    }

    pub fn mass(&self) -> &SymmetricSparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymmetricSparseMatrix {
        &self.stiffness
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// Solves `M x = rhs`.
    pub fn solve_mass(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            MassSolver::Direct(chol) => Ok(chol.solve(rhs)),
            MassSolver::Cg { tol } => {
                let mut x = vec![0.0; rhs.len()];
                conjugate_gradient(&self.mass, rhs, &mut x, *tol, 10 * rhs.len() + 100)?;
                Ok(x)
            }
            MassSolver::Diagonal(d) => Ok(rhs.iter().zip(d).map(|(r, m)| r / m).collect()),
        }
    }

    /// `vᵀ M v + uᵀ S u`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(v, v) + self.stiffness.bilinear(u, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CflEstimate {
    pub lambda_max: f64,
    pub dt_max: f64,
    pub iterations: usize,
}

/// Largest eigenvalue of `M⁻¹S` by power iteration; `dt_max = 2 / √λ_max`.
///
/// Stops once the pencil residual `‖M⁻¹(Sx - ρMx)‖_M / ‖x‖_M` drops below
/// `POWER_TOL · ρ`, which places `ρ` that close to an eigenvalue.
pub fn estimate_cfl(system: &WaveSystem) -> Result<CflEstimate> {
    let n = system.len();
    if n == 0 {
        return Err(Error::EmptyInterior);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 0.1 * rng.gen::<f64>()).collect();
    let scale = system.mass.bilinear(&x, &x).sqrt();
    x.iter_mut().for_each(|c| *c /= scale);
    for it in 1..=POWER_MAX_ITER {
        // ‖x‖_M = 1 here.
        let sx = system.stiffness.matvec(&x);
        let rho = dot(&x, &sx);
        let mut y = system.solve_mass(&sx)?;
        let r: Vec<f64> = y.iter().zip(&x).map(|(y, x)| y - rho * x).collect();
        let residual = system.mass.bilinear(&r, &r).max(0.0).sqrt();
        if residual <= POWER_TOL * rho {
            return Ok(CflEstimate { lambda_max: rho, dt_max: 2.0 / rho.sqrt(), iterations: it });
        }
        let scale = system.mass.bilinear(&y, &y).sqrt();
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::NoConvergence { iterations: it });
        }
        y.iter_mut().for_each(|c| *c /= scale);
        x = y;
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITER })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub t: f64,
    /// Displacement at `step_index · dt`.
    pub u: Vec<f64>,
    /// Velocity at `(step_index + 1/2) · dt`.
    pub v: Vec<f64>,
    pub dt: f64,
    pub step_index: usize,
}

impl WaveState {
    /// Velocity at the current integer time, `v^{n+1/2} + (dt/2) M⁻¹ S u^n`.
    pub fn integer_velocity(&self, system: &WaveSystem) -> Result<Vec<f64>> {
        let w = system.solve_mass(&system.stiffness.matvec(&self.u))?;
        Ok(self.v.iter().zip(&w).map(|(v, w)| v + 0.5 * self.dt * w).collect())
    }

    /// Flips the direction of time: replaces `v^{n+1/2}` by `-v^{n-1/2}`, so that
    /// stepping forward retraces the trajectory.
    pub fn reversed(&self, system: &WaveSystem) -> Result<WaveState> {
        let w = system.solve_mass(&system.stiffness.matvec(&self.u))?;
        let v = self.v.iter().zip(&w).map(|(v, w)| -(v + self.dt * w)).collect();
        Ok(WaveState { v, ..self.clone() })
    }
}

fn check_dt(dt: f64, dt_max: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::CflViolation(format!("time step {dt} must be positive")));
    }
    if dt > dt_max {
        return Err(Error::CflViolation(format!("dt = {dt} exceeds dt_max = {dt_max}")));
    }
    Ok(())
}

/// Starts from interior vectors: `u⁰` and `u'(0)`.
pub fn initialize_vectors(system: &WaveSystem, u0: Vec<f64>, u1: Vec<f64>, dt: f64, dt_max: f64) -> Result<WaveState> {
    check_dt(dt, dt_max)?;
    let n = system.len();
    if u0.len() != n {
        return Err(Error::DimMismatch { expected: n, got: u0.len() });
    }
    if u1.len() != n {
        return Err(Error::DimMismatch { expected: n, got: u1.len() });
    }
    let accel = system.solve_mass(&system.stiffness.matvec(&u0))?;
    let v = u1.iter().zip(&accel).map(|(v, a)| v - 0.5 * dt * a).collect();
    Ok(WaveState { t: 0.0, u: u0, v, dt, step_index: 0 })
}

/// Interpolates the initial data and takes the Taylor half step for the velocity.
pub fn initialize(
    system: &WaveSystem,
    mesh: &SimplicialMesh,
    u0: &dyn ScalarField,
    u1: &dyn ScalarField,
    dt: f64,
    dt_max: f64,
) -> Result<WaveState> {
    for (v, x) in mesh.vertices().iter().enumerate() {
        if mesh.is_boundary_vertex(v) {
            for value in [u0.value(x), u1.value(x)] {
                if value.abs() > BOUNDARY_TOL {
                    return Err(Error::BoundaryViolation { vertex: v, value });
                }
            }
        }
    }
    let u = system.dofs.iter().map(|&v| u0.value(&mesh.vertices()[v])).collect();
    let w = system.dofs.iter().map(|&v| u1.value(&mesh.vertices()[v])).collect();
    initialize_vectors(system, u, w, dt, dt_max)
}

/// Called once per step with `(step_index, t, u, v at integer time)`.
pub trait Observer {
    fn observe(&mut self, step: usize, t: f64, u: &[f64], v: &[f64]) -> Result<()>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// `E_h` at integer steps.
    pub continuous: Vec<f64>,
    /// `E_lf` at integer steps.
    pub leapfrog: Vec<f64>,
}

impl EnergyLedger {
    fn max_relative_drift(values: &[f64]) -> f64 {
        let Some(&first) = values.first() else { return 0.0 };
        if first == 0.0 {
            return 0.0;
        }
        values.iter().map(|e| ((e - first) / first).abs()).fold(0.0, f64::max)
    }

    pub fn continuous_drift(&self) -> f64 {
        Self::max_relative_drift(&self.continuous)
    }

    pub fn leapfrog_drift(&self) -> f64 {
        Self::max_relative_drift(&self.leapfrog)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: WaveState,
    pub ledger: EnergyLedger,
}

/// Number of steps until `n · dt` first reaches `horizon`.
pub fn steps_to_reach(horizon: f64, dt: f64) -> usize {
    let mut n = (horizon / dt).ceil().max(0.0) as usize;
    while n > 0 && (n - 1) as f64 * dt >= horizon {
        n -= 1;
    }
    while (n as f64) * dt < horizon {
        n += 1;
    }
    n
}

/// One leapfrog step; returns `(v̄^{n+1}, S u^{n+1})`.
fn advance(system: &WaveSystem, state: &mut WaveState) -> Result<(Vec<f64>, Vec<f64>)> {
    let dt = state.dt;
    for (u, v) in state.u.iter_mut().zip(&state.v) {
        *u += dt * v;
    }
    let su = system.stiffness.matvec(&state.u);
    let accel = system.solve_mass(&su)?;
    let mut v_avg = Vec::with_capacity(state.v.len());
    for (v, a) in state.v.iter_mut().zip(&accel) {
        let old = *v;
        *v -= dt * a;
        v_avg.push(0.5 * (old + *v));
    }
    state.step_index += 1;
    state.t = state.step_index as f64 * dt;
    Ok((v_avg, su))
}

pub fn step(system: &WaveSystem, state: &mut WaveState) -> Result<()> {
    advance(system, state).map(|_| ())
}

fn leapfrog_energy(system: &WaveSystem, state: &WaveState, su: &[f64]) -> f64 {
    system.mass.bilinear(&state.v, &state.v) + dot(&state.u, su) + state.dt * dot(su, &state.v)
}

/// Steps until `t ≥ horizon`, recording energies and calling observers at every
/// integer step (including the starting one).
pub fn run(
    system: &WaveSystem,
    mut state: WaveState,
    horizon: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput> {
    let target = state.step_index + steps_to_reach(horizon - state.t, state.dt);
    let mut ledger = EnergyLedger::default();

    let su = system.stiffness.matvec(&state.u);
    let v0 = state.integer_velocity(system)?;
    let e0 = system.mass.bilinear(&v0, &v0) + dot(&state.u, &su);
    ledger.times.push(state.t);
    ledger.continuous.push(e0);
    ledger.leapfrog.push(leapfrog_energy(system, &state, &su));
    for obs in observers.iter_mut() {
        obs.observe(state.step_index, state.t, &state.u, &v0)?;
    }

    while state.step_index < target {
        let (v_avg, su) = advance(system, &mut state)?;
        let eh = system.mass.bilinear(&v_avg, &v_avg) + dot(&state.u, &su);
        if !eh.is_finite() || (e0 > 0.0 && eh > BLOWUP_FACTOR * e0) {
            return Err(Error::CflViolation(format!(
                "energy grew from {e0:e} to {eh:e} by step {}",
                state.step_index
            )));
        }
        ledger.times.push(state.t);
        ledger.continuous.push(eh);
        ledger.leapfrog.push(leapfrog_energy(system, &state, &su));
        for obs in observers.iter_mut() {
            obs.observe(state.step_index, state.t, &state.u, &v_avg)?;
        }
    }
    Ok(RunOutput { state, ledger })
}
