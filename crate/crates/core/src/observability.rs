//! Boundary flux `∫₀ᵀ∫_{F_j} |∂_ν u|² dS dt` and its comparison with the
//! asymptotic prediction `T · Area(F_j) / (n Vol) · Ẽ(0)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble, eliminate_dirichlet, SimplicialMesh};
use crate::error::{Error, Result};
use crate::field::{AffinePullback, ScalarField};
use crate::geometry::Simplex;
use crate::oracles::{face_flux_integral, order_simplex, EigenMode, StandingWave, ORACLE_ORDER};
use crate::quadrature::SimplexRule;
use crate::solver::{self, EnergyLedger, MassMode, Observer, WaveState, WaveSystem};

/// Points per direction of the per-cell rule used for `Ẽ(0)`.
pub const ENERGY_ORDER: usize = 5;

/// `area · (ν · ∇u)²` on one boundary facet of a P1 field given on all vertices.
pub fn facet_flux(mesh: &SimplicialMesh, u: &[f64], facet: usize) -> Result<f64> {
    let f = mesh.boundary_facets().get(facet).ok_or(Error::NonBoundaryFacet(facet))?;
    if u.len() != mesh.vertices().len() {
        return Err(Error::DimMismatch { expected: mesh.vertices().len(), got: u.len() });
    }
    let normal = mesh.simplex().face_metrics(f.face)?.normal;
    let geo = mesh.cell_geometry(f.cell);
    let dn: f64 = mesh.cells()[f.cell]
        .iter()
        .zip(&geo.gradients)
        .map(|(&v, g)| u[v] * g.dot(&normal))
        .sum();
    Ok(mesh.facet_area(f) * dn * dn)
}

/// Precomputed `u ↦ Σ_facets area · (ν·∇u)²` on interior dofs for one face.
#[derive(Debug, Clone)]
pub struct FluxOperator {
    face: usize,
    rows: Vec<(f64, Vec<(usize, f64)>)>,
}

impl FluxOperator {
    pub fn new(mesh: &SimplicialMesh, face: usize) -> Result<Self> {
        let normal = mesh.simplex().face_metrics(face)?.normal;
        let rows = mesh
            .facets_on_face(face)
            .map(|(_, f)| {
                let geo = mesh.cell_geometry(f.cell);
                let coeffs = mesh.cells()[f.cell]
                    .iter()
                    .zip(&geo.gradients)
                    .filter_map(|(&v, g)| mesh.interior_dofs()[v].map(|eq| (eq, g.dot(&normal))))
                    .collect();
                (mesh.facet_area(f), coeffs)
            })
            .collect();
        Ok(FluxOperator { face, rows })
    }

    pub fn face(&self) -> usize {
        self.face
    }

    pub fn num_facets(&self) -> usize {
        self.rows.len()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(area, coeffs)| {
                let dn: f64 = coeffs.iter().map(|&(eq, c)| c * u[eq]).sum();
                area * dn * dn
            })
            .sum()
    }
}

/// Time samples of the instantaneous face flux and their trapezoid integral.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FluxSeries {
    pub face: usize,
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
    /// Integral from the first sample up to each sample time.
    pub cumulative: Vec<f64>,
}

impl FluxSeries {
    pub fn new(face: usize) -> Self {
        FluxSeries { face, ..Default::default() }
    }

    pub fn accumulate(&mut self, t: f64, flux: f64) -> Result<()> {
        if !(flux >= 0.0) || !flux.is_finite() {
            return Err(Error::InvalidArgument(format!("flux sample {flux} at t = {t}")));
        }
        let next = match (self.times.last(), self.samples.last(), self.cumulative.last()) {
            (Some(&last), Some(&f0), Some(&c)) => {
                if !(t > last) {
                    return Err(Error::OutOfOrderSample { t, last });
                }
                c + 0.5 * (t - last) * (f0 + flux)
            }
            _ => 0.0,
        };
        self.times.push(t);
        self.samples.push(flux);
        self.cumulative.push(next);
        Ok(())
    }

    /// Latest sample time.
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Integral up to `t` of the piecewise-linear interpolant of the samples.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        let (Some(&first), Some(&last)) = (self.times.first(), self.times.last()) else {
            return Err(Error::InvalidArgument("empty flux series".into()));
        };
        if t < first || t > last {
            return Err(Error::InvalidArgument(format!("t = {t} outside sampled range [{first}, {last}]")));
        }
        let k = self.times.partition_point(|&s| s <= t).max(1);
        if k == self.times.len() && t == last {
            return Ok(self.total());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (f0, f1) = (self.samples[k - 1], self.samples[k]);
        let s = t - t0;
        let ft = f0 + (f1 - f0) * s / (t1 - t0);
        Ok(self.cumulative[k - 1] + 0.5 * s * (f0 + ft))
    }
}

/// Observer feeding a [`FluxSeries`] from interior displacements.
pub struct FluxObserver {
    pub operator: FluxOperator,
    pub series: FluxSeries,
}

impl FluxObserver {
    pub fn new(operator: FluxOperator) -> Self {
        let face = operator.face();
        FluxObserver { operator, series: FluxSeries::new(face) }
    }
}

impl Observer for FluxObserver {
    fn observe(&mut self, _step: usize, t: f64, u: &[f64], _v: &[f64]) -> Result<()> {
        self.series.accumulate(t, self.operator.eval(u))
    }
}

/// `∫ |u₁|² + |∇u₀|²` by a collapsed Gauss rule on every mesh cell.
pub fn initial_energy(mesh: &SimplicialMesh, u0: &dyn ScalarField, u1: &dyn ScalarField, order: usize) -> f64 {
    let n = mesh.dim();
    let rule = SimplexRule::duffy(n, order);
    let per_cell: Vec<f64> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let cell = &mesh.cells()[c];
            let x0 = &mesh.vertices()[cell[0]];
            let edges = DMatrix::from_fn(n, n, |r, k| mesh.vertices()[cell[k + 1]][r] - x0[r]);
            let jac = edges.determinant().abs();
            let sum: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(y, w)| {
                    let x = &edges * DVector::from_column_slice(y) + x0;
                    w * (u1.value(&x).powi(2) + u0.gradient(&x).norm_squared())
                })
                .sum();
            sum * jac
        })
        .collect();
    per_cell.iter().sum()
}

/// One row of the observability table. `levels = 0` and `dt = 0` mark the exact
/// (mesh-free) path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub remainder: f64,
    #[serde(rename = "E0")]
    pub energy: f64,
    pub levels: u32,
    pub dt: f64,
    pub face: usize,
    pub dim: usize,
}

/// Builds a report from a measured flux integral.
pub fn report(
    measured: f64,
    horizon: f64,
    s: &Simplex,
    face: usize,
    energy: f64,
    levels: u32,
    dt: f64,
) -> Result<ObservabilityReport> {
    if energy == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let predicted = horizon * s.predicted_flux_rate(face, energy)?;
    let ratio = measured / predicted;
    Ok(ObservabilityReport {
        horizon,
        measured,
        predicted,
        ratio,
        remainder: ratio - 1.0,
        energy,
        levels,
        dt,
        face,
        dim: s.dim(),
    })
}

/// Report for a standing wave with the flux integral taken in closed form.
pub fn oracle_report(wave: &StandingWave, face: usize, horizon: f64) -> Result<ObservabilityReport> {
    let s = order_simplex(wave.mode.dim());
    let measured = wave.exact_flux_integral(face, horizon, ORACLE_ORDER)?;
    report(measured, horizon, &s, face, wave.energy(ORACLE_ORDER), 0, 0.0)
}

/// Discretisation choices for a FEM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemSettings {
    pub levels: u32,
    pub dt_factor: f64,
    pub mass: MassMode,
    pub energy_order: usize,
}

impl Default for FemSettings {
    fn default() -> Self {
        FemSettings { levels: 4, dt_factor: solver::DEFAULT_CFL_SAFETY, mass: MassMode::Consistent, energy_order: ENERGY_ORDER }
    }
}

/// Mesh, matrices, time step and initial state for observing face `face` of a
/// simplex. Faces other than 0 are observed by re-anchoring, so that the mesh is
/// always built with the observed face in the slanted position.
pub struct FemProblem {
    pub simplex: Simplex,
    pub face: usize,
    pub mesh: SimplicialMesh,
    pub system: WaveSystem,
    pub flux: FluxOperator,
    pub lambda_max: f64,
    pub dt_max: f64,
    pub dt: f64,
    pub energy: f64,
    pub initial: WaveState,
}

impl FemProblem {
    pub fn new(
        s: &Simplex,
        face: usize,
        u0: &dyn ScalarField,
        u1: &dyn ScalarField,
        settings: &FemSettings,
    ) -> Result<Self> {
        if !(settings.dt_factor > 0.0 && settings.dt_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!("dt_factor {} not in (0, 1]", settings.dt_factor)));
        }
        let anchored = s.reanchored(face)?;
        let mesh = SimplicialMesh::refine(&anchored, settings.levels)?;
        let k = DMatrix::identity(s.dim(), s.dim());
        let system = WaveSystem::new(eliminate_dirichlet(&assemble(&mesh, &k)?, &mesh)?, settings.mass)?;
        let cfl = solver::estimate_cfl(&system)?;
        let dt = settings.dt_factor * cfl.dt_max;
        let initial = solver::initialize(&system, &mesh, u0, u1, dt, cfl.dt_max)?;
        let energy = initial_energy(&mesh, u0, u1, settings.energy_order);
        let flux = FluxOperator::new(&mesh, 0)?;
        Ok(FemProblem {
            simplex: s.clone(),
            face,
            mesh,
            system,
            flux,
            lambda_max: cfl.lambda_max,
            dt_max: cfl.dt_max,
            dt,
            energy,
            initial,
        })
    }

    /// Runs to `horizon` and returns the flux series (on the observed face) and energies.
    pub fn run(&self, horizon: f64) -> Result<(FluxSeries, EnergyLedger, WaveState)> {
        let mut obs = FluxObserver::new(self.flux.clone());
        let out = solver::run(&self.system, self.initial.clone(), horizon, &mut [&mut obs])?;
        let mut series = obs.series;
        series.face = self.face;
        Ok((series, out.ledger, out.state))
    }

    pub fn report(&self, horizon: f64) -> Result<ObservabilityReport> {
        let (series, _, _) = self.run(horizon)?;
        let measured = series.integral_to(horizon)?;
        report(measured, horizon, &self.simplex, self.face, self.energy, self.mesh.levels(), self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub reports: Vec<ObservabilityReport>,
    pub slope: f64,
    pub lambda_max: f64,
    pub dt_max: f64,
    pub dt: f64,
}

/// Least-squares slope of `ln|remainder|` against `ln T`.
pub fn fit_remainder_slope(reports: &[ObservabilityReport]) -> Result<f64> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("need at least two horizons for a fit".into()));
    }
    let pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.horizon.ln(), r.remainder.abs().ln())).collect();
    if pts.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::InvalidArgument("zero remainder; slope undefined".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// One FEM run per horizon on a shared mesh and time step, in parallel, plus the
/// fitted remainder exponent. Reports are sorted by `T`.
pub fn remainder_sweep(
    s: &Simplex,
    face: usize,
    u0: Arc<dyn ScalarField>,
    u1: Arc<dyn ScalarField>,
    horizons: &[f64],
    settings: &FemSettings,
) -> Result<SweepResult> {
    if horizons.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 horizons, got {}", horizons.len())));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) || !(horizons[0] > 0.0) {
        return Err(Error::InvalidArgument("horizons must be positive and increasing".into()));
    }
    let problem = FemProblem::new(s, face, u0.as_ref(), u1.as_ref(), settings)?;
    let reports = horizons.par_iter().map(|&t| problem.report(t)).collect::<Result<Vec<_>>>()?;
    let slope = fit_remainder_slope(&reports)?;
    Ok(SweepResult { reports, slope, lambda_max: problem.lambda_max, dt_max: problem.dt_max, dt: problem.dt })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RellichSides {
    /// `(n Vol / Area(F_j)) ∫_{F_j} |∂_ν φ|²`.
    pub lhs: f64,
    /// `2 λ ‖φ‖²`.
    pub rhs: f64,
}

impl RellichSides {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs()
    }
}

/// Both sides of the face identity for an eigenmode carried to `s`, which must be
/// a similarity image of the order-simplex (vertex `i` to vertex `i`).
pub fn rellich_check(s: &Simplex, mode: &EigenMode, face: usize) -> Result<RellichSides> {
    let n = mode.dim();
    if s.dim() != n {
        return Err(Error::DimMismatch { expected: n, got: s.dim() });
    }
    let reference = order_simplex(n);
    // x_ref = L (x - v0) + w0 with L = A_ref B_s; a similarity has LᵀL = c⁻² I.
    let l = reference.spanning() * s.inverse();
    let ltl = l.transpose() * &l;
    let c2 = ltl.trace() / n as f64;
    if (ltl - DMatrix::identity(n, n) * c2).amax() > 1e-10 * c2 {
        return Err(Error::InvalidArgument("simplex is not similar to the order-simplex".into()));
    }
    let eigenvalue = mode.eigenvalue() * c2;
    let field = AffinePullback::between(s, &reference, Arc::new(mode.clone()));
    let rule = SimplexRule::duffy(n, ORACLE_ORDER);
    let norm2 = rule.integrate(s, |x| field.value(x).powi(2));
    let flux = face_flux_integral(&field, s, face, ORACLE_ORDER)?;
    let area = s.face_metrics(face)?.area;
    Ok(RellichSides { lhs: n as f64 * s.volume() / area * flux, rhs: 2.0 * eigenvalue * norm2 })
}
