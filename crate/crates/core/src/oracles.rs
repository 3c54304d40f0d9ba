//! Exact Dirichlet eigenmodes on the order-simplex `{0 ≤ x₁ ≤ … ≤ x_n ≤ π}`.
//!
//! The antisymmetrised sine product `φ(x) = det[sin(m_i x_j)]` vanishes on every
//! face (`x₁ = 0` through the sine, `x_i = x_{i+1}` through equal columns and
//! `x_n = π` through integer frequencies) and satisfies `-Δφ = (Σ m_i²) φ`. These
//! modes are the ground truth for every flux and energy check in the crate.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Combination, ScalarField};
use crate::geometry::Simplex;
use crate::quadrature::SimplexRule;

/// Default points per direction for oracle quadrature.
pub const ORACLE_ORDER: usize = 20;

/// The order-simplex with vertices `π (0,…,0,1,…,1)` (k trailing ones, k = 0..n).
pub fn order_simplex(dim: usize) -> Simplex {
    let points: Vec<Vec<f64>> = (0..=dim)
        .map(|k| (0..dim).map(|i| if i >= dim - k { PI } else { 0.0 }).collect())
        .collect();
    Simplex::new(&points).expect("order simplex is non-degenerate")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode {
    modes: Vec<u32>,
    eigenvalue: f64,
}

impl EigenMode {
    pub fn new(dim: usize, modes: &[u32]) -> Result<Self> {
        if modes.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: modes.len() });
        }
        if dim == 0 || modes[0] == 0 || modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::RepeatedMode(modes.to_vec()));
        }
        let eigenvalue = modes.iter().map(|&m| (m as f64).powi(2)).sum();
        Ok(EigenMode { modes: modes.to_vec(), eigenvalue })
    }

    pub fn modes(&self) -> &[u32] {
        &self.modes
    }

    pub fn eigenvalue(&self) -> f64 {
        self.eigenvalue
    }

    pub fn frequency(&self) -> f64 {
        self.eigenvalue.sqrt()
    }

    fn sine_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.modes.len();
        DMatrix::from_fn(n, n, |i, j| (self.modes[i] as f64 * x[j]).sin())
    }

    /// `-Δφ` by second-order central differences, for spot checks.
    pub fn fd_negative_laplacian(&self, x: &DVector<f64>, h: f64) -> f64 {
        let n = self.modes.len();
        let centre = self.value(x);
        let mut lap = 0.0;
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            lap += (self.value(&xp) - 2.0 * centre + self.value(&xm)) / (h * h);
        }
        -lap
    }
}

impl ScalarField for EigenMode {
    fn dim(&self) -> usize {
        self.modes.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.sine_matrix(x).determinant()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.modes.len();
        let base = self.sine_matrix(x);
        DVector::from_fn(n, |j, _| {
            let mut m = base.clone();
            for i in 0..n {
                let freq = self.modes[i] as f64;
                m[(i, j)] = freq * (freq * x[j]).cos();
            }
            m.determinant()
        })
    }
}

/// `∫_{F_j} |∂_ν f|² dS` by collapsed Gauss quadrature on the face.
pub fn face_flux_integral(field: &dyn ScalarField, s: &Simplex, j: usize, order: usize) -> Result<f64> {
    let face = s.face_metrics(j)?;
    let rule = SimplexRule::duffy(s.dim() - 1, order);
    let verts: Vec<&DVector<f64>> = face.vertex_indices.iter().map(|&i| s.vertex(i)).collect();
    Ok(rule.integrate_embedded(&verts, |x| {
        let dn = field.gradient(x).dot(&face.normal);
        dn * dn
    }))
}

/// `(‖φ‖², Ẽ(0))` for the standing wave started from `φ` at rest, where
/// `Ẽ(0) = ∫ |∇φ|² = λ ‖φ‖²`.
pub fn mode_norm_and_energy(mode: &EigenMode, order: usize) -> (f64, f64) {
    let s = order_simplex(mode.dim());
    let rule = SimplexRule::duffy(mode.dim(), order);
    let norm2 = rule.integrate(&s, |x| mode.value(x).powi(2));
    (norm2, mode.eigenvalue() * norm2)
}

/// `u(t, x) = a cos(√λ t) φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandingWave {
    pub mode: EigenMode,
    pub amplitude: f64,
}

impl StandingWave {
    pub fn new(mode: EigenMode, amplitude: f64) -> Self {
        StandingWave { mode, amplitude }
    }

    pub fn value(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.amplitude * (self.mode.frequency() * t).cos() * self.mode.value(x)
    }

    /// `Ẽ(0)` by quadrature.
    pub fn energy(&self, order: usize) -> f64 {
        self.amplitude.powi(2) * mode_norm_and_energy(&self.mode, order).1
    }

    /// `∫₀ᵀ ∫_{F_j} |∂_ν u|² dS dt` in closed form in time on the order-simplex.
    pub fn exact_flux_integral(&self, j: usize, horizon: f64, order: usize) -> Result<f64> {
        let s = order_simplex(self.mode.dim());
        let face = face_flux_integral(&self.mode, &s, j, order)?;
        Ok(self.amplitude.powi(2) * face * cos2_integral(self.mode.frequency(), horizon))
    }
}

/// `∫₀ᵀ cos²(ω t) dt = T/2 + sin(2ωT)/(4ω)`.
pub fn cos2_integral(omega: f64, horizon: f64) -> f64 {
    horizon / 2.0 + (2.0 * omega * horizon).sin() / (4.0 * omega)
}

/// Strictly increasing `dim`-tuples with entries in `1..=max_mode`, in lex order.
pub fn low_mode_tuples(dim: usize, max_mode: u32) -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, dim: usize, max_mode: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        let start = prefix.last().map_or(1, |&m| m + 1);
        for m in start..=max_mode {
            prefix.push(m);
            extend(prefix, dim, max_mode, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(dim), dim, max_mode, &mut out);
    out
}

/// Seeded smooth field `Σ c_m φ_m / λ_m` over all modes with entries `≤ max_mode`,
/// `c_m` uniform in `[-1, 1]`. Vanishes on the boundary of the order-simplex.
pub fn random_low_mode_field(dim: usize, max_mode: u32, seed: u64) -> Result<Combination> {
    let tuples = low_mode_tuples(dim, max_mode);
    if tuples.is_empty() {
        return Err(Error::InvalidArgument(format!("max_mode {max_mode} admits no mode in dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = Combination::new(dim);
    for modes in tuples {
        let mode = EigenMode::new(dim, &modes)?;
        let c: f64 = rng.gen_range(-1.0..=1.0);
        field = field.with(c / mode.eigenvalue(), Arc::new(mode));
    }
    Ok(field)
}
