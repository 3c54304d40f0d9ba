//! Simplices in ℝⁿ and their correspondence with the standard simplex.
//!
//! A [`Simplex`] is stored through its anchor vertex `v0` and the spanning matrix
//! `A` whose columns are the edges `v_i - v0`. Reference coordinates `y` live on the
//! standard simplex `{y ≥ 0, Σ y ≤ 1}` and map to physical points by `x = A y + v0`.
//!
//! Faces follow the anchored convention: face `j ≥ 1` is `{y_j = 0}` (opposite
//! vertex `j`), face `0` is the slanted face `{Σ y = 1}` opposite the anchor.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative determinant threshold for affinely dependent vertices.
pub const DEGENERACY_TOL: f64 = 1e-12;

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    dim: usize,
    vertices: Vec<DVector<f64>>,
    spanning: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: f64,
    volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub index: usize,
    pub vertex_indices: Vec<usize>,
    pub area: f64,
    pub normal: DVector<f64>,
}

/// JSON form of a simplex: `{"dim": n, "vertices": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexSpec {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
}

impl Simplex {
    /// Builds a simplex from `n + 1` points in ℝⁿ; `points[0]` becomes the anchor.
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a simplex needs at least 2 points, got {}",
                points.len()
            )));
        }
        let dim = points.len() - 1;
        for p in points {
            if p.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: p.len() });
            }
        }
        let vertices: Vec<DVector<f64>> =
            points.iter().map(|p| DVector::from_column_slice(p)).collect();
        let spanning =
            DMatrix::from_fn(dim, dim, |r, c| vertices[c + 1][r] - vertices[0][r]);

        let mut max_edge: f64 = 0.0;
        for a in 0..=dim {
            for b in (a + 1)..=dim {
                max_edge = max_edge.max((&vertices[a] - &vertices[b]).norm());
            }
        }
        let det = spanning.determinant();
        let threshold = DEGENERACY_TOL * max_edge.powi(dim as i32);
        if !(det.abs() >= threshold) || max_edge == 0.0 {
            return Err(Error::DegenerateSimplex { det, threshold });
        }
        let inverse = spanning
            .clone()
            .try_inverse()
            .ok_or(Error::DegenerateSimplex { det, threshold })?;
        let volume = det.abs() / factorial(dim);
        Ok(Simplex { dim, vertices, spanning, inverse, det, volume })
    }

    /// The standard simplex spanned by the origin and the canonical basis.
    pub fn standard(dim: usize) -> Self {
        let mut points = vec![vec![0.0; dim]];
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            points.push(e);
        }
        Simplex::new(&points).expect("standard simplex is never degenerate")
    }

    pub fn from_spec(spec: &SimplexSpec) -> Result<Self> {
        if spec.vertices.len() != spec.dim + 1 {
            return Err(Error::InvalidArgument(format!(
                "dim {} simplex needs {} vertices, got {}",
                spec.dim,
                spec.dim + 1,
                spec.vertices.len()
            )));
        }
        Simplex::new(&spec.vertices)
    }

    pub fn to_spec(&self) -> SimplexSpec {
        SimplexSpec {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &DVector<f64> {
        &self.vertices[i]
    }

    /// Spanning matrix `A` (columns `v_i - v0`).
    pub fn spanning(&self) -> &DMatrix<f64> {
        &self.spanning
    }

    /// `B = A⁻¹`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Signed `det A`; negative for negatively oriented vertex orderings.
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn is_standard(&self) -> bool {
        self.vertices[0].iter().all(|&c| c == 0.0)
            && self.spanning == DMatrix::identity(self.dim, self.dim)
    }

    pub fn max_edge(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..=self.dim {
            for b in (a + 1)..=self.dim {
                m = m.max((&self.vertices[a] - &self.vertices[b]).norm());
            }
        }
        m
    }

    /// Same simplex with vertex `j` as the anchor, so that the old face `F_j`
    /// becomes the new slanted face `F_0`. Vertices `0` and `j` swap places.
    pub fn reanchored(&self, j: usize) -> Result<Self> {
        self.check_face(j)?;
        let mut points: Vec<Vec<f64>> =
            self.vertices.iter().map(|v| v.iter().copied().collect()).collect();
        points.swap(0, j);
        Simplex::new(&points)
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let points: Vec<Vec<f64>> =
            self.vertices.iter().map(|v| v.iter().map(|c| c * factor).collect()).collect();
        Simplex::new(&points)
    }

    pub fn map_to_physical(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.spanning * y + &self.vertices[0]
    }

    pub fn map_to_reference(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (x - &self.vertices[0])
    }

    /// Turns a reference gradient `∇_y (v∘A)` into the physical gradient `∇_x v = Bᵀ ∇_y`.
    pub fn pushforward_gradient(&self, grad_y: &DVector<f64>) -> DVector<f64> {
        self.inverse.transpose() * grad_y
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let y = self.map_to_reference(x);
        y.iter().all(|&c| c >= -tol) && y.sum() <= 1.0 + tol
    }

    fn check_face(&self, j: usize) -> Result<()> {
        if j > self.dim {
            return Err(Error::InvalidArgument(format!(
                "face index {j} out of range 0..={}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Area (Gram determinant) and outward unit normal of face `j`.
    pub fn face_metrics(&self, j: usize) -> Result<Face> {
        self.check_face(j)?;
        let n = self.dim;
        let vertex_indices: Vec<usize> = (0..=n).filter(|&i| i != j).collect();

        let base = &self.vertices[vertex_indices[0]];
        let edges = DMatrix::from_fn(n, n - 1, |r, c| self.vertices[vertex_indices[c + 1]][r] - base[r]);
        let gram = edges.transpose() * &edges;
        let area = gram.determinant().max(0.0).sqrt() / factorial(n - 1);

        // Row j of B is the gradient of the reference coordinate y_j.
        let bt = self.inverse.transpose();
        let direction: DVector<f64> = if j == 0 {
            let ones = DVector::from_element(n, 1.0);
            &bt * ones
        } else {
            -bt.column(j - 1).into_owned()
        };
        let normal = direction.normalize();
        Ok(Face { index: j, vertex_indices, area, normal })
    }

    pub fn faces(&self) -> Vec<Face> {
        (0..=self.dim).map(|j| self.face_metrics(j).expect("index in range")).collect()
    }

    /// Distance from the vertex opposite face `j` to that face's hyperplane.
    pub fn height(&self, j: usize) -> Result<f64> {
        let face = self.face_metrics(j)?;
        let on_face = &self.vertices[face.vertex_indices[0]];
        Ok(face.normal.dot(&(on_face - &self.vertices[j])))
    }

    /// Asymptotic flux per unit time through face `j`: `Area(F_j) / (n Vol) · E0`.
    pub fn predicted_flux_rate(&self, j: usize, energy: f64) -> Result<f64> {
        if energy < 0.0 {
            return Err(Error::InvalidArgument(format!("negative energy {energy}")));
        }
        let face = self.face_metrics(j)?;
        Ok(face.area / (self.dim as f64 * self.volume) * energy)
    }

    /// Rejection-sampled volume estimate over the bounding box with its binomial
    /// standard error. Deterministic for a fixed seed.
    pub fn monte_carlo_volume(&self, samples: usize, seed: u64) -> Result<VolumeEstimate> {
        if samples == 0 {
            return Err(Error::InvalidArgument("samples must be >= 1".into()));
        }
        let n = self.dim;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in &self.vertices {
            for k in 0..n {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DVector::zeros(n);
        let mut hits = 0usize;
        for _ in 0..samples {
            for k in 0..n {
                x[k] = lo[k] + (hi[k] - lo[k]) * rng.gen::<f64>();
            }
            if self.contains(&x, 0.0) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        Ok(VolumeEstimate {
            estimate: box_volume * p,
            std_error: box_volume * (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}
