//! Gauss-Legendre rules and collapsed-coordinate (Duffy) rules on simplices.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::geometry::{factorial, Simplex};

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `order`-point rule, exact for polynomials of degree `2 order - 1`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_order.
            let mut z = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // Map [-1, 1] -> [0, 1].
            nodes[i] = 0.5 * (1.0 - z);
            nodes[order - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[order - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature rule on the standard `dim`-simplex; weights sum to `1 / dim!`.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    /// Tensor Gauss rule of `order` points per direction pulled back through the
    /// collapsed map `y_k = u_k Π_{i<k} (1 - u_i)`.
    pub fn duffy(dim: usize, order: usize) -> Self {
        if dim == 0 {
            return SimplexRule { dim, points: vec![vec![]], weights: vec![1.0] };
        }
        let gl = GaussLegendre::new(order);
        let total = order.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut y = vec![0.0; dim];
            let mut remaining = 1.0;
            let mut w = 1.0;
            for k in 0..dim {
                let u = gl.nodes[idx[k]];
                y[k] = u * remaining;
                w *= gl.weights[idx[k]] * remaining;
                remaining *= 1.0 - u;
            }
            points.push(y);
            weights.push(w);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < order {
                    break;
                }
                idx[k] = 0;
            }
        }
        SimplexRule { dim, points, weights }
    }

    /// `∫_S f dx` over a physical simplex.
    pub fn integrate<F: FnMut(&DVector<f64>) -> f64>(&self, s: &Simplex, mut f: F) -> f64 {
        assert_eq!(self.dim, s.dim());
        let mut sum = 0.0;
        for (y, w) in self.points.iter().zip(&self.weights) {
            let x = s.map_to_physical(&DVector::from_column_slice(y));
            sum += w * f(&x);
        }
        sum * s.det().abs()
    }

    /// `∫ f dS` over the (dim)-simplex with the given `dim + 1` vertices embedded
    /// in a space of any dimension.
    pub fn integrate_embedded<F: FnMut(&DVector<f64>) -> f64>(
        &self,
        vertices: &[&DVector<f64>],
        mut f: F,
    ) -> f64 {
        assert_eq!(vertices.len(), self.dim + 1);
        let base = vertices[0];
        let edges: Vec<DVector<f64>> = vertices[1..].iter().map(|v| *v - base).collect();
        let jac = if self.dim == 0 {
            1.0
        } else {
            let e = nalgebra::DMatrix::from_columns(&edges);
            (e.transpose() * &e).determinant().max(0.0).sqrt()
        };
        let mut sum = 0.0;
        for (y, w) in self.points.iter().zip(&self.weights) {
            let mut x = base.clone();
            for (yk, e) in y.iter().zip(&edges) {
                x.axpy(*yk, e, 1.0);
            }
            sum += w * f(&x);
        }
        sum * jac
    }

    pub fn reference_volume(&self) -> f64 {
        1.0 / factorial(self.dim)
    }
}
