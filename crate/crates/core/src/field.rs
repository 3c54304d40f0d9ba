//! Smooth scalar fields with analytic gradients, used as initial data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::geometry::Simplex;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl ScalarField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0)
    }
}

/// `Σ c_k f_k`.
#[derive(Clone)]
pub struct Combination {
    dim: usize,
    terms: Vec<(f64, Arc<dyn ScalarField>)>,
}

impl Combination {
    pub fn new(dim: usize) -> Self {
        Combination { dim, terms: Vec::new() }
    }

    pub fn with(mut self, coeff: f64, field: Arc<dyn ScalarField>) -> Self {
        assert_eq!(field.dim(), self.dim);
        self.terms.push((coeff, field));
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl ScalarField for Combination {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.terms
            .iter()
            .fold(DVector::zeros(self.dim), |acc, (c, f)| acc + f.gradient(x) * *c)
    }
}

/// `f(C (x - x0) + z0)`, the composition of a field with an affine map.
#[derive(Clone)]
pub struct AffinePullback {
    inner: Arc<dyn ScalarField>,
    linear: DMatrix<f64>,
    source_origin: DVector<f64>,
    target_origin: DVector<f64>,
}

impl AffinePullback {
    /// Pulls `inner` (defined on `target`) back to `source` through the affine map
    /// that sends vertex `i` of `source` to vertex `i` of `target`.
    pub fn between(source: &Simplex, target: &Simplex, inner: Arc<dyn ScalarField>) -> Self {
        assert_eq!(source.dim(), target.dim());
        AffinePullback {
            inner,
            linear: target.spanning() * source.inverse(),
            source_origin: source.vertex(0).clone(),
            target_origin: target.vertex(0).clone(),
        }
    }

    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * (x - &self.source_origin) + &self.target_origin
    }
}

impl ScalarField for AffinePullback {
    fn dim(&self) -> usize {
        self.linear.ncols()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.value(&self.forward(x))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.linear.transpose() * self.inner.gradient(&self.forward(x))
    }
}

/// Field given by closures; handy in tests.
pub struct FnField<V, G> {
    pub dim: usize,
    pub value: V,
    pub gradient: G,
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pullback_gradient_matches_finite_differences() {
        let target = Simplex::standard(2);
        let source = Simplex::new(&[vec![1.0, 1.0], vec![3.0, 1.5], vec![0.5, 2.5]]).unwrap();
        let inner: Arc<dyn ScalarField> = Arc::new(FnField {
            dim: 2,
            value: |z: &DVector<f64>| z[0] * z[0] * z[1] + z[1],
            gradient: |z: &DVector<f64>| DVector::from_vec(vec![2.0 * z[0] * z[1], z[0] * z[0] + 1.0]),
        });
        let f = AffinePullback::between(&source, &target, inner);
        // Vertex correspondence.
        assert_relative_eq!(f.forward(source.vertex(2)), target.vertex(2).clone(), epsilon = 1e-14);
        let x = DVector::from_vec(vec![1.4, 1.6]);
        let g = f.gradient(&x);
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn combination_is_linear() {
        let a: Arc<dyn ScalarField> = Arc::new(FnField {
            dim: 1,
            value: |x: &DVector<f64>| x[0],
            gradient: |_x: &DVector<f64>| DVector::from_vec(vec![1.0]),
        });
        let c = Combination::new(1).with(2.0, a.clone()).with(-0.5, a);
        let x = DVector::from_vec(vec![3.0]);
        assert_eq!(c.value(&x), 4.5);
        assert_eq!(c.gradient(&x)[0], 1.5);
        assert_eq!(c.len(), 2);
    }
}
