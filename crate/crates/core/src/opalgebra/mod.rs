//! Exact algebra of differential operators with polynomial coefficients.
//!
//! A [`PolyDiffOp`] is a finite sum `Σ c x^α ∂^β` in normal order (multiplications
//! to the left of derivatives) with arbitrary-precision rational coefficients.
//! Composition uses the Leibniz rule, so identities such as `[P, X] = 2P` for a
//! constant-coefficient second-order `P` and the radial field `X = Σ x_i ∂_i` are
//! checked by comparing term maps, with no tolerance involved.

mod parse;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub use parse::{parse_expr, parse_expr_with_dim};

/// Largest total degree `|α| + |β|` of any term.
pub const DEGREE_CAP: u32 = 16;

/// `(α, β)`: exponents of `x` and orders of `∂`.
pub type TermKey = (Vec<u32>, Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolyDiffOp {
    dim: usize,
    terms: BTreeMap<TermKey, BigRational>,
}

fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn falling_factorial(n: u32, k: u32) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

fn binomial(n: u32, k: u32) -> BigInt {
    falling_factorial(n, k) / falling_factorial(k, k)
}

fn degree(key: &TermKey) -> u32 {
    key.0.iter().sum::<u32>() + key.1.iter().sum::<u32>()
}

impl PolyDiffOp {
    pub fn zero(dim: usize) -> Self {
        PolyDiffOp { dim, terms: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, BigRational::one())
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut op = Self::zero(dim);
        op.add_term((vec![0; dim], vec![0; dim]), c);
        op
    }

    /// `c x^α ∂^β`.
    pub fn monomial(dim: usize, c: BigRational, alpha: Vec<u32>, beta: Vec<u32>) -> Result<Self> {
        if alpha.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: alpha.len() });
        }
        if beta.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: beta.len() });
        }
        let key = (alpha, beta);
        let deg = degree(&key);
        if deg > DEGREE_CAP {
            return Err(Error::DegreeOverflow { degree: deg, cap: DEGREE_CAP });
        }
        let mut op = Self::zero(dim);
        op.add_term(key, c);
        Ok(op)
    }

    /// Multiplication by `x_k` (1-based `k`).
    pub fn x(dim: usize, k: usize) -> Self {
        let mut alpha = vec![0; dim];
        alpha[k - 1] = 1;
        Self::monomial(dim, BigRational::one(), alpha, vec![0; dim]).expect("degree 1")
    }

    /// `∂_{x_k}` (1-based `k`).
    pub fn d(dim: usize, k: usize) -> Self {
        let mut beta = vec![0; dim];
        beta[k - 1] = 1;
        Self::monomial(dim, BigRational::one(), vec![0; dim], beta).expect("degree 1")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, alpha: &[u32], beta: &[u32]) -> BigRational {
        self.terms
            .get(&(alpha.to_vec(), beta.to_vec()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Largest `|α| + |β|` over the stored terms.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(degree).max().unwrap_or(0)
    }

    /// `true` when no term carries a derivative, i.e. the operator is a polynomial.
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(|(_, b)| b.iter().all(|&e| e == 0))
    }

    fn add_term(&mut self, key: TermKey, c: BigRational) {
        use std::collections::btree_map::Entry;
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&rational(-1))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        PolyDiffOp {
            dim: self.dim,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    /// `self ∘ other` in normal order.
    ///
    /// For single terms, `x^α ∂^β ∘ x^γ ∂^δ = Σ_{κ ≤ β, κ ≤ γ} C(β, κ) γ!/(γ-κ)! x^{α+γ-κ} ∂^{β-κ+δ}`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let n = self.dim;
        let mut out = Self::zero(n);
        for ((alpha, beta), c) in &self.terms {
            for ((gamma, delta), d) in &other.terms {
                let limits: Vec<u32> = (0..n).map(|i| beta[i].min(gamma[i])).collect();
                let mut kappa = vec![0u32; n];
                loop {
                    let mut weight = BigInt::one();
                    for i in 0..n {
                        weight *= binomial(beta[i], kappa[i]) * falling_factorial(gamma[i], kappa[i]);
                    }
                    let new_alpha: Vec<u32> = (0..n).map(|i| alpha[i] + gamma[i] - kappa[i]).collect();
                    let new_beta: Vec<u32> = (0..n).map(|i| beta[i] - kappa[i] + delta[i]).collect();
                    let key = (new_alpha, new_beta);
                    let deg = degree(&key);
                    if deg > DEGREE_CAP {
                        return Err(Error::DegreeOverflow { degree: deg, cap: DEGREE_CAP });
                    }
                    out.add_term(key, c * d * BigRational::from_integer(weight));

                    // Next κ in the box 0 ≤ κ ≤ limits.
                    let mut i = 0;
                    while i < n {
                        if kappa[i] < limits[i] {
                            kappa[i] += 1;
                            break;
                        }
                        kappa[i] = 0;
                        i += 1;
                    }
                    if i == n {
                        break;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `[a, b] = a∘b - b∘a`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// Applies the operator to a polynomial (an operator without derivative terms).
    pub fn apply(&self, poly: &Self) -> Result<Self> {
        if !poly.is_polynomial() {
            return Err(Error::InvalidArgument("apply expects a polynomial operand".into()));
        }
        let composed = self.compose(poly)?;
        let mut out = Self::zero(self.dim);
        for (k, c) in composed.terms {
            if k.1.iter().all(|&e| e == 0) {
                out.add_term(k, c);
            }
        }
        Ok(out)
    }

    /// Evaluates a polynomial at a point in double precision.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if !self.is_polynomial() {
            return Err(Error::InvalidArgument("eval expects a polynomial".into()));
        }
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|((alpha, _), c)| {
                let mono: f64 = alpha.iter().zip(x).map(|(&a, &xi)| xi.powi(a as i32)).product();
                c.to_f64().unwrap_or(f64::NAN) * mono
            })
            .sum())
    }
}

/// `X = Σ_{i=1}^n x_i ∂_{x_i}`.
pub fn radial_field(dim: usize) -> PolyDiffOp {
    let mut out = PolyDiffOp::zero(dim);
    for k in 1..=dim {
        let mut alpha = vec![0; dim];
        let mut beta = vec![0; dim];
        alpha[k - 1] = 1;
        beta[k - 1] = 1;
        out.add_term((alpha, beta), BigRational::one());
    }
    out
}

/// Symmetric positive definite rational coefficient matrix `K` of `P = -Σ K_ij ∂_i ∂_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    coefficients: Vec<Vec<BigRational>>,
    lambda_min: f64,
}

impl EllipticOperator {
    pub fn new(coefficients: Vec<Vec<BigRational>>) -> Result<Self> {
        let n = coefficients.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty coefficient matrix".into()));
        }
        for row in &coefficients {
            if row.len() != n {
                return Err(Error::DimMismatch { expected: n, got: row.len() });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if coefficients[i][j] != coefficients[j][i] {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        if !ldlt_pivots(&coefficients).iter().all(|p| p.is_positive()) {
            return Err(Error::NotPositiveDefinite);
        }
        let dense = to_f64_matrix(&coefficients);
        let lambda_min = dense.symmetric_eigen().eigenvalues.min();
        Ok(EllipticOperator { coefficients, lambda_min })
    }

    pub fn from_integers(rows: &[&[i64]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.iter().map(|&v| rational(v)).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[Vec<BigRational>] {
        &self.coefficients
    }

    pub fn coefficients_f64(&self) -> DMatrix<f64> {
        to_f64_matrix(&self.coefficients)
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Ellipticity constant `C = 1/λ_min` with `‖∇u‖² ≤ C ⟨Pu, u⟩`.
    pub fn ellipticity_constant(&self) -> f64 {
        1.0 / self.lambda_min
    }

    /// `-Σ_{i,j} K_ij ∂_i ∂_j` with exact coefficients.
    pub fn to_diffop(&self) -> PolyDiffOp {
        let n = self.dim();
        let mut out = PolyDiffOp::zero(n);
        for i in 0..n {
            for j in 0..n {
                let mut beta = vec![0u32; n];
                beta[i] += 1;
                beta[j] += 1;
                out.add_term((vec![0; n], beta), -self.coefficients[i][j].clone());
            }
        }
        out
    }
}

/// Pivots of the unpivoted LDLᵀ elimination; all positive iff the matrix is SPD.
fn ldlt_pivots(m: &[Vec<BigRational>]) -> Vec<BigRational> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut pivots = Vec::with_capacity(n);
    for k in 0..n {
        let p = a[k][k].clone();
        if !p.is_positive() {
            pivots.push(p);
            return pivots;
        }
        for i in (k + 1)..n {
            let factor = &a[i][k] / &p;
            for j in (k + 1)..n {
                let delta = &factor * &a[k][j];
                a[i][j] -= delta;
            }
        }
        pivots.push(p);
    }
    pivots
}

fn to_f64_matrix(m: &[Vec<BigRational>]) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j].to_f64().unwrap_or(f64::NAN))
}

/// Exact inverse by Gauss-Jordan elimination; `None` if singular.
pub fn rational_inverse(m: &[Vec<BigRational>]) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let da = &f * &a[col][j];
                    a[r][j] -= da;
                    let di = &f * &inv[col][j];
                    inv[r][j] -= di;
                }
            }
        }
    }
    Some(inv)
}

/// `K = B Bᵀ` with `B = A⁻¹` for the rational simplex with the given vertices.
pub fn simplex_metric(vertices: &[Vec<BigRational>]) -> Result<EllipticOperator> {
    let n = vertices.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::InvalidArgument("need at least two vertices".into()));
    }
    let a: Vec<Vec<BigRational>> = (0..n)
        .map(|r| (0..n).map(|c| &vertices[c + 1][r] - &vertices[0][r]).collect())
        .collect();
    let b = rational_inverse(&a).ok_or(Error::DegenerateSimplex { det: 0.0, threshold: 0.0 })?;
    let k: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(BigRational::zero(), |acc, l| acc + &b[i][l] * &b[j][l]))
                .collect()
        })
        .collect();
    EllipticOperator::new(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorCheck {
    pub holds: bool,
    pub residual: PolyDiffOp,
}

/// Computes `[P, field] - 2P` exactly; the lemma holds iff the residual is zero.
pub fn verify_commutator_with_field(e: &EllipticOperator, field: &PolyDiffOp) -> Result<CommutatorCheck> {
    let p = e.to_diffop();
    let two = rational(2);
    let residual = p.commutator(field)?.sub(&p.scale(&two))?;
    Ok(CommutatorCheck { holds: residual.is_zero(), residual })
}

pub fn verify_commutator_lemma(e: &EllipticOperator) -> CommutatorCheck {
    verify_commutator_with_field(e, &radial_field(e.dim())).expect("dimensions agree")
}

/// Random SPD matrix `MᵀM + I` with small rational entries in `M`.
pub fn random_spd<R: rand::Rng>(dim: usize, rng: &mut R) -> EllipticOperator {
    let m: Vec<Vec<BigRational>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    BigRational::new(BigInt::from(rng.gen_range(-6i64..=6)), BigInt::from(rng.gen_range(1i64..=5)))
                })
                .collect()
        })
        .collect();
    let k: Vec<Vec<BigRational>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let mut acc = if i == j { BigRational::one() } else { BigRational::zero() };
                    for l in 0..dim {
                        acc += &m[l][i] * &m[l][j];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    EllipticOperator::new(k).expect("MᵀM + I is SPD")
}
