//! Symmetric sparse storage and the two mass-matrix solvers used by the time
//! stepper: a profile (skyline) Cholesky factorisation and conjugate gradients.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its upper triangle (including the diagonal) in CSR.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricSparseMatrix {
    /// Builds from `(i, j, v)` triplets; pairs with `i > j` are folded into the
    /// upper triangle and duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t: Vec<(usize, usize, f64)> =
            triplets.iter().map(|&(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) }).collect();
        // Stable sort keeps the summation order of duplicates fixed.
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of bounds for n = {n}");
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymmetricSparseMatrix { n, row_ptr, col_idx, values }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(pos) => self.values[self.row_ptr[r] + pos],
            Err(_) => 0.0,
        }
    }

    /// Upper-triangle entries `(i, j, v)` with `i ≤ j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.col_idx[p], self.values[p]))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let a = self.values[p];
                acc += a * x[j];
                if j != i {
                    y[j] += a * xi;
                }
            }
            y[i] += acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// Row sums of the full symmetric matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.n])
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let t: Vec<(usize, usize, f64)> = self
            .upper_entries()
            .filter(|&(i, j, _)| map[i] != usize::MAX && map[j] != usize::MAX)
            .map(|(i, j, v)| (map[i], map[j], v))
            .collect();
        Self::from_triplets(keep.len(), &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.upper_entries() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Diagonal of row sums (lumped mass).
    pub fn lumped(&self) -> Vec<f64> {
        self.row_sums()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Profile Cholesky factor `A = L Lᵀ`; row `i` of `L` is stored from its first
/// structurally nonzero column, so fill stays inside the envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &SymmetricSparseMatrix) -> Result<Self> {
        let n = a.dim();
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.upper_entries() {
            // (i, j) with i ≤ j is the lower entry (j, i).
            first[j] = first[j].min(i);
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for (i, j, v) in a.upper_entries() {
            data[start[j] + (i - first[j])] = v;
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + (j - fi)];
                for k in lo..j {
                    s -= data[start[i] + (k - fi)] * data[start[j] + (k - fj)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite);
                    }
                    data[start[i] + (i - fi)] = s.sqrt();
                } else {
                    data[start[i] + (j - fi)] = s / data[start[j] + (j - fj)];
                }
            }
        }
        Ok(SkylineCholesky { n, first, start, data })
    }

    fn l(&self, i: usize, j: usize) -> f64 {
        self.data[self.start[i] + (j - self.first[i])]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let mut s = b[i];
            for k in fi..i {
                s -= self.l(i, k) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
        for i in (0..self.n).rev() {
            b[i] /= self.l(i, i);
            let bi = b[i];
            for k in self.first[i]..i {
                b[k] -= self.l(i, k) * bi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`, starting from `x`.
pub fn conjugate_gradient(
    a: &SymmetricSparseMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let ax = a.matvec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let res = norm(&r) / b_norm;
        if res <= tol {
            return Ok(CgOutcome { iterations: it, relative_residual: res });
        }
        if it == max_iter {
            break;
        }
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize) -> SymmetricSparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SymmetricSparseMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_fold_and_sum() {
        let m = SymmetricSparseMatrix::from_triplets(3, &[(1, 0, 2.0), (0, 1, 1.0), (2, 2, 4.0), (0, 0, 1.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![4.0, 3.0, 4.0]);
    }

    #[test]
    fn submatrix_and_dense() {
        let m = laplacian_1d(5);
        let s = m.submatrix(&[1, 2, 3]);
        assert_eq!(s.to_dense(), laplacian_1d(3).to_dense());
        assert_eq!(SymmetricSparseMatrix::from_dense(&m.to_dense()), m);
    }

    #[test]
    fn skyline_matches_dense_solve() {
        let m = laplacian_1d(30);
        let chol = SkylineCholesky::factor(&m).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = chol.solve(&b);
        let dense = m.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..30 {
            assert_relative_eq!(x[i], dense[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn skyline_rejects_indefinite() {
        let m = SymmetricSparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]);
        assert!(matches!(SkylineCholesky::factor(&m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn cg_converges_and_reports() {
        let m = laplacian_1d(50);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let out = conjugate_gradient(&m, &b, &mut x, 1e-12, 500).unwrap();
        assert!(out.relative_residual <= 1e-12);
        let r = m.matvec(&x);
        for i in 0..50 {
            assert_relative_eq!(r[i], 1.0, epsilon = 1e-9);
        }
        let mut x = vec![0.0; 50];
        assert!(matches!(
            conjugate_gradient(&m, &b, &mut x, 1e-14, 2),
            Err(Error::NoConvergence { .. })
        ));
    }
}
