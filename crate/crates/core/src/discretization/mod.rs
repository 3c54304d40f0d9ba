//! Freudenthal meshes of a simplex and P1 assembly of `P = -∇·K∇`.

mod mesh;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Simplex;

pub use crate::linalg::SymmetricSparseMatrix;
pub use mesh::{BoundaryFacet, CellGeometry, FacetDump, MeshDump, SimplicialMesh};

/// Checks that `k` is a symmetric positive definite `dim × dim` matrix.
pub fn check_spd(k: &DMatrix<f64>, dim: usize) -> Result<()> {
    if k.nrows() != dim || k.ncols() != dim {
        return Err(Error::DimMismatch { expected: dim, got: k.nrows() });
    }
    let scale = k.amax().max(f64::MIN_POSITIVE);
    if (k - k.transpose()).amax() > 1e-14 * scale {
        return Err(Error::NotSymmetric);
    }
    if k.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// Mass and stiffness matrices over all mesh vertices.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub mass: SymmetricSparseMatrix,
    pub stiffness: SymmetricSparseMatrix,
}

/// P1 mass `∫ φ_a φ_b` and stiffness `∫ ∇φ_aᵀ K ∇φ_b`.
///
/// Local matrices are computed in parallel and summed in cell order, so the
/// result does not depend on the number of worker threads.
pub fn assemble(mesh: &SimplicialMesh, k: &DMatrix<f64>) -> Result<Assembled> {
    let n = mesh.dim();
    check_spd(k, n)?;
    let mass_scale = 1.0 / ((n + 1) * (n + 2)) as f64;
    let local: Vec<(Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let cell = &mesh.cells()[c];
            let geo = mesh.cell_geometry(c);
            let kg: Vec<_> = geo.gradients.iter().map(|g| k * g).collect();
            let mut m = Vec::with_capacity((n + 1) * (n + 2) / 2);
            let mut s = Vec::with_capacity((n + 1) * (n + 2) / 2);
            for a in 0..=n {
                for b in a..=n {
                    let (i, j) = if cell[a] <= cell[b] { (cell[a], cell[b]) } else { (cell[b], cell[a]) };
                    let delta = if a == b { 2.0 } else { 1.0 };
                    m.push((i, j, geo.volume * delta * mass_scale));
                    s.push((i, j, geo.volume * geo.gradients[a].dot(&kg[b])));
                }
            }
            (m, s)
        })
        .collect();
    let nv = mesh.vertices().len();
    let (m, s): (Vec<_>, Vec<_>) = local.into_iter().unzip();
    let m: Vec<_> = m.into_iter().flatten().collect();
    let s: Vec<_> = s.into_iter().flatten().collect();
    Ok(Assembled {
        mass: SymmetricSparseMatrix::from_triplets(nv, &m),
        stiffness: SymmetricSparseMatrix::from_triplets(nv, &s),
    })
}

/// Interior-dof system after removing Dirichlet rows and columns.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    pub mass: SymmetricSparseMatrix,
    pub stiffness: SymmetricSparseMatrix,
    /// Equation index -> mesh vertex.
    pub dofs: Vec<usize>,
}

pub fn eliminate_dirichlet(assembled: &Assembled, mesh: &SimplicialMesh) -> Result<DirichletSystem> {
    let dofs = mesh.interior_vertices().to_vec();
    if dofs.is_empty() {
        return Err(Error::EmptyInterior);
    }
    Ok(DirichletSystem {
        mass: assembled.mass.submatrix(&dofs),
        stiffness: assembled.stiffness.submatrix(&dofs),
        dofs,
    })
}

/// Maximum relative discrepancies between the physical Laplacian assembly and the
/// `|det A|`-weighted assembly of `-∇·(BBᵀ)∇` on the reference simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackDiscrepancy {
    pub stiffness: f64,
    pub mass: f64,
}

pub fn pullback_equivalence_check(s: &Simplex, levels: u32) -> Result<PullbackDiscrepancy> {
    let n = s.dim();
    let physical_mesh = SimplicialMesh::refine(s, levels)?;
    let reference_mesh = SimplicialMesh::refine(&Simplex::standard(n), levels)?;
    let physical = assemble(&physical_mesh, &DMatrix::identity(n, n))?;
    let metric = s.inverse() * s.inverse().transpose();
    // Round-off can break exact symmetry of BBᵀ; symmetrise before the SPD check.
    let metric = (&metric + metric.transpose()) * 0.5;
    let reference = assemble(&reference_mesh, &metric)?;
    let jac = s.det().abs();

    let diff = |a: &SymmetricSparseMatrix, b: &SymmetricSparseMatrix| -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j, v) in a.upper_entries() {
            worst = worst.max((v - jac * b.get(i, j)).abs());
        }
        for (i, j, v) in b.upper_entries() {
            worst = worst.max((a.get(i, j) - jac * v).abs());
        }
        worst / a.max_abs()
    };
    Ok(PullbackDiscrepancy {
        stiffness: diff(&physical.stiffness, &reference.stiffness),
        mass: diff(&physical.mass, &reference.mass),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn one_cell() -> (SimplicialMesh, Assembled) {
        let mesh = SimplicialMesh::refine(&Simplex::standard(2), 0).unwrap();
        let a = assemble(&mesh, &DMatrix::identity(2, 2)).unwrap();
        (mesh, a)
    }

    #[test]
    fn unit_triangle_local_stiffness() {
        let (_, a) = one_cell();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
        assert_relative_eq!(a.stiffness.to_dense(), expected, epsilon = 1e-15);
    }

    #[test]
    fn unit_triangle_local_mass() {
        let (_, a) = one_cell();
        let expected = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]) * (0.5 / 12.0);
        assert_relative_eq!(a.mass.to_dense(), expected, epsilon = 1e-15);
    }

    #[test]
    fn constants_in_stiffness_kernel_and_mass_partition() {
        let s = Simplex::new(&[vec![0.1, 0.0, 0.2], vec![1.3, 0.2, 0.0], vec![0.0, 1.1, 0.3], vec![0.2, 0.1, 0.9]]).unwrap();
        let mesh = SimplicialMesh::refine(&s, 2).unwrap();
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let a = assemble(&mesh, &k).unwrap();
        let scale = a.stiffness.max_abs();
        assert!(a.stiffness.row_sums().iter().all(|r| r.abs() <= 1e-10 * scale));
        let total: f64 = a.mass.row_sums().iter().sum();
        assert_relative_eq!(total, s.volume(), max_relative = 1e-10);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let mesh = SimplicialMesh::refine(&Simplex::standard(2), 1).unwrap();
        assert!(matches!(assemble(&mesh, &DMatrix::identity(3, 3)), Err(Error::DimMismatch { .. })));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(assemble(&mesh, &indefinite), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn dirichlet_elimination() {
        let s = Simplex::standard(2);
        let m1 = SimplicialMesh::refine(&s, 1).unwrap();
        let a1 = assemble(&m1, &DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(eliminate_dirichlet(&a1, &m1), Err(Error::EmptyInterior)));

        let m2 = SimplicialMesh::refine(&s, 2).unwrap();
        let a2 = assemble(&m2, &DMatrix::identity(2, 2)).unwrap();
        let sys = eliminate_dirichlet(&a2, &m2).unwrap();
        assert_eq!(sys.dofs.len(), 3);
        let eig = sys.stiffness.to_dense().symmetric_eigen().eigenvalues;
        assert!(eig.min() > 0.0);
        assert!(sys.mass.to_dense().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn green_symmetry_with_boundary_dofs() {
        let mesh = SimplicialMesh::refine(&crate::oracles::order_simplex(2), 3).unwrap();
        let a = assemble(&mesh, &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let u: Vec<f64> = (0..mesh.vertices().len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..mesh.vertices().len()).map(|i| (i as f64 * 1.1).cos()).collect();
        let lhs = a.stiffness.bilinear(&v, &u);
        let rhs = a.stiffness.bilinear(&u, &v);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn assembly_is_deterministic_across_thread_counts() {
        let mesh = SimplicialMesh::refine(&Simplex::standard(3), 2).unwrap();
        let k = DMatrix::identity(3, 3);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| assemble(&mesh, &k).unwrap());
        let b = four.install(|| assemble(&mesh, &k).unwrap());
        assert_eq!(a.stiffness, b.stiffness);
        assert_eq!(a.mass, b.mass);
    }

    #[test]
    fn pullback_identity_and_diagonal() {
        let d = pullback_equivalence_check(&Simplex::standard(2), 2).unwrap();
        assert!(d.stiffness <= 1e-14 && d.mass <= 1e-14);
        let s = Simplex::new(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let d = pullback_equivalence_check(&s, 3).unwrap();
        assert!(d.stiffness <= 1e-10 && d.mass <= 1e-10, "{d:?}");
    }

    /// Lowest discrete Dirichlet eigenvalue on the unit right triangle approaches
    /// 5π² from above as the mesh is refined.
    #[test]
    fn rayleigh_quotient_converges_from_above() {
        let s = Simplex::standard(2);
        let exact = 5.0 * PI * PI;
        let mut previous = f64::INFINITY;
        for levels in 2..=5 {
            let mesh = SimplicialMesh::refine(&s, levels).unwrap();
            let sys = eliminate_dirichlet(&assemble(&mesh, &DMatrix::identity(2, 2)).unwrap(), &mesh).unwrap();
            let l = sys.mass.to_dense().cholesky().unwrap().l();
            let linv = l.try_inverse().unwrap();
            let reduced = &linv * sys.stiffness.to_dense() * linv.transpose();
            let lowest = reduced.symmetric_eigen().eigenvalues.min();
            assert!(lowest > exact, "levels {levels}: {lowest}");
            assert!(lowest < previous);
            previous = lowest;
        }
        assert!((previous - exact) / exact < 0.02);
    }
}
