use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{factorial, Simplex};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet {
    pub verts: Vec<usize>,
    /// Parent face of the simplex.
    pub face: usize,
    /// The unique cell containing the facet.
    pub cell: usize,
}

/// Volume and barycentric gradients of one P1 cell.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub volume: f64,
    pub gradients: Vec<DVector<f64>>,
}

/// Freudenthal refinement of a single simplex.
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    dim: usize,
    levels: u32,
    simplex: Simplex,
    lattice: Vec<Vec<u32>>,
    vertices: Vec<DVector<f64>>,
    cells: Vec<Vec<usize>>,
    boundary_facets: Vec<BoundaryFacet>,
    /// Vertex -> equation index for interior vertices.
    interior_dofs: Vec<Option<usize>>,
    /// Equation index -> vertex.
    interior_vertices: Vec<usize>,
}

/// JSON layout: `{"vertices": [...], "cells": [...], "facets": [{"verts": [...], "face": j}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeshDump {
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub facets: Vec<FacetDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FacetDump {
    pub verts: Vec<usize>,
    pub face: usize,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Lattice points `k ≥ 0` with `Σ k ≤ total`, in lexicographic order.
fn lattice_points(dim: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(dim, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, total, &mut Vec::new(), &mut out);
    out
}

/// Reference lattice point from cumulative coordinates `a_i = Σ_{l ≥ i} k_l`.
fn from_cumulative(a: &[u32]) -> Vec<u32> {
    let n = a.len();
    (0..n).map(|i| a[i] - if i + 1 < n { a[i + 1] } else { 0 }).collect()
}

/// Kuhn simplices of the cube grid that lie inside `{N ≥ a_1 ≥ … ≥ a_n ≥ 0}`.
/// In cumulative coordinates the reference simplex is itself a Kuhn simplex, and
/// repeated Freudenthal bisection of it reproduces exactly these cells.
fn kuhn_cells(dim: usize, divisions: u32) -> Vec<Vec<Vec<u32>>> {
    let perms = permutations(dim);
    let mut cells = Vec::new();
    let mut base = vec![0u32; dim];
    loop {
        if base.windows(2).all(|w| w[0] >= w[1]) {
            for perm in &perms {
                let mut corner = base.clone();
                let mut verts = vec![corner.clone()];
                for &axis in perm {
                    corner[axis] += 1;
                    verts.push(corner.clone());
                }
                if verts.iter().all(|v| v[0] <= divisions && v.windows(2).all(|w| w[0] >= w[1])) {
                    cells.push(verts);
                }
            }
        }
        let mut i = dim;
        loop {
            if i == 0 {
                return cells;
            }
            i -= 1;
            base[i] += 1;
            if base[i] < divisions {
                break;
            }
            base[i] = 0;
        }
    }
}

impl SimplicialMesh {
    /// Refines `s` with `levels` rounds of Freudenthal subdivision
    /// (`2^(levels·n)` cells).
    pub fn refine(s: &Simplex, levels: u32) -> Result<Self> {
        let dim = s.dim();
        if levels > 12 {
            return Err(Error::InvalidArgument(format!("levels = {levels} is too large")));
        }
        let divisions = 1u32 << levels;
        let lattice = lattice_points(dim, divisions);
        let index: HashMap<Vec<u32>, usize> =
            lattice.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let scale = 1.0 / divisions as f64;
        let vertices: Vec<DVector<f64>> = lattice
            .iter()
            .map(|k| s.map_to_physical(&DVector::from_iterator(dim, k.iter().map(|&c| c as f64 * scale))))
            .collect();

        let mut cells = Vec::new();
        for verts in kuhn_cells(dim, divisions) {
            let mut cell: Vec<usize> = verts.iter().map(|a| index[&from_cumulative(a)]).collect();
            let edges = DMatrix::from_fn(dim, dim, |r, c| vertices[cell[c + 1]][r] - vertices[cell[0]][r]);
            if edges.determinant() < 0.0 {
                cell.swap(dim - 1, dim);
            }
            cells.push(cell);
        }

        let on_face = |k: &[u32], face: usize| -> bool {
            if face == 0 {
                k.iter().sum::<u32>() == divisions
            } else {
                k[face - 1] == 0
            }
        };
        let mut boundary_facets = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            for skip in 0..=dim {
                let verts: Vec<usize> =
                    cell.iter().enumerate().filter(|&(l, _)| l != skip).map(|(_, &v)| v).collect();
                for face in 0..=dim {
                    if verts.iter().all(|&v| on_face(&lattice[v], face)) {
                        boundary_facets.push(BoundaryFacet { verts: verts.clone(), face, cell: c });
                        break;
                    }
                }
            }
        }

        let mut interior_dofs = vec![None; lattice.len()];
        let mut interior_vertices = Vec::new();
        for (v, k) in lattice.iter().enumerate() {
            if k.iter().all(|&c| c > 0) && k.iter().sum::<u32>() < divisions {
                interior_dofs[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }

        Ok(SimplicialMesh {
            dim,
            levels,
            simplex: s.clone(),
            lattice,
            vertices,
            cells,
            boundary_facets,
            interior_dofs,
            interior_vertices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn simplex(&self) -> &Simplex {
        &self.simplex
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// Reference lattice coordinates of each vertex (`y = k / 2^levels`).
    pub fn lattice(&self) -> &[Vec<u32>] {
        &self.lattice
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn interior_dofs(&self) -> &[Option<usize>] {
        &self.interior_dofs
    }

    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    pub fn num_interior(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.interior_dofs[v].is_none()
    }

    pub fn cell_geometry(&self, c: usize) -> CellGeometry {
        let cell = &self.cells[c];
        let n = self.dim;
        let x0 = &self.vertices[cell[0]];
        let edges = DMatrix::from_fn(n, n, |r, col| self.vertices[cell[col + 1]][r] - x0[r]);
        let volume = edges.determinant().abs() / factorial(n);
        let inv = edges.try_inverse().expect("mesh cells are non-degenerate");
        // ∇λ_i (i ≥ 1) is row i-1 of the inverse edge matrix.
        let mut gradients = Vec::with_capacity(n + 1);
        let mut sum = DVector::zeros(n);
        for i in 0..n {
            let g = inv.row(i).transpose();
            sum += &g;
            gradients.push(g);
        }
        gradients.insert(0, -sum);
        CellGeometry { volume, gradients }
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_geometry(c).volume
    }

    /// Boundary facets lying on face `j`.
    pub fn facets_on_face(&self, j: usize) -> impl Iterator<Item = (usize, &BoundaryFacet)> {
        self.boundary_facets.iter().enumerate().filter(move |(_, f)| f.face == j)
    }

    /// `(n-1)`-measure of a facet.
    pub fn facet_area(&self, facet: &BoundaryFacet) -> f64 {
        let n = self.dim;
        let base = &self.vertices[facet.verts[0]];
        let e = DMatrix::from_fn(n, n - 1, |r, c| self.vertices[facet.verts[c + 1]][r] - base[r]);
        (e.transpose() * &e).determinant().max(0.0).sqrt() / factorial(n - 1)
    }

    /// Nodal interpolant on all vertices.
    pub fn interpolate<F: Fn(&DVector<f64>) -> f64>(&self, f: F) -> Vec<f64> {
        self.vertices.iter().map(f).collect()
    }

    /// Restriction of a full nodal vector to interior equations.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior_vertices.iter().map(|&v| full[v]).collect()
    }

    /// Extension by zero from interior equations to all vertices.
    pub fn extend(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.vertices.len()];
        for (eq, &v) in self.interior_vertices.iter().enumerate() {
            full[v] = interior[eq];
        }
        full
    }

    pub fn to_dump(&self) -> MeshDump {
        MeshDump {
            vertices: self.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
            cells: self.cells.clone(),
            facets: self
                .boundary_facets
                .iter()
                .map(|f| FacetDump { verts: f.verts.clone(), face: f.face })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn triangle() -> Simplex {
        Simplex::standard(2)
    }

    #[test]
    fn level_zero_is_the_simplex() {
        for n in 1..=4 {
            let m = SimplicialMesh::refine(&Simplex::standard(n), 0).unwrap();
            assert_eq!(m.cells().len(), 1);
            assert_eq!(m.vertices().len(), n + 1);
            assert_eq!(m.boundary_facets().len(), n + 1);
            let mut faces: Vec<usize> = m.boundary_facets().iter().map(|f| f.face).collect();
            faces.sort();
            assert_eq!(faces, (0..=n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn triangle_level_one() {
        let m = SimplicialMesh::refine(&triangle(), 1).unwrap();
        assert_eq!(m.cells().len(), 4);
        assert_eq!(m.vertices().len(), 6);
        assert_eq!(m.boundary_facets().len(), 6);
        for j in 0..3 {
            assert_eq!(m.facets_on_face(j).count(), 2);
        }
        assert_eq!(m.num_interior(), 0);
    }

    #[test]
    fn cell_counts_follow_power_law() {
        for n in 1..=3 {
            for levels in 0..=3u32 {
                let m = SimplicialMesh::refine(&Simplex::standard(n), levels).unwrap();
                assert_eq!(m.cells().len(), 1usize << (levels as usize * n));
            }
        }
    }

    #[test]
    fn volumes_partition_the_simplex() {
        let s = Simplex::new(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let m = SimplicialMesh::refine(&s, 3).unwrap();
        let total: f64 = (0..m.cells().len()).map(|c| m.cell_volume(c)).sum();
        assert_relative_eq!(total, 3.0, max_relative = 1e-10);

        let s3 = crate::oracles::order_simplex(3);
        let m3 = SimplicialMesh::refine(&s3, 2).unwrap();
        let total: f64 = (0..m3.cells().len()).map(|c| m3.cell_volume(c)).sum();
        assert_relative_eq!(total, s3.volume(), max_relative = 1e-10);
    }

    #[test]
    fn cells_are_positively_oriented() {
        let s = crate::oracles::order_simplex(3);
        assert!(s.det() < 0.0);
        let m = SimplicialMesh::refine(&s, 2).unwrap();
        for cell in m.cells() {
            let e = DMatrix::from_fn(3, 3, |r, c| m.vertices()[cell[c + 1]][r] - m.vertices()[cell[0]][r]);
            assert!(e.determinant() > 0.0);
        }
    }

    /// Every interior facet is shared by exactly two cells and every boundary
    /// facet by exactly one, so the mesh is conforming.
    #[test]
    fn mesh_is_conforming() {
        for (n, levels) in [(2usize, 3u32), (3, 2), (4, 1)] {
            let m = SimplicialMesh::refine(&Simplex::standard(n), levels).unwrap();
            let mut count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
            for cell in m.cells() {
                for skip in 0..=n {
                    let mut f: Vec<usize> =
                        cell.iter().enumerate().filter(|&(l, _)| l != skip).map(|(_, &v)| v).collect();
                    f.sort();
                    *count.entry(f).or_default() += 1;
                }
            }
            let mut boundary: Vec<Vec<usize>> = m
                .boundary_facets()
                .iter()
                .map(|f| {
                    let mut v = f.verts.clone();
                    v.sort();
                    v
                })
                .collect();
            boundary.sort();
            let once: Vec<Vec<usize>> = count.iter().filter(|(_, &c)| c == 1).map(|(f, _)| f.clone()).collect();
            assert_eq!(once, boundary);
            assert!(count.values().all(|&c| c == 1 || c == 2));
        }
    }

    #[test]
    fn boundary_facets_lie_on_parent_faces() {
        let s = Simplex::new(&[vec![0.5, 0.0, 0.0], vec![2.0, 0.3, 0.0], vec![0.1, 1.5, 0.2], vec![0.0, 0.4, 1.2]]).unwrap();
        let m = SimplicialMesh::refine(&s, 2).unwrap();
        let diameter = s.max_edge();
        for facet in m.boundary_facets() {
            let face = s.face_metrics(facet.face).unwrap();
            let anchor = s.vertex(face.vertex_indices[0]);
            for &v in &facet.verts {
                let dist = face.normal.dot(&(&m.vertices()[v] - anchor)).abs();
                assert!(dist <= 1e-10 * diameter);
            }
            assert!(m.cells()[facet.cell].iter().filter(|v| facet.verts.contains(v)).count() == 3);
        }
    }

    #[test]
    fn facet_areas_sum_to_face_area() {
        let s = crate::oracles::order_simplex(3);
        let m = SimplicialMesh::refine(&s, 2).unwrap();
        for j in 0..=3 {
            let total: f64 = m.facets_on_face(j).map(|(_, f)| m.facet_area(f)).sum();
            assert_relative_eq!(total, s.face_metrics(j).unwrap().area, max_relative = 1e-12);
        }
    }

    #[test]
    fn interior_counts() {
        let m = SimplicialMesh::refine(&triangle(), 2).unwrap();
        assert_eq!(m.num_interior(), 3);
        let full: Vec<f64> = (0..m.vertices().len()).map(|v| v as f64).collect();
        let back = m.extend(&m.restrict(&full));
        for v in 0..full.len() {
            if m.is_boundary_vertex(v) {
                assert_eq!(back[v], 0.0);
            } else {
                assert_eq!(back[v], full[v]);
            }
        }
    }

    #[test]
    fn barycentric_gradients_reproduce_linear_functions() {
        let s = Simplex::new(&[vec![0.0, 0.0], vec![2.0, 0.5], vec![0.3, 1.7]]).unwrap();
        let m = SimplicialMesh::refine(&s, 2).unwrap();
        let g = DVector::from_vec(vec![0.7, -1.3]);
        let u = m.interpolate(|x| g.dot(x) + 0.25);
        for c in 0..m.cells().len() {
            let geo = m.cell_geometry(c);
            let grad = m.cells()[c].iter().zip(&geo.gradients).fold(DVector::zeros(2), |acc, (&v, gv)| acc + gv * u[v]);
            assert_relative_eq!(grad, g.clone(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dump_has_expected_shape() {
        let m = SimplicialMesh::refine(&triangle(), 1).unwrap();
        let json = serde_json::to_value(m.to_dump()).unwrap();
        assert_eq!(json["vertices"].as_array().unwrap().len(), 6);
        assert_eq!(json["cells"].as_array().unwrap().len(), 4);
        assert_eq!(json["facets"].as_array().unwrap().len(), 6);
        assert!(json["facets"][0]["face"].is_u64());
    }
}
