//! Oriented simplicial 3-complexes: construction, validation, boundary
//! surface extraction and patch selection.
//!
//! Simplices of every dimension are canonically oriented by increasing
//! vertex id, which makes all incidence matrices reproducible bit for bit.

mod format;
mod geodesic;
mod presets;

pub use format::{parse_tetmesh, write_tetmesh};
pub use geodesic::{GeodesicGraph, GeodesicTable};
pub use presets::{reference_tet, unit_cube};

use nalgebra::{Matrix3, Vector3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("vertex id {0} out of range")]
    VertexOutOfRange(usize),
    #[error("tet {0} is degenerate or inverted (signed volume {1:.3e})")]
    InvertedElement(usize, f64),
    #[error("face {0:?} shared by more than two tets")]
    NonManifold([usize; 3]),
    #[error("vertex {0} belongs to no tetrahedron")]
    DanglingVertex(usize),
    #[error("boundary surface is not closed: edge {0:?} lies in {1} boundary faces")]
    OpenBoundary([usize; 2], usize),
    #[error("inconsistent face orientation between tets {0} and {1}")]
    InconsistentOrientation(usize, usize),
    #[error("patch predicate selected no boundary faces")]
    EmptyPatch,
    #[error("degenerate metric on tet {0}")]
    DegenerateMetric(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Oriented tetrahedral complex with all derived incidence.
#[derive(Debug, Clone)]
pub struct SimplicialComplex3 {
    pub vertices: Vec<Vector3<f64>>,
    /// Tets with vertex ids sorted increasingly.
    pub tets: Vec<[usize; 4]>,
    /// +1 when the sorted vertex order agrees with the chart orientation.
    pub tet_signs: Vec<i8>,
    /// Edges as sorted pairs, lexicographic global order.
    pub edges: Vec<[usize; 2]>,
    /// Faces as sorted triples, lexicographic global order.
    pub faces: Vec<[usize; 3]>,
    /// Local edge ids per tet, pairs in positional order
    /// (01, 02, 03, 12, 13, 23) of the sorted tet.
    pub tet_edges: Vec<[usize; 6]>,
    /// Local face ids per tet in positional order (123, 023, 013, 012).
    pub tet_faces: Vec<[usize; 4]>,
    /// Tets incident to each face (second entry absent for boundary faces).
    pub face_tets: Vec<(usize, Option<usize>)>,
    /// Global ids of boundary faces, edges and vertices, sorted.
    pub boundary_faces: Vec<usize>,
    pub boundary_edges: Vec<usize>,
    pub boundary_vertices: Vec<usize>,
    /// Inverse maps: global simplex id -> boundary-local index (or MAX).
    pub face_to_bface: Vec<usize>,
    pub edge_to_bedge: Vec<usize>,
    pub vertex_to_bvertex: Vec<usize>,
    /// Optional labels attached to boundary faces.
    pub patch_labels: BTreeMap<usize, String>,
    /// Euclidean (chart) volume of each tet, strictly positive.
    pub tet_volumes: Vec<f64>,
}

/// A labeled subset of the boundary surface together with its closure.
#[derive(Debug, Clone)]
pub struct BoundaryPatch {
    pub label: String,
    /// Global face ids.
    pub faces: Vec<usize>,
    /// Global edge ids in the closure.
    pub edges: Vec<usize>,
    /// Global vertex ids in the closure.
    pub vertices: Vec<usize>,
}

fn sort4(mut t: [usize; 4]) -> ([usize; 4], i8) {
    // Parity of the sorting permutation by bubble count.
    let mut sign = 1i8;
    for i in 0..3 {
        for j in 0..3 - i {
            if t[j] > t[j + 1] {
                t.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    (t, sign)
}

fn signed_volume(v: &[Vector3<f64>], t: &[usize; 4]) -> f64 {
    let a = v[t[1]] - v[t[0]];
    let b = v[t[2]] - v[t[0]];
    let c = v[t[3]] - v[t[0]];
    Matrix3::from_columns(&[a, b, c]).determinant() / 6.0
}

impl SimplicialComplex3 {
    /// Builds the complex from raw vertices and tets, filling every derived
    /// incidence table and checking the manifold invariants.
    pub fn build(
        vertices: Vec<Vector3<f64>>,
        input_tets: Vec<[usize; 4]>,
    ) -> Result<Self, MeshError> {
        if input_tets.is_empty() {
            return Err(MeshError::Empty);
        }
        for (ti, t) in input_tets.iter().enumerate() {
            for &v in t {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange(v));
                }
            }
            let vol = signed_volume(&vertices, t);
            if vol <= 0.0 {
                return Err(MeshError::InvertedElement(ti, vol));
            }
        }

        let mut tets = Vec::with_capacity(input_tets.len());
        let mut tet_signs = Vec::with_capacity(input_tets.len());
        let mut tet_volumes = Vec::with_capacity(input_tets.len());
        for t in &input_tets {
            let (sorted, sign) = sort4(*t);
            let vol = signed_volume(&vertices, t);
            tets.push(sorted);
            tet_signs.push(sign);
            tet_volumes.push(vol);
        }

        let mut touched = vec![false; vertices.len()];
        let mut edge_set: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut face_set: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        for t in &tets {
            for &v in t {
                touched[v] = true;
            }
            for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
                edge_set.entry([t[i], t[j]]).or_insert(0);
            }
            for omit in 0..4 {
                let mut f = [0usize; 3];
                let mut k = 0;
                for (pos, &v) in t.iter().enumerate() {
                    if pos != omit {
                        f[k] = v;
                        k += 1;
                    }
                }
                face_set.entry(f).or_insert(0);
            }
        }
        if let Some(v) = touched.iter().position(|&b| !b) {
            return Err(MeshError::DanglingVertex(v));
        }

        let edges: Vec<[usize; 2]> = edge_set.keys().copied().collect();
        let faces: Vec<[usize; 3]> = face_set.keys().copied().collect();
        for (i, e) in edges.iter().enumerate() {
            *edge_set.get_mut(e).unwrap() = i;
        }
        for (i, f) in faces.iter().enumerate() {
            *face_set.get_mut(f).unwrap() = i;
        }

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_faces = Vec::with_capacity(tets.len());
        let mut face_incidence: Vec<Vec<(usize, i8)>> = vec![Vec::new(); faces.len()];
        for (ti, t) in tets.iter().enumerate() {
            let mut te = [0usize; 6];
            for (k, (i, j)) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
                .into_iter()
                .enumerate()
            {
                te[k] = edge_set[&[t[i], t[j]]];
            }
            tet_edges.push(te);
            let mut tf = [0usize; 4];
            for omit in 0..4 {
                let mut f = [0usize; 3];
                let mut k = 0;
                for (pos, &v) in t.iter().enumerate() {
                    if pos != omit {
                        f[k] = v;
                        k += 1;
                    }
                }
                let fid = face_set[&f];
                tf[omit] = fid;
                // Incidence sign (-1)^omit, weighted by the chart orientation
                // of the sorted tet, gives the induced boundary orientation.
                let sign = if omit % 2 == 0 { 1i8 } else { -1i8 };
                face_incidence[fid].push((ti, sign * tet_signs[ti]));
            }
            // spec stores faces opposite vertex 0..3; reorder to positional
            // convention (faces listed by omitted position 0,1,2,3 already).
            tet_faces.push(tf);
        }

        let mut face_tets = Vec::with_capacity(faces.len());
        let mut boundary_faces = Vec::new();
        for (fid, inc) in face_incidence.iter().enumerate() {
            match inc.len() {
                1 => {
                    boundary_faces.push(fid);
                    face_tets.push((inc[0].0, None));
                }
                2 => {
                    if inc[0].1 * inc[1].1 != -1 {
                        return Err(MeshError::InconsistentOrientation(inc[0].0, inc[1].0));
                    }
                    face_tets.push((inc[0].0, Some(inc[1].0)));
                }
                _ => return Err(MeshError::NonManifold(faces[fid])),
            }
        }

        // Closed-surface check: every boundary edge in exactly two boundary faces.
        let mut bedge_count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for &fid in &boundary_faces {
            let f = faces[fid];
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                *bedge_count.entry([f[i], f[j]]).or_insert(0) += 1;
            }
        }
        for (e, c) in &bedge_count {
            if *c != 2 {
                return Err(MeshError::OpenBoundary(*e, *c));
            }
        }

        let boundary_edges: Vec<usize> = bedge_count.keys().map(|e| edge_set[e]).collect();
        let mut bvert_set: Vec<usize> = boundary_faces
            .iter()
            .flat_map(|&fid| faces[fid].into_iter())
            .collect();
        bvert_set.sort_unstable();
        bvert_set.dedup();

        let mut face_to_bface = vec![usize::MAX; faces.len()];
        for (i, &f) in boundary_faces.iter().enumerate() {
            face_to_bface[f] = i;
        }
        let mut edge_to_bedge = vec![usize::MAX; edges.len()];
        for (i, &e) in boundary_edges.iter().enumerate() {
            edge_to_bedge[e] = i;
        }
        let mut vertex_to_bvertex = vec![usize::MAX; vertices.len()];
        for (i, &v) in bvert_set.iter().enumerate() {
            vertex_to_bvertex[v] = i;
        }

        Ok(Self {
            vertices,
            tets,
            tet_signs,
            edges,
            faces,
            tet_edges,
            tet_faces,
            face_tets,
            boundary_faces,
            boundary_edges,
            boundary_vertices: bvert_set,
            face_to_bface,
            edge_to_bedge,
            vertex_to_bvertex,
            patch_labels: BTreeMap::new(),
            tet_volumes,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    /// Number of simplices of the given degree.
    pub fn num_simplices(&self, k: usize) -> usize {
        match k {
            0 => self.num_vertices(),
            1 => self.num_edges(),
            2 => self.num_faces(),
            3 => self.num_tets(),
            _ => 0,
        }
    }

    pub fn face_centroid(&self, fid: usize) -> Vector3<f64> {
        let f = self.faces[fid];
        (self.vertices[f[0]] + self.vertices[f[1]] + self.vertices[f[2]]) / 3.0
    }

    pub fn tet_centroid(&self, ti: usize) -> Vector3<f64> {
        let t = self.tets[ti];
        (self.vertices[t[0]] + self.vertices[t[1]] + self.vertices[t[2]] + self.vertices[t[3]])
            / 4.0
    }

    /// Euler characteristic of the boundary surface.
    pub fn boundary_euler_characteristic(&self) -> i64 {
        self.boundary_vertices.len() as i64 - self.boundary_edges.len() as i64
            + self.boundary_faces.len() as i64
    }

    /// Selects boundary faces whose centroid satisfies the predicate,
    /// together with the edge and vertex closure.
    pub fn select_patch<F>(&self, label: &str, predicate: F) -> Result<BoundaryPatch, MeshError>
    where
        F: Fn(&Vector3<f64>, Option<&str>) -> bool,
    {
        let mut sel = Vec::new();
        for &fid in &self.boundary_faces {
            let c = self.face_centroid(fid);
            let lab = self.patch_labels.get(&fid).map(|s| s.as_str());
            if predicate(&c, lab) {
                sel.push(fid);
            }
        }
        if sel.is_empty() {
            return Err(MeshError::EmptyPatch);
        }
        Ok(self.patch_from_faces(label, sel))
    }

    /// Patch from an explicit face set; computes the closure.
    pub fn patch_from_faces(&self, label: &str, mut faces: Vec<usize>) -> BoundaryPatch {
        faces.sort_unstable();
        faces.dedup();
        let mut edges = Vec::new();
        let mut vertices = Vec::new();
        for &fid in &faces {
            let f = self.faces[fid];
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let key = [f[i], f[j]];
                let eid = self
                    .edges
                    .binary_search(&key)
                    .expect("patch edge must exist");
                edges.push(eid);
            }
            vertices.extend_from_slice(&f);
        }
        edges.sort_unstable();
        edges.dedup();
        vertices.sort_unstable();
        vertices.dedup();
        BoundaryPatch {
            label: label.to_string(),
            faces,
            edges,
            vertices,
        }
    }

    /// The full boundary as one patch.
    pub fn full_boundary_patch(&self) -> BoundaryPatch {
        self.patch_from_faces("boundary", self.boundary_faces.clone())
    }
}
