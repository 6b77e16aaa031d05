//! Geodesic distance approximation on the tet vertex graph.
//!
//! Edges carry Riemannian length under a per-vertex averaged covariant
//! metric. A second-ring shortcut level is on by default: straight segments
//! between vertices sharing a neighbor tame the metrication error of the
//! plain edge graph, which refinement alone does not remove.

use super::{BoundaryPatch, MeshError, SimplicialComplex3};
use nalgebra::Matrix3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Per-vertex distances from a source set, travel-time units.
#[derive(Debug, Clone)]
pub struct GeodesicTable {
    pub source: String,
    pub dist: Vec<f64>,
}

impl GeodesicTable {
    /// Distance at a tet centroid, interpolated from its vertices.
    pub fn tet_value(&self, k: &SimplicialComplex3, ti: usize) -> f64 {
        k.tets[ti].iter().map(|&v| self.dist[v]).sum::<f64>() / 4.0
    }

    pub fn max(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Pointwise minimum of two tables (distance from a union of sources).
    pub fn union(&self, other: &GeodesicTable) -> GeodesicTable {
        GeodesicTable {
            source: format!("{}|{}", self.source, other.source),
            dist: self
                .dist
                .iter()
                .zip(&other.dist)
                .map(|(a, b)| a.min(*b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    n: usize,
    /// Adjacency in CSR-like layout: (neighbor, length).
    offsets: Vec<usize>,
    arcs: Vec<(usize, f64)>,
}

struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.vertex == other.vertex
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, vertex id breaks ties deterministically
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.vertex.cmp(&self.vertex))
    }
}

impl GeodesicGraph {
    /// `metric_cov` is the covariant travel-time metric per tet.
    /// `shortcut_ring` of 1 uses mesh edges only; 2 adds straight segments
    /// between vertices at graph distance two.
    pub fn new(
        k: &SimplicialComplex3,
        metric_cov: &[Matrix3<f64>],
        shortcut_ring: usize,
    ) -> Result<Self, MeshError> {
        for (ti, m) in metric_cov.iter().enumerate() {
            // positive definiteness via leading minors
            let m11 = m[(0, 0)];
            let m2 = m.fixed_view::<2, 2>(0, 0).determinant();
            let m3 = m.determinant();
            if !(m11 > 0.0 && m2 > 0.0 && m3 > 0.0) {
                return Err(MeshError::DegenerateMetric(ti));
            }
        }
        let n = k.num_vertices();
        // volume-weighted vertex metrics
        let mut vmetric = vec![Matrix3::zeros(); n];
        let mut vweight = vec![0.0f64; n];
        for (ti, t) in k.tets.iter().enumerate() {
            let w = k.tet_volumes[ti];
            for &v in t {
                vmetric[v] += metric_cov[ti] * w;
                vweight[v] += w;
            }
        }
        for (m, w) in vmetric.iter_mut().zip(&vweight) {
            *m /= *w;
        }

        let seg_len = |a: usize, b: usize| -> f64 {
            let d = k.vertices[b] - k.vertices[a];
            let g = (vmetric[a] + vmetric[b]) * 0.5;
            (g * d).dot(&d).max(0.0).sqrt()
        };

        let mut neigh: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &k.edges {
            neigh[e[0]].push(e[1]);
            neigh[e[1]].push(e[0]);
        }
        for list in neigh.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }

        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, list) in neigh.iter().enumerate() {
            for &b in list {
                adj[a].push((b, seg_len(a, b)));
            }
        }
        if shortcut_ring >= 2 {
            for a in 0..n {
                let mut ring2: Vec<usize> = Vec::new();
                for &b in &neigh[a] {
                    for &c in &neigh[b] {
                        if c != a && !neigh[a].contains(&c) {
                            ring2.push(c);
                        }
                    }
                }
                ring2.sort_unstable();
                ring2.dedup();
                for c in ring2 {
                    adj[a].push((c, seg_len(a, c)));
                }
            }
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut arcs = Vec::new();
        offsets.push(0);
        for list in adj {
            arcs.extend(list);
            offsets.push(arcs.len());
        }
        Ok(Self { n, offsets, arcs })
    }

    pub fn distance_from_vertices(&self, sources: &[usize], name: &str) -> GeodesicTable {
        let mut dist = vec![f64::INFINITY; self.n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(HeapItem { dist: 0.0, vertex: s });
        }
        while let Some(HeapItem { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, len) in &self.arcs[self.offsets[v]..self.offsets[v + 1]] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapItem { dist: nd, vertex: w });
                }
            }
        }
        GeodesicTable {
            source: name.to_string(),
            dist,
        }
    }

    pub fn distance_from_patch(&self, patch: &BoundaryPatch) -> GeodesicTable {
        self.distance_from_vertices(&patch.vertices, &patch.label)
    }
}
