//! Finite-element exterior calculus kernel: exterior derivatives, weighted
//! Whitney mass matrices, boundary traces, and the block Maxwell operator
//! with electric or magnetic boundary conditions.

pub mod whitney;

use crate::material::ImpedanceGeometry;
use crate::mesh::SimplicialComplex3;
use crate::sparse::{
    self, csr_from_triplets, matvec, matvec_acc, restrict, SolveError, SpdFactor,
};
use nalgebra::{Matrix2, Vector3};
use nalgebra_sparse::CsrMatrix;
use std::sync::Arc;
use thiserror::Error;
use whitney::ElementGeometry;

#[derive(Debug, Error)]
pub enum DecError {
    #[error("degenerate element {0}")]
    DegenerateElement(usize),
    #[error("incompatible degrees: {0} and {1}")]
    IncompatibleDegrees(usize, usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Boundary condition kind for the complete Maxwell operator.
///
/// The electric condition (vanishing tangential traces of degrees 0..2) is
/// essential and removed from the unknowns. The magnetic condition is the
/// natural one for the weak codifferential, so no degrees of freedom are
/// constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Electric,
    Magnetic,
}

#[derive(Debug, Clone)]
pub struct BoundaryConditionSpec {
    pub kind: BcKind,
    /// Constrained DOF ids per degree.
    pub constrained: [Vec<usize>; 4],
}

/// Operators on the boundary surface complex.
#[derive(Debug, Clone)]
pub struct BoundaryOps {
    /// Exterior derivative boundary vertices -> boundary edges.
    pub d0: CsrMatrix<f64>,
    /// Exterior derivative boundary edges -> boundary faces.
    pub d1: CsrMatrix<f64>,
    /// Whitney masses of the induced metric, weight 1/alpha, degrees 0..2.
    pub mass: [CsrMatrix<f64>; 3],
    /// +1 where the canonical orientation of a boundary face is outward.
    pub outward_sign: Vec<i8>,
}

/// Assembled global operators for one (mesh, geometry) pair.
pub struct DecOperators {
    pub mesh: Arc<SimplicialComplex3>,
    pub geometry: Arc<ImpedanceGeometry>,
    /// Signed incidence d_k, k-forms -> (k+1)-forms.
    pub d: [CsrMatrix<f64>; 3],
    /// Transposes of d, cached.
    pub dt: [CsrMatrix<f64>; 3],
    /// Galerkin mass matrices with weight 1/alpha, degrees 0..3.
    pub mass: [CsrMatrix<f64>; 4],
    /// Cholesky factors of the full mass matrices.
    factor_full: [SpdFactor; 4],
    pub boundary: BoundaryOps,
}

fn assemble_d(k: &SimplicialComplex3, deg: usize) -> CsrMatrix<f64> {
    let mut trip = Vec::new();
    match deg {
        0 => {
            for (ei, e) in k.edges.iter().enumerate() {
                trip.push((ei, e[1], 1.0));
                trip.push((ei, e[0], -1.0));
            }
            csr_from_triplets(k.num_edges(), k.num_vertices(), &trip)
        }
        1 => {
            for (fi, f) in k.faces.iter().enumerate() {
                for (omit, sign) in [(0usize, 1.0), (1, -1.0), (2, 1.0)] {
                    let mut e = [0usize; 2];
                    let mut n = 0;
                    for (pos, &v) in f.iter().enumerate() {
                        if pos != omit {
                            e[n] = v;
                            n += 1;
                        }
                    }
                    let eid = k.edges.binary_search(&e).expect("face edge");
                    trip.push((fi, eid, sign));
                }
            }
            csr_from_triplets(k.num_faces(), k.num_edges(), &trip)
        }
        2 => {
            for (ti, tf) in k.tet_faces.iter().enumerate() {
                for (omit, &fid) in tf.iter().enumerate() {
                    let sign = if omit % 2 == 0 { 1.0 } else { -1.0 };
                    trip.push((ti, fid, sign));
                }
            }
            csr_from_triplets(k.num_tets(), k.num_faces(), &trip)
        }
        _ => unreachable!("no exterior derivative beyond degree 2"),
    }
}

fn assemble_masses(
    k: &SimplicialComplex3,
    geo: &ImpedanceGeometry,
) -> Result<[CsrMatrix<f64>; 4], DecError> {
    let mut t0 = Vec::new();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut t3 = Vec::new();
    for ti in 0..k.num_tets() {
        if !(k.tet_volumes[ti] > 0.0) {
            return Err(DecError::DegenerateElement(ti));
        }
        let el = ElementGeometry::new(k, geo, ti);
        let m0 = el.mass0();
        let t = k.tets[ti];
        for p in 0..4 {
            for q in 0..4 {
                t0.push((t[p], t[q], m0[(p, q)]));
            }
        }
        let m1 = el.mass1();
        let te = k.tet_edges[ti];
        for p in 0..6 {
            for q in 0..6 {
                t1.push((te[p], te[q], m1[p][q]));
            }
        }
        let m2 = el.mass2();
        let tf = k.tet_faces[ti];
        for p in 0..4 {
            for q in 0..4 {
                t2.push((tf[p], tf[q], m2[(p, q)]));
            }
        }
        t3.push((ti, ti, el.mass3()));
    }
    Ok([
        csr_from_triplets(k.num_vertices(), k.num_vertices(), &t0),
        csr_from_triplets(k.num_edges(), k.num_edges(), &t1),
        csr_from_triplets(k.num_faces(), k.num_faces(), &t2),
        csr_from_triplets(k.num_tets(), k.num_tets(), &t3),
    ])
}

fn assemble_boundary(k: &SimplicialComplex3, geo: &ImpedanceGeometry) -> BoundaryOps {
    let nbv = k.boundary_vertices.len();
    let nbe = k.boundary_edges.len();
    let nbf = k.boundary_faces.len();

    let mut trip = Vec::new();
    for (lei, &eid) in k.boundary_edges.iter().enumerate() {
        let e = k.edges[eid];
        trip.push((lei, k.vertex_to_bvertex[e[1]], 1.0));
        trip.push((lei, k.vertex_to_bvertex[e[0]], -1.0));
    }
    let d0 = csr_from_triplets(nbe, nbv, &trip);

    trip = Vec::new();
    for (lfi, &fid) in k.boundary_faces.iter().enumerate() {
        let f = k.faces[fid];
        for (omit, sign) in [(0usize, 1.0), (1, -1.0), (2, 1.0)] {
            let mut e = [0usize; 2];
            let mut n = 0;
            for (pos, &v) in f.iter().enumerate() {
                if pos != omit {
                    e[n] = v;
                    n += 1;
                }
            }
            let eid = k.edges.binary_search(&e).expect("boundary face edge");
            trip.push((lfi, k.edge_to_bedge[eid], sign));
        }
    }
    let d1 = csr_from_triplets(nbf, nbe, &trip);

    // Induced-metric Whitney masses on the surface triangles.
    let mut t0 = Vec::new();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut outward = vec![0i8; nbf];
    const TRI_EDGES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    for (lfi, &fid) in k.boundary_faces.iter().enumerate() {
        let f = k.faces[fid];
        let (owner, _) = k.face_tets[fid];
        // outward sign of the canonical orientation: induced boundary
        // orientation of the chart-oriented owner tet
        let omit = k.tet_faces[owner]
            .iter()
            .position(|&x| x == fid)
            .expect("face in owner");
        let parity = if omit % 2 == 0 { 1i8 } else { -1i8 };
        outward[lfi] = parity * k.tet_signs[owner];

        let g_cov = &geo.g_cov[owner];
        let inv_alpha = 1.0 / geo.alpha[owner];
        let p: Vec<Vector3<f64>> = f.iter().map(|&v| k.vertices[v]).collect();
        let e1 = p[1] - p[0];
        let e2 = p[2] - p[0];
        let h = Matrix2::new(
            (g_cov * e1).dot(&e1),
            (g_cov * e1).dot(&e2),
            (g_cov * e2).dot(&e1),
            (g_cov * e2).dot(&e2),
        );
        let det_h = h.determinant();
        let area = det_h.sqrt() * 0.5;
        let h_inv = h.try_inverse().expect("nondegenerate face");
        let grads2 = [
            nalgebra::Vector2::new(-1.0, -1.0),
            nalgebra::Vector2::new(1.0, 0.0),
            nalgebra::Vector2::new(0.0, 1.0),
        ];
        let mut gram = [[0.0f64; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                gram[a][b] = (h_inv * grads2[b]).dot(&grads2[a]);
            }
        }
        let ppair = |a: usize, b: usize| {
            if a == b {
                area / 6.0
            } else {
                area / 12.0
            }
        };
        // degree 0
        for a in 0..3 {
            for b in 0..3 {
                t0.push((
                    k.vertex_to_bvertex[f[a]],
                    k.vertex_to_bvertex[f[b]],
                    inv_alpha * ppair(a, b),
                ));
            }
        }
        // degree 1: Whitney edge forms on the triangle
        let local_edge_ids: Vec<usize> = TRI_EDGES
            .iter()
            .map(|&(a, b)| {
                let e = [f[a], f[b]];
                k.edge_to_bedge[k.edges.binary_search(&e).expect("edge")]
            })
            .collect();
        for (ei, &(a, b)) in TRI_EDGES.iter().enumerate() {
            for (fj, &(c, d)) in TRI_EDGES.iter().enumerate() {
                let v = inv_alpha
                    * (ppair(a, c) * gram[b][d] - ppair(a, d) * gram[b][c]
                        - ppair(b, c) * gram[a][d]
                        + ppair(b, d) * gram[a][c]);
                t1.push((local_edge_ids[ei], local_edge_ids[fj], v));
            }
        }
        // degree 2: unit-integral area form
        t2.push((lfi, lfi, inv_alpha * 2.0 / det_h.sqrt()));
    }
    BoundaryOps {
        d0,
        d1,
        mass: [
            csr_from_triplets(nbv, nbv, &t0),
            csr_from_triplets(nbe, nbe, &t1),
            csr_from_triplets(nbf, nbf, &t2),
        ],
        outward_sign: outward,
    }
}

impl DecOperators {
    pub fn assemble(
        mesh: Arc<SimplicialComplex3>,
        geometry: Arc<ImpedanceGeometry>,
    ) -> Result<Self, DecError> {
        let d = [
            assemble_d(&mesh, 0),
            assemble_d(&mesh, 1),
            assemble_d(&mesh, 2),
        ];
        let dt = [d[0].transpose(), d[1].transpose(), d[2].transpose()];
        let mass = assemble_masses(&mesh, &geometry)?;
        let factor_full = [
            SpdFactor::new(&mass[0])?,
            SpdFactor::new(&mass[1])?,
            SpdFactor::new(&mass[2])?,
            SpdFactor::new(&mass[3])?,
        ];
        let boundary = assemble_boundary(&mesh, &geometry);
        Ok(Self {
            mesh,
            geometry,
            d,
            dt,
            mass,
            factor_full,
            boundary,
        })
    }

    /// Cholesky factor of the full degree-k mass matrix.
    pub fn factor_full(&self, k: usize) -> &SpdFactor {
        &self.factor_full[k]
    }

    /// Tangential trace: restriction of k-form coefficients to the boundary
    /// k-simplices, ordered by the boundary-local index.
    pub fn trace_t(&self, k: usize, coeffs: &[f64]) -> Vec<f64> {
        let m = &self.mesh;
        match k {
            0 => m.boundary_vertices.iter().map(|&v| coeffs[v]).collect(),
            1 => m.boundary_edges.iter().map(|&e| coeffs[e]).collect(),
            2 => m.boundary_faces.iter().map(|&f| coeffs[f]).collect(),
            _ => Vec::new(),
        }
    }

    /// Zero extension: boundary k-form coefficients into the full DOF vector.
    pub fn extend_by_zero(&self, k: usize, bcoeffs: &[f64]) -> Vec<f64> {
        let m = &self.mesh;
        let mut full = vec![0.0; m.num_simplices(k)];
        let ids: &[usize] = match k {
            0 => &m.boundary_vertices,
            1 => &m.boundary_edges,
            2 => &m.boundary_faces,
            _ => &[],
        };
        for (local, &global) in ids.iter().enumerate() {
            full[global] = bcoeffs[local];
        }
        full
    }

    /// L2 inner product of two k-forms.
    pub fn inner(&self, k: usize, a: &[f64], b: &[f64]) -> f64 {
        sparse::dot(&matvec(&self.mass[k], a), b)
    }

    pub fn norm(&self, k: usize, a: &[f64]) -> f64 {
        self.inner(k, a, a).max(0.0).sqrt()
    }
}

/// State over the free (unconstrained) degrees of freedom, one vector per
/// form degree.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVec(pub [Vec<f64>; 4]);

impl BlockVec {
    pub fn zeros(dims: &[usize; 4]) -> Self {
        Self([
            vec![0.0; dims[0]],
            vec![0.0; dims[1]],
            vec![0.0; dims[2]],
            vec![0.0; dims[3]],
        ])
    }

    pub fn axpy(&mut self, a: f64, x: &BlockVec) {
        for k in 0..4 {
            sparse::axpy(a, &x.0[k], &mut self.0[k]);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for k in 0..4 {
            for v in self.0[k].iter_mut() {
                *v *= a;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..4 {
            out.extend_from_slice(&self.0[k]);
        }
        out
    }

    pub fn from_flat(dims: &[usize; 4], flat: &[f64]) -> Self {
        let mut out = Self::zeros(dims);
        let mut at = 0;
        for k in 0..4 {
            out.0[k].copy_from_slice(&flat[at..at + dims[k]]);
            at += dims[k];
        }
        out
    }
}

/// The discrete complete Maxwell operator restricted by a boundary condition,
/// with factorized mass blocks for codifferential and midpoint solves.
pub struct MaxwellSystem {
    pub dec: Arc<DecOperators>,
    pub bc: BcKind,
    /// Free DOF ids per degree (ascending).
    pub free: [Vec<usize>; 4],
    /// Constrained (boundary) DOF ids per degree.
    pub bnd: [Vec<usize>; 4],
    pub mass_ff: [CsrMatrix<f64>; 4],
    pub mass_fp: [CsrMatrix<f64>; 4],
    factor_ff: [SpdFactor; 4],
    /// Interior-Dirichlet factors for weak normal traces (electric-style
    /// interior sets, independent of `bc`).
    interior: [Vec<usize>; 4],
    factor_interior: [SpdFactor; 4],
    // S = B*M blocks, named s{row}{col}; unsigned products, signs applied on use
    s01_ff: CsrMatrix<f64>,
    s10_ff: CsrMatrix<f64>,
    s12_ff: CsrMatrix<f64>,
    s21_ff: CsrMatrix<f64>,
    s23_ff: CsrMatrix<f64>,
    s32_ff: CsrMatrix<f64>,
    s01_fp: CsrMatrix<f64>,
    s10_fp: CsrMatrix<f64>,
    s12_fp: CsrMatrix<f64>,
    s21_fp: CsrMatrix<f64>,
    s32_fp: CsrMatrix<f64>,
    /// Full (unrestricted) S blocks, for boundary-flux residuals.
    pub s01: CsrMatrix<f64>,
    pub s10: CsrMatrix<f64>,
    pub s12: CsrMatrix<f64>,
    pub s21: CsrMatrix<f64>,
    pub s23: CsrMatrix<f64>,
    pub s32: CsrMatrix<f64>,
}

fn complement(n: usize, subset: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in subset {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

impl MaxwellSystem {
    pub fn new(dec: Arc<DecOperators>, bc: BcKind) -> Result<Self, DecError> {
        let mesh = &dec.mesh;
        let interior = [
            complement(mesh.num_vertices(), &mesh.boundary_vertices),
            complement(mesh.num_edges(), &mesh.boundary_edges),
            complement(mesh.num_faces(), &mesh.boundary_faces),
            (0..mesh.num_tets()).collect::<Vec<_>>(),
        ];
        let (free, bnd) = match bc {
            BcKind::Electric => (
                interior.clone(),
                [
                    mesh.boundary_vertices.clone(),
                    mesh.boundary_edges.clone(),
                    mesh.boundary_faces.clone(),
                    Vec::new(),
                ],
            ),
            BcKind::Magnetic => (
                [
                    (0..mesh.num_vertices()).collect::<Vec<_>>(),
                    (0..mesh.num_edges()).collect(),
                    (0..mesh.num_faces()).collect(),
                    (0..mesh.num_tets()).collect(),
                ],
                [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            ),
        };

        let full_s = |a: &CsrMatrix<f64>, b: &CsrMatrix<f64>| a * b;
        let s01 = full_s(&dec.dt[0], &dec.mass[1]);
        let s10 = full_s(&dec.mass[1], &dec.d[0]);
        let s12 = full_s(&dec.dt[1], &dec.mass[2]);
        let s21 = full_s(&dec.mass[2], &dec.d[1]);
        let s23 = full_s(&dec.dt[2], &dec.mass[3]);
        let s32 = full_s(&dec.mass[3], &dec.d[2]);

        let mass_ff = [
            restrict(&dec.mass[0], &free[0], &free[0]),
            restrict(&dec.mass[1], &free[1], &free[1]),
            restrict(&dec.mass[2], &free[2], &free[2]),
            restrict(&dec.mass[3], &free[3], &free[3]),
        ];
        let mass_fp = [
            restrict(&dec.mass[0], &free[0], &bnd[0]),
            restrict(&dec.mass[1], &free[1], &bnd[1]),
            restrict(&dec.mass[2], &free[2], &bnd[2]),
            restrict(&dec.mass[3], &free[3], &bnd[3]),
        ];
        let factor_ff = [
            SpdFactor::new(&mass_ff[0])?,
            SpdFactor::new(&mass_ff[1])?,
            SpdFactor::new(&mass_ff[2])?,
            SpdFactor::new(&mass_ff[3])?,
        ];
        let factor_interior = [
            SpdFactor::new(&restrict(&dec.mass[0], &interior[0], &interior[0]))?,
            SpdFactor::new(&restrict(&dec.mass[1], &interior[1], &interior[1]))?,
            SpdFactor::new(&restrict(&dec.mass[2], &interior[2], &interior[2]))?,
            SpdFactor::new(&restrict(&dec.mass[3], &interior[3], &interior[3]))?,
        ];

        Ok(Self {
            free: free.clone(),
            bnd: bnd.clone(),
            s01_ff: restrict(&s01, &free[0], &free[1]),
            s10_ff: restrict(&s10, &free[1], &free[0]),
            s12_ff: restrict(&s12, &free[1], &free[2]),
            s21_ff: restrict(&s21, &free[2], &free[1]),
            s23_ff: restrict(&s23, &free[2], &free[3]),
            s32_ff: restrict(&s32, &free[3], &free[2]),
            s01_fp: restrict(&s01, &free[0], &bnd[1]),
            s10_fp: restrict(&s10, &free[1], &bnd[0]),
            s12_fp: restrict(&s12, &free[1], &bnd[2]),
            s21_fp: restrict(&s21, &free[2], &bnd[1]),
            s32_fp: restrict(&s32, &free[3], &bnd[2]),
            s01,
            s10,
            s12,
            s21,
            s23,
            s32,
            mass_ff,
            mass_fp,
            factor_ff,
            factor_interior,
            interior,
            dec,
            bc,
        })
    }

    pub fn spec(&self) -> BoundaryConditionSpec {
        BoundaryConditionSpec {
            kind: self.bc,
            constrained: self.bnd.clone(),
        }
    }

    pub fn free_dims(&self) -> [usize; 4] {
        [
            self.free[0].len(),
            self.free[1].len(),
            self.free[2].len(),
            self.free[3].len(),
        ]
    }

    /// Mass (energy) inner product on the free space.
    pub fn ip(&self, a: &BlockVec, b: &BlockVec) -> f64 {
        let mut acc = 0.0;
        for k in 0..4 {
            acc += sparse::dot(&matvec(&self.mass_ff[k], &a.0[k]), &b.0[k]);
        }
        acc
    }

    pub fn norm(&self, a: &BlockVec) -> f64 {
        self.ip(a, a).max(0.0).sqrt()
    }

    /// Mass-form action y = S x (no inverse masses).
    pub fn apply_s(&self, x: &BlockVec) -> BlockVec {
        let mut y = BlockVec::zeros(&self.free_dims());
        matvec_acc(&self.s01_ff, &x.0[1], -1.0, &mut y.0[0]);
        matvec_acc(&self.s10_ff, &x.0[0], 1.0, &mut y.0[1]);
        matvec_acc(&self.s12_ff, &x.0[2], -1.0, &mut y.0[1]);
        matvec_acc(&self.s21_ff, &x.0[1], 1.0, &mut y.0[2]);
        matvec_acc(&self.s23_ff, &x.0[3], -1.0, &mut y.0[2]);
        matvec_acc(&self.s32_ff, &x.0[2], 1.0, &mut y.0[3]);
        y
    }

    /// The complete operator action M x = B^{-1} S x on the free space.
    pub fn apply_complete(&self, x: &BlockVec) -> BlockVec {
        let s = self.apply_s(x);
        BlockVec([
            self.factor_ff[0].solve(&s.0[0]),
            self.factor_ff[1].solve(&s.0[1]),
            self.factor_ff[2].solve(&s.0[2]),
            self.factor_ff[3].solve(&s.0[3]),
        ])
    }

    /// Weighted codifferential action on free k-form coefficients.
    pub fn codifferential(&self, k: usize, u: &[f64]) -> Vec<f64> {
        if k == 0 {
            return Vec::new();
        }
        let a = restrict(
            match k {
                1 => &self.s01,
                2 => &self.s12,
                _ => &self.s23,
            },
            &self.free[k - 1],
            &self.free[k],
        );
        self.factor_ff[k - 1].solve(&matvec(&a, u))
    }

    /// Exterior derivative restricted to the free spaces.
    pub fn derivative(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let a = restrict(&self.dec.d[k], &self.free[k + 1], &self.free[k]);
        matvec(&a, u)
    }

    /// Hodge Laplacian action (d delta + delta d) on free k-forms.
    pub fn laplacian(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        if k < 3 {
            let du = self.derivative(k, u);
            let delta_du = self.codifferential(k + 1, &du);
            sparse::axpy(1.0, &delta_du, &mut out);
        }
        if k > 0 {
            let delta_u = self.codifferential(k, u);
            let a = restrict(&self.dec.d[k - 1], &self.free[k], &self.free[k - 1]);
            sparse::axpy(1.0, &matvec(&a, &delta_u), &mut out);
        }
        out
    }

    /// Solves the implicit-midpoint system (B + c S) u = rhs (mass form) via
    /// conjugate gradients on the B-self-adjoint operator I - c^2 M^2.
    pub fn solve_shifted(&self, c: f64, rhs: &BlockVec, tol: f64) -> Result<BlockVec, SolveError> {
        let b = BlockVec([
            self.factor_ff[0].solve(&rhs.0[0]),
            self.factor_ff[1].solve(&rhs.0[1]),
            self.factor_ff[2].solve(&rhs.0[2]),
            self.factor_ff[3].solve(&rhs.0[3]),
        ]);
        let dims = self.free_dims();
        let apply_n = |flat: &[f64]| {
            let x = BlockVec::from_flat(&dims, flat);
            let mx = self.apply_complete(&x);
            let mmx = self.apply_complete(&mx);
            let mut y = x;
            y.axpy(-c * c, &mmx);
            y.flat()
        };
        let ip = |u: &[f64], v: &[f64]| {
            self.ip(
                &BlockVec::from_flat(&dims, u),
                &BlockVec::from_flat(&dims, v),
            )
        };
        let y = sparse::cg_operator(apply_n, ip, &b.flat(), tol, 500)?;
        let y = BlockVec::from_flat(&dims, &y);
        let my = self.apply_complete(&y);
        let mut u = y;
        u.axpy(-c, &my);
        Ok(u)
    }

    /// Scatters free coefficients and prescribed boundary values into full
    /// DOF vectors, degree by degree.
    pub fn to_full(&self, x: &BlockVec, p: &[Vec<f64>; 3]) -> [Vec<f64>; 4] {
        let mesh = &self.dec.mesh;
        let mut full = [
            vec![0.0; mesh.num_vertices()],
            vec![0.0; mesh.num_edges()],
            vec![0.0; mesh.num_faces()],
            vec![0.0; mesh.num_tets()],
        ];
        for k in 0..4 {
            for (local, &global) in self.free[k].iter().enumerate() {
                full[k][global] = x.0[k][local];
            }
            if k < 3 {
                for (local, &global) in self.bnd[k].iter().enumerate() {
                    full[k][global] = p[k][local];
                }
            }
        }
        full
    }

    /// Restriction of full DOF vectors to the free space.
    pub fn to_free(&self, full: &[Vec<f64>; 4]) -> BlockVec {
        let mut x = BlockVec::zeros(&self.free_dims());
        for k in 0..4 {
            for (local, &global) in self.free[k].iter().enumerate() {
                x.0[k][local] = full[k][global];
            }
        }
        x
    }

    pub(crate) fn factor(&self, k: usize) -> &SpdFactor {
        &self.factor_ff[k]
    }

    pub(crate) fn s_fp_apply(&self, p: &[Vec<f64>; 3]) -> BlockVec {
        let mut y = BlockVec::zeros(&self.free_dims());
        matvec_acc(&self.s01_fp, &p[1], -1.0, &mut y.0[0]);
        matvec_acc(&self.s10_fp, &p[0], 1.0, &mut y.0[1]);
        matvec_acc(&self.s12_fp, &p[2], -1.0, &mut y.0[1]);
        matvec_acc(&self.s21_fp, &p[1], 1.0, &mut y.0[2]);
        matvec_acc(&self.s32_fp, &p[2], 1.0, &mut y.0[3]);
        y
    }

    pub(crate) fn b_fp_apply(&self, p: &[Vec<f64>; 3]) -> BlockVec {
        let mut y = BlockVec::zeros(&self.free_dims());
        for k in 0..3 {
            matvec_acc(&self.mass_fp[k], &p[k], 1.0, &mut y.0[k]);
        }
        y
    }

    /// Weak normal trace of a (k+1)-form given on all DOFs: the functional
    /// phi -> (d E phi, eta) - (E phi, delta_int eta) represented as dual
    /// coefficients on boundary k-simplices.
    pub fn weak_normal_trace(&self, k1: usize, eta_full: &[f64]) -> Vec<f64> {
        assert!((1..=3).contains(&k1));
        let k = k1 - 1;
        let dec = &self.dec;
        let q = matvec(&dec.dt[k], &matvec(&dec.mass[k1], eta_full));
        // interior Dirichlet codifferential
        let q_int: Vec<f64> = self.interior[k].iter().map(|&i| q[i]).collect();
        let z_int = self.factor_interior[k].solve(&q_int);
        let mut z = vec![0.0; dec.mesh.num_simplices(k)];
        for (local, &global) in self.interior[k].iter().enumerate() {
            z[global] = z_int[local];
        }
        let mz = matvec(&dec.mass[k], &z);
        let bnd_ids: &[usize] = match k {
            0 => &dec.mesh.boundary_vertices,
            1 => &dec.mesh.boundary_edges,
            _ => &dec.mesh.boundary_faces,
        };
        bnd_ids.iter().map(|&i| q[i] - mz[i]).collect()
    }

    /// Stokes pairing <t omega, n eta> for a boundary k-form phi against a
    /// (k+1)-form eta. Independent of the lifting of phi.
    pub fn trace_n_pairing(
        &self,
        k: usize,
        phi_boundary: &[f64],
        eta_full: &[f64],
    ) -> Result<f64, DecError> {
        if k > 2 {
            return Err(DecError::IncompatibleDegrees(k, k + 1));
        }
        let nu = self.weak_normal_trace(k + 1, eta_full);
        Ok(sparse::dot(phi_boundary, &nu))
    }
}

/// Field energy of the degree-1 and degree-2 components split per tet.
pub fn per_tet_field_energy(dec: &DecOperators, omega: &[Vec<f64>; 4]) -> Vec<f64> {
    let mesh = &dec.mesh;
    let mut out = vec![0.0; mesh.num_tets()];
    for ti in 0..mesh.num_tets() {
        let el = ElementGeometry::new(mesh, &dec.geometry, ti);
        let m1 = el.mass1();
        let m2 = el.mass2();
        let te = mesh.tet_edges[ti];
        let tf = mesh.tet_faces[ti];
        let mut acc = 0.0;
        for p in 0..6 {
            for q in 0..6 {
                acc += omega[1][te[p]] * m1[p][q] * omega[1][te[q]];
            }
        }
        for p in 0..4 {
            for q in 0..4 {
                acc += omega[2][tf[p]] * m2[(p, q)] * omega[2][tf[q]];
            }
        }
        out[ti] = acc;
    }
    out
}

#[cfg(test)]
mod tests;
