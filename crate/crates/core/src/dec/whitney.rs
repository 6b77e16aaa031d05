//! Whitney element matrices and pointwise evaluation of Whitney interpolants.

use crate::material::ImpedanceGeometry;
use crate::mesh::SimplicialComplex3;
use nalgebra::{Matrix3, Matrix4, Vector3};

/// Local edge vertex pairs of a sorted tet, positional order.
pub const TET_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Local face vertex triples by omitted position.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Per-tet geometric data for assembly and evaluation.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// Barycentric gradients (covectors in chart coordinates).
    pub grads: [Vector3<f64>; 4],
    /// Unsigned chart volume.
    pub vol: f64,
    /// Orientation of the sorted vertex order relative to the chart.
    pub sign: f64,
    /// Gram matrix of the barycentric gradients under the contravariant metric.
    pub gram: Matrix4<f64>,
    /// Riemannian volume element factor sqrt(det g_cov).
    pub sqrt_det_cov: f64,
    pub sqrt_det_contra: f64,
    pub inv_alpha: f64,
}

impl ElementGeometry {
    pub fn new(k: &SimplicialComplex3, geo: &ImpedanceGeometry, ti: usize) -> Self {
        let t = k.tets[ti];
        let p0 = k.vertices[t[0]];
        let j = Matrix3::from_columns(&[
            k.vertices[t[1]] - p0,
            k.vertices[t[2]] - p0,
            k.vertices[t[3]] - p0,
        ]);
        let jinv = j.try_inverse().expect("positive-volume tet");
        let mut grads = [Vector3::zeros(); 4];
        for i in 0..3 {
            grads[i + 1] = jinv.row(i).transpose();
        }
        grads[0] = -(grads[1] + grads[2] + grads[3]);
        let det = j.determinant();
        let vol = det.abs() / 6.0;
        let sign = det.signum() * k.tet_signs[ti] as f64; // sorted-order sign
        let g = &geo.g_contra[ti];
        let mut gram = Matrix4::zeros();
        for p in 0..4 {
            for q in p..4 {
                let v = (g * grads[q]).dot(&grads[p]);
                gram[(p, q)] = v;
                gram[(q, p)] = v;
            }
        }
        Self {
            grads,
            vol,
            sign,
            gram,
            sqrt_det_cov: geo.sqrt_det_cov[ti],
            sqrt_det_contra: 1.0 / geo.sqrt_det_cov[ti],
            inv_alpha: 1.0 / geo.alpha[ti],
        }
    }

    /// Integral of lambda_p lambda_q over the tet in the Riemannian measure.
    fn p1_pair(&self, p: usize, q: usize) -> f64 {
        let base = self.sqrt_det_cov * self.vol / 20.0;
        if p == q {
            2.0 * base
        } else {
            base
        }
    }

    /// 4x4 mass of P1 hats with weight 1/alpha.
    pub fn mass0(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for p in 0..4 {
            for q in p..4 {
                let v = self.inv_alpha * self.p1_pair(p, q);
                m[(p, q)] = v;
                m[(q, p)] = v;
            }
        }
        m
    }

    /// 6x6 mass of Whitney 1-forms, positional edge order.
    pub fn mass1(&self) -> [[f64; 6]; 6] {
        let mut m = [[0.0; 6]; 6];
        for (ei, &(a, b)) in TET_EDGES.iter().enumerate() {
            for (fi, &(c, d)) in TET_EDGES.iter().enumerate().skip(ei) {
                let v = self.inv_alpha
                    * (self.p1_pair(a, c) * self.gram[(b, d)]
                        - self.p1_pair(a, d) * self.gram[(b, c)]
                        - self.p1_pair(b, c) * self.gram[(a, d)]
                        + self.p1_pair(b, d) * self.gram[(a, c)]);
                m[ei][fi] = v;
                m[fi][ei] = v;
            }
        }
        m
    }

    /// Gram of the wedge dlambda_p ^ dlambda_q against dlambda_r ^ dlambda_s.
    fn wedge_gram(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.gram[(p, r)] * self.gram[(q, s)] - self.gram[(p, s)] * self.gram[(q, r)]
    }

    /// 4x4 mass of Whitney 2-forms, positional face order.
    pub fn mass2(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        // cyclic decomposition of the Whitney 2-form on face (a,b,c):
        // w = 2 (la d lb ^ d lc + lb d lc ^ d la + lc d la ^ d lb)
        let cyc = |f: [usize; 3]| {
            [
                (f[0], f[1], f[2]),
                (f[1], f[2], f[0]),
                (f[2], f[0], f[1]),
            ]
        };
        for fi in 0..4 {
            for fj in fi..4 {
                let mut acc = 0.0;
                for &(u, p, q) in &cyc(TET_FACES[fi]) {
                    for &(v, r, s) in &cyc(TET_FACES[fj]) {
                        acc += self.p1_pair(u, v) * self.wedge_gram(p, q, r, s);
                    }
                }
                let v = self.inv_alpha * 4.0 * acc;
                m[(fi, fj)] = v;
                m[(fj, fi)] = v;
            }
        }
        m
    }

    /// Scalar mass of the Whitney 3-form normalized to unit integral over the
    /// canonically oriented tet.
    pub fn mass3(&self) -> f64 {
        self.inv_alpha * self.sqrt_det_contra / self.vol
    }
}

/// Barycentric coordinates of a point in the given tet.
pub fn barycentric(
    k: &SimplicialComplex3,
    ti: usize,
    x: &Vector3<f64>,
) -> [f64; 4] {
    let t = k.tets[ti];
    let p0 = k.vertices[t[0]];
    let j = Matrix3::from_columns(&[
        k.vertices[t[1]] - p0,
        k.vertices[t[2]] - p0,
        k.vertices[t[3]] - p0,
    ]);
    let rel = j.try_inverse().expect("positive tet") * (x - p0);
    [1.0 - rel.x - rel.y - rel.z, rel.x, rel.y, rel.z]
}

/// Index of a tet containing the point, if any (within a small tolerance).
pub fn locate(k: &SimplicialComplex3, x: &Vector3<f64>) -> Option<usize> {
    let tol = -1e-10;
    (0..k.num_tets()).find(|&ti| barycentric(k, ti, x).iter().all(|&l| l >= tol))
}

/// Gauss-Legendre nodes/weights on [0,1], 4 points.
pub const GAUSS4: [(f64, f64); 4] = [
    (0.069431844202973713731097404888715, 0.17392742256872692868653197461100),
    (0.330009478207571867598667120448378, 0.32607257743127307131346802538900),
    (0.669990521792428132401332879551622, 0.32607257743127307131346802538900),
    (0.930568155797026286268902595111285, 0.17392742256872692868653197461100),
];

/// Degree-4 symmetric triangle rule (6 points), barycentric + weight.
pub const TRI6: [([f64; 3], f64); 6] = [
    ([0.108103018168070, 0.445948490915965, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.108103018168070, 0.445948490915965], 0.223381589678011),
    ([0.445948490915965, 0.445948490915965, 0.108103018168070], 0.223381589678011),
    ([0.816847572980459, 0.091576213509771, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.816847572980459, 0.091576213509771], 0.109951743655322),
    ([0.091576213509771, 0.091576213509771, 0.816847572980459], 0.109951743655322),
];

/// Degree-2 tet rule (4 points), barycentric + weight.
pub const TET4: [([f64; 4], f64); 4] = [
    ([0.585410196624969, 0.138196601125011, 0.138196601125011, 0.138196601125011], 0.25),
    ([0.138196601125011, 0.585410196624969, 0.138196601125011, 0.138196601125011], 0.25),
    ([0.138196601125011, 0.138196601125011, 0.585410196624969, 0.138196601125011], 0.25),
    ([0.138196601125011, 0.138196601125011, 0.138196601125011, 0.585410196624969], 0.25),
];

/// Projects an analytic k-form onto Whitney degrees of freedom by quadrature
/// over the canonically oriented simplices. The 1-form closure returns the
/// covector, the 2-form closure the antisymmetric matrix action A(x) with
/// value(u, v) = u^T A v, the 3-form closure the chart density.
pub struct FormSampler<'a> {
    pub mesh: &'a SimplicialComplex3,
}

impl<'a> FormSampler<'a> {
    pub fn project0<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> Vec<f64> {
        self.mesh.vertices.iter().map(|v| f(v)).collect()
    }

    pub fn project1<F: Fn(&Vector3<f64>) -> Vector3<f64>>(&self, f: F) -> Vec<f64> {
        self.mesh
            .edges
            .iter()
            .map(|e| {
                let a = self.mesh.vertices[e[0]];
                let b = self.mesh.vertices[e[1]];
                let d = b - a;
                GAUSS4
                    .iter()
                    .map(|&(t, w)| w * f(&(a + d * t)).dot(&d))
                    .sum()
            })
            .collect()
    }

    pub fn project2<F: Fn(&Vector3<f64>) -> Matrix3<f64>>(&self, f: F) -> Vec<f64> {
        self.mesh
            .faces
            .iter()
            .map(|fc| {
                let p = [
                    self.mesh.vertices[fc[0]],
                    self.mesh.vertices[fc[1]],
                    self.mesh.vertices[fc[2]],
                ];
                let e1 = p[1] - p[0];
                let e2 = p[2] - p[0];
                TRI6.iter()
                    .map(|&(bc, w)| {
                        let x = p[0] * bc[0] + p[1] * bc[1] + p[2] * bc[2];
                        0.5 * w * (f(&x) * e2).dot(&e1)
                    })
                    .sum()
            })
            .collect()
    }

    pub fn project3<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.mesh.num_tets())
            .map(|ti| {
                let t = self.mesh.tets[ti];
                let p: Vec<_> = t.iter().map(|&v| self.mesh.vertices[v]).collect();
                let sorted_vol = {
                    let j = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
                    j.determinant() / 6.0
                };
                TET4.iter()
                    .map(|&(bc, w)| {
                        let x = p[0] * bc[0] + p[1] * bc[1] + p[2] * bc[2] + p[3] * bc[3];
                        sorted_vol * w * f(&x)
                    })
                    .sum()
            })
            .collect()
    }

    /// Evaluates the Whitney 1-form interpolant at a point.
    pub fn eval1(&self, coeffs: &[f64], x: &Vector3<f64>) -> Option<Vector3<f64>> {
        let ti = locate(self.mesh, x)?;
        let k = self.mesh;
        let t = k.tets[ti];
        let p0 = k.vertices[t[0]];
        let j = Matrix3::from_columns(&[
            k.vertices[t[1]] - p0,
            k.vertices[t[2]] - p0,
            k.vertices[t[3]] - p0,
        ]);
        let jinv = j.try_inverse()?;
        let mut grads = [Vector3::zeros(); 4];
        for i in 0..3 {
            grads[i + 1] = jinv.row(i).transpose();
        }
        grads[0] = -(grads[1] + grads[2] + grads[3]);
        let lam = barycentric(k, ti, x);
        let mut val = Vector3::zeros();
        for (le, &(a, b)) in TET_EDGES.iter().enumerate() {
            let c = coeffs[k.tet_edges[ti][le]];
            val += (grads[b] * lam[a] - grads[a] * lam[b]) * c;
        }
        Some(val)
    }

    /// Evaluates the Whitney 2-form interpolant at a point, returned as the
    /// antisymmetric matrix A with action u^T A v.
    pub fn eval2(&self, coeffs: &[f64], x: &Vector3<f64>) -> Option<Matrix3<f64>> {
        let ti = locate(self.mesh, x)?;
        let k = self.mesh;
        let t = k.tets[ti];
        let p0 = k.vertices[t[0]];
        let j = Matrix3::from_columns(&[
            k.vertices[t[1]] - p0,
            k.vertices[t[2]] - p0,
            k.vertices[t[3]] - p0,
        ]);
        let jinv = j.try_inverse()?;
        let mut grads = [Vector3::zeros(); 4];
        for i in 0..3 {
            grads[i + 1] = jinv.row(i).transpose();
        }
        grads[0] = -(grads[1] + grads[2] + grads[3]);
        let lam = barycentric(k, ti, x);
        let wedge = |a: &Vector3<f64>, b: &Vector3<f64>| a * b.transpose() - b * a.transpose();
        let mut val = Matrix3::zeros();
        for (lf, tri) in TET_FACES.iter().enumerate() {
            let c = coeffs[k.tet_faces[ti][lf]];
            let [a, b, cc] = *tri;
            let w = wedge(&grads[b], &grads[cc]) * lam[a]
                + wedge(&grads[cc], &grads[a]) * lam[b]
                + wedge(&grads[a], &grads[b]) * lam[cc];
            val += w * (2.0 * c);
        }
        Some(val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::ImpedanceGeometry;
    use crate::mesh::{reference_tet, unit_cube};

    fn unit_geometry(k: &SimplicialComplex3) -> ImpedanceGeometry {
        ImpedanceGeometry::new(
            vec![Matrix3::identity(); k.num_tets()],
            vec![1.0; k.num_tets()],
        )
        .unwrap()
    }

    #[test]
    fn reference_tet_mass0() {
        let k = reference_tet();
        let geo = unit_geometry(&k);
        let el = ElementGeometry::new(&k, &geo, 0);
        let m = el.mass0();
        let vol = 1.0 / 6.0;
        // integral of 1 against 1 equals the volume
        let total: f64 = m.iter().sum();
        assert!((total - vol).abs() < 1e-14);
        // trace of the consistent P1 mass is vol * 8/20
        let tr = m.trace();
        assert!((tr - vol * 0.4).abs() < 1e-14);
    }

    #[test]
    fn constant_alpha_scales_mass_linearly() {
        let k = reference_tet();
        let geo1 = unit_geometry(&k);
        let geo2 = ImpedanceGeometry::new(vec![Matrix3::identity()], vec![2.0]).unwrap();
        let a = ElementGeometry::new(&k, &geo1, 0).mass1();
        let b = ElementGeometry::new(&k, &geo2, 0).mass1();
        for i in 0..6 {
            for j in 0..6 {
                assert!((b[i][j] - 0.5 * a[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass1_matches_quadrature_oracle() {
        // independent oracle: dense barycentric-lattice quadrature of the
        // Whitney 1-form products on the reference tet
        let k = reference_tet();
        let geo = unit_geometry(&k);
        let el = ElementGeometry::new(&k, &geo, 0);
        let m = el.mass1();

        let n = 24usize;
        let mut oracle = [[0.0f64; 6]; 6];
        let mut total_w = 0.0;
        for i in 0..n {
            for j in 0..(n - i) {
                for l in 0..(n - i - j) {
                    // cell centroid in barycentric coordinates
                    let lam = [
                        (i as f64 + 0.25 * 1.0) / n as f64,
                        (j as f64 + 0.25) / n as f64,
                        (l as f64 + 0.25) / n as f64,
                        0.0,
                    ];
                    let lam3 = 1.0 - lam[0] - lam[1] - lam[2];
                    let lam = [lam[0], lam[1], lam[2], lam3];
                    total_w += 1.0;
                    for (ei, &(a, b)) in TET_EDGES.iter().enumerate() {
                        for (fi, &(c, d)) in TET_EDGES.iter().enumerate() {
                            let wa = el.grads[b] * lam[a] - el.grads[a] * lam[b];
                            let wb = el.grads[d] * lam[c] - el.grads[c] * lam[d];
                            oracle[ei][fi] += wa.dot(&wb);
                        }
                    }
                }
            }
        }
        // this midpoint-style lattice is only O(1/n) accurate on the simplex,
        // so compare loosely; exactness is covered by the eval consistency test
        let cell = el.vol / total_w;
        for i in 0..6 {
            for j in 0..6 {
                let o = oracle[i][j] * cell;
                assert!(
                    (m[i][j] - o).abs() < 0.05 * m[i][i].max(1e-3),
                    "entry ({i},{j}): {} vs oracle {}",
                    m[i][j],
                    o
                );
            }
        }
    }

    #[test]
    fn projection_then_evaluation_is_exact_for_whitney_range() {
        // constant 1-forms lie in the Whitney space: project then evaluate
        let k = unit_cube(2);
        let s = FormSampler { mesh: &k };
        let u = Vector3::new(0.3, -1.2, 0.7);
        let coeffs = s.project1(|_| u);
        for x in [
            Vector3::new(0.3, 0.4, 0.5),
            Vector3::new(0.71, 0.12, 0.33),
        ] {
            let v = s.eval1(&coeffs, &x).unwrap();
            assert!((v - u).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_2form_constant_exact() {
        let k = unit_cube(2);
        let s = FormSampler { mesh: &k };
        // constant 2-form dx^dy
        let a = {
            let mut m = Matrix3::zeros();
            m[(0, 1)] = 1.0;
            m[(1, 0)] = -1.0;
            m
        };
        let coeffs = s.project2(|_| a);
        let x = Vector3::new(0.4, 0.6, 0.3);
        let v = s.eval2(&coeffs, &x).unwrap();
        assert!((v - a).norm() < 1e-12);
    }
}
