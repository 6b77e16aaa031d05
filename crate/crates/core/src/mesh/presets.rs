//! Built-in meshes used by tests and the bundled configurations.

use super::SimplicialComplex3;
use nalgebra::Vector3;

/// The reference tetrahedron (0, e1, e2, e3).
pub fn reference_tet() -> SimplicialComplex3 {
    let verts = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    SimplicialComplex3::build(verts, vec![[0, 1, 2, 3]]).expect("reference tet")
}

/// Unit cube [0,1]^3 split into 6n^3 tets by the Kuhn subdivision of an
/// n-by-n-by-n grid. Every subcube is cut along the same body diagonal, so
/// refinements nest and all tets are positively oriented.
pub fn unit_cube(n: usize) -> SimplicialComplex3 {
    assert!(n >= 1);
    let m = n + 1;
    let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let h = 1.0 / n as f64;
    let mut verts = vec![Vector3::zeros(); m * m * m];
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                verts[idx(i, j, k)] = Vector3::new(i as f64 * h, j as f64 * h, k as f64 * h);
            }
        }
    }

    // Kuhn triangulation: tets follow the 6 monotone paths from (0,0,0) to
    // (1,1,1) of a subcube.
    let paths = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for path in &paths {
                    let mut p = [i, j, k];
                    let mut quad = [idx(p[0], p[1], p[2]); 4];
                    for (step, &axis) in path.iter().enumerate() {
                        p[axis] += 1;
                        quad[step + 1] = idx(p[0], p[1], p[2]);
                    }
                    // orient positively
                    let t = quad;
                    let vol = {
                        let a = verts[t[1]] - verts[t[0]];
                        let b = verts[t[2]] - verts[t[0]];
                        let c = verts[t[3]] - verts[t[0]];
                        a.cross(&b).dot(&c)
                    };
                    if vol > 0.0 {
                        tets.push(t);
                    } else {
                        tets.push([t[0], t[2], t[1], t[3]]);
                    }
                }
            }
        }
    }
    SimplicialComplex3::build(verts, tets).expect("unit cube mesh")
}
