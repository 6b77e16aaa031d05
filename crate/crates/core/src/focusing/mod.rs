//! Focusing sequences: shrinking slice families around an interior point,
//! convergence tests for point-source limits, pointwise field sampling by
//! polarization pairing, and the isotropy test for the gauge section on
//! 2-forms.

use crate::control::{ControlError, Influence, Slice, SliceSpec, WaveCache};
use crate::dec::whitney::FormSampler;
use crate::dec::DecOperators;
use crate::mesh::BoundaryPatch;
use crate::sparse::matvec;
use nalgebra::{DVector, Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FocusingError {
    #[error("point is too close to the boundary: clearance {0:.3e}")]
    PointTooCloseToBoundary(f64),
    #[error("pairing sequence does not converge: tail differences {0:?}")]
    NotCauchy(Vec<f64>),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Nested slice specifications shrinking onto a target point.
#[derive(Debug, Clone)]
pub struct ShrinkingSliceFamily {
    pub target: Vector3<f64>,
    pub specs: Vec<SliceSpec>,
}

/// Builds nested two-sided shells around the travel-time spheres through y,
/// one slice per patch, halving the window at each depth.
pub fn build_shrinking_slices(
    influence: &Influence,
    patches: &[BoundaryPatch],
    y: Vector3<f64>,
    depth: usize,
    base_width: f64,
    times: (f64, f64, f64),
) -> Result<ShrinkingSliceFamily, FocusingError> {
    assert!(depth >= 1);
    let mesh = &influence.mesh;
    // travel time from each patch to y, interpolated on the containing tet
    let ti = crate::dec::whitney::locate(mesh, &y)
        .ok_or(FocusingError::PointTooCloseToBoundary(0.0))?;
    let lam = crate::dec::whitney::barycentric(mesh, ti, &y);
    let mut taus = Vec::new();
    for p in patches {
        let table = influence.table(p);
        let t = mesh.tets[ti];
        let d: f64 = (0..4).map(|i| lam[i] * table.dist[t[i]]).sum();
        taus.push(d);
    }
    let clearance = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    if clearance <= base_width {
        return Err(FocusingError::PointTooCloseToBoundary(clearance));
    }
    let mut specs = Vec::new();
    for p in 0..depth {
        let w = base_width / (1 << p) as f64;
        let slices: Vec<Slice> = patches
            .iter()
            .zip(&taus)
            .map(|(patch, &tau)| Slice {
                patch: patch.clone(),
                tau_minus: (tau - w).max(1e-9),
                tau_plus: tau + w,
            })
            .collect();
        specs.push(SliceSpec {
            slices,
            t0: times.0,
            t1: times.1,
            t2: times.2,
        });
    }
    // nestedness check through the domains of influence
    let mut prev: Option<Vec<bool>> = None;
    for spec in &specs {
        let region = spec.region(influence);
        if let Some(outer) = &prev {
            for (inner, out) in region.iter().zip(outer) {
                assert!(!inner || *out, "shrinking family is not nested");
            }
        }
        prev = Some(region);
    }
    Ok(ShrinkingSliceFamily { target: y, specs })
}

/// Discrete point-source datum A_y = (0, 0, d(lambda delta_y), 0): the
/// polarization 1-form times a mass-normalized vertex hat, pushed through d.
#[derive(Debug, Clone)]
pub struct PointSourceDatum {
    pub location: Vector3<f64>,
    pub polarization: Vector3<f64>,
    /// hat-spike 1-form coefficients
    pub omega1: Vec<f64>,
    /// exact image under d of omega1
    pub omega2: Vec<f64>,
}

impl PointSourceDatum {
    pub fn new(
        dec: &DecOperators,
        y: Vector3<f64>,
        lambda: Vector3<f64>,
    ) -> Result<Self, FocusingError> {
        let mesh = &dec.mesh;
        // nearest interior vertex
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (vi, v) in mesh.vertices.iter().enumerate() {
            if mesh.vertex_to_bvertex[vi] != usize::MAX {
                continue;
            }
            let d = (v - y).norm();
            if d < best_d {
                best_d = d;
                best = vi;
            }
        }
        if best == usize::MAX {
            return Err(FocusingError::PointTooCloseToBoundary(0.0));
        }
        // mass normalization: hat / integral of hat
        let ones = vec![1.0; mesh.num_vertices()];
        let weights = matvec(&dec.mass[0], &ones);
        let w = weights[best];
        let vy = mesh.vertices[best];
        let sampler = FormSampler { mesh };
        let omega1 = sampler.project1(|x| {
            // hat value by barycentric lookup
            let val = crate::dec::whitney::locate(mesh, x)
                .map(|ti| {
                    let lam = crate::dec::whitney::barycentric(mesh, ti, x);
                    let t = mesh.tets[ti];
                    (0..4)
                        .find(|&i| t[i] == best)
                        .map(|i| lam[i])
                        .unwrap_or(0.0)
                })
                .unwrap_or(0.0);
            lambda * (val / w)
        });
        let omega2 = matvec(&dec.d[1], &omega1);
        let _ = vy;
        Ok(Self {
            location: y,
            polarization: lambda,
            omega1,
            omega2,
        })
    }
}

/// Pairing of the point datum with a wave: <lambda, phi(y)>_g by direct
/// evaluation of the degree-1 Whitney interpolant at y.
pub fn pair_with_wave(
    dec: &DecOperators,
    datum: &PointSourceDatum,
    wave_omega1: &[f64],
) -> f64 {
    let mesh = &dec.mesh;
    let sampler = FormSampler { mesh };
    let phi = sampler
        .eval1(wave_omega1, &datum.location)
        .unwrap_or_else(Vector3::zeros);
    let ti = crate::dec::whitney::locate(mesh, &datum.location).unwrap_or(0);
    let g = &dec.geometry.g_contra[ti];
    (g * phi).dot(&datum.polarization)
}

/// Report of a focusing-sequence convergence test.
#[derive(Debug, Clone, Serialize)]
pub struct FocusingReport {
    /// per-stage pairings against each probe
    pub pairings: Vec<Vec<f64>>,
    /// sup over probes of |P_{p+1} - P_p| / scale
    pub tail: Vec<f64>,
    pub converged: bool,
    pub limit: Vec<f64>,
}

/// Cauchy test of the pairings (w_t^{d_t f_p}(T1), w_t^{h}(T1)) against
/// every probe, all read from the cached boundary tables: the s-derivative
/// of the recovered pair surface at (T1, T1).
pub fn focusing_limit_test(
    cache: &WaveCache,
    sequence: &[DVector<f64>],
    probes: &[usize],
    t1: f64,
    tol: f64,
) -> Result<FocusingReport, FocusingError> {
    assert!(!sequence.is_empty());
    let h = cache.dt;
    let pair_tt = |coeffs: &DVector<f64>, probe: usize| -> f64 {
        // d/ds [F1 + F2](s, T1) at s = T1 by a centered difference
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                plus += c
                    * (cache.pair_value(1, i, probe, t1 + h, t1)
                        + cache.pair_value(2, i, probe, t1 + h, t1));
                minus += c
                    * (cache.pair_value(1, i, probe, t1 - h, t1)
                        + cache.pair_value(2, i, probe, t1 - h, t1));
            }
        }
        (plus - minus) / (2.0 * h)
    };
    let mut pairings = Vec::new();
    for coeffs in sequence {
        let row: Vec<f64> = probes.iter().map(|&p| pair_tt(coeffs, p)).collect();
        pairings.push(row);
    }
    let scale = pairings
        .iter()
        .flatten()
        .fold(0.0f64, |a, &x| a.max(x.abs()))
        .max(1e-300);
    let mut tail = Vec::new();
    for w in pairings.windows(2) {
        let d = w[0]
            .iter()
            .zip(&w[1])
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        tail.push(d / scale);
    }
    let converged = tail.last().is_none_or(|&d| d <= tol);
    let limit = pairings.last().cloned().unwrap_or_default();
    if !converged {
        return Err(FocusingError::NotCauchy(tail));
    }
    Ok(FocusingReport {
        pairings,
        tail,
        converged,
        limit,
    })
}

/// 2-forms in the axial-vector representation (w_23, w_31, w_12).
pub fn two_form_to_vec(w: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(w[(1, 2)], w[(2, 0)], w[(0, 1)])
}

pub fn vec_to_two_form(v: &Vector3<f64>) -> Matrix3<f64> {
    let mut w = Matrix3::zeros();
    w[(1, 2)] = v.x;
    w[(2, 1)] = -v.x;
    w[(2, 0)] = v.y;
    w[(0, 2)] = -v.y;
    w[(0, 1)] = v.z;
    w[(1, 0)] = -v.z;
    w
}

/// Maximum tangential residual of K(Q lambda ^ d tau) over a ray bundle of
/// sample spheres around y: zero exactly when K is a scalar multiple of the
/// identity, since the pullback of d tau to its own level sphere vanishes.
/// `k_section` gives K(x) in the axial-vector representation of 2-forms.
/// Returns (max residual, estimated scalar c when isotropic).
pub fn isotropy_check<K>(
    y: Vector3<f64>,
    radii: &[f64],
    n_dirs: usize,
    k_section: K,
) -> (f64, f64)
where
    K: Fn(&Vector3<f64>) -> Matrix3<f64>,
{
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let lambdas = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.3, -0.5, 0.8).normalize(),
    ];
    let mut worst: f64 = 0.0;
    let mut c_est = 0.0;
    let mut c_count = 0.0;
    for &t in radii {
        for i in 0..n_dirs {
            // Fibonacci sphere directions
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n_dirs as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let x = y + dir * t;
            let k = k_section(&x);
            for lam in &lambdas {
                // Q lambda ^ d tau with the Euclidean-chart leading symbol:
                // the axial vector of lambda ^ dir is lambda x dir
                let w_vec = lam.cross(&dir);
                let kw = k * w_vec;
                let scale = kw.norm().max(1e-300);
                // tangential pullback coefficient of the 2-form on the
                // sphere: the component of its axial vector along the normal
                let resid = (kw.dot(&dir)).abs() / scale;
                worst = worst.max(resid);
                // scalar estimate from the tangential part
                let tang = w_vec - dir * w_vec.dot(&dir);
                if tang.norm() > 1e-12 {
                    c_est += kw.dot(&tang) / tang.norm_squared();
                    c_count += 1.0;
                }
            }
        }
    }
    (worst, if c_count > 0.0 { c_est / c_count } else { 0.0 })
}
