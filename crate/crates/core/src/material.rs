//! Material tensors (ε, μ), the scalar-impedance constraint and the
//! associated travel-time geometry.

use crate::mesh::SimplicialComplex3;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("tensor on tet {0} is singular or not positive definite")]
    SingularTensor(usize),
    #[error("material is not of scalar impedance type on tet {0}: relative deviation {1:.3e}")]
    NotScalarImpedance(usize, f64),
    #[error("field length {got} does not match tet count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("material file: {0}")]
    Format(String),
}

/// Per-tet permittivity and permeability as symmetric positive (1,1)-tensors
/// in chart coordinates with background metric g0 = I.
#[derive(Debug, Clone)]
pub struct MaterialField {
    pub eps: Vec<Matrix3<f64>>,
    pub mu: Vec<Matrix3<f64>>,
}

/// Travel-time metric (contravariant components) and scalar impedance per tet.
#[derive(Debug, Clone)]
pub struct ImpedanceGeometry {
    pub g_contra: Vec<Matrix3<f64>>,
    pub alpha: Vec<f64>,
    /// Cached inverses and volume factors.
    pub g_cov: Vec<Matrix3<f64>>,
    pub sqrt_det_cov: Vec<f64>,
}

fn check_spd(m: &Matrix3<f64>) -> bool {
    let sym = (m - m.transpose()).norm() <= 1e-10 * (1.0 + m.norm());
    let m1 = m[(0, 0)] > 0.0;
    let m2 = m.fixed_view::<2, 2>(0, 0).determinant() > 0.0;
    let m3 = m.determinant() > 0.0;
    sym && m1 && m2 && m3
}

/// Contravariant metric associated with a positive (1,1)-tensor:
/// g^{ij} = (1/det ε) g0^{ik} ε^j_k, with g0 the identity chart metric.
pub fn metric_from_permittivity(
    eps: &Matrix3<f64>,
    g0_contra: &Matrix3<f64>,
) -> Result<Matrix3<f64>, MaterialError> {
    let det = eps.determinant();
    if !(det > 0.0) {
        return Err(MaterialError::SingularTensor(0));
    }
    let g = g0_contra * eps.transpose() / det;
    Ok(g)
}

/// Exponent of the Hodge rescaling on k-forms under g -> r^2 g:
/// the star picks up the factor r^(2k-3).
pub fn hodge_rescale_exponent(k: i32) -> i32 {
    2 * k - 3
}

impl ImpedanceGeometry {
    pub fn new(g_contra: Vec<Matrix3<f64>>, alpha: Vec<f64>) -> Result<Self, MaterialError> {
        let mut g_cov = Vec::with_capacity(g_contra.len());
        let mut sqrt_det_cov = Vec::with_capacity(g_contra.len());
        for (ti, g) in g_contra.iter().enumerate() {
            if !check_spd(g) || !(alpha[ti] > 0.0) {
                return Err(MaterialError::SingularTensor(ti));
            }
            let inv = g.try_inverse().ok_or(MaterialError::SingularTensor(ti))?;
            g_cov.push(inv);
            sqrt_det_cov.push(inv.determinant().sqrt());
        }
        Ok(Self {
            g_contra,
            alpha,
            g_cov,
            sqrt_det_cov,
        })
    }

    pub fn num_tets(&self) -> usize {
        self.alpha.len()
    }

    /// Geometry with the reciprocal impedance, same metric.
    pub fn dual(&self) -> Self {
        Self {
            g_contra: self.g_contra.clone(),
            alpha: self.alpha.iter().map(|a| 1.0 / a).collect(),
            g_cov: self.g_cov.clone(),
            sqrt_det_cov: self.sqrt_det_cov.clone(),
        }
    }

    /// Geometry with unit impedance, same metric.
    pub fn with_unit_alpha(&self) -> Self {
        Self {
            g_contra: self.g_contra.clone(),
            alpha: vec![1.0; self.alpha.len()],
            g_cov: self.g_cov.clone(),
            sqrt_det_cov: self.sqrt_det_cov.clone(),
        }
    }

    /// Recovers (ε, μ) from (g, α). Inverse of `travel_time_geometry`.
    pub fn to_material(&self) -> MaterialField {
        let mut eps = Vec::with_capacity(self.num_tets());
        let mut mu = Vec::with_capacity(self.num_tets());
        for ti in 0..self.num_tets() {
            let g = &self.g_contra[ti];
            let a = self.alpha[ti];
            // m/det(m) = g with m = α ε implies m = g / sqrt(det g)
            let m = g / g.determinant().sqrt();
            eps.push(m / a);
            mu.push(m * a);
        }
        MaterialField { eps, mu }
    }
}

impl MaterialField {
    pub fn constant(k: &SimplicialComplex3, eps: Matrix3<f64>, mu: Matrix3<f64>) -> Self {
        Self {
            eps: vec![eps; k.num_tets()],
            mu: vec![mu; k.num_tets()],
        }
    }

    /// Samples analytic fields at tet centroids.
    pub fn from_fn<E, U>(k: &SimplicialComplex3, eps: E, mu: U) -> Self
    where
        E: Fn(&Vector3<f64>) -> Matrix3<f64>,
        U: Fn(&Vector3<f64>) -> Matrix3<f64>,
    {
        let mut e = Vec::with_capacity(k.num_tets());
        let mut m = Vec::with_capacity(k.num_tets());
        for ti in 0..k.num_tets() {
            let c = k.tet_centroid(ti);
            e.push(eps(&c));
            m.push(mu(&c));
        }
        Self { eps: e, mu: m }
    }

    /// Isotropic material with unit wave speed and radially varying impedance
    /// α(x) = 1 + s |x - c|^2.
    pub fn radial_alpha(k: &SimplicialComplex3, center: Vector3<f64>, s: f64) -> Self {
        Self::from_fn(
            k,
            |x| Matrix3::identity() / (1.0 + s * (x - center).norm_squared()),
            |x| Matrix3::identity() * (1.0 + s * (x - center).norm_squared()),
        )
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        for (ti, (e, m)) in self.eps.iter().zip(&self.mu).enumerate() {
            if !check_spd(e) || !check_spd(m) {
                return Err(MaterialError::SingularTensor(ti));
            }
        }
        Ok(())
    }

    /// Detects the scalar impedance α with μ = α²ε and builds the travel-time
    /// geometry g = α⁻² g_ε = α² g_μ. `tol` is the relative deviation allowed
    /// in the ratio μ ε⁻¹ from a scalar multiple of the identity.
    pub fn travel_time_geometry(&self, tol: f64) -> Result<ImpedanceGeometry, MaterialError> {
        self.validate()?;
        let g0 = Matrix3::identity();
        let mut g_contra = Vec::with_capacity(self.eps.len());
        let mut alpha = Vec::with_capacity(self.eps.len());
        for (ti, (e, m)) in self.eps.iter().zip(&self.mu).enumerate() {
            let einv = e.try_inverse().ok_or(MaterialError::SingularTensor(ti))?;
            let ratio = m * einv;
            let a2 = ratio.trace() / 3.0;
            let dev = (ratio - Matrix3::identity() * a2).norm() / a2.max(f64::MIN_POSITIVE);
            if !(a2 > 0.0) || dev > tol {
                return Err(MaterialError::NotScalarImpedance(ti, dev));
            }
            let a = a2.sqrt();
            let ge = metric_from_permittivity(e, &g0)?;
            let gm = metric_from_permittivity(m, &g0)?;
            let g_from_e = ge / a2;
            let g_from_m = gm * a2;
            let agree = (g_from_e - g_from_m).norm() / g_from_e.norm();
            if agree > tol {
                return Err(MaterialError::NotScalarImpedance(ti, agree));
            }
            g_contra.push((g_from_e + g_from_m) * 0.5);
            alpha.push(a);
        }
        ImpedanceGeometry::new(g_contra, alpha)
    }
}

/// Pointwise Hodge star of a 1-form under a contravariant metric, returning
/// the 2-form components ((12), (13), (23)).
pub fn star_one_form(g_contra: &Matrix3<f64>, u: &Vector3<f64>) -> Vector3<f64> {
    let sqrt_det_cov = 1.0 / g_contra.determinant().sqrt();
    let raised = g_contra * u;
    // (*u)_{pq} = sqrt(det g_cov) e_{rpq} u^r
    Vector3::new(
        sqrt_det_cov * raised[2],  // (1,2) component: e_{312}=1
        -sqrt_det_cov * raised[1], // (1,3) component: e_{213}=-1
        sqrt_det_cov * raised[0],  // (2,3) component: e_{123}=1
    )
}

/// Serialized material file: either (eps, mu) or (g, alpha), per tet,
/// row-major 3x3 blocks.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<[f64; 9]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<[f64; 9]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<[f64; 9]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

fn mat_from_row_major(a: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8])
}

fn mat_to_row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

impl MaterialFile {
    pub fn from_material(m: &MaterialField) -> Self {
        Self {
            eps: Some(m.eps.iter().map(mat_to_row_major).collect()),
            mu: Some(m.mu.iter().map(mat_to_row_major).collect()),
            g: None,
            alpha: None,
        }
    }

    pub fn into_material(self, num_tets: usize) -> Result<MaterialField, MaterialError> {
        match (self.eps, self.mu, self.g, self.alpha) {
            (Some(e), Some(m), None, None) => {
                if e.len() != num_tets || m.len() != num_tets {
                    return Err(MaterialError::LengthMismatch {
                        expected: num_tets,
                        got: e.len(),
                    });
                }
                Ok(MaterialField {
                    eps: e.iter().map(mat_from_row_major).collect(),
                    mu: m.iter().map(mat_from_row_major).collect(),
                })
            }
            (None, None, Some(g), Some(a)) => {
                if g.len() != num_tets || a.len() != num_tets {
                    return Err(MaterialError::LengthMismatch {
                        expected: num_tets,
                        got: g.len(),
                    });
                }
                let geo = ImpedanceGeometry::new(g.iter().map(mat_from_row_major).collect(), a)?;
                Ok(geo.to_material())
            }
            _ => Err(MaterialError::Format(
                "material file needs either (eps, mu) or (g, alpha)".into(),
            )),
        }
    }
}
