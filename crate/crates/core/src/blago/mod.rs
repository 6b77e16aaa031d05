//! Recovery of interior inner products of two solutions from their lateral
//! Cauchy data: the boundary source kernel f^j(s,t) and the characteristic
//! march of the 1+1-dimensional wave equation for F^j(s,t).

use crate::dynamics::RunRecord;
use crate::sparse;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlagoError {
    #[error("the two Cauchy records live on different grids")]
    GridMismatch,
    #[error("kernel not known on the required triangle: need {need} steps, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("degree {0} has no Maxwell source kernel")]
    BadDegree(usize),
}

/// Lateral Cauchy data of one Maxwell solution: tangential trace of the
/// degree-1 component and the weak normal trace of the degree-2 component.
#[derive(Debug, Clone)]
pub struct CauchyRecord {
    pub dt: f64,
    pub t1: Vec<Vec<f64>>,
    pub nu2: Vec<Vec<f64>>,
}

impl CauchyRecord {
    pub fn from_run(record: &RunRecord) -> Self {
        Self {
            dt: record.dt,
            t1: record.t1.clone(),
            nu2: record.nu2.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        self.t1.len()
    }

    fn check(&self, other: &CauchyRecord) -> Result<(), BlagoError> {
        if (self.dt - other.dt).abs() > 1e-14 * self.dt
            || self.t1.len() != other.t1.len()
            || self.t1.len() != self.nu2.len()
        {
            return Err(BlagoError::GridMismatch);
        }
        Ok(())
    }
}

/// Cauchy data of the pair of solutions entering the bilinear recovery.
#[derive(Debug, Clone)]
pub struct CauchyDataset {
    pub a: CauchyRecord,
    pub b: CauchyRecord,
}

impl CauchyDataset {
    pub fn new(a: CauchyRecord, b: CauchyRecord) -> Result<Self, BlagoError> {
        a.check(&b)?;
        Ok(Self { a, b })
    }
}

/// Dense (s,t) grid values, row-major in s.
#[derive(Debug, Clone)]
pub struct Grid2 {
    pub ns: usize,
    pub nt: usize,
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(ns: usize, nt: usize) -> Self {
        Self {
            ns,
            nt,
            data: vec![0.0; ns * nt],
        }
    }
    #[inline]
    pub fn get(&self, is: usize, it: usize) -> f64 {
        self.data[is * self.nt + it]
    }
    #[inline]
    pub fn set(&mut self, is: usize, it: usize, v: f64) {
        self.data[is * self.nt + it] = v;
    }
}

/// Recovered inner-product surface F^j(s,t) over [0,T]^2.
#[derive(Debug, Clone)]
pub struct GramTable {
    pub degree: u8,
    pub dt: f64,
    pub values: Grid2,
}

impl GramTable {
    /// Nearest-grid evaluation.
    pub fn at(&self, s: f64, t: f64) -> f64 {
        let is = ((s / self.dt).round() as usize).min(self.values.ns - 1);
        let it = ((t / self.dt).round() as usize).min(self.values.nt - 1);
        self.values.get(is, it)
    }
}

/// Second-order time derivative of a trace series, one-sided at the ends.
fn series_derivative(frames: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = frames.len();
    let dim = frames.first().map_or(0, |f| f.len());
    let mut out = vec![vec![0.0; dim]; n];
    if n < 3 {
        return out;
    }
    for i in 0..dim {
        out[0][i] = (-3.0 * frames[0][i] + 4.0 * frames[1][i] - frames[2][i]) / (2.0 * dt);
        out[n - 1][i] =
            (3.0 * frames[n - 1][i] - 4.0 * frames[n - 2][i] + frames[n - 3][i]) / (2.0 * dt);
    }
    for k in 1..n - 1 {
        for i in 0..dim {
            out[k][i] = (frames[k + 1][i] - frames[k - 1][i]) / (2.0 * dt);
        }
    }
    out
}

/// Boundary source kernel f^j(s,t) of the degree-j recovery, assembled from
/// the lateral Cauchy data alone. For Maxwell solutions the degree-0 and
/// degree-3 kernels vanish identically.
pub fn source_kernel(data: &CauchyDataset, degree: usize) -> Result<Grid2, BlagoError> {
    let n = data.a.steps();
    let mut f = Grid2::zeros(n, n);
    match degree {
        0 | 3 => Ok(f),
        1 => {
            // f^1 = <t w^1(s), n eta^2_t(t)> - <t eta^1(t), n w^2_s(s)>
            // in the tangential-first pairing convention
            let dnu_a = series_derivative(&data.a.nu2, data.a.dt);
            let dnu_b = series_derivative(&data.b.nu2, data.b.dt);
            for is in 0..n {
                for it in 0..n {
                    let v = sparse::dot(&data.a.t1[is], &dnu_b[it])
                        - sparse::dot(&data.b.t1[it], &dnu_a[is]);
                    f.set(is, it, v);
                }
            }
            Ok(f)
        }
        2 => {
            let dt1_a = series_derivative(&data.a.t1, data.a.dt);
            let dt1_b = series_derivative(&data.b.t1, data.b.dt);
            for is in 0..n {
                for it in 0..n {
                    let v = sparse::dot(&dt1_b[it], &data.a.nu2[is])
                        - sparse::dot(&dt1_a[is], &data.b.nu2[it]);
                    f.set(is, it, v);
                }
            }
            Ok(f)
        }
        _ => Err(BlagoError::BadDegree(degree)),
    }
}

/// Marches (d_ss - d_tt) F = f from the characteristic data
/// F(0,t) = 0, F_s(0,t) = slope(t) (zero in production), F(s,0) = 0,
/// filling the [0,T]^2 block, T = half the data span.
pub fn solve_characteristic(
    f: &Grid2,
    half_steps: usize,
    dt: f64,
    slope: Option<&[f64]>,
) -> Result<GramTable, BlagoError> {
    let n2 = f.nt; // grid points over [0, 2T]
    if half_steps + 1 > n2 || f.ns < half_steps + 1 {
        return Err(BlagoError::InsufficientData {
            need: half_steps + 1,
            have: n2.min(f.ns),
        });
    }
    // full working triangle: row is covers t indices [0, n2 - is)
    let mut prev = vec![0.0; n2];
    let mut cur = vec![0.0; n2];
    // first row by the Taylor start
    for it in 1..n2 - 1 {
        let g = slope.map_or(0.0, |s| s[it]);
        cur[it] = dt * g + 0.5 * dt * dt * f.get(0, it);
    }
    cur[0] = 0.0;
    let mut table = Grid2::zeros(half_steps + 1, half_steps + 1);
    for it in 0..=half_steps {
        table.set(0, it, 0.0);
        if 1 <= half_steps {
            table.set(1, it, cur[it]);
        }
    }
    for is in 1..half_steps {
        let top = n2 - is - 1;
        let mut next = vec![0.0; n2];
        for it in 1..top {
            let ftt = cur[it + 1] - 2.0 * cur[it] + cur[it - 1];
            next[it] = 2.0 * cur[it] - prev[it] + ftt + dt * dt * f.get(is, it);
        }
        next[0] = 0.0;
        prev = std::mem::take(&mut cur);
        cur = next;
        for it in 0..=half_steps.min(top.saturating_sub(1)) {
            table.set(is + 1, it, cur[it]);
        }
    }
    Ok(GramTable {
        degree: 0,
        dt,
        values: table,
    })
}

/// Recovers the degree-j inner-product table from the dataset.
pub fn recover(data: &CauchyDataset, degree: usize) -> Result<GramTable, BlagoError> {
    let f = source_kernel(data, degree)?;
    let n = data.a.steps();
    let half = (n - 1) / 2;
    let mut table = solve_characteristic(&f, half, data.a.dt, None)?;
    table.degree = degree as u8;
    Ok(table)
}

/// Single-point recovery (w^j(s), eta^j(t)).
pub fn recover_inner_product(
    data: &CauchyDataset,
    degree: usize,
    s: f64,
    t: f64,
) -> Result<f64, BlagoError> {
    Ok(recover(data, degree)?.at(s, t))
}

/// The F-norm of a boundary source, computed from the Cauchy data of its
/// velocity field: |f|_F = |W^T f| = sqrt(F^1 + F^2 at (T,T)).
pub fn f_norm_from_records(velocity_data: &CauchyDataset, t_norm: f64) -> Result<f64, BlagoError> {
    let f1 = recover(velocity_data, 1)?;
    let f2 = recover(velocity_data, 2)?;
    Ok((f1.at(t_norm, t_norm) + f2.at(t_norm, t_norm)).max(0.0).sqrt())
}
