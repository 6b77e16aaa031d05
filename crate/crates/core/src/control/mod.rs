//! Boundary control: source dictionaries, Gram matrices of boundary-driven
//! waves computed from lateral data alone, domains of influence, projection
//! onto controllable subspaces, and the slicing-set membership and rank
//! tests.

use crate::blago::{recover, BlagoError, CauchyDataset, CauchyRecord, GramTable};
use crate::dec::{per_tet_field_energy, DecOperators, MaxwellSystem};
use crate::dynamics::{
    evolve, AnalyticSource, CompleteState, DynamicsError, EvolutionConfig, SourceSpec, TimeBump,
};
use crate::mesh::{BoundaryPatch, GeodesicGraph, GeodesicTable, MeshError, SimplicialComplex3};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("empty boundary patch or dictionary")]
    EmptyPatch,
    #[error("slice timing violates the ordering constraints: {0}")]
    TimingViolation(String),
    #[error("Gram matrix is singular and no regularization was requested")]
    SingularGram,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Blago(#[from] BlagoError),
}

/// Geodesic-distance infrastructure over one geometry.
pub struct Influence {
    pub mesh: Arc<SimplicialComplex3>,
    pub graph: GeodesicGraph,
}

impl Influence {
    pub fn new(mesh: Arc<SimplicialComplex3>, dec: &DecOperators) -> Result<Self, MeshError> {
        let graph = GeodesicGraph::new(&mesh, &dec.geometry.g_cov, 2)?;
        Ok(Self { mesh, graph })
    }

    pub fn table(&self, patch: &BoundaryPatch) -> GeodesicTable {
        self.graph.distance_from_patch(patch)
    }

    /// Tets whose centroid lies within travel time tau of the patch.
    pub fn domain(&self, table: &GeodesicTable, tau: f64) -> Vec<bool> {
        (0..self.mesh.num_tets())
            .map(|ti| table.tet_value(&self.mesh, ti) < tau)
            .collect()
    }

    /// max_x tau(x, boundary).
    pub fn radius(&self) -> f64 {
        self.table(&self.mesh.full_boundary_patch()).max()
    }

    /// Approximate diameter by a double sweep.
    pub fn diameter(&self) -> f64 {
        let t0 = self.graph.distance_from_vertices(&[0], "sweep0");
        let far = t0
            .dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.graph.distance_from_vertices(&[far], "sweep1").max()
    }

    /// Fraction of the field energy carried by tets outside the mask.
    pub fn energy_fraction_outside(
        &self,
        dec: &DecOperators,
        state: &CompleteState,
        inside: &[bool],
    ) -> f64 {
        let per_tet = per_tet_field_energy(dec, &state.omega);
        let total: f64 = per_tet.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let outside: f64 = per_tet
            .iter()
            .zip(inside)
            .filter(|(_, &m)| !m)
            .map(|(e, _)| e)
            .sum();
        outside / total
    }
}

/// One dictionary source: a boundary Whitney edge form modulated by a
/// polynomial time bump supported in the declared interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub patch_label: String,
    /// boundary-local edge index
    pub edge: usize,
    pub bump: TimeBump,
}

/// A family of boundary sources supported in a patch and a time interval.
#[derive(Debug, Clone, Default)]
pub struct SourceDictionary {
    pub entries: Vec<DictionaryEntry>,
}

impl SourceDictionary {
    /// Tensor-product generation: a deterministic spread of `n_edges` patch
    /// edges times `n_bumps` overlapping time windows inside (t_lo, t_hi).
    pub fn generate(
        mesh: &SimplicialComplex3,
        patch: &BoundaryPatch,
        t_lo: f64,
        t_hi: f64,
        n_edges: usize,
        n_bumps: usize,
        order: u32,
    ) -> Result<Self, ControlError> {
        // edges interior to the patch (both endpoints in the patch closure)
        let mut edges: Vec<usize> = patch
            .edges
            .iter()
            .map(|&eid| mesh.edge_to_bedge[eid])
            .filter(|&le| le != usize::MAX)
            .collect();
        edges.sort_unstable();
        if edges.is_empty() || n_edges == 0 || n_bumps == 0 {
            return Err(ControlError::EmptyPatch);
        }
        let stride = (edges.len() as f64 / n_edges as f64).max(1.0);
        let chosen: Vec<usize> = (0..n_edges.min(edges.len()))
            .map(|i| edges[(i as f64 * stride) as usize % edges.len()])
            .collect();
        let mut entries = Vec::new();
        let span = t_hi - t_lo;
        for b in 0..n_bumps {
            // overlapping windows, each half the interval wide
            let w = span / (0.5 * n_bumps as f64 + 0.5);
            let start = t_lo + 0.5 * w * b as f64;
            let stop = (start + w).min(t_hi);
            for &e in &chosen {
                entries.push(DictionaryEntry {
                    patch_label: patch.label.clone(),
                    edge: e,
                    bump: TimeBump::new(start, stop, order),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn merged(mut self, other: SourceDictionary) -> Self {
        self.entries.extend(other.entries);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of entries supported in the given patch and within ]0, t_max[.
    pub fn supported_in(&self, patch_label: &str, t_max: f64) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.patch_label == patch_label && e.bump.t1 <= t_max + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Simulated Cauchy data of the velocity fields of every dictionary entry,
/// plus the pairwise recovered inner-product tables. All quantities entering
/// the control tests are read from this cache.
pub struct WaveCache {
    pub dict: SourceDictionary,
    pub dt: f64,
    /// records span [0, horizon]; tables cover [0, horizon/2]^2
    pub horizon: f64,
    pub records: Vec<CauchyRecord>,
    /// snapshots of each run (stride chosen at build time)
    pub snapshots: Vec<Vec<CompleteState>>,
    /// upper-triangular pair tables, degree 1 and degree 2
    tables: Vec<[GramTable; 2]>,
    n: usize,
}

impl WaveCache {
    /// Runs the velocity field of every entry (source differentiated once)
    /// and recovers all pairwise tables from the boundary records.
    pub fn build(
        system: &Arc<MaxwellSystem>,
        dict: SourceDictionary,
        dt: f64,
        horizon: f64,
        snapshot_stride: usize,
        threads: usize,
    ) -> Result<Self, ControlError> {
        let mut cfg = EvolutionConfig::new(dt, horizon);
        cfg.snapshot_stride = snapshot_stride;
        let n = dict.entries.len();
        let run_one = |entry: &DictionaryEntry| -> Result<_, ControlError> {
            let source = SourceSpec::Analytic(vec![AnalyticSource {
                edge_coeffs: vec![(entry.edge, 1.0)],
                bump: entry.bump,
                derivative_order: 1,
            }]);
            let init = CompleteState::zeros(&system.dec);
            let out = evolve(system, &init, &source, &cfg)?;
            Ok((
                CauchyRecord::from_run(&out.record),
                out.record.snapshots,
            ))
        };
        let results: Vec<Result<_, ControlError>> = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool");
            pool.install(|| dict.entries.par_iter().map(run_one).collect())
        } else {
            dict.entries.iter().map(run_one).collect()
        };
        let mut records = Vec::with_capacity(n);
        let mut snapshots = Vec::with_capacity(n);
        for r in results {
            let (rec, snaps) = r?;
            records.push(rec);
            snapshots.push(snaps);
        }
        // pairwise tables (upper triangle, diagonal included)
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .collect();
        let compute = |&(i, j): &(usize, usize)| -> Result<[GramTable; 2], ControlError> {
            let data = CauchyDataset::new(records[i].clone(), records[j].clone())?;
            Ok([recover(&data, 1)?, recover(&data, 2)?])
        };
        let tables: Vec<Result<[GramTable; 2], ControlError>> = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool");
            pool.install(|| pairs.par_iter().map(compute).collect())
        } else {
            pairs.iter().map(compute).collect()
        };
        let tables = tables.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            dict,
            dt,
            horizon,
            records,
            snapshots,
            tables,
            n,
        })
    }

    fn pair_index(&self, i: usize, j: usize) -> (usize, bool) {
        let (a, b, swapped) = if i <= j { (i, j, false) } else { (j, i, true) };
        // offset of row a in the packed upper triangle
        let off = a * self.n - a * (a + 1) / 2 + (b - a) + a;
        (off, swapped)
    }

    /// Recovered (w_t^{f_i}(s), w_t^{f_j}(t)) of the given degree.
    pub fn pair_value(&self, degree: usize, i: usize, j: usize, s: f64, t: f64) -> f64 {
        let (idx, swapped) = self.pair_index(i, j);
        let table = &self.tables[idx][degree - 1];
        if swapped {
            table.at(t, s)
        } else {
            table.at(s, t)
        }
    }

    /// Gram matrix G_ij = sum_deg (w_t^{f_i}(t_eval), w_t^{f_j}(t_eval))
    /// over the listed entries, built from boundary data only.
    pub fn gram(&self, entries: &[usize], t_eval: f64) -> DMatrix<f64> {
        let m = entries.len();
        let mut g = DMatrix::zeros(m, m);
        for (a, &i) in entries.iter().enumerate() {
            for (b, &j) in entries.iter().enumerate().skip(a) {
                let v = self.pair_value(1, i, j, t_eval, t_eval)
                    + self.pair_value(2, i, j, t_eval, t_eval);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Degree-resolved Gram with independent evaluation times per side.
    pub fn gram_deg(
        &self,
        degree: usize,
        rows: &[usize],
        cols: &[usize],
        s_eval: f64,
        t_eval: f64,
    ) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                g[(a, b)] = self.pair_value(degree, i, j, s_eval, t_eval);
            }
        }
        g
    }

    /// Interior snapshot of run i nearest to the given time.
    pub fn snapshot(&self, i: usize, t: f64) -> Option<&CompleteState> {
        self.snapshots[i]
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }
}

/// Tikhonov-regularized least squares against a PSD Gram matrix:
/// minimizes |target - sum c_i w_i|^2 + lambda |c|^2 given the Gram of the
/// w_i, the pairings b_i = (target, w_i) and |target|^2.
/// Returns the coefficients and the (non-negative) residual norm.
pub fn project_onto_x(
    gram: &DMatrix<f64>,
    b: &DVector<f64>,
    target_norm2: f64,
    lambda: f64,
) -> Result<(DVector<f64>, f64), ControlError> {
    let m = gram.nrows();
    if m == 0 {
        return Ok((DVector::zeros(0), target_norm2.max(0.0).sqrt()));
    }
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x));
    if lambda == 0.0 && eig.eigenvalues.iter().any(|&x| x <= 1e-13 * lmax.max(1e-300)) {
        return Err(ControlError::SingularGram);
    }
    // pseudo-inverse with spectral floor plus Tikhonov shift
    let floor = 1e-13 * lmax.max(1e-300);
    let mut c = DVector::zeros(m);
    let bt = eig.eigenvectors.transpose() * b;
    for k in 0..m {
        let lam = eig.eigenvalues[k];
        if lam > floor {
            c[k] = bt[k] / (lam + lambda);
        }
    }
    let coeffs = &eig.eigenvectors * c;
    let res2 = target_norm2 - 2.0 * b.dot(&coeffs) + (gram * &coeffs).dot(&coeffs);
    Ok((coeffs, res2.max(0.0).sqrt()))
}

/// One slicing shell: a patch with a two-sided travel-time window.
#[derive(Debug, Clone)]
pub struct Slice {
    pub patch: BoundaryPatch,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

/// Slicing specification with the three control times.
#[derive(Debug, Clone)]
pub struct SliceSpec {
    pub slices: Vec<Slice>,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
}

impl SliceSpec {
    /// Checks 0 < tau- < tau+ <= diam and the chain
    /// T0 > 2 rad(M), T1 >= T0 + diam(M), T2 >= 2 T1.
    pub fn validate(&self, rad: f64, diam: f64) -> Result<(), ControlError> {
        for (j, s) in self.slices.iter().enumerate() {
            if !(0.0 < s.tau_minus && s.tau_minus < s.tau_plus && s.tau_plus <= diam + 1e-9) {
                return Err(ControlError::TimingViolation(format!(
                    "slice {j}: need 0 < tau- < tau+ <= diam, got ({}, {})",
                    s.tau_minus, s.tau_plus
                )));
            }
        }
        if !(self.t0 > 2.0 * rad) {
            return Err(ControlError::TimingViolation(format!(
                "T0 = {} must exceed 2 rad(M) = {}",
                self.t0,
                2.0 * rad
            )));
        }
        if !(self.t1 >= self.t0 + diam) {
            return Err(ControlError::TimingViolation(format!(
                "T1 = {} must be at least T0 + diam = {}",
                self.t1,
                self.t0 + diam
            )));
        }
        if !(self.t2 >= 2.0 * self.t1) {
            return Err(ControlError::TimingViolation(format!(
                "T2 = {} must be at least 2 T1 = {}",
                self.t2,
                2.0 * self.t1
            )));
        }
        Ok(())
    }

    /// The slice intersection as a tet mask.
    pub fn region(&self, influence: &Influence) -> Vec<bool> {
        let nt = influence.mesh.num_tets();
        let mut mask = vec![true; nt];
        for s in &self.slices {
            let table = influence.table(&s.patch);
            for ti in 0..nt {
                let d = table.tet_value(&influence.mesh, ti);
                if !(d > s.tau_minus && d < s.tau_plus) {
                    mask[ti] = false;
                }
            }
        }
        mask
    }
}

/// Residuals of the three membership conditions and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ZMembershipReport {
    pub condition1: Vec<f64>,
    pub condition2: f64,
    pub condition3: Vec<f64>,
    pub threshold: f64,
    pub verdict: bool,
}

/// Tests whether the dictionary combination `coeffs` is a member of the set
/// Z of the slicing spec, using cached boundary data only.
pub fn z_membership(
    cache: &WaveCache,
    mesh: &SimplicialComplex3,
    coeffs: &DVector<f64>,
    spec: &SliceSpec,
    lambda: f64,
    tol: f64,
) -> Result<ZMembershipReport, ControlError> {
    let all: Vec<usize> = (0..cache.dict.len()).collect();
    let t1 = spec.t1;

    // total wave size at T1 for normalization
    let g_all = cache.gram(&all, t1);
    let total2 = (&g_all * coeffs).dot(coeffs);
    let scale = total2.max(1e-300).sqrt();

    // condition 1: degree-1 component lies in X(Gamma_j, tau_j^+)
    let g1_t1 = cache.gram_deg(1, &all, &all, t1, t1);
    let norm1_2 = (&g1_t1 * coeffs).dot(coeffs);
    let mut condition1 = Vec::new();
    for s in &spec.slices {
        let sub = cache.dict.supported_in(&s.patch.label, s.tau_plus);
        if sub.is_empty() {
            return Err(ControlError::EmptyPatch);
        }
        let a = cache.gram_deg(1, &sub, &sub, s.tau_plus, s.tau_plus);
        let cross = cache.gram_deg(1, &sub, &all, s.tau_plus, t1);
        let b = &cross * coeffs;
        let (_, residual) = project_onto_x(&a, &b, norm1_2, lambda)?;
        condition1.push(residual / scale);
    }

    // condition 2: degree-2 component vanishes at T1
    let g2_t1 = cache.gram_deg(2, &all, &all, t1, t1);
    let condition2 = (&g2_t1 * coeffs).dot(coeffs).max(0.0).sqrt() / scale;

    // condition 3: the admittance trace of the velocity field vanishes on
    // Gamma_j in the window ]T1 - tau_j^-, T1 + tau_j^-[
    let nsteps = cache.records[0].steps();
    let dt = cache.dt;
    let combined_nu = |n: usize| -> Vec<f64> {
        let dim = cache.records[0].nu2[n].len();
        let mut out = vec![0.0; dim];
        for (i, rec) in cache.records.iter().enumerate() {
            let c = coeffs[i];
            if c != 0.0 {
                for (o, v) in out.iter_mut().zip(&rec.nu2[n]) {
                    *o += c * v;
                }
            }
        }
        out
    };
    // trace scale over the full record
    let mut full2 = 0.0;
    let mut nus: Vec<Vec<f64>> = Vec::with_capacity(nsteps);
    for n in 0..nsteps {
        let nu = combined_nu(n);
        full2 += dt * crate::sparse::dot(&nu, &nu);
        nus.push(nu);
    }
    let full = full2.max(1e-300).sqrt();
    let mut condition3 = Vec::new();
    for s in &spec.slices {
        let lo = ((t1 - s.tau_minus) / dt).ceil().max(0.0) as usize;
        let hi = (((t1 + s.tau_minus) / dt).floor() as usize).min(nsteps - 1);
        let locals: Vec<usize> = s
            .patch
            .edges
            .iter()
            .map(|&eid| mesh.edge_to_bedge[eid])
            .filter(|&le| le != usize::MAX)
            .collect();
        let mut acc = 0.0;
        for nu in nus.iter().take(hi + 1).skip(lo) {
            for &le in &locals {
                acc += dt * nu[le] * nu[le];
            }
        }
        condition3.push(acc.sqrt() / full);
    }

    let verdict = condition1.iter().all(|&r| r <= tol)
        && condition2 <= tol
        && condition3.iter().all(|&r| r <= tol);
    Ok(ZMembershipReport {
        condition1,
        condition2,
        condition3,
        threshold: tol,
        verdict,
    })
}

/// Numerical rank of the member subspace of Z: directions in the dictionary
/// span that carry wave energy at T1 (above the sigma floor) while meeting
/// the three membership conditions within kappa_tol.
pub struct ZRankReport {
    pub rank: usize,
    pub kappas: Vec<f64>,
    pub energy_floor: f64,
}

pub fn z_rank(
    cache: &WaveCache,
    mesh: &SimplicialComplex3,
    spec: &SliceSpec,
    lambda: f64,
    kappa_tol: f64,
    sigma_threshold: f64,
) -> Result<ZRankReport, ControlError> {
    let all: Vec<usize> = (0..cache.dict.len()).collect();
    let m = all.len();
    let t1 = spec.t1;
    let dt = cache.dt;

    // energy form N at T1
    let n_form = cache.gram(&all, t1);

    // constraint form Q: condition-1 Schur residuals + condition-2 energy
    // + condition-3 windowed traces
    let g1 = cache.gram_deg(1, &all, &all, t1, t1);
    let mut q = cache.gram_deg(2, &all, &all, t1, t1);
    for s in &spec.slices {
        let sub = cache.dict.supported_in(&s.patch.label, s.tau_plus);
        if sub.is_empty() {
            return Err(ControlError::EmptyPatch);
        }
        let a = cache.gram_deg(1, &sub, &sub, s.tau_plus, s.tau_plus);
        let cross = cache.gram_deg(1, &sub, &all, s.tau_plus, t1);
        // residual form: G1 - C^T (A + lambda)^{-1} C, spectrally floored
        let eig = nalgebra::SymmetricEigen::new(a);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, &x| acc.max(x));
        let floor = 1e-12 * lmax.max(1e-300);
        let mut inv = DMatrix::zeros(sub.len(), sub.len());
        for k in 0..sub.len() {
            let lam = eig.eigenvalues[k];
            if lam > floor {
                inv[(k, k)] = 1.0 / (lam + lambda);
            }
        }
        let a_inv = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
        let schur = &g1 - cross.transpose() * a_inv * &cross;
        q += schur;
    }
    // condition 3 window form
    let nsteps = cache.records[0].steps();
    for s in &spec.slices {
        let lo = ((t1 - s.tau_minus) / dt).ceil().max(0.0) as usize;
        let hi = (((t1 + s.tau_minus) / dt).floor() as usize).min(nsteps - 1);
        let locals: Vec<usize> = s
            .patch
            .edges
            .iter()
            .map(|&eid| mesh.edge_to_bedge[eid])
            .filter(|&le| le != usize::MAX)
            .collect();
        let mut w = DMatrix::zeros(m, m);
        for n in lo..=hi {
            for a in 0..m {
                for b in a..m {
                    let mut acc = 0.0;
                    for &le in &locals {
                        acc += cache.records[a].nu2[n][le] * cache.records[b].nu2[n][le];
                    }
                    w[(a, b)] += dt * acc;
                    w[(b, a)] = w[(a, b)];
                }
            }
        }
        // normalize the trace form to the wave-energy scale
        let trace_scale = (0..m)
            .map(|i| {
                (0..nsteps)
                    .map(|n| {
                        dt * crate::sparse::dot(&cache.records[i].nu2[n], &cache.records[i].nu2[n])
                    })
                    .sum::<f64>()
            })
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let energy_scale = (0..m).map(|i| n_form[(i, i)]).fold(0.0f64, f64::max);
        q += w * (energy_scale / trace_scale);
    }

    // whiten by the energy form above the sigma floor
    let eig_n = nalgebra::SymmetricEigen::new(n_form);
    let nmax = eig_n.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x));
    let energy_floor = sigma_threshold * nmax.max(1e-300);
    let kept: Vec<usize> = (0..m)
        .filter(|&k| eig_n.eigenvalues[k] > energy_floor)
        .collect();
    if kept.is_empty() {
        return Ok(ZRankReport {
            rank: 0,
            kappas: Vec::new(),
            energy_floor,
        });
    }
    let mut basis = DMatrix::zeros(m, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let scale = eig_n.eigenvalues[k].sqrt();
        for r in 0..m {
            basis[(r, col)] = eig_n.eigenvectors[(r, k)] / scale;
        }
    }
    let k_small = basis.transpose() * &q * &basis;
    let eig_k = nalgebra::SymmetricEigen::new(k_small);
    let mut kappas: Vec<f64> = eig_k.eigenvalues.iter().copied().collect();
    kappas.sort_by(f64::total_cmp);
    let rank = kappas.iter().filter(|&&k| k.max(0.0) <= kappa_tol).count();
    Ok(ZRankReport {
        rank,
        kappas,
        energy_floor,
    })
}
