use super::*;
use crate::dec::whitney::FormSampler;
use crate::dec::{BcKind, DecOperators, MaxwellSystem};
use crate::material::MaterialField;
use crate::mesh::unit_cube;
use nalgebra::{Matrix3, Vector3};
use std::sync::Arc;

fn build_system(n: usize, alpha: f64) -> Arc<MaxwellSystem> {
    let mesh = Arc::new(unit_cube(n));
    let mat = MaterialField::constant(
        &mesh,
        Matrix3::identity() / alpha,
        Matrix3::identity() * alpha,
    );
    let geo = Arc::new(mat.travel_time_geometry(1e-8).unwrap());
    let dec = Arc::new(DecOperators::assemble(mesh, geo).unwrap());
    Arc::new(MaxwellSystem::new(dec, BcKind::Electric).unwrap())
}

fn build_radial_system(n: usize) -> Arc<MaxwellSystem> {
    let mesh = Arc::new(unit_cube(n));
    let mat = MaterialField::radial_alpha(&mesh, Vector3::new(0.5, 0.5, 0.5), 0.5);
    let geo = Arc::new(mat.travel_time_geometry(1e-8).unwrap());
    let dec = Arc::new(DecOperators::assemble(mesh, geo).unwrap());
    Arc::new(MaxwellSystem::new(dec, BcKind::Electric).unwrap())
}

fn first_patch_source(system: &MaxwellSystem, bump: TimeBump) -> SourceSpec {
    // excite a few edges on the z = 0 face
    let mesh = &system.dec.mesh;
    let mut coeffs = Vec::new();
    for (local, &eid) in mesh.boundary_edges.iter().enumerate() {
        let e = mesh.edges[eid];
        let mid = (mesh.vertices[e[0]] + mesh.vertices[e[1]]) * 0.5;
        if mid.z.abs() < 1e-12 && mid.x < 0.75 && mid.y < 0.75 {
            coeffs.push((local, 1.0));
        }
    }
    assert!(!coeffs.is_empty());
    SourceSpec::Analytic(vec![AnalyticSource {
        edge_coeffs: coeffs,
        bump,
        derivative_order: 0,
    }])
}

#[test]
fn bump_calculus() {
    let b = TimeBump::new(0.1, 0.5, 3);
    // peak value 1 at the midpoint
    assert!((b.value(0.3) - 1.0).abs() < 1e-12);
    assert_eq!(b.value(0.05), 0.0);
    assert_eq!(b.value(0.6), 0.0);
    // derivative by finite differences
    let h = 1e-6;
    for t in [0.15, 0.22, 0.41] {
        let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
        assert!((b.derivative(t) - fd).abs() < 1e-7);
    }
    // integral by Simpson oracle
    let n = 2000;
    let mut acc = 0.0;
    let (lo, hi) = (0.1, 0.44);
    let h = (hi - lo) / n as f64;
    for i in 0..n {
        let a = lo + i as f64 * h;
        acc += h / 6.0 * (b.value(a) + 4.0 * b.value(a + 0.5 * h) + b.value(a + h));
    }
    assert!((b.integral(0.44) - acc).abs() < 1e-10);
}

#[test]
fn zero_data_zero_source_stays_zero() {
    let system = build_system(1, 1.0);
    let cfg = EvolutionConfig::new(0.05, 0.5);
    let init = CompleteState::zeros(&system.dec);
    let out = evolve(&system, &init, &SourceSpec::None, &cfg).unwrap();
    for k in 0..4 {
        assert!(sparse::norm(&out.final_state.omega[k]) == 0.0);
    }
}

#[test]
fn free_evolution_conserves_energy() {
    let system = build_system(2, 1.0);
    let s = FormSampler {
        mesh: &system.dec.mesh,
    };
    // divergence-free electric eigenmode as initial data, zero trace
    let e_field = |x: &Vector3<f64>| {
        Vector3::new(
            0.0,
            0.0,
            (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin(),
        )
    };
    let mut init = CompleteState::zeros(&system.dec);
    init.omega[1] = s.project1(e_field);
    // zero the boundary edges so the electric condition holds exactly
    for &e in &system.dec.mesh.boundary_edges {
        init.omega[1][e] = 0.0;
    }
    let mut cfg = EvolutionConfig::new(0.02, 0.02 * 300.0);
    cfg.record_traces = false;
    let out = evolve(&system, &init, &SourceSpec::None, &cfg).unwrap();
    let e0: f64 = out.record.energy[0].iter().sum();
    let drift = out
        .record
        .energy
        .iter()
        .map(|e| {
            let tot: f64 = e.iter().sum();
            (tot - e0).abs() / e0
        })
        .fold(0.0, f64::max);
    assert!(drift <= 1e-9, "energy drift {drift:.3e}");
}

#[test]
fn cavity_resonance_frequency() {
    // TE110 mode of the unit cube: E = z_hat sin(pi x) sin(pi y),
    // angular frequency pi sqrt(2)
    let system = build_system(4, 1.0);
    let s = FormSampler {
        mesh: &system.dec.mesh,
    };
    let pi = std::f64::consts::PI;
    let mut init = CompleteState::zeros(&system.dec);
    init.omega[1] = s.project1(|x| Vector3::new(0.0, 0.0, (pi * x.x).sin() * (pi * x.y).sin()));
    for &e in &system.dec.mesh.boundary_edges {
        init.omega[1][e] = 0.0;
    }
    let ref1 = init.omega[1].clone();
    let dt = 0.01;
    let mut cfg = EvolutionConfig::new(dt, 3.0);
    cfg.record_traces = false;
    cfg.snapshot_stride = 1;
    let out = evolve(&system, &init, &SourceSpec::None, &cfg).unwrap();
    // autocorrelation (w1(t), w1(0)) oscillates at the mode frequency
    let series: Vec<f64> = out
        .record
        .snapshots
        .iter()
        .map(|snap| system.dec.inner(1, &snap.omega[1], &ref1))
        .collect();
    // count zero crossings to estimate the half period
    let mut crossings = Vec::new();
    for i in 1..series.len() {
        if series[i - 1].signum() != series[i].signum() {
            // linear interpolation of the crossing time
            let frac = series[i - 1] / (series[i - 1] - series[i]);
            crossings.push(( i as f64 - 1.0 + frac) * dt);
        }
    }
    assert!(crossings.len() >= 3, "needs several crossings");
    let mut gaps = Vec::new();
    for i in 1..crossings.len() {
        gaps.push(crossings[i] - crossings[i - 1]);
    }
    let half_period = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let freq = pi / half_period;
    let exact = pi * 2.0f64.sqrt();
    assert!(
        (freq - exact).abs() <= 0.05 * exact,
        "freq {freq} vs {exact}"
    );
}

#[test]
fn auxiliary_forms_vanish_for_compatible_source() {
    let system = build_system(2, 1.0);
    let source = first_patch_source(&system, TimeBump::new(0.05, 0.45, 3));
    let cfg = EvolutionConfig::new(0.02, 1.0);
    let init = CompleteState::zeros(&system.dec);
    let out = evolve(&system, &init, &source, &cfg).unwrap();
    let (a0, a3) = verify_aux_vanish(&out.record);
    assert!(a0 <= 1e-9, "w0 residual {a0:.3e}");
    assert!(a3 <= 1e-9, "w3 residual {a3:.3e}");
    // the wave actually entered the domain
    let e_mid: f64 = out.record.energy[30][1] + out.record.energy[30][2];
    assert!(e_mid > 1e-8);
}

#[test]
fn incompatible_source_excites_w3() {
    let system = build_system(2, 1.0);
    let dt = 0.02;
    let steps = 50;
    let nbe = system.dec.mesh.boundary_edges.len();
    let bump = TimeBump::new(0.05, 0.45, 3);
    let mut f1 = BoundarySignal::zeros(dt, 1, SignalRole::TSource, steps + 2, nbe);
    let mesh = &system.dec.mesh;
    for (local, &eid) in mesh.boundary_edges.iter().enumerate() {
        let e = mesh.edges[eid];
        let mid = (mesh.vertices[e[0]] + mesh.vertices[e[1]]) * 0.5;
        if mid.z.abs() < 1e-12 {
            for n in 0..f1.frames.len() {
                f1.frames[n][local] = bump.value(n as f64 * dt);
            }
        }
    }
    // deliberately wrong f2: zero instead of the compatibility integral
    let f2 = BoundarySignal::zeros(dt, 2, SignalRole::TSource, steps + 2, mesh.boundary_faces.len());
    let cfg = EvolutionConfig::new(dt, dt * steps as f64);
    let init = CompleteState::zeros(&system.dec);
    let out = evolve(
        &system,
        &init,
        &SourceSpec::Sampled { f1: f1.clone(), f2 },
        &cfg,
    )
    .unwrap();
    let (_, a3_bad) = verify_aux_vanish(&out.record);
    assert!(a3_bad > 1e-3, "negative control too clean: {a3_bad:.3e}");

    // trapezoid-compatible f2 keeps the auxiliary forms at the time
    // discretization level
    let (f1c, f2c) = maxwell_compatible_source(&system.dec, &f1).unwrap();
    let out = evolve(
        &system,
        &init,
        &SourceSpec::Sampled { f1: f1c, f2: f2c },
        &cfg,
    )
    .unwrap();
    let (_, a3_good) = verify_aux_vanish(&out.record);
    assert!(a3_good < 1e-4, "compatible trapezoid source: {a3_good:.3e}");
    assert!(a3_good < a3_bad / 10.0);
}

#[test]
fn compatible_source_examples() {
    let system = build_system(1, 1.0);
    let dec = &system.dec;
    let nbe = dec.mesh.boundary_edges.len();
    // zero source maps to zero
    let f1 = BoundarySignal::zeros(0.1, 1, SignalRole::TSource, 5, nbe);
    let (_, f2) = maxwell_compatible_source(dec, &f1).unwrap();
    assert!(f2.frames.iter().all(|f| f.iter().all(|&v| v == 0.0)));

    // closed boundary form (d f1 = 0): constant coefficient on all edges of
    // the gradient of a boundary hat function
    let mut f1 = BoundarySignal::zeros(0.1, 1, SignalRole::TSource, 5, nbe);
    let bv0 = dec.mesh.boundary_vertices[0];
    let mut hat = vec![0.0; dec.mesh.boundary_vertices.len()];
    hat[dec.mesh.vertex_to_bvertex[bv0]] = 1.0;
    let grad = matvec(&dec.boundary.d0, &hat);
    for n in 1..5 {
        f1.frames[n] = grad.clone();
    }
    let (_, f2) = maxwell_compatible_source(dec, &f1).unwrap();
    for f in &f2.frames {
        assert!(f.iter().all(|&v| v.abs() < 1e-14));
    }

    // nonzero initial frame is rejected
    let mut bad = BoundarySignal::zeros(0.1, 1, SignalRole::TSource, 3, nbe);
    bad.frames[0][0] = 1.0;
    assert!(matches!(
        maxwell_compatible_source(dec, &bad),
        Err(DynamicsError::NonzeroInitialSource)
    ));
}

#[test]
fn admittance_is_linear() {
    let system = build_system(2, 1.0);
    let cfg = EvolutionConfig::new(0.05, 1.0);
    let src_a = first_patch_source(&system, TimeBump::new(0.05, 0.5, 3));
    let src_b = first_patch_source(&system, TimeBump::new(0.2, 0.8, 2));
    let (za, _) = admittance_apply(&system, &src_a, &cfg).unwrap();
    let (zb, _) = admittance_apply(&system, &src_b, &cfg).unwrap();
    let combined = match (&src_a, &src_b) {
        (SourceSpec::Analytic(a), SourceSpec::Analytic(b)) => {
            let mut list = a.clone();
            let mut scaled: Vec<AnalyticSource> = b.clone();
            for s in scaled.iter_mut() {
                for c in s.edge_coeffs.iter_mut() {
                    c.1 *= -2.0;
                }
            }
            list.extend(scaled);
            SourceSpec::Analytic(list)
        }
        _ => unreachable!(),
    };
    let (zc, _) = admittance_apply(&system, &combined, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..zc.frames.len() {
        for i in 0..zc.frames[n].len() {
            let lin = za.frames[n][i] - 2.0 * zb.frames[n][i];
            worst = worst.max((zc.frames[n][i] - lin).abs());
            scale = scale.max(lin.abs());
        }
    }
    assert!(worst <= 1e-8 * scale.max(1e-12), "nonlinearity {worst:.3e}");
}

#[test]
fn admittance_scaling_in_alpha() {
    // replacing alpha by c alpha maps the admittance to (1/c) times it
    let c = 2.0;
    let sys1 = build_system(2, 1.0);
    let sys2 = build_system(2, c);
    let cfg = EvolutionConfig::new(0.05, 1.0);
    let src1 = first_patch_source(&sys1, TimeBump::new(0.05, 0.5, 3));
    let (z1, _) = admittance_apply(&sys1, &src1, &cfg).unwrap();
    let src2 = first_patch_source(&sys2, TimeBump::new(0.05, 0.5, 3));
    let (z2, _) = admittance_apply(&sys2, &src2, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..z1.frames.len() {
        for i in 0..z1.frames[n].len() {
            worst = worst.max((z2.frames[n][i] - z1.frames[n][i] / c).abs());
            scale = scale.max(z1.frames[n][i].abs());
        }
    }
    assert!(worst <= 1e-8 * scale, "scaling law violated by {worst:.3e}");
}

#[test]
fn time_reversal_symmetry() {
    // with vanishing tangential data, reflecting (w1, -w2) and evolving
    // forward reproduces the reflected backward trajectory
    let system = build_system(2, 1.0);
    let s = FormSampler {
        mesh: &system.dec.mesh,
    };
    let pi = std::f64::consts::PI;
    let mut init = CompleteState::zeros(&system.dec);
    init.omega[1] = s.project1(|x| {
        Vector3::new(
            0.0,
            (pi * x.x).sin() * (pi * x.z).sin(),
            (pi * x.x).sin() * (pi * x.y).sin(),
        )
    });
    for &e in &system.dec.mesh.boundary_edges {
        init.omega[1][e] = 0.0;
    }
    let mut cfg = EvolutionConfig::new(0.02, 0.6);
    cfg.snapshot_stride = 1;
    cfg.record_traces = false;
    let out = evolve(&system, &init, &SourceSpec::None, &cfg).unwrap();
    let snaps = &out.record.snapshots;
    let m = snaps.len() - 1;
    let mut refl = snaps[m].clone();
    for v in refl.omega[2].iter_mut() {
        *v = -*v;
    }
    refl.time = 0.0;
    let mut cfg2 = cfg;
    cfg2.t_final = 0.4;
    cfg2.snapshot_stride = 0;
    let back = evolve(&system, &refl, &SourceSpec::None, &cfg2).unwrap();
    let k_back = cfg2.steps();
    let fwd = &snaps[m - k_back];
    let mut diff: f64 = 0.0;
    let mut scal: f64 = 0.0;
    for (a, b) in back.final_state.omega[1].iter().zip(&fwd.omega[1]) {
        diff = diff.max((a - b).abs());
        scal = scal.max(b.abs());
    }
    for (a, b) in back.final_state.omega[2].iter().zip(&fwd.omega[2]) {
        diff = diff.max((a + b).abs());
        scal = scal.max(b.abs());
    }
    assert!(diff <= 1e-8 * scal.max(1e-12), "reversal defect {diff:.3e}");
}

#[test]
fn duality_involution_and_residual() {
    let system = build_radial_system(2);
    let dec = &system.dec;
    let s = FormSampler { mesh: &dec.mesh };
    let mut state = CompleteState::zeros(dec);
    state.omega[1] = s.project1(|x| Vector3::new(x.y, -x.x * x.z, 0.3));
    state.omega[2] = s.project2(|x| {
        let mut a = Matrix3::zeros();
        a[(0, 1)] = x.z;
        a[(1, 0)] = -x.z;
        a
    });

    // double transform is the identity with the ** sign pattern
    let dual = duality_transform(dec, &state);
    let back = duality_inverse(dec, &dual);
    for k in 0..4 {
        for (a, b) in state.omega[k].iter().zip(&back.omega[k]) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    // the transformed trajectory satisfies the (g, 1/alpha) dual system
    let mut init = CompleteState::zeros(dec);
    init.omega[1] = state.omega[1].clone();
    for &e in &dec.mesh.boundary_edges {
        init.omega[1][e] = 0.0;
    }
    let mut cfg = EvolutionConfig::new(0.02, 0.2);
    cfg.snapshot_stride = 1;
    cfg.record_traces = false;
    let out = evolve(&system, &init, &SourceSpec::None, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for w in out.record.snapshots.windows(2) {
        let d0 = duality_transform(dec, &w[0]);
        let d1 = duality_transform(dec, &w[1]);
        worst = worst.max(dual_system_residual(&system, &d0, &d1, cfg.dt));
    }
    // midpoint states satisfy the dual equations up to the O(dt^2)
    // difference between midpoint average and trapezoid derivative
    assert!(worst <= 1e-3, "dual residual {worst:.3e}");

    // zero maps to zero
    let zero = duality_transform(dec, &CompleteState::zeros(dec));
    assert!(zero.eta.iter().all(|v| v.iter().all(|&x| x == 0.0)));
}

#[test]
fn alpha_rescaling_preserves_dynamics() {
    // constant impedance rescaling leaves the evolution operator unchanged
    // (unique propagation speed): trajectories with the same initial
    // coefficients coincide
    let sys_a = build_system(2, 2.0);
    let sys_b = build_system(2, 0.5);
    let s = FormSampler {
        mesh: &sys_a.dec.mesh,
    };
    let pi = std::f64::consts::PI;
    let mut init = CompleteState::zeros(&sys_a.dec);
    init.omega[1] = s.project1(|x| Vector3::new(0.0, 0.0, (pi * x.x).sin() * (pi * x.y).sin()));
    for &e in &sys_a.dec.mesh.boundary_edges {
        init.omega[1][e] = 0.0;
    }
    let mut cfg = EvolutionConfig::new(0.02, 0.3);
    cfg.record_traces = false;
    let oa = evolve(&sys_a, &init, &SourceSpec::None, &cfg).unwrap();
    let ob = evolve(&sys_b, &init, &SourceSpec::None, &cfg).unwrap();
    for k in 1..3 {
        for (a, b) in oa.final_state.omega[k]
            .iter()
            .zip(&ob.final_state.omega[k])
        {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }
}
