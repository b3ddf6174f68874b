//! Integrator oracles: Crank-Nicolson amplification on discrete eigenmodes,
//! matrix-exponential cross-check against an independent Taylor-squaring
//! routine, phi-function quadrature against a fine RK4 integration,
//! Richardson slopes between the two schemes, and the manufactured solution.

use std::f64::consts::PI;

use hydronudge::domain::{random_smooth, DomainSpec, Grid, PhysicalField, SpectralField};
use hydronudge::dynamics::{
    taylor_green_eigenvalue, ForcingField, ForcingSpec, SystemKind,
};
use hydronudge::linalg::LuReal;
use hydronudge::operators::{prepare_state, ModeReduction, ObservationOperator};
use hydronudge::timestep::{run_simulation, Integrator, Scheme, StepData, StepperConfig};
use ndarray::Array2;
use num_complex::Complex64;

fn grid(nx: usize, ny: usize, nz: usize) -> Grid {
    Grid::new(DomainSpec::new(1.0, nx, ny, nz).unwrap()).unwrap()
}

fn zero_forcing(g: &Grid) -> ForcingField {
    ForcingField::build(g, &ForcingSpec::default()).unwrap()
}

/// Independent matrix exponential: 30-term Taylor series at A/2^10, squared
/// back up. Good to ~1e-12 for the small generators used here.
fn expm_taylor(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let b = a.mapv(|v| v / 1024.0);
    let mut term = Array2::<f64>::eye(n);
    let mut acc = Array2::<f64>::eye(n);
    for k in 1..30 {
        term = term.dot(&b) / k as f64;
        acc = acc + &term;
    }
    for _ in 0..10 {
        acc = acc.dot(&acc);
    }
    acc
}

/// Smallest eigenpair of a small matrix by shifted inverse iteration.
fn smallest_eigenpair(g: &Array2<f64>, shift: f64) -> (f64, Vec<f64>) {
    let n = g.nrows();
    let mut shifted = g.clone();
    for d in 0..n {
        shifted[[d, d]] -= shift;
    }
    let lu = LuReal::factor(&shifted).unwrap();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.37).collect();
    for _ in 0..100 {
        let y = lu.solve_f64(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    // Rayleigh quotient
    let mut gx = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            gx[r] += g[[r, c]] * x[c];
        }
    }
    let lam: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
    (lam, x)
}

#[test]
fn zero_data_stays_zero() {
    let g = grid(8, 8, 9);
    let v0 = SpectralField::zeros(&g, 2);
    let f = zero_forcing(&g);
    for scheme in [Scheme::ImexCnab2, Scheme::Exponential] {
        let stepper = StepperConfig::new(scheme, 1e-2, 0.2, 5).unwrap();
        let traj = run_simulation(
            &g,
            SystemKind::Primitive,
            ObservationOperator::identity(),
            0.0,
            &stepper,
            &v0,
            &f,
            None,
        )
        .unwrap();
        assert!(traj.failure.is_none());
        for v in &traj.norms.l2.values {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn exponential_stepper_tracks_stokes_mode_five_efoldings() {
    // k = 0 mean-flow eigenmode: self-advection vanishes identically, so the
    // nonlinear run decays exactly like e^{-lambda t}.
    let g = grid(8, 8, 17);
    let l = g.spec.l;
    let lambda = (0.5 * PI / l).powi(2);
    let f0 = PhysicalField::from_fn(&g, 2, |c, _, _, z| {
        if c == 0 {
            (0.5 * PI * z / l).cos()
        } else {
            0.0
        }
    });
    let v0 = prepare_state(&g, &g.to_spectral(&f0).unwrap()).unwrap();
    let t_end = 5.0 / lambda;
    let stepper = StepperConfig::new(Scheme::Exponential, t_end / 400.0, t_end, 40).unwrap();
    let traj = run_simulation(
        &g,
        SystemKind::Primitive,
        ObservationOperator::identity(),
        0.0,
        &stepper,
        &v0,
        &zero_forcing(&g),
        None,
    )
    .unwrap();
    let n0 = traj.norms.l2.values[0];
    for (t, n) in traj.norms.l2.times.iter().zip(&traj.norms.l2.values) {
        let expect = n0 * (-lambda * t).exp();
        assert!(
            (n - expect).abs() <= 1e-8 * n0,
            "t={t}: {n} vs {expect}"
        );
    }
}

#[test]
fn imex_amplification_matches_scalar_crank_nicolson() {
    let g = grid(8, 8, 17);
    // discrete k=0 eigenmode of the reduced generator
    let red = ModeReduction::new(&g, 0, 0);
    let gen = red.generator(&g, 0.0);
    let (lam, y) = smallest_eigenpair(&gen, 2.4);
    // build the spectral state from the completed eigen-coordinates
    let yc: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let (ax, ay) = red.complete(&yc);
    let mut v0 = SpectralField::zeros(&g, 2);
    for m in 0..g.nz() {
        v0.coeffs[[0, 0, 0, m]] = ax[m];
        v0.coeffs[[1, 0, 0, m]] = ay[m];
    }
    let dt = 1e-2;
    let stepper = StepperConfig::new(Scheme::ImexCnab2, dt, 10.0 * dt, 1000).unwrap();
    let mut integ = Integrator::new(
        &g,
        SystemKind::Primitive,
        ObservationOperator::identity(),
        0.0,
        &stepper,
        &v0,
    )
    .unwrap();
    let zero = SpectralField::zeros(&g, 2);
    let data = StepData {
        forcing: Some(&zero),
        ..Default::default()
    };
    integ.step(&data).unwrap();
    let rho = (1.0 - lam * dt / 2.0) / (1.0 + lam * dt / 2.0);
    let expect = v0.scaled(rho);
    let resid = integ.state().sub(&expect).max_coeff();
    assert!(
        resid <= 1e-12 * v0.max_coeff(),
        "residual {resid}, lambda = {lam}"
    );
    // lambda of the k = 0 block is the closed-form vertical eigenvalue
    assert!((lam - (PI / 2.0) * (PI / 2.0)).abs() < 2e-4 * lam, "{lam}");
}

#[test]
fn exponential_linear_step_matches_taylor_expm_oracle() {
    let g = grid(8, 8, 9);
    let mu = 4.0;
    let dt = 7e-3;
    // amplitude 1e-11 so the quadratic convection term is below the expm
    // tolerance relative to the state: the step is the linear semigroup
    let v0 = prepare_state(&g, &random_smooth(&g, 2, 61, 0.5).scaled(1e-11)).unwrap();
    let stepper = StepperConfig::new(Scheme::Exponential, dt, dt, 1).unwrap();
    // identity observation: linear part per mode is the full perturbed
    // operator; zero forcing and truth = 0 make the run purely linear
    let truth = hydronudge::dynamics::SampledTruth::new(
        vec![0.0, 1.0],
        vec![SpectralField::zeros(&g, 2), SpectralField::zeros(&g, 2)],
    )
    .unwrap();
    let traj = run_simulation(
        &g,
        SystemKind::Nudged,
        ObservationOperator::identity(),
        mu,
        &stepper,
        &v0,
        &zero_forcing(&g),
        Some(&truth),
    )
    .unwrap();
    let got = &traj.snapshots[traj.snapshots.len() - 1];
    // oracle: per-mode Taylor-squaring exponential of -dt G
    let nz = g.nz();
    let mut expect = SpectralField::zeros(&g, 2);
    for mode in &g.half_modes {
        let red = ModeReduction::new(&g, mode.ix, mode.iy);
        let gen = red.generator(&g, mu);
        let e = expm_taylor(&gen.mapv(|v| -dt * v));
        let mut ax = vec![Complex64::default(); nz];
        let mut ay = vec![Complex64::default(); nz];
        for m in 0..nz {
            ax[m] = v0.coeffs[[0, mode.ix, mode.iy, m]];
            ay[m] = v0.coeffs[[1, mode.ix, mode.iy, m]];
        }
        let y = red.reduce_state(&ax, &ay);
        let ynew = hydronudge::linalg::matvec_c64(&e, &y);
        let (ca, cb) = red.complete(&ynew);
        let (mx, my) = g.mirror(mode);
        for m in 0..nz {
            expect.coeffs[[0, mode.ix, mode.iy, m]] = ca[m];
            expect.coeffs[[1, mode.ix, mode.iy, m]] = cb[m];
            if (mx, my) != (mode.ix, mode.iy) {
                expect.coeffs[[0, mx, my, m]] = ca[m].conj();
                expect.coeffs[[1, mx, my, m]] = cb[m].conj();
            }
        }
    }
    let resid = got.sub(&expect).max_coeff();
    assert!(resid <= 1e-12 * v0.max_coeff(), "residual {resid}");
}

#[test]
fn phi_one_quadrature_matches_rk4_oracle() {
    // constant forcing, linear dynamics: one ETD step must equal
    // y(h) = e^{-hG} y0 + h phi_1(-hG) n, cross-checked against RK4
    let g = grid(8, 8, 9);
    let red = ModeReduction::new(&g, 1, 1);
    let gen = red.generator(&g, 2.0);
    let dim = red.dim;
    let h = 0.05;
    let y0: Vec<f64> = (0..dim).map(|i| ((i * 13 + 5) % 7) as f64 / 7.0 - 0.4).collect();
    let n: Vec<f64> = (0..dim).map(|i| ((i * 5 + 2) % 9) as f64 / 9.0 - 0.5).collect();
    // ETD via the production phi functions
    let z = gen.mapv(|v| -h * v);
    let (e, p1, _) = hydronudge::linalg::phi_functions(&z).unwrap();
    let mut etd = vec![0.0; dim];
    for r in 0..dim {
        for c in 0..dim {
            etd[r] += e[[r, c]] * y0[c] + h * p1[[r, c]] * n[c];
        }
    }
    // RK4 oracle on dy/dt = -G y + n with 2000 substeps
    let mut y = y0.clone();
    let nsub = 2000;
    let hs = h / nsub as f64;
    let f = |y: &[f64]| -> Vec<f64> {
        let mut out = n.clone();
        for r in 0..dim {
            for c in 0..dim {
                out[r] -= gen[[r, c]] * y[c];
            }
        }
        out
    };
    for _ in 0..nsub {
        let k1 = f(&y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + hs / 2.0 * b).collect();
        let k2 = f(&y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + hs / 2.0 * b).collect();
        let k3 = f(&y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + hs * b).collect();
        let k4 = f(&y4);
        for i in 0..dim {
            y[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..dim {
        assert!(
            (etd[i] - y[i]).abs() <= 1e-10 * scale,
            "i={i}: {} vs {}",
            etd[i],
            y[i]
        );
    }
}

#[test]
fn small_step_consistency_with_rhs() {
    let g = grid(8, 8, 9);
    let v0 = prepare_state(&g, &random_smooth(&g, 2, 77, 0.6).scaled(0.2)).unwrap();
    let forcing = zero_forcing(&g);
    let rhs = hydronudge::dynamics::primitive_rhs(&g, &v0, &forcing.evaluate(0.0)).unwrap();
    let mut errs = Vec::new();
    for &dt in &[2e-4, 1e-4] {
        let stepper = StepperConfig::new(Scheme::Exponential, dt, dt, 1).unwrap();
        let traj = run_simulation(
            &g,
            SystemKind::Primitive,
            ObservationOperator::identity(),
            0.0,
            &stepper,
            &v0,
            &forcing,
            None,
        )
        .unwrap();
        let got = &traj.snapshots[traj.snapshots.len() - 1];
        let mut fd = got.sub(&v0);
        fd.scale(1.0 / dt);
        // compare on the projected/tau-reduced space the stepper moves in
        let rhs_red = prepare_state(&g, &rhs).unwrap();
        let fd_red = prepare_state(&g, &fd).unwrap();
        errs.push(fd_red.sub(&rhs_red).max_coeff());
    }
    let ratio = errs[0] / errs[1];
    assert!(
        ratio > 1.5 && ratio < 2.5,
        "first-order consistency ratio {ratio}, errs {errs:?}"
    );
}

#[test]
fn schemes_agree_at_second_order() {
    let g = grid(8, 8, 9);
    let v0 = hydronudge::dynamics::taylor_green_pattern(&g)
        .unwrap()
        .scaled(0.8);
    let v0 = prepare_state(&g, &v0).unwrap();
    let forcing = zero_forcing(&g);
    let t_end = 0.25;
    let mut diffs = Vec::new();
    for &dt in &[4e-3, 2e-3, 1e-3] {
        let mut finals = Vec::new();
        for scheme in [Scheme::ImexCnab2, Scheme::Exponential] {
            let stepper = StepperConfig::new(scheme, dt, t_end, 10_000).unwrap();
            let traj = run_simulation(
                &g,
                SystemKind::Primitive,
                ObservationOperator::identity(),
                0.0,
                &stepper,
                &v0,
                &forcing,
                None,
            )
            .unwrap();
            finals.push(traj.snapshots.last().unwrap().clone());
        }
        diffs.push(g.parseval_l2_sq(&finals[0].sub(&finals[1])).sqrt());
    }
    let s1 = (diffs[0] / diffs[1]).log2();
    let s2 = (diffs[1] / diffs[2]).log2();
    for s in [s1, s2] {
        assert!((s - 2.0).abs() <= 0.1, "Richardson slope {s}, diffs {diffs:?}");
    }
}

#[test]
fn manufactured_solution_second_order() {
    let g = grid(8, 8, 17);
    let spec = ForcingSpec {
        name: "manufactured-tg".into(),
        amplitude: 0.7,
        gamma0: 1.3,
    };
    let forcing = ForcingField::build(&g, &spec).unwrap();
    let v0 = prepare_state(&g, &forcing.manufactured_state(0.0).unwrap()).unwrap();
    let t_end = 0.5;
    let mut errs = Vec::new();
    for &dt in &[4e-3, 2e-3, 1e-3] {
        let stepper = StepperConfig::new(Scheme::ImexCnab2, dt, t_end, 10_000).unwrap();
        let traj = run_simulation(
            &g,
            SystemKind::Primitive,
            ObservationOperator::identity(),
            0.0,
            &stepper,
            &v0,
            &forcing,
            None,
        )
        .unwrap();
        let exact = forcing.manufactured_state(t_end).unwrap();
        let err = g
            .parseval_l2_sq(&traj.snapshots.last().unwrap().sub(&exact))
            .sqrt();
        errs.push(err);
    }
    let s1 = (errs[0] / errs[1]).log2();
    let s2 = (errs[1] / errs[2]).log2();
    assert!(
        (s1 - 2.0).abs() <= 0.15 && (s2 - 2.0).abs() <= 0.2,
        "slopes {s1} {s2}, errors {errs:?}"
    );
}

#[test]
fn rhs_stays_mean_divergence_free_and_dealiased() {
    let g = grid(16, 16, 17);
    let v = prepare_state(&g, &random_smooth(&g, 2, 9, 0.5)).unwrap();
    let f = hydronudge::dynamics::taylor_green_pattern(&g).unwrap();
    let rhs = hydronudge::dynamics::primitive_rhs(&g, &v, &f).unwrap();
    let resid = hydronudge::operators::mean_divergence_residual(&g, &rhs);
    assert!(resid <= 1e-11 * rhs.max_coeff().max(1e-300), "{resid}");
    assert_eq!(rhs.masked_energy(&g), 0.0);
}

#[test]
fn determinism_bitwise() {
    let g = grid(8, 8, 9);
    let v0 = prepare_state(&g, &random_smooth(&g, 2, 4, 0.5)).unwrap();
    let forcing = ForcingField::build(
        &g,
        &ForcingSpec {
            name: "taylor-green-layer".into(),
            amplitude: 0.3,
            gamma0: 2.0,
        },
    )
    .unwrap();
    let stepper = StepperConfig::new(Scheme::ImexCnab2, 5e-3, 0.1, 5).unwrap();
    let run = || {
        run_simulation(
            &g,
            SystemKind::Primitive,
            ObservationOperator::identity(),
            0.0,
            &stepper,
            &v0,
            &forcing,
            None,
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.norms.l2.values, b.norms.l2.values);
    assert_eq!(
        a.snapshots.last().unwrap().coeffs,
        b.snapshots.last().unwrap().coeffs
    );
}

#[test]
fn cfl_guard_aborts() {
    let g = grid(8, 8, 9);
    let v0 = prepare_state(
        &g,
        &hydronudge::dynamics::taylor_green_pattern(&g).unwrap().scaled(50.0),
    )
    .unwrap();
    let stepper = StepperConfig::new(Scheme::ImexCnab2, 0.05, 0.5, 1).unwrap();
    let err = run_simulation(
        &g,
        SystemKind::Primitive,
        ObservationOperator::identity(),
        0.0,
        &stepper,
        &v0,
        &zero_forcing(&g),
        None,
    );
    assert!(matches!(
        err,
        Err(hydronudge::CoreError::GuardViolation(_))
    ));
}

#[test]
fn stokes_mode_invariant_taylor_green_eigenvalue_matches() {
    let g = grid(16, 16, 17);
    let lam = taylor_green_eigenvalue(&g);
    assert!((lam - (2.0 + (PI / 2.0) * (PI / 2.0))).abs() < 1e-12);
}
