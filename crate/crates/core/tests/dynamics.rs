//! Nonlinear-term and right-hand-side oracles: an independent 2D pseudospectral
//! convection route, a closed-form Taylor-Green convection, a 4th-order
//! finite-difference oracle, the algebraic difference-consistency identity and
//! asymptotic balances.

use std::f64::consts::PI;

use hydronudge::domain::{random_smooth, DomainSpec, Grid, PhysicalField, SpectralField};
use hydronudge::dynamics::{
    advective_product, convection, difference_rhs, nudged_rhs_with_truth, primitive_rhs,
    taylor_green_pattern, ForcingField, ForcingSpec, SampledTruth,
};
use hydronudge::operators::{apply_stokes, prepare_state, ObservationOperator};
use num_complex::Complex64;

fn grid(nx: usize, ny: usize, nz: usize) -> Grid {
    Grid::new(DomainSpec::new(1.0, nx, ny, nz).unwrap()).unwrap()
}


/// A short unforced diffusion run turns prepared random data into a genuinely
/// smooth BC-compatible state (the tau tail of raw random data is O(1)).
fn smooth_state(g: &Grid, seed: u64, amp: f64) -> SpectralField {
    let v0 = prepare_state(g, &random_smooth(g, 2, seed, 0.8).scaled(amp)).unwrap();
    let stepper = hydronudge::timestep::StepperConfig::new(
        hydronudge::timestep::Scheme::Exponential,
        5e-4,
        0.02,
        1000,
    )
    .unwrap();
    let forcing = ForcingField::build(g, &ForcingSpec::default()).unwrap();
    let traj = hydronudge::timestep::run_simulation(
        g,
        hydronudge::dynamics::SystemKind::Primitive,
        ObservationOperator::identity(),
        0.0,
        &stepper,
        &v0,
        &forcing,
        None,
    )
    .unwrap();
    traj.snapshots.last().unwrap().clone()
}

#[test]
fn convection_of_zero_is_zero() {
    let g = grid(8, 8, 9);
    let v = SpectralField::zeros(&g, 2);
    let c = convection(&g, &v).unwrap();
    assert_eq!(c.max_coeff(), 0.0);
}

/// Independent 2D route: vertically constant, horizontally divergence-free
/// velocity. The oracle computes v . grad_H v with naive DFTs on a twice as
/// fine horizontal grid (alias-free), truncates to the kept modes, and
/// applies the same mean-gradient removal.
#[test]
fn vertically_constant_convection_matches_2d_oracle() {
    let nx = 16;
    let g = grid(nx, nx, 9);
    // stream function psi = sin x cos 2y + 0.3 cos 3x sin y,
    // v = (d_y psi, -d_x psi)
    let vx = |x: f64, y: f64| -2.0 * x.sin() * (2.0 * y).sin() + 0.3 * (3.0 * x).cos() * y.cos();
    let vy = |x: f64, y: f64| -(x.cos() * (2.0 * y).cos() - 0.9 * (3.0 * x).sin() * y.sin());
    let f = PhysicalField::from_fn(&g, 2, |c, x, y, _| if c == 0 { vx(x, y) } else { vy(x, y) });
    let v = g.to_spectral(&f).unwrap();
    let conv = convection(&g, &v).unwrap();

    // oracle on a 2*nx fine grid with naive DFT
    let fine = 2 * nx;
    let mut prod_x = vec![0.0; fine * fine];
    let mut prod_y = vec![0.0; fine * fine];
    let h = 2.0 * PI / fine as f64;
    // derivatives are analytic here, so the products are pointwise exact
    let dvx_dx = |x: f64, y: f64| -2.0 * x.cos() * (2.0 * y).sin() - 0.9 * (3.0 * x).sin() * y.cos();
    let dvx_dy = |x: f64, y: f64| -4.0 * x.sin() * (2.0 * y).cos() - 0.3 * (3.0 * x).cos() * y.sin();
    let dvy_dx = |x: f64, y: f64| x.sin() * (2.0 * y).cos() + 2.7 * (3.0 * x).cos() * y.sin();
    let dvy_dy = |x: f64, y: f64| 2.0 * x.cos() * (2.0 * y).sin() + 0.9 * (3.0 * x).sin() * y.cos();
    for i in 0..fine {
        for j in 0..fine {
            let (x, y) = (i as f64 * h, j as f64 * h);
            prod_x[i * fine + j] = vx(x, y) * dvx_dx(x, y) + vy(x, y) * dvx_dy(x, y);
            prod_y[i * fine + j] = vx(x, y) * dvy_dx(x, y) + vy(x, y) * dvy_dy(x, y);
        }
    }
    // naive DFT coefficients of the fine products at the coarse kept modes,
    // then remove the mean-gradient part (the projection for vertically
    // constant fields)
    let coef = |vals: &[f64], kx: i32, ky: i32| -> Complex64 {
        let mut s = Complex64::default();
        for i in 0..fine {
            for j in 0..fine {
                let phase = -(kx as f64 * i as f64 + ky as f64 * j as f64) * h;
                s += vals[i * fine + j] * Complex64::new(phase.cos(), phase.sin());
            }
        }
        s / (fine * fine) as f64
    };
    let mut max_err: f64 = 0.0;
    let mut max_mag: f64 = 0.0;
    for mode in &g.active_modes {
        let (kx, ky) = (mode.kx, mode.ky);
        let cx = coef(&prod_x, kx, ky);
        let cy = coef(&prod_y, kx, ky);
        let k2 = (kx * kx + ky * ky) as f64;
        let (px, py) = if k2 > 0.0 {
            let s = (kx as f64 * cx + ky as f64 * cy) / k2;
            (cx - kx as f64 * s, cy - ky as f64 * s)
        } else {
            (cx, cy)
        };
        // vertically constant: all content in Chebyshev mode 0
        let gx = conv.coeffs[[0, mode.ix, mode.iy, 0]];
        let gy = conv.coeffs[[1, mode.ix, mode.iy, 0]];
        max_err = max_err.max((gx - px).norm()).max((gy - py).norm());
        max_mag = max_mag.max(px.norm()).max(py.norm());
        // higher vertical modes stay empty
        for m in 1..g.nz() {
            max_err = max_err.max(conv.coeffs[[0, mode.ix, mode.iy, m]].norm());
        }
    }
    assert!(
        max_err <= 1e-10 * max_mag.max(1.0),
        "max err {max_err}, scale {max_mag}"
    );
}

#[test]
fn taylor_green_convection_closed_form() {
    let g = grid(16, 16, 17);
    let l = g.spec.l;
    let v = taylor_green_pattern(&g).unwrap();
    let conv = convection(&g, &v).unwrap();
    // P(u . grad v) = (phi^2 - 1/2) (sin 2x, sin 2y)/2 with phi = cos(pi z/2l)
    let exact = PhysicalField::from_fn(&g, 2, |c, x, y, z| {
        let phi = (PI * z / (2.0 * l)).cos();
        let w = phi * phi - 0.5;
        match c {
            0 => w * (2.0 * x).sin() / 2.0,
            _ => w * (2.0 * y).sin() / 2.0,
        }
    });
    let exact_spec = g.to_spectral(&exact).unwrap();
    let resid = conv.sub(&exact_spec).max_coeff();
    assert!(resid <= 1e-12 * v.max_coeff(), "residual {resid}");
}

/// 4th-order central finite differences on the horizontal axes against the
/// unprojected advective product for a field with w = 0: the FD error must
/// shrink by ~16x when the horizontal grid is refined 2x.
#[test]
fn finite_difference_oracle_fourth_order() {
    let mut errs = Vec::new();
    for nx in [16usize, 32] {
        let g = grid(nx, nx, 9);
        let v = taylor_green_pattern(&g).unwrap();
        let prod = advective_product(&g, &v, &v).unwrap();
        let prod_phys = g.to_physical(&prod).unwrap();
        let vp = g.to_physical(&v).unwrap();
        let h = 2.0 * PI / nx as f64;
        let idx = |i: i64| ((i % nx as i64 + nx as i64) % nx as i64) as usize;
        let mut max_err: f64 = 0.0;
        for c in 0..2 {
            for i in 0..nx {
                for j in 0..nx {
                    for k in 0..g.nz() {
                        let d4 = |axis: usize| -> f64 {
                            let sample = |off: i64| -> f64 {
                                match axis {
                                    0 => vp.values[[c, idx(i as i64 + off), j, k]],
                                    _ => vp.values[[c, i, idx(j as i64 + off), k]],
                                }
                            };
                            (-sample(2) + 8.0 * sample(1) - 8.0 * sample(-1) + sample(-2))
                                / (12.0 * h)
                        };
                        let fd = vp.values[[0, i, j, k]] * d4(0) + vp.values[[1, i, j, k]] * d4(1);
                        max_err = max_err.max((fd - prod_phys.values[[c, i, j, k]]).abs());
                    }
                }
            }
        }
        errs.push(max_err);
    }
    let ratio = errs[0] / errs[1];
    assert!(
        ratio > 10.0 && ratio < 24.0,
        "4th order refinement ratio {ratio}, errs {errs:?}"
    );
}

#[test]
fn advection_skew_symmetry_residual() {
    let g = grid(16, 16, 17);
    let v = smooth_state(&g, 13, 1.0);
    let prod = advective_product(&g, &v, &v).unwrap();
    // <u . grad v, v> in the exact mass inner product
    let ip = g.l2_inner(&prod, &v);
    let h1 = g.sobolev_norm(&v, 1.0, 2.0).unwrap();
    assert!(
        ip.abs() <= 1e-8 * h1.powi(3),
        "skew residual {ip}, bound {}",
        1e-8 * h1.powi(3)
    );
}

#[test]
fn primitive_rhs_trivial_and_linear_regime() {
    let g = grid(8, 8, 9);
    let zero = SpectralField::zeros(&g, 2);
    let rhs0 = primitive_rhs(&g, &zero, &zero).unwrap();
    assert_eq!(rhs0.max_coeff(), 0.0);
    // tiny state: rhs ~ -A v + P f up to O(||v||^2)
    let eps = 1e-5;
    let v = prepare_state(&g, &random_smooth(&g, 2, 3, 0.5).scaled(eps)).unwrap();
    let f = taylor_green_pattern(&g).unwrap();
    let rhs = primitive_rhs(&g, &v, &f).unwrap();
    let mut lin = apply_stokes(&g, &v).unwrap().scaled(-1.0);
    lin.axpy(1.0, &hydronudge::operators::hydrostatic_projection(&g, &f).unwrap());
    lin.apply_mask(&g);
    let resid = rhs.sub(&lin).max_coeff();
    // quadratic remainder ~ eps^2 * gradients
    assert!(resid <= 100.0 * eps * eps, "residual {resid}");
}

#[test]
fn manufactured_rhs_is_time_derivative() {
    let g = grid(16, 16, 17);
    let spec = ForcingSpec {
        name: "manufactured-tg".into(),
        amplitude: 0.9,
        gamma0: 1.7,
    };
    let forcing = ForcingField::build(&g, &spec).unwrap();
    for t in [0.0, 0.4] {
        let vstar = forcing.manufactured_state(t).unwrap();
        let f = forcing.evaluate(t);
        let rhs = primitive_rhs(&g, &vstar, &f).unwrap();
        // d_t v* = -gamma0 v*
        let expect = vstar.scaled(-spec.gamma0);
        let resid = rhs.sub(&expect).max_coeff();
        assert!(
            resid <= 1e-9 * vstar.max_coeff().max(1.0),
            "t={t}: residual {resid}"
        );
    }
}

#[test]
fn nudged_rhs_consistency_reductions() {
    let g = grid(8, 8, 9);
    let v = prepare_state(&g, &random_smooth(&g, 2, 5, 0.5)).unwrap();
    let f = taylor_green_pattern(&g).unwrap();
    let id = ObservationOperator::identity();
    // v~ = v with identity J: equals the primitive rhs at v
    let mu = 12.0;
    let nr = nudged_rhs_with_truth(&g, &v, &v, &id, mu, &f).unwrap();
    let pr = primitive_rhs(&g, &v, &f).unwrap();
    let resid = nr.sub(&pr).max_coeff();
    assert!(resid <= 1e-12 * pr.max_coeff(), "{resid}");
    // mu = 0, J = id reduces to the primitive rhs at the assimilated state
    let vt = prepare_state(&g, &random_smooth(&g, 2, 6, 0.5)).unwrap();
    let nr0 = nudged_rhs_with_truth(&g, &vt, &v, &id, 0.0, &f).unwrap();
    let pr0 = primitive_rhs(&g, &vt, &f).unwrap();
    assert!(nr0.sub(&pr0).max_coeff() <= 1e-13 * pr0.max_coeff());
}

#[test]
fn nudging_term_frechet_derivative() {
    let g = grid(8, 8, 9);
    let obs = ObservationOperator::cube_average(&g, 2, 2, 2).unwrap();
    let mu = 9.0;
    let v = prepare_state(&g, &random_smooth(&g, 2, 7, 0.5)).unwrap();
    let f = SpectralField::zeros(&g, 2);
    let dir = prepare_state(&g, &random_smooth(&g, 2, 8, 0.5)).unwrap();
    let eps = 1e-4;
    // isolate the nudging term as rhs(mu) - rhs(0), linear in v~
    let term = |vt: &SpectralField| -> SpectralField {
        let a = nudged_rhs_with_truth(&g, vt, &v, &obs, mu, &f).unwrap();
        let b = nudged_rhs_with_truth(&g, vt, &v, &obs, 0.0, &f).unwrap();
        a.sub(&b)
    };
    let mut plus = v.clone();
    plus.axpy(eps, &dir);
    let mut minus = v.clone();
    minus.axpy(-eps, &dir);
    let mut fd = term(&plus).sub(&term(&minus));
    fd.scale(1.0 / (2.0 * eps));
    // expected derivative: -mu P J dir
    let jd = obs.apply_spectral(&g, &dir).unwrap();
    let mut expect = hydronudge::operators::hydrostatic_projection(&g, &jd).unwrap();
    expect.scale(-mu);
    expect.apply_mask(&g);
    let resid = fd.sub(&expect).max_coeff();
    assert!(resid <= 1e-6 * expect.max_coeff(), "residual {resid}");
}

#[test]
fn difference_rhs_trivial_and_consistent() {
    let g = grid(16, 16, 17);
    let obs = ObservationOperator::cube_average(&g, 4, 4, 4).unwrap();
    let mu = 17.0;
    // V = 0 and F = 0 (identity observation of the forcing): rhs = 0
    let id = ObservationOperator::identity();
    let v = prepare_state(&g, &random_smooth(&g, 2, 9, 0.5)).unwrap();
    let zero = SpectralField::zeros(&g, 2);
    let f = taylor_green_pattern(&g).unwrap();
    let rhs = difference_rhs(&g, &zero, &v, &id, mu, &f).unwrap();
    assert!(rhs.max_coeff() <= 1e-13 * v.max_coeff());
    // algebraic consistency: difference_rhs(v - v~) = primitive_rhs(v) - nudged_rhs(v~)
    let vt = prepare_state(&g, &random_smooth(&g, 2, 10, 0.5)).unwrap();
    let big_v = v.sub(&vt);
    let lhs = difference_rhs(&g, &big_v, &v, &obs, mu, &f).unwrap();
    let pr = primitive_rhs(&g, &v, &f).unwrap();
    let nr = nudged_rhs_with_truth(&g, &vt, &v, &obs, mu, &f).unwrap();
    let rhs2 = pr.sub(&nr);
    let resid = lhs.sub(&rhs2).max_coeff();
    assert!(
        resid <= 1e-10 * lhs.max_coeff().max(1.0),
        "consistency residual {resid}"
    );
}

#[test]
fn difference_rhs_large_mu_dominant_balance() {
    let g = grid(8, 8, 9);
    let id = ObservationOperator::identity();
    let v = prepare_state(&g, &random_smooth(&g, 2, 11, 0.5)).unwrap();
    let big_v = prepare_state(&g, &random_smooth(&g, 2, 12, 0.5).scaled(0.3)).unwrap();
    let f = SpectralField::zeros(&g, 2);
    let vnorm = g.parseval_l2_sq(&big_v).sqrt();
    let mut logs = Vec::new();
    for &mu in &[1.0e4, 1.0e5, 1.0e6] {
        let rhs = difference_rhs(&g, &big_v, &v, &id, mu, &f).unwrap();
        logs.push((mu.ln(), (g.parseval_l2_sq(&rhs).sqrt() / vnorm).ln()));
    }
    let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
    assert!((slope - 1.0).abs() <= 0.01, "slope {slope}");
    // and the prefactor tends to 1: ||rhs|| / (mu ||V||) -> 1
    let rhs = difference_rhs(&g, &big_v, &v, &id, 1.0e7, &f).unwrap();
    let ratio = g.parseval_l2_sq(&rhs).sqrt() / (1.0e7 * vnorm);
    assert!((ratio - 1.0).abs() <= 1e-3, "ratio {ratio}");
}

#[test]
fn energy_identity_advection_residuals() {
    let g = grid(16, 16, 17);
    let v = smooth_state(&g, 14, 1.0);
    let big_v = smooth_state(&g, 15, 0.5);
    let ip = |a: &SpectralField, b: &SpectralField| -> f64 { g.l2_inner(a, b) };
    let h1v = g.sobolev_norm(&v, 1.0, 2.0).unwrap();
    let h1big = g.sobolev_norm(&big_v, 1.0, 2.0).unwrap();
    let bound = 1e-8 * h1big * h1big * (h1v + h1big);
    // <u . grad V, V> vanishes analytically (carrier divergence-free)
    let t1 = ip(&advective_product(&g, &v, &big_v).unwrap(), &big_v);
    assert!(t1.abs() <= bound, "u.gradV residual {t1} bound {bound}");
    // <U . grad V, V> likewise
    let t2 = ip(&advective_product(&g, &big_v, &big_v).unwrap(), &big_v);
    assert!(t2.abs() <= bound, "U.gradV residual {t2} bound {bound}");
}

#[test]
fn rhs_outputs_dealiased_for_all_systems() {
    let g = grid(16, 16, 17);
    let obs = ObservationOperator::cube_average(&g, 4, 4, 4).unwrap();
    let v = prepare_state(&g, &random_smooth(&g, 2, 16, 0.5)).unwrap();
    let vt = prepare_state(&g, &random_smooth(&g, 2, 17, 0.5)).unwrap();
    let f = taylor_green_pattern(&g).unwrap();
    let pr = primitive_rhs(&g, &v, &f).unwrap();
    let nr = nudged_rhs_with_truth(&g, &vt, &v, &obs, 5.0, &f).unwrap();
    let dr = difference_rhs(&g, &v.sub(&vt), &v, &obs, 5.0, &f).unwrap();
    for rhs in [pr, nr, dr] {
        assert_eq!(rhs.masked_energy(&g), 0.0);
        let resid = hydronudge::operators::mean_divergence_residual(&g, &rhs);
        assert!(resid <= 1e-11 * rhs.max_coeff().max(1e-300));
    }
}

#[test]
fn sampled_truth_hermite_interpolation() {
    let g = grid(8, 8, 9);
    let a = prepare_state(&g, &random_smooth(&g, 2, 18, 0.6)).unwrap();
    let b = prepare_state(&g, &random_smooth(&g, 2, 19, 0.6)).unwrap();
    let omega = 2.0;
    let state = |t: f64| -> SpectralField {
        let mut s = a.scaled((omega * t).cos());
        s.axpy((omega * t).sin(), &b);
        s
    };
    let mut errs = Vec::new();
    for &n in &[21usize, 41] {
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let states: Vec<SpectralField> = times.iter().map(|&t| state(t)).collect();
        let truth = SampledTruth::new(times.clone(), states).unwrap();
        // max midpoint error
        let mut err: f64 = 0.0;
        for w in times.windows(2) {
            let tm = 0.5 * (w[0] + w[1]);
            let got = truth.at(tm).unwrap();
            err = err.max(got.sub(&state(tm)).max_coeff());
        }
        errs.push(err);
        // node values are exact
        let node = truth.at(times[3]).unwrap();
        assert!(node.sub(&state(times[3])).max_coeff() <= 1e-14);
    }
    let ratio = errs[0] / errs[1];
    assert!(ratio >= 6.0, "Hermite refinement ratio {ratio}, errs {errs:?}");
    // out-of-range lookup is an error
    let times: Vec<f64> = vec![0.0, 0.5, 1.0];
    let truth = SampledTruth::new(times, vec![a.clone(), b.clone(), a.clone()]).unwrap();
    assert!(truth.at(1.5).is_err());
}
