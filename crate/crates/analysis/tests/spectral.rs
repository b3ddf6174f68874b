//! Dense-analysis oracles: closed-form vertical spectrum, matrix-free
//! agreement, symmetry in the mass geometry, shift identities of the
//! perturbed operator, resolvent asymptotics and semigroup decay.

use std::f64::consts::PI;

use hydronudge::domain::{DomainSpec, Grid};
use hydronudge::operators::{NudgingParams, ObservationOperator, PerturbedStokes};
use hydronudge_analysis::{
    assemble, forced_integral_probe, resolvent_probe, semigroup_decay_probe, spectral_gap,
    OperatorKind, DEFAULT_DENSE_CAP,
};
use num_complex::Complex64;

fn grid(nx: usize, ny: usize, nz: usize) -> Grid {
    Grid::new(DomainSpec::new(1.0, nx, ny, nz).unwrap()).unwrap()
}

/// k = 0 only: tiny horizontal grid with everything but the mean dealiased.
fn k0_grid(nz: usize) -> Grid {
    let spec = DomainSpec {
        l: 1.0,
        lx: 2.0 * PI,
        ly: 2.0 * PI,
        nx: 4,
        ny: 4,
        nz,
        dealias: 0.1,
    };
    Grid::new(spec).unwrap()
}

#[test]
fn k0_stokes_block_matches_closed_form_spectrum() {
    let g = k0_grid(33);
    assert_eq!(g.active_modes.len(), 1);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let eigs = dense.eigenvalues().unwrap();
    // each vertical eigenvalue ((m+1/2) pi / l)^2 appears once per component
    for m in 0..=g.nz() / 2 {
        let exact = ((m as f64 + 0.5) * PI).powi(2);
        for comp in 0..2 {
            let got = eigs[2 * m + comp].re;
            assert!(
                ((got - exact) / exact).abs() <= 1e-3,
                "m={m}: {got} vs {exact}"
            );
        }
    }
    let lambda_min = eigs[0].re;
    assert!((lambda_min - 2.4674011002723395).abs() <= 1e-3 * lambda_min);
}

#[test]
fn assembled_matrix_agrees_with_matrix_free() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let dev = dense
        .action_agreement(&OperatorKind::Stokes, 20, 77)
        .unwrap();
    assert!(dev <= 1e-10, "stokes agreement {dev}");

    let obs = ObservationOperator::cube_average(&g, 2, 2, 2).unwrap();
    let p = PerturbedStokes::new(NudgingParams::new(15.0, obs.delta).unwrap(), obs);
    let dense_p = assemble(&g, OperatorKind::Perturbed(&p), DEFAULT_DENSE_CAP).unwrap();
    let dev_p = dense_p
        .action_agreement(&OperatorKind::Perturbed(&p), 20, 78)
        .unwrap();
    assert!(dev_p <= 1e-10, "perturbed agreement {dev_p}");
}

#[test]
fn stokes_symmetric_in_mass_geometry() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let defect = dense.symmetry_defect(&OperatorKind::Stokes).unwrap();
    assert!(defect <= 1e-9, "symmetry defect {defect}");
}

#[test]
fn stokes_spectrum_real_positive() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let eigs = dense.eigenvalues().unwrap();
    let min_re = eigs[0].re;
    assert!(min_re > 0.0, "min Re = {min_re}");
    for e in &eigs {
        assert!(e.im.abs() <= 1e-8 * e.norm(), "imaginary part {e}");
    }
    // slowest mode is the k = 0 vertical fundamental
    assert!((min_re - 2.4674011002723395).abs() <= 0.02 * min_re);
}

#[test]
fn perturbed_with_zero_mu_equals_stokes() {
    let g = grid(8, 8, 9);
    let obs = ObservationOperator::cube_average(&g, 2, 2, 2).unwrap();
    let p = PerturbedStokes::new(NudgingParams::new(0.0, obs.delta).unwrap(), obs);
    let a = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let b = assemble(&g, OperatorKind::Perturbed(&p), DEFAULT_DENSE_CAP).unwrap();
    let diff = (&a.matrix - &b.matrix).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert_eq!(diff, 0.0);
}

#[test]
fn gap_identity_observation_is_pure_shift() {
    let g = grid(8, 8, 9);
    let mu = 13.0;
    let sweeps = vec![
        (0.0, ObservationOperator::identity()),
        (mu, ObservationOperator::identity()),
    ];
    let reports = spectral_gap(&g, &sweeps, DEFAULT_DENSE_CAP).unwrap();
    assert!(reports[0].margin.abs() <= 1e-10);
    assert!(
        (reports[1].margin - mu).abs() <= 1e-8,
        "shift margin {}",
        reports[1].margin
    );
    assert!(reports[1].max_imag <= 1e-8);
}

#[test]
fn cap_is_enforced() {
    let g = grid(8, 8, 9);
    assert!(matches!(
        assemble(&g, OperatorKind::Stokes, 10),
        Err(hydronudge_analysis::AnalysisError::CapExceeded(_, 10))
    ));
}

#[test]
fn resolvent_negative_axis_asymptotics() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let lambda_min = dense.eigenvalues().unwrap()[0].re;
    // (lambda - A) psi = f with lambda = -r: psi = -(r + A)^{-1} f,
    // |lambda| ||psi|| / ||f|| -> 1 as r -> infinity
    let lambdas: Vec<Complex64> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&s| Complex64::new(-s * lambda_min, 0.0))
        .collect();
    let rows = resolvent_probe(&dense, &lambdas, 5, 5).unwrap();
    for r in &rows {
        assert!(!r.skipped);
        assert!(r.ratio_resolvent.is_finite() && r.ratio_h2.is_finite());
        // exact scalar bound: |lambda| / (|lambda| + lambda_min) <= ratio < 1
        assert!(r.ratio_resolvent < 1.0 + 1e-9);
    }
    let last = rows.last().unwrap();
    assert!(
        (last.ratio_resolvent - 1.0).abs() <= 0.05,
        "ratio at |lambda| = 100 lambda_min: {}",
        last.ratio_resolvent
    );
}

#[test]
fn resolvent_at_origin_and_on_ray() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let lambda_min = dense.eigenvalues().unwrap()[0].re;
    // lambda = 0: invertibility, finite H2 ratio
    let rows = resolvent_probe(&dense, &[Complex64::new(0.0, 0.0)], 5, 6).unwrap();
    assert!(!rows[0].skipped && rows[0].ratio_h2.is_finite());
    // ray arg = 3 pi / 4
    let ray: Vec<Complex64> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&s| Complex64::from_polar(s * lambda_min, 3.0 * PI / 4.0))
        .collect();
    let rows = resolvent_probe(&dense, &ray, 5, 7).unwrap();
    for r in rows {
        assert!(!r.skipped && r.ratio_resolvent.is_finite());
    }
}

#[test]
fn resolvent_diagonal_on_eigenfunction() {
    let g = k0_grid(17);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let (vals, vecs, _) = dense.eigendecomposition().unwrap();
    // pick the slowest eigenpair; psi = f / (lambda - lambda_eig)
    let idx = (0..vals.len())
        .min_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap())
        .unwrap();
    let lam_eig = vals[idx];
    let f: Vec<Complex64> = (0..dense.n()).map(|r| vecs[[r, idx]]).collect();
    let lam = Complex64::new(-3.0, 0.0);
    // solve directly: (lam I - M) psi = f
    let n = dense.n();
    let mut m = ndarray::Array2::<Complex64>::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            m[[r, c]] = Complex64::new(-dense.matrix[[r, c]], 0.0);
        }
        m[[r, r]] += lam;
    }
    use ndarray_linalg::Solve;
    let psi = m.solve(&ndarray::Array1::from_vec(f.clone())).unwrap();
    let scale = 1.0 / (lam - lam_eig);
    for r in 0..n {
        let expect = f[r] * scale;
        assert!(
            (psi[r] - expect).norm() <= 1e-9 * scale.norm(),
            "row {r}"
        );
    }
}

#[test]
fn semigroup_theta_zero_is_pure_exponential_on_eigenmode() {
    let g = k0_grid(17);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let (vals, vecs, vinv) = dense.eigendecomposition().unwrap();
    let idx = (0..vals.len())
        .min_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap())
        .unwrap();
    let lam = vals[idx];
    let f: ndarray::Array1<Complex64> = (0..dense.n()).map(|r| vecs[[r, idx]]).collect();
    use ndarray_linalg::Norm;
    for &t in &[0.1, 0.5, 1.0] {
        // e^{-tA} f through the eigendecomposition used by the probes
        let coeffs = vinv.dot(&f);
        let weights: ndarray::Array1<Complex64> = vals
            .iter()
            .zip(coeffs.iter())
            .map(|(l, c)| (-(l * t)).exp() * c)
            .collect();
        let x = vecs.dot(&weights);
        let expect = ((-lam * t).exp()).norm() * f.norm_l2();
        assert!(
            (x.norm_l2() - expect).abs() <= 1e-9 * expect,
            "t = {t}"
        );
    }
}

#[test]
fn semigroup_probe_finite_and_transient_bounded() {
    let g = grid(8, 8, 9);
    let obs = ObservationOperator::cube_average(&g, 2, 2, 2).unwrap();
    let p = PerturbedStokes::new(NudgingParams::new(8.0, obs.delta).unwrap(), obs);
    let dense = assemble(&g, OperatorKind::Perturbed(&p), DEFAULT_DENSE_CAP).unwrap();
    let t_grid: Vec<f64> = (1..=12).map(|i| 0.02 * i as f64).collect();
    let report = semigroup_decay_probe(&dense, &[0.0, 0.5, 1.0], &t_grid, 5, 11).unwrap();
    assert!(report.abscissa > 0.0);
    for row in &report.rows {
        assert!(
            row.sup_ratio.is_finite() && row.sup_ratio > 0.0,
            "theta {} ratio {}",
            row.theta,
            row.sup_ratio
        );
    }
    // semigroup positivity with a modest transient constant
    assert!(
        report.transient_c <= 1.05,
        "transient constant {}",
        report.transient_c
    );
}

#[test]
fn forced_integral_decays_with_bound_shape() {
    let g = grid(8, 8, 9);
    let dense = assemble(&g, OperatorKind::Stokes, DEFAULT_DENSE_CAP).unwrap();
    let abscissa = dense.eigenvalues().unwrap()[0].re;
    let gamma = abscissa; // between mu*/2 and 2 mu*
    let t_grid: Vec<f64> = (1..=14).map(|i| 0.15 * i as f64).collect();
    let report = forced_integral_probe(&dense, 0.25, gamma, &t_grid, 13).unwrap();
    assert!(report.c_fit.is_finite() && report.c_fit > 0.0);
    // the ratio ||phi|| / shape must not grow in the tail: the late maximum
    // stays within a modest factor of the global fitted constant
    let n = report.points.len();
    let late_max = report.points[2 * n / 3..]
        .iter()
        .map(|(_, nrm, shape)| nrm / shape)
        .fold(0.0f64, f64::max);
    assert!(
        late_max <= 1.02 * report.c_fit,
        "late ratio {late_max} vs fit {}",
        report.c_fit
    );
}
