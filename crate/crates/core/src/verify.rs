//! The operator property suite behind `verify-ops`: each check evaluates one
//! contract of the spatial operators at the given resolution and reports the
//! measured residual against its tolerance.

use crate::domain::{random_smooth, DomainSpec, Grid, PhysicalField};
use crate::error::Result;
use crate::operators::{
    bc_residual, estimate_observation_constants, hydrostatic_projection, mean_divergence_residual,
    prepare_state, project_bc, vertical_velocity, NudgingParams, ObservationOperator,
    PerturbedStokes,
};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &'static str, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            measured,
            tolerance,
            pass: measured.is_finite() && measured <= tolerance,
        }
    }
}

/// Run the operator property suite. `seed` controls the random sample fields.
pub fn run_operator_suite(grid: &Grid, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let nsamples = 5;

    // transform round-trip
    let mut worst = 0.0f64;
    for s in 0..nsamples {
        let f = grid.to_physical(&random_smooth(grid, 2, seed + s, 0.5))?;
        let back = grid.to_physical(&grid.to_spectral(&f)?)?;
        let err = back.sub(&f).max_abs() / f.max_abs().max(1e-300);
        worst = worst.max(err);
    }
    out.push(CheckResult::new("transform round-trip (relative sup)", worst, 1e-11));

    // projection idempotence and contraction
    let mut idem = 0.0f64;
    let mut contract = 0.0f64;
    let mut mean_div = 0.0f64;
    for s in 0..nsamples {
        let f = random_smooth(grid, 2, seed + 10 + s, 0.5);
        let p = hydrostatic_projection(grid, &f)?;
        let pp = hydrostatic_projection(grid, &p)?;
        let nf = grid.parseval_l2_sq(&f).sqrt();
        idem = idem.max(pp.sub(&p).max_coeff() / f.max_coeff().max(1e-300));
        contract = contract.max(grid.parseval_l2_sq(&p).sqrt() / nf - 1.0);
        mean_div = mean_div.max(mean_divergence_residual(grid, &p) / nf);
    }
    out.push(CheckResult::new("projection idempotence", idem, 1e-11));
    out.push(CheckResult::new("projection contraction excess", contract, 1e-12));
    out.push(CheckResult::new("projected mean divergence", mean_div, 1e-11));

    // vertical velocity boundary values
    let mut w_bottom = 0.0f64;
    let mut w_top = 0.0f64;
    for s in 0..nsamples {
        let v = hydrostatic_projection(grid, &random_smooth(grid, 2, seed + 20 + s, 0.5))?;
        let w = vertical_velocity(grid, &v)?;
        let wp = grid.to_physical(&w)?;
        let scale = wp.max_abs().max(1e-300);
        let h1 = grid.sobolev_norm(&v, 1.0, 2.0)?;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                w_bottom = w_bottom.max(wp.values[[0, i, j, grid.nz() - 1]].abs() / scale);
                w_top = w_top.max(wp.values[[0, i, j, 0]].abs() / h1.max(1e-300));
            }
        }
    }
    out.push(CheckResult::new("w(-l) = 0 (relative)", w_bottom, 1e-14));
    out.push(CheckResult::new("|w(0)| / ||v||_H1 after projection", w_top, 1e-10));

    // tau boundary enforcement
    let mut bc_idem = 0.0f64;
    let mut bc_resid = 0.0f64;
    for s in 0..nsamples {
        let v = random_smooth(grid, 2, seed + 30 + s, 0.4);
        let p = project_bc(grid, &v)?;
        let pp = project_bc(grid, &p)?;
        bc_idem = bc_idem.max(pp.sub(&p).max_coeff() / p.max_coeff().max(1e-300));
        bc_resid = bc_resid.max(bc_residual(grid, &p));
    }
    out.push(CheckResult::new("tau BC enforcement residual", bc_resid, 1e-12));
    out.push(CheckResult::new("tau BC idempotence", bc_idem, 1e-12));

    // observation operators: J bounds of the approximation inequality,
    // C_approx stability under horizontal refinement, decomposition identity
    let mut samples: Vec<PhysicalField> = (0..12)
        .map(|s| grid.to_physical(&random_smooth(grid, 2, seed + 40 + s, 0.5)))
        .collect::<Result<_>>()?;
    // a constant sample realizes the sup ||Jf||/||f|| = 1 (and is skipped for
    // C_approx as a degenerate zero-gradient sample)
    samples.push(PhysicalField::from_fn(grid, 2, |_, _, _, _| 1.0));
    let fine_spec = DomainSpec {
        nx: grid.nx() * 2,
        ny: grid.ny() * 2,
        ..grid.spec.clone()
    };
    let fine = Grid::new(fine_spec)?;
    let mut fine_samples: Vec<PhysicalField> = (0..12)
        .map(|s| fine.to_physical(&random_smooth(&fine, 2, seed + 40 + s, 0.5)))
        .collect::<Result<_>>()?;
    fine_samples.push(PhysicalField::from_fn(&fine, 2, |_, _, _, _| 1.0));

    let cube = ObservationOperator::cube_average(grid, 4, 4, 4)?;
    let cube_fine = ObservationOperator::cube_average(&fine, 4, 4, 4)?;
    let (c_bound, c_approx) = estimate_observation_constants(grid, &cube, &samples, 2.0)?;
    let (_, c_approx_fine) = estimate_observation_constants(&fine, &cube_fine, &fine_samples, 2.0)?;
    out.push(CheckResult::new(
        "cube C_bound deviation from 1 (q=2)",
        (c_bound - 1.0).abs(),
        1e-10,
    ));
    out.push(CheckResult::new(
        "cube C_approx refinement drift",
        (c_approx_fine / c_approx - 1.0).abs(),
        0.2,
    ));

    let lp = ObservationOperator::fourier_lowpass(grid, 0.9)?;
    let (lp_bound, _) = estimate_observation_constants(grid, &lp, &samples, 2.0)?;
    out.push(CheckResult::new(
        "lowpass C_bound deviation from 1 (q=2)",
        (lp_bound - 1.0).abs(),
        1e-10,
    ));

    // every smooth sample obeys ||Jf - f|| <= C_approx delta ||grad f||
    let mut bound_excess = 0.0f64;
    for f in &samples {
        let jf = cube.apply_physical(grid, f)?;
        let err = grid.lebesgue_norm(&jf.sub(f), 2.0)?;
        let gradn = grid.gradient_norm(&grid.to_spectral(f)?, 2.0)?;
        bound_excess = bound_excess.max(err / (c_approx * cube.delta * gradn) - 1.0);
    }
    out.push(CheckResult::new(
        "observation bound excess over C_approx",
        bound_excess,
        1e-12,
    ));

    // perturbed decomposition identity on projected states
    let mut decomp = 0.0f64;
    for (mu, obs) in [(5.0, cube.clone()), (40.0, lp.clone())] {
        let op = PerturbedStokes::new(NudgingParams::new(mu, obs.delta)?, obs);
        let v = prepare_state(grid, &random_smooth(grid, 2, seed + 60, 0.5))?;
        let a = op.apply(grid, &v)?;
        let b = op.apply_decomposed(grid, &v)?;
        decomp = decomp.max(a.sub(&b).max_coeff() / a.max_coeff().max(1e-300));
    }
    out.push(CheckResult::new("K-decomposition identity", decomp, 1e-12));

    // cube self-adjointness in the quadrature inner product
    let adj;
    {
        let f = grid.to_physical(&random_smooth(grid, 1, seed + 70, 0.5))?;
        let h = grid.to_physical(&random_smooth(grid, 1, seed + 71, 0.5))?;
        let jf = cube.apply_physical(grid, &f)?;
        let jh = cube.apply_physical(grid, &h)?;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    let w = grid.hq_weight * grid.zq_weights[k];
                    lhs += w * jf.values[[0, i, j, k]] * h.values[[0, i, j, k]];
                    rhs += w * f.values[[0, i, j, k]] * jh.values[[0, i, j, k]];
                }
            }
        }
        adj = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
    }
    out.push(CheckResult::new("cube-average self-adjointness", adj, 1e-11));

    // Parseval: quadrature L2 vs the coefficient mass form
    let mut parseval = 0.0f64;
    for s in 0..nsamples {
        let v = random_smooth(grid, 2, seed + 80 + s, 1.3);
        let quad = grid.lebesgue_norm(&grid.to_physical(&v)?, 2.0)?.powi(2);
        let coef = grid.parseval_l2_sq(&v);
        parseval = parseval.max((quad - coef).abs() / coef.max(1e-300));
    }
    out.push(CheckResult::new("Parseval (quadrature vs mass form)", parseval, 1e-10));

    Ok(out)
}

/// Render the suite as a pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<44} {:>12} {:>10} {:>6}\n",
        "check", "measured", "tolerance", "status"
    ));
    for r in results {
        s.push_str(&format!(
            "{:<44} {:>12.3e} {:>10.1e} {:>6}\n",
            r.name,
            r.measured,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    s
}
