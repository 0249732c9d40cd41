//! Solver trajectories against closed-form and brute-force references.

use dcreg_core::icnn::{Activation, DcEvaluator, DcRegularizer, IcnnParams};
use dcreg_core::linops::{op_norm, LinearOp};
use dcreg_core::rng::Rng;
use dcreg_core::solve::{
    check_dca_rate, check_monotone, check_psm_rates, solve_dca, solve_gd, solve_psm, Constants,
    Inner, NullStopwatch, Objective, SolverConfig, Term, X0,
};
use dcreg_oracle::grid::{grid_min, GridSpec};
use dcreg_oracle::prox::ista_iterates;

#[test]
fn psm_in_l1_mode_is_ista() {
    // 5-d lasso; every iterate must match the closed-form soft-threshold
    // recursion to 1e-8 over 100 iterations.
    let (m, d) = (7, 5);
    let mut rng = Rng::new(31);
    let a: Vec<f64> = (0..m * d).map(|_| rng.normal() * 0.5).collect();
    let op = LinearOp::dense(m, d, a.clone()).unwrap();
    let y: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
    let lam = 0.15;

    let norm = op_norm(&op, 300).unwrap();
    let consts = Constants::new(norm, 0.0, 0.0);
    let alpha = 1.0 / consts.a2_safe;

    let obj = Objective::new(&op, &y, Term::L1, Term::Zero, lam).unwrap();
    let x0 = vec![0.0; d];
    let reference = ista_iterates(&a, m, d, &y, lam, alpha, &x0, 100);

    for t in 1..=100usize {
        let cfg = SolverConfig::psm(t, 1).with_alpha(alpha);
        let trace = solve_psm(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
        let want = &reference[t];
        for i in 0..d {
            assert!(
                (trace.x[i] - want[i]).abs() < 1e-8,
                "iterate {t}, coord {i}: {} vs {}",
                trace.x[i],
                want[i]
            );
        }
    }
}

#[test]
fn l1_minus_l2_objective_reaches_grid_minimum() {
    // d = 2 sparse-recovery toy: final DCA objective must reach (or beat,
    // up to 1e-6) the exhaustive 2001^2 grid minimum over [-3, 3]^2.
    let op = LinearOp::identity(2);
    let consts = Constants::new(1.0, 0.0, 0.0);
    let mut rng = Rng::new(44);
    for trial in 0..3 {
        let y = [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)];
        for &mu in &[0.1, 0.5, 1.0] {
            let obj = Objective::new(&op, &y, Term::L1, Term::EuclideanNorm, mu).unwrap();
            let cfg = SolverConfig::dca(60, 1)
                .with_inner(Inner::ToTol {
                    tol: 1e-12,
                    max_iters: 10_000,
                })
                .with_x0(X0::Custom(y.to_vec()));
            let trace = solve_dca(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
            let f_dca = obj.f(&trace.x).unwrap();

            let spec = GridSpec::square(-3.0, 3.0, 2001);
            let (_, f_grid) = grid_min(
                |p| {
                    let dx = p[0] - y[0];
                    let dy = p[1] - y[1];
                    let l1 = p[0].abs() + p[1].abs();
                    let l2 = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    0.5 * (dx * dx + dy * dy) + mu * (l1 - l2)
                },
                &spec,
            );
            assert!(
                f_dca <= f_grid + 1e-6,
                "trial {trial}, mu {mu}: dca {f_dca} vs grid {f_grid}"
            );
        }
    }
}

#[test]
fn grid_oracle_sees_one_sparse_zeros_of_l1_minus_l2() {
    // zeros of ||x||_1 - ||x||_2 on the grid are exactly the axis points
    let spec = GridSpec::square(-3.0, 3.0, 401);
    let mut zero_count = 0usize;
    let mut off_axis_zero = false;
    let n = 401;
    for i in 0..n {
        let x = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let y = -3.0 + 6.0 * j as f64 / (n - 1) as f64;
            let v = x.abs() + y.abs() - (x * x + y * y).sqrt();
            if v < 1e-12 {
                zero_count += 1;
                if x.abs() > 1e-12 && y.abs() > 1e-12 {
                    off_axis_zero = true;
                }
            }
        }
    }
    assert!(zero_count > 0);
    assert!(!off_axis_zero, "found a zero away from the axes");
    let (xmin, fmin) = grid_min(
        |p| p[0].abs() + p[1].abs() - (p[0] * p[0] + p[1] * p[1]).sqrt(),
        &spec,
    );
    assert!(fmin.abs() < 1e-12);
    assert!(xmin[0].abs() < 1e-12 || xmin[1].abs() < 1e-12);
}

#[test]
fn dca_rate_certificate_with_analytic_floor() {
    // r1 = (ρ1/2)||x||², r2 = (ρ2/2)||x||², ρ1 > ρ2: F is an explicit
    // quadratic with a closed-form minimum, so the certificate can be
    // checked against the true gap rather than the trace floor.
    let d = 6;
    let mut rng = Rng::new(3);
    let op = LinearOp::identity(d);
    let y: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let (rho1, rho2, mu) = (0.8, 0.3, 1.0);
    let obj = Objective::new(
        &op,
        &y,
        Term::SqHalf { rho: rho1 },
        Term::SqHalf { rho: rho2 },
        mu,
    )
    .unwrap();
    let consts = Constants::new(1.0, rho1, rho2);
    let cfg = SolverConfig::dca(80, 1).with_inner(Inner::exact());
    let trace = solve_dca(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();

    // analytic minimum of ½||x - y||² + (μΔ/2)||x||²
    let delta = mu * (rho1 - rho2);
    let xstar: Vec<f64> = y.iter().map(|v| v / (1.0 + delta)).collect();
    let f_star = obj.f(&xstar).unwrap();

    let rep = check_dca_rate(&trace, mu * rho1, consts.a2_safe);
    assert!(rep.pass, "lhs {} rhs {}", rep.lhs, rep.rhs);
    // the analytic-floor form is weaker than the trace-floor form
    let rhs_analytic = rep.constant * (trace.f0() - f_star) / rep.steps as f64;
    assert!(rep.lhs <= rhs_analytic + 1e-12);
    assert!(rhs_analytic >= rep.rhs - 1e-12);
}

#[test]
fn dca_certificate_on_softplus_networks() {
    // run-and-check on a learned-style objective: monotone decrease, the
    // surrogate majorization and the averaged rate, in exact-inner mode.
    let d = 8;
    let r1 = IcnnParams::new_random(d, 6, 2, Activation::Softplus { beta: 1.0 }, 61).unwrap();
    let r2 = IcnnParams::new_random(d, 6, 2, Activation::Softplus { beta: 1.0 }, 62).unwrap();
    let reg = DcRegularizer::dc(r1.clone(), r2.clone()).unwrap();
    let ev = DcEvaluator::new(&reg).unwrap();

    let mut rng = Rng::new(8);
    let a: Vec<f64> = (0..d * d).map(|_| rng.normal() * 0.4).collect();
    let op = LinearOp::dense(d, d, a).unwrap();
    let y: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mu = 0.2;

    let obj = Objective::new(
        &op,
        &y,
        Term::Net(&ev.e1),
        Term::Net(ev.e2.as_ref().unwrap()),
        mu,
    )
    .unwrap();

    let norm = op_norm(&op, 300).unwrap();
    let lo = vec![-3.0; d];
    let hi = vec![3.0; d];
    let l1 = dcreg_core::icnn::estimate_smoothness(&r1, &lo, &hi, 400, 5).unwrap();
    let consts = Constants::new(norm, l1.l_hat, 0.0);

    let cfg = SolverConfig::dca(60, 1)
        .with_inner(Inner::exact())
        .with_diagnostics();
    let trace = solve_dca(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
    assert!(trace.aborted.is_none());
    assert!(check_monotone(&trace, 1e-8));

    for (t, diag) in trace.dca_diag.iter().enumerate() {
        let scale = 1.0f64.max(diag.f_at_cur.abs());
        assert!(
            (diag.q_at_cur - diag.f_at_cur).abs() <= 1e-10 * scale,
            "step {t}: q(x_t;x_t) {} vs F(x_t) {}",
            diag.q_at_cur,
            diag.f_at_cur
        );
        assert!(
            diag.q_at_next >= diag.f_at_next - 1e-10 * scale,
            "step {t}: q {} under F {}",
            diag.q_at_next,
            diag.f_at_next
        );
    }

    let rep = check_dca_rate(&trace, mu * l1.l_hat, consts.a2_safe);
    assert!(rep.pass, "lhs {} rhs {}", rep.lhs, rep.rhs);
}

#[test]
fn psm_certificates_on_softplus_networks() {
    let d = 8;
    let r1 = IcnnParams::new_random(d, 6, 2, Activation::Softplus { beta: 1.0 }, 71).unwrap();
    let r2 = IcnnParams::new_random(d, 6, 2, Activation::Softplus { beta: 1.0 }, 72).unwrap();
    let reg = DcRegularizer::dc(r1.clone(), r2.clone()).unwrap();
    let ev = DcEvaluator::new(&reg).unwrap();

    let mut rng = Rng::new(18);
    let a: Vec<f64> = (0..d * d).map(|_| rng.normal() * 0.4).collect();
    let op = LinearOp::dense(d, d, a).unwrap();
    let y: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mu = 0.2;

    let obj = Objective::new(
        &op,
        &y,
        Term::Net(&ev.e1),
        Term::Net(ev.e2.as_ref().unwrap()),
        mu,
    )
    .unwrap();

    let norm = op_norm(&op, 300).unwrap();
    let lo = vec![-3.0; d];
    let hi = vec![3.0; d];
    let l1 = dcreg_core::icnn::estimate_smoothness(&r1, &lo, &hi, 400, 5).unwrap();
    let l2 = dcreg_core::icnn::estimate_smoothness(&r2, &lo, &hi, 400, 6).unwrap();
    let consts = Constants::new(norm, l1.l_hat, l2.l_hat);
    let alpha = 1.0 / consts.a2_safe;

    let cfg = SolverConfig::psm(60, 1).with_inner(Inner::exact_prox());
    let trace = solve_psm(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
    assert!(trace.aborted.is_none());
    assert!(check_monotone(&trace, 1e-8));

    let rep = check_psm_rates(&trace, mu * l2.l_hat, consts.a2_safe, alpha);
    assert!(rep.part1.pass, "part1 {:?}", rep.part1);
    assert!(rep.part2.pass, "part2 {:?}", rep.part2);
    assert!(
        rep.min_decrease_margin >= -1e-8,
        "margin {}",
        rep.min_decrease_margin
    );
}

#[test]
fn stationarity_improves_as_the_budget_doubles() {
    let d = 4;
    let r1 = IcnnParams::new_random(d, 5, 2, Activation::Softplus { beta: 1.0 }, 81).unwrap();
    let r2 = IcnnParams::new_random(d, 5, 2, Activation::Softplus { beta: 1.0 }, 82).unwrap();
    let reg = DcRegularizer::dc(r1, r2).unwrap();
    let ev = DcEvaluator::new(&reg).unwrap();
    let mut rng = Rng::new(12);
    let a: Vec<f64> = (0..d * d).map(|_| rng.normal() * 0.5).collect();
    let op = LinearOp::dense(d, d, a).unwrap();
    let y: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let obj = Objective::new(
        &op,
        &y,
        Term::Net(&ev.e1),
        Term::Net(ev.e2.as_ref().unwrap()),
        0.3,
    )
    .unwrap();
    let norm = op_norm(&op, 200).unwrap();
    let consts = Constants::new(norm, 2.0, 2.0);

    let min_grad = |t: usize| -> f64 {
        let cfg = SolverConfig::dca(t, 3);
        let trace = solve_dca(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
        trace
            .entries
            .iter()
            .fold(f64::INFINITY, |m, e| m.min(e.grad_norm))
    };
    let g25 = min_grad(25);
    let g50 = min_grad(50);
    let g100 = min_grad(100);
    assert!(g50 <= g25, "{g50} vs {g25}");
    assert!(g100 <= g50, "{g100} vs {g50}");
    assert!(g100 < g25, "no progress from 25 to 100: {g100} vs {g25}");
}

#[test]
fn gd_on_dc_objective_is_reproducible_and_decreasing_with_auto_step() {
    let d = 5;
    let r1 = IcnnParams::new_random(d, 4, 2, Activation::Softplus { beta: 1.0 }, 91).unwrap();
    let reg = DcRegularizer::weakly_convex(r1.clone(), 0.4).unwrap();
    let ev = DcEvaluator::new(&reg).unwrap();
    let op = LinearOp::identity(d);
    let y = vec![0.4, -0.2, 0.9, 0.0, -1.1];
    let obj = Objective::new(&op, &y, Term::Net(&ev.e1), Term::SqHalf { rho: 0.4 }, 0.5).unwrap();
    let lo = vec![-2.0; d];
    let hi = vec![2.0; d];
    let l1 = dcreg_core::icnn::estimate_smoothness(&r1, &lo, &hi, 200, 3).unwrap();
    let consts = Constants::new(1.0, l1.l_hat, 0.4);
    let cfg = SolverConfig::gd(120);
    let t1 = solve_gd(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
    let t2 = solve_gd(&obj, &cfg, &consts, &mut NullStopwatch).unwrap();
    assert_eq!(t1.x, t2.x);
    assert!(t1.final_f() < t1.f0());
}
