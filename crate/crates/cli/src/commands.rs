//! Subcommand implementations: train, solve, bench, stargeom, ablate.
//!
//! Each command resolves one `RunConfig`, runs the corresponding workflow
//! from `dcreg-core`, and writes its outputs plus a manifest into the output
//! directory. All randomness flows from config seeds; with the default zero
//! timing source, re-running a manifest reproduces every file bit for bit.

use crate::config::{ProblemCfg, RunConfig};
use crate::formats::{write_checkpoint, write_pgm, write_vec, Csv, CsvField};
use crate::manifest::{file_hash, Manifest};
use crate::{CliError, CliResult};
use dcreg_core::bench::{
    ct_case, ct_training_source, ct_val_scorer, gen_spiral, run_ct_ablation, run_ct_experiment,
    AblateAxis, CtExperimentCfg, MuRule, PhantomKind, RegClass, SolverBudget, SpiralStudyCfg,
};
use dcreg_core::icnn::{DcEvaluator, DcMode, DcRegularizer};
use dcreg_core::linops::{build_radon, op_norm, RadonGeometry};
use dcreg_core::solve::{
    check_dca_rate, check_monotone, check_psm_rates, solve_dca, solve_gd, solve_psm, Algo,
    Constants, Inner, NullStopwatch, Objective, SolverConfig, SolverTrace, Stopwatch, Term, X0,
};
use dcreg_core::stargeom::{
    dc_witness_check, gauge_field, harmonic_combination, mixed_volume_bound,
    optimal_body_perturbation_check, optimal_star_body, Gaussian2, QuadCfg, RadialDensity,
    StarBody,
};
use dcreg_core::train::{train, SampleSource};
use std::path::Path;

struct RealStopwatch(std::time::Instant);

impl Stopwatch for RealStopwatch {
    fn elapsed_ms(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn stopwatch_for(cfg: &RunConfig) -> CliResult<Box<dyn Stopwatch>> {
    match cfg.output.timing.as_str() {
        "zero" => Ok(Box::new(NullStopwatch)),
        "real" => Ok(Box::new(RealStopwatch(std::time::Instant::now()))),
        other => Err(CliError::config(format!(
            "output.timing must be `zero` or `real`, got `{other}`"
        ))),
    }
}

fn reg_class(cfg: &RunConfig) -> CliResult<RegClass> {
    match cfg.regularizer.mode.as_str() {
        "dc" => Ok(RegClass::Dc),
        "convex" => Ok(RegClass::ConvexOnly),
        "weakly-convex" => Ok(RegClass::WeaklyConvex),
        other => Err(CliError::config(format!(
            "unknown regularizer mode `{other}` (expected dc, convex or weakly-convex)"
        ))),
    }
}

fn geometry(p: &ProblemCfg) -> CliResult<RadonGeometry> {
    let rays = if p.rays_per_angle == 0 {
        RadonGeometry::default_rays(p.image_size)
    } else {
        p.rays_per_angle
    };
    Ok(RadonGeometry::new(
        p.image_size,
        p.num_angles,
        rays,
        p.missing_wedge_deg,
    )?)
}

/// Maps a run configuration onto the CT experiment parameters.
pub fn ct_cfg(cfg: &RunConfig) -> CliResult<CtExperimentCfg> {
    let p = &cfg.problem;
    let s = &cfg.solver;
    let mu = match RunConfig::parse_auto(&s.mu, "solver.mu")? {
        None => MuRule::Auto,
        Some(v) => MuRule::Fixed(v),
    };
    Ok(CtExperimentCfg {
        geom: geometry(p)?,
        phantom_kind: PhantomKind::RandomEllipses,
        noise_rel: p.noise_rel,
        num_train: p.num_train,
        num_val: p.num_val,
        num_test: p.num_test,
        phantom_seed: p.data_seed,
        noise_seed: p.data_seed ^ 0x6e01_5e5e,
        ridge: p.ridge,
        mu,
        tv_mu: MuRule::Fixed(0.3),
        gd: SolverBudget {
            t: s.outer_iters,
            n: 1,
        },
        dca: SolverBudget {
            t: s.outer_iters,
            n: s.inner_iters,
        },
        psm: SolverBudget {
            t: s.outer_iters,
            n: s.psm_inner,
        },
        l_const: s.l_const,
    })
}

/// Maps a run configuration onto the spiral-study parameters.
pub fn spiral_study_cfg(cfg: &RunConfig) -> CliResult<SpiralStudyCfg> {
    Ok(SpiralStudyCfg {
        count: cfg.problem.spiral_count,
        sigma: cfg.problem.spiral_sigma,
        data_seed: cfg.problem.data_seed,
        width: cfg.regularizer.width,
        depth: cfg.regularizer.depth,
        activation: cfg.activation()?,
        rho: cfg.regularizer.rho,
        train: cfg.train_config()?,
        seeds: cfg.problem.study_seeds.clone(),
        grid: dcreg_core::bench::FitGrid {
            lo: -18.0,
            hi: 18.0,
            res: 49,
        },
        val_mu: 0.5,
        val_points: if cfg.train.use_val { 32 } else { 0 },
    })
}

fn build_reg(cfg: &RunConfig, input_dim: usize) -> CliResult<DcRegularizer> {
    Ok(dcreg_core::bench::build_regularizer(
        reg_class(cfg)?,
        input_dim,
        cfg.regularizer.width,
        cfg.regularizer.depth,
        cfg.activation()?,
        cfg.regularizer.rho,
        cfg.regularizer.init_seed,
    )?)
}

fn write_train_log(path: &Path, log: &[dcreg_core::train::EpochRow]) -> CliResult<()> {
    let mut csv = Csv::new(&["epoch", "loss", "clean-term", "noisy-term", "penalty-term", "val-psnr"]);
    for row in log {
        let val = row.val_psnr.map(|v| format!("{v}")).unwrap_or_default();
        csv.row(&[
            CsvField::U(row.epoch as u64),
            CsvField::F(row.loss),
            CsvField::F(row.clean_term),
            CsvField::F(row.noisy_term),
            CsvField::F(row.penalty_term),
            CsvField::S(&val),
        ]);
    }
    std::fs::write(path, csv.finish())?;
    Ok(())
}

/// Trains per the config and returns the selected regularizer plus its log.
pub fn train_pipeline(cfg: &RunConfig) -> CliResult<dcreg_core::train::TrainResult> {
    let tcfg = cfg.train_config()?;
    match cfg.problem.kind.as_str() {
        "spiral" => {
            let data = gen_spiral(
                cfg.problem.spiral_count,
                cfg.problem.spiral_sigma,
                cfg.problem.data_seed,
            )?;
            let src = SampleSource {
                clean: data.clean.iter().map(|p| p.to_vec()).collect(),
                noisy: data.noisy.iter().map(|p| p.to_vec()).collect(),
            };
            let reg0 = build_reg(cfg, 2)?;
            Ok(train(&reg0, &src, &tcfg, None)?)
        }
        "ct" => {
            let ccfg = ct_cfg(cfg)?;
            let (op, src) = ct_training_source(&ccfg)?;
            let reg0 = build_reg(cfg, ccfg.geom.n * ccfg.geom.n)?;
            if cfg.train.use_val {
                let a_norm = op_norm(&op, 120)?;
                let mu = match ccfg.mu {
                    MuRule::Fixed(v) => v,
                    MuRule::Auto => {
                        // the validation scorer needs a concrete weight before
                        // training finishes; derive it from the training pools
                        let mut acc = 0.0;
                        for (x_hat, i) in src.noisy.iter().zip(0..) {
                            let case = ct_case(&op, &ccfg, i)?;
                            let mut r = op.apply(x_hat);
                            for (ri, yi) in r.iter_mut().zip(&case.y) {
                                *ri -= yi;
                            }
                            acc += dcreg_core::la::norm2(&op.adjoint(&r));
                        }
                        acc / src.noisy.len().max(1) as f64
                    }
                };
                let mut scorer = ct_val_scorer(&op, &ccfg, mu, a_norm);
                Ok(train(&reg0, &src, &tcfg, Some(&mut scorer))?)
            } else {
                Ok(train(&reg0, &src, &tcfg, None)?)
            }
        }
        other => Err(CliError::config(format!(
            "unknown problem kind `{other}` (expected spiral or ct)"
        ))),
    }
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let result = train_pipeline(cfg)?;
    if let Some(reason) = &result.aborted {
        return Err(CliError::numerical(format!("training aborted: {reason}")));
    }

    let ckpt_path = out.join("checkpoint.bin");
    write_checkpoint(&ckpt_path, &result.reg)?;
    write_train_log(&out.join("train_log.csv"), &result.log)?;
    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;

    let mut m = Manifest::new("train", &cfg.hash());
    m.set("seed", cfg.train.seed);
    m.set("data_seed", cfg.problem.data_seed);
    m.set("init_seed", cfg.regularizer.init_seed);
    m.set("checkpoint_hash", file_hash(&ckpt_path)?);
    m.set("separation_holdout", result.separation_holdout);
    if let Some(e) = result.best_epoch {
        m.set("best_epoch", e);
    }
    m.write(&out.join("manifest.txt"))?;

    if result.separation_holdout < 0.0 {
        return Err(CliError::numerical(format!(
            "training failed: held-out separation is negative ({})",
            result.separation_holdout
        )));
    }
    Ok(())
}

fn write_trace_csv(path: &Path, trace: &SolverTrace) -> CliResult<()> {
    let mut csv = Csv::new(&["t", "F", "grad-norm", "step-norm", "time-ms"]);
    for e in &trace.entries {
        csv.row(&[
            CsvField::U(e.t as u64),
            CsvField::F(e.f),
            CsvField::F(e.grad_norm),
            CsvField::F(e.step_norm),
            CsvField::F(e.time_ms),
        ]);
    }
    std::fs::write(path, csv.finish())?;
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    if cfg.problem.kind != "ct" {
        return Err(CliError::config(
            "solve reconstructs ct problems; use `bench` for the spiral study",
        ));
    }
    if cfg.solver.checkpoint.is_empty() {
        return Err(CliError::missing(
            "solver.checkpoint is required (train first, then point at checkpoint.bin)",
        ));
    }
    let reg = crate::formats::read_checkpoint(Path::new(&cfg.solver.checkpoint))?;
    std::fs::create_dir_all(out)?;

    let ccfg = ct_cfg(cfg)?;
    let op = build_radon(&ccfg.geom)?;
    let n = ccfg.geom.n;
    if reg.input_dim() != n * n {
        return Err(CliError::config(format!(
            "checkpoint expects dimension {}, problem is {}x{}",
            reg.input_dim(),
            n,
            n
        )));
    }
    let case = ct_case(&op, &ccfg, ccfg.num_train + ccfg.num_val + cfg.solver.test_index)?;
    let a_norm = op_norm(&op, 120)?;

    let mu = match ccfg.mu {
        MuRule::Fixed(v) => v,
        MuRule::Auto => {
            let mut acc = 0.0;
            for i in 0..ccfg.num_train {
                let c = ct_case(&op, &ccfg, i)?;
                let mut r = op.apply(&c.pinv);
                for (ri, yi) in r.iter_mut().zip(&c.y) {
                    *ri -= yi;
                }
                acc += dcreg_core::la::norm2(&op.adjoint(&r));
            }
            acc / ccfg.num_train.max(1) as f64
        }
    };

    let ev = DcEvaluator::new(&reg)?;
    let smooth = reg.r1.layers.iter().all(|l| l.activation.is_smooth());
    let (l1_hat, l2_hat) = if smooth {
        let lo = vec![-0.2; n * n];
        let hi = vec![1.2; n * n];
        let l1 = dcreg_core::icnn::estimate_smoothness(&reg.r1, &lo, &hi, 60, 77)?.l_hat;
        let l2 = match (&reg.mode, &reg.r2) {
            (DcMode::Dc, Some(r2)) => {
                dcreg_core::icnn::estimate_smoothness(r2, &lo, &hi, 60, 78)?.l_hat
            }
            (DcMode::WeaklyConvex { rho }, _) => *rho,
            _ => 0.0,
        };
        (l1, l2)
    } else {
        (cfg.solver.l_const, cfg.solver.l_const)
    };
    let consts = Constants::new(a_norm, l1_hat, l2_hat);

    let algo = match cfg.solver.algorithm.as_str() {
        "gd" => Algo::Gd,
        "dca" => Algo::Dca,
        "psm" => Algo::Psm,
        other => {
            return Err(CliError::config(format!(
                "unknown algorithm `{other}` (expected gd, dca or psm)"
            )))
        }
    };
    let x0 = match cfg.solver.x0.as_str() {
        "pinv" => X0::Custom(case.pinv.clone()),
        "zeros" => X0::Zeros,
        other => {
            return Err(CliError::config(format!(
                "unknown x0 policy `{other}` (expected pinv or zeros)"
            )))
        }
    };
    let alpha_opt = RunConfig::parse_auto(&cfg.solver.alpha, "solver.alpha")?;

    let mut scfg = match algo {
        Algo::Gd => SolverConfig::gd(cfg.solver.outer_iters),
        Algo::Dca => {
            let mut c = SolverConfig::dca(cfg.solver.outer_iters, cfg.solver.inner_iters);
            if cfg.solver.exact_inner {
                c = c.with_inner(Inner::exact());
            }
            c.diagnostics = true;
            c
        }
        Algo::Psm => {
            // step precondition enforced at configuration time
            let alpha = alpha_opt.unwrap_or(1.0 / consts.a2_safe);
            let mut c = SolverConfig::psm_checked(
                cfg.solver.outer_iters,
                cfg.solver.psm_inner,
                alpha,
                consts.a2_safe,
            )?;
            if cfg.solver.exact_inner {
                c = c.with_inner(Inner::exact_prox());
            }
            c
        }
    };
    if let (Some(a), Algo::Gd | Algo::Dca) = (alpha_opt, algo) {
        scfg = scfg.with_alpha(a);
    }
    if cfg.solver.early_stop_rel > 0.0 {
        scfg = scfg.with_early_stop(cfg.solver.early_stop_rel);
    }
    scfg = scfg.with_x0(x0);

    let r2_term = match (&reg.mode, &ev.e2) {
        (DcMode::Dc, Some(e2)) => Term::Net(e2),
        (DcMode::WeaklyConvex { rho }, _) => Term::SqHalf { rho: *rho },
        _ => Term::Zero,
    };
    let obj = Objective::new(&op, &case.y, Term::Net(&ev.e1), r2_term, mu)?;

    let mut sw = stopwatch_for(cfg)?;
    let trace = match algo {
        Algo::Gd => solve_gd(&obj, &scfg, &consts, sw.as_mut())?,
        Algo::Dca => solve_dca(&obj, &scfg, &consts, sw.as_mut())?,
        Algo::Psm => solve_psm(&obj, &scfg, &consts, sw.as_mut())?,
    };
    if let Some(reason) = &trace.aborted {
        return Err(CliError::numerical(format!("solver aborted: {reason}")));
    }

    write_trace_csv(&out.join("trace.csv"), &trace)?;
    write_vec(
        &out.join("recon.f64"),
        &[n as u64, n as u64],
        &trace.x,
    )?;
    if cfg.output.write_images {
        write_pgm(&out.join("recon.pgm"), n, &trace.x)?;
        write_pgm(&out.join("truth.pgm"), n, &case.phantom.data)?;
        write_pgm(&out.join("pinv.pgm"), n, &case.pinv)?;
    }

    // certificate report
    let alpha_used = match (algo, alpha_opt) {
        (Algo::Psm, Some(a)) => a,
        (Algo::Psm, None) => 1.0 / consts.a2_safe,
        (_, Some(a)) => a,
        (_, None) => 1.0 / (consts.a2_safe + mu * l1_hat),
    };
    let mut report = String::new();
    report.push_str(&format!("algorithm = {}\n", cfg.solver.algorithm));
    report.push_str(&format!("alpha = {alpha_used}\n"));
    if algo == Algo::Psm {
        report.push_str(&format!("gamma = {}\n", 1.0 / alpha_used));
    }
    report.push_str(&format!("mu = {mu}\n"));
    report.push_str(&format!("a_norm_estimate = {a_norm}\n"));
    report.push_str(&format!("a2_safe = {}\n", consts.a2_safe));
    report.push_str(&format!("l1_hat = {l1_hat}\nl2_hat = {l2_hat}\n"));
    report.push_str(&format!("final_F = {}\n", trace.final_f()));
    report.push_str(&format!(
        "monotone_decrease = {}\n",
        check_monotone(&trace, 1e-8)
    ));
    match algo {
        Algo::Dca => {
            let rep = check_dca_rate(&trace, mu * l1_hat, consts.a2_safe);
            report.push_str(&format!(
                "dca_rate: lhs = {}, rhs = {}, pass = {}\n",
                rep.lhs, rep.rhs, rep.pass
            ));
        }
        Algo::Psm => {
            let rep = check_psm_rates(&trace, mu * l2_hat, consts.a2_safe, alpha_used);
            report.push_str(&format!(
                "psm_rate_part1: lhs = {}, rhs = {}, pass = {}\n",
                rep.part1.lhs, rep.part1.rhs, rep.part1.pass
            ));
            report.push_str(&format!(
                "psm_rate_part2: lhs = {}, rhs = {}, pass = {} (meaningful in softplus mode)\n",
                rep.part2.lhs, rep.part2.rhs, rep.part2.pass
            ));
            report.push_str(&format!(
                "psm_min_decrease_margin = {}\n",
                rep.min_decrease_margin
            ));
        }
        Algo::Gd => {}
    }
    // cumulative selection-gradient sum, recorded for qualitative inspection
    let grad_sum: f64 = trace.entries.iter().map(|e| e.grad_norm).sum();
    report.push_str(&format!("sum_grad_norms = {grad_sum}\n"));
    std::fs::write(out.join("report.txt"), report)?;

    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let mut m = Manifest::new("solve", &cfg.hash());
    m.set("data_seed", cfg.problem.data_seed);
    m.set("checkpoint_hash", file_hash(Path::new(&cfg.solver.checkpoint))?);
    m.set("alpha", alpha_used);
    m.set("mu", mu);
    m.write(&out.join("manifest.txt"))?;
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    match cfg.problem.kind.as_str() {
        "spiral" => {
            let study = spiral_study_cfg(cfg)?;
            let report = dcreg_core::bench::run_spiral_study(&study)?;
            let mut csv = Csv::new(&["class", "seed", "fit-error", "separation", "final-loss"]);
            for r in &report.runs {
                csv.row(&[
                    CsvField::S(r.class.label()),
                    CsvField::U(r.seed),
                    CsvField::F(r.fit_error),
                    CsvField::F(r.separation),
                    CsvField::F(r.final_loss),
                ]);
            }
            std::fs::write(out.join("fit.csv"), csv.finish())?;

            let mut summary = Csv::new(&["class", "median-fit-error"]);
            for class in [RegClass::ConvexOnly, RegClass::WeaklyConvex, RegClass::Dc] {
                summary.row(&[
                    CsvField::S(class.label()),
                    CsvField::F(report.median_fit(class)),
                ]);
            }
            std::fs::write(out.join("summary.csv"), summary.finish())?;

            std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
            let mut m = Manifest::new("bench-spiral", &cfg.hash());
            m.set("data_seed", cfg.problem.data_seed);
            m.write(&out.join("manifest.txt"))?;
            Ok(())
        }
        "ct" => {
            let ccfg = ct_cfg(cfg)?;
            let (reg, ckpt_hash) = if cfg.solver.checkpoint.is_empty() {
                let result = train_pipeline(cfg)?;
                if let Some(reason) = &result.aborted {
                    return Err(CliError::numerical(format!("training aborted: {reason}")));
                }
                let ckpt_path = out.join("checkpoint.bin");
                write_checkpoint(&ckpt_path, &result.reg)?;
                write_train_log(&out.join("train_log.csv"), &result.log)?;
                let h = file_hash(&ckpt_path)?;
                (result.reg, h)
            } else {
                let p = Path::new(&cfg.solver.checkpoint);
                (crate::formats::read_checkpoint(p)?, file_hash(p)?)
            };

            let report = run_ct_experiment(&reg, &ccfg)?;
            let mut csv = Csv::new(&["method", "psnr", "ssim"]);
            for row in &report.rows {
                csv.row(&[
                    CsvField::S(&row.method),
                    CsvField::F(row.psnr_mean()),
                    CsvField::F(row.ssim_mean()),
                ]);
            }
            std::fs::write(out.join("metrics.csv"), csv.finish())?;

            let mut per = Csv::new(&["method", "case", "psnr", "ssim"]);
            for row in &report.rows {
                for (i, (p, s)) in row.psnr.iter().zip(&row.ssim).enumerate() {
                    per.row(&[
                        CsvField::S(&row.method),
                        CsvField::U(i as u64),
                        CsvField::F(*p),
                        CsvField::F(*s),
                    ]);
                }
            }
            std::fs::write(out.join("metrics_per_case.csv"), per.finish())?;

            if cfg.output.write_images {
                for (name, img) in &report.sample_recons {
                    write_pgm(&out.join(format!("case0_{name}.pgm")), ccfg.geom.n, img)?;
                }
            }

            std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
            let mut m = Manifest::new("bench-ct", &cfg.hash());
            m.set("data_seed", cfg.problem.data_seed);
            m.set("checkpoint_hash", ckpt_hash);
            m.set("mu", report.mu);
            m.set("tv_mu", report.tv_mu);
            m.set("a_norm_estimate", report.a_norm);
            m.write(&out.join("manifest.txt"))?;
            Ok(())
        }
        other => Err(CliError::config(format!(
            "unknown problem kind `{other}` (expected spiral or ct)"
        ))),
    }
}

pub fn cmd_stargeom(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let s = &cfg.stargeom;
    if s.op != "demo" {
        return Err(CliError::config(format!(
            "unknown stargeom op `{}` (expected demo)",
            s.op
        )));
    }
    std::fs::create_dir_all(out)?;
    let m = s.grid_m;
    let quad = QuadCfg::default();

    // 1. box vs scaled l3 ball: build K, verify the DC witness
    let linf = StarBody::linf_ball(m, 1.0)?;
    let c = StarBody::lp_ball(m, 3.0, 1.8)?;
    let k = StarBody::from_radial_fn(m, |th| {
        let gm = 1.0 / linf.radial(th);
        let gc = 1.0 / c.radial(th);
        1.0 / (gm - gc)
    })?;
    let witness = dc_witness_check(&k, &c, s.alpha.max(1.0), 4000, s.seed)?;
    let m1 = harmonic_combination(&k, &c, s.alpha.max(1.0))?;

    let mut body_csv = Csv::new(&["angle", "radius-k", "radius-c", "radius-m"]);
    for j in 0..m {
        body_csv.row(&[
            CsvField::F(k.angle(j)),
            CsvField::F(k.radii()[j]),
            CsvField::F(c.radii()[j]),
            CsvField::F(m1.radii()[j]),
        ]);
    }
    std::fs::write(out.join("bodies.csv"), body_csv.finish())?;

    let mut wt = String::new();
    wt.push_str(&format!(
        "m_convex = {} (violations {})\n",
        witness.m_convex.passed(),
        witness.m_convex.violations
    ));
    wt.push_str(&format!(
        "c_convex = {} (violations {})\n",
        witness.c_convex.passed(),
        witness.c_convex.violations
    ));
    wt.push_str(&format!(
        "identity_max_rel_err = {}\n",
        witness.identity_max_rel_err
    ));
    std::fs::write(out.join("witness.txt"), wt)?;

    // 2. optimal body for a clean/noisy Gaussian pair + local minimality
    let pr = RadialDensity::Gaussian(Gaussian2::isotropic(s.clean_std)?);
    let pn = RadialDensity::Gaussian(Gaussian2::isotropic(s.noisy_std)?);
    let body = optimal_star_body(&pr, Some(&pn), s.alpha, 256, &quad, true)?;
    let mut ob = Csv::new(&["angle", "radius"]);
    for j in 0..body.m() {
        ob.row(&[CsvField::F(body.angle(j)), CsvField::F(body.radii()[j])]);
    }
    std::fs::write(out.join("optimal_body.csv"), ob.finish())?;
    let pert = optimal_body_perturbation_check(&body, s.alpha, 20, 0.01, s.seed)?;
    std::fs::write(
        out.join("optimality.txt"),
        format!(
            "base_objective = {}\nworst_drop = {}\npass = {}\n",
            pert.base_objective, pert.worst_drop, pert.pass
        ),
    )?;

    // 3. mixed-volume sweep over random pairs
    let mut rng = dcreg_core::rng::Rng::new(s.seed);
    let mut mv = Csv::new(&["pair", "lhs", "rhs", "rel-slack", "dilate"]);
    for pair in 0..s.lutwak_pairs {
        let body_of = |rng: &mut dcreg_core::rng::Rng| {
            let coeffs: Vec<(f64, f64)> = (0..4)
                .map(|_| (rng.range(-0.25, 0.25), rng.range(-0.25, 0.25)))
                .collect();
            StarBody::from_radial_fn(512, |th| {
                let mut acc = 0.0;
                for (kk, (a, b)) in coeffs.iter().enumerate() {
                    let f = (kk + 1) as f64;
                    acc += a * dcreg_core::fp::cos(f * th) + b * dcreg_core::fp::sin(f * th);
                }
                dcreg_core::fp::exp(acc)
            })
        };
        let cb = body_of(&mut rng)?;
        let kb = body_of(&mut rng)?;
        let b = mixed_volume_bound(&cb, &kb, s.alpha)?;
        mv.row(&[
            CsvField::U(pair as u64),
            CsvField::F(b.lhs),
            CsvField::F(b.rhs),
            CsvField::F(b.rel_slack),
            CsvField::S(if b.rel_slack.abs() <= 1e-6 { "yes" } else { "no" }),
        ]);
    }
    std::fs::write(out.join("mixed_volumes.csv"), mv.finish())?;

    // 4. contour field export for external plotting
    let field = gauge_field(&k, -3.0, 3.0, s.contour_res);
    let mut fc = String::new();
    for i in 0..s.contour_res {
        let row: Vec<String> = (0..s.contour_res)
            .map(|j| format!("{}", field[i * s.contour_res + j]))
            .collect();
        fc.push_str(&row.join(","));
        fc.push('\n');
    }
    std::fs::write(out.join("contour.csv"), fc)?;

    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let mut man = Manifest::new("stargeom", &cfg.hash());
    man.set("seed", s.seed);
    man.write(&out.join("manifest.txt"))?;
    Ok(())
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    if cfg.ablate.values.is_empty() {
        return Err(CliError::config("ablate.values is empty"));
    }
    if cfg.problem.kind != "ct" {
        return Err(CliError::config("ablation sweeps run on the ct problem"));
    }
    std::fs::create_dir_all(out)?;

    let ccfg = ct_cfg(cfg)?;
    let reg = if cfg.solver.checkpoint.is_empty() {
        let result = train_pipeline(cfg)?;
        if let Some(reason) = &result.aborted {
            return Err(CliError::numerical(format!("training aborted: {reason}")));
        }
        result.reg
    } else {
        crate::formats::read_checkpoint(Path::new(&cfg.solver.checkpoint))?
    };

    let mut values = cfg.ablate.values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite sweep values"));
    let axis = match cfg.ablate.axis.as_str() {
        "dca-inner" => AblateAxis::DcaInner(values.iter().map(|v| *v as usize).collect()),
        "psm-gamma-factor" => AblateAxis::PsmGammaFactor(values.clone()),
        other => {
            return Err(CliError::config(format!(
                "unknown ablation axis `{other}` (expected dca-inner or psm-gamma-factor)"
            )))
        }
    };

    let rows = run_ct_ablation(&reg, &ccfg, &axis)?;
    let mut csv = Csv::new(&["value", "psnr", "ssim", "config-hash"]);
    for row in &rows {
        // hash of this row's effective configuration
        let mut row_cfg = cfg.clone();
        match axis {
            AblateAxis::DcaInner(_) => row_cfg.solver.inner_iters = row.value as usize,
            AblateAxis::PsmGammaFactor(_) => {
                row_cfg.solver.alpha = format!("{}", row.value);
            }
        }
        csv.row(&[
            CsvField::F(row.value),
            CsvField::F(row.psnr_mean),
            CsvField::F(row.ssim_mean),
            CsvField::S(&row_cfg.hash()),
        ]);
    }
    std::fs::write(out.join("ablate.csv"), csv.finish())?;

    std::fs::write(out.join("config.resolved.toml"), cfg.to_toml())?;
    let mut m = Manifest::new("ablate", &cfg.hash());
    m.set("axis", &cfg.ablate.axis);
    m.set("rows", rows.len());
    m.write(&out.join("manifest.txt"))?;
    Ok(())
}
