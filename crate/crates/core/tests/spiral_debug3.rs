//! Epoch-budget check for the study ordering (run --ignored).

use dcreg_core::bench::{run_spiral_study, FitGrid, RegClass, SpiralStudyCfg};
use dcreg_core::icnn::Activation;
use dcreg_core::train::TrainConfig;

#[test]
#[ignore]
fn epoch_budget_check() {
    for epochs in [200usize, 240] {
        let cfg = SpiralStudyCfg {
            count: 1000,
            sigma: 1.0,
            data_seed: 17,
            width: 128,
            depth: 3,
            activation: Activation::LeakyRelu { slope: 0.2 },
            rho: 0.05,
            train: {
                let mut t = TrainConfig::new(10.0, 3e-3, 25, epochs, 7);
                t.val_every = 10;
                t.holdout_frac = 0.1;
                t
            },
            seeds: vec![1, 2, 3],
            grid: FitGrid {
                lo: -18.0,
                hi: 18.0,
                res: 49,
            },
            val_mu: 0.5,
            val_points: 32,
        };
        let t0 = std::time::Instant::now();
        let report = run_spiral_study(&cfg).unwrap();
        for r in &report.runs {
            println!(
                "ep{epochs} {:6} seed {}: fit {:.4} sep {:+.3}",
                r.class.label(),
                r.seed,
                r.fit_error,
                r.separation
            );
        }
        println!(
            "ep{epochs}: medians icnn {:.4} iwcnn {:.4} idcnn {:.4}  [{:.0}s]",
            report.median_fit(RegClass::ConvexOnly),
            report.median_fit(RegClass::WeaklyConvex),
            report.median_fit(RegClass::Dc),
            t0.elapsed().as_secs_f64()
        );
    }
}
