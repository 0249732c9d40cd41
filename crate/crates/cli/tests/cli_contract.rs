//! Exit codes, flag overrides, config hashing and artifact handling at the
//! binary level.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcreg"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("dcreg_cli_contract").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = scratch("badkey");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[train]\nlerning_rate = 0.1\n").unwrap();
    let out = bin().arg("train").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lerning_rate"), "stderr: {err}");
}

#[test]
fn unknown_override_key_exits_2() {
    let out = bin()
        .args(["train", "--preset", "spiral", "--train.bogus=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_checkpoint_exits_3() {
    let dir = scratch("missing_ckpt");
    let out = bin()
        .args([
            "solve",
            "--preset",
            "ct-sparse-desk",
            "--solver.checkpoint=/nonexistent/ck.bin",
        ])
        .arg("--out")
        .arg(dir.join("run").to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_without_checkpoint_exits_3() {
    let out = bin()
        .args(["solve", "--preset", "ct-sparse-desk"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_ablation_sweep_exits_2() {
    let out = bin()
        .args(["ablate", "--preset", "ct-sparse-desk"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn unknown_preset_exits_2() {
    let out = bin().args(["train", "--preset", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn psm_alpha_above_bound_rejected_at_config_time() {
    // huge alpha violates the (0, 1/(1.01||A||^2)] precondition
    let dir = scratch("alpha_reject");
    // first produce a checkpoint quickly
    let train_out = dir.join("train");
    let st = bin()
        .args([
            "train",
            "--preset",
            "ct-sparse-desk",
            "--problem.num_train=12",
            "--train.epochs=2",
            "--train.use_val=false",
        ])
        .arg("--out")
        .arg(train_out.to_str().unwrap())
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&st.stderr)
    );
    let ckpt = train_out.join("checkpoint.bin");
    assert!(ckpt.exists());

    let out = bin()
        .args([
            "solve",
            "--preset",
            "ct-sparse-desk",
            "--problem.num_train=12",
            "--solver.algorithm=psm",
            "--solver.alpha=1000.0",
        ])
        .arg(format!("--solver.checkpoint={}", ckpt.display()))
        .arg("--out")
        .arg(dir.join("solve").to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("psm step"));
}

#[test]
fn solve_auto_alpha_records_theory_step_and_dca_inner_flag() {
    let dir = scratch("solve_auto");
    let train_out = dir.join("train");
    let st = bin()
        .args([
            "train",
            "--preset",
            "ct-sparse-desk",
            "--problem.num_train=12",
            "--train.epochs=2",
            "--train.use_val=false",
        ])
        .arg("--out")
        .arg(train_out.to_str().unwrap())
        .output()
        .unwrap();
    assert!(st.status.success());
    let ckpt = train_out.join("checkpoint.bin");

    // psm with alpha auto: manifest alpha must equal 1/(1.01 ||A||^2)
    let solve_out = dir.join("solve_psm");
    let st = bin()
        .args([
            "solve",
            "--preset",
            "ct-sparse-desk",
            "--problem.num_train=12",
            "--solver.algorithm=psm",
            "--solver.alpha=auto",
            "--solver.outer_iters=10",
        ])
        .arg(format!("--solver.checkpoint={}", ckpt.display()))
        .arg("--out")
        .arg(solve_out.to_str().unwrap())
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "solve failed: {}",
        String::from_utf8_lossy(&st.stderr)
    );
    let report = std::fs::read_to_string(solve_out.join("report.txt")).unwrap();
    let a_norm: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("a_norm_estimate = "))
        .unwrap()
        .parse()
        .unwrap();
    let alpha: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("alpha = "))
        .unwrap()
        .parse()
        .unwrap();
    let gamma: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("gamma = "))
        .unwrap()
        .parse()
        .unwrap();
    let expect = 1.0 / (1.01 * a_norm * a_norm);
    assert!((alpha - expect).abs() <= 1e-12 * expect, "{alpha} vs {expect}");
    assert!((gamma - 1.0 / alpha).abs() <= 1e-9 * gamma);

    // trace.csv exists with the documented header
    let trace = std::fs::read_to_string(solve_out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,F,grad-norm,step-norm,time-ms\n"));
    // 10 iterations -> 11 entries + header
    assert_eq!(trace.lines().count(), 12);

    // dca with explicit inner count runs and reports its certificate
    let solve_out2 = dir.join("solve_dca");
    let st = bin()
        .args([
            "solve",
            "--preset",
            "ct-sparse-desk",
            "--problem.num_train=12",
            "--solver.algorithm=dca",
            "--solver.inner_iters=6",
            "--solver.outer_iters=10",
        ])
        .arg(format!("--solver.checkpoint={}", ckpt.display()))
        .arg("--out")
        .arg(solve_out2.to_str().unwrap())
        .output()
        .unwrap();
    assert!(st.status.success());
    let report2 = std::fs::read_to_string(solve_out2.join("report.txt")).unwrap();
    assert!(report2.contains("dca_rate"));
}

#[test]
fn train_same_seed_same_checkpoint_hash() {
    let dir = scratch("train_hash");
    let mut hashes = Vec::new();
    for rep in 0..2 {
        let out_dir = dir.join(format!("run{rep}"));
        let st = bin()
            .args([
                "train",
                "--preset",
                "spiral",
                "--problem.spiral_count=200",
                "--train.epochs=3",
            ])
            .arg("--out")
            .arg(out_dir.to_str().unwrap())
            .output()
            .unwrap();
        assert!(
            st.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&st.stderr)
        );
        let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        let hash = manifest
            .lines()
            .find_map(|l| l.strip_prefix("checkpoint_hash = "))
            .unwrap()
            .to_string();
        hashes.push(hash);
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn stargeom_demo_writes_expected_files() {
    let dir = scratch("stargeom");
    let out_dir = dir.join("demo");
    let st = bin()
        .args([
            "stargeom",
            "--preset",
            "stargeom-demo",
            "--stargeom.grid_m=256",
            "--stargeom.lutwak_pairs=5",
            "--stargeom.contour_res=21",
        ])
        .arg("--out")
        .arg(out_dir.to_str().unwrap())
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "stargeom failed: {}",
        String::from_utf8_lossy(&st.stderr)
    );
    for f in [
        "bodies.csv",
        "witness.txt",
        "optimal_body.csv",
        "optimality.txt",
        "mixed_volumes.csv",
        "contour.csv",
        "manifest.txt",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let witness = std::fs::read_to_string(out_dir.join("witness.txt")).unwrap();
    assert!(witness.contains("m_convex = true"));
    assert!(witness.contains("c_convex = true"));
}
