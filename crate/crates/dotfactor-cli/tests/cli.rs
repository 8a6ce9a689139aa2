//! End-to-end tests of the command-line interface, driving the real binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dotfactor"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn dotfactor");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_tiny_data(dir: &Path) {
    run_ok(&[
        "gen-data",
        "--kind",
        "dsprites-mini",
        "--resolution",
        "16",
        "--cards",
        "3,3,6,6",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

fn tiny_train_config() -> serde_json::Value {
    serde_json::json!({
        "model": {
            "latent_c": 3,
            "latent_z": 3,
            "enc_hidden": [32],
            "dec_hidden": [32],
            "disc_hidden": [16],
            "lambda": 1.0,
            "gamma": 5.0,
            "variant": "swap",
            "cycle_includes_z": false,
            "cycle_use_sample": false
        },
        "epochs": 2,
        "batch_size": 32,
        "lr": 0.001,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "warmup_epochs": 1,
        "sat_window": 1,
        "sat_threshold": 0.005,
        "stop_kl": 0.1,
        "seed": 11,
        "desired_factors": null,
        "sleep_decoder_only": false
    })
}

#[test]
fn gen_data_writes_the_three_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen_tiny_data(&a);
    gen_tiny_data(&b);
    for name in ["grid.json", "images.bin", "factors.bin"] {
        let fa = fs::read(a.join(name)).unwrap();
        let fb = fs::read(b.join(name)).unwrap();
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
}

#[test]
fn gen_data_refuses_nonempty_output_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen_tiny_data(&dir);
    let out = bin()
        .args(["gen-data", "--kind", "dsprites-mini", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // --force overwrites
    run_ok(&[
        "gen-data",
        "--kind",
        "dsprites-mini",
        "--resolution",
        "16",
        "--cards",
        "3,3,6,6",
        "--out",
        dir.to_str().unwrap(),
        "--force",
    ]);
}

#[test]
fn gen_data_supports_the_scene_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("scenes");
    run_ok(&[
        "gen-data",
        "--kind",
        "shapes3d-mini",
        "--resolution",
        "16",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("grid.json")).unwrap()).unwrap();
    let factors = grid["factors"].as_array().unwrap();
    assert_eq!(factors.len(), 5);
    assert_eq!(factors[0]["name"], "floor_hue");
    assert_eq!(grid["channels"], 1);
}

#[test]
fn unknown_kind_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen-data", "--kind", "mnist", "--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_traverse_report_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny_data(&data);

    let cfg_path = tmp.path().join("config.json");
    fs::write(&cfg_path, tiny_train_config().to_string()).unwrap();
    let run_dir = tmp.path().join("run");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
    ]);
    assert!(run_dir.join("log.csv").exists());
    assert!(run_dir.join("config.json").exists());
    let ckpt = run_dir.join("checkpoint");
    assert!(ckpt.join("model.json").exists());
    assert!(ckpt.join("weights.bin").exists());
    let log = fs::read_to_string(run_dir.join("log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss_elbo,loss_cycle,loss_adv_enc,loss_disc,kl_z,kl_c,active_set"));
    assert_eq!(log.trim().lines().count(), 3); // header + 2 epochs

    // eval with a small protocol, seeds fanned over two capped workers
    let eval_dir = tmp.path().join("eval");
    let out = bin()
        .env("DOTFACTOR_THREADS", "2")
        .args([
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            eval_dir.to_str().unwrap(),
            "--seeds",
            "0,1",
            "--votes",
            "40",
            "--batch",
            "8",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let report_path = eval_dir.join("report.json");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in ["factorvae", "dci_d", "dci_c", "dci_i", "mig", "betavae", "modularity", "explicitness"] {
        let mean = report[key]["mean"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mean), "{key} mean {mean}");
    }
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);

    // traversal grid dimensions follow the layout formula
    let tra_dir = tmp.path().join("traversal");
    run_ok(&[
        "traverse",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        tra_dir.to_str().unwrap(),
        "--images",
        "0,5",
        "--points",
        "7",
    ]);
    for idx in [0, 5] {
        let pgm = fs::read(tra_dir.join(format!("traversal_{idx}.pgm"))).unwrap();
        let expected_w = 7 * (16 + 1) - 1;
        let expected_h = (3 + 2) * (16 + 1) - 1;
        let header = format!("P5\n{expected_w} {expected_h}\n255\n");
        assert!(pgm.starts_with(header.as_bytes()));
        assert_eq!(pgm.len(), header.len() + expected_w * expected_h);
    }

    // single-report table has one row per metric
    let out = run_ok(&["report", report_path.to_str().unwrap()]);
    let table = String::from_utf8_lossy(&out.stdout);
    for metric in ["factorvae", "dci", "mig", "betavae", "modularity", "explicitness"] {
        assert!(table.contains(metric), "missing {metric} in\n{table}");
    }

    // report values match the JSON within display rounding
    let mig_mean = report["mig"]["mean"].as_f64().unwrap();
    assert!(table.contains(&format!("{mig_mean:.3}")), "table:\n{table}");

    // multi-report table sorts by mig descending
    let second = eval_dir.join("report2.json");
    let mut altered = report.clone();
    altered["mig"]["mean"] = serde_json::json!(0.99);
    fs::write(&second, altered.to_string()).unwrap();
    let out = run_ok(&[
        "report",
        report_path.to_str().unwrap(),
        second.to_str().unwrap(),
    ]);
    let table = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = table.trim().lines().collect();
    assert_eq!(lines.len(), 3, "table:\n{table}");
    assert!(lines[1].starts_with("eval/report2"), "highest mig row first:\n{table}");
    assert!(lines[1].contains("0.990"), "table:\n{table}");
    assert!(lines[2].starts_with("eval/report "), "table:\n{table}");
}

#[test]
fn eval_with_missing_inputs_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "eval",
            "--checkpoint",
            tmp.path().join("nope").to_str().unwrap(),
            "--data",
            tmp.path().join("also-nope").to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn traverse_with_bad_dim_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny_data(&data);
    let cfg_path = tmp.path().join("config.json");
    let mut cfg = tiny_train_config();
    cfg["epochs"] = serde_json::json!(1);
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let run_dir = tmp.path().join("run");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
    ]);
    let out = bin()
        .args([
            "traverse",
            "--checkpoint",
            run_dir.join("checkpoint").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("tra").to_str().unwrap(),
            "--dims",
            "99",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn interrupted_training_leaves_a_loadable_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_tiny_data(&data);

    let mut cfg = tiny_train_config();
    cfg["epochs"] = serde_json::json!(100_000);
    cfg["warmup_epochs"] = serde_json::json!(0);
    cfg["sat_threshold"] = serde_json::json!(1e12); // grow (and checkpoint) every epoch
    cfg["stop_kl"] = serde_json::json!(-1.0f64);
    // stop_kl must be >= 0; use 0 so the run keeps going
    cfg["stop_kl"] = serde_json::json!(0.0f64);
    let cfg_path = tmp.path().join("config.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();

    let run_dir = tmp.path().join("run");
    let mut child = bin()
        .args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
        ])
        .spawn()
        .unwrap();

    // wait for the first growth checkpoint, then kill mid-run
    let ckpt = run_dir.join("checkpoint");
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        if ckpt.join("model.json").exists() && ckpt.join("weights.bin").exists() {
            break;
        }
        if let Some(status) = child.try_wait().unwrap() {
            panic!("training exited early with {status}");
        }
        assert!(Instant::now() < deadline, "no checkpoint appeared in time");
        std::thread::sleep(Duration::from_millis(20));
    }
    std::thread::sleep(Duration::from_millis(50));
    child.kill().unwrap();
    child.wait().unwrap();

    let (model, meta) = dotfactor::dotvae::load_checkpoint(&ckpt).expect("checkpoint loads");
    assert!(meta.active_set >= 1);
    assert!(model.enc_params.total_elems() > 0);
}
