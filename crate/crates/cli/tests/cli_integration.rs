//! End-to-end command behavior: idempotence, exit-code classes, file
//! round trips, and the cross-format consistency of eval outputs.

use phaedra_cli::run;
use std::path::{Path, PathBuf};

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phaedra-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cli(args: &[&str]) -> Result<(), phaedra_cli::CliError> {
    let mut full = vec!["phaedra".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    run(full)
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    std::fs::write(
        &path,
        "variant = phaedra\nbase_channels = 8\nchannel_multipliers = 1,2\ninput_resolution = 32\n\
         steps = 8\nbatch_size = 2\nwarmup_steps = 2\nlr = 1e-3\noptimizer = adam\ncheckpoint_every = 4\n",
    )
    .unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().to_string(), std::fs::read(e.path()).unwrap_or_default())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_is_idempotent_and_validates_count() {
    let root = workdir("gen");
    let a = root.join("a");
    let b = root.join("b");
    for out in [&a, &b] {
        cli(&[
            "gen", "--family", "quadrants", "--count", "12", "--resolution", "16", "--test", "4",
            "--seed", "7", "--out", out.to_str().unwrap(),
        ])
        .unwrap();
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b), "same-seed gen must be byte-identical");

    let err = cli(&[
        "gen", "--family", "quadrants", "--count", "0", "--resolution", "16", "--out",
        root.join("zero").to_str().unwrap(),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!root.join("zero").join("manifest.json").exists(), "no files on usage error");

    let err = cli(&[
        "gen", "--family", "marble", "--count", "4", "--resolution", "16", "--out",
        root.join("bad").to_str().unwrap(),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn missing_out_or_dataset_fail_with_the_right_codes() {
    let root = workdir("codes");
    // --out is required
    let err = cli(&["gen", "--family", "sines", "--count", "4", "--resolution", "16"]).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    // training against a dataset that does not exist is a data error
    let cfg = write_tiny_config(&root);
    let err = cli(&[
        "train", "--data", root.join("nope").to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--out", root.join("run").to_str().unwrap(),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 2, "{}", err.message());
    std::fs::remove_dir_all(&root).unwrap();
}

fn make_dataset(root: &Path, name: &str) -> PathBuf {
    let dir = root.join(name);
    cli(&[
        "gen", "--family", "gaussians", "--count", "20", "--resolution", "32", "--test", "6",
        "--seed", "5", "--out", dir.to_str().unwrap(),
    ])
    .unwrap();
    dir
}

#[test]
fn full_pipeline_round_trips_and_eval_formats_agree() {
    let root = workdir("pipeline");
    let data = make_dataset(&root, "data");
    let cfg = write_tiny_config(&root);
    let run_dir = root.join("run");
    cli(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--seed",
        "3", "--deterministic", "--out", run_dir.to_str().unwrap(),
    ])
    .unwrap();
    assert!(run_dir.join("final").join("manifest.json").exists());
    assert!(run_dir.join("final_ema").join("manifest.json").exists());
    assert!(run_dir.join("ckpt_000004").join("params.bin").exists());
    assert!(run_dir.join("resolved_config.json").exists());
    // one log line per step
    let log = std::fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "lr", "loss_total", "loss_rec", "loss_commit_mu", "loss_commit_alpha"] {
            assert!(v.get(key).is_some(), "log line missing {key}");
        }
    }

    // tokenize -> detokenize equals the in-process reconstruction bit for bit
    let tokens = root.join("tokens");
    cli(&[
        "tokenize", "--checkpoint", run_dir.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "test", "--out", tokens.to_str().unwrap(),
    ])
    .unwrap();
    let recon = root.join("recon");
    cli(&[
        "detokenize", "--checkpoint", run_dir.to_str().unwrap(), "--tokens",
        tokens.to_str().unwrap(), "--out", recon.to_str().unwrap(),
    ])
    .unwrap();
    let produced = std::fs::read(recon.join("recon_00000.bin")).unwrap();

    let (model, _) = phaedra_core::model::load_checkpoint(
        &phaedra_cli::commands::tokenize::resolve_checkpoint(&run_dir),
    )
    .unwrap();
    let ds = phaedra_core::datagen::Dataset::load(&data).unwrap();
    let stats = ds.manifest.stats();
    let fields: Vec<phaedra_core::Field> = ds
        .split(phaedra_core::datagen::Split::Test)
        .iter()
        .map(|f| phaedra_core::normalize(f, &stats).unwrap())
        .collect();
    let reference =
        phaedra_cli::commands::tokenize::reference_recon_blob(&model, &fields).unwrap();
    assert_eq!(produced, reference, "tokenize/detokenize must match in-process decode(encode(x))");

    // eval twice: byte-identical outputs; JSON and CSV agree
    let eval_a = root.join("eval_a");
    let eval_b = root.join("eval_b");
    for out in [&eval_a, &eval_b] {
        cli(&[
            "eval", "--checkpoint", run_dir.to_str().unwrap(), "--data", data.to_str().unwrap(),
            "--split", "test", "--deterministic", "--out", out.to_str().unwrap(),
        ])
        .unwrap();
    }
    assert_eq!(dir_bytes(&eval_a), dir_bytes(&eval_b));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_a.join("report.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(eval_a.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "phaedra");
    let csv_nmae: f64 = row[3].parse().unwrap();
    assert_eq!(csv_nmae, report["metrics"]["nmae"].as_f64().unwrap());
    let csv_gamma: f64 = row[6].parse().unwrap();
    assert_eq!(csv_gamma, report["metrics"]["gamma_min"].as_f64().unwrap());

    // merged report carries one row per eval, stable order
    let merged = root.join("merged");
    cli(&[
        "report", "--inputs", eval_a.to_str().unwrap(), "--inputs", eval_b.to_str().unwrap(),
        "--spectra", "--out", merged.to_str().unwrap(),
    ])
    .unwrap();
    let table = std::fs::read_to_string(merged.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(merged.join("spectra.csv").exists());
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn corrupt_token_magic_is_rejected_as_data_error() {
    let root = workdir("magic");
    let data = make_dataset(&root, "data");
    let cfg = write_tiny_config(&root);
    let run_dir = root.join("run");
    cli(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--deterministic", "--out", run_dir.to_str().unwrap(),
    ])
    .unwrap();
    let tokens = root.join("tokens");
    cli(&[
        "tokenize", "--checkpoint", run_dir.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "test", "--out", tokens.to_str().unwrap(),
    ])
    .unwrap();
    // corrupt the magic of the first token file
    let victim = tokens.join("sample_00000.phtk");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[0] = b'X';
    std::fs::write(&victim, bytes).unwrap();
    let err = cli(&[
        "detokenize", "--checkpoint", run_dir.to_str().unwrap(), "--tokens",
        tokens.to_str().unwrap(), "--out", root.join("recon").to_str().unwrap(),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message().contains("PHTK"), "{}", err.message());
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn variant_checkpoints_differ_only_in_bottleneck_scope() {
    let root = workdir("variants");
    let data = make_dataset(&root, "data");
    let mut manifests = Vec::new();
    for variant in ["fsq", "phaedra"] {
        let cfg_path = root.join(format!("{variant}.cfg"));
        std::fs::write(
            &cfg_path,
            format!(
                "variant = {variant}\nbase_channels = 8\nchannel_multipliers = 1,2\n\
                 input_resolution = 32\nsteps = 1\nbatch_size = 1\nwarmup_steps = 1\n\
                 optimizer = adam\ncheckpoint_every = 0\n"
            ),
        )
        .unwrap();
        let run_dir = root.join(format!("run_{variant}"));
        cli(&[
            "train", "--data", data.to_str().unwrap(), "--config", cfg_path.to_str().unwrap(),
            "--deterministic", "--out", run_dir.to_str().unwrap(),
        ])
        .unwrap();
        let manifest = phaedra_core::model::read_manifest(&run_dir.join("final")).unwrap();
        manifests.push(manifest);
    }
    let names = |m: &phaedra_core::model::CheckpointManifest| -> std::collections::BTreeSet<String> {
        m.params.iter().map(|p| p.name.clone()).collect()
    };
    let (fsq, phaedra) = (names(&manifests[0]), names(&manifests[1]));
    for diff in fsq.symmetric_difference(&phaedra) {
        assert!(diff.starts_with("bottleneck."), "manifest diff leaked outside bottleneck: {diff}");
    }
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn zero_step_training_checkpoint_equals_initialization() {
    let root = workdir("zerosteps");
    let data = make_dataset(&root, "data");
    let cfg_path = root.join("zero.cfg");
    std::fs::write(
        &cfg_path,
        "variant = fsq\nbase_channels = 8\nchannel_multipliers = 1,2\ninput_resolution = 32\n\
         steps = 0\nbatch_size = 1\noptimizer = adam\n",
    )
    .unwrap();
    let run_dir = root.join("run");
    cli(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg_path.to_str().unwrap(),
        "--seed", "11", "--deterministic", "--out", run_dir.to_str().unwrap(),
    ])
    .unwrap();
    let (trained, _) = phaedra_core::model::load_checkpoint(&run_dir.join("final")).unwrap();
    let fresh: phaedra_core::model::Model<f32> =
        phaedra_core::model::Model::build(trained.config.clone(), 11).unwrap();
    assert_eq!(trained.params.flatten(), fresh.params.flatten());
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn continuous_eval_has_no_token_stats() {
    let root = workdir("cont");
    let data = make_dataset(&root, "data");
    let cfg_path = root.join("cont.cfg");
    std::fs::write(
        &cfg_path,
        "variant = continuous\nbase_channels = 8\nchannel_multipliers = 1,2\ninput_resolution = 32\n\
         steps = 2\nbatch_size = 1\nwarmup_steps = 1\noptimizer = adam\ncheckpoint_every = 0\n",
    )
    .unwrap();
    let run_dir = root.join("run");
    cli(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg_path.to_str().unwrap(),
        "--deterministic", "--out", run_dir.to_str().unwrap(),
    ])
    .unwrap();
    let eval_dir = root.join("eval");
    cli(&[
        "eval", "--checkpoint", run_dir.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "test", "--deterministic", "--out", eval_dir.to_str().unwrap(),
    ])
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert!(report["metrics"].get("utilization").is_none());
    assert!(report["error_bound"].is_null());
    // tokenizing a continuous checkpoint is a data error
    let err = cli(&[
        "tokenize", "--checkpoint", run_dir.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--split", "test", "--out", root.join("tokens").to_str().unwrap(),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    std::fs::remove_dir_all(&root).unwrap();
}

#[test]
fn self_consistency_eval_is_perfect() {
    // evaluating reconstructions as their own ground truth: build a tiny
    // "identity" dataset check through the metric path instead of training:
    // evaluate the trained model against its own reconstructions by abusing
    // eval on a dataset whose test split equals the reconstructions.
    let root = workdir("selfcons");
    let data = make_dataset(&root, "data");
    let cfg = write_tiny_config(&root);
    let run_dir = root.join("run");
    cli(&[
        "train", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--deterministic", "--out", run_dir.to_str().unwrap(),
    ])
    .unwrap();
    // produce reconstructions of the test split, denormalized
    let (model, _) = phaedra_core::model::load_checkpoint(
        &phaedra_cli::commands::tokenize::resolve_checkpoint(&run_dir),
    )
    .unwrap();
    let ds = phaedra_core::datagen::Dataset::load(&data).unwrap();
    let stats = ds.manifest.stats();
    let recons: Vec<phaedra_core::Field> = ds
        .split(phaedra_core::datagen::Split::Test)
        .iter()
        .map(|f| {
            let norm = phaedra_core::normalize(f, &stats).unwrap();
            phaedra_core::denormalize(&model.reconstruct(&norm).unwrap(), &stats).unwrap()
        })
        .collect();
    // metrics of recon against itself
    use phaedra_core::metrics::{physical_errors, spectral_coherence_min};
    for r in &recons {
        let e = physical_errors(r, r, stats.sigma_g).unwrap();
        assert_eq!(e.nmae, 0.0);
    }
    let gamma = spectral_coherence_min(&recons, &recons).unwrap();
    assert!((gamma - 100.0).abs() < 1e-9);
    std::fs::remove_dir_all(&root).unwrap();
}
