use std::path::Path;
use std::process::{Command, Output};

use supersub_core::data::SyntheticSpec;
use supersub_core::delta::{compression_ratio, PackedDelta};
use supersub_core::experiment::{DataSource, ExperimentConfig};
use supersub_core::Network;

fn supersub(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supersub"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Small experiment config written into `dir`, with its run directory below.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ExperimentConfig::golden(dir.join("run/nested"));
    c.data = DataSource::Synthetic(SyntheticSpec {
        n_super: 3,
        subs_per_super: vec![2, 3, 2],
        dim: 6,
        super_sep: 6.0,
        sub_sep: 1.5,
        noise_sigma: 1.0,
        n_train_per_sub: 20,
        n_test_per_sub: 5,
        seed: 0,
    });
    c.network.hidden = vec![10];
    for stage in [
        &mut c.super_train,
        &mut c.sub_train,
        &mut c.finetune,
        &mut c.lowerbound_train,
    ] {
        stage.epochs = 3;
    }
    let path = dir.join("config.json");
    std::fs::write(&path, c.to_json()).unwrap();
    path
}

#[test]
fn verbs_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = dir.path().join("run/nested");

    ok(supersub(&config, &["gen-data"]));
    let first = std::fs::read(run.join("data/train.hsds")).unwrap();
    ok(supersub(&config, &["gen-data"]));
    assert_eq!(std::fs::read(run.join("data/train.hsds")).unwrap(), first);

    ok(supersub(&config, &["train", "super"]));
    ok(supersub(&config, &["train", "lowerbound"]));
    ok(supersub(&config, &["train", "sub:1"]));
    let sub1 = Network::load(run.join("models/sub_1.hsnw")).unwrap();
    assert_eq!(sub1.head_dim(), 3);
    assert_eq!(Network::load(run.join("models/lowerbound.hsnw")).unwrap().head_dim(), 7);
    assert!(run.join("loss/super.csv").exists());

    for i in ["0", "1", "2"] {
        ok(supersub(&config, &["finetune", i]));
        for mode in ["fp16", "qat-int"] {
            let printed = ok(supersub(&config, &["pack", i, "--mode", mode]));
            ok(supersub(&config, &["unpack", i, "--mode", mode]));
            let packed =
                PackedDelta::from_bytes(std::fs::read(run.join(format!("deltas/{mode}/delta_{i}.hsdl"))).unwrap())
                    .unwrap();
            let spec = Network::load(run.join(format!("models/finetune_{i}.hsnw"))).unwrap();
            if mode == "fp16" {
                let ratio = compression_ratio(&packed, spec.storage_bytes()).unwrap();
                assert!(printed.contains(&format!("ratio {ratio:.4}")), "{printed}");
            }
        }
        let stored = std::fs::read(run.join(format!("models/finetune_{i}.hsnw"))).unwrap();
        let rebuilt = std::fs::read(run.join(format!("models/reconstructed_{i}.qat-int.hsnw"))).unwrap();
        assert_eq!(rebuilt, stored);
    }

    for mode in ["lowerbound", "upperbound", "two_stage_vanilla", "two_stage_efficient"] {
        ok(supersub(&config, &["eval", mode]));
    }
    ok(supersub(
        &config,
        &["eval", "two_stage_efficient", "--delta-mode", "fp16"],
    ));
    let vanilla = std::fs::read(run.join("eval/two_stage_vanilla.predictions.csv")).unwrap();
    let efficient = std::fs::read(run.join("eval/two_stage_efficient.qat-int.predictions.csv")).unwrap();
    assert_eq!(vanilla, efficient);
    assert!(run.join("eval/two_stage_efficient.qat-int.ledger.csv").exists());

    let report = ok(supersub(&config, &["report"]));
    assert!(report.contains("upperbound - lowerbound = "), "{report}");
    assert!(report.contains("average,fp16,f32,"), "{report}");
    let again = ok(supersub(&config, &["report"]));
    assert_eq!(report, again);

    // a corrupt delta is an integrity failure
    let delta = run.join("deltas/qat-int/delta_0.hsdl");
    let mut bytes = std::fs::read(&delta).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&delta, bytes).unwrap();
    assert_eq!(supersub(&config, &["unpack", "0"]).status.code(), Some(3));

    // a delta against another base is an integrity failure too
    let mut fp16 = std::fs::read(run.join("deltas/fp16/delta_1.hsdl")).unwrap();
    fp16[12] ^= 0x01; // header byte of the base fingerprint
    std::fs::write(run.join("deltas/fp16/delta_1.hsdl"), fp16).unwrap();
    let out = supersub(&config, &["unpack", "1", "--mode", "fp16"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("base mismatch"));
}

#[test]
fn user_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    assert_eq!(supersub(&config, &["train", "super"]).status.code(), Some(2));
    ok(supersub(&config, &["gen-data"]));
    assert_eq!(supersub(&config, &["train", "middle"]).status.code(), Some(2));
    assert_eq!(supersub(&config, &["finetune", "0"]).status.code(), Some(2));
    ok(supersub(&config, &["train", "super"]));
    assert_eq!(supersub(&config, &["finetune", "7"]).status.code(), Some(2));
    assert_eq!(supersub(&config, &["eval", "sideways"]).status.code(), Some(2));
    assert_eq!(
        supersub(&config, &["pack", "0", "--mode", "int4"]).status.code(),
        Some(2)
    );

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = supersub(&config, &["report", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifacts"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"seed\": 1}").unwrap();
    assert_eq!(supersub(&bad, &["gen-data"]).status.code(), Some(2));
    assert_eq!(
        supersub(&dir.path().join("absent.json"), &["gen-data"]).status.code(),
        Some(2)
    );
}

#[test]
fn seed_flag_changes_data_and_out_flag_moves_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(supersub(&config, &["--out", a.to_str().unwrap(), "gen-data"]));
    ok(supersub(
        &config,
        &["--out", b.to_str().unwrap(), "--seed", "99", "gen-data"],
    ));
    let read = |d: &Path| std::fs::read(d.join("data/test.hsds")).unwrap();
    assert_ne!(read(&a), read(&b));
}
