use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voxel_outlier::detector::{load_bank, DetectionReport};
use voxel_outlier::network::load_model;
use voxel_outlier::volume::{load_labels, load_volume};

const CONFIG: &str = "\
widths = 8,4
pretrain_epochs = 2
finetune_epochs = 2
p_value = 0.1
min_cluster_size = 5
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxel-outlier"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        panic!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

const ARTIFACTS: &[&str] = &[
    "pre.vxwm",
    "ft.vxwm",
    "bank.vxwb",
    "map.vxw",
    "clusters.vxwc",
    "report.txt",
    "eval.txt",
    "cohort/test.vxw",
    "cohort/truth.vxwc",
];

/// Runs every stage on a two-subject toy cohort inside `dir`.
fn pipeline(dir: &Path) {
    std::fs::write(dir.join("cfg.txt"), CONFIG).unwrap();
    let c = ["--config", "cfg.txt"];
    let stage = |extra: &[&str]| {
        let mut args: Vec<&str> = c.to_vec();
        args.extend_from_slice(extra);
        run_in(dir, &args)
    };
    run_in(
        dir,
        &[
            "generate",
            "--out",
            "cohort",
            "--size",
            "14",
            "--subjects",
            "2",
            "--cohort-seed",
            "3",
        ],
    );
    stage(&["pretrain", "--cohort", "cohort", "--out", "pre.vxwm"]);
    stage(&[
        "finetune", "--cohort", "cohort", "--model", "pre.vxwm", "--out", "ft.vxwm",
    ]);
    stage(&[
        "build-bank",
        "--cohort",
        "cohort",
        "--model",
        "ft.vxwm",
        "--out",
        "bank.vxwb",
    ]);
    stage(&[
        "score",
        "--bank",
        "bank.vxwb",
        "--model",
        "ft.vxwm",
        "--subject",
        "cohort/test.vxw",
        "--out",
        "map.vxw",
    ]);
    stage(&[
        "clusters",
        "--map",
        "map.vxw",
        "--out",
        "clusters.vxwc",
        "--report",
        "report.txt",
    ]);
    run_in(
        dir,
        &[
            "evaluate",
            "--clusters",
            "clusters.vxwc",
            "--truth",
            "cohort/truth.vxwc",
            "--out",
            "eval.txt",
        ],
    );
}

#[test]
fn toy_pipeline_produces_parseable_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d);
    let model = load_model(d.join("ft.vxwm")).unwrap();
    assert_eq!(model.input_dim(), 81);
    assert_eq!(model.code_dim(), 4);
    let bank = load_bank(d.join("bank.vxwb")).unwrap();
    assert_eq!(bank.feature_dim(), 4);
    let map = load_volume(d.join("map.vxw")).unwrap();
    assert_eq!(map.mask().iter().filter(|&&m| m).count(), bank.len());
    let (dims, labels) = load_labels(d.join("clusters.vxwc")).unwrap();
    assert_eq!(dims, map.dims());
    assert!(labels.iter().all(|&l| l >= 0));
    let report =
        DetectionReport::parse(&std::fs::read_to_string(d.join("eval.txt")).unwrap()).unwrap();
    assert_eq!(
        report.clusters,
        report.true_clusters + report.false_positives
    );
    let text = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(text.contains("kept_voxels="));
    for a in [
        "pre.vxwm",
        "ft.vxwm",
        "bank.vxwb",
        "map.vxw",
        "clusters.vxwc",
    ] {
        let manifest = d.join(format!("{a}.manifest.json"));
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
        assert_eq!(json["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(json["config"]["widths"], "8,4");
        assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for name in ARTIFACTS {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn score_refuses_a_bank_built_from_another_model() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d);
    let out = bin()
        .current_dir(d)
        .args([
            "--config",
            "cfg.txt",
            "score",
            "--bank",
            "bank.vxwb",
            "--model",
            "pre.vxwm",
        ])
        .args(["--subject", "cohort/test.vxw", "--out", "other.vxw"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model hash mismatch"));
    assert!(!d.join("other.vxw").exists());

    let out = bin()
        .current_dir(d)
        .args([
            "--config",
            "cfg.txt",
            "--score-stride",
            "2",
            "score",
            "--bank",
            "bank.vxwb",
        ])
        .args([
            "--model",
            "ft.vxwm",
            "--subject",
            "cohort/test.vxw",
            "--out",
            "other.vxw",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config mismatch"));

    std::fs::remove_file(d.join("bank.vxwb.manifest.json")).unwrap();
    let out = bin()
        .current_dir(d)
        .args([
            "--config",
            "cfg.txt",
            "score",
            "--bank",
            "bank.vxwb",
            "--model",
            "ft.vxwm",
        ])
        .args(["--subject", "cohort/test.vxw", "--out", "other.vxw"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.txt"), format!("{CONFIG}nu = 0.1\n")).unwrap();
    run_in(
        d,
        &[
            "generate",
            "--out",
            "cohort",
            "--size",
            "12",
            "--subjects",
            "2",
        ],
    );
    run_in(
        d,
        &[
            "--config", "cfg.txt", "--nu", "0.2", "pretrain", "--cohort", "cohort", "--out",
            "m.vxwm",
        ],
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.vxwm.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["nu"], "0.2");
    assert_eq!(json["config"]["pretrain_epochs"], "2");
    assert_eq!(json["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn errors_exit_nonzero_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases: Vec<Vec<&str>> = vec![
        vec!["pretrain", "--cohort", "missing", "--out", "m.vxwm"],
        vec![
            "--patch-size",
            "8",
            "pretrain",
            "--cohort",
            "missing",
            "--out",
            "m.vxwm",
        ],
        vec![
            "--config", "nope.txt", "pretrain", "--cohort", "missing", "--out", "m.vxwm",
        ],
        vec![
            "clusters",
            "--map",
            "missing.vxw",
            "--out",
            "c.vxwc",
            "--report",
            "r.txt",
        ],
        vec!["generate", "--out", "c", "--size", "6"],
    ];
    for args in cases {
        let out = bin().current_dir(d).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
    std::fs::write(d.join("junk.vxw"), b"VXW1\x01").unwrap();
    let out = bin()
        .current_dir(d)
        .args([
            "clusters", "--map", "junk.vxw", "--out", "c.vxwc", "--report", "r.txt",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let leftovers: Vec<PathBuf> = std::fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(leftovers, vec![d.join("junk.vxw")]);
}
