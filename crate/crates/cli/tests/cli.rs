use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const TINY_CONFIG: &str = r#"{
  "seed": 3,
  "data": {
    "height": 16, "width": 16, "patients": 10,
    "phantom": {"image_size": 16, "lesion_radius_range": [1.5, 3.0], "lesion_probability": 0.4}
  },
  "vae": {"height": 16, "width": 16, "latent_dim": 4, "encoder_channels": [4, 4, 4, 4], "batch_size": 16, "epochs": 2},
  "diffusion": {"hidden_width": 16, "prompt_dim": 4, "steps": 10, "batch_size": 32, "epochs": 2},
  "eval": {"fid_samples": 40}
}"#;

fn maskgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = maskgen(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Corpus plus two-epoch checkpoints of both stages, built once.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    corpus: PathBuf,
    vae: PathBuf,
    diff: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.json");
        std::fs::write(&config, TINY_CONFIG).unwrap();
        let corpus = root.join("corpus");
        let vae = root.join("vae");
        let diff = root.join("diff");
        ok(&["phantom", "--config", s(&config), "--out", s(&corpus)]);
        let manifest = corpus.join("manifest.jsonl");
        ok(&[
            "train",
            "vae",
            "--config",
            s(&config),
            "--manifest",
            s(&manifest),
            "--out",
            s(&vae),
        ]);
        ok(&[
            "train",
            "diff",
            "--config",
            s(&config),
            "--manifest",
            s(&manifest),
            "--vae",
            s(&vae.join("best")),
            "--out",
            s(&diff),
        ]);
        Fixture {
            _dir: dir,
            root,
            config,
            corpus,
            vae,
            diff,
        }
    })
}

fn read_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn phantom_counts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = [
        "phantom",
        "--patients",
        "20",
        "--slices",
        "40",
        "--lesion-prob",
        "0.3",
        "--seed",
        "7",
    ];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", s(&a)]);
    ok(&with_out);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", s(&b)]);
    ok(&with_out);
    let ma = std::fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.jsonl")).unwrap();
    assert_eq!(ma.lines().count(), 1 + 800);
    assert_eq!(ma, mb);
}

#[test]
fn invalid_lesion_probability_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = maskgen(&["phantom", "--lesion-prob", "1.5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lesion_probability"));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = maskgen(&["train", "diff", "--manifest", "m.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = maskgen(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_mismatch_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "diffusion": {"latent_dim": 12}}"#).unwrap();
    let out = maskgen(&[
        "train",
        "vae",
        "--config",
        s(&cfg),
        "--manifest",
        "does-not-exist.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("latent size"));
    std::fs::write(&cfg, r#"{"data": {}}"#).unwrap();
    let out = maskgen(&["phantom", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn training_writes_checkpoints_and_loss_curves() {
    let f = fixture();
    for stage in [&f.vae, &f.diff] {
        assert!(stage.join("epoch1/meta.json").is_file());
        assert!(stage.join("epoch2/meta.json").is_file());
        assert!(!stage.join("epoch3").exists());
        let csv = std::fs::read_to_string(stage.join("loss.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2, "{csv}");
    }
    assert!(f.vae.join("best/meta.json").is_file());
}

#[test]
fn sampling_is_deterministic_and_validates_the_prompt() {
    let f = fixture();
    let vae = f.vae.join("best");
    let diff = f.diff.join("epoch2");
    let a = f.root.join("sample-a");
    let b = f.root.join("sample-b");
    for out in [&a, &b] {
        ok(&[
            "sample",
            "--config",
            s(&f.config),
            "--vae",
            s(&vae),
            "--diff",
            s(&diff),
            "--y",
            "1",
            "--n",
            "4",
            "--seed",
            "1",
            "--png",
            "--out",
            s(out),
        ]);
    }
    let files = read_sorted(&a);
    assert_eq!(files.len(), 8);
    assert_eq!(files, read_sorted(&b));

    let bad = maskgen(&[
        "sample",
        "--config",
        s(&f.config),
        "--vae",
        s(&vae),
        "--diff",
        s(&diff),
        "--y",
        "2",
        "--n",
        "1",
        "--out",
        s(&f.root.join("sample-bad")),
    ]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("prompt"));

    let missing = maskgen(&[
        "sample",
        "--config",
        s(&f.config),
        "--vae",
        s(&f.root.join("nope")),
        "--diff",
        s(&diff),
        "--y",
        "0",
        "--n",
        "1",
    ]);
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn release_sized_sampling_and_export() {
    let f = fixture();
    let out = f.root.join("release-samples");
    ok(&[
        "sample",
        "--config",
        s(&f.config),
        "--vae",
        s(&f.vae.join("best")),
        "--diff",
        s(&f.diff.join("epoch2")),
        "--y",
        "1",
        "--n",
        "605",
        "--seed",
        "5",
        "--out",
        s(&out),
    ]);
    assert_eq!(read_sorted(&out).len(), 605);
    let release = f.root.join("release");
    ok(&[
        "export",
        "--config",
        s(&f.config),
        "--from",
        s(&out),
        "--out",
        s(&release),
    ]);
    let manifest = std::fs::read_to_string(release.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 605);
    assert_eq!(
        std::fs::read_dir(release.join("renders")).unwrap().count(),
        605
    );
}

#[test]
fn grid_figure_needs_a_real_manifest() {
    let f = fixture();
    let (vae, diff) = (f.vae.join("best"), f.diff.join("epoch2"));
    let base = [
        "sample",
        "--config",
        s(&f.config),
        "--vae",
        s(&vae),
        "--diff",
        s(&diff),
        "--y",
        "0",
        "--n",
        "3",
        "--grid",
    ];
    let out = maskgen(&base);
    assert_eq!(out.status.code(), Some(2));
    let dir = f.root.join("grid");
    let manifest = f.corpus.join("manifest.jsonl");
    let mut args = base.to_vec();
    args.extend(["--real", s(&manifest), "--out", s(&dir)]);
    ok(&args);
    let png = std::fs::read(dir.join("grid.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn corpus_against_itself_has_zero_distance() {
    let f = fixture();
    let out = f.root.join("self-report");
    let manifest = f.corpus.join("manifest.jsonl");
    let stdout = ok(&[
        "eval",
        "classdist",
        "--real",
        s(&manifest),
        "--synth",
        s(&f.corpus),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("TV 0.0000"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("classdist.json")).unwrap())
            .unwrap();
    for key in ["y0", "y1"] {
        assert_eq!(
            report[key]["report"]["total_variation"].as_f64(),
            Some(0.0),
            "{key}"
        );
    }
    assert!(out.join("classdist_y0.png").is_file());
    assert!(out.join("classdist_y1.png").is_file());
}

#[test]
fn fid_table_is_sorted_with_argmin_flagged() {
    let f = fixture();
    let out = f.root.join("fid-report");
    let manifest = f.corpus.join("manifest.jsonl");
    ok(&[
        "eval",
        "fid",
        "--config",
        s(&f.config),
        "--real",
        s(&manifest),
        "--vae",
        s(&f.vae.join("best")),
        "--ckpts",
        s(&f.diff),
        "--n",
        "40",
        "--seed",
        "2",
        "--out",
        s(&out),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fid.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    let epochs: Vec<u64> = rows.iter().map(|r| r["epoch"].as_u64().unwrap()).collect();
    assert_eq!(epochs, vec![1, 2]);
    let best = report["best_epoch"].as_u64().unwrap();
    let min = rows
        .iter()
        .min_by(|a, b| {
            a["fid"]
                .as_f64()
                .unwrap()
                .total_cmp(&b["fid"].as_f64().unwrap())
        })
        .unwrap();
    assert_eq!(min["epoch"].as_u64(), Some(best));
    let table = std::fs::read_to_string(out.join("fid.txt")).unwrap();
    assert_eq!(table.lines().filter(|l| l.ends_with('*')).count(), 1);
}

#[test]
fn undersized_fid_corpus_is_reported() {
    let f = fixture();
    let manifest = f.corpus.join("manifest.jsonl");
    let out = maskgen(&[
        "eval",
        "fid",
        "--config",
        s(&f.config),
        "--real",
        s(&manifest),
        "--vae",
        s(&f.vae.join("best")),
        "--ckpts",
        s(&f.diff.join("epoch1")),
        "--n",
        "5",
        "--out",
        s(&f.root.join("fid-small")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least"));
}
