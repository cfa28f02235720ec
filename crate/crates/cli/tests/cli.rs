use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
data.n_scenes = 24
data.n_test = 12
model.embed_dim = 6
model.hidden_dim = 8
model.n_layers = 2
model.mask_side = 4
model.triplet_side = 4
train.epochs = 3
train.batch_size = 8
probe.epochs = 20
";

fn sglayout(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sglayout"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SGLAYOUT_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = sglayout(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), SMALL).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_is_reproducible_and_writes_both_splits() {
    let dir = setup();
    let d = dir.path();
    let stdout = ok(&["gen", "--config", "run.cfg", "--out", "a"], d);
    assert!(stdout.contains("train: 24 scenes"), "{stdout}");
    assert!(stdout.contains("test: 12 scenes"), "{stdout}");
    ok(&["gen", "--config", "run.cfg", "--out", "b"], d);
    assert_eq!(
        files(&d.join("a")),
        [
            "graphs.json",
            "scenes.json",
            "test_graphs.json",
            "test_scenes.json",
            "vocab.json"
        ]
    );
    for f in files(&d.join("a")) {
        assert_eq!(
            read(d.join("a").join(&f)),
            read(d.join("b").join(&f)),
            "{f}"
        );
    }
    ok(
        &["gen", "--config", "run.cfg", "--seed", "5", "--out", "c"],
        d,
    );
    assert_ne!(read(d.join("a/scenes.json")), read(d.join("c/scenes.json")));
}

#[test]
fn default_config_scene_counts() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["gen", "--set", "data.n_test=0", "--out", "data"],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("data/scenes.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let scenes = v["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 2000);
    assert!(scenes
        .iter()
        .all(|s| (3..=8).contains(&s["objects"].as_array().unwrap().len())));
    // frozen from the reference priors at seed 0
    assert!(
        stdout.contains("2000 scenes, 10987 objects, 21974 base edges, 27658 augmented edges"),
        "{stdout}"
    );
    assert!(!dir.path().join("data/test_scenes.json").exists());
}

#[test]
fn baseline_gen_has_no_augmented_edges() {
    let dir = setup();
    let stdout = ok(
        &[
            "gen",
            "--config",
            "run.cfg",
            "--variant",
            "baseline",
            "--out",
            "d",
        ],
        dir.path(),
    );
    assert!(stdout.contains(" 0 augmented edges"), "{stdout}");
}

#[test]
fn variants_train_eval_and_probe() {
    let dir = setup();
    let d = dir.path();
    ok(&["gen", "--config", "run.cfg", "--out", "data"], d);
    for v in ["baseline", "triplet", "triplet_da"] {
        ok(
            &[
                "train",
                "--config",
                "run.cfg",
                "--data",
                "data",
                "--variant",
                v,
            ],
            d,
        );
        let run = d.join("data").join(v);
        assert!(run.join("checkpoint.json").is_file());
        let history = fs::read_to_string(run.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 1 + 3);
        assert_eq!(history.lines().next(), Some("epoch,loss,miou,relscore"));
    }
    let ckpts: Vec<Vec<u8>> = ["baseline", "triplet", "triplet_da"]
        .iter()
        .map(|v| read(d.join("data").join(v).join("checkpoint.json")))
        .collect();
    assert_ne!(ckpts[0], ckpts[1]);
    assert_ne!(ckpts[1], ckpts[2]);

    let eval = [
        "eval", "--config", "run.cfg", "--data", "data", "--split", "train",
    ];
    ok(&eval, d);
    let first = read(d.join("data/triplet_da/metrics.json"));
    ok(&eval, d);
    assert_eq!(first, read(d.join("data/triplet_da/metrics.json")));
    let m: serde_json::Value = serde_json::from_slice(&first).unwrap();
    for key in ["mean_iou", "relation_score", "relation_score_base"] {
        let x = m[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x), "{key} = {x}");
    }
    assert_eq!(m["per_scene"].as_array().unwrap().len(), 24);

    let probe = [
        "probe", "--config", "run.cfg", "--data", "data", "--out", "p1",
    ];
    ok(&probe, d);
    let artifacts = files(&d.join("p1"));
    assert_eq!(
        artifacts,
        [
            "cluster_tree.json",
            "distance_heatmap.csv",
            "embeddings.csv",
            "embeddings_top5.csv",
            "probe_report.json"
        ]
    );
    ok(
        &[
            "probe", "--config", "run.cfg", "--data", "data", "--out", "p2",
        ],
        d,
    );
    for f in &artifacts {
        assert_eq!(
            read(d.join("p1").join(f)),
            read(d.join("p2").join(f)),
            "{f}"
        );
    }
    let top = fs::read_to_string(d.join("p1/embeddings_top5.csv")).unwrap();
    let mut labels: Vec<&str> = top
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    labels.sort();
    labels.dedup();
    assert!(labels.len() <= 5);
    let full = fs::read_to_string(d.join("p1/embeddings.csv")).unwrap();
    let nodes: usize = {
        let t: serde_json::Value =
            serde_json::from_slice(&read(d.join("data/test_scenes.json"))).unwrap();
        t["scenes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["objects"].as_array().unwrap().len())
            .sum()
    };
    assert_eq!(full.lines().count(), nodes + 1);
}

#[test]
fn data_dir_from_environment() {
    let dir = setup();
    let d = dir.path();
    ok(&["gen", "--config", "run.cfg", "--out", "envdata"], d);
    let out = Command::new(env!("CARGO_BIN_EXE_sglayout"))
        .args(["train", "--config", "run.cfg", "--variant", "baseline"])
        .current_dir(d)
        .env("SGLAYOUT_DATA_DIR", d.join("envdata"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(d.join("envdata/baseline/checkpoint.json").is_file());
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    let code = |args: &[&str]| sglayout(args, d).status.code().unwrap();
    assert_eq!(code(&["gen", "--set", "no.such.key=1"]), 2);
    assert_eq!(code(&["gen", "--variant", "other"]), 2);
    assert_eq!(code(&["gen", "--set", "train.epochs=0"]), 2);
    assert_eq!(code(&["gen", "--config", "missing.cfg"]), 5);
    assert_eq!(code(&["train", "--data", "nowhere"]), 5);

    ok(&["gen", "--config", "run.cfg", "--out", "data"], d);
    let nan = sglayout(
        &[
            "train",
            "--config",
            "run.cfg",
            "--data",
            "data",
            "--set",
            "train.learning_rate=1e300",
        ],
        d,
    );
    assert_eq!(nan.status.code(), Some(4));
    let err = String::from_utf8_lossy(&nan.stderr);
    assert!(err.contains("non-finite loss at epoch"), "{err}");

    fs::write(d.join("data/test_scenes.json"), "{\"scenes\": [").unwrap();
    ok(&["train", "--config", "run.cfg", "--data", "data"], d);
    assert_eq!(code(&["eval", "--config", "run.cfg", "--data", "data"]), 3);

    // checkpoint from a different vocabulary
    let vocab_path = d.join("data/vocab.json");
    let mut vocab: serde_json::Value = serde_json::from_slice(&read(vocab_path.clone())).unwrap();
    vocab["object_categories"][0] = "renamed".into();
    fs::write(&vocab_path, vocab.to_string()).unwrap();
    assert_eq!(
        code(&["eval", "--config", "run.cfg", "--data", "data", "--split", "train"]),
        3
    );
}
