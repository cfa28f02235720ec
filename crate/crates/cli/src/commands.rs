use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sglayout::datagen::{generate_dataset, generate_test_split, load_scenes, save_scenes};
use sglayout::graphbuild::{load_graphs, save_graphs};
use sglayout::introspect::{
    agglomerate, collect_embeddings, distance_matrix, export_embeddings, linear_probe,
    mean_embeddings, write_heatmap,
};
use sglayout::metrics::{evaluate, MetricsReport};
use sglayout::training::{build_samples, train, with_augmentation, Sample};
use sglayout::{Error, Model, Result, Vocab};

use crate::config::RunConfig;

pub const SCENES: &str = "scenes.json";
pub const GRAPHS: &str = "graphs.json";
pub const TEST_SCENES: &str = "test_scenes.json";
pub const TEST_GRAPHS: &str = "test_graphs.json";
pub const VOCAB: &str = "vocab.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const HISTORY: &str = "history.csv";
pub const RUN_CONFIG: &str = "run.cfg";
pub const METRICS: &str = "metrics.json";
pub const PROBE_REPORT: &str = "probe_report.json";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const HEATMAP: &str = "distance_heatmap.csv";
pub const CLUSTER_TREE: &str = "cluster_tree.json";

pub fn top_k_embeddings_name(k: usize) -> String {
    format!("embeddings_top{k}.csv")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn files(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => (SCENES, GRAPHS),
            Split::Test => (TEST_SCENES, TEST_GRAPHS),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load_vocab(data: &Path) -> Result<Vocab> {
    let path = data.join(VOCAB);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let vocab: Vocab = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    vocab.validate()?;
    Ok(vocab)
}

/// Scenes and stored graphs of one split, re-viewed for the run's variant.
pub fn load_split(
    data: &Path,
    split: Split,
    cfg: &RunConfig,
    vocab: &Vocab,
) -> Result<Vec<Sample>> {
    let (scene_file, graph_file) = split.files();
    let report = load_scenes(&data.join(scene_file), vocab)?;
    if report.dropped_objects > 0 || report.discarded_scenes > 0 {
        eprintln!(
            "warning: {scene_file}: dropped {} objects, discarded {} scenes",
            report.dropped_objects, report.discarded_scenes
        );
    }
    let graphs = load_graphs(&data.join(graph_file), vocab)?;
    if graphs.len() != report.scenes.len() {
        return Err(Error::Validation {
            field: graph_file.into(),
            message: format!("{} graphs for {} scenes", graphs.len(), report.scenes.len()),
        });
    }
    for (i, (g, s)) in graphs.iter().zip(&report.scenes).enumerate() {
        if g.node_categories != s.categories() {
            return Err(Error::Validation {
                field: format!("{graph_file}: graphs[{i}].nodes"),
                message: "do not match the scene's objects".into(),
            });
        }
    }
    let samples: Vec<Sample> = report
        .scenes
        .into_iter()
        .zip(graphs)
        .map(|(scene, graph)| Sample { scene, graph })
        .collect();
    if samples.is_empty() {
        return Err(Error::Validation {
            field: scene_file.into(),
            message: "no scenes".into(),
        });
    }
    Ok(with_augmentation(&samples, &cfg.variant_augment()))
}

fn load_model(ckpt: &Path, vocab: &Vocab) -> Result<Model> {
    let model = Model::load(ckpt)?;
    model.check_vocab(vocab)?;
    Ok(model)
}

fn write_split(out: &Path, files: (&str, &str), samples: &[Sample], vocab: &Vocab) -> Result<()> {
    let scenes: Vec<_> = samples.iter().map(|s| s.scene.clone()).collect();
    let graphs: Vec<_> = samples.iter().map(|s| s.graph.clone()).collect();
    save_scenes(&out.join(files.0), &scenes, vocab)?;
    save_graphs(&out.join(files.1), &graphs, vocab)
}

fn describe(label: &str, samples: &[Sample]) {
    let objects: usize = samples.iter().map(|s| s.scene.len()).sum();
    let base: usize = samples.iter().map(|s| s.graph.base_edge_count()).sum();
    let aug: usize = samples.iter().map(|s| s.graph.augmented_edge_count()).sum();
    println!(
        "{label}: {} scenes, {objects} objects, {base} base edges, {aug} augmented edges",
        samples.len()
    );
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let vocab = cfg.data.vocab()?;
    let aug = cfg.variant_augment();
    let train_scenes = generate_dataset(&cfg.data)?;
    let train_set = build_samples(&train_scenes, cfg.seed, cfg.edges_per_node, &aug)?;
    create_dir(out)?;
    write(&out.join(VOCAB), to_json(&vocab))?;
    write_split(out, (SCENES, GRAPHS), &train_set, &vocab)?;
    describe("train", &train_set);
    if cfg.n_test > 0 {
        let test_scenes = generate_test_split(&cfg.data, cfg.n_test)?;
        let test_set = build_samples(&test_scenes, cfg.seed ^ 0x7e57, cfg.edges_per_node, &aug)?;
        write_split(out, (TEST_SCENES, TEST_GRAPHS), &test_set, &vocab)?;
        describe("test", &test_set);
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let vocab = load_vocab(data)?;
    let samples = load_split(data, Split::Train, cfg, &vocab)?;
    let tcfg = cfg.variant_train();
    let (model, history) = train(&samples, &tcfg, &cfg.model, &vocab)?;
    create_dir(out)?;
    model.save(&out.join(CHECKPOINT))?;
    write(&out.join(HISTORY), history.to_csv())?;
    write(&out.join(RUN_CONFIG), cfg.to_text())?;
    let losses = history.losses();
    println!(
        "{}: {} epochs, loss {:.6} -> {:.6}, {} parameters",
        cfg.variant,
        losses.len(),
        losses[0],
        losses[losses.len() - 1],
        model.num_parameters()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    variant: &'a str,
    split: &'a str,
    #[serde(flatten)]
    metrics: MetricsReport,
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, ckpt: &Path, split: Split, out: &Path) -> Result<()> {
    let vocab = load_vocab(data)?;
    let model = load_model(ckpt, &vocab)?;
    let samples = load_split(data, split, cfg, &vocab)?;
    let metrics = evaluate(&samples, &model, &cfg.variant_augment());
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} on {}: mIoU {:.4}, relation score {} (base edges {})",
        cfg.variant,
        split.name(),
        metrics.mean_iou,
        fmt(metrics.relation_score),
        fmt(metrics.relation_score_base)
    );
    create_dir(out)?;
    let output = EvalOutput {
        variant: cfg.variant.name(),
        split: split.name(),
        metrics,
    };
    write(&out.join(METRICS), to_json(&output))
}

pub fn cmd_probe(
    cfg: &RunConfig,
    data: &Path,
    ckpt: &Path,
    split: Split,
    out: &Path,
) -> Result<()> {
    let vocab = load_vocab(data)?;
    let model = load_model(ckpt, &vocab)?;
    let samples = load_split(data, split, cfg, &vocab)?;
    let emb = collect_embeddings(&samples, &model, cfg.variant.name())?;
    let report = linear_probe(&emb, cfg.probe_seed, &cfg.probe)?;
    let means = mean_embeddings(&emb, cfg.cluster_top_k)?;
    let dist = distance_matrix(&means.means)?;
    let tree = agglomerate(&dist)?;
    let names: Vec<String> = means
        .categories
        .iter()
        .map(|&c| vocab.category_name(c).to_string())
        .collect();

    create_dir(out)?;
    write(&out.join(PROBE_REPORT), to_json(&report))?;
    export_embeddings(&emb, &out.join(EMBEDDINGS), None)?;
    export_embeddings(
        &emb,
        &out.join(top_k_embeddings_name(cfg.export_top_k)),
        Some(cfg.export_top_k),
    )?;
    write_heatmap(&out.join(HEATMAP), &names, &dist, &tree.leaf_order)?;
    write(&out.join(CLUSTER_TREE), tree.to_json() + "\n")?;
    println!(
        "{} on {}: probe mean accuracy {:.4} over {} classes ({} nodes)",
        cfg.variant,
        split.name(),
        report.mean_accuracy,
        report.per_class_accuracy.len(),
        emb.len()
    );
    Ok(())
}

pub fn default_run_dir(data: &Path, cfg: &RunConfig) -> PathBuf {
    data.join(cfg.variant.name())
}
