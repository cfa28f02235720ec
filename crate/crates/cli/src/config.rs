//! Flat `key = value` run configuration.

use std::path::Path;

use sglayout::datagen::SceneGenConfig;
use sglayout::experiment::variant_train_config;
use sglayout::graphbuild::AugmentConfig;
use sglayout::introspect::ProbeConfig;
use sglayout::optim::OptimizerKind;
use sglayout::params::ModelConfig;
use sglayout::training::TrainConfig;
use sglayout::{Error, Result, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub data: SceneGenConfig,
    pub n_test: usize,
    pub edges_per_node: usize,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub probe_seed: u64,
    /// Classes kept in the filtered embedding export.
    pub export_top_k: usize,
    /// Classes entering the mean-embedding heatmap and cluster tree.
    pub cluster_top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::TripletDa,
            seed: 0,
            data: SceneGenConfig::default(),
            n_test: 200,
            edges_per_node: 2,
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            probe_seed: 0,
            export_top_k: 5,
            cluster_top_k: 50,
        }
    }
}

#[cfg(test)]
pub const KEYS: &[&str] = &[
    "variant",
    "seed",
    "data.n_scenes",
    "data.n_test",
    "data.min_objects",
    "data.max_objects",
    "data.min_area",
    "data.mask_side",
    "graph.edges_per_node",
    "augment.overlap_threshold",
    "augment.max_factor",
    "model.embed_dim",
    "model.hidden_dim",
    "model.n_layers",
    "model.init_scale",
    "model.mask_side",
    "model.triplet_side",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.optimizer",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.eval_every",
    "loss.w_box",
    "loss.w_mask",
    "loss.w_tmask",
    "loss.w_superbox",
    "probe.c",
    "probe.epochs",
    "probe.seed",
    "probe.export_top_k",
    "probe.cluster_top_k",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => {
                self.variant = Variant::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "variant: expected baseline, triplet or triplet_da, got {value:?}"
                    ))
                })?
            }
            "seed" => self.seed = num(key, value)?,
            "data.n_scenes" => self.data.n_scenes = num(key, value)?,
            "data.n_test" => self.n_test = num(key, value)?,
            "data.min_objects" => self.data.min_objects = num(key, value)?,
            "data.max_objects" => self.data.max_objects = num(key, value)?,
            "data.min_area" => self.data.min_area = num(key, value)?,
            "data.mask_side" => self.data.mask_side = num(key, value)?,
            "graph.edges_per_node" => self.edges_per_node = num(key, value)?,
            "augment.overlap_threshold" => self.augment.overlap_threshold = num(key, value)?,
            "augment.max_factor" => self.augment.max_augmented_factor = num(key, value)?,
            "model.embed_dim" => self.model.gcn.embed_dim = num(key, value)?,
            "model.hidden_dim" => self.model.gcn.hidden_dim = num(key, value)?,
            "model.n_layers" => self.model.gcn.n_layers = num(key, value)?,
            "model.init_scale" => self.model.gcn.init_scale = num(key, value)?,
            "model.mask_side" => self.model.heads.mask_side = num(key, value)?,
            "model.triplet_side" => self.model.heads.triplet_side = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = num(key, value)?,
            "train.optimizer" => {
                self.train.optimizer = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::default(),
                    _ => {
                        return Err(Error::Config(format!(
                            "train.optimizer: expected sgd or adam, got {value:?}"
                        )))
                    }
                }
            }
            "train.beta1" | "train.beta2" | "train.eps" => {
                let v: f64 = num(key, value)?;
                match &mut self.train.optimizer {
                    OptimizerKind::Adam { beta1, beta2, eps } => match key {
                        "train.beta1" => *beta1 = v,
                        "train.beta2" => *beta2 = v,
                        _ => *eps = v,
                    },
                    OptimizerKind::Sgd => {
                        return Err(Error::Config(format!(
                            "{key} requires train.optimizer = adam"
                        )))
                    }
                }
            }
            "train.eval_every" => self.train.eval_every = num(key, value)?,
            "loss.w_box" => self.train.loss_weights.w_box = num(key, value)?,
            "loss.w_mask" => self.train.loss_weights.w_mask = num(key, value)?,
            "loss.w_tmask" => self.train.loss_weights.w_tmask = num(key, value)?,
            "loss.w_superbox" => self.train.loss_weights.w_superbox = num(key, value)?,
            "probe.c" => self.probe.c = num(key, value)?,
            "probe.epochs" => self.probe.epochs = num(key, value)?,
            "probe.seed" => self.probe_seed = num(key, value)?,
            "probe.export_top_k" => self.export_top_k = num(key, value)?,
            "probe.cluster_top_k" => self.cluster_top_k = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{source}:{}: expected key = value", n + 1))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{source}:{}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Propagates the run seed into every seeded component.
    pub fn finalize(&mut self) {
        self.data.seed = self.seed;
        self.model.gcn.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Training config with the variant's loss weights and augmentation.
    pub fn variant_train(&self) -> TrainConfig {
        let base = TrainConfig {
            augmentation: self.augment,
            ..self.train.clone()
        };
        variant_train_config(&base, self.variant)
    }

    pub fn variant_augment(&self) -> AugmentConfig {
        self.variant.augmentation(self.augment)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        self.variant_train().validate()?;
        self.probe.validate()?;
        if self.edges_per_node == 0 {
            return Err(Error::Config("graph.edges_per_node must be >= 1".into()));
        }
        if self.export_top_k == 0 || self.cluster_top_k == 0 {
            return Err(Error::Config("probe top-k values must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting.
    pub fn to_text(&self) -> String {
        let (b1, b2, eps) = match self.train.optimizer {
            OptimizerKind::Adam { beta1, beta2, eps } => (Some(beta1), Some(beta2), Some(eps)),
            OptimizerKind::Sgd => (None, None, None),
        };
        let w = &self.train.loss_weights;
        let mut lines = vec![
            format!("variant = {}", self.variant),
            format!("seed = {}", self.seed),
            format!("data.n_scenes = {}", self.data.n_scenes),
            format!("data.n_test = {}", self.n_test),
            format!("data.min_objects = {}", self.data.min_objects),
            format!("data.max_objects = {}", self.data.max_objects),
            format!("data.min_area = {}", self.data.min_area),
            format!("data.mask_side = {}", self.data.mask_side),
            format!("graph.edges_per_node = {}", self.edges_per_node),
            format!(
                "augment.overlap_threshold = {}",
                self.augment.overlap_threshold
            ),
            format!("augment.max_factor = {}", self.augment.max_augmented_factor),
            format!("model.embed_dim = {}", self.model.gcn.embed_dim),
            format!("model.hidden_dim = {}", self.model.gcn.hidden_dim),
            format!("model.n_layers = {}", self.model.gcn.n_layers),
            format!("model.init_scale = {}", self.model.gcn.init_scale),
            format!("model.mask_side = {}", self.model.heads.mask_side),
            format!("model.triplet_side = {}", self.model.heads.triplet_side),
            format!("train.epochs = {}", self.train.epochs),
            format!("train.batch_size = {}", self.train.batch_size),
            format!("train.learning_rate = {}", self.train.learning_rate),
            format!(
                "train.optimizer = {}",
                if b1.is_some() { "adam" } else { "sgd" }
            ),
        ];
        if let (Some(b1), Some(b2), Some(eps)) = (b1, b2, eps) {
            lines.push(format!("train.beta1 = {b1}"));
            lines.push(format!("train.beta2 = {b2}"));
            lines.push(format!("train.eps = {eps}"));
        }
        lines.extend([
            format!("train.eval_every = {}", self.train.eval_every),
            format!("loss.w_box = {}", w.w_box),
            format!("loss.w_mask = {}", w.w_mask),
            format!("loss.w_tmask = {}", w.w_tmask),
            format!("loss.w_superbox = {}", w.w_superbox),
            format!("probe.c = {}", self.probe.c),
            format!("probe.epochs = {}", self.probe.epochs),
            format!("probe.seed = {}", self.probe_seed),
            format!("probe.export_top_k = {}", self.export_top_k),
            format!("probe.cluster_top_k = {}", self.cluster_top_k),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
