//! Train-and-evaluate runs comparing the model variants on one dataset.

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, generate_test_split, SceneGenConfig};
use crate::error::Result;
use crate::graphbuild::AugmentConfig;
use crate::introspect::{collect_embeddings, linear_probe, ProbeConfig, ProbeReport};
use crate::metrics::{evaluate, MetricsReport};
use crate::params::{Model, ModelConfig};
use crate::training::{build_samples, train, with_augmentation, History, Sample, TrainConfig};
use crate::variant::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: SceneGenConfig,
    pub n_test: usize,
    pub edges_per_node: usize,
    pub model: ModelConfig,
    /// Loss weights and augmentation here are overridden per variant.
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub probe_seed: u64,
}

impl ExperimentConfig {
    /// Same experiment with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.data.seed = seed;
        cfg.model.gcn.seed = seed;
        cfg.train.seed = seed;
        cfg
    }
}

pub struct Dataset {
    pub vocab: crate::types::Vocab,
    /// Base graphs only; variants re-derive their own view.
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let vocab = cfg.data.vocab()?;
    let off = AugmentConfig::disabled();
    let train = build_samples(
        &generate_dataset(&cfg.data)?,
        cfg.data.seed,
        cfg.edges_per_node,
        &off,
    )?;
    let test_seed = cfg.data.seed ^ 0x7e57;
    let test = build_samples(
        &generate_test_split(&cfg.data, cfg.n_test)?,
        test_seed,
        cfg.edges_per_node,
        &off,
    )?;
    Ok(Dataset { vocab, train, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub test_metrics: MetricsReport,
    pub probe: ProbeReport,
    pub history: History,
}

pub fn variant_train_config(base: &TrainConfig, variant: Variant) -> TrainConfig {
    TrainConfig {
        loss_weights: variant.loss_weights(base.loss_weights),
        augmentation: variant.augmentation(base.augmentation),
        ..base.clone()
    }
}

pub fn run_variant(
    data: &Dataset,
    cfg: &ExperimentConfig,
    variant: Variant,
) -> Result<(Model, VariantOutcome)> {
    let tcfg = variant_train_config(&cfg.train, variant);
    let train_set = with_augmentation(&data.train, &tcfg.augmentation);
    let test_set = with_augmentation(&data.test, &tcfg.augmentation);
    let (model, history) = train(&train_set, &tcfg, &cfg.model, &data.vocab)?;
    let mut test_metrics = evaluate(&test_set, &model, &tcfg.augmentation);
    test_metrics.loss_curve = history.losses();
    let emb = collect_embeddings(&test_set, &model, variant.name())?;
    let probe = linear_probe(&emb, cfg.probe_seed, &cfg.probe)?;
    Ok((
        model,
        VariantOutcome {
            variant,
            test_metrics,
            probe,
            history,
        },
    ))
}
