//! Minibatch training of the layout network.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphbuild::{augment_graph, build_scene_graph, variant_view, AugmentConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::optim::{Optimizer, OptimizerKind};
use crate::params::{init_params, Model, ModelConfig};
use crate::prediction::{loss_on_tape, LossWeights};
use crate::rng::{keyed_rng, Domain};
use crate::tape::Tape;
use crate::types::{Scene, SceneGraph, Vocab};

/// A scene together with the graph the model reads.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub scene: Scene,
    pub graph: SceneGraph,
}

/// Builds base graphs for `scenes` (scene `i` uses its own stream) and
/// augments them per `aug`.
pub fn build_samples(
    scenes: &[Scene],
    seed: u64,
    edges_per_node: usize,
    aug: &AugmentConfig,
) -> Result<Vec<Sample>> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, scene)| {
            let mut rng = keyed_rng(seed, Domain::Graph, i as u64);
            let base = build_scene_graph(scene, &mut rng, edges_per_node)?;
            Ok(Sample {
                scene: scene.clone(),
                graph: augment_graph(scene, &base, aug),
            })
        })
        .collect()
}

/// Re-derives each sample's graph for a different augmentation setting.
pub fn with_augmentation(samples: &[Sample], aug: &AugmentConfig) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| Sample {
            scene: s.scene.clone(),
            graph: variant_view(&s.scene, &s.graph, aug),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss_weights: LossWeights,
    /// Used when scoring augmented relations during evaluation.
    pub augmentation: AugmentConfig,
    pub seed: u64,
    /// Evaluate on the training set every this many epochs (0 = never).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            loss_weights: LossWeights::default(),
            augmentation: AugmentConfig::default(),
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        // zero is accepted so a run can be checked for inertness
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        self.loss_weights.validate()?;
        self.augmentation.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub miou: Option<f64>,
    pub relscore: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// `epoch,loss,miou,relscore`, empty cells where not evaluated.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,loss,miou,relscore\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                e.loss,
                opt(e.miou),
                opt(e.relscore)
            ));
        }
        out
    }
}

/// Loss and gradient of one sample, accumulated into `grads` with weight
/// `scale`.
pub fn accumulate_sample(
    model: &Model,
    sample: &Sample,
    weights: &LossWeights,
    scale: f64,
    grads: &mut crate::params::Gradients,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = loss_on_tape(&mut tape, model, &sample.scene, &sample.graph, weights)?;
    let value = tape.scalar(loss);
    if value.is_finite() {
        tape.backward_into(model, loss, scale, grads)?;
    }
    Ok(value)
}

/// Trains from freshly initialized parameters.
pub fn train(
    samples: &[Sample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
) -> Result<(Model, History)> {
    let mut model = init_params(model_cfg, vocab)?;
    let history = train_model(&mut model, samples, cfg)?;
    Ok((model, history))
}

/// Continues training `model` in place.
pub fn train_model(model: &mut Model, samples: &[Sample], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model);
    let mut history = History::default();
    let mut grads = model.zero_gradients();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = keyed_rng(cfg.seed, Domain::Shuffle, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads
                .iter_mut()
                .for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss =
                    accumulate_sample(model, &samples[i], &cfg.loss_weights, scale, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: batch_idx,
                        loss,
                    });
                }
                epoch_loss += loss;
            }
            opt.step(model, &grads);
        }
        let loss = epoch_loss / samples.len() as f64;
        let mut record = EpochRecord {
            epoch,
            loss,
            miou: None,
            relscore: None,
        };
        if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            let report = evaluate(samples, model, &cfg.augmentation);
            record.miou = Some(report.mean_iou);
            record.relscore = report.relation_score;
        }
        history.epochs.push(record);
    }
    Ok(history)
}

/// Evaluation report with the training loss curve attached.
pub fn evaluate_with_history(
    samples: &[Sample],
    model: &Model,
    aug: &AugmentConfig,
    history: &History,
) -> MetricsReport {
    let mut report = evaluate(samples, model, aug);
    report.loss_curve = history.losses();
    report
}
