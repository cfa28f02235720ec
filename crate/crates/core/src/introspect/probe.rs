//! One-vs-rest linear SVM probe.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabelledEmbeddings;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

pub const TEST_FRACTION: f64 = 0.2;
const ORDER_STREAM: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub epochs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c: 1.0,
            epochs: 200,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "probe C must be positive, got {}",
                self.c
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("probe epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDescriptor {
    pub seed: u64,
    pub test_fraction: f64,
    pub stratified: bool,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub category: usize,
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub source: String,
    pub per_class_accuracy: Vec<ClassAccuracy>,
    pub mean_accuracy: f64,
    /// Classes with fewer than two samples.
    pub excluded_classes: Vec<usize>,
    pub split: SplitDescriptor,
    pub hyperparameters: ProbeConfig,
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn stratified_split(emb: &LabelledEmbeddings, classes: &[usize], seed: u64) -> Split {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &c in classes {
        let mut idx: Vec<usize> = (0..emb.len()).filter(|&i| emb.labels[i] == c).collect();
        let mut rng = keyed_rng(seed, Domain::Probe, c as u64);
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * TEST_FRACTION).round() as usize).max(1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pegasos-style subgradient descent on the primal hinge objective
/// `lambda/2 |w|^2 + mean(hinge)` with `lambda = 1 / (C n)`.
fn train_binary(x: &[Vec<f64>], y: &[f64], orders: &[Vec<usize>], lambda: f64) -> Vec<f64> {
    let dim = x[0].len();
    let mut w = vec![0.0; dim];
    let radius = 1.0 / lambda.sqrt();
    let mut t = 0usize;
    for order in orders {
        for &i in order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let violated = y[i] * dot(&w, &x[i]) < 1.0;
            let shrink = 1.0 - eta * lambda;
            for wk in w.iter_mut() {
                *wk *= shrink;
            }
            if violated {
                for (wk, xk) in w.iter_mut().zip(&x[i]) {
                    *wk += eta * y[i] * xk;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                for wk in w.iter_mut() {
                    *wk *= s;
                }
            }
        }
    }
    w
}

pub fn linear_probe(
    emb: &LabelledEmbeddings,
    split_seed: u64,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    emb.validate()?;
    cfg.validate()?;
    let counts = emb.class_counts();
    let classes: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] >= 2).collect();
    let excluded: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == 1).collect();
    if classes.len() < 2 {
        return Err(Error::Config(format!(
            "probe needs at least 2 classes with 2+ samples, got {}",
            classes.len()
        )));
    }
    let split = stratified_split(emb, &classes, split_seed);

    // constant bias feature at the training set's RMS row norm
    let sq: f64 = split
        .train
        .iter()
        .map(|&i| dot(&emb.vectors[i], &emb.vectors[i]))
        .sum();
    let mut bias = (sq / split.train.len() as f64).sqrt();
    if bias == 0.0 {
        bias = 1.0;
    }
    let augment = |i: usize| {
        let mut v = emb.vectors[i].clone();
        v.push(bias);
        v
    };
    let x_train: Vec<Vec<f64>> = split.train.iter().map(|&i| augment(i)).collect();
    let x_test: Vec<Vec<f64>> = split.test.iter().map(|&i| augment(i)).collect();
    let n = x_train.len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let orders: Vec<Vec<usize>> = (0..cfg.epochs)
        .map(|e| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut keyed_rng(
                split_seed,
                Domain::Probe,
                ORDER_STREAM + e as u64,
            ));
            order
        })
        .collect();

    let weights: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let y: Vec<f64> = split
                .train
                .iter()
                .map(|&i| if emb.labels[i] == c { 1.0 } else { -1.0 })
                .collect();
            train_binary(&x_train, &y, &orders, lambda)
        })
        .collect();

    let mut correct = vec![0usize; classes.len()];
    let mut total = vec![0usize; classes.len()];
    for (row, &i) in x_test.iter().zip(&split.test) {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, w) in weights.iter().enumerate() {
            let s = dot(w, row);
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        let truth = classes
            .binary_search(&emb.labels[i])
            .expect("test label is a probed class");
        total[truth] += 1;
        if best == truth {
            correct[truth] += 1;
        }
    }

    let per_class_accuracy: Vec<ClassAccuracy> = classes
        .iter()
        .enumerate()
        .map(|(k, &c)| ClassAccuracy {
            category: c,
            name: emb.category_names[c].clone(),
            n_train: counts[c] - total[k],
            n_test: total[k],
            accuracy: correct[k] as f64 / total[k] as f64,
        })
        .collect();
    let mean_accuracy = per_class_accuracy.iter().map(|a| a.accuracy).sum::<f64>()
        / per_class_accuracy.len() as f64;
    Ok(ProbeReport {
        source: emb.source.clone(),
        per_class_accuracy,
        mean_accuracy,
        excluded_classes: excluded,
        split: SplitDescriptor {
            seed: split_seed,
            test_fraction: TEST_FRACTION,
            stratified: true,
            n_train: split.train.len(),
            n_test: split.test.len(),
        },
        hyperparameters: *cfg,
    })
}
