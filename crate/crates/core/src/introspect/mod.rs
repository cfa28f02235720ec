//! Inspection of learned object embeddings: separability probe, class
//! means, distance heatmap, cluster tree and CSV export.

mod cluster;
mod export;
mod probe;

pub use cluster::{agglomerate, ClusterTree};
pub use export::{export_embeddings, heatmap_csv, import_embeddings, write_heatmap};
pub use probe::{linear_probe, ClassAccuracy, ProbeConfig, ProbeReport, SplitDescriptor};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::embed_graph;
use crate::params::Model;
use crate::training::Sample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledEmbeddings {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub category_names: Vec<String>,
    pub source: String,
}

impl LabelledEmbeddings {
    pub fn new(
        vectors: Vec<Vec<f64>>,
        labels: Vec<usize>,
        category_names: Vec<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let emb = LabelledEmbeddings {
            vectors,
            labels,
            category_names,
            source: source.into(),
        };
        emb.validate()?;
        Ok(emb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() {
            return Err(Error::validation("embeddings.vectors", "no rows"));
        }
        if self.vectors.len() != self.labels.len() {
            return Err(Error::validation(
                "embeddings.labels",
                format!(
                    "{} labels for {} vectors",
                    self.labels.len(),
                    self.vectors.len()
                ),
            ));
        }
        let dim = self.vectors[0].len();
        if let Some(i) = self.vectors.iter().position(|v| v.len() != dim) {
            return Err(Error::validation(
                format!("embeddings.vectors[{i}]"),
                format!("expected {dim} components"),
            ));
        }
        if let Some(i) = self
            .labels
            .iter()
            .position(|&l| l >= self.category_names.len())
        {
            return Err(Error::validation(
                format!("embeddings.labels[{i}]"),
                "label out of range",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.category_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The `k` most frequent classes, ties broken by category index.
    pub fn top_classes(&self, k: usize) -> Vec<usize> {
        let counts = self.class_counts();
        let mut classes: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
        classes.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        classes.truncate(k);
        classes.sort_unstable();
        classes
    }

    /// Rows whose label is in `classes`, order preserved.
    pub fn filter_classes(&self, classes: &[usize]) -> LabelledEmbeddings {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        LabelledEmbeddings {
            vectors: keep.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            category_names: self.category_names.clone(),
            source: self.source.clone(),
        }
    }
}

/// Final object embeddings of every node, in sample then node order.
pub fn collect_embeddings(
    samples: &[Sample],
    model: &Model,
    source: &str,
) -> Result<LabelledEmbeddings> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for sample in samples {
        let out = embed_graph(&sample.graph, model);
        vectors.extend(out.object_embeddings);
        labels.extend_from_slice(&sample.graph.node_categories);
    }
    LabelledEmbeddings::new(
        vectors,
        labels,
        model.vocab.object_categories.clone(),
        source,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMeans {
    pub categories: Vec<usize>,
    pub counts: Vec<usize>,
    pub means: Vec<Vec<f64>>,
}

/// Per-class mean vectors for the `top_k` most frequent classes, ordered by
/// category index.
pub fn mean_embeddings(emb: &LabelledEmbeddings, top_k: usize) -> Result<ClassMeans> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be >= 1".into()));
    }
    emb.validate()?;
    let categories = emb.top_classes(top_k);
    let counts_all = emb.class_counts();
    let dim = emb.dim();
    let mut means = Vec::with_capacity(categories.len());
    for &c in &categories {
        let mut sum = vec![0.0; dim];
        for (v, _) in emb.vectors.iter().zip(&emb.labels).filter(|(_, &l)| l == c) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = counts_all[c] as f64;
        means.push(sum.into_iter().map(|s| s / n).collect());
    }
    Ok(ClassMeans {
        counts: categories.iter().map(|&c| counts_all[c]).collect(),
        categories,
        means,
    })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise Euclidean distances; exactly symmetric with a zero diagonal.
pub fn distance_matrix(means: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = means.len();
    if k < 2 {
        return Err(Error::Config(format!(
            "distance matrix needs at least 2 points, got {k}"
        )));
    }
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = euclidean(&means[i], &means[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn means_of_single_and_opposite_samples() {
        let emb = LabelledEmbeddings::new(
            vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![-3.0, 1.0]],
            vec![0, 1, 1],
            names(2),
            "t",
        )
        .unwrap();
        let m = mean_embeddings(&emb, 10).unwrap();
        assert_eq!(m.categories, vec![0, 1]);
        assert_eq!(m.means, vec![vec![1.0, 2.0], vec![0.0, 0.0]]);
        assert_eq!(m.counts, vec![1, 2]);
    }

    #[test]
    fn top_k_prefers_frequency_then_index() {
        let emb =
            LabelledEmbeddings::new(vec![vec![0.0]; 6], vec![2, 2, 1, 0, 3, 3], names(4), "t")
                .unwrap();
        assert_eq!(emb.top_classes(2), vec![2, 3]);
        assert_eq!(emb.top_classes(3), vec![0, 2, 3]);
        assert!(mean_embeddings(&emb, 0).is_err());
    }

    #[test]
    fn one_dimensional_distances() {
        let d = distance_matrix(&[vec![0.0], vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(
            d,
            vec![
                vec![0.0, 3.0, 4.0],
                vec![3.0, 0.0, 1.0],
                vec![4.0, 1.0, 0.0]
            ]
        );
        assert_eq!(
            distance_matrix(&vec![vec![1.0; 3]; 3]).unwrap(),
            vec![vec![0.0; 3]; 3]
        );
        assert!(distance_matrix(&[vec![1.0]]).is_err());
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(LabelledEmbeddings::new(vec![vec![0.0]], vec![3], names(2), "t").is_err());
        assert!(LabelledEmbeddings::new(vec![], vec![], names(2), "t").is_err());
        assert!(LabelledEmbeddings::new(
            vec![vec![0.0], vec![0.0, 1.0]],
            vec![0, 0],
            names(2),
            "t"
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn distance_matrix_is_metric(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..8)) {
            let d = distance_matrix(&pts).unwrap();
            let k = pts.len();
            for i in 0..k {
                prop_assert_eq!(d[i][i], 0.0);
                for j in 0..k {
                    prop_assert!(d[i][j] >= 0.0);
                    prop_assert_eq!(d[i][j], d[j][i]);
                    for m in 0..k {
                        prop_assert!(d[i][j] <= d[i][m] + d[m][j] + 1e-12);
                    }
                }
            }
        }
    }
}
