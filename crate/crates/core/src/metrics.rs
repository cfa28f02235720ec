//! Layout composition and layout-quality metrics.

use serde::{Deserialize, Serialize};

use crate::graphbuild::{relation_holds, AugmentConfig};
use crate::params::Model;
use crate::prediction::{predict_layout, LayoutPrediction};
use crate::training::Sample;
use crate::types::{Scene, SceneGraph};

/// Canvas labels: 0 is background, `c + 1` is category `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub side: usize,
    pub cells: Vec<u16>,
}

pub const BACKGROUND: u16 = 0;

/// Paints thresholded object masks into their predicted boxes, larger boxes
/// first so smaller objects end up on top.
pub fn compose_layout(pred: &LayoutPrediction, side: usize) -> LabelGrid {
    let mut cells = vec![BACKGROUND; side * side];
    let mut order: Vec<usize> = (0..pred.boxes.len()).collect();
    order.sort_by(|&a, &b| pred.boxes[b].area().total_cmp(&pred.boxes[a].area()));
    let ms = pred.mask_side;
    for i in order {
        let bbox = &pred.boxes[i];
        let label = pred.categories[i] as u16 + 1;
        for row in 0..side {
            let y = (row as f64 + 0.5) / side as f64;
            for col in 0..side {
                let x = (col as f64 + 0.5) / side as f64;
                if !bbox.contains_point(x, y) {
                    continue;
                }
                let u = (x - bbox.x0) / bbox.width();
                let v = (y - bbox.y0) / bbox.height();
                let mc = ((u * ms as f64) as usize).min(ms - 1);
                let mr = ((v * ms as f64) as usize).min(ms - 1);
                if pred.masks[i][mr * ms + mc] >= 0.5 {
                    cells[row * side + col] = label;
                }
            }
        }
    }
    LabelGrid { side, cells }
}

/// Mean box IoU between predicted and ground-truth objects.
pub fn mean_iou(pred: &LayoutPrediction, scene: &Scene) -> f64 {
    let n = scene.len().min(pred.boxes.len());
    if n == 0 {
        return 0.0;
    }
    scene
        .objects
        .iter()
        .zip(&pred.boxes)
        .map(|(o, p)| p.iou(&o.bbox))
        .sum::<f64>()
        / n as f64
}

/// Fraction of graph edges whose rule holds for the predicted boxes; `None`
/// for a graph without edges.
pub fn relation_score(
    pred: &LayoutPrediction,
    graph: &SceneGraph,
    cfg: &AugmentConfig,
) -> Option<f64> {
    if graph.edges.is_empty() {
        return None;
    }
    let hits = graph
        .edges
        .iter()
        .filter(|e| {
            relation_holds(
                e.predicate,
                &pred.boxes[e.subject],
                &pred.boxes[e.object],
                cfg,
            )
        })
        .count();
    Some(hits as f64 / graph.edges.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub mean_iou: f64,
    /// Over every edge of the evaluated graph.
    pub relation_score: Option<f64>,
    /// Over geometric (non-augmented) edges only.
    pub relation_score_base: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_iou: f64,
    pub relation_score: Option<f64>,
    pub relation_score_base: Option<f64>,
    pub per_scene: Vec<SceneMetrics>,
    pub loss_curve: Vec<f64>,
}

pub fn scene_metrics(
    pred: &LayoutPrediction,
    sample: &Sample,
    cfg: &AugmentConfig,
) -> SceneMetrics {
    SceneMetrics {
        mean_iou: mean_iou(pred, &sample.scene),
        relation_score: relation_score(pred, &sample.graph, cfg),
        relation_score_base: relation_score(pred, &sample.graph.base_only(), cfg),
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-scene metrics for `samples`, averaged over scenes.
pub fn evaluate(samples: &[Sample], model: &Model, cfg: &AugmentConfig) -> MetricsReport {
    let per_scene: Vec<SceneMetrics> = samples
        .iter()
        .map(|s| scene_metrics(&predict_layout(&s.graph, model), s, cfg))
        .collect();
    summarize(per_scene)
}

pub fn summarize(per_scene: Vec<SceneMetrics>) -> MetricsReport {
    let mean_iou = if per_scene.is_empty() {
        0.0
    } else {
        per_scene.iter().map(|m| m.mean_iou).sum::<f64>() / per_scene.len() as f64
    };
    MetricsReport {
        mean_iou,
        relation_score: mean_defined(per_scene.iter().map(|m| m.relation_score)),
        relation_score_base: mean_defined(per_scene.iter().map(|m| m.relation_score_base)),
        per_scene,
        loss_curve: Vec::new(),
    }
}

/// A prediction that reproduces the ground-truth boxes of a scene.
pub fn oracle_prediction(scene: &Scene, graph: &SceneGraph) -> LayoutPrediction {
    LayoutPrediction {
        categories: scene.categories(),
        boxes: scene.boxes(),
        masks: scene
            .objects
            .iter()
            .map(|o| o.mask.cells.iter().map(|&c| c as f64).collect())
            .collect(),
        mask_side: scene.objects.first().map_or(1, |o| o.mask.side),
        triplet_masks: vec![Vec::new(); graph.num_edges()],
        triplet_side: 0,
        superboxes: graph
            .edges
            .iter()
            .map(|e| {
                scene.objects[e.subject]
                    .bbox
                    .union(&scene.objects[e.object].bbox)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, MaskGrid};
    use crate::types::{ObjectInstance, Predicate, Triplet};

    fn b(c: [f64; 4]) -> BBox {
        BBox::try_from(c).unwrap()
    }

    fn pred(boxes: Vec<BBox>, side: usize) -> LayoutPrediction {
        LayoutPrediction {
            categories: (0..boxes.len()).collect(),
            masks: vec![vec![1.0; side * side]; boxes.len()],
            boxes,
            mask_side: side,
            triplet_masks: vec![],
            triplet_side: 0,
            superboxes: vec![],
        }
    }

    fn scene(boxes: &[BBox]) -> Scene {
        Scene {
            objects: boxes
                .iter()
                .enumerate()
                .map(|(i, &bbox)| ObjectInstance {
                    category: i,
                    bbox,
                    mask: MaskGrid::filled(2, 1),
                })
                .collect(),
        }
    }

    #[test]
    fn compose_single_full_object() {
        let g = compose_layout(&pred(vec![b([0.0, 0.0, 1.0, 1.0])], 2), 4);
        assert!(g.cells.iter().all(|&c| c == 1));
    }

    #[test]
    fn compose_disjoint_and_nested() {
        let g = compose_layout(
            &pred(vec![b([0.0, 0.0, 0.5, 0.5]), b([0.5, 0.5, 1.0, 1.0])], 2),
            4,
        );
        assert_eq!(
            g.cells,
            vec![1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 2, 2, 0, 0, 2, 2]
        );
        // small object listed first still ends on top
        let g = compose_layout(
            &pred(
                vec![b([0.25, 0.25, 0.75, 0.75]), b([0.0, 0.0, 1.0, 1.0])],
                2,
            ),
            4,
        );
        assert_eq!(g.cells[5], 1);
        assert_eq!(g.cells[0], 2);
    }

    #[test]
    fn compose_respects_mask_threshold() {
        let mut p = pred(vec![b([0.0, 0.0, 1.0, 1.0])], 2);
        p.masks[0] = vec![0.9, 0.1, 0.49, 0.5];
        let g = compose_layout(&p, 2);
        assert_eq!(g.cells, vec![1, 0, 0, 1]);
    }

    #[test]
    fn iou_examples() {
        let gt = [b([0.0, 0.0, 0.4, 0.4]), b([0.6, 0.6, 1.0, 1.0])];
        let s = scene(&gt);
        assert_eq!(mean_iou(&pred(gt.to_vec(), 2), &s), 1.0);
        assert_eq!(mean_iou(&pred(vec![gt[1], gt[0]], 2), &s), 0.0);
        assert_eq!(mean_iou(&pred(vec![gt[0], gt[0]], 2), &s), 0.5);
    }

    #[test]
    fn relation_score_cases() {
        let boxes = [
            b([0.0, 0.0, 0.3, 0.3]),
            b([0.6, 0.0, 0.9, 0.3]),
            b([0.0, 0.6, 0.3, 0.9]),
        ];
        let g = SceneGraph {
            node_categories: vec![0, 1, 2],
            edges: vec![
                Triplet {
                    subject: 0,
                    predicate: Predicate::LeftOf,
                    object: 1,
                },
                Triplet {
                    subject: 0,
                    predicate: Predicate::Above,
                    object: 2,
                },
            ],
            augmented: vec![false, false],
        };
        let cfg = AugmentConfig::default();
        assert_eq!(
            relation_score(&pred(boxes.to_vec(), 2), &g, &cfg),
            Some(1.0)
        );
        let same = vec![boxes[0]; 3];
        // identical boxes: only the "left of" tie-break is satisfied
        assert_eq!(relation_score(&pred(same, 2), &g, &cfg), Some(0.5));
        let empty = SceneGraph {
            node_categories: vec![0],
            edges: vec![],
            augmented: vec![],
        };
        assert_eq!(relation_score(&pred(vec![boxes[0]], 2), &empty, &cfg), None);
    }
}
