//! Prediction heads and layout losses.
//!
//! Object embeddings feed a box head and a mask head. Triplet embeddings
//! `[v_s, v_p, v_o]` feed a triplet mask head (per-cell background /
//! subject / object) and a superbox head. Triplet masks live on the unit
//! canvas, rasterized by cell-center membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{embed_on_tape, GraphEmbedding};
use crate::geometry::{BBox, MaskGrid};
use crate::params::{Linear, Model};
use crate::tape::{Tape, Var, PROB_EPS};
use crate::types::{Scene, SceneGraph};

pub const TRIPLET_CLASSES: usize = 3;
pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_SUBJECT: u8 = 1;
pub const LABEL_OBJECT: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_box: f64,
    pub w_mask: f64,
    pub w_tmask: f64,
    pub w_superbox: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_box: 1.0,
            w_mask: 1.0,
            w_tmask: 1.0,
            w_superbox: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_box, self.w_mask, self.w_tmask, self.w_superbox];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0: {w:?}"
            )));
        }
        Ok(())
    }

    pub fn uses_triplets(&self) -> bool {
        self.w_tmask > 0.0 || self.w_superbox > 0.0
    }
}

/// Model output for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutPrediction {
    pub categories: Vec<usize>,
    pub boxes: Vec<BBox>,
    /// Per object, `mask_side^2` foreground probabilities.
    pub masks: Vec<Vec<f64>>,
    pub mask_side: usize,
    /// Per edge, `triplet_side^2 * 3` class probabilities (cell-major).
    pub triplet_masks: Vec<Vec<f64>>,
    pub triplet_side: usize,
    pub superboxes: Vec<BBox>,
}

impl LayoutPrediction {
    /// Per-cell argmax of one triplet mask; ties go to the lower label.
    pub fn triplet_labels(&self, edge: usize) -> MaskGrid {
        let cells = self.triplet_masks[edge]
            .chunks(TRIPLET_CLASSES)
            .map(|c| {
                let mut best = 0;
                for k in 1..TRIPLET_CLASSES {
                    if c[k] > c[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        MaskGrid {
            side: self.triplet_side,
            cells,
        }
    }
}

pub fn triplet_embed_on_tape(tape: &mut Tape, model: &Model, s: Var, p: Var, o: Var) -> Var {
    tape.concat(model, &[s, p, o])
}

/// Subject, predicate, object concatenation.
pub fn triplet_embed(s: &[f64], p: &[f64], o: &[f64]) -> Vec<f64> {
    [s, p, o].concat()
}

fn box_head(tape: &mut Tape, model: &Model, lin: Linear, v: Var) -> Var {
    let raw = tape.affine(model, lin, v);
    let squashed = tape.sigmoid(model, raw);
    tape.box_from_center(model, squashed)
}

pub fn predict_box_on_tape(tape: &mut Tape, model: &Model, v: Var) -> Var {
    box_head(tape, model, model.heads.box_head, v)
}

pub fn predict_superbox_on_tape(tape: &mut Tape, model: &Model, t: Var) -> Var {
    box_head(tape, model, model.heads.superbox_head, t)
}

pub fn predict_mask_on_tape(tape: &mut Tape, model: &Model, v: Var) -> Var {
    let logits = tape.affine(model, model.heads.mask_head, v);
    tape.sigmoid(model, logits)
}

pub fn predict_triplet_mask_on_tape(tape: &mut Tape, model: &Model, t: Var) -> Var {
    let logits = tape.affine(model, model.heads.triplet_mask_head, t);
    tape.softmax(model, logits, TRIPLET_CLASSES)
}

fn with_tape<T>(
    input: &[f64],
    f: impl FnOnce(&mut Tape, Var) -> Var,
    out: impl FnOnce(&[f64]) -> T,
) -> T {
    let mut tape = Tape::new();
    let x = tape.input(input.to_vec());
    let y = f(&mut tape, x);
    out(tape.value(y))
}

/// Box from one object embedding.
pub fn predict_box(v: &[f64], model: &Model) -> BBox {
    with_tape(
        v,
        |t, x| predict_box_on_tape(t, model, x),
        |c| BBox::from_array_unchecked([c[0], c[1], c[2], c[3]]),
    )
}

/// Per-cell class probabilities from one triplet embedding.
pub fn predict_triplet_mask(t: &[f64], model: &Model) -> Vec<f64> {
    with_tape(
        t,
        |tp, x| predict_triplet_mask_on_tape(tp, model, x),
        <[f64]>::to_vec,
    )
}

fn rasterize_into(cells: &mut [u8], side: usize, bbox: &BBox, mask: &MaskGrid, label: u8) {
    for row in 0..side {
        let y = (row as f64 + 0.5) / side as f64;
        for col in 0..side {
            let x = (col as f64 + 0.5) / side as f64;
            if bbox.contains_point(x, y) {
                let u = (x - bbox.x0) / bbox.width();
                let v = (y - bbox.y0) / bbox.height();
                if mask.sample(u, v) != 0 {
                    cells[row * side + col] = label;
                }
            }
        }
    }
}

/// Ground-truth triplet mask on a `side x side` canvas grid. The object is
/// painted after the subject, so overlap cells carry the object label.
pub fn gt_triplet_mask(
    s_box: &BBox,
    s_mask: &MaskGrid,
    o_box: &BBox,
    o_mask: &MaskGrid,
    side: usize,
) -> MaskGrid {
    let mut cells = vec![LABEL_BACKGROUND; side * side];
    rasterize_into(&mut cells, side, s_box, s_mask, LABEL_SUBJECT);
    rasterize_into(&mut cells, side, o_box, o_mask, LABEL_OBJECT);
    MaskGrid { side, cells }
}

/// Mean squared error over the four coordinates.
pub fn loss_box(pred: &BBox, gt: &BBox) -> f64 {
    pred.to_array()
        .iter()
        .zip(gt.to_array())
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / 4.0
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn loss_mask(pred: &[f64], gt: &MaskGrid) -> Result<f64> {
    if pred.len() != gt.cells.len() {
        return Err(Error::Shape(format!(
            "mask prediction has {} cells, target {}",
            pred.len(),
            gt.cells.len()
        )));
    }
    let s: f64 = pred
        .iter()
        .zip(&gt.cells)
        .map(|(&p, &t)| {
            if t != 0 {
                -clamp(p).ln()
            } else {
                -(1.0 - clamp(p)).ln()
            }
        })
        .sum();
    Ok(s / pred.len() as f64)
}

/// Mean categorical cross-entropy over cells.
pub fn loss_triplet_mask(pred: &[f64], gt: &MaskGrid) -> Result<f64> {
    if pred.len() != gt.cells.len() * TRIPLET_CLASSES {
        return Err(Error::Shape(format!(
            "triplet prediction has {} entries, target needs {}",
            pred.len(),
            gt.cells.len() * TRIPLET_CLASSES
        )));
    }
    let s: f64 = pred
        .chunks(TRIPLET_CLASSES)
        .zip(&gt.cells)
        .map(|(c, &t)| -clamp(c[t as usize]).ln())
        .sum();
    Ok(s / gt.cells.len() as f64)
}

/// Squared Euclidean distance to the union of the two ground-truth boxes.
pub fn loss_superbox(pred: &BBox, gt_s: &BBox, gt_o: &BBox) -> f64 {
    let target = gt_s.union(gt_o).to_array();
    pred.to_array()
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

fn check_alignment(scene: &Scene, graph: &SceneGraph) -> Result<()> {
    if scene.len() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "scene has {} objects, graph {} nodes",
            scene.len(),
            graph.num_nodes()
        )));
    }
    if scene.categories() != graph.node_categories {
        return Err(Error::Shape("scene and graph categories differ".into()));
    }
    if let Some(e) = graph
        .edges
        .iter()
        .find(|e| e.subject >= scene.len() || e.object >= scene.len())
    {
        return Err(Error::Shape(format!(
            "edge {e:?} references a missing object"
        )));
    }
    Ok(())
}

/// Weighted sum of the four mean loss terms.
pub fn total_loss(
    pred: &LayoutPrediction,
    scene: &Scene,
    graph: &SceneGraph,
    w: &LossWeights,
) -> Result<f64> {
    check_alignment(scene, graph)?;
    if pred.boxes.len() != scene.len() || pred.triplet_masks.len() != graph.num_edges() {
        return Err(Error::Shape(
            "prediction not aligned with scene and graph".into(),
        ));
    }
    let n = scene.len() as f64;
    let mut box_term = 0.0;
    let mut mask_term = 0.0;
    for (i, obj) in scene.objects.iter().enumerate() {
        box_term += loss_box(&pred.boxes[i], &obj.bbox);
        mask_term += loss_mask(&pred.masks[i], &obj.mask.resample(pred.mask_side))?;
    }
    let mut total = w.w_box * box_term / n + w.w_mask * mask_term / n;
    if graph.num_edges() > 0 {
        let m = graph.num_edges() as f64;
        let mut tm = 0.0;
        let mut sb = 0.0;
        for (k, e) in graph.edges.iter().enumerate() {
            let (s, o) = (&scene.objects[e.subject], &scene.objects[e.object]);
            let gt = gt_triplet_mask(&s.bbox, &s.mask, &o.bbox, &o.mask, pred.triplet_side);
            tm += loss_triplet_mask(&pred.triplet_masks[k], &gt)?;
            sb += loss_superbox(&pred.superboxes[k], &s.bbox, &o.bbox);
        }
        total += w.w_tmask * tm / m + w.w_superbox * sb / m;
    }
    Ok(total)
}

/// Every head output for one graph, recorded on a tape.
pub struct LayoutVars {
    pub embedding: GraphEmbedding,
    pub boxes: Vec<Var>,
    pub masks: Vec<Var>,
    pub triplet_masks: Vec<Var>,
    pub superboxes: Vec<Var>,
}

/// Runs the GCN and heads. Triplet heads are skipped when
/// `with_triplets` is false.
pub fn forward_on_tape(
    tape: &mut Tape,
    model: &Model,
    graph: &SceneGraph,
    with_triplets: bool,
) -> LayoutVars {
    let embedding = embed_on_tape(tape, model, graph);
    let boxes = embedding
        .objects
        .iter()
        .map(|&v| predict_box_on_tape(tape, model, v))
        .collect();
    let masks = embedding
        .objects
        .iter()
        .map(|&v| predict_mask_on_tape(tape, model, v))
        .collect();
    let mut triplet_masks = Vec::new();
    let mut superboxes = Vec::new();
    if with_triplets {
        for (e, &p) in graph.edges.iter().zip(&embedding.predicates) {
            let t = triplet_embed_on_tape(
                tape,
                model,
                embedding.objects[e.subject],
                p,
                embedding.objects[e.object],
            );
            triplet_masks.push(predict_triplet_mask_on_tape(tape, model, t));
            superboxes.push(predict_superbox_on_tape(tape, model, t));
        }
    }
    LayoutVars {
        embedding,
        boxes,
        masks,
        triplet_masks,
        superboxes,
    }
}

fn mean_of(tape: &mut Tape, model: &Model, terms: &[Var]) -> Option<(Var, usize)> {
    if terms.is_empty() {
        return None;
    }
    let w = 1.0 / terms.len() as f64;
    let pairs: Vec<(Var, f64)> = terms.iter().map(|&v| (v, w)).collect();
    Some((tape.weighted_sum(model, &pairs), terms.len()))
}

/// Records the full forward pass and total loss; returns the loss node.
pub fn loss_on_tape(
    tape: &mut Tape,
    model: &Model,
    scene: &Scene,
    graph: &SceneGraph,
    w: &LossWeights,
) -> Result<Var> {
    check_alignment(scene, graph)?;
    let vars = forward_on_tape(tape, model, graph, w.uses_triplets());
    let mo = model.config.heads.mask_side;
    let mt = model.config.heads.triplet_side;
    let mut box_terms = Vec::new();
    let mut mask_terms = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        box_terms.push(tape.squared_error(
            model,
            vars.boxes[i],
            obj.bbox.to_array().to_vec(),
            0.25,
        ));
        mask_terms.push(tape.binary_cross_entropy(
            model,
            vars.masks[i],
            obj.mask.resample(mo).cells,
        ));
    }
    let mut tm_terms = Vec::new();
    let mut sb_terms = Vec::new();
    if w.uses_triplets() {
        for (k, e) in graph.edges.iter().enumerate() {
            let (s, o) = (&scene.objects[e.subject], &scene.objects[e.object]);
            let gt = gt_triplet_mask(&s.bbox, &s.mask, &o.bbox, &o.mask, mt);
            tm_terms.push(tape.categorical_cross_entropy(
                model,
                vars.triplet_masks[k],
                TRIPLET_CLASSES,
                gt.cells,
            ));
            let target = s.bbox.union(&o.bbox).to_array().to_vec();
            sb_terms.push(tape.squared_error(model, vars.superboxes[k], target, 1.0));
        }
    }
    let mut total = Vec::new();
    for (terms, weight) in [
        (&box_terms, w.w_box),
        (&mask_terms, w.w_mask),
        (&tm_terms, w.w_tmask),
        (&sb_terms, w.w_superbox),
    ] {
        if let Some((m, _)) = mean_of(tape, model, terms) {
            total.push((m, weight));
        }
    }
    Ok(tape.weighted_sum(model, &total))
}

/// Predicted layout for a graph; the model sees only the graph.
pub fn predict_layout(graph: &SceneGraph, model: &Model) -> LayoutPrediction {
    let mut tape = Tape::new();
    let vars = forward_on_tape(&mut tape, model, graph, true);
    let to_box = |v: &Var| {
        let c = tape.value(*v);
        BBox::from_array_unchecked([c[0], c[1], c[2], c[3]])
    };
    LayoutPrediction {
        categories: graph.node_categories.clone(),
        boxes: vars.boxes.iter().map(to_box).collect(),
        masks: vars.masks.iter().map(|v| tape.value(*v).to_vec()).collect(),
        mask_side: model.config.heads.mask_side,
        triplet_masks: vars
            .triplet_masks
            .iter()
            .map(|v| tape.value(*v).to_vec())
            .collect(),
        triplet_side: model.config.heads.triplet_side,
        superboxes: vars.superboxes.iter().map(to_box).collect(),
    }
}
