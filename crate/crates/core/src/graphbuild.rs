//! Scene graphs from box geometry, plus depth-order augmentation.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::RngState;
use crate::types::{Predicate, Scene, SceneGraph, Triplet, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Minimal horizontal overlap (relative to the narrower box) for a
    /// depth pair.
    pub overlap_threshold: f64,
    /// Cap on augmented edges as a multiple of the base edge count.
    pub max_augmented_factor: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            overlap_threshold: 0.2,
            max_augmented_factor: 2.0,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap_threshold) {
            return Err(Error::Config(format!(
                "overlap_threshold {} outside [0, 1]",
                self.overlap_threshold
            )));
        }
        if self.max_augmented_factor.is_nan() || self.max_augmented_factor < 0.0 {
            return Err(Error::Config("max_augmented_factor must be >= 0".into()));
        }
        Ok(())
    }
}

/// The geometric predicate `p` such that "a p b".
///
/// Containment is checked first. Otherwise the direction of the vector from
/// the center of `a` to the center of `b` picks one of four half-open 90°
/// sectors: `[-45°, 45°)` left of, `[45°, 135°)` above, `[135°, 225°)`
/// right of, `[225°, 315°)` below (y grows downward). Coincident centers
/// resolve to "left of".
pub fn assign_predicate(a: &BBox, b: &BBox) -> Predicate {
    if a.strictly_contains(b) {
        return Predicate::Surrounding;
    }
    if b.strictly_contains(a) {
        return Predicate::Inside;
    }
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let dx = bx - ax;
    let dy = by - ay;
    if dx > 0.0 && dy >= -dx && dy < dx {
        Predicate::LeftOf
    } else if dy > 0.0 && dx <= dy && dx > -dy {
        Predicate::Above
    } else if dx < 0.0 && dy <= -dx && dy > dx {
        Predicate::RightOf
    } else if dy < 0.0 && dx >= dy && dx < -dy {
        Predicate::Below
    } else {
        Predicate::LeftOf
    }
}

/// Samples `edges_per_node` distinct partners for each node and links
/// each ordered pair once with its geometric predicate.
pub fn build_scene_graph(
    scene: &Scene,
    rng: &mut RngState,
    edges_per_node: usize,
) -> Result<SceneGraph> {
    let n = scene.len();
    if n < 2 {
        return Err(Error::validation(
            "objects",
            format!("{n} objects; need at least 2 to form edges"),
        ));
    }
    if edges_per_node == 0 {
        return Err(Error::Config("edges_per_node must be >= 1".into()));
    }
    let k = edges_per_node.min(n - 1);
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for s in 0..n {
        let mut partners: Vec<usize> = sample(rng, n - 1, k)
            .into_iter()
            .map(|j| if j >= s { j + 1 } else { j })
            .collect();
        partners.sort_unstable();
        for o in partners {
            if seen.insert((s, o)) {
                let predicate = assign_predicate(&scene.objects[s].bbox, &scene.objects[o].bbox);
                edges.push(Triplet {
                    subject: s,
                    predicate,
                    object: o,
                });
            }
        }
    }
    let augmented = vec![false; edges.len()];
    Ok(SceneGraph {
        node_categories: scene.categories(),
        edges,
        augmented,
    })
}

/// Depth order of a box pair: `Some(true)` if `a` is in front of `b`.
fn depth_order(a: &BBox, b: &BBox, threshold: f64) -> Option<bool> {
    let ratio = a.horizontal_overlap_ratio(b);
    if ratio <= 0.0 || ratio < threshold || a.y1 == b.y1 {
        None
    } else {
        Some(a.y1 > b.y1)
    }
}

/// Adds "in front of"/"behind" edge pairs for horizontally overlapping
/// objects; the lower bottom edge is nearer the observer.
pub fn augment_graph(scene: &Scene, graph: &SceneGraph, cfg: &AugmentConfig) -> SceneGraph {
    let mut out = graph.clone();
    if !cfg.enabled {
        return out;
    }
    let cap = (cfg.max_augmented_factor * graph.base_edge_count() as f64).floor() as usize;
    let n = scene.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&scene.objects[i].bbox, &scene.objects[j].bbox);
            if let Some(i_front) = depth_order(a, b, cfg.overlap_threshold) {
                let (near, far) = if i_front { (i, j) } else { (j, i) };
                pairs.push((a.horizontal_overlap_ratio(b), near, far));
            }
        }
    }
    // stable sort keeps ascending (i, j) among equal ratios
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut added = graph.augmented_edge_count();
    for (_, near, far) in pairs {
        if added + 2 > cap {
            break;
        }
        out.edges.push(Triplet {
            subject: near,
            predicate: Predicate::InFrontOf,
            object: far,
        });
        out.edges.push(Triplet {
            subject: far,
            predicate: Predicate::Behind,
            object: near,
        });
        out.augmented.extend([true, true]);
        added += 2;
    }
    out
}

/// Whether the rule that generates `p` also generates it for `(a, b)`.
pub fn relation_holds(p: Predicate, a: &BBox, b: &BBox, cfg: &AugmentConfig) -> bool {
    match p {
        Predicate::InFrontOf => depth_order(a, b, cfg.overlap_threshold) == Some(true),
        Predicate::Behind => depth_order(a, b, cfg.overlap_threshold) == Some(false),
        base => assign_predicate(a, b) == base,
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<String>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    s: usize,
    p: String,
    o: usize,
    aug: bool,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    graphs: Vec<GraphRecord>,
}

fn graph_record(g: &SceneGraph, vocab: &Vocab) -> GraphRecord {
    GraphRecord {
        nodes: g
            .node_categories
            .iter()
            .map(|&c| vocab.category_name(c).to_string())
            .collect(),
        edges: g
            .edges
            .iter()
            .zip(&g.augmented)
            .map(|(e, &aug)| EdgeRecord {
                s: e.subject,
                p: e.predicate.name().to_string(),
                o: e.object,
                aug,
            })
            .collect(),
    }
}

fn graph_from_record(rec: GraphRecord, vocab: &Vocab, prefix: &str) -> Result<SceneGraph> {
    let node_categories = rec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, name)| {
            vocab.category_index(name).ok_or_else(|| {
                Error::validation(
                    format!("{prefix}nodes[{i}]"),
                    format!("unknown category {name:?}"),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut edges = Vec::with_capacity(rec.edges.len());
    let mut augmented = Vec::with_capacity(rec.edges.len());
    for (i, e) in rec.edges.into_iter().enumerate() {
        let predicate = Predicate::from_name(&e.p).ok_or_else(|| {
            Error::validation(
                format!("{prefix}edges[{i}].p"),
                format!("unknown predicate {:?}", e.p),
            )
        })?;
        edges.push(Triplet {
            subject: e.s,
            predicate,
            object: e.o,
        });
        augmented.push(e.aug);
    }
    let g = SceneGraph {
        node_categories,
        edges,
        augmented,
    };
    g.validate(vocab).map_err(|e| match e {
        Error::Validation { field, message } => {
            Error::validation(format!("{prefix}{field}"), message)
        }
        other => other,
    })?;
    Ok(g)
}

/// One graph as `{"nodes": [...], "edges": [{"s":..,"p":..,"o":..,"aug":..}]}`.
pub fn graph_to_json(g: &SceneGraph, vocab: &Vocab) -> String {
    serde_json::to_string(&graph_record(g, vocab)).expect("graph serializes")
}

pub fn graph_from_json(text: &str, vocab: &Vocab) -> Result<SceneGraph> {
    let rec: GraphRecord =
        serde_json::from_str(text).map_err(|e| Error::json(std::path::Path::new("<graph>"), e))?;
    graph_from_record(rec, vocab, "")
}

pub fn save_graphs(path: &std::path::Path, graphs: &[SceneGraph], vocab: &Vocab) -> Result<()> {
    let file = GraphFile {
        graphs: graphs.iter().map(|g| graph_record(g, vocab)).collect(),
    };
    let text = serde_json::to_string(&file).expect("graphs serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_graphs(path: &std::path::Path, vocab: &Vocab) -> Result<Vec<SceneGraph>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GraphFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    file.graphs
        .into_iter()
        .enumerate()
        .map(|(i, rec)| graph_from_record(rec, vocab, &format!("graphs[{i}].")))
        .collect()
}

/// The graph a model variant trains on: base edges, re-augmented when
/// `aug.enabled`.
pub fn variant_view(scene: &Scene, graph: &SceneGraph, aug: &AugmentConfig) -> SceneGraph {
    augment_graph(scene, &graph.base_only(), aug)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MaskGrid;
    use crate::rng::seeded_rng;
    use crate::types::ObjectInstance;

    fn b(c: [f64; 4]) -> BBox {
        BBox::try_from(c).unwrap()
    }

    fn scene(boxes: &[[f64; 4]]) -> Scene {
        Scene {
            objects: boxes
                .iter()
                .enumerate()
                .map(|(i, &c)| ObjectInstance {
                    category: i % 3,
                    bbox: b(c),
                    mask: MaskGrid::filled(4, 1),
                })
                .collect(),
        }
    }

    #[test]
    fn predicate_examples() {
        let a = b([0.1, 0.4, 0.3, 0.6]);
        let c = b([0.6, 0.4, 0.8, 0.6]);
        assert_eq!(assign_predicate(&a, &c), Predicate::LeftOf);
        assert_eq!(assign_predicate(&c, &a), Predicate::RightOf);
        assert_eq!(
            assign_predicate(&b([0.2, 0.2, 0.8, 0.8]), &b([0.4, 0.4, 0.6, 0.6])),
            Predicate::Surrounding
        );
        assert_eq!(
            assign_predicate(&b([0.4, 0.4, 0.6, 0.6]), &b([0.2, 0.2, 0.8, 0.8])),
            Predicate::Inside
        );
        // b lower on the canvas → a above b
        assert_eq!(
            assign_predicate(&b([0.4, 0.1, 0.6, 0.3]), &b([0.4, 0.6, 0.6, 0.8])),
            Predicate::Above
        );
        assert_eq!(assign_predicate(&a, &a), Predicate::LeftOf);
    }

    #[test]
    fn sector_boundaries() {
        let a = b([0.4, 0.4, 0.6, 0.6]);
        let shifted = |dx: f64, dy: f64| b([0.4 + dx, 0.4 + dy, 0.6 + dx, 0.6 + dy]);
        assert_eq!(
            assign_predicate(&a, &shifted(0.25, -0.25)),
            Predicate::LeftOf
        );
        assert_eq!(assign_predicate(&a, &shifted(0.25, 0.25)), Predicate::Above);
        assert_eq!(
            assign_predicate(&a, &shifted(-0.25, 0.25)),
            Predicate::RightOf
        );
        assert_eq!(
            assign_predicate(&a, &shifted(-0.25, -0.25)),
            Predicate::Below
        );
    }

    #[test]
    fn three_nodes_two_partners() {
        let s = scene(&[
            [0.0, 0.0, 0.3, 0.3],
            [0.5, 0.0, 0.9, 0.3],
            [0.2, 0.6, 0.6, 0.9],
        ]);
        let g = build_scene_graph(&s, &mut seeded_rng(1), 2).unwrap();
        // each node links to both others: all 6 ordered pairs
        assert_eq!(g.num_edges(), 6);
        let vocab = Vocab::new(["a", "b", "c"]).unwrap();
        g.validate(&vocab).unwrap();
    }

    #[test]
    fn one_partner_covers_every_node() {
        let s = scene(&[
            [0.0, 0.0, 0.3, 0.3],
            [0.5, 0.0, 0.9, 0.3],
            [0.2, 0.6, 0.6, 0.9],
            [0.6, 0.6, 0.9, 0.9],
        ]);
        for seed in 0..20 {
            let g = build_scene_graph(&s, &mut seeded_rng(seed), 1).unwrap();
            assert_eq!(g.num_edges(), 4);
            assert!(g.validate(&Vocab::new(["a", "b", "c"]).unwrap()).is_ok());
            assert_eq!(g, build_scene_graph(&s, &mut seeded_rng(seed), 1).unwrap());
        }
    }

    #[test]
    fn too_few_objects() {
        let s = scene(&[[0.0, 0.0, 0.3, 0.3]]);
        assert!(build_scene_graph(&s, &mut seeded_rng(0), 1).is_err());
    }

    #[test]
    fn augmentation_example() {
        // A bottom at 0.9, B bottom at 0.6, horizontal overlap 0.5 of the narrower width
        let s = scene(&[
            [0.0, 0.5, 0.4, 0.9],
            [0.2, 0.2, 0.6, 0.6],
            [0.8, 0.0, 0.95, 0.15],
        ]);
        let g = SceneGraph {
            node_categories: s.categories(),
            edges: vec![
                Triplet {
                    subject: 0,
                    predicate: assign_predicate(&s.objects[0].bbox, &s.objects[1].bbox),
                    object: 1,
                },
                Triplet {
                    subject: 1,
                    predicate: assign_predicate(&s.objects[1].bbox, &s.objects[2].bbox),
                    object: 2,
                },
            ],
            augmented: vec![false, false],
        };
        let aug = augment_graph(&s, &g, &AugmentConfig::default());
        assert_eq!(aug.num_edges(), 4);
        assert_eq!(
            aug.edges[2],
            Triplet {
                subject: 0,
                predicate: Predicate::InFrontOf,
                object: 1
            }
        );
        assert_eq!(
            aug.edges[3],
            Triplet {
                subject: 1,
                predicate: Predicate::Behind,
                object: 0
            }
        );
        assert_eq!(&aug.edges[..2], &g.edges[..]);
        assert_eq!(augment_graph(&s, &g, &AugmentConfig::disabled()), g);
    }

    #[test]
    fn no_overlap_or_tied_bottoms_add_nothing() {
        let disjoint = scene(&[
            [0.0, 0.5, 0.3, 0.9],
            [0.5, 0.2, 0.9, 0.6],
            [0.35, 0.0, 0.45, 0.2],
        ]);
        let g = build_scene_graph(&disjoint, &mut seeded_rng(0), 2).unwrap();
        let cfg = AugmentConfig {
            overlap_threshold: 0.0,
            ..Default::default()
        };
        let tied = scene(&[
            [0.0, 0.5, 0.4, 0.9],
            [0.2, 0.2, 0.6, 0.9],
            [0.7, 0.0, 0.8, 0.2],
        ]);
        let tg = build_scene_graph(&tied, &mut seeded_rng(0), 2).unwrap();
        assert_eq!(
            augment_graph(&disjoint, &g, &cfg).num_edges(),
            g.num_edges()
        );
        assert_eq!(augment_graph(&tied, &tg, &cfg).num_edges(), tg.num_edges());
        let (a, c) = (tied.objects[0].bbox, tied.objects[1].bbox);
        assert!(!relation_holds(Predicate::InFrontOf, &a, &c, &cfg));
        assert!(!relation_holds(Predicate::Behind, &a, &c, &cfg));
    }

    #[test]
    fn cap_limits_augmented_edges() {
        let s = scene(&[
            [0.0, 0.5, 0.4, 0.9],
            [0.1, 0.2, 0.5, 0.6],
            [0.2, 0.0, 0.6, 0.4],
        ]);
        let g = SceneGraph {
            node_categories: s.categories(),
            edges: vec![Triplet {
                subject: 0,
                predicate: assign_predicate(&s.objects[0].bbox, &s.objects[1].bbox),
                object: 1,
            }],
            augmented: vec![false],
        };
        let aug = augment_graph(&s, &g, &AugmentConfig::default());
        assert_eq!(aug.augmented_edge_count(), 2);
    }

    #[test]
    fn inside_with_disjoint_is_false() {
        let cfg = AugmentConfig::default();
        assert!(!relation_holds(
            Predicate::Inside,
            &b([0.0, 0.0, 0.2, 0.2]),
            &b([0.5, 0.5, 0.9, 0.9]),
            &cfg
        ));
    }

    #[test]
    fn graph_json_round_trip() {
        let s = scene(&[
            [0.0, 0.5, 0.4, 0.9],
            [0.2, 0.2, 0.6, 0.6],
            [0.7, 0.0, 0.9, 0.3],
        ]);
        let vocab = Vocab::new(["sky", "tree", "road"]).unwrap();
        let g = augment_graph(
            &s,
            &build_scene_graph(&s, &mut seeded_rng(2), 2).unwrap(),
            &AugmentConfig::default(),
        );
        let text = graph_to_json(&g, &vocab);
        assert!(text.starts_with(r#"{"nodes":["sky","tree","road"],"edges":[{"s":0,"p":"#));
        assert_eq!(graph_from_json(&text, &vocab).unwrap(), g);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = BBox> {
            (0.0..0.9f64, 0.0..0.9f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(|(x, y, w, h)| {
                BBox::from_array_unchecked([x, y, (x + w).min(1.0), (y + h).min(1.0)])
            })
        }

        proptest! {
            #[test]
            fn round_trip_and_antisymmetry(a in arb_box(), c in arb_box()) {
                let cfg = AugmentConfig::default();
                let p = assign_predicate(&a, &c);
                prop_assert!(relation_holds(p, &a, &c, &cfg));
                if a.center() != c.center() || a.strictly_contains(&c) || c.strictly_contains(&a) {
                    prop_assert_eq!(assign_predicate(&c, &a), p.converse());
                }
                let holding = Predicate::ALL[..6].iter().filter(|&&q| relation_holds(q, &a, &c, &cfg)).count();
                prop_assert_eq!(holding, 1);
                prop_assert_eq!(
                    relation_holds(Predicate::InFrontOf, &a, &c, &cfg),
                    relation_holds(Predicate::Behind, &c, &a, &cfg)
                );
            }
        }
    }
}
