//! Graph convolution over scene graphs.
//!
//! Each layer maps every edge `(s, p, o)` through an edge MLP on the
//! concatenation `[v_s, v_p, v_o]`, producing candidate vectors for the
//! subject, the predicate, and the object. Predicates take their candidate
//! directly. Nodes average the candidates they receive (ascending edge index)
//! and pass the average through a node-update MLP; nodes with no incident
//! edge keep their vector. ReLU is used throughout, with derivative 0 at 0.

use crate::params::{GcnLayerParams, Model};
use crate::tape::{Tape, Var};
use crate::types::{SceneGraph, Triplet};

/// Per-node and per-edge vectors produced on a tape.
#[derive(Clone, Debug)]
pub struct GraphEmbedding {
    pub objects: Vec<Var>,
    pub predicates: Vec<Var>,
}

fn mlp_step(tape: &mut Tape, model: &Model, lin: crate::params::Linear, x: Var) -> Var {
    let y = tape.affine(model, lin, x);
    tape.relu(model, y)
}

/// One round of message passing.
pub fn gcn_layer(
    tape: &mut Tape,
    model: &Model,
    layer: &GcnLayerParams,
    nodes: &[Var],
    preds: &[Var],
    edges: &[Triplet],
) -> (Vec<Var>, Vec<Var>) {
    let d = model.config.gcn.embed_dim;
    let mut incoming: Vec<Vec<Var>> = vec![Vec::new(); nodes.len()];
    let mut new_preds = Vec::with_capacity(edges.len());
    for (e, &pred) in edges.iter().zip(preds) {
        let x = tape.concat(model, &[nodes[e.subject], pred, nodes[e.object]]);
        let h = mlp_step(tape, model, layer.edge_hidden, x);
        let out = mlp_step(tape, model, layer.edge_out, h);
        let cs = tape.slice(model, out, 0, d);
        let cp = tape.slice(model, out, d, d);
        let co = tape.slice(model, out, 2 * d, d);
        incoming[e.subject].push(cs);
        incoming[e.object].push(co);
        new_preds.push(cp);
    }
    let new_nodes = nodes
        .iter()
        .zip(&incoming)
        .map(|(&v, cands)| {
            if cands.is_empty() {
                v
            } else {
                let pooled = tape.mean(model, cands);
                mlp_step(tape, model, layer.node_update, pooled)
            }
        })
        .collect();
    (new_nodes, new_preds)
}

/// Looks up initial vectors and applies every layer of `model`.
pub fn embed_on_tape(tape: &mut Tape, model: &Model, graph: &SceneGraph) -> GraphEmbedding {
    let mut objects: Vec<Var> = graph
        .node_categories
        .iter()
        .map(|&c| tape.row(model, model.gcn.object_embedding_table, c))
        .collect();
    let mut predicates: Vec<Var> = graph
        .edges
        .iter()
        .map(|e| {
            tape.row(
                model,
                model.gcn.predicate_embedding_table,
                e.predicate.index(),
            )
        })
        .collect();
    for layer in &model.gcn.layers {
        (objects, predicates) = gcn_layer(tape, model, layer, &objects, &predicates, &graph.edges);
    }
    GraphEmbedding {
        objects,
        predicates,
    }
}

/// Embeddings as plain vectors, with the tape that produced them.
pub struct EmbedOutput {
    pub object_embeddings: Vec<Vec<f64>>,
    pub predicate_embeddings: Vec<Vec<f64>>,
    pub tape: Tape,
    pub vars: GraphEmbedding,
}

pub fn embed_graph(graph: &SceneGraph, model: &Model) -> EmbedOutput {
    let mut tape = Tape::new();
    let vars = embed_on_tape(&mut tape, model, graph);
    let object_embeddings = vars
        .objects
        .iter()
        .map(|&v| tape.value(v).to_vec())
        .collect();
    let predicate_embeddings = vars
        .predicates
        .iter()
        .map(|&v| tape.value(v).to_vec())
        .collect();
    EmbedOutput {
        object_embeddings,
        predicate_embeddings,
        tape,
        vars,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, HeadConfig, ModelConfig};
    use crate::types::{Predicate, Vocab};

    fn model(d: usize, h: usize, layers: usize) -> Model {
        let mut cfg = ModelConfig::default();
        cfg.gcn.embed_dim = d;
        cfg.gcn.hidden_dim = h;
        cfg.gcn.n_layers = layers;
        cfg.gcn.init_scale = 0.4;
        cfg.heads = HeadConfig {
            mask_side: 2,
            triplet_side: 2,
        };
        init_params(&cfg, &Vocab::new(["a", "b", "c"]).unwrap()).unwrap()
    }

    fn edge(s: usize, p: Predicate, o: usize) -> Triplet {
        Triplet {
            subject: s,
            predicate: p,
            object: o,
        }
    }

    #[test]
    fn zero_edges_keep_node_vectors() {
        let m = model(4, 6, 2);
        let g = SceneGraph {
            node_categories: vec![0, 2],
            edges: vec![],
            augmented: vec![],
        };
        let out = embed_graph(&g, &m);
        assert_eq!(
            out.object_embeddings[0],
            m.tensor(m.gcn.object_embedding_table).row(0)
        );
        assert_eq!(
            out.object_embeddings[1],
            m.tensor(m.gcn.object_embedding_table).row(2)
        );
        assert!(out.predicate_embeddings.is_empty());
    }

    #[test]
    fn identity_weights_return_own_vectors() {
        // D = 2, H = 3D = 6; edge MLP and node update are identities.
        let mut m = model(2, 6, 1);
        let l = m.gcn.layers[0];
        let eye = |n: usize| -> Vec<f64> {
            (0..n * n)
                .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
                .collect()
        };
        m.tensor_mut(l.edge_hidden.weight).data = eye(6);
        m.tensor_mut(l.edge_out.weight).data = eye(6);
        m.tensor_mut(l.node_update.weight).data = eye(2);
        let objs = m.gcn.object_embedding_table;
        m.tensor_mut(objs).data = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let preds = m.gcn.predicate_embedding_table;
        m.tensor_mut(preds)
            .data
            .iter_mut()
            .for_each(|v| *v = v.abs());
        let g = SceneGraph {
            node_categories: vec![0, 1],
            edges: vec![edge(0, Predicate::LeftOf, 1)],
            augmented: vec![false],
        };
        let out = embed_graph(&g, &m);
        assert_eq!(out.object_embeddings[0], vec![0.1, 0.2]);
        assert_eq!(out.object_embeddings[1], vec![0.3, 0.4]);
        assert_eq!(out.predicate_embeddings[0], m.tensor(preds).row(0));
    }

    #[test]
    fn zero_layers_same_category_equal() {
        let mut m = model(4, 5, 1);
        m.gcn.layers.clear();
        let g = SceneGraph {
            node_categories: vec![1, 1],
            edges: vec![
                edge(0, Predicate::LeftOf, 1),
                edge(1, Predicate::RightOf, 0),
            ],
            augmented: vec![false, false],
        };
        let out = embed_graph(&g, &m);
        assert_eq!(out.object_embeddings[0], out.object_embeddings[1]);
    }

    #[test]
    fn shapes_and_determinism() {
        let m = model(4, 5, 3);
        let g = SceneGraph {
            node_categories: vec![0, 1, 2],
            edges: vec![
                edge(0, Predicate::Above, 1),
                edge(1, Predicate::Inside, 2),
                edge(2, Predicate::LeftOf, 0),
            ],
            augmented: vec![false; 3],
        };
        let a = embed_graph(&g, &m);
        let b = embed_graph(&g, &m);
        assert_eq!(a.object_embeddings.len(), 3);
        assert!(a.object_embeddings.iter().all(|v| v.len() == 4));
        assert_eq!(a.predicate_embeddings.len(), 3);
        assert_eq!(a.object_embeddings, b.object_embeddings);
        assert!(a.tape.replay_matches(&m));
    }

    #[test]
    fn edge_permutation_invariance() {
        let m = model(4, 5, 2);
        let edges = vec![
            edge(0, Predicate::Above, 1),
            edge(1, Predicate::Inside, 2),
            edge(2, Predicate::LeftOf, 0),
            edge(0, Predicate::Below, 2),
        ];
        let g = SceneGraph {
            node_categories: vec![0, 1, 2],
            edges: edges.clone(),
            augmented: vec![false; 4],
        };
        let perm = [2, 0, 3, 1];
        let gp = SceneGraph {
            node_categories: vec![0, 1, 2],
            edges: perm.iter().map(|&i| edges[i]).collect(),
            augmented: vec![false; 4],
        };
        let a = embed_graph(&g, &m);
        let b = embed_graph(&gp, &m);
        for (x, y) in a.object_embeddings.iter().zip(&b.object_embeddings) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        for (k, &i) in perm.iter().enumerate() {
            for (u, v) in a.predicate_embeddings[i]
                .iter()
                .zip(&b.predicate_embeddings[k])
            {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_relabeling_permutes_embeddings() {
        let m = model(4, 5, 2);
        let g = SceneGraph {
            node_categories: vec![0, 1, 2],
            edges: vec![
                edge(0, Predicate::Above, 1),
                edge(1, Predicate::Inside, 2),
                edge(2, Predicate::LeftOf, 0),
            ],
            augmented: vec![false; 3],
        };
        // new index of old node i
        let relabel = [2, 0, 1];
        let mut cats = vec![0; 3];
        for (old, &new) in relabel.iter().enumerate() {
            cats[new] = g.node_categories[old];
        }
        let gp = SceneGraph {
            node_categories: cats,
            edges: g
                .edges
                .iter()
                .map(|e| edge(relabel[e.subject], e.predicate, relabel[e.object]))
                .collect(),
            augmented: vec![false; 3],
        };
        let a = embed_graph(&g, &m);
        let b = embed_graph(&gp, &m);
        for (old, &new) in relabel.iter().enumerate() {
            assert_eq!(a.object_embeddings[old], b.object_embeddings[new]);
        }
    }
}
