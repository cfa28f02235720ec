//! Learnable tensors, their layout, and checkpoints.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};
use crate::types::Vocab;

/// Row-major matrix; vectors are `rows x 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Tensor {
            name: name.into(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// An affine map `y = W x + b` with `W: out x in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GcnLayerParams {
    /// 3D -> H
    pub edge_hidden: Linear,
    /// H -> 3D
    pub edge_out: Linear,
    /// D -> D
    pub node_update: Linear,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GcnParams {
    pub object_embedding_table: ParamId,
    pub predicate_embedding_table: ParamId,
    pub layers: Vec<GcnLayerParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadParams {
    pub box_head: Linear,
    pub mask_head: Linear,
    pub triplet_mask_head: Linear,
    pub superbox_head: Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            embed_dim: 32,
            hidden_dim: 64,
            n_layers: 3,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Object mask grid side.
    pub mask_side: usize,
    /// Triplet mask grid side.
    pub triplet_side: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            mask_side: 16,
            triplet_side: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub gcn: GcnConfig,
    pub heads: HeadConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.gcn;
        if g.embed_dim == 0 || g.hidden_dim == 0 || g.n_layers == 0 {
            return Err(Error::Config(
                "embed_dim, hidden_dim and n_layers must be >= 1".into(),
            ));
        }
        if !(g.init_scale >= 0.0 && g.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be finite and >= 0".into()));
        }
        if self.heads.mask_side == 0 || self.heads.triplet_side == 0 {
            return Err(Error::Config("mask grid sides must be >= 1".into()));
        }
        Ok(())
    }
}

/// Flat parameter storage; `ParamId` indexes into it.
pub type Gradients = Vec<Vec<f64>>;

/// The full network: GCN plus prediction heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tensors: Vec<Tensor>,
    pub gcn: GcnParams,
    pub heads: HeadParams,
}

struct LayoutBuilder {
    tensors: Vec<Tensor>,
}

impl LayoutBuilder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.tensors.push(Tensor::zeros(name, rows, cols));
        ParamId(self.tensors.len() - 1)
    }

    fn linear(&mut self, name: &str, inputs: usize, outputs: usize) -> Linear {
        Linear {
            weight: self.tensor(format!("{name}.weight"), outputs, inputs),
            bias: self.tensor(format!("{name}.bias"), outputs, 1),
        }
    }
}

impl Model {
    /// All-zero parameters with the layout implied by `config` and `vocab`.
    pub fn zeros(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let d = config.gcn.embed_dim;
        let h = config.gcn.hidden_dim;
        let mut b = LayoutBuilder {
            tensors: Vec::new(),
        };
        let object_embedding_table = b.tensor("object_embedding".into(), vocab.num_categories(), d);
        let predicate_embedding_table =
            b.tensor("predicate_embedding".into(), vocab.num_predicates(), d);
        let layers = (0..config.gcn.n_layers)
            .map(|l| GcnLayerParams {
                edge_hidden: b.linear(&format!("gcn.{l}.edge_hidden"), 3 * d, h),
                edge_out: b.linear(&format!("gcn.{l}.edge_out"), h, 3 * d),
                node_update: b.linear(&format!("gcn.{l}.node_update"), d, d),
            })
            .collect();
        let mo = config.heads.mask_side;
        let mt = config.heads.triplet_side;
        let heads = HeadParams {
            box_head: b.linear("head.box", d, 4),
            mask_head: b.linear("head.mask", d, mo * mo),
            triplet_mask_head: b.linear("head.triplet_mask", 3 * d, mt * mt * 3),
            superbox_head: b.linear("head.superbox", 3 * d, 4),
        };
        Ok(Model {
            config,
            vocab,
            tensors: b.tensors,
            gcn: GcnParams {
                object_embedding_table,
                predicate_embedding_table,
                layers,
            },
            heads,
        })
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn is_bias(name: &str) -> bool {
        name.ends_with(".bias")
    }

    /// Checkpoint serialization: config, vocab, and every tensor by name.
    pub fn to_json(&self) -> String {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tensors: self.tensors.clone(),
        };
        serde_json::to_string(&ckpt).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, source: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::validation(
                "version",
                format!("unsupported checkpoint version {}", ckpt.version),
            ));
        }
        ckpt.vocab.validate()?;
        let mut model = Model::zeros(ckpt.config, ckpt.vocab)?;
        if ckpt.tensors.len() != model.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, layout expects {}",
                ckpt.tensors.len(),
                model.tensors.len()
            )));
        }
        for (slot, t) in model.tensors.iter_mut().zip(ckpt.tensors) {
            if slot.name != t.name
                || slot.rows != t.rows
                || slot.cols != t.cols
                || t.data.len() != t.rows * t.cols
            {
                return Err(Error::Shape(format!(
                    "tensor {} ({}x{}) does not match layout {} ({}x{})",
                    t.name, t.rows, t.cols, slot.name, slot.rows, slot.cols
                )));
            }
            *slot = t;
        }
        if !model.is_finite() {
            return Err(Error::validation("tensors", "non-finite parameter values"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Checks that this model can consume data labelled with `vocab`.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if &self.vocab != vocab {
            return Err(Error::Shape(format!(
                "checkpoint vocabulary {:?} differs from data vocabulary {:?}",
                self.vocab.object_categories, vocab.object_categories
            )));
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<Tensor>,
}

/// Weights uniform in `[-init_scale, init_scale]`, biases zero.
pub fn init_params(config: &ModelConfig, vocab: &Vocab) -> Result<Model> {
    let mut model = Model::zeros(config.clone(), vocab.clone())?;
    let scale = config.gcn.init_scale;
    let mut rng = keyed_rng(config.gcn.seed, Domain::Init, 0);
    for t in &mut model.tensors {
        if Model::is_bias(&t.name) {
            continue;
        }
        for v in &mut t.data {
            let u: f64 = rng.random();
            *v = (2.0 * u - 1.0) * scale;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab10() -> Vocab {
        Vocab::new((0..10).map(|i| format!("c{i}"))).unwrap()
    }

    #[test]
    fn shapes_match_config() {
        let m = init_params(&ModelConfig::default(), &vocab10()).unwrap();
        assert_eq!(m.tensor(m.gcn.object_embedding_table).rows, 10);
        assert_eq!(m.tensor(m.gcn.object_embedding_table).cols, 32);
        assert_eq!(m.tensor(m.gcn.predicate_embedding_table).rows, 8);
        assert_eq!(m.gcn.layers.len(), 3);
        let l = m.gcn.layers[0];
        assert_eq!(
            (
                m.tensor(l.edge_hidden.weight).rows,
                m.tensor(l.edge_hidden.weight).cols
            ),
            (64, 96)
        );
        assert_eq!(
            (
                m.tensor(l.edge_out.weight).rows,
                m.tensor(l.edge_out.weight).cols
            ),
            (96, 64)
        );
        assert_eq!(
            (
                m.tensor(l.node_update.weight).rows,
                m.tensor(l.node_update.weight).cols
            ),
            (32, 32)
        );
        let tm = m.tensor(m.heads.triplet_mask_head.weight);
        assert_eq!((tm.rows, tm.cols), (32 * 32 * 3, 96));
        assert_eq!(m.tensor(m.heads.mask_head.weight).rows, 256);
        assert_eq!(m.tensor(m.heads.superbox_head.weight).rows, 4);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, &vocab10()).unwrap();
        let b = init_params(&cfg, &vocab10()).unwrap();
        assert_eq!(a, b);
        for t in &a.tensors {
            if t.name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0));
            } else {
                assert!(t.data.iter().all(|&v| v.abs() <= 0.05));
            }
        }
        let mut other = cfg.clone();
        other.gcn.seed = 1;
        assert_ne!(init_params(&other, &vocab10()).unwrap(), a);
    }

    #[test]
    fn zero_scale_gives_zero_weights() {
        let mut cfg = ModelConfig::default();
        cfg.gcn.init_scale = 0.0;
        let m = init_params(&cfg, &vocab10()).unwrap();
        assert!(m.tensors.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let mut cfg = ModelConfig::default();
        cfg.gcn.embed_dim = 4;
        cfg.gcn.hidden_dim = 5;
        cfg.heads = HeadConfig {
            mask_side: 3,
            triplet_side: 4,
        };
        let m = init_params(&cfg, &vocab10()).unwrap();
        let text = m.to_json();
        assert_eq!(Model::from_json(&text, Path::new("mem")).unwrap(), m);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"][0]["rows"] = serde_json::json!(3);
        assert!(matches!(
            Model::from_json(&v.to_string(), Path::new("mem")),
            Err(Error::Shape(_))
        ));
        assert!(m.check_vocab(&Vocab::new(["x"]).unwrap()).is_err());
    }
}
