//! Scene-graph embeddings learned through layout prediction.
//!
//! The pipeline generates synthetic scenes, derives geometric scene graphs
//! (optionally augmented with depth-order edges), trains a graph
//! convolutional network with box, mask, triplet-mask and superbox heads, and
//! evaluates both the predicted layouts and the separability of the learned
//! object embeddings.

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod geometry;
pub mod graphbuild;
pub mod introspect;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod prediction;
pub mod rng;
pub mod tape;
pub mod training;
pub mod types;
pub mod variant;

pub use error::{Error, Result};
pub use geometry::{box_area, box_iou, union_box, BBox, MaskGrid};
pub use params::{init_params, GcnConfig, HeadConfig, Model, ModelConfig};
pub use rng::{keyed_rng, seeded_rng, RngState};
pub use types::{ObjectInstance, Predicate, Scene, SceneGraph, Triplet, Vocab};
pub use variant::Variant;
