//! Synthetic scene generation and scene-file ingestion.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, MaskGrid};
use crate::rng::{keyed_rng, Domain, RngState};
use crate::types::{ObjectInstance, Scene, Vocab, MAX_OBJECTS, MIN_AREA, MIN_OBJECTS};

/// Rejection attempts allowed per scene before giving up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskShape {
    Rectangle,
    Ellipse,
}

/// Spatial prior for one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryPrior {
    pub name: String,
    /// Mean and standard deviation of the vertical box center.
    pub band_mean: f64,
    pub band_sd: f64,
    /// Mean and standard deviation of box width and height.
    pub size_mean: f64,
    pub size_sd: f64,
    pub shape: MaskShape,
    /// Relative sampling frequency.
    pub weight: f64,
}

impl CategoryPrior {
    pub fn new(
        name: &str,
        band: (f64, f64),
        size: (f64, f64),
        shape: MaskShape,
        weight: f64,
    ) -> Self {
        CategoryPrior {
            name: name.to_string(),
            band_mean: band.0,
            band_sd: band.1,
            size_mean: size.0,
            size_sd: size.1,
            shape,
            weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub n_scenes: usize,
    pub category_priors: Vec<CategoryPrior>,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_area: f64,
    /// Side length of the generated object masks.
    pub mask_side: usize,
    pub seed: u64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            n_scenes: 2000,
            category_priors: reference_priors(),
            min_objects: MIN_OBJECTS,
            max_objects: MAX_OBJECTS,
            min_area: MIN_AREA,
            mask_side: 16,
            seed: 0,
        }
    }
}

/// Ten categories with vertical bands from "sky" at the top to "road" at
/// the bottom.
pub fn reference_priors() -> Vec<CategoryPrior> {
    use MaskShape::*;
    vec![
        CategoryPrior::new("sky", (0.15, 0.05), (0.55, 0.15), Rectangle, 3.0),
        CategoryPrior::new("tree", (0.40, 0.10), (0.30, 0.10), Ellipse, 2.5),
        CategoryPrior::new("building", (0.35, 0.10), (0.35, 0.10), Rectangle, 2.0),
        CategoryPrior::new("mountain", (0.30, 0.05), (0.45, 0.10), Ellipse, 1.0),
        CategoryPrior::new("person", (0.60, 0.10), (0.22, 0.05), Ellipse, 3.0),
        CategoryPrior::new("car", (0.70, 0.08), (0.22, 0.05), Rectangle, 2.0),
        CategoryPrior::new("road", (0.85, 0.05), (0.50, 0.15), Rectangle, 2.0),
        CategoryPrior::new("grass", (0.80, 0.08), (0.45, 0.10), Rectangle, 2.0),
        CategoryPrior::new("pavement", (0.85, 0.05), (0.35, 0.10), Rectangle, 1.0),
        CategoryPrior::new("water", (0.75, 0.08), (0.40, 0.10), Ellipse, 1.0),
    ]
}

impl SceneGenConfig {
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.category_priors.iter().map(|p| p.name.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.category_priors.is_empty() {
            return Err(Error::Config("no category priors".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "min_objects ({}) must be in 1..=max_objects ({})",
                self.min_objects, self.max_objects
            )));
        }
        if self.mask_side == 0 {
            return Err(Error::Config("mask_side must be >= 1".into()));
        }
        for p in &self.category_priors {
            let ok = p.band_sd >= 0.0
                && p.size_sd >= 0.0
                && p.size_mean > 0.0
                && p.weight > 0.0
                && [p.band_mean, p.band_sd, p.size_mean, p.size_sd, p.weight]
                    .iter()
                    .all(|v| v.is_finite());
            if !ok {
                return Err(Error::Config(format!(
                    "invalid prior for category {:?}",
                    p.name
                )));
            }
        }
        self.vocab().map(|_| ())
    }
}

fn sample_categories(rng: &mut RngState, priors: &[CategoryPrior], count: usize) -> Vec<usize> {
    // Weighted sampling without replacement while categories remain, then
    // with replacement.
    let mut remaining: Vec<usize> = (0..priors.len()).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if remaining.is_empty() {
            remaining = (0..priors.len()).collect();
        }
        let &pick = remaining
            .choose_weighted(rng, |&c| priors[c].weight)
            .expect("weights validated positive");
        remaining.retain(|&c| c != pick);
        out.push(pick);
    }
    out
}

fn sample_object(
    rng: &mut RngState,
    prior: &CategoryPrior,
    category: usize,
    mask_side: usize,
) -> Option<ObjectInstance> {
    let band = Normal::new(prior.band_mean, prior.band_sd).ok()?;
    let size = Normal::new(prior.size_mean, prior.size_sd).ok()?;
    let cx: f64 = rng.random();
    let cy = band.sample(rng);
    let w = size.sample(rng);
    let h = size.sample(rng);
    if w <= 0.0 || h <= 0.0 {
        return None;
    }
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let bbox = BBox::new(
        clamp(cx - w / 2.0),
        clamp(cy - h / 2.0),
        clamp(cx + w / 2.0),
        clamp(cy + h / 2.0),
    )
    .ok()?;
    let mask = match prior.shape {
        MaskShape::Rectangle => MaskGrid::filled(mask_side, 1),
        MaskShape::Ellipse => MaskGrid::ellipse(mask_side),
    };
    Some(ObjectInstance {
        category,
        bbox,
        mask,
    })
}

/// Draws one scene by rejection sampling.
///
/// Fails with [`Error::Unsatisfiable`] (scene index 0) after
/// [`MAX_ATTEMPTS`] rejected draws.
pub fn generate_scene(rng: &mut RngState, cfg: &SceneGenConfig) -> Result<Scene> {
    cfg.validate()?;
    for _ in 0..MAX_ATTEMPTS {
        let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
        let categories = sample_categories(rng, &cfg.category_priors, count);
        let mut objects = Vec::with_capacity(count);
        for c in categories {
            match sample_object(rng, &cfg.category_priors[c], c, cfg.mask_side) {
                Some(o) if o.bbox.area() >= cfg.min_area && o.mask.foreground_count() > 0 => {
                    objects.push(o)
                }
                _ => break,
            }
        }
        if objects.len() == count {
            return Ok(Scene { objects });
        }
    }
    Err(Error::Unsatisfiable {
        scene: 0,
        attempts: MAX_ATTEMPTS,
    })
}

fn generate_keyed(cfg: &SceneGenConfig, domain: Domain, n: usize) -> Result<Vec<Scene>> {
    cfg.validate()?;
    (0..n)
        .map(|i| {
            let mut rng = keyed_rng(cfg.seed, domain, i as u64);
            generate_scene(&mut rng, cfg).map_err(|e| match e {
                Error::Unsatisfiable { attempts, .. } => {
                    Error::Unsatisfiable { scene: i, attempts }
                }
                other => other,
            })
        })
        .collect()
}

/// `cfg.n_scenes` scenes, scene `i` drawn from its own stream keyed by
/// `(seed, i)`.
pub fn generate_dataset(cfg: &SceneGenConfig) -> Result<Vec<Scene>> {
    generate_keyed(cfg, Domain::Scene, cfg.n_scenes)
}

/// A held-out split drawn from streams disjoint from [`generate_dataset`].
pub fn generate_test_split(cfg: &SceneGenConfig, n: usize) -> Result<Vec<Scene>> {
    generate_keyed(cfg, Domain::TestScene, n)
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    scenes: Vec<SceneRecord>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    objects: Vec<ObjectRecord>,
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    category: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<MaskRecord>,
}

#[derive(Serialize, Deserialize)]
struct MaskRecord {
    side: usize,
    cells: Vec<u8>,
}

/// Side used for masks synthesized when a record has none.
pub const DEFAULT_MASK_SIDE: usize = 16;

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub scenes: Vec<Scene>,
    pub dropped_objects: usize,
    pub discarded_scenes: usize,
}

/// Parses a scene file, dropping objects below [`MIN_AREA`] and discarding
/// scenes left outside `MIN_OBJECTS..=MAX_OBJECTS`.
pub fn parse_scenes(text: &str, source: &Path, vocab: &Vocab) -> Result<LoadReport> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
    let mut report = LoadReport::default();
    for (si, rec) in file.scenes.into_iter().enumerate() {
        let mut objects = Vec::with_capacity(rec.objects.len());
        for (oi, o) in rec.objects.into_iter().enumerate() {
            let field = |f: &str| format!("scenes[{si}].objects[{oi}].{f}");
            let category = vocab.category_index(&o.category).ok_or_else(|| {
                Error::validation(
                    field("category"),
                    format!("unknown category {:?}", o.category),
                )
            })?;
            let bbox = BBox::try_from(o.bbox).map_err(|_| {
                Error::validation(
                    field("box"),
                    format!("{:?} is not a valid normalized box", o.bbox),
                )
            })?;
            let mask = match o.mask {
                Some(m) => MaskGrid::new(m.side, m.cells, 2).map_err(|e| match e {
                    Error::Validation { message, .. } => Error::validation(field("mask"), message),
                    other => other,
                })?,
                None => MaskGrid::filled(DEFAULT_MASK_SIDE, 1),
            };
            if mask.foreground_count() == 0 {
                return Err(Error::validation(field("mask"), "no foreground cells"));
            }
            if bbox.area() < MIN_AREA {
                report.dropped_objects += 1;
                continue;
            }
            objects.push(ObjectInstance {
                category,
                bbox,
                mask,
            });
        }
        if (MIN_OBJECTS..=MAX_OBJECTS).contains(&objects.len()) {
            report.scenes.push(Scene { objects });
        } else {
            report.discarded_scenes += 1;
        }
    }
    Ok(report)
}

pub fn load_scenes(path: &Path, vocab: &Vocab) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenes(&text, path, vocab)
}

pub fn scenes_to_json(scenes: &[Scene], vocab: &Vocab) -> String {
    let file = SceneFile {
        scenes: scenes
            .iter()
            .map(|s| SceneRecord {
                objects: s
                    .objects
                    .iter()
                    .map(|o| ObjectRecord {
                        category: vocab.category_name(o.category).to_string(),
                        bbox: o.bbox.to_array(),
                        mask: Some(MaskRecord {
                            side: o.mask.side,
                            cells: o.mask.cells.clone(),
                        }),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("scene records serialize")
}

pub fn save_scenes(path: &Path, scenes: &[Scene], vocab: &Vocab) -> Result<()> {
    std::fs::write(path, scenes_to_json(scenes, vocab)).map_err(|e| Error::io(path, e))
}
