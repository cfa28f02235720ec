//! Vocabulary, scenes, and scene graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, MaskGrid};

/// The fixed predicate set. Geometric predicates occupy 0..6, depth
/// predicates added by augmentation occupy 6..8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    LeftOf = 0,
    RightOf = 1,
    Above = 2,
    Below = 3,
    Inside = 4,
    Surrounding = 5,
    InFrontOf = 6,
    Behind = 7,
}

impl Predicate {
    pub const ALL: [Predicate; 8] = [
        Predicate::LeftOf,
        Predicate::RightOf,
        Predicate::Above,
        Predicate::Below,
        Predicate::Inside,
        Predicate::Surrounding,
        Predicate::InFrontOf,
        Predicate::Behind,
    ];
    pub const BASE_COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Predicate::LeftOf => "left of",
            Predicate::RightOf => "right of",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::Inside => "inside",
            Predicate::Surrounding => "surrounding",
            Predicate::InFrontOf => "in front of",
            Predicate::Behind => "behind",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_base(self) -> bool {
        self.index() < Self::BASE_COUNT
    }

    /// The predicate obtained by swapping subject and object.
    pub fn converse(self) -> Self {
        match self {
            Predicate::LeftOf => Predicate::RightOf,
            Predicate::RightOf => Predicate::LeftOf,
            Predicate::Above => Predicate::Below,
            Predicate::Below => Predicate::Above,
            Predicate::Inside => Predicate::Surrounding,
            Predicate::Surrounding => Predicate::Inside,
            Predicate::InFrontOf => Predicate::Behind,
            Predicate::Behind => Predicate::InFrontOf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub object_categories: Vec<String>,
    pub predicates: Vec<String>,
}

impl Vocab {
    pub fn new<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Result<Self> {
        let object_categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        let vocab = Vocab {
            object_categories,
            predicates: Predicate::ALL
                .iter()
                .map(|p| p.name().to_string())
                .collect(),
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        if self.object_categories.is_empty() {
            return Err(Error::validation("vocab.object_categories", "empty"));
        }
        for (i, name) in self.object_categories.iter().enumerate() {
            if self.object_categories[..i].contains(name) {
                return Err(Error::validation(
                    "vocab.object_categories",
                    format!("duplicate category {name:?}"),
                ));
            }
        }
        let expected: Vec<&str> = Predicate::ALL.iter().map(|p| p.name()).collect();
        if self.predicates != expected {
            return Err(Error::validation(
                "vocab.predicates",
                format!("expected {expected:?}"),
            ));
        }
        Ok(())
    }

    pub fn num_categories(&self) -> usize {
        self.object_categories.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.object_categories.iter().position(|c| c == name)
    }

    pub fn category_name(&self, index: usize) -> &str {
        &self.object_categories[index]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInstance {
    pub category: usize,
    pub bbox: BBox,
    /// Binary mask aligned to the box extent.
    pub mask: MaskGrid,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<ObjectInstance>,
}

pub const MIN_OBJECTS: usize = 3;
pub const MAX_OBJECTS: usize = 8;
pub const MIN_AREA: f64 = 0.02;

impl Scene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    pub fn categories(&self) -> Vec<usize> {
        self.objects.iter().map(|o| o.category).collect()
    }

    /// Checks the object count and area limits along with per-object
    /// well-formedness.
    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&self.objects.len()) {
            return Err(Error::validation(
                "objects",
                format!(
                    "{} objects, expected {MIN_OBJECTS}..={MAX_OBJECTS}",
                    self.objects.len()
                ),
            ));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.category >= vocab.num_categories() {
                return Err(Error::validation(
                    format!("objects[{i}].category"),
                    format!("index {} out of range", obj.category),
                ));
            }
            if !obj.bbox.is_valid() {
                return Err(Error::validation(
                    format!("objects[{i}].box"),
                    "invalid box",
                ));
            }
            if obj.bbox.area() < MIN_AREA {
                return Err(Error::validation(
                    format!("objects[{i}].box"),
                    format!("area {} below {MIN_AREA}", obj.bbox.area()),
                ));
            }
            if obj.mask.foreground_count() == 0 {
                return Err(Error::validation(
                    format!("objects[{i}].mask"),
                    "no foreground cells",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub subject: usize,
    pub predicate: Predicate,
    pub object: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SceneGraph {
    pub node_categories: Vec<usize>,
    pub edges: Vec<Triplet>,
    /// Parallel to `edges`; `true` for edges added by depth augmentation.
    pub augmented: Vec<bool>,
}

impl SceneGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_categories.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn base_edge_count(&self) -> usize {
        self.augmented.iter().filter(|a| !**a).count()
    }

    pub fn augmented_edge_count(&self) -> usize {
        self.augmented.iter().filter(|a| **a).count()
    }

    /// The graph with augmentation edges removed.
    pub fn base_only(&self) -> SceneGraph {
        let (edges, augmented) = self
            .edges
            .iter()
            .zip(&self.augmented)
            .filter(|(_, &aug)| !aug)
            .map(|(e, &a)| (*e, a))
            .unzip();
        SceneGraph {
            node_categories: self.node_categories.clone(),
            edges,
            augmented,
        }
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        let n = self.num_nodes();
        if self.augmented.len() != self.edges.len() {
            return Err(Error::validation("augmented", "length differs from edges"));
        }
        for (i, &c) in self.node_categories.iter().enumerate() {
            if c >= vocab.num_categories() {
                return Err(Error::validation(
                    format!("nodes[{i}]"),
                    "category out of range",
                ));
            }
        }
        let mut covered = vec![false; n];
        let mut base_pairs = std::collections::HashSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.subject >= n || e.object >= n {
                return Err(Error::validation(
                    format!("edges[{i}]"),
                    "node index out of range",
                ));
            }
            if e.subject == e.object {
                return Err(Error::validation(format!("edges[{i}]"), "self loop"));
            }
            if e.predicate.is_base() && !base_pairs.insert((e.subject, e.object)) {
                return Err(Error::validation(
                    format!("edges[{i}]"),
                    "second base edge for the same ordered pair",
                ));
            }
            covered[e.subject] = true;
            covered[e.object] = true;
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::validation(format!("nodes[{i}]"), "node has no edge"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicate_indices_and_names() {
        let names: Vec<&str> = Predicate::ALL.iter().map(|p| p.name()).collect();
        assert_eq!(
            names,
            [
                "left of",
                "right of",
                "above",
                "below",
                "inside",
                "surrounding",
                "in front of",
                "behind"
            ]
        );
        for (i, p) in Predicate::ALL.iter().enumerate() {
            assert_eq!(p.index(), i);
            assert_eq!(Predicate::from_name(p.name()), Some(*p));
            assert_eq!(p.converse().converse(), *p);
            assert_eq!(p.is_base(), i < 6);
        }
    }

    #[test]
    fn vocab_rejects_duplicates() {
        assert!(Vocab::new(["sky", "tree", "sky"]).is_err());
        let v = Vocab::new(["sky", "tree"]).unwrap();
        assert_eq!(v.category_index("tree"), Some(1));
        assert_eq!(v.num_predicates(), 8);
    }

    #[test]
    fn base_only_strips_augmented_edges() {
        let g = SceneGraph {
            node_categories: vec![0, 1],
            edges: vec![
                Triplet {
                    subject: 0,
                    predicate: Predicate::LeftOf,
                    object: 1,
                },
                Triplet {
                    subject: 0,
                    predicate: Predicate::InFrontOf,
                    object: 1,
                },
            ],
            augmented: vec![false, true],
        };
        let b = g.base_only();
        assert_eq!(b.edges.len(), 1);
        assert_eq!(g.augmented_edge_count(), 1);
    }
}
