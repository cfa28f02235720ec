//! Model variants: which losses and which graph augmentation a run uses.

use serde::{Deserialize, Serialize};

use crate::graphbuild::AugmentConfig;
use crate::prediction::LossWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Box and mask losses only, geometric edges only.
    Baseline,
    /// Adds the triplet mask and superbox losses.
    Triplet,
    /// Triplet losses plus depth-order augmentation.
    TripletDa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Triplet, Variant::TripletDa];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Triplet => "triplet",
            Variant::TripletDa => "triplet_da",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// `base` with the triplet weights zeroed for the baseline.
    pub fn loss_weights(self, base: LossWeights) -> LossWeights {
        match self {
            Variant::Baseline => LossWeights {
                w_tmask: 0.0,
                w_superbox: 0.0,
                ..base
            },
            Variant::Triplet | Variant::TripletDa => base,
        }
    }

    /// `base` with augmentation switched on only for `TripletDa`.
    pub fn augmentation(self, base: AugmentConfig) -> AugmentConfig {
        AugmentConfig {
            enabled: self == Variant::TripletDa,
            ..base
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
