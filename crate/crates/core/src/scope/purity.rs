use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ranking::ChannelRanking;
use super::tags::ChannelTag;
use crate::error::{Error, Result};
use crate::synth::{patch_contains, AnnotatedScene, DatasetManifest, MotifClass};

/// Fraction of a patch set containing each planted motif class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotifFractions {
    pub tumor_blob: f64,
    pub lymphocyte_dot: f64,
    pub collagen_stripe: f64,
    pub lumen_hole: f64,
}

impl MotifFractions {
    pub fn get(&self, class: MotifClass) -> f64 {
        match class {
            MotifClass::TumorBlob => self.tumor_blob,
            MotifClass::LymphocyteDot => self.lymphocyte_dot,
            MotifClass::CollagenStripe => self.collagen_stripe,
            MotifClass::LumenHole => self.lumen_hole,
            MotifClass::Background => 0.0,
        }
    }

    fn slot(&mut self, class: MotifClass) -> &mut f64 {
        match class {
            MotifClass::TumorBlob => &mut self.tumor_blob,
            MotifClass::LymphocyteDot => &mut self.lymphocyte_dot,
            MotifClass::CollagenStripe => &mut self.collagen_stripe,
            MotifClass::LumenHole => &mut self.lumen_hole,
            MotifClass::Background => unreachable!("background is not planted"),
        }
    }
}

/// Motif purity of one channel's top-k patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPurity {
    pub channel: u32,
    pub patches: usize,
    pub purity: MotifFractions,
}

/// Looks up which planted motifs each dataset patch contains.
pub struct MotifIndex {
    contains: Vec<[bool; 4]>,
}

impl MotifIndex {
    pub fn new(dataset: &DatasetManifest, scenes: &[AnnotatedScene]) -> Result<Self> {
        let by_id: HashMap<u32, &AnnotatedScene> = scenes.iter().map(|s| (s.id, s)).collect();
        let contains = dataset
            .records
            .iter()
            .map(|r| {
                let scene = by_id.get(&r.scene_id).ok_or_else(|| {
                    Error::InvalidArgument(format!("scene {} missing for patch inventory", r.scene_id))
                })?;
                let rect = r.rect();
                Ok(MotifClass::PLANTED.map(|c| patch_contains(scene, &rect, c)))
            })
            .collect::<Result<_>>()?;
        Ok(MotifIndex { contains })
    }

    pub fn len(&self) -> usize {
        self.contains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contains.is_empty()
    }

    pub fn contains(&self, patch: usize, class: MotifClass) -> bool {
        MotifClass::PLANTED
            .iter()
            .position(|&c| c == class)
            .is_some_and(|k| self.contains[patch][k])
    }

    pub fn fractions(&self, patches: impl IntoIterator<Item = usize>) -> Result<MotifFractions> {
        let mut out = MotifFractions::default();
        let mut n = 0usize;
        for p in patches {
            if p >= self.contains.len() {
                return Err(Error::InvalidArgument(format!("patch {p} not in the dataset")));
            }
            n += 1;
            for (k, &class) in MotifClass::PLANTED.iter().enumerate() {
                if self.contains[p][k] {
                    *out.slot(class) += 1.0;
                }
            }
        }
        if n > 0 {
            for class in MotifClass::PLANTED {
                *out.slot(class) /= n as f64;
            }
        }
        Ok(out)
    }

    /// Fractions over the whole dataset.
    pub fn base_rates(&self) -> MotifFractions {
        self.fractions(0..self.len()).expect("indices in range")
    }
}

pub fn channel_purity(rankings: &[ChannelRanking], index: &MotifIndex) -> Result<Vec<ChannelPurity>> {
    rankings
        .iter()
        .map(|r| {
            Ok(ChannelPurity {
                channel: r.channel,
                patches: r.entries.len(),
                purity: index.fractions(r.patches().map(|p| p as usize))?,
            })
        })
        .collect()
}

/// Thresholds of the purity-based tag suggester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagRule {
    /// Minimum fraction of top-k patches containing the motif.
    pub min_purity: f64,
    /// Minimum excess of that fraction over the dataset base rate.
    pub min_lift: f64,
}

impl Default for TagRule {
    fn default() -> Self {
        TagRule {
            min_purity: 0.9,
            min_lift: 0.3,
        }
    }
}

pub fn tag_for(class: MotifClass) -> ChannelTag {
    match class {
        MotifClass::TumorBlob => ChannelTag::Tumor,
        MotifClass::LymphocyteDot => ChannelTag::Lymphocyte,
        MotifClass::CollagenStripe => ChannelTag::Collagen,
        MotifClass::LumenHole => ChannelTag::OtherStructure,
        MotifClass::Background => ChannelTag::Unrecognizable,
    }
}

/// Suggests a tag per channel from inventory ground truth: the motif with
/// the largest lift among those passing `rule`, else unrecognizable.
pub fn suggest_tags(purity: &[ChannelPurity], base: &MotifFractions, rule: &TagRule) -> Vec<ChannelTag> {
    purity
        .iter()
        .map(|p| {
            let mut best: Option<(f64, MotifClass)> = None;
            for class in MotifClass::PLANTED {
                let (f, lift) = (p.purity.get(class), p.purity.get(class) - base.get(class));
                if f >= rule.min_purity && lift >= rule.min_lift && best.is_none_or(|(l, _)| lift > l) {
                    best = Some((lift, class));
                }
            }
            best.map_or(ChannelTag::Unrecognizable, |(_, c)| tag_for(c))
        })
        .collect()
}
