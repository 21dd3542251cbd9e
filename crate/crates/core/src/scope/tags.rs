use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio::{load_json, save_json};

/// Pathology category a channel is judged to detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelTag {
    Tumor,
    Lymphocyte,
    Collagen,
    OtherStructure,
    Unrecognizable,
}

impl ChannelTag {
    pub const ALL: [ChannelTag; 5] = [
        ChannelTag::Tumor,
        ChannelTag::Lymphocyte,
        ChannelTag::Collagen,
        ChannelTag::OtherStructure,
        ChannelTag::Unrecognizable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelTag::Tumor => "tumor",
            ChannelTag::Lymphocyte => "lymphocyte",
            ChannelTag::Collagen => "collagen",
            ChannelTag::OtherStructure => "other_structure",
            ChannelTag::Unrecognizable => "unrecognizable",
        }
    }

    /// Tumor cells or lymphocytes.
    pub fn is_cell(self) -> bool {
        matches!(self, ChannelTag::Tumor | ChannelTag::Lymphocyte)
    }

    pub fn is_recognizable(self) -> bool {
        self != ChannelTag::Unrecognizable
    }
}

impl fmt::Display for ChannelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `tags.json`: channel index to tag, plus channels explicitly left untagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFile {
    pub model_name: String,
    pub tap: String,
    pub tags: BTreeMap<u32, ChannelTag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub untagged: Vec<u32>,
}

/// Tags for every channel after filling gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTags {
    pub tags: Vec<ChannelTag>,
    /// One message per channel that had no tag.
    pub warnings: Vec<String>,
}

impl ResolvedTags {
    pub fn channels_where(&self, pred: impl Fn(ChannelTag) -> bool) -> Vec<usize> {
        (0..self.tags.len()).filter(|&c| pred(self.tags[c])).collect()
    }
}

impl TagFile {
    pub fn new(model_name: impl Into<String>, tap: impl Into<String>, tags: &[ChannelTag]) -> Self {
        TagFile {
            model_name: model_name.into(),
            tap: tap.into(),
            tags: tags.iter().enumerate().map(|(i, &t)| (i as u32, t)).collect(),
            untagged: Vec::new(),
        }
    }

    /// Checks indices against a map of `channels` channels.
    pub fn validate(&self, channels: usize) -> Result<()> {
        if let Some(c) = self
            .tags
            .keys()
            .chain(&self.untagged)
            .find(|&&c| c as usize >= channels)
        {
            return Err(Error::InvalidArgument(format!(
                "tag index {c} out of range for {channels} channels"
            )));
        }
        if let Some(c) = self.untagged.iter().find(|c| self.tags.contains_key(c)) {
            return Err(Error::InvalidArgument(format!(
                "channel {c} is both tagged and listed as untagged"
            )));
        }
        Ok(())
    }

    /// Tag per channel; untagged channels count as unrecognizable, each
    /// with a warning.
    pub fn resolve(&self, channels: usize) -> Result<ResolvedTags> {
        self.validate(channels)?;
        let mut warnings = Vec::new();
        let tags = (0..channels as u32)
            .map(|c| match self.tags.get(&c) {
                Some(&t) => t,
                None => {
                    warnings.push(format!("channel {c} untagged, treated as unrecognizable"));
                    ChannelTag::Unrecognizable
                }
            })
            .collect();
        Ok(ResolvedTags { tags, warnings })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TagFile> {
        load_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untagged_channels_warn() {
        let mut f = TagFile::new("m", "gap", &[ChannelTag::Tumor, ChannelTag::Collagen]);
        f.untagged = vec![3];
        let r = f.resolve(5).unwrap();
        assert_eq!(r.warnings.len(), 3);
        assert_eq!(r.tags[4], ChannelTag::Unrecognizable);
        assert_eq!(r.channels_where(ChannelTag::is_cell), vec![0]);
    }

    #[test]
    fn out_of_range_and_conflicts_rejected() {
        let f = TagFile::new("m", "gap", &[ChannelTag::Tumor; 4]);
        assert!(f.validate(3).is_err());
        let mut g = TagFile::new("m", "gap", &[ChannelTag::Tumor]);
        g.untagged = vec![0];
        assert!(g.validate(3).is_err());
    }

    #[test]
    fn schema_uses_string_keys() {
        let f = TagFile::new("m", "gap", &[ChannelTag::OtherStructure]);
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["tags"]["0"], "other_structure");
        assert!(v.get("untagged").is_none());
    }
}
