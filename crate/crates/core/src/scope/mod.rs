//! Neuron-to-FOV mapping, channel ranking, heatmaps, galleries and channel
//! tags.

mod gallery;
mod geometry;
mod heatmap;
mod purity;
mod ranking;
mod tags;

pub use gallery::{export_gallery, GalleryChannel, GalleryEntry, GalleryManifest, GallerySpec, GALLERY_FILE};
pub use geometry::{fov_box, fov_unclipped, geometry_at, layer_geometry, FovBox, LayerGeometry};
pub use heatmap::{draw_box, normalize, overlay, render_heatmap, sample_bilinear, Heatmap, Upsample, BOX_COLOR};
pub use purity::{channel_purity, suggest_tags, tag_for, ChannelPurity, MotifFractions, MotifIndex, TagRule};
pub use ranking::{
    layer_map, rank_channels, rank_top_k, score_channels, score_patches, ChannelRanking, ChannelScore, RankEntry,
    DEFAULT_TOP_K,
};
pub use tags::{ChannelTag, ResolvedTags, TagFile};
