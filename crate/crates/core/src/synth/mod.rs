//! Synthetic histology-like scenes with exact lesion masks, and patch
//! sampling against those masks.

mod io;
mod motif;
mod sampling;
mod scene;

pub use io::{
    read_dataset, read_inventories, read_scenes, write_dataset, write_inventories, write_scenes, MANIFEST_FILE,
    SCENES_FILE, SUMMARY_FILE,
};
pub use motif::{BBox, Motif, MotifClass, Shape};
pub use sampling::{
    eligible_coordinates, image_to_tensor, overlap_fraction, patch_contains, sample_patches, sample_split, ClassCounts,
    DatasetManifest, Label, PatchRecord, PatchRequest, Split, DEFAULT_GRID_STRIDE, DEFAULT_TAU,
};
pub use scene::{generate_scene, generate_scenes, scene_rng, AnnotatedScene, MotifRecipe, SceneSpec};
