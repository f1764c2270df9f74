//! Cube and label data model, ingestion, synthetic scenes, patches and splits.

mod cube;
mod io;
mod patch;
mod split;
mod synth;

pub use cube::{HyperCube, LabelMap, UNLABELED};
pub use io::{
    load_cube, load_cube_csv, load_labels, save_cube, save_labels, CubeHeader, LabelHeader,
};
pub use patch::{extract_patch_at, extract_patches, mirror_index, Patch};
pub(crate) use patch::{fill_patch, patch_pixel_indices, patches_at};
pub use split::{split, undersample, Split, SplitSpec};
pub use synth::{generate_synthetic, SyntheticSpec, CLASS_LEVEL_STEP, MAX_LEVELS_PER_BAND};
