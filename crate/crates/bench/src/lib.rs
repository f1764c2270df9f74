//! Shared fixtures for the kernel benchmarks.

use iwgs_core::classifier::{train, ClassifierParams};
use iwgs_core::data::{extract_patches, generate_synthetic, Patch};
use iwgs_core::{HyperCube, LabelMap, SyntheticSpec, TrainConfig};

/// Seeded block scene with two informative bands.
pub fn scene(height: usize, width: usize, bands: usize) -> (HyperCube, LabelMap) {
    generate_synthetic(&SyntheticSpec {
        height,
        width,
        bands,
        num_classes: 4,
        informative_bands: vec![bands / 3, 2 * bands / 3],
        noise_sigma: 0.03,
        seed: 17,
    })
    .expect("valid synthetic spec")
}

/// Patches of every labeled pixel and a briefly trained classifier over them.
pub fn trained(
    cube: &HyperCube,
    labels: &LabelMap,
    patch_size: usize,
) -> (Vec<Patch>, ClassifierParams) {
    let patches = extract_patches(cube, labels, patch_size).expect("odd patch size");
    let config = TrainConfig {
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let params = train(&patches, labels.num_classes(), &config).expect("training converges");
    (patches, params)
}
