use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{HyperCube, LabelMap};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Reflectance offset between adjacent class levels on an informative band.
pub const CLASS_LEVEL_STEP: f64 = 0.25;
/// Distinct offset levels an informative band can carry.
pub const MAX_LEVELS_PER_BAND: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub num_classes: u16,
    pub informative_bands: Vec<usize>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Block-layout scene whose class mean spectra differ only on the informative bands.
///
/// Every class shares one random base spectrum in `[0.2, 0.8)`. Class `c` (0-based)
/// is written in base `m` (smallest `m ≥ 2` with `m^k ≥ C`, `k` informative bands)
/// and digit `i` adds `digit · CLASS_LEVEL_STEP` to the `i`-th informative band.
/// The map is a `ceil(√C)`-column grid of contiguous blocks, cell `n` holding class
/// `n mod C + 1`; i.i.d. Gaussian noise is added to every value afterwards.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(HyperCube, LabelMap)> {
    let SyntheticSpec {
        height,
        width,
        bands,
        num_classes,
        ref informative_bands,
        noise_sigma,
        seed,
    } = *spec;
    if num_classes < 2 {
        return Err(Error::Config(
            "synthetic scene needs at least 2 classes".into(),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let mut informative = informative_bands.clone();
    informative.sort_unstable();
    informative.dedup();
    if informative.is_empty() {
        return Err(Error::Config("informative band set is empty".into()));
    }
    if let Some(&b) = informative.iter().find(|&&b| b >= bands) {
        return Err(Error::Config(format!(
            "informative band {b} outside 0..{bands}"
        )));
    }

    let k = informative.len() as u32;
    let classes = usize::from(num_classes);
    let levels = (2..=MAX_LEVELS_PER_BAND)
        .find(|m| m.checked_pow(k).is_none_or(|cap| cap >= classes))
        .ok_or_else(|| {
            Error::Config(format!(
                "{classes} classes cannot be encoded on {k} informative band(s) with {MAX_LEVELS_PER_BAND} levels each"
            ))
        })?;

    let cols = (1..).find(|c| c * c >= classes).unwrap();
    let rows = classes.div_ceil(cols);
    if height < rows || width < cols {
        return Err(Error::Config(format!(
            "{height}x{width} scene too small for a {rows}x{cols} class grid"
        )));
    }

    let mut rng = rng_from_seed(seed);
    let base: Vec<f64> = (0..bands).map(|_| rng.random_range(0.2..0.8)).collect();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut spectrum = base.clone();
            let mut code = c;
            for &band in &informative {
                spectrum[band] += (code % levels) as f64 * CLASS_LEVEL_STEP;
                code /= levels;
            }
            spectrum
        })
        .collect();

    let mut labels = Vec::with_capacity(height * width);
    for r in 0..height {
        let block_row = r * rows / height;
        for c in 0..width {
            let block_col = c * cols / width;
            labels.push(((block_row * cols + block_col) % classes) as u16 + 1);
        }
    }

    let mut values = Vec::with_capacity(height * width * bands);
    for &label in &labels {
        for &m in &means[usize::from(label) - 1] {
            let noise: f64 = if noise_sigma > 0.0 {
                noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            values.push(m + noise);
        }
    }

    Ok((
        HyperCube::new(height, width, bands, values)?,
        LabelMap::new(height, width, num_classes, labels)?,
    ))
}
