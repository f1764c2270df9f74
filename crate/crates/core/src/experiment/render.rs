use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng as _;

use crate::data::{LabelMap, UNLABELED};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Classes per map an 8-bit palette can hold next to the unlabeled entry.
pub const MAX_PALETTE_CLASSES: u16 = 255;

/// `num_classes + 1` RGB triples: black for unlabeled, then one distinct,
/// non-black random colour per class.
pub fn palette(num_classes: u16, seed: u64) -> Result<Vec<[u8; 3]>> {
    if num_classes > MAX_PALETTE_CLASSES {
        return Err(Error::Config(format!(
            "{num_classes} classes exceed the {MAX_PALETTE_CLASSES}-entry palette"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = BTreeSet::from([[0u8; 3]]);
    let mut colours = vec![[0u8; 3]];
    while colours.len() <= usize::from(num_classes) {
        let c: [u8; 3] = rng.random();
        if seen.insert(c) {
            colours.push(c);
        }
    }
    Ok(colours)
}

/// Writes `labels` as an indexed-colour PNG, one palette entry per class.
pub fn render_map(labels: &LabelMap, palette_seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let colours = palette(labels.num_classes(), palette_seed)?;
    let width = u32::try_from(labels.width()).map_err(|_| Error::Data("map too wide".into()))?;
    let height = u32::try_from(labels.height()).map_err(|_| Error::Data("map too tall".into()))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(colours.concat());
    let encode_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other}", path.display())),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    let indices: Vec<u8> = labels
        .labels()
        .iter()
        .map(|&l| if l == UNLABELED { 0 } else { l as u8 })
        .collect();
    writer.write_image_data(&indices).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_distinct_and_seeded() {
        let p = palette(255, 7).unwrap();
        assert_eq!(p.len(), 256);
        assert_eq!(p[0], [0, 0, 0]);
        assert_eq!(p.iter().collect::<BTreeSet<_>>().len(), 256);
        assert_eq!(p, palette(255, 7).unwrap());
        assert_ne!(p, palette(255, 8).unwrap());
        assert!(palette(256, 0).is_err());
    }
}
