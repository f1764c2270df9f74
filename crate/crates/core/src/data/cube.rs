use crate::error::{ensure_finite, Error, Result};

/// Label value reserved for pixels without ground truth.
pub const UNLABELED: u16 = 0;

/// `height × width × bands` reflectance cube stored band-interleaved-by-pixel,
/// row-major: value `(r, c, b)` lives at `(r * width + c) * bands + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
}

impl HyperCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "cube {height}x{width}x{bands} needs {expected} values, got {}",
                values.len()
            )));
        }
        ensure_finite(&values, "cube")?;
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, bands: usize) -> Result<Self> {
        Self::new(height, width, bands, vec![0.0; height * width * bands])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    /// Spectrum by flat pixel index `row * width + col`.
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.bands..(index + 1) * self.bands]
    }

    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[(row * self.width + col) * self.bands + band]
    }

    pub fn same_shape(&self, other: &HyperCube) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }
}

/// Ground-truth class map. Values are in `0..=num_classes`; `0` is unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: u16,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: u16, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "label map dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "label map {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > num_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside 0..={num_classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    pub fn matches(&self, cube: &HyperCube) -> bool {
        self.height == cube.height() && self.width == cube.width()
    }

    pub fn ensure_matches(&self, cube: &HyperCube) -> Result<()> {
        if self.matches(cube) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "label map {}x{} does not match cube {}x{}",
                self.height,
                self.width,
                cube.height(),
                cube.width()
            )))
        }
    }

    /// Flat indices of labeled pixels, row-major.
    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != UNLABELED)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pixel count per class, index `c - 1` for class `c`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize];
        for &l in &self.labels {
            if l != UNLABELED {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }

    /// Copy that keeps labels only at `keep` (flat indices); all else becomes unlabeled.
    pub fn restricted_to(&self, keep: &[usize]) -> LabelMap {
        let mut labels = vec![UNLABELED; self.labels.len()];
        for &i in keep {
            labels[i] = self.labels[i];
        }
        LabelMap {
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(HyperCube::new(0, 2, 2, vec![]).is_err());
        assert!(HyperCube::new(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(HyperCube::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LabelMap::new(1, 2, 2, vec![0, 3]).is_err());
    }

    #[test]
    fn bip_indexing() {
        let values: Vec<f64> = (0..12).map(f64::from).collect();
        let cube = HyperCube::new(2, 2, 3, values).unwrap();
        assert_eq!(cube.spectrum(1, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(cube.get(0, 1, 2), 5.0);
        assert_eq!(cube.pixel(3), &[9.0, 10.0, 11.0]);
    }

    #[test]
    fn class_counts_skip_unlabeled() {
        let map = LabelMap::new(2, 3, 2, vec![0, 1, 1, 2, 0, 1]).unwrap();
        assert_eq!(map.class_counts(), vec![3, 1]);
        assert_eq!(map.labeled_indices(), vec![1, 2, 3, 5]);
        let r = map.restricted_to(&[2, 3]);
        assert_eq!(r.labels(), &[0, 0, 1, 2, 0, 0]);
    }
}
