use rayon::prelude::*;

use super::{HyperCube, LabelMap, UNLABELED};
use crate::error::{Error, Result};

/// Square spatial window of odd side `size` centred on a labeled pixel.
/// `values` is `size × size × bands`, row-major over (row offset, col offset, band).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub center_row: usize,
    pub center_col: usize,
    pub values: Vec<f64>,
    pub label: u16,
}

/// Reflect-without-repeat index into `0..n`: `-1 → 1`, `n → n - 2`, folded as often as needed.
pub fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn check_patch_size(size: usize) -> Result<()> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "patch size must be a positive odd integer, got {size}"
        )));
    }
    Ok(())
}

/// Patch values around `(row, col)` with mirror padding at the borders.
pub fn extract_patch_at(cube: &HyperCube, row: usize, col: usize, size: usize) -> Result<Vec<f64>> {
    check_patch_size(size)?;
    let mut out = Vec::with_capacity(size * size * cube.bands());
    fill_patch(cube, row, col, size, &mut out);
    Ok(out)
}

pub(crate) fn fill_patch(
    cube: &HyperCube,
    row: usize,
    col: usize,
    size: usize,
    out: &mut Vec<f64>,
) {
    out.clear();
    let half = (size / 2) as isize;
    for dr in -half..=half {
        let r = mirror_index(row as isize + dr, cube.height());
        for dc in -half..=half {
            let c = mirror_index(col as isize + dc, cube.width());
            out.extend_from_slice(cube.spectrum(r, c));
        }
    }
}

/// Flat pixel index of every patch cell, in the same order as the patch values.
pub(crate) fn patch_pixel_indices(
    height: usize,
    width: usize,
    row: usize,
    col: usize,
    size: usize,
) -> impl Iterator<Item = usize> {
    let half = (size / 2) as isize;
    (-half..=half).flat_map(move |dr| {
        let r = mirror_index(row as isize + dr, height);
        (-half..=half).map(move |dc| r * width + mirror_index(col as isize + dc, width))
    })
}

/// One patch per labeled pixel, in row-major pixel order.
pub fn extract_patches(cube: &HyperCube, labels: &LabelMap, size: usize) -> Result<Vec<Patch>> {
    check_patch_size(size)?;
    labels.ensure_matches(cube)?;
    let indices = labels.labeled_indices();
    Ok(patches_at(cube, labels, &indices, size))
}

/// Patches at the given flat pixel indices (each must be labeled), order preserved.
pub(crate) fn patches_at(
    cube: &HyperCube,
    labels: &LabelMap,
    indices: &[usize],
    size: usize,
) -> Vec<Patch> {
    let width = cube.width();
    indices
        .par_iter()
        .map(|&i| {
            let (row, col) = (i / width, i % width);
            let label = labels.labels()[i];
            debug_assert_ne!(label, UNLABELED);
            let mut values = Vec::with_capacity(size * size * cube.bands());
            fill_patch(cube, row, col, size, &mut values);
            Patch {
                size,
                center_row: row,
                center_col: col,
                values,
                label,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, b: usize) -> HyperCube {
        let values = (0..h * w * b).map(|i| i as f64).collect();
        HyperCube::new(h, w, b, values).unwrap()
    }

    #[test]
    fn mirror_reflects_without_repeat() {
        assert_eq!(mirror_index(-1, 5), 1);
        assert_eq!(mirror_index(-2, 5), 2);
        assert_eq!(mirror_index(5, 5), 3);
        assert_eq!(mirror_index(6, 5), 2);
        assert_eq!(mirror_index(-7, 3), 1);
        assert_eq!(mirror_index(9, 1), 0);
        for i in -20..20 {
            assert!(mirror_index(i, 4) < 4);
        }
    }

    #[test]
    fn size_one_is_pixel_spectrum() {
        let cube = ramp(3, 4, 2);
        let labels = LabelMap::new(3, 4, 1, vec![1; 12]).unwrap();
        let patches = extract_patches(&cube, &labels, 1).unwrap();
        let flat: Vec<f64> = patches.iter().flat_map(|p| p.values.clone()).collect();
        assert_eq!(flat, cube.values());
    }

    #[test]
    fn unlabeled_map_yields_nothing() {
        let cube = ramp(2, 2, 1);
        let labels = LabelMap::new(2, 2, 3, vec![0; 4]).unwrap();
        assert!(extract_patches(&cube, &labels, 3).unwrap().is_empty());
    }

    #[test]
    fn even_size_rejected() {
        let cube = ramp(2, 2, 1);
        let labels = LabelMap::new(2, 2, 1, vec![1; 4]).unwrap();
        assert!(extract_patches(&cube, &labels, 2).is_err());
        assert!(extract_patches(&cube, &labels, 0).is_err());
    }

    #[test]
    fn corner_patch_mirror_by_hand() {
        // 3x3 single-band cube holding its flat index:
        // 0 1 2
        // 3 4 5
        // 6 7 8
        // Around (0,0): rows -1,0,1 -> 1,0,1 and cols -1,0,1 -> 1,0,1.
        let cube = ramp(3, 3, 1);
        let patch = extract_patch_at(&cube, 0, 0, 3).unwrap();
        assert_eq!(patch, vec![4.0, 3.0, 4.0, 1.0, 0.0, 1.0, 4.0, 3.0, 4.0]);
        assert_eq!(patch[4], cube.get(0, 0, 0));
    }

    #[test]
    fn centre_equals_pixel_and_indices_agree() {
        let cube = ramp(4, 5, 3);
        for (r, c) in [(0, 0), (3, 4), (2, 1)] {
            let p = extract_patch_at(&cube, r, c, 5).unwrap();
            let centre = (2 * 5 + 2) * 3;
            assert_eq!(&p[centre..centre + 3], cube.spectrum(r, c));
            let via_index: Vec<f64> = patch_pixel_indices(4, 5, r, c, 5)
                .flat_map(|i| cube.pixel(i).to_vec())
                .collect();
            assert_eq!(p, via_index);
        }
    }
}
