use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{LabelMap, UNLABELED};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Per-class training counts. Classes absent from `per_class_train` take
/// `default_train` (zero when unset); everything not drawn for training is test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default)]
    pub per_class_train: BTreeMap<u16, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_train: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn uniform(count: usize, seed: u64) -> Self {
        Self {
            per_class_train: BTreeMap::new(),
            default_train: Some(count),
            seed,
        }
    }

    pub fn count_for(&self, class: u16) -> usize {
        self.per_class_train
            .get(&class)
            .copied()
            .or(self.default_train)
            .unwrap_or(0)
    }
}

/// Sorted flat pixel indices of the train and test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn indices_by_class(labels: &LabelMap, subset: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); usize::from(labels.num_classes())];
    for i in subset {
        let l = labels.labels()[i];
        if l != UNLABELED {
            by_class[usize::from(l) - 1].push(i);
        }
    }
    by_class
}

pub fn split(labels: &LabelMap, spec: &SplitSpec) -> Result<Split> {
    if let Some(&bad) = spec
        .per_class_train
        .keys()
        .find(|&&c| c == UNLABELED || c > labels.num_classes())
    {
        return Err(Error::Config(format!(
            "split names class {bad}, labels cover 1..={}",
            labels.num_classes()
        )));
    }
    let by_class = indices_by_class(labels, 0..labels.labels().len());
    let mut rng = rng_from_seed(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ci, members) in by_class.iter().enumerate() {
        let class = (ci + 1) as u16;
        let want = spec.count_for(class);
        if want > members.len() {
            return Err(Error::Config(format!(
                "class {class}: {want} training samples requested, only {} available",
                members.len()
            )));
        }
        let mut chosen = vec![false; members.len()];
        for k in sample(&mut rng, members.len(), want) {
            chosen[k] = true;
        }
        for (&idx, picked) in members.iter().zip(chosen) {
            if picked {
                train.push(idx);
            } else {
                test.push(idx);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Caps every class in `train` at `quota` samples, drawn uniformly under `seed`.
pub fn undersample(
    train: &[usize],
    labels: &LabelMap,
    quota: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if quota == 0 {
        return Err(Error::Config("undersampling quota must be >= 1".into()));
    }
    if let Some(&bad) = train.iter().find(|&&i| i >= labels.labels().len()) {
        return Err(Error::Data(format!("train index {bad} outside label map")));
    }
    let mut sorted = train.to_vec();
    sorted.sort_unstable();
    let by_class = indices_by_class(labels, sorted.into_iter());
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(train.len());
    for members in by_class {
        if members.len() <= quota {
            out.extend(members);
        } else {
            out.extend(
                sample(&mut rng, members.len(), quota)
                    .into_iter()
                    .map(|k| members[k]),
            );
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Row populations and training counts of the Indian Pines class table.
    const INDIAN_PINES: [(&str, usize, usize, usize); 16] = [
        ("Corn-notill", 144, 1290, 1434),
        ("Corn-mintill", 84, 750, 834),
        ("Corn", 24, 210, 234),
        ("Grass pasture", 50, 447, 497),
        ("Grass-trees", 75, 672, 747),
        ("Hay windrowed", 49, 440, 489),
        ("Soybean-notill", 97, 871, 968),
        ("Soybean-mintill", 247, 2221, 2468),
        ("Soybean-clean", 62, 552, 614),
        ("Wheat", 22, 190, 212),
        ("Woods", 130, 1164, 1294),
        ("Bldg-Grass-Trees-Drives", 38, 342, 380),
        ("Stone-Steel-Towers", 50, 45, 95),
        ("Alfalfa", 6, 45, 51),
        ("Grass-pasture-mowed", 13, 13, 26),
        ("Oats", 10, 10, 20),
    ];

    fn indian_pines_like() -> (LabelMap, SplitSpec) {
        let mut labels = Vec::new();
        let mut spec = SplitSpec::default_with_seed(11);
        for (i, &(_, train, _, total)) in INDIAN_PINES.iter().enumerate() {
            labels.extend(std::iter::repeat_n((i + 1) as u16, total));
            spec.per_class_train.insert((i + 1) as u16, train);
        }
        // pad with unlabeled pixels to a 145-wide raster
        let side = 145;
        let rows = labels.len().div_ceil(side);
        labels.resize(rows * side, 0);
        (LabelMap::new(rows, side, 16, labels).unwrap(), spec)
    }

    impl SplitSpec {
        fn default_with_seed(seed: u64) -> Self {
            Self {
                per_class_train: BTreeMap::new(),
                default_train: None,
                seed,
            }
        }
    }

    #[test]
    fn indian_pines_rows() {
        let (labels, spec) = indian_pines_like();
        let s = split(&labels, &spec).unwrap();
        for (i, &(name, train, test, _)) in INDIAN_PINES.iter().enumerate() {
            let class = (i + 1) as u16;
            let n_train = s
                .train
                .iter()
                .filter(|&&p| labels.labels()[p] == class)
                .count();
            let n_test = s
                .test
                .iter()
                .filter(|&&p| labels.labels()[p] == class)
                .count();
            assert_eq!((n_train, n_test), (train, test), "{name}");
        }
        // Totals follow from the rows above.
        assert_eq!(s.train.len(), 1101);
        assert_eq!(s.test.len(), 9262);
        assert_eq!(s.train.len() + s.test.len(), labels.labeled_indices().len());
    }

    #[test]
    fn partition_is_exact_and_deterministic() {
        let (labels, spec) = indian_pines_like();
        let a = split(&labels, &spec).unwrap();
        let b = split(&labels, &spec).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, labels.labeled_indices());
        let other = split(&labels, &SplitSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn full_population_leaves_empty_test() {
        let labels = LabelMap::new(1, 4, 2, vec![1, 1, 2, 0]).unwrap();
        let s = split(&labels, &SplitSpec::uniform(2, 0)).unwrap_err();
        assert!(matches!(s, Error::Config(_)));
        let mut spec = SplitSpec::uniform(1, 0);
        spec.per_class_train.insert(1, 2);
        let s = split(&labels, &spec).unwrap();
        assert_eq!(s.train, vec![0, 1, 2]);
        assert!(s.test.is_empty());
    }

    #[test]
    fn undersample_caps() {
        let mut labels = vec![1u16; 144];
        labels.extend([2u16; 6]);
        let map = LabelMap::new(1, 150, 2, labels).unwrap();
        let train: Vec<usize> = (0..150).collect();
        let out = undersample(&train, &map, 10, 5).unwrap();
        let counts = map.restricted_to(&out).class_counts();
        assert_eq!(counts, vec![10, 6]);
        assert_eq!(out, undersample(&train, &map, 10, 5).unwrap());
        assert_eq!(undersample(&train, &map, 144, 5).unwrap(), train);
        assert!(undersample(&train, &map, 0, 5).is_err());
    }
}
