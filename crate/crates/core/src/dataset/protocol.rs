use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{LabelOrigin, LabeledDataset, Role};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

/// Which classes are normal, which are anomalous, and how to hold out test data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub normal_classes: BTreeSet<usize>,
    pub anomaly_classes: BTreeSet<usize>,
    /// Optional relabelling of normal classes into coarser groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping_map: Option<BTreeMap<usize, usize>>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn new(normal: impl IntoIterator<Item = usize>, anomaly: impl IntoIterator<Item = usize>) -> Self {
        Self {
            normal_classes: normal.into_iter().collect(),
            anomaly_classes: anomaly.into_iter().collect(),
            grouping_map: None,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
        }
    }

    /// One normal class against every other class in `0..class_count`.
    pub fn one_vs_rest(normal: usize, class_count: usize) -> Self {
        Self::new([normal], (0..class_count).filter(|&c| c != normal))
    }

    /// Every class in `0..class_count` is normal except the held-out `anomaly`.
    pub fn hold_out(anomaly: usize, class_count: usize) -> Self {
        Self::new((0..class_count).filter(|&c| c != anomaly), [anomaly])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grouping(mut self, map: BTreeMap<usize, usize>) -> Self {
        self.grouping_map = Some(map);
        self
    }
}

/// Train/test partitions of one dataset under a protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train_normal: LabeledDataset,
    pub test_normal: LabeledDataset,
    pub test_anomaly: LabeledDataset,
}

impl DatasetSplit {
    /// Test features with normal rows first, and the role of every row.
    pub fn test_set(&self) -> (Matrix, Vec<Role>) {
        let (a, b) = (self.test_normal.features(), self.test_anomaly.features());
        let mut data = Vec::with_capacity(a.as_slice().len() + b.as_slice().len());
        data.extend_from_slice(a.as_slice());
        data.extend_from_slice(b.as_slice());
        let roles = std::iter::repeat_n(Role::TestNormal, a.rows())
            .chain(std::iter::repeat_n(Role::TestAnomaly, b.rows()))
            .collect();
        (Matrix::from_vec_unchecked(a.rows() + b.rows(), a.cols(), data), roles)
    }
}

/// Splits `data` into train-normal, test-normal and test-anomaly partitions.
///
/// Normal rows are shuffled with sub-stream `("protocol", 0)` of `spec.seed`;
/// the first `round(n · test_fraction)` become test-normal. Anomaly rows all
/// go to test-anomaly and keep their original labels. A grouping map, when
/// present, relabels the normal partitions.
pub fn build_protocol(data: &LabeledDataset, spec: &ProtocolSpec) -> Result<DatasetSplit> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Protocol("dataset has no class labels".into()))?;
    if spec.normal_classes.is_empty() || spec.anomaly_classes.is_empty() {
        return Err(Error::Protocol("normal and anomaly class sets must be nonempty".into()));
    }
    if let Some(c) = spec.normal_classes.intersection(&spec.anomaly_classes).next() {
        return Err(Error::Protocol(format!("class {c} is both normal and anomaly")));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Protocol(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let present = data.classes();
    if let Some(c) = spec
        .normal_classes
        .iter()
        .chain(&spec.anomaly_classes)
        .find(|c| !present.contains(c))
    {
        return Err(Error::Protocol(format!("class {c} does not occur in the dataset")));
    }
    if let Some(map) = &spec.grouping_map {
        if let Some(c) = spec.normal_classes.iter().find(|c| !map.contains_key(c)) {
            return Err(Error::Protocol(format!(
                "grouping map has no entry for normal class {c}"
            )));
        }
    }

    let mut normal: Vec<usize> = (0..data.len())
        .filter(|&i| spec.normal_classes.contains(&labels[i]))
        .collect();
    let anomaly: Vec<usize> = (0..data.len())
        .filter(|&i| spec.anomaly_classes.contains(&labels[i]))
        .collect();

    RngStream::new(spec.seed).substream("protocol", 0).shuffle(&mut normal);
    let n_test = (normal.len() as f64 * spec.test_fraction).round() as usize;
    if n_test == 0 || n_test >= normal.len() {
        return Err(Error::Protocol(format!(
            "test_fraction {} leaves an empty partition of {} normal samples",
            spec.test_fraction,
            normal.len()
        )));
    }
    let (test, train) = normal.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();

    let mut train_normal = data.subset(train, Some(Role::TrainNormal));
    let mut test_normal = data.subset(test, Some(Role::TestNormal));
    if let Some(map) = &spec.grouping_map {
        let regroup = |d: LabeledDataset| {
            let grouped = d.labels().unwrap().iter().map(|l| map[l]).collect();
            d.with_labels(grouped, LabelOrigin::Grouped)
        };
        train_normal = regroup(train_normal);
        test_normal = regroup(test_normal);
    }
    Ok(DatasetSplit {
        train_normal,
        test_normal,
        test_anomaly: data.subset(&anomaly, Some(Role::TestAnomaly)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(labels: Vec<usize>) -> LabeledDataset {
        let n = labels.len();
        LabeledDataset::new(
            Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            Some(labels),
        )
        .unwrap()
    }

    #[test]
    fn overlap_is_rejected() {
        let d = toy(vec![0, 1, 0, 1]);
        let err = build_protocol(&d, &ProtocolSpec::new([0], [0])).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        assert!(build_protocol(&d, &ProtocolSpec::new([0], [4])).is_err());
    }

    #[test]
    fn grouping_collapses_classes() {
        let d = toy((0..45).map(|i| i % 5).collect());
        let spec =
            ProtocolSpec::new([0, 1, 2, 3], [4]).with_grouping([(0, 0), (1, 0), (2, 1), (3, 1)].into_iter().collect());
        let split = build_protocol(&d, &spec).unwrap();
        assert_eq!(split.train_normal.class_count(), 2);
        assert_eq!(split.train_normal.label_origin(), LabelOrigin::Grouped);
        assert_eq!(split.test_anomaly.classes(), [4].into_iter().collect());
    }

    #[test]
    fn anomaly_partition_holds_exactly_listed_classes() {
        let d = toy((0..100).map(|i| i % 10).collect());
        let split = build_protocol(&d, &ProtocolSpec::new([1], 5..10)).unwrap();
        assert_eq!(split.test_anomaly.classes(), (5..10).collect());
        assert_eq!(split.train_normal.len() + split.test_normal.len(), 10);
        let (x, roles) = split.test_set();
        assert_eq!(x.rows(), roles.len());
        assert_eq!(roles.iter().filter(|r| **r == Role::TestAnomaly).count(), 50);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_complete(
            labels in prop::collection::vec(0usize..4, 20..120),
            seed in any::<u64>(),
            frac in 0.1f64..0.5,
        ) {
            prop_assume!(labels.iter().filter(|&&l| l < 2).count() >= 10);
            prop_assume!(labels.contains(&3));
            let d = toy(labels.clone());
            let mut spec = ProtocolSpec::new([0, 1], [3]).with_seed(seed);
            spec.test_fraction = frac;
            let split = build_protocol(&d, &spec).unwrap();
            let n_normal = labels.iter().filter(|&&l| l < 2).count();
            prop_assert_eq!(split.train_normal.len() + split.test_normal.len(), n_normal);
            let mut all: Vec<usize> = split.train_normal.source_index().iter()
                .chain(split.test_normal.source_index())
                .chain(split.test_anomaly.source_index())
                .copied().collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            prop_assert_eq!(build_protocol(&d, &spec).unwrap(), split);
        }
    }
}
