//! Datasets, loaders and normal/anomaly protocol splits.

mod csv;
mod idx;
mod protocol;
mod synth;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, load_csv_with_roles};
pub use idx::{load_idx, write_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use protocol::{build_protocol, DatasetSplit, ProtocolSpec, DEFAULT_TEST_FRACTION};
pub use synth::{synth_mixture, MixtureComponent};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Which partition of an experiment a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TrainNormal,
    TestNormal,
    TestAnomaly,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::TrainNormal => "train_normal",
            Role::TestNormal => "test_normal",
            Role::TestAnomaly => "test_anomaly",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "train_normal" => Some(Role::TrainNormal),
            "test_normal" => Some(Role::TestNormal),
            "test_anomaly" => Some(Role::TestAnomaly),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether class labels are the originals or the result of a grouping map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelOrigin {
    #[default]
    Original,
    Grouped,
}

/// Borrowed view of one row of a [`LabeledDataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub class_label: Option<usize>,
    pub role: Option<Role>,
}

/// Feature rows with optional class labels.
///
/// `source_index` records each row's position in the dataset it was carved
/// from, which is what the partition checks compare.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    source_index: Vec<usize>,
    role: Option<Role>,
    label_origin: LabelOrigin,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::shape("LabeledDataset::new", features.shape(), l.len()));
            }
        }
        let n = features.rows();
        Ok(Self {
            features,
            labels,
            source_index: (0..n).collect(),
            role: None,
            label_origin: LabelOrigin::Original,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn role(&self) -> Option<Role> {
        self.role
    }

    pub fn label_origin(&self) -> LabelOrigin {
        self.label_origin
    }

    /// Distinct labels present, ascending.
    pub fn classes(&self) -> BTreeSet<usize> {
        self.labels.iter().flatten().copied().collect()
    }

    /// Number of distinct labels present (0 when unlabeled).
    pub fn class_count(&self) -> usize {
        self.classes().len()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            features: self.features.row(i),
            class_label: self.labels.as_ref().map(|l| l[i]),
            role: self.role,
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// Rows `indices` as a new dataset tagged with `role`.
    pub fn subset(&self, indices: &[usize], role: Option<Role>) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            source_index: indices.iter().map(|&i| self.source_index[i]).collect(),
            role,
            label_origin: self.label_origin,
        }
    }

    /// Keeps at most `per_class` rows of each label, in their current order.
    pub fn take_per_class(&self, per_class: usize) -> Result<LabeledDataset> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("take_per_class needs labels".into()))?;
        let mut seen = std::collections::BTreeMap::<usize, usize>::new();
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = seen.entry(labels[i]).or_default();
                *c += 1;
                *c <= per_class
            })
            .collect();
        Ok(self.subset(&keep, self.role))
    }

    pub(crate) fn with_labels(mut self, labels: Vec<usize>, origin: LabelOrigin) -> Self {
        debug_assert_eq!(labels.len(), self.len());
        self.labels = Some(labels);
        self.label_origin = origin;
        self
    }
}
