//! Sub-clusters of the normal training data and the pseudo-labels derived from them.

mod kmeans;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use kmeans::{assign_pseudo_labels, kmeans_fit, kmeans_fit_with, ClusterModel, KMeansConfig, DEFAULT_N_INIT};

use crate::dataset::{LabelOrigin, LabeledDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Where a set of pseudo-labels came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Kmeans,
    Labels,
    GroupingMap,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Kmeans => "kmeans",
            Provenance::Labels => "labels",
            Provenance::GroupingMap => "grouping_map",
        })
    }
}

/// Training rows with a cluster index per row. Every cluster in `0..k` is nonempty.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabeledSet {
    samples: Matrix,
    labels: Vec<usize>,
    k: usize,
    provenance: Provenance,
}

impl PseudoLabeledSet {
    pub fn new(samples: Matrix, labels: Vec<usize>, k: usize, provenance: Provenance) -> Result<Self> {
        if labels.len() != samples.rows() {
            return Err(Error::shape("PseudoLabeledSet::new", samples.shape(), labels.len()));
        }
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            *sizes
                .get_mut(l)
                .ok_or_else(|| Error::Data(format!("pseudo-label {l} outside 0..{k}")))? += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Data(format!("cluster {empty} of {k} has no samples")));
        }
        Ok(Self {
            samples,
            labels,
            k,
            provenance,
        })
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Number of samples per cluster; sums to `len()`.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Uses the class labels themselves as clusters, densified in ascending order.
pub fn labels_as_clusters(data: &LabeledDataset) -> Result<PseudoLabeledSet> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data("labels_as_clusters needs labeled samples".into()))?;
    let dense: BTreeMap<usize, usize> = data.classes().into_iter().enumerate().map(|(i, c)| (c, i)).collect();
    let provenance = match data.label_origin() {
        LabelOrigin::Original => Provenance::Labels,
        LabelOrigin::Grouped => Provenance::GroupingMap,
    };
    PseudoLabeledSet::new(
        data.features().clone(),
        labels.iter().map(|l| dense[l]).collect(),
        dense.len(),
        provenance,
    )
}

/// Adjusted Rand index between two labelings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let expected = sum_a * sum_b / pairs(a.len() as u64).max(1.0);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
