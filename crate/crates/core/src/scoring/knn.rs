use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMetric {
    Cosine,
    Euclidean,
}

impl KnnMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            KnnMetric::Cosine => "cosine",
            KnnMetric::Euclidean => "euclidean",
        }
    }
}

/// How the K neighbour similarities are reduced to one score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnAggregation {
    #[default]
    Mean,
    /// Similarity to the K-th nearest neighbour only.
    Kth,
}

/// Brute-force reference set with precomputed norms.
#[derive(Clone, Debug)]
pub struct KnnIndex {
    reference: Matrix,
    norms: Vec<f64>,
    metric: KnnMetric,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl KnnIndex {
    pub fn new(reference: Matrix, metric: KnnMetric) -> Result<Self> {
        if reference.rows() == 0 {
            return Err(Error::param("empty kNN reference set"));
        }
        let norms: Vec<f64> = reference.iter_rows().map(|r| dot(r, r).sqrt()).collect();
        if metric == KnnMetric::Cosine {
            if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                return Err(Error::Metric(format!("reference row {i} has zero norm under cosine")));
            }
        }
        Ok(Self {
            reference,
            norms,
            metric,
        })
    }

    pub fn len(&self) -> usize {
        self.reference.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.rows() == 0
    }

    pub fn metric(&self) -> KnnMetric {
        self.metric
    }

    /// Higher is more normal: mean (or K-th) cosine similarity, or the
    /// negated Euclidean distance.
    pub fn score(&self, query: &[f64], k: usize, aggregation: KnnAggregation) -> Result<f64> {
        if query.len() != self.reference.cols() {
            return Err(Error::shape("knn score", self.reference.shape(), query.len()));
        }
        if k == 0 || k > self.len() {
            return Err(Error::param(format!("K = {k} with {} reference rows", self.len())));
        }
        // Orient everything as "smaller is nearer" for the selection.
        let mut keys: Vec<f64> = match self.metric {
            KnnMetric::Cosine => {
                let qn = dot(query, query).sqrt();
                if qn == 0.0 {
                    return Err(Error::Metric("zero-norm query under cosine".into()));
                }
                self.reference
                    .iter_rows()
                    .zip(&self.norms)
                    .map(|(r, rn)| -dot(query, r) / (qn * rn))
                    .collect()
            }
            KnnMetric::Euclidean => self
                .reference
                .iter_rows()
                .map(|r| r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect(),
        };
        if k < keys.len() {
            keys.select_nth_unstable_by(k - 1, f64::total_cmp);
        }
        let nearest = &mut keys[..k];
        nearest.sort_unstable_by(f64::total_cmp);
        let reduced = match aggregation {
            KnnAggregation::Mean => nearest.iter().sum::<f64>() / k as f64,
            KnnAggregation::Kth => nearest[k - 1],
        };
        Ok(-reduced)
    }
}

/// Mean-aggregated kNN score of one query against `reference`.
pub fn score_knn(reference: &Matrix, query: &[f64], k: usize, metric: KnnMetric) -> Result<f64> {
    KnnIndex::new(reference.clone(), metric)?.score(query, k, KnnAggregation::Mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_match() {
        let r = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert!((score_knn(&r, &[1.0, 2.0], 1, KnnMetric::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(score_knn(&r, &[1.0, 2.0], 1, KnnMetric::Euclidean).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_is_zero() {
        let r = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(score_knn(&r, &[1.0, 0.0, 0.0], 1, KnnMetric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn hand_distance() {
        let r = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(score_knn(&r, &[0.0, 0.0], 2, KnnMetric::Euclidean).unwrap(), -2.5);
        let idx = KnnIndex::new(r, KnnMetric::Euclidean).unwrap();
        assert_eq!(idx.score(&[0.0, 0.0], 2, KnnAggregation::Kth).unwrap(), -5.0);
    }

    #[test]
    fn errors() {
        let r = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            score_knn(&r, &[1.0, 0.0], 2, KnnMetric::Cosine),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            score_knn(&r, &[0.0, 0.0], 1, KnnMetric::Cosine),
            Err(Error::Metric(_))
        ));
        let z = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            KnnIndex::new(z.clone(), KnnMetric::Cosine),
            Err(Error::Metric(_))
        ));
        assert!(KnnIndex::new(z, KnnMetric::Euclidean).is_ok());
    }
}
