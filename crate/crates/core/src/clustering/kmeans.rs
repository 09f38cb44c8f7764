//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use super::{Provenance, PseudoLabeledSet};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const DEFAULT_N_INIT: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 300,
            tol: 1e-8,
            n_init: DEFAULT_N_INIT,
        }
    }
}

/// A fitted clustering of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    /// Nearest centroid and its squared distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, x)
    }

    pub fn predict(&self, data: &Matrix) -> Result<Vec<usize>> {
        if data.cols() != self.centroids.cols() {
            return Err(Error::shape(
                "ClusterModel::predict",
                self.centroids.shape(),
                data.shape(),
            ));
        }
        Ok(data.iter_rows().map(|x| self.nearest(x).0).collect())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// `k`-means with the default number of restarts.
pub fn kmeans_fit(data: &Matrix, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<ClusterModel> {
    kmeans_fit_with(
        data,
        &KMeansConfig {
            k,
            seed,
            max_iters,
            tol,
            n_init: DEFAULT_N_INIT,
        },
    )
}

/// Runs `n_init` restarts (restart `r` uses sub-stream `("kmeans", r)`) and
/// keeps the one with the lowest inertia, earliest on ties.
pub fn kmeans_fit_with(data: &Matrix, config: &KMeansConfig) -> Result<ClusterModel> {
    let n = data.rows();
    if config.k == 0 || config.k > n {
        return Err(Error::param(format!("k = {} with {n} samples", config.k)));
    }
    if config.max_iters == 0 || config.n_init == 0 {
        return Err(Error::param("max_iters and n_init must be at least 1"));
    }
    if config.tol.is_nan() || config.tol < 0.0 {
        return Err(Error::param(format!("tol = {}", config.tol)));
    }
    if !data.is_finite() {
        return Err(Error::Data("non-finite features".into()));
    }

    let root = RngStream::new(config.seed);
    let mut best: Option<ClusterModel> = None;
    for restart in 0..config.n_init {
        let mut rng = root.substream("kmeans", restart as u64);
        let model = lloyd(data, config, plus_plus_init(data, config.k, &mut rng));
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

fn plus_plus_init(data: &Matrix, k: usize, rng: &mut RngStream) -> Matrix {
    let n = data.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total")
        } else {
            // every point coincides with a centroid: take any unused row
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.below(unused.len())]
        };
        chosen.push(next);
        let c = data.row(next);
        for (i, x) in data.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, c));
        }
    }
    data.select_rows(&chosen)
}

/// Nearest-centroid assignment followed by empty-cluster repair. Returns inertia.
fn assign(data: &Matrix, centroids: &mut Matrix, assignment: &mut [usize]) -> f64 {
    let k = centroids.rows();
    let mut dist = vec![0.0; data.rows()];
    let mut sizes = vec![0usize; k];
    for (i, x) in data.iter_rows().enumerate() {
        let (j, d) = nearest(centroids, x);
        assignment[i] = j;
        dist[i] = d;
        sizes[j] += 1;
    }
    // Each empty cluster seizes the point farthest from its centroid among
    // clusters that can spare one.
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far: Option<usize> = None;
        for i in 0..data.rows() {
            if sizes[assignment[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let p = far.expect("k <= n guarantees a cluster with two members");
        sizes[assignment[p]] -= 1;
        sizes[empty] += 1;
        assignment[p] = empty;
        dist[p] = 0.0;
        centroids.row_mut(empty).copy_from_slice(data.row(p));
    }
    dist.iter().sum()
}

fn centroid_means(data: &Matrix, assignment: &[usize], k: usize) -> Matrix {
    let d = data.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (x, &j) in data.iter_rows().zip(assignment) {
        counts[j] += 1;
        for (s, v) in sums.row_mut(j).iter_mut().zip(x) {
            *s += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        for s in sums.row_mut(j) {
            *s /= c as f64;
        }
    }
    sums
}

fn lloyd(data: &Matrix, config: &KMeansConfig, mut centroids: Matrix) -> ClusterModel {
    let k = config.k;
    let mut assignment = vec![0; data.rows()];
    let mut inertia = assign(data, &mut centroids, &mut assignment);
    let mut history = vec![inertia];

    for _ in 0..config.max_iters {
        let mut next = centroid_means(data, &assignment, k);
        let shift = centroids
            .iter_rows()
            .zip(next.iter_rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let mut next_assignment = vec![0; data.rows()];
        let next_inertia = assign(data, &mut next, &mut next_assignment);
        // Rounding can make a converged step marginally worse; keep the better state.
        if next_inertia > inertia {
            break;
        }
        centroids = next;
        assignment = next_assignment;
        inertia = next_inertia;
        history.push(inertia);
        if shift < config.tol {
            break;
        }
    }

    ClusterModel {
        k,
        centroids,
        assignment,
        inertia,
        inertia_history: history,
    }
}

/// Nearest-centroid pseudo-labels. Fails if some cluster receives no sample.
pub fn assign_pseudo_labels(model: &ClusterModel, data: &Matrix) -> Result<PseudoLabeledSet> {
    let labels = model.predict(data)?;
    PseudoLabeledSet::new(data.clone(), labels, model.k, Provenance::Kmeans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::adjusted_rand_index;
    use crate::dataset::{synth_mixture, MixtureComponent};

    fn blobs(seed: u64) -> (Matrix, Vec<usize>) {
        let d = synth_mixture(
            &[
                MixtureComponent::isotropic(vec![-10.0, 0.0], 0.1, 50, 0),
                MixtureComponent::isotropic(vec![10.0, 0.0], 0.1, 50, 1),
            ],
            seed,
        )
        .unwrap();
        (d.features().clone(), d.labels().unwrap().to_vec())
    }

    #[test]
    fn saturated_k_reproduces_points() {
        let data = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 5.0], vec![-3.0, 2.0], vec![4.0, 4.0]]).unwrap();
        let m = kmeans_fit(&data, 4, 1, 50, 1e-9).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut rows: Vec<Vec<f64>> = m.centroids.iter_rows().map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> = data.iter_rows().map(<[f64]>::to_vec).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, want);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let (data, _) = blobs(3);
        let m = kmeans_fit(&data, 1, 0, 10, 0.0).unwrap();
        for axis in 0..2 {
            let mean = data.iter_rows().map(|r| r[axis]).sum::<f64>() / data.rows() as f64;
            assert!((m.centroids.get(0, axis) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_blobs_recovered_exactly() {
        for seed in 0..5 {
            let (data, truth) = blobs(seed);
            let m = kmeans_fit(&data, 2, seed, 100, 1e-10).unwrap();
            assert_eq!(adjusted_rand_index(&m.assignment, &truth), 1.0);
            assert!(m.inertia_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn parameter_errors() {
        let data = Matrix::zeros(3, 2);
        assert!(matches!(kmeans_fit(&data, 4, 0, 10, 0.0), Err(Error::Parameter(_))));
        assert!(kmeans_fit(&data, 0, 0, 10, 0.0).is_err());
        assert!(kmeans_fit(&data, 2, 0, 0, 0.0).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let data = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let m = kmeans_fit(&data, 3, 9, 20, 0.0).unwrap();
        let mut sizes = [0; 3];
        for &a in &m.assignment {
            sizes[a] += 1;
        }
        assert!(sizes.iter().all(|&s| s > 0), "{sizes:?}");
    }

    #[test]
    fn assignment_consistency_and_tie_rule() {
        let (data, _) = blobs(1);
        let m = kmeans_fit(&data, 2, 4, 100, 1e-10).unwrap();
        assert_eq!(
            assign_pseudo_labels(&m, &data).unwrap().labels(),
            m.assignment.as_slice()
        );

        let model = ClusterModel {
            k: 3,
            centroids: Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0]]).unwrap(),
            assignment: vec![],
            inertia: 0.0,
            inertia_history: vec![],
        };
        assert_eq!(model.nearest(&[0.0, 0.0]).0, 0);
        let q = [0.2, 4.0];
        let brute = (0..3)
            .min_by(|&a, &b| sq_dist(&q, model.centroids.row(a)).total_cmp(&sq_dist(&q, model.centroids.row(b))))
            .unwrap();
        assert_eq!(brute, 2);
        assert_eq!(
            model.predict(&Matrix::from_rows(&[q.to_vec()]).unwrap()).unwrap(),
            vec![2]
        );
        assert!(model.predict(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let (data, _) = blobs(8);
        assert_eq!(
            kmeans_fit(&data, 3, 2, 50, 1e-9).unwrap(),
            kmeans_fit(&data, 3, 2, 50, 1e-9).unwrap()
        );
    }
}
