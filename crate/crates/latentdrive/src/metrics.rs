//! Distances between planar trajectories (ADE, discrete Fréchet) and
//! distribution-level precision/recall over trajectory sets with k-NN
//! adaptive thresholds.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::trajectory::{PlanarPath, Point2};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right} points")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty path")]
    EmptyPath,
    #[error("set of size {size} too small for k={k}: need at least k+1 members")]
    SetTooSmall { size: usize, k: usize },
    #[error("k must be at least 1")]
    InvalidK,
}

/// Which trajectory distance backs a set-level computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMetric {
    Ade,
    Frechet,
}

impl std::fmt::Display for TrajectoryMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrajectoryMetric::Ade => write!(f, "ade"),
            TrajectoryMetric::Frechet => write!(f, "frechet"),
        }
    }
}

/// A labeled collection of planar paths ("real", "generated", or free-form).
#[derive(Debug, Clone)]
pub struct TrajectorySet<T> {
    pub label: String,
    pub paths: Vec<PlanarPath<T>>,
}

impl<T: Scalar> TrajectorySet<T> {
    pub fn new(label: impl Into<String>, paths: Vec<PlanarPath<T>>) -> Self {
        Self {
            label: label.into(),
            paths,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// True when every member path has the same point count (required for
    /// ADE-backed set computations).
    pub fn has_uniform_lengths(&self) -> bool {
        match self.paths.first() {
            Some(first) => self.paths.iter().all(|p| p.len() == first.len()),
            None => true,
        }
    }
}

/// Dense rows × cols matrix of pairwise distances (meters).
#[derive(Debug, Clone)]
pub struct DistanceMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    /// Distances from `row` to every column.
    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }
}

/// Per-element k-th nearest neighbor distances within one set.
#[derive(Debug, Clone)]
pub struct KnnThresholds<T> {
    pub k: usize,
    pub thresholds: Vec<T>,
}

/// Distribution-level fidelity and coverage of a generated set against a
/// real one.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub k: usize,
    pub metric: TrajectoryMetric,
}

fn euclidean<T: Scalar>(a: &Point2<T>, b: &Point2<T>) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Average displacement error between point slices of equal length.
pub fn ade_points<T: Scalar>(a: &[Point2<T>], b: &[Point2<T>]) -> Result<T, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let sum = a
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (p, q)| acc + euclidean(p, q));
    Ok(sum / T::from_usize(a.len()).unwrap())
}

/// Mean Euclidean distance between time-aligned points.
pub fn ade<T: Scalar>(a: &PlanarPath<T>, b: &PlanarPath<T>) -> Result<T, MetricsError> {
    ade_points(a.points(), b.points())
}

/// Discrete Fréchet distance over point slices via the O(m·n) dynamic
/// program; lengths may differ.
pub fn frechet_points<T: Scalar>(a: &[Point2<T>], b: &[Point2<T>]) -> Result<T, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let n = b.len();
    // dp[j] holds the previous row; sweep row by row.
    let mut prev = vec![T::zero(); n];
    let mut curr = vec![T::zero(); n];
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            let d = euclidean(pa, pb);
            let reach = match (i, j) {
                (0, 0) => d,
                (0, _) => curr[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                (_, _) => prev[j].min(prev[j - 1]).min(curr[j - 1]).max(d),
            };
            curr[j] = reach;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[n - 1])
}

/// Minimax distance over monotone couplings of two paths.
pub fn discrete_frechet<T: Scalar>(
    a: &PlanarPath<T>,
    b: &PlanarPath<T>,
) -> Result<T, MetricsError> {
    frechet_points(a.points(), b.points())
}

fn metric_distance<T: Scalar>(
    metric: TrajectoryMetric,
    a: &PlanarPath<T>,
    b: &PlanarPath<T>,
) -> Result<T, MetricsError> {
    match metric {
        TrajectoryMetric::Ade => ade(a, b),
        TrajectoryMetric::Frechet => discrete_frechet(a, b),
    }
}

/// All pairwise distances from `src` members (rows) to `dst` members (cols).
///
/// When `src` and `dst` are the same set object the matrix is built from the
/// upper triangle and mirrored, so it is exactly symmetric with a zero
/// diagonal.
pub fn pairwise_distances<T: Scalar>(
    src: &TrajectorySet<T>,
    dst: &TrajectorySet<T>,
    metric: TrajectoryMetric,
) -> Result<DistanceMatrix<T>, MetricsError> {
    if metric == TrajectoryMetric::Ade {
        let lens: Vec<usize> = src
            .paths
            .iter()
            .chain(dst.paths.iter())
            .map(|p| p.len())
            .collect();
        if let Some(&first) = lens.first() {
            if let Some(&bad) = lens.iter().find(|&&l| l != first) {
                return Err(MetricsError::LengthMismatch {
                    left: first,
                    right: bad,
                });
            }
        }
    }
    let rows = src.len();
    let cols = dst.len();
    let mut values = vec![T::zero(); rows * cols];
    if self_set_identical(src, dst) {
        for i in 0..rows {
            for j in (i + 1)..cols {
                let d = metric_distance(metric, &src.paths[i], &dst.paths[j])?;
                values[i * cols + j] = d;
                values[j * cols + i] = d;
            }
        }
    } else {
        for i in 0..rows {
            for j in 0..cols {
                values[i * cols + j] = metric_distance(metric, &src.paths[i], &dst.paths[j])?;
            }
        }
    }
    Ok(DistanceMatrix { rows, cols, values })
}

fn self_set_identical<T: Scalar>(src: &TrajectorySet<T>, dst: &TrajectorySet<T>) -> bool {
    std::ptr::eq(src, dst)
        || (src.len() == dst.len()
            && src
                .paths
                .iter()
                .zip(dst.paths.iter())
                .all(|(a, b)| a.points() == b.points()))
}

/// Per-element threshold: the k-th smallest distance from each member to the
/// rest of its own set (self excluded).
pub fn knn_thresholds<T: Scalar>(
    set: &TrajectorySet<T>,
    k: usize,
    metric: TrajectoryMetric,
) -> Result<KnnThresholds<T>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    if set.len() < k + 1 {
        return Err(MetricsError::SetTooSmall { size: set.len(), k });
    }
    let matrix = pairwise_distances(set, set, metric)?;
    let thresholds = (0..set.len())
        .map(|i| {
            let mut others: Vec<T> = matrix
                .row(i)
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &d)| d)
                .collect();
            others.sort_by(|a, b| a.partial_cmp(b).unwrap());
            others[k - 1]
        })
        .collect();
    Ok(KnnThresholds { k, thresholds })
}

/// k-NN adaptive-threshold precision and recall between a real and a
/// generated trajectory set.
///
/// A generated member counts toward precision when it falls strictly inside
/// some real member's k-NN ball, and symmetrically for recall.
pub fn precision_recall<T: Scalar>(
    real: &TrajectorySet<T>,
    gen: &TrajectorySet<T>,
    k: usize,
    metric: TrajectoryMetric,
) -> Result<PrecisionRecall, MetricsError> {
    let real_thresholds = knn_thresholds(real, k, metric)?;
    let gen_thresholds = knn_thresholds(gen, k, metric)?;
    // cross[i][j] = d(real_i, gen_j)
    let cross = pairwise_distances(real, gen, metric)?;

    let n = real.len();
    let m = gen.len();
    let mut precision_hits = 0usize;
    for j in 0..m {
        let covered = (0..n).any(|i| cross.get(i, j) < real_thresholds.thresholds[i]);
        if covered {
            precision_hits += 1;
        }
    }
    let mut recall_hits = 0usize;
    for i in 0..n {
        let covered = (0..m).any(|j| cross.get(i, j) < gen_thresholds.thresholds[j]);
        if covered {
            recall_hits += 1;
        }
    }
    Ok(PrecisionRecall {
        precision: precision_hits as f64 / m as f64,
        recall: recall_hits as f64 / n as f64,
        k,
        metric,
    })
}
