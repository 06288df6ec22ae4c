//! k-means over label-strength vectors and nearest-centroid assignment.
//!
//! Fitting seeds the centroids with k-means++ and runs Lloyd iterations until
//! the largest centroid displacement drops below `tol` or `max_iter`
//! iterations have run. All reductions are sequential in row order, so a fit
//! is bit-reproducible for a given `(features, k, seed, max_iter, tol)`.
//!
//! When an iteration leaves a cluster empty, that centroid is reseeded at the
//! point farthest from its own centroid and the point is moved into it. The
//! move removes that point's contribution to the inertia, so the recorded
//! inertia sequence stays non-increasing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

/// Per-column z-score transform applied before fitting and assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation per column; constant columns
    /// get scale 1.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let dim = check_matrix(features)?;
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in features {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

/// K centroids plus fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Present when the model was fitted on standardized features; applied
    /// to inputs of [`assign`] and [`inertia_of`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Standardization>,
}

impl ClusterModel {
    pub fn dimension(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_reader(BufReader::new(file))?;
        if model.k == 0 || model.centroids.len() != model.k {
            return Err(Error::InvalidParameter(format!(
                "model declares k = {} but holds {} centroids",
                model.k,
                model.centroids.len()
            )));
        }
        check_matrix(&model.centroids)?;
        Ok(model)
    }

    fn prepare<'a>(&self, features: &'a [Vec<f64>]) -> Result<std::borrow::Cow<'a, [Vec<f64>]>> {
        let expected = self.dimension();
        for (row, values) in features.iter().enumerate() {
            if values.len() != expected {
                return Err(Error::RowDimension {
                    row,
                    expected,
                    found: values.len(),
                });
            }
        }
        Ok(match &self.normalization {
            Some(norm) => std::borrow::Cow::Owned(norm.apply(features)),
            None => std::borrow::Cow::Borrowed(features),
        })
    }
}

/// Result of [`kmeans_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: ClusterModel,
    /// Cluster index per input row.
    pub labels: Vec<usize>,
    /// Inertia after seeding and after every iteration.
    pub inertia_history: Vec<f64>,
    /// Number of empty-cluster reseeding events.
    pub repairs: usize,
}

/// Item ids paired with their cluster index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub ids: Vec<String>,
    pub clusters: Vec<usize>,
}

impl Assignment {
    pub fn new(ids: Vec<String>, clusters: Vec<usize>) -> Result<Self> {
        if ids.len() != clusters.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ids but {} cluster indices",
                ids.len(),
                clusters.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self { ids, clusters })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.ids.iter().map(String::as_str).zip(self.clusters.iter().copied())
    }

    /// `max(cluster) + 1`, or 0 when empty.
    pub fn cluster_count(&self) -> usize {
        self.clusters.iter().max().map_or(0, |m| m + 1)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["id", "cluster"])?;
        for (id, c) in self.iter() {
            wtr.write_record([id, &c.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn read_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?;
        if headers.iter().collect::<Vec<_>>() != ["id", "cluster"] {
            return Err(Error::Parse {
                line: 1,
                message: "assignment header must be `id,cluster`".into(),
            });
        }
        let mut ids = Vec::new();
        let mut clusters = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let cell = row.get(1).unwrap_or_default();
            let cluster = cell.trim().parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("bad cluster index `{cell}`"),
            })?;
            ids.push(row.get(0).unwrap_or_default().to_string());
            clusters.push(cluster);
        }
        Self::new(ids, clusters)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file))
    }
}

/// Checks a non-empty matrix of equal-length finite rows; returns its width.
pub(crate) fn check_matrix(features: &[Vec<f64>]) -> Result<usize> {
    let first = features.first().ok_or(Error::Empty("feature matrix"))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::RowDimension {
            row: 0,
            expected: 1,
            found: 0,
        });
    }
    for (row, values) in features.iter().enumerate() {
        if values.len() != dim {
            return Err(Error::RowDimension {
                row,
                expected: dim,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRow(row));
        }
    }
    Ok(dim)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_points(features: &[Vec<f64>]) -> usize {
    // +0.0 folds -0.0 onto 0.0
    let mut keys: Vec<Vec<u64>> = features
        .iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn total_inertia(features: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    features
        .iter()
        .zip(labels)
        .map(|(x, &j)| squared_distance(x, &centroids[j]))
        .sum()
}

fn kmeans_plus_plus(features: &[Vec<f64>], k: usize, stream: &mut Stream) -> Vec<Vec<f64>> {
    let mut centroids = vec![features[stream.index(features.len())].clone()];
    let mut d2: Vec<f64> = features
        .iter()
        .map(|x| squared_distance(x, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = stream.uniform() * total;
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            cumulative += w;
            chosen = Some(i);
            if cumulative > target {
                break;
            }
        }
        let chosen = chosen.expect("a point with positive distance exists");
        let centre = features[chosen].clone();
        for (w, x) in d2.iter_mut().zip(features) {
            *w = w.min(squared_distance(x, &centre));
        }
        centroids.push(centre);
    }
    centroids
}

fn cluster_means(features: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (x, &j) in features.iter().zip(labels) {
        counts[j] += 1;
        for (s, v) in sums[j].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        debug_assert!(n > 0, "empty cluster reached the mean step");
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sums
}

/// Reseeds every empty cluster at the point farthest from its own centroid.
/// Returns the number of reseeded clusters.
fn repair_empty(features: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize]) -> usize {
    let k = centroids.len();
    let mut repaired = 0;
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&j| counts[j] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        let mut far = 0;
        let mut far_d = -1.0;
        for (i, x) in features.iter().enumerate() {
            let d = squared_distance(x, &centroids[labels[i]]);
            if d > far_d {
                far = i;
                far_d = d;
            }
        }
        centroids[empty] = features[far].clone();
        labels[far] = empty;
        repaired += 1;
    }
}

/// Fits k-means with k-means++ seeding and Lloyd iterations.
pub fn kmeans_fit(features: &[Vec<f64>], params: KMeansParams) -> Result<KMeansFit> {
    let KMeansParams {
        k,
        seed,
        max_iter,
        tol,
    } = params;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidParameter("tol must be non-negative".into()));
    }
    let dim = check_matrix(features)?;
    let distinct = distinct_points(features);
    if distinct < k {
        return Err(Error::TooFewDistinctPoints { k, distinct });
    }

    let mut stream = Stream::new(seed);
    let mut centroids = kmeans_plus_plus(features, k, &mut stream);
    let mut labels: Vec<usize> = features.iter().map(|x| nearest(x, &centroids)).collect();
    let mut history = vec![total_inertia(features, &centroids, &labels)];
    let mut iterations = 0;
    let mut converged = false;
    let mut repairs = 0;
    let mut last_repaired = false;

    while iterations < max_iter {
        iterations += 1;
        let updated = cluster_means(features, &labels, k, dim);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        for (l, x) in labels.iter_mut().zip(features) {
            *l = nearest(x, &centroids);
        }
        let repaired = repair_empty(features, &mut centroids, &mut labels);
        repairs += repaired;
        last_repaired = repaired > 0;
        history.push(total_inertia(features, &centroids, &labels));
        if !last_repaired && shift < tol {
            converged = true;
            break;
        }
    }
    if last_repaired {
        // iteration budget ran out right after a reseed: restore the
        // nearest-centroid labelling, which can only lower the inertia
        for (l, x) in labels.iter_mut().zip(features) {
            *l = nearest(x, &centroids);
        }
        history.push(total_inertia(features, &centroids, &labels));
    }

    let inertia = *history.last().expect("history is never empty");
    Ok(KMeansFit {
        model: ClusterModel {
            k,
            seed,
            centroids,
            inertia,
            iterations_run: iterations,
            converged,
            normalization: None,
        },
        labels,
        inertia_history: history,
        repairs,
    })
}

/// Nearest-centroid cluster for each row; ties go to the lower index.
pub fn assign(model: &ClusterModel, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    let rows = model.prepare(features)?;
    Ok(rows.iter().map(|x| nearest(x, &model.centroids)).collect())
}

/// Sum of squared distances from each row to its assigned centroid.
pub fn inertia_of(model: &ClusterModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if labels.len() != features.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&j| j >= model.k) {
        return Err(Error::InvalidParameter(format!(
            "cluster index {bad} out of range for k = {}",
            model.k
        )));
    }
    let rows = model.prepare(features)?;
    Ok(total_inertia(&rows, &model.centroids, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ]
    }

    fn model(centroids: Vec<Vec<f64>>) -> ClusterModel {
        ClusterModel {
            k: centroids.len(),
            seed: 0,
            centroids,
            inertia: 0.0,
            iterations_run: 0,
            converged: true,
            normalization: None,
        }
    }

    #[test]
    fn separable_square() {
        let fit = kmeans_fit(&square(), KMeansParams::new(2, 0)).unwrap();
        let mut c = fit.model.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, [vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert_eq!(fit.model.inertia, 1.0);
        assert!(fit.model.converged);
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
    }

    #[test]
    fn k_equals_distinct_points() {
        let pts = vec![vec![0.0], vec![3.0], vec![3.0], vec![7.0]];
        let fit = kmeans_fit(&pts, KMeansParams::new(3, 5)).unwrap();
        assert_eq!(fit.model.inertia, 0.0);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![vec![1.0], vec![1.0], vec![-0.0], vec![0.0]];
        assert!(matches!(
            kmeans_fit(&pts, KMeansParams::new(3, 0)),
            Err(Error::TooFewDistinctPoints { k: 3, distinct: 2 })
        ));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans_fit(&[vec![f64::NAN]], KMeansParams::new(1, 0)).is_err());
        assert!(kmeans_fit(&[vec![0.0], vec![0.0, 1.0]], KMeansParams::new(1, 0)).is_err());
        assert!(kmeans_fit(&[], KMeansParams::new(1, 0)).is_err());
        assert!(kmeans_fit(&[vec![0.0]], KMeansParams::new(0, 0)).is_err());
    }

    #[test]
    fn assign_hits_centroid() {
        let m = model(vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 0.0]]);
        assert_eq!(assign(&m, &[vec![5.0, 5.0]]).unwrap(), [1]);
    }

    #[test]
    fn assign_tie_prefers_lower_index() {
        let m = model(vec![vec![0.0, 0.0], vec![50.0, 50.0], vec![2.0, 0.0]]);
        assert_eq!(assign(&m, &[vec![1.0, 0.0]]).unwrap(), [0]);
    }

    #[test]
    fn assign_dimension_mismatch() {
        let m = model(vec![vec![0.0, 0.0]]);
        assert!(matches!(
            assign(&m, &[vec![0.0, 0.0], vec![1.0]]),
            Err(Error::RowDimension { row: 1, .. })
        ));
    }

    #[test]
    fn assign_reproduces_fit_labels() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![((i * 37) % 11) as f64, ((i * 17) % 7) as f64])
            .collect();
        let fit = kmeans_fit(&pts, KMeansParams::new(4, 9)).unwrap();
        assert_eq!(assign(&fit.model, &pts).unwrap(), fit.labels);
    }

    #[test]
    fn inertia_examples() {
        let m = model(vec![vec![0.0, 0.0], vec![10.0, 10.0]]);
        let at = vec![vec![0.0, 0.0], vec![10.0, 10.0]];
        assert_eq!(inertia_of(&m, &at, &[0, 1]).unwrap(), 0.0);
        assert_eq!(inertia_of(&m, &[vec![0.0, 2.0]], &[0]).unwrap(), 4.0);
        assert!(inertia_of(&m, &[vec![0.0]], &[0]).is_err());
        assert!(inertia_of(&m, &[vec![0.0, 0.0]], &[2]).is_err());
    }

    #[test]
    fn repair_fills_every_cluster() {
        // one centroid far from all points would stay empty without repair
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let mut centroids = vec![vec![1.5], vec![100.0]];
        let mut labels = vec![0, 0, 0, 0];
        assert_eq!(repair_empty(&pts, &mut centroids, &mut labels), 1);
        assert_eq!(labels, [1, 0, 0, 0]);
        assert_eq!(centroids[1], [0.0]);
    }

    #[test]
    fn standardization_round_trip() {
        let pts = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardization::fit(&pts).unwrap();
        assert_eq!(s.apply(&pts), [vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn model_json_shape() {
        let fit = kmeans_fit(&square(), KMeansParams::new(2, 0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fit.model.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for key in ["k", "seed", "centroids", "inertia", "iterations_run", "converged"] {
            assert!(keys.contains(&key), "{key}");
        }
        assert!(!keys.contains(&"normalization"));
    }

    #[test]
    fn assignment_csv_round_trip() {
        let a = Assignment::new(vec!["x".into(), "y,z".into()], vec![1, 0]).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(Assignment::read_csv(buf.as_slice()).unwrap(), a);
    }
}
