//! Cluster-quality scores: silhouette coefficient and entropy against a
//! reference grouping.
//!
//! For predicted clusters `B_j` and reference groups `A_i` (S of them), the
//! confusion probability is `P(i, j) = n(B_j ∩ A_i) / n(B_j)`. Each cluster's
//! entropy is `H_j = -Σ_i P(i, j) log_S P(i, j)`, which lies in [0, 1] thanks
//! to the base-S logarithm, and the overall score is the size-weighted mean
//! `H = Σ_j H_j n(B_j) / N`. Lower is better: 0 means every cluster sits
//! inside one reference group.
//!
//! Items missing from the reference grouping are left out of every count and
//! reported through [`ConfusionProbabilities::coverage`].

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::clustering::{check_matrix, squared_distance, Assignment};
use crate::dataset::{DatasetTable, ReferenceGrouping};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouette {
    pub overall: f64,
    pub per_item: Vec<f64>,
}

/// Mean silhouette over all items, Euclidean distance. Items alone in their
/// cluster score 0.
pub fn silhouette(features: &[Vec<f64>], labels: &[usize]) -> Result<Silhouette> {
    if labels.is_empty() {
        return Err(Error::Empty("assignment"));
    }
    check_matrix(features)?;
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let slots = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; slots];
    labels.iter().for_each(|&j| sizes[j] += 1);
    let present = sizes.iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::SingleCluster(present));
    }

    let n = features.len();
    let mut per_item = Vec::with_capacity(n);
    let mut sums = vec![0.0; slots];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += squared_distance(&features[i], &features[j]).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            per_item.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..slots)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        per_item.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    let overall = per_item.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { overall, per_item })
}

/// Cluster-by-group overlap of an assignment with a reference grouping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionProbabilities {
    /// Reference group names, one per row.
    pub groups: Vec<String>,
    /// `counts[i][j] = n(B_j ∩ A_i)`.
    pub counts: Vec<Vec<usize>>,
    /// `probabilities[i][j] = n(B_j ∩ A_i) / n(B_j)`; zero column when
    /// `n(B_j) = 0`.
    pub probabilities: Vec<Vec<f64>>,
    /// `n(B_j)`, counting only items present in the reference.
    pub cluster_sizes: Vec<usize>,
    /// `N`, the number of assigned items present in the reference.
    pub total: usize,
    /// `N` over the number of assigned items.
    pub coverage: f64,
}

impl ConfusionProbabilities {
    /// Number of reference groups, `S`.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.probabilities.iter().map(|row| row[j]).collect()
    }

    /// `H_j` for every cluster.
    pub fn cluster_entropies(&self) -> Result<Vec<f64>> {
        (0..self.cluster_count())
            .map(|j| cluster_entropy(&self.column(j), self.group_count()))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["group".to_string()];
        header.extend((0..self.cluster_count()).map(|j| format!("cluster_{j}")));
        wtr.write_record(&header)?;
        for (name, row) in self.groups.iter().zip(&self.probabilities) {
            let mut line = vec![name.clone()];
            line.extend(row.iter().map(|p| crate::dataset::format_real(*p)));
            wtr.write_record(&line)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn confusion(
    assignment: &Assignment,
    reference: &ReferenceGrouping,
) -> Result<ConfusionProbabilities> {
    let k = assignment.cluster_count();
    let s = reference.len();
    let mut counts = vec![vec![0usize; k]; s];
    let mut sizes = vec![0usize; k];
    for (id, j) in assignment.iter() {
        if let Some(i) = reference.group_index(id) {
            counts[i][j] += 1;
            sizes[j] += 1;
        }
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::NoOverlap);
    }
    let probabilities = counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&sizes)
                .map(|(&c, &n)| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionProbabilities {
        groups: reference.names().into_iter().map(str::to_string).collect(),
        counts,
        probabilities,
        cluster_sizes: sizes,
        total,
        coverage: total as f64 / assignment.len() as f64,
    })
}

/// `-Σ p log_S p` with `0 log 0 = 0`.
pub fn cluster_entropy(column: &[f64], groups: usize) -> Result<f64> {
    if groups < 2 {
        return Err(Error::InvalidParameter(format!(
            "entropy base S must be at least 2, got {groups}"
        )));
    }
    if column.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(
            "probabilities must lie in [0, 1]".into(),
        ));
    }
    let nats: f64 = column
        .iter()
        .filter(|&&p| p > 0.0)
        .fold(0.0, |acc, &p| acc - p * p.ln());
    Ok((nats / (groups as f64).ln()).clamp(0.0, 1.0))
}

/// `H = Σ_j H_j n(B_j) / N`.
pub fn weighted_entropy(confusion: &ConfusionProbabilities) -> Result<f64> {
    if confusion.total == 0 {
        return Err(Error::NoOverlap);
    }
    let n = confusion.total as f64;
    Ok(confusion
        .cluster_entropies()?
        .iter()
        .zip(&confusion.cluster_sizes)
        .map(|(h, &size)| h * size as f64 / n)
        .sum())
}

/// Multi-hot labels as real-valued features (clustering the annotations
/// directly, as a reference point for learned features).
pub fn labels_as_features(table: &DatasetTable) -> Result<Vec<Vec<f64>>> {
    table
        .records()
        .iter()
        .map(|r| {
            r.labels
                .as_ref()
                .map(|l| l.iter().map(|&v| v as f64).collect())
                .ok_or_else(|| Error::Unlabeled(r.id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// `None` when fewer than two clusters are populated.
    pub silhouette: Option<f64>,
    pub per_cluster_entropy: Vec<f64>,
    pub weighted_entropy: f64,
    pub confusion: ConfusionProbabilities,
    pub coverage: f64,
}

/// Scores `assignment` on the features in `table` and against `reference`.
pub fn evaluate(
    table: &DatasetTable,
    assignment: &Assignment,
    reference: &ReferenceGrouping,
) -> Result<EvaluationReport> {
    let index: HashMap<&str, usize> = table
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let features = assignment
        .ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| table.records()[i].features.clone())
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let silhouette = match silhouette(&features, &assignment.clusters) {
        Ok(s) => Some(s.overall),
        Err(Error::SingleCluster(_)) => None,
        Err(e) => return Err(e),
    };
    let confusion = confusion(assignment, reference)?;
    let per_cluster_entropy = confusion.cluster_entropies()?;
    let weighted_entropy = weighted_entropy(&confusion)?;
    Ok(EvaluationReport {
        silhouette,
        per_cluster_entropy,
        weighted_entropy,
        coverage: confusion.coverage,
        confusion,
    })
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.silhouette {
            Some(s) => writeln!(f, "silhouette        {s:.4}")?,
            None => writeln!(f, "silhouette        n/a (single cluster)")?,
        }
        writeln!(f, "weighted entropy  {:.4}", self.weighted_entropy)?;
        writeln!(
            f,
            "coverage          {:.4} (N = {})",
            self.coverage, self.confusion.total
        )?;
        writeln!(f)?;
        write!(f, "{:<8} {:>6} {:>8}", "cluster", "size", "H_j")?;
        for g in &self.confusion.groups {
            write!(f, " {g:>10}")?;
        }
        writeln!(f)?;
        for (j, (h, size)) in self
            .per_cluster_entropy
            .iter()
            .zip(&self.confusion.cluster_sizes)
            .enumerate()
        {
            write!(f, "{j:<8} {size:>6} {h:>8.4}")?;
            for row in &self.confusion.probabilities {
                write!(f, " {:>10.4}", row[j])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
