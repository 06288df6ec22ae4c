//! MLSMOTE rebalancing of multi-labelled feature tables.
//!
//! A label is a *minority* label when its imbalance ratio
//! `IRLbl(l) = max_l' count(l') / count(l)` exceeds the mean ratio over all
//! labels with at least one positive instance. For each minority label, every
//! record carrying it seeds one synthetic record: the seed's `k` nearest
//! neighbours are searched among the records carrying that label, one of them
//! is picked as the reference, the features are interpolated between seed and
//! reference, and the labels are voted by the seed and its neighbours.
//!
//! Random draws come from [`Stream`] in a fixed order: per synthetic record,
//! first one index draw for the reference neighbour, then one uniform for the
//! interpolation gap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::dataset::{DatasetTable, FeatureRecord};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Per-label positive counts and imbalance ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceProfile {
    /// Positive-instance count for every label with count > 0.
    pub counts: BTreeMap<String, usize>,
    pub irlbl: BTreeMap<String, f64>,
    pub mean_ir: f64,
    /// Labels with no positive instance; they take no part in the ratios.
    pub excluded: Vec<String>,
}

pub fn imbalance_profile(table: &DatasetTable) -> Result<ImbalanceProfile> {
    if table.is_empty() {
        return Err(Error::Empty("table has no labelled records"));
    }
    let names = table.label_space().names();
    let mut counts = vec![0usize; names.len()];
    for record in table.records() {
        let labels = record
            .labels
            .as_ref()
            .ok_or_else(|| Error::Unlabeled(record.id.clone()))?;
        for (count, &l) in counts.iter_mut().zip(labels) {
            *count += l as usize;
        }
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::NoPositiveLabels);
    }
    let mut profile = ImbalanceProfile {
        counts: BTreeMap::new(),
        irlbl: BTreeMap::new(),
        mean_ir: 0.0,
        excluded: Vec::new(),
    };
    for (name, &count) in names.iter().zip(&counts) {
        if count == 0 {
            profile.excluded.push(name.clone());
        } else {
            profile.counts.insert(name.clone(), count);
            profile.irlbl.insert(name.clone(), max as f64 / count as f64);
        }
    }
    profile.mean_ir = profile.irlbl.values().sum::<f64>() / profile.irlbl.len() as f64;
    Ok(profile)
}

/// Labels whose imbalance ratio strictly exceeds the mean ratio.
pub fn minority_labels(profile: &ImbalanceProfile) -> BTreeSet<String> {
    profile
        .irlbl
        .iter()
        .filter(|(_, &ir)| ir > profile.mean_ir)
        .map(|(name, _)| name.clone())
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Up to `k` nearest candidates to `query` (Euclidean over features),
/// excluding the query itself. Ties go to the lower index.
pub fn knn_within(
    table: &DatasetTable,
    query: usize,
    candidates: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    let records = table.records();
    let mut pool: Vec<usize> = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(&bad) = pool.iter().find(|&&i| i >= records.len()) {
        return Err(Error::InvalidParameter(format!(
            "candidate index {bad} out of range for {} records",
            records.len()
        )));
    }
    if pool.binary_search(&query).is_err() {
        return Err(Error::InvalidParameter(format!(
            "query index {query} is not among the candidates"
        )));
    }
    if pool.len() < 2 {
        return Err(Error::InvalidParameter(
            "candidate set has no neighbour besides the query".into(),
        ));
    }
    let origin = &records[query].features;
    let mut ranked: Vec<(f64, usize)> = pool
        .into_iter()
        .filter(|&i| i != query)
        .map(|i| (squared_distance(origin, &records[i].features), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, i)| i).collect())
}

/// How a synthetic record's labels are derived from the seed and its
/// neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelStrategy {
    /// A label is set when more than half of the votes carry it.
    #[default]
    Ranking,
    Union,
    Intersection,
}

impl FromStr for LabelStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ranking" => Ok(Self::Ranking),
            "union" => Ok(Self::Union),
            "intersection" => Ok(Self::Intersection),
            other => Err(Error::InvalidParameter(format!(
                "unknown label strategy `{other}` (expected ranking, union or intersection)"
            ))),
        }
    }
}

impl fmt::Display for LabelStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ranking => "ranking",
            Self::Union => "union",
            Self::Intersection => "intersection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlsmoteParams {
    pub k: usize,
    pub seed: u64,
    pub strategy: LabelStrategy,
}

impl MlsmoteParams {
    pub fn new(seed: u64) -> Self {
        Self {
            k: 5,
            seed,
            strategy: LabelStrategy::Ranking,
        }
    }
}

/// A minority label that could not be oversampled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLabel {
    pub label: String,
    pub reason: &'static str,
}

impl fmt::Display for SkippedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "skip label={} reason={}", self.label, self.reason)
    }
}

/// Where one synthetic record came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    /// Index (into the input table) of the minority label being oversampled.
    pub label: usize,
    pub seed: usize,
    pub reference: usize,
    /// Interpolation gap `u` in [0, 1).
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct MlsmoteOutput {
    /// Originals in input order followed by the synthetic records.
    pub table: DatasetTable,
    /// One entry per synthetic record, in output order.
    pub origins: Vec<SyntheticOrigin>,
    /// Synthetic records generated per minority label.
    pub generated: BTreeMap<String, usize>,
    pub skipped: Vec<SkippedLabel>,
}

impl MlsmoteOutput {
    pub fn synthetic_count(&self) -> usize {
        self.origins.len()
    }
}

fn vote(
    records: &[FeatureRecord],
    seed: usize,
    neighbours: &[usize],
    strategy: LabelStrategy,
) -> Vec<u8> {
    let seed_labels = records[seed].labels.as_deref().unwrap_or_default();
    let voters = neighbours.len() + 1;
    (0..seed_labels.len())
        .map(|l| {
            let votes = seed_labels[l] as usize
                + neighbours
                    .iter()
                    .filter(|&&n| records[n].has_label(l))
                    .count();
            let set = match strategy {
                LabelStrategy::Ranking => 2 * votes > voters,
                LabelStrategy::Union => votes > 0,
                LabelStrategy::Intersection => votes == voters,
            };
            set as u8
        })
        .collect()
}

fn synthetic_id(table: &DatasetTable, seed_id: &str, serial: usize) -> String {
    let mut id = format!("{seed_id}_syn{serial}");
    while table.contains_id(&id) {
        id.push('_');
    }
    id
}

/// Oversamples every minority label once. Deterministic in
/// `(table, params)`; originals are never modified.
pub fn mlsmote(table: &DatasetTable, params: MlsmoteParams) -> Result<MlsmoteOutput> {
    if params.k == 0 {
        return Err(Error::InvalidParameter("MLSMOTE k must be at least 1".into()));
    }
    let profile = imbalance_profile(table)?;
    let minority = minority_labels(&profile);
    let records = table.records();
    let mut stream = Stream::new(params.seed);
    let mut out = table.clone();
    let mut origins = Vec::new();
    let mut generated = BTreeMap::new();
    let mut skipped = Vec::new();

    for (label, name) in table.label_space().names().iter().enumerate() {
        if !minority.contains(name) {
            continue;
        }
        let bag: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].has_label(label))
            .collect();
        if bag.len() < 2 {
            skipped.push(SkippedLabel {
                label: name.clone(),
                reason: "singleton",
            });
            continue;
        }
        for &seed in &bag {
            let neighbours = knn_within(table, seed, &bag, params.k)?;
            let reference = neighbours[stream.index(neighbours.len())];
            let gap = stream.uniform();
            let origin = &records[seed].features;
            let features = origin
                .iter()
                .zip(&records[reference].features)
                .map(|(s, r)| s + gap * (r - s))
                .collect();
            let labels = vote(records, seed, &neighbours, params.strategy);
            let id = synthetic_id(&out, &records[seed].id, origins.len() + 1);
            out.push(FeatureRecord {
                id,
                features,
                labels: Some(labels),
                synthetic: true,
            })?;
            origins.push(SyntheticOrigin {
                label,
                seed,
                reference,
                gap,
            });
            *generated.entry(name.clone()).or_insert(0) += 1;
        }
    }

    Ok(MlsmoteOutput {
        table: out,
        origins,
        generated,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelSpace;

    fn space(names: &[&str]) -> LabelSpace {
        LabelSpace::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    /// Table whose label columns have the given positive counts.
    fn table_with_counts(counts: &[usize]) -> DatasetTable {
        let names: Vec<String> = (0..counts.len()).map(|i| format!("L{i}")).collect();
        let n = counts.iter().copied().max().unwrap();
        let records = (0..n)
            .map(|r| {
                let labels = counts.iter().map(|&c| (r < c) as u8).collect();
                FeatureRecord::new(format!("r{r}"), vec![r as f64; counts.len()])
                    .with_labels(labels)
            })
            .collect();
        DatasetTable::new(LabelSpace::new(names).unwrap(), records).unwrap()
    }

    fn line(points: &[f64]) -> DatasetTable {
        let records = points
            .iter()
            .enumerate()
            .map(|(i, &x)| FeatureRecord::new(format!("p{i}"), vec![x]).with_labels(vec![1]))
            .collect();
        DatasetTable::new(space(&["a"]), records).unwrap()
    }

    #[test]
    fn profile_basic() {
        let p = imbalance_profile(&table_with_counts(&[10, 5, 10])).unwrap();
        assert_eq!(p.irlbl["L0"], 1.0);
        assert_eq!(p.irlbl["L1"], 2.0);
        assert_eq!(p.irlbl["L2"], 1.0);
        assert!((p.mean_ir - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(minority_labels(&p), BTreeSet::from(["L1".to_string()]));
    }

    #[test]
    fn profile_uniform() {
        let p = imbalance_profile(&table_with_counts(&[4, 4, 4])).unwrap();
        assert!(p.irlbl.values().all(|&v| v == 1.0));
        assert_eq!(p.mean_ir, 1.0);
        assert!(minority_labels(&p).is_empty());
    }

    #[test]
    fn profile_extreme() {
        let p = imbalance_profile(&table_with_counts(&[100, 1])).unwrap();
        assert_eq!(p.irlbl["L1"], 100.0);
        assert_eq!(p.mean_ir, 50.5);
        assert_eq!(minority_labels(&p), BTreeSet::from(["L1".to_string()]));
    }

    #[test]
    fn profile_excludes_zero_counts() {
        let p = imbalance_profile(&table_with_counts(&[3, 0, 1])).unwrap();
        assert_eq!(p.excluded, ["L1"]);
        assert!(!p.irlbl.contains_key("L1"));
        assert_eq!(p.mean_ir, 2.0);
    }

    #[test]
    fn profile_errors() {
        let t = DatasetTable::new(space(&["a"]), vec![FeatureRecord::new("x", vec![0.0])]).unwrap();
        assert!(matches!(imbalance_profile(&t), Err(Error::Unlabeled(ref id)) if id == "x"));
        let t = DatasetTable::new(
            space(&["a"]),
            vec![FeatureRecord::new("x", vec![0.0]).with_labels(vec![0])],
        )
        .unwrap();
        assert!(matches!(imbalance_profile(&t), Err(Error::NoPositiveLabels)));
        assert!(imbalance_profile(&DatasetTable::empty(space(&["a"]))).is_err());
    }

    #[test]
    fn knn_on_a_line() {
        let t = line(&[0.0, 1.0, 3.0]);
        assert_eq!(knn_within(&t, 0, &[0, 1, 2], 1).unwrap(), [1]);
    }

    #[test]
    fn knn_tie_prefers_lower_index() {
        // indices 2 and 5 are both at distance 1 from the query
        let t = line(&[0.0, 5.0, 1.0, 7.0, 7.0, -1.0]);
        assert_eq!(knn_within(&t, 0, &[0, 2, 5], 2).unwrap(), [2, 5]);
        assert_eq!(knn_within(&t, 0, &[5, 0, 2], 1).unwrap(), [2]);
    }

    #[test]
    fn knn_truncates() {
        let t = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(knn_within(&t, 0, &[0, 1, 2, 3], 10).unwrap(), [1, 2, 3]);
    }

    #[test]
    fn knn_rejects_singleton() {
        let t = line(&[0.0, 1.0]);
        assert!(knn_within(&t, 0, &[0], 1).is_err());
        assert!(knn_within(&t, 1, &[0], 1).is_err());
    }

    #[test]
    fn balanced_table_is_unchanged() {
        let t = table_with_counts(&[3, 3]);
        let out = mlsmote(&t, MlsmoteParams::new(1)).unwrap();
        assert_eq!(out.table, t);
        assert_eq!(out.synthetic_count(), 0);
    }

    #[test]
    fn two_record_bag_interpolates() {
        let records = vec![
            FeatureRecord::new("a", vec![0.0, 0.0]).with_labels(vec![1, 1]),
            FeatureRecord::new("b", vec![1.0, 1.0]).with_labels(vec![1, 1]),
            FeatureRecord::new("c", vec![5.0, 5.0]).with_labels(vec![1, 0]),
            FeatureRecord::new("d", vec![6.0, 6.0]).with_labels(vec![1, 0]),
            FeatureRecord::new("e", vec![7.0, 7.0]).with_labels(vec![1, 0]),
        ];
        let t = DatasetTable::new(space(&["x", "y"]), records).unwrap();
        let out = mlsmote(&t, MlsmoteParams::new(3)).unwrap();
        assert_eq!(out.synthetic_count(), 2);
        for rec in &out.table.records()[5..] {
            assert!(rec.synthetic);
            assert_eq!(rec.features[0], rec.features[1]);
            assert!((0.0..=1.0).contains(&rec.features[0]));
            assert_eq!(rec.labels.as_deref(), Some(&[1u8, 1][..]));
        }
    }

    #[test]
    fn singleton_minority_is_skipped() {
        let t = table_with_counts(&[6, 1]);
        let out = mlsmote(&t, MlsmoteParams::new(0)).unwrap();
        assert_eq!(out.synthetic_count(), 0);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].to_string(), "skip label=L1 reason=singleton");
    }

    #[test]
    fn rejects_unlabelled_and_zero_k() {
        let t = DatasetTable::new(
            space(&["a"]),
            vec![
                FeatureRecord::new("x", vec![0.0]).with_labels(vec![1]),
                FeatureRecord::new("y", vec![0.0]),
            ],
        )
        .unwrap();
        assert!(matches!(mlsmote(&t, MlsmoteParams::new(0)), Err(Error::Unlabeled(ref id)) if id == "y"));
        let mut p = MlsmoteParams::new(0);
        p.k = 0;
        assert!(mlsmote(&table_with_counts(&[4, 2]), p).is_err());
    }

    #[test]
    fn strategy_parses() {
        assert_eq!("Union".parse::<LabelStrategy>().unwrap(), LabelStrategy::Union);
        assert!("majority".parse::<LabelStrategy>().is_err());
    }
}
