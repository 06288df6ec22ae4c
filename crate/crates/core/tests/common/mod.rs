#![allow(dead_code)]

use std::path::PathBuf;

use atmocluster::rng::Stream;
use atmocluster::{DatasetTable, FeatureRecord, LabelSpace};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// Textbook silhouette: explicit member lists per cluster, no shared sums.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort();
    clusters.dedup();
    let members = |c: usize| -> Vec<usize> { (0..points.len()).filter(|&j| labels[j] == c).collect() };
    let mut total = 0.0;
    for i in 0..points.len() {
        let own = members(labels[i]);
        if own.len() == 1 {
            continue;
        }
        let a: f64 = own
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| euclid(&points[i], &points[j]))
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let mut b = f64::MAX;
        for &c in &clusters {
            if c == labels[i] {
                continue;
            }
            let other = members(c);
            let mean = other.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>()
                / other.len() as f64;
            if mean < b {
                b = mean;
            }
        }
        let s = if a < b {
            1.0 - a / b
        } else if a > b {
            b / a - 1.0
        } else {
            0.0
        };
        total += s;
    }
    total / points.len() as f64
}

/// Uniform integer in `lo..=hi`.
pub fn between(s: &mut Stream, lo: usize, hi: usize) -> usize {
    lo + s.index(hi - lo + 1)
}

pub fn random_points(s: &mut Stream, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| s.uniform() * 10.0 - 5.0).collect())
        .collect()
}

/// Random labels over `k` clusters with at least two clusters populated.
pub fn random_labels(s: &mut Stream, n: usize, k: usize) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| s.index(k)).collect();
        let first = labels[0];
        if labels.iter().any(|&l| l != first) {
            return labels;
        }
    }
}

/// Random multi-labelled table whose label frequencies differ per label.
pub fn random_labeled_table(s: &mut Stream) -> DatasetTable {
    let labels = between(s, 2, 6);
    let n = between(s, 6, 40);
    let d = labels;
    let rates: Vec<f64> = (0..labels).map(|_| 0.05 + 0.9 * s.uniform()).collect();
    let space = LabelSpace::new((0..labels).map(|l| format!("lab{l}")).collect()).unwrap();
    let records = (0..n)
        .map(|i| {
            let features = (0..d).map(|_| s.uniform()).collect();
            let mut l: Vec<u8> = rates.iter().map(|&r| (s.uniform() < r) as u8).collect();
            if l.iter().all(|&x| x == 0) {
                l[s.index(labels)] = 1;
            }
            FeatureRecord::new(format!("item{i}"), features).with_labels(l)
        })
        .collect();
    DatasetTable::new(space, records).unwrap()
}

/// Finite double drawn from raw bit patterns, covering subnormals and
/// extreme exponents.
pub fn random_real(s: &mut Stream) -> f64 {
    loop {
        let hi = (s.uniform() * 4294967296.0) as u64;
        let lo = (s.uniform() * 4294967296.0) as u64;
        let v = f64::from_bits(hi << 32 | lo);
        if v.is_finite() {
            return match s.index(3) {
                0 => v,
                1 => s.uniform(),
                _ => (s.uniform() * 2.0 - 1.0) * 1e3,
            };
        }
    }
}

const ID_ALPHABET: &[&str] = &["a", "b", "Z", "7", "_", "-", ",", "\"", " ", "é", "雰", "~", "\t"];

pub fn random_table(s: &mut Stream) -> DatasetTable {
    let dim = between(s, 1, 6);
    let names: Vec<String> = (0..dim).map(|i| format!("l{i}{}", ID_ALPHABET[s.index(5)])).collect();
    let space = LabelSpace::new(names).unwrap();
    let n = between(s, 0, 12);
    let labelled = s.index(3);
    let mut table = DatasetTable::empty(space);
    for i in 0..n {
        let len = between(s, 0, 6);
        let mut id: String = (0..len).map(|_| ID_ALPHABET[s.index(ID_ALPHABET.len())]).collect();
        id.push_str(&i.to_string());
        let features = (0..dim).map(|_| random_real(s)).collect();
        let mut record = FeatureRecord::new(id, features);
        let with_labels = match labelled {
            0 => false,
            1 => true,
            _ => s.uniform() < 0.5,
        };
        if with_labels {
            record.labels = Some((0..dim).map(|_| s.index(2) as u8).collect());
        }
        record.synthetic = s.uniform() < 0.3;
        table.push(record).unwrap();
    }
    table
}

/// Synthetic "atmosphere" data: `groups` planted groups, each a noisy copy
/// of a group-specific label-strength prototype.
pub struct Atmosphere {
    pub table: DatasetTable,
    pub group_of: Vec<usize>,
    pub prototypes: Vec<Vec<f64>>,
}

pub const ATMOSPHERE_LABELS: usize = 13;

pub fn atmosphere(seed: u64, items: usize, groups: usize, noise: f64) -> Atmosphere {
    let mut s = Stream::new(seed);
    let dim = ATMOSPHERE_LABELS;
    // prototypes: each group strongly expresses its own block of labels
    let prototypes: Vec<Vec<f64>> = (0..groups)
        .map(|g| {
            (0..dim)
                .map(|l| {
                    if l % groups == g {
                        0.75 + 0.2 * s.uniform()
                    } else {
                        0.05 + 0.3 * s.uniform()
                    }
                })
                .collect()
        })
        .collect();
    // generator oracle: thresholded prototypes are pairwise distinct and the
    // prototypes are far apart relative to the noise
    for a in 0..groups {
        for b in a + 1..groups {
            let ta: Vec<bool> = prototypes[a].iter().map(|&v| v > 0.5).collect();
            let tb: Vec<bool> = prototypes[b].iter().map(|&v| v > 0.5).collect();
            assert_ne!(ta, tb, "thresholded prototypes {a} and {b} coincide");
            assert!(euclid(&prototypes[a], &prototypes[b]) > 8.0 * noise);
        }
    }
    let space = LabelSpace::new((0..dim).map(|l| format!("mood{l}")).collect()).unwrap();
    let mut table = DatasetTable::empty(space);
    let mut group_of = Vec::with_capacity(items);
    for i in 0..items {
        let g = i % groups;
        let features = prototypes[g]
            .iter()
            .map(|&p| (p + noise * gaussian(&mut s)).clamp(0.0, 1.0))
            .collect();
        let labels = prototypes[g].iter().map(|&p| (p > 0.5) as u8).collect();
        table
            .push(FeatureRecord::new(format!("img{i:04}"), features).with_labels(labels))
            .unwrap();
        group_of.push(g);
    }
    Atmosphere {
        table,
        group_of,
        prototypes,
    }
}

/// Standard normal via Box-Muller.
pub fn gaussian(s: &mut Stream) -> f64 {
    let u1 = 1.0 - s.uniform();
    let u2 = s.uniform();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Reference grouping `group0 … group{S-1}` over the given ids.
pub fn reference_for(ids: &[String], group_of: &[usize]) -> atmocluster::ReferenceGrouping {
    let s = group_of.iter().max().unwrap() + 1;
    let mut groups = vec![Vec::new(); s];
    for (id, &g) in ids.iter().zip(group_of) {
        groups[g].push(id.clone());
    }
    atmocluster::ReferenceGrouping::new(
        groups
            .into_iter()
            .enumerate()
            .map(|(g, ids)| (format!("group{g}"), ids)),
    )
    .unwrap()
}

/// Partition equality up to relabelling.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}
