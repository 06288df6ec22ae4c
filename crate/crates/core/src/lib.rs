//! Clustering of items by "atmosphere" using label-strength feature vectors.
//!
//! Each item is described by the predicted strengths of a set of indirect
//! labels (pseudo-labels). This crate provides the numeric toolkit that sits
//! downstream of such a predictor:
//!
//! - [`dataset`]: feature tables and reference groupings, with JSONL/CSV I/O.
//! - [`augmentation`]: MLSMOTE rebalancing of multi-labelled tables.
//! - [`clustering`]: k-means (k-means++ seeding, Lloyd iterations) and
//!   nearest-centroid assignment of unseen items.
//! - [`evaluation`]: silhouette coefficient and base-S normalized entropy
//!   against a reference grouping.
//! - [`rng`]: the seedable, portable random stream shared by the above.

pub mod augmentation;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod rng;

pub use augmentation::{
    imbalance_profile, knn_within, minority_labels, mlsmote, ImbalanceProfile, LabelStrategy,
    MlsmoteOutput, MlsmoteParams, SkippedLabel, SyntheticOrigin,
};
pub use clustering::{
    assign, inertia_of, kmeans_fit, Assignment, ClusterModel, KMeansFit, KMeansParams,
    Standardization,
};
pub use dataset::{
    load_dataset, load_reference_grouping, save_dataset, DatasetFormat, DatasetTable,
    FeatureRecord, LabelSpace, ReferenceGrouping,
};
pub use error::{Error, Result};
pub use evaluation::{
    cluster_entropy, confusion, evaluate, labels_as_features, silhouette, weighted_entropy,
    ConfusionProbabilities, EvaluationReport, Silhouette,
};
