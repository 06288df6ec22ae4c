//! Feature tables, reference groupings and their on-disk formats.
//!
//! Two dataset formats are supported:
//!
//! - **JSONL**: an optional header line `{"label_space":["cute","cool",…]}`
//!   followed by one record per line,
//!   `{"id":"a","features":[0.9,0.1],"labels":[1,0],"synthetic":false}`.
//!   `labels` may be omitted for unlabelled (inference-only) records and
//!   `synthetic` defaults to `false`. Without a header the label names are
//!   `label_0`, `label_1`, … over the feature dimension.
//! - **CSV**: header `id,f_<name>…[,l_<name>…][,synthetic]`. Label columns,
//!   when present, name the same labels as the feature columns in the same
//!   order; a row with every label cell empty is unlabelled.
//!
//! Reals are written in their shortest round-trip decimal form, so saving
//! and reloading a table reproduces it exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, unique label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidLabelSpace("no labels".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidLabelSpace(format!("duplicate label `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// `label_0 … label_{dimension-1}`.
    pub fn anonymous(dimension: usize) -> Result<Self> {
        Self::new((0..dimension).map(|i| format!("label_{i}")).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

/// One item: its id, label-strength features and optional multi-hot labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    #[serde(default)]
    pub synthetic: bool,
}

impl FeatureRecord {
    pub fn new(id: impl Into<String>, features: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            features,
            labels: None,
            synthetic: false,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn has_label(&self, label: usize) -> bool {
        self.labels
            .as_ref()
            .is_some_and(|l| l.get(label).copied() == Some(1))
    }
}

/// Ordered records sharing one label space and one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    label_space: LabelSpace,
    records: Vec<FeatureRecord>,
    ids: HashSet<String>,
}

impl DatasetTable {
    pub fn new(label_space: LabelSpace, records: Vec<FeatureRecord>) -> Result<Self> {
        let mut table = Self {
            label_space,
            records: Vec::with_capacity(records.len()),
            ids: HashSet::with_capacity(records.len()),
        };
        for record in records {
            table.push(record)?;
        }
        Ok(table)
    }

    pub fn empty(label_space: LabelSpace) -> Self {
        Self {
            label_space,
            records: Vec::new(),
            ids: HashSet::new(),
        }
    }

    /// Appends a record after checking it against the table invariants.
    pub fn push(&mut self, record: FeatureRecord) -> Result<()> {
        self.check(&record)?;
        if !self.ids.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        self.records.push(record);
        Ok(())
    }

    fn check(&self, record: &FeatureRecord) -> Result<()> {
        let expected = self
            .records
            .first()
            .map_or(self.label_space.dimension(), |r| r.features.len());
        let first_unlabeled = self.records.is_empty() && record.labels.is_none();
        if record.features.is_empty() || (!first_unlabeled && record.features.len() != expected) {
            return Err(Error::DimensionMismatch {
                id: record.id.clone(),
                expected,
                found: record.features.len(),
            });
        }
        if record.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                id: record.id.clone(),
            });
        }
        if let Some(labels) = &record.labels {
            let dim = self.label_space.dimension();
            if labels.len() != dim {
                return Err(Error::LabelLengthMismatch {
                    id: record.id.clone(),
                    expected: dim,
                    found: labels.len(),
                });
            }
            if record.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: record.id.clone(),
                    expected: dim,
                    found: record.features.len(),
                });
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::NonBinaryLabel {
                    id: record.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature dimension: that of the first record, or the label-space
    /// dimension for an empty table.
    pub fn dimension(&self) -> usize {
        self.records
            .first()
            .map_or(self.label_space.dimension(), |r| r.features.len())
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.features.clone()).collect()
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Infers the format from a `.jsonl`/`.json`/`.csv` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset format `{other}` (expected jsonl or csv)"
            ))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<DatasetTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DatasetFormat::Jsonl => read_jsonl(reader, path),
        DatasetFormat::Csv => read_csv(reader),
    }
}

pub fn save_dataset(
    table: &DatasetTable,
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        DatasetFormat::Jsonl => write_jsonl(table, &mut out).map_err(|e| Error::io(path, e))?,
        DatasetFormat::Csv => write_csv(table, &mut out)?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlHeader {
    label_space: Vec<String>,
}

pub fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<DatasetTable> {
    let mut table: Option<DatasetTable> = None;
    let mut header: Option<LabelSpace> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let is_header = value.get("label_space").is_some();
        if is_header {
            if table.is_some() || header.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "label_space header must be the first line".into(),
                });
            }
            let parsed: JsonlHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            header = Some(LabelSpace::new(parsed.label_space)?);
            continue;
        }
        let record: FeatureRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let table = match &mut table {
            Some(t) => t,
            None => {
                let space = match header.take() {
                    Some(space) => space,
                    None => LabelSpace::anonymous(record.features.len().max(1))?,
                };
                table.insert(DatasetTable::empty(space))
            }
        };
        table.push(record)?;
    }
    match (table, header) {
        (Some(t), _) => Ok(t),
        (None, Some(space)) => Ok(DatasetTable::empty(space)),
        (None, None) => Err(Error::Empty("dataset has neither records nor a label_space header")),
    }
}

pub fn write_jsonl(table: &DatasetTable, out: &mut impl Write) -> std::io::Result<()> {
    let header = serde_json::json!({ "label_space": table.label_space().names() });
    writeln!(out, "{header}")?;
    for record in table.records() {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct CsvLayout {
    names: Vec<String>,
    has_labels: bool,
    synthetic_col: Option<usize>,
}

fn csv_layout(headers: &csv::StringRecord) -> Result<CsvLayout> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let mut cols = headers.iter();
    if cols.next() != Some("id") {
        return Err(bad("first column must be `id`".into()));
    }
    let mut names = Vec::new();
    let mut label_names = Vec::new();
    let mut synthetic_col = None;
    for (i, col) in headers.iter().enumerate().skip(1) {
        if synthetic_col.is_some() {
            return Err(bad("`synthetic` must be the last column".into()));
        }
        if let Some(name) = col.strip_prefix("f_") {
            if !label_names.is_empty() {
                return Err(bad(format!("feature column `{col}` after label columns")));
            }
            names.push(name.to_string());
        } else if let Some(name) = col.strip_prefix("l_") {
            label_names.push(name.to_string());
        } else if col == "synthetic" {
            synthetic_col = Some(i);
        } else {
            return Err(bad(format!("unexpected column `{col}`")));
        }
    }
    if names.is_empty() {
        return Err(bad("no `f_` feature columns".into()));
    }
    let has_labels = !label_names.is_empty();
    if has_labels && label_names != names {
        return Err(bad("`l_` columns must name the same labels as the `f_` columns".into()));
    }
    Ok(CsvLayout {
        names,
        has_labels,
        synthetic_col,
    })
}

pub fn read_csv(reader: impl std::io::Read) -> Result<DatasetTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let layout = csv_layout(rdr.headers()?)?;
    let dim = layout.names.len();
    let mut table = DatasetTable::empty(LabelSpace::new(layout.names.clone())?);
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        let id = row.get(0).unwrap_or_default().to_string();
        let features = (1..=dim)
            .map(|c| {
                let cell = row.get(c).unwrap_or_default();
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("record `{id}`: bad feature value `{cell}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let labels = if layout.has_labels {
            let cells: Vec<&str> = (dim + 1..=2 * dim)
                .map(|c| row.get(c).unwrap_or_default().trim())
                .collect();
            if cells.iter().all(|c| c.is_empty()) {
                None
            } else {
                Some(
                    cells
                        .iter()
                        .map(|c| match *c {
                            "0" => Ok(0u8),
                            "1" => Ok(1u8),
                            other => Err(parse_err(format!(
                                "record `{id}`: bad label value `{other}`"
                            ))),
                        })
                        .collect::<Result<Vec<u8>>>()?,
                )
            }
        } else {
            None
        };
        let synthetic = match layout.synthetic_col.map(|c| row.get(c).unwrap_or_default().trim()) {
            None | Some("") | Some("false") | Some("0") => false,
            Some("true") | Some("1") => true,
            Some(other) => {
                return Err(parse_err(format!("record `{id}`: bad synthetic flag `{other}`")))
            }
        };
        table.push(FeatureRecord {
            id,
            features,
            labels,
            synthetic,
        })?;
    }
    Ok(table)
}

pub fn write_csv(table: &DatasetTable, out: &mut impl Write) -> Result<()> {
    let names = table.label_space().names();
    if table.dimension() != names.len() {
        return Err(Error::InvalidLabelSpace(format!(
            "CSV needs one label name per feature column ({} features, {} labels)",
            table.dimension(),
            names.len()
        )));
    }
    let has_labels = table.records().iter().any(|r| r.labels.is_some());
    let mut wtr = csv::WriterBuilder::new().from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(names.iter().map(|n| format!("f_{n}")));
    if has_labels {
        header.extend(names.iter().map(|n| format!("l_{n}")));
    }
    header.push("synthetic".into());
    wtr.write_record(&header)?;
    for record in table.records() {
        let mut row = Vec::with_capacity(header.len());
        row.push(record.id.clone());
        row.extend(record.features.iter().map(|v| format_real(*v)));
        if has_labels {
            match &record.labels {
                Some(labels) => row.extend(labels.iter().map(|l| l.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), names.len())),
            }
        }
        row.push(record.synthetic.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_real(value: f64) -> String {
    format!("{value:?}")
}

/// A human partition of item ids into disjoint named groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceGrouping {
    groups: BTreeMap<String, Vec<String>>,
    group_of: HashMap<String, usize>,
}

impl ReferenceGrouping {
    pub fn new(groups: impl IntoIterator<Item = (String, Vec<String>)>) -> Result<Self> {
        let groups: BTreeMap<String, Vec<String>> = groups.into_iter().collect();
        let names: Vec<&String> = groups.keys().collect();
        let mut group_of = HashMap::new();
        for (g, (name, ids)) in groups.iter().enumerate() {
            if ids.is_empty() {
                return Err(Error::EmptyGroup(name.clone()));
            }
            for id in ids {
                if let Some(prev) = group_of.insert(id.clone(), g) {
                    return Err(Error::OverlappingGroups {
                        id: id.clone(),
                        first: names[prev].clone(),
                        second: name.clone(),
                    });
                }
            }
        }
        if groups.len() < 2 {
            return Err(Error::TooFewGroups(groups.len()));
        }
        Ok(Self { groups, group_of })
    }

    /// Number of groups, `S`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group names in row order (sorted).
    pub fn names(&self) -> Vec<&str> {
        self.groups.keys().map(String::as_str).collect()
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Row index of the group containing `id`.
    pub fn group_index(&self, id: &str) -> Option<usize> {
        self.group_of.get(id).copied()
    }

    pub fn item_count(&self) -> usize {
        self.group_of.len()
    }
}

pub fn load_reference_grouping(path: impl AsRef<Path>) -> Result<ReferenceGrouping> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reference_grouping(BufReader::new(file))
}

pub fn parse_reference_grouping(reader: impl std::io::Read) -> Result<ReferenceGrouping> {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_reader(reader)?;
    ReferenceGrouping::new(raw)
}
