//! Tabular datasets: schema, CSV ingestion, cleaning, imputation and the
//! four-way split used to keep model training, generalizer training,
//! optimization and validation data apart.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cell of a record. Categorical values are stored as an index into the
/// feature's declared domain.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Num(f64),
    Cat(u32),
    Missing,
}

impl Cell {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_cat(self) -> Option<u32> {
        match self {
            Cell::Cat(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_missing(self) -> bool {
        matches!(self, Cell::Missing)
    }
}

// Bitwise equality so records can key hash maps (memoized oracles, risk counts).
impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            (Cell::Cat(a), Cell::Cat(b)) => a == b,
            (Cell::Missing, Cell::Missing) => true,
            _ => false,
        }
    }
}

impl Eq for Cell {}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Cell::Num(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            Cell::Cat(c) => {
                1u8.hash(state);
                c.hash(state);
            }
            Cell::Missing => 2u8.hash(state),
        }
    }
}

/// A row of feature values, one cell per schema feature (the label is kept apart).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Record(pub Vec<Cell>);

impl Record {
    pub fn cells(&self) -> &[Cell] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> Cell {
        self.0[feature]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric { lo: f64, hi: f64 },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl Feature {
    pub fn numeric(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Numeric { lo, hi },
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = S>,
    ) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical {
                values: values.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// Width of a numeric domain; `None` for categorical features.
    pub fn width(&self) -> Option<f64> {
        match self.kind {
            FeatureKind::Numeric { lo, hi } => Some(hi - lo),
            FeatureKind::Categorical { .. } => None,
        }
    }

    /// Number of categories; `None` for numeric features.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { values } => Some(values.len()),
            FeatureKind::Numeric { .. } => None,
        }
    }

    pub fn category_index(&self, value: &str) -> Option<u32> {
        match &self.kind {
            FeatureKind::Categorical { values } => {
                values.iter().position(|v| v == value).map(|i| i as u32)
            }
            FeatureKind::Numeric { .. } => None,
        }
    }

    pub fn category_name(&self, index: u32) -> &str {
        match &self.kind {
            FeatureKind::Categorical { values } => &values[index as usize],
            FeatureKind::Numeric { .. } => panic!("feature `{}` is numeric", self.name),
        }
    }

    /// Renders a cell the way it appears in CSV and JSON output.
    pub fn format_cell(&self, cell: Cell) -> String {
        match cell {
            Cell::Num(v) => v.to_string(),
            Cell::Cat(c) => self.category_name(c).to_string(),
            Cell::Missing => String::new(),
        }
    }

    pub fn cell_to_json(&self, cell: Cell) -> serde_json::Value {
        match cell {
            Cell::Num(v) => serde_json::json!(v),
            Cell::Cat(c) => serde_json::json!(self.category_name(c)),
            Cell::Missing => serde_json::Value::Null,
        }
    }

    pub fn cell_from_json(&self, value: &serde_json::Value) -> Result<Cell> {
        match (&self.kind, value) {
            (_, serde_json::Value::Null) => Ok(Cell::Missing),
            (FeatureKind::Numeric { .. }, serde_json::Value::Number(n)) => n
                .as_f64()
                .map(Cell::Num)
                .ok_or_else(|| Error::Schema(format!("`{}`: invalid number", self.name))),
            (FeatureKind::Categorical { .. }, serde_json::Value::String(s)) => self
                .category_index(s)
                .map(Cell::Cat)
                .ok_or_else(|| Error::Schema(format!("`{}`: unknown category `{s}`", self.name))),
            _ => Err(Error::Schema(format!(
                "`{}`: value {value} does not match the feature kind",
                self.name
            ))),
        }
    }

    /// Whether a non-missing cell lies in the declared domain.
    pub fn contains(&self, cell: Cell) -> bool {
        match (&self.kind, cell) {
            (FeatureKind::Numeric { lo, hi }, Cell::Num(v)) => *lo <= v && v <= *hi,
            (FeatureKind::Categorical { values }, Cell::Cat(c)) => (c as usize) < values.len(),
            (_, Cell::Missing) => true,
            _ => false,
        }
    }
}

/// The class label column. Labels are stored as indices into `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub name: String,
    pub classes: Vec<String>,
}

impl LabelSchema {
    pub fn class_index(&self, value: &str) -> Option<u32> {
        self.classes.iter().position(|c| c == value).map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<Feature>,
    pub label: LabelSchema,
}

impl Schema {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label.classes.len()
    }

    /// A schema config that pins every domain explicitly, so reloading data
    /// written under this schema reproduces the same category indices.
    pub fn to_config(&self) -> SchemaConfig {
        let mut columns: Vec<ColumnConfig> = self
            .features
            .iter()
            .map(|f| ColumnConfig {
                name: f.name.clone(),
                kind: if f.is_numeric() {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                },
                domain: Some(match &f.kind {
                    FeatureKind::Numeric { lo, hi } => DomainConfig::Interval([*lo, *hi]),
                    FeatureKind::Categorical { values } => DomainConfig::Categories(values.clone()),
                }),
                role: Role::Feature,
            })
            .collect();
        columns.push(ColumnConfig {
            name: self.label.name.clone(),
            kind: ColumnKind::Categorical,
            domain: Some(DomainConfig::Categories(self.label.classes.clone())),
            role: Role::Label,
        });
        SchemaConfig {
            missing: default_missing(),
            columns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Feature,
    Label,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainConfig {
    Interval([f64; 2]),
    Categories(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub role: Role,
}

fn default_missing() -> Vec<String> {
    vec![String::new()]
}

/// JSON schema description: one entry per CSV column, plus the cell strings
/// that count as missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    pub columns: Vec<ColumnConfig>,
}

impl SchemaConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Config(format!("cannot open schema {}: {e}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Records with their schema and (possibly partial) class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<Record>,
    /// One entry per record when present; `None` entries are missing labels.
    pub labels: Option<Vec<Option<u32>>>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>, labels: Option<Vec<u32>>) -> Self {
        Dataset {
            schema,
            records,
            labels: labels.map(|l| l.into_iter().map(Some).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All labels, failing if the label column is absent or has gaps.
    pub fn complete_labels(&self) -> Result<Vec<u32>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Domain("dataset has no label column".into()))?;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Domain(format!("record {i} has no label"))))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Writes the dataset as CSV: feature columns, then the label column when present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.features.iter().map(|f| f.name.as_str()).collect();
        if self.labels.is_some() {
            header.push(&self.schema.label.name);
        }
        out.write_record(&header)?;
        for (i, record) in self.records.iter().enumerate() {
            let mut row: Vec<String> = self
                .schema
                .features
                .iter()
                .zip(record.cells())
                .map(|(f, &c)| f.format_cell(c))
                .collect();
            if let Some(labels) = &self.labels {
                row.push(
                    labels[i]
                        .map(|l| self.schema.label.classes[l as usize].clone())
                        .unwrap_or_default(),
                );
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Opens a file for reading, transparently decompressing `.gz` files.
pub fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::read::GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn load_dataset(path: &Path, config: &SchemaConfig) -> Result<Dataset> {
    read_dataset(open_input(path)?, config)
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawTable { header, rows })
}

/// Parses CSV text under a schema config. Domains not given in the config are
/// inferred: numeric as `[min, max]` of observed values, categorical as the
/// sorted set of observed values.
pub fn read_dataset<R: Read>(reader: R, config: &SchemaConfig) -> Result<Dataset> {
    let table = read_table(reader)?;
    let column_of = |name: &str| -> Result<usize> {
        table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in CSV header")))
    };
    let mut seen = BTreeSet::new();
    for col in &config.columns {
        if !seen.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("column `{}` declared twice", col.name)));
        }
    }
    let labels: Vec<&ColumnConfig> = config.columns.iter().filter(|c| c.role == Role::Label).collect();
    if labels.len() != 1 {
        return Err(Error::Schema(format!(
            "exactly one label column required, found {}",
            labels.len()
        )));
    }
    let label_col = labels[0];
    if label_col.kind == ColumnKind::Numeric && label_col.domain.is_some() {
        return Err(Error::Schema("label domains are lists of classes".into()));
    }

    let missing = |s: &str| config.missing.iter().any(|m| m == s);
    let mut features = Vec::new();
    let mut columns = Vec::new();
    for col in config.columns.iter().filter(|c| c.role == Role::Feature) {
        let idx = column_of(&col.name)?;
        let raw: Vec<&str> = table.rows.iter().map(|r| r.get(idx).unwrap_or("")).collect();
        let (feature, cells) = parse_column(col, &raw, &missing)?;
        features.push(feature);
        columns.push(cells);
    }
    for col in config.columns.iter().filter(|c| c.role == Role::Ignored) {
        column_of(&col.name)?;
    }

    let label_idx = column_of(&label_col.name)?;
    let raw_labels: Vec<&str> = table
        .rows
        .iter()
        .map(|r| r.get(label_idx).unwrap_or(""))
        .collect();
    let classes = match &label_col.domain {
        Some(DomainConfig::Categories(values)) => validate_categories(&label_col.name, values)?,
        Some(DomainConfig::Interval(_)) => {
            return Err(Error::Schema("label domains are lists of classes".into()))
        }
        None => raw_labels
            .iter()
            .filter(|s| !missing(s))
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let label = LabelSchema {
        name: label_col.name.clone(),
        classes,
    };
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(row, s)| {
            if missing(s) {
                Ok(None)
            } else {
                label.class_index(s).map(Some).ok_or_else(|| Error::Parse {
                    row: row + 1,
                    column: label.name.clone(),
                    message: format!("class `{s}` not in the declared label domain"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let records = (0..table.rows.len())
        .map(|r| Record(columns.iter().map(|c| c[r]).collect()))
        .collect();
    Ok(Dataset {
        schema: Schema { features, label },
        records,
        labels: Some(labels),
    })
}

fn validate_categories(name: &str, values: &[String]) -> Result<Vec<String>> {
    if values.is_empty() {
        return Err(Error::Schema(format!("`{name}`: categorical domain is empty")));
    }
    let unique: BTreeSet<&String> = values.iter().collect();
    if unique.len() != values.len() {
        return Err(Error::Schema(format!("`{name}`: duplicate categories in domain")));
    }
    Ok(values.to_vec())
}

fn parse_column(
    col: &ColumnConfig,
    raw: &[&str],
    missing: &dyn Fn(&str) -> bool,
) -> Result<(Feature, Vec<Cell>)> {
    let parse_err = |row: usize, message: String| Error::Parse {
        row: row + 1,
        column: col.name.clone(),
        message,
    };
    match col.kind {
        ColumnKind::Numeric => {
            let mut cells = Vec::with_capacity(raw.len());
            for (row, s) in raw.iter().enumerate() {
                if missing(s) {
                    cells.push(Cell::Missing);
                    continue;
                }
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => cells.push(Cell::Num(v)),
                    _ => return Err(parse_err(row, format!("`{s}` is not a finite number"))),
                }
            }
            let (lo, hi) = match &col.domain {
                Some(DomainConfig::Interval([lo, hi])) => {
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        return Err(Error::Schema(format!("`{}`: domain has lo > hi", col.name)));
                    }
                    for (row, c) in cells.iter().enumerate() {
                        if let Cell::Num(v) = c {
                            if v < lo || v > hi {
                                return Err(parse_err(row, format!("{v} outside domain [{lo}, {hi}]")));
                            }
                        }
                    }
                    (*lo, *hi)
                }
                Some(DomainConfig::Categories(_)) => {
                    return Err(Error::Schema(format!(
                        "`{}`: numeric column needs an interval domain",
                        col.name
                    )))
                }
                None => {
                    let observed = cells.iter().filter_map(|c| c.as_num());
                    let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                    if lo > hi {
                        (0.0, 0.0)
                    } else {
                        (lo, hi)
                    }
                }
            };
            Ok((Feature::numeric(&col.name, lo, hi), cells))
        }
        ColumnKind::Categorical => {
            let values = match &col.domain {
                Some(DomainConfig::Categories(values)) => validate_categories(&col.name, values)?,
                Some(DomainConfig::Interval(_)) => {
                    return Err(Error::Schema(format!(
                        "`{}`: categorical column needs a list domain",
                        col.name
                    )))
                }
                None => raw
                    .iter()
                    .filter(|s| !missing(s))
                    .map(|s| s.to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let index: HashMap<&str, u32> = values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u32))
                .collect();
            let cells = raw
                .iter()
                .enumerate()
                .map(|(row, s)| {
                    if missing(s) {
                        Ok(Cell::Missing)
                    } else {
                        index
                            .get(s)
                            .map(|&i| Cell::Cat(i))
                            .ok_or_else(|| parse_err(row, format!("`{s}` not in the declared domain")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((Feature::categorical(&col.name, values), cells))
        }
    }
}

/// Reads records for a fixed schema, matching columns by header name. The label
/// column is optional; every feature column must be present and every value
/// must lie in the schema's domain.
pub fn read_records_with_schema<R: Read>(reader: R, schema: &Schema, missing: &[String]) -> Result<Dataset> {
    let table = read_table(reader)?;
    let is_missing = |s: &str| missing.iter().any(|m| m == s);
    let mut columns = Vec::new();
    for f in &schema.features {
        let idx = table
            .header
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| Error::Config(format!("column `{}` missing from input", f.name)))?;
        let mut cells = Vec::with_capacity(table.rows.len());
        for (row, r) in table.rows.iter().enumerate() {
            let s = r.get(idx).unwrap_or("");
            let err = |message: String| Error::Parse {
                row: row + 1,
                column: f.name.clone(),
                message,
            };
            let cell = if is_missing(s) {
                Cell::Missing
            } else {
                match &f.kind {
                    FeatureKind::Numeric { .. } => match s.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Num(v),
                        _ => return Err(err(format!("`{s}` is not a finite number"))),
                    },
                    FeatureKind::Categorical { .. } => Cell::Cat(
                        f.category_index(s)
                            .ok_or_else(|| err(format!("`{s}` not in the declared domain")))?,
                    ),
                }
            };
            if !f.contains(cell) {
                return Err(err(format!("{s} outside the declared domain")));
            }
            cells.push(cell);
        }
        columns.push(cells);
    }
    let labels = match table.header.iter().position(|h| *h == schema.label.name) {
        Some(idx) => Some(
            table
                .rows
                .iter()
                .enumerate()
                .map(|(row, r)| {
                    let s = r.get(idx).unwrap_or("");
                    if is_missing(s) {
                        Ok(None)
                    } else {
                        schema.label.class_index(s).map(Some).ok_or_else(|| Error::Parse {
                            row: row + 1,
                            column: schema.label.name.clone(),
                            message: format!("class `{s}` not in the label domain"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let records = (0..table.rows.len())
        .map(|r| Record(columns.iter().map(|c| c[r]).collect()))
        .collect();
    Ok(Dataset {
        schema: schema.clone(),
        records,
        labels,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningPolicy {
    /// Features missing in a strictly larger fraction of records are dropped.
    pub max_missing_fraction: f64,
    /// Records whose label occurs fewer times than this are dropped (0 disables).
    pub min_label_count: usize,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            max_missing_fraction: 0.5,
            min_label_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub records_in: usize,
    pub records_out: usize,
    pub dropped_missing_label: usize,
    pub dropped_scarce_label: usize,
    pub dropped_features: Vec<DroppedFeature>,
}

/// Drops records without a label (and with scarce labels, if configured),
/// then drops features whose missing fraction exceeds the policy limit.
pub fn clean_dataset(ds: &Dataset, policy: &CleaningPolicy) -> Result<(Dataset, CleanReport)> {
    let n_in = ds.len();
    let mut keep: Vec<usize> = (0..n_in).collect();
    let mut dropped_missing_label = 0;
    let mut dropped_scarce_label = 0;
    if let Some(labels) = &ds.labels {
        keep.retain(|&i| labels[i].is_some());
        dropped_missing_label = n_in - keep.len();
        if policy.min_label_count > 0 {
            let mut counts: HashMap<u32, usize> = HashMap::new();
            for &i in &keep {
                *counts.entry(labels[i].unwrap()).or_default() += 1;
            }
            let before = keep.len();
            keep.retain(|&i| counts[&labels[i].unwrap()] >= policy.min_label_count);
            dropped_scarce_label = before - keep.len();
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset("cleaning"));
    }
    let rows = ds.subset(&keep);

    let n = rows.len() as f64;
    let mut kept_features = Vec::new();
    let mut dropped_features = Vec::new();
    for (j, f) in ds.schema.features.iter().enumerate() {
        let missing = rows.records.iter().filter(|r| r.get(j).is_missing()).count();
        let fraction = missing as f64 / n;
        if fraction > policy.max_missing_fraction {
            dropped_features.push(DroppedFeature {
                name: f.name.clone(),
                missing_fraction: fraction,
            });
        } else {
            kept_features.push(j);
        }
    }
    let schema = Schema {
        features: kept_features.iter().map(|&j| ds.schema.features[j].clone()).collect(),
        label: ds.schema.label.clone(),
    };
    let records = rows
        .records
        .iter()
        .map(|r| Record(kept_features.iter().map(|&j| r.get(j)).collect()))
        .collect();
    let report = CleanReport {
        records_in: n_in,
        records_out: keep.len(),
        dropped_missing_label,
        dropped_scarce_label,
        dropped_features,
    };
    Ok((
        Dataset {
            schema,
            records,
            labels: rows.labels,
        },
        report,
    ))
}

/// Fill values for residual missing cells: per-feature median (numeric) or
/// mode (categorical, ties to the lowest category index).
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    fills: Vec<Cell>,
}

impl Imputer {
    pub fn fit(ds: &Dataset) -> Imputer {
        let fills = ds
            .schema
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| match &f.kind {
                FeatureKind::Numeric { lo, .. } => {
                    let mut values: Vec<f64> = ds.records.iter().filter_map(|r| r.get(j).as_num()).collect();
                    if values.is_empty() {
                        Cell::Num(*lo)
                    } else {
                        values.sort_by(f64::total_cmp);
                        Cell::Num(median_sorted(&values))
                    }
                }
                FeatureKind::Categorical { values } => {
                    let mut counts = vec![0usize; values.len()];
                    for r in &ds.records {
                        if let Some(c) = r.get(j).as_cat() {
                            counts[c as usize] += 1;
                        }
                    }
                    Cell::Cat(argmax_first(&counts) as u32)
                }
            })
            .collect();
        Imputer { fills }
    }

    pub fn fills(&self) -> &[Cell] {
        &self.fills
    }

    pub fn apply(&self, ds: &mut Dataset) {
        for r in &mut ds.records {
            for (cell, fill) in r.0.iter_mut().zip(&self.fills) {
                if cell.is_missing() {
                    *cell = *fill;
                }
            }
        }
    }
}

pub(crate) fn median_sorted(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_first<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Fractions for (original-model training, generalizer training,
/// generalization optimization, validation) plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 4],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: [0.4, 0.2, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| *f < 0.0 || !f.is_finite()) {
            return Err(Error::Config("split fractions must be non-negative".into()));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Split sizes by largest remainder, ties to the lower split index.
    pub fn sizes(&self, n: usize) -> [usize; 4] {
        let quotas: Vec<f64> = self.fractions.iter().map(|f| f * n as f64).collect();
        let mut sizes = [0usize; 4];
        for (s, q) in sizes.iter_mut().zip(&quotas) {
            // Guard against products like 2.9999999999 that are 3 in exact arithmetic.
            *s = (q + 1e-9).floor() as usize;
        }
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..4).collect();
        let rem = |i: usize| quotas[i] - sizes[i] as f64;
        order.sort_by(|&a, &b| {
            let (ra, rb) = (rem(a), rem(b));
            if (ra - rb).abs() <= 1e-9 {
                a.cmp(&b)
            } else {
                rb.total_cmp(&ra)
            }
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            sizes[i] += 1;
        }
        sizes
    }
}

/// Shuffles record indices with `spec.seed` and cuts them into four
/// disjoint parts. Each part keeps the original record order.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<[Dataset; 4]> {
    spec.validate()?;
    let sizes = spec.sizes(ds.len());
    if !ds.is_empty() {
        for (k, (&size, &frac)) in sizes.iter().zip(&spec.fractions).enumerate() {
            if frac > 0.0 && size == 0 {
                return Err(Error::Config(format!(
                    "split {k} (fraction {frac}) is empty for {} records",
                    ds.len()
                )));
            }
        }
    }
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut start = 0;
    let parts: Vec<Dataset> = sizes
        .iter()
        .map(|&size| {
            let mut idx = perm[start..start + size].to_vec();
            idx.sort_unstable();
            start += size;
            ds.subset(&idx)
        })
        .collect();
    Ok(parts.try_into().expect("four parts"))
}
