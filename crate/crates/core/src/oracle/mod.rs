//! The original model as a black box: something that maps records to class
//! labels. Adapters cover labels computed elsewhere (a CSV column), external
//! processes speaking NDJSON, HTTP endpoints, and a built-in bagged-tree
//! reference model for experiments without an external model.

mod http;
mod reference;
mod subprocess;

use std::collections::HashMap;
use std::sync::Mutex;

pub use http::HttpOracle;
pub use reference::{train_reference_model, ForestParams, ReferenceModel, TrainingReport};
pub use subprocess::SubprocessOracle;

use crate::data::{Feature, Record};
use crate::error::{Error, OracleError, Result};

/// A deterministic label source. Labels are indices into [`class_labels`].
///
/// Implementations answer through [`predict`], which enforces the
/// one-label-per-record and known-label contract.
///
/// [`class_labels`]: PredictionOracle::class_labels
pub trait PredictionOracle: Send + Sync {
    fn class_labels(&self) -> &[String];

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError>;
}

impl<T: PredictionOracle + ?Sized> PredictionOracle for &T {
    fn class_labels(&self) -> &[String] {
        (**self).class_labels()
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        (**self).predict_batch(records)
    }
}

impl<T: PredictionOracle + ?Sized> PredictionOracle for Box<T> {
    fn class_labels(&self) -> &[String] {
        (**self).class_labels()
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        (**self).predict_batch(records)
    }
}

/// Queries the oracle and checks its answer: one label per record, each a
/// known class.
pub fn predict<O: PredictionOracle + ?Sized>(oracle: &O, records: &[Record]) -> Result<Vec<u32>, OracleError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let labels = oracle.predict_batch(records)?;
    if labels.len() != records.len() {
        return Err(OracleError::Protocol(format!(
            "{} labels returned for {} records",
            labels.len(),
            records.len()
        )));
    }
    let n_classes = oracle.class_labels().len();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(OracleError::Protocol(format!("label index {bad} outside {n_classes} classes")));
    }
    Ok(labels)
}

/// Frequency of the most common label: the accuracy of always guessing it.
pub fn null_accuracy(labels: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Domain("null accuracy of an empty label list".into()));
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    Ok(top as f64 / labels.len() as f64)
}

pub(crate) fn parse_label(classes: &[String], raw: &str) -> Result<u32, OracleError> {
    let text = raw.trim();
    let text = if text.starts_with('"') {
        serde_json::from_str::<String>(text)
            .map_err(|e| OracleError::Protocol(format!("bad label line `{text}`: {e}")))?
    } else {
        text.to_string()
    };
    classes
        .iter()
        .position(|c| *c == text)
        .map(|i| i as u32)
        .ok_or_else(|| OracleError::Protocol(format!("label `{text}` is not a known class")))
}

pub(crate) fn record_to_json(features: &[Feature], record: &Record) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = features
        .iter()
        .zip(record.cells())
        .map(|(f, &c)| (f.name.clone(), f.cell_to_json(c)))
        .collect();
    serde_json::Value::Object(map)
}

/// Labels known ahead of time, e.g. a prediction column exported from the
/// original model.
#[derive(Debug, Clone)]
pub struct PrecomputedOracle {
    classes: Vec<String>,
    source: Precomputed,
}

#[derive(Debug, Clone)]
enum Precomputed {
    /// Answers any batch of exactly this length with the stored column.
    Positional(Vec<u32>),
    /// Answers records found in the table; unknown records are an error.
    Keyed(HashMap<Record, u32>),
}

impl PrecomputedOracle {
    pub fn positional(classes: Vec<String>, labels: Vec<u32>) -> Self {
        PrecomputedOracle {
            classes,
            source: Precomputed::Positional(labels),
        }
    }

    /// Builds a lookup table. When the same record appears with different
    /// labels the first occurrence wins.
    pub fn keyed(classes: Vec<String>, records: &[Record], labels: &[u32]) -> Self {
        let mut table = HashMap::with_capacity(records.len());
        for (r, &l) in records.iter().zip(labels) {
            table.entry(r.clone()).or_insert(l);
        }
        PrecomputedOracle {
            classes,
            source: Precomputed::Keyed(table),
        }
    }
}

impl PredictionOracle for PrecomputedOracle {
    fn class_labels(&self) -> &[String] {
        &self.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        match &self.source {
            Precomputed::Positional(labels) => {
                if labels.len() == records.len() {
                    Ok(labels.clone())
                } else {
                    Err(OracleError::Protocol(format!(
                        "precomputed column has {} labels, asked for {}",
                        labels.len(),
                        records.len()
                    )))
                }
            }
            Precomputed::Keyed(table) => records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    table.get(r).copied().ok_or_else(|| {
                        OracleError::Unavailable(format!("record {i} has no precomputed prediction"))
                    })
                })
                .collect(),
        }
    }
}

/// Always answers the same class.
#[derive(Debug, Clone)]
pub struct ConstantOracle {
    classes: Vec<String>,
    label: u32,
}

impl ConstantOracle {
    pub fn new(classes: Vec<String>, label: u32) -> Self {
        ConstantOracle { classes, label }
    }
}

impl PredictionOracle for ConstantOracle {
    fn class_labels(&self) -> &[String] {
        &self.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        Ok(vec![self.label; records.len()])
    }
}

/// Wraps a closure over single records. Handy for synthetic oracles.
pub struct FnOracle<F> {
    classes: Vec<String>,
    f: F,
}

impl<F: Fn(&Record) -> u32 + Send + Sync> FnOracle<F> {
    pub fn new(classes: Vec<String>, f: F) -> Self {
        FnOracle { classes, f }
    }
}

impl<F: Fn(&Record) -> u32 + Send + Sync> PredictionOracle for FnOracle<F> {
    fn class_labels(&self) -> &[String] {
        &self.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        Ok(records.iter().map(&self.f).collect())
    }
}

/// Caches the first answer for every distinct record and only forwards
/// unseen records (deduplicated) to the wrapped oracle.
pub struct Memoized<O> {
    inner: O,
    cache: Mutex<HashMap<Record, u32>>,
}

impl<O: PredictionOracle> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Memoized {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: PredictionOracle> PredictionOracle for Memoized<O> {
    fn class_labels(&self) -> &[String] {
        self.inner.class_labels()
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        let misses: Vec<Record> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            records
                .iter()
                .filter(|r| !cache.contains_key(*r) && seen.insert(*r))
                .cloned()
                .collect()
        };
        if !misses.is_empty() {
            let labels = predict(&self.inner, &misses)?;
            let mut cache = self.cache.lock().unwrap();
            for (r, l) in misses.into_iter().zip(labels) {
                cache.entry(r).or_insert(l);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(records.iter().map(|r| cache[r]).collect())
    }
}
