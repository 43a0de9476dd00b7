use std::path::Path;

use dmin_core::data::{open_input, read_records_with_schema, Record, Schema};
use dmin_core::document::InputDoc;
use dmin_core::oracle::{
    train_reference_model, ForestParams, HttpOracle, PrecomputedOracle, PredictionOracle, ReferenceModel,
    SubprocessOracle,
};
use dmin_core::{Dataset, Error, Result};

/// Where predictions come from, as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    /// Predictions stored in a column of the data file.
    Precomputed(String),
    Subprocess(String),
    Http(String),
    /// Train the reference model on the training split.
    Builtin,
    /// A reference model saved by an earlier `builtin` run.
    Model(String),
}

impl std::str::FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "builtin" {
            return Ok(OracleSpec::Builtin);
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(OracleSpec::Http(s.into()));
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("`{s}`: expected builtin, precomputed:COLUMN, subprocess:CMD, http:URL or model:PATH"))?;
        if rest.is_empty() {
            return Err(format!("`{s}`: nothing after `{kind}:`"));
        }
        match kind {
            "precomputed" => Ok(OracleSpec::Precomputed(rest.into())),
            "subprocess" => Ok(OracleSpec::Subprocess(rest.into())),
            "http" => Ok(OracleSpec::Http(rest.into())),
            "model" => Ok(OracleSpec::Model(rest.into())),
            _ => Err(format!("`{kind}` is not an oracle kind")),
        }
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Precomputed(c) => write!(f, "precomputed:{c}"),
            OracleSpec::Subprocess(c) => write!(f, "subprocess:{c}"),
            OracleSpec::Http(u) if u.starts_with("http://") || u.starts_with("https://") => write!(f, "{u}"),
            OracleSpec::Http(u) => write!(f, "http:{u}"),
            OracleSpec::Builtin => write!(f, "builtin"),
            OracleSpec::Model(p) => write!(f, "model:{p}"),
        }
    }
}

/// Reads one column of a CSV file as strings, in row order.
fn read_column(path: &Path, column: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(path)?);
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Config(format!("prediction column `{column}` not found in {}", path.display())))?;
    rdr.records()
        .map(|r| Ok(r?.get(idx).unwrap_or("").to_string()))
        .collect()
}

/// A lookup table from (imputed) records in `data` to the predictions in
/// `column`. Rows without a prediction are skipped.
pub fn precomputed(path: &Path, column: &str, schema: &Schema, input: &InputDoc) -> Result<PrecomputedOracle> {
    let preds = read_column(path, column)?;
    let mut ds = read_records_with_schema(open_input(path)?, schema, &input.missing)?;
    input.impute(schema, &mut ds.records)?;
    let mut records: Vec<Record> = Vec::new();
    let mut labels = Vec::new();
    for (row, (r, p)) in ds.records.into_iter().zip(&preds).enumerate() {
        if input.missing.iter().any(|m| m == p) {
            continue;
        }
        let label = schema.label.class_index(p).ok_or_else(|| Error::Parse {
            row: row + 1,
            column: column.to_string(),
            message: format!("prediction `{p}` is not a known class"),
        })?;
        records.push(r);
        labels.push(label);
    }
    Ok(PrecomputedOracle::keyed(schema.label.classes.clone(), &records, &labels))
}

pub struct Built {
    pub oracle: Box<dyn PredictionOracle>,
    /// Set when the reference model was trained in this run.
    pub trained: Option<ReferenceModel>,
}

pub struct Context<'a> {
    pub data: &'a Path,
    pub schema: &'a Schema,
    pub input: &'a InputDoc,
    /// Labelled training records; required by `builtin`.
    pub train: Option<&'a Dataset>,
    pub forest: ForestParams,
}

pub fn build(spec: &OracleSpec, ctx: &Context) -> Result<Built> {
    let oracle: Box<dyn PredictionOracle> = match spec {
        OracleSpec::Precomputed(column) => Box::new(precomputed(ctx.data, column, ctx.schema, ctx.input)?),
        OracleSpec::Subprocess(cmd) => Box::new(SubprocessOracle::spawn_command(cmd, ctx.schema.clone())?),
        OracleSpec::Http(url) => Box::new(HttpOracle::new(url.clone(), ctx.schema.clone())),
        OracleSpec::Model(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read model {path}: {e}")))?;
            let model: ReferenceModel = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{path} is not a saved reference model: {e}")))?;
            if model.classes != ctx.schema.label.classes {
                return Err(Error::Config(format!("{path} was trained for different classes")));
            }
            Box::new(model)
        }
        OracleSpec::Builtin => {
            let train = ctx
                .train
                .ok_or_else(|| Error::Config("the builtin oracle needs a training split".into()))?;
            if train.is_empty() {
                return Err(Error::Config("the builtin oracle needs a non-empty training split".into()));
            }
            let (model, report) = train_reference_model(train, &ctx.forest)?;
            log::info!("reference model training accuracy {:.4}", report.training_accuracy);
            return Ok(Built {
                oracle: Box::new(model.clone()),
                trained: Some(model),
            });
        }
    };
    Ok(Built { oracle, trained: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("builtin".parse(), Ok(OracleSpec::Builtin));
        assert_eq!("precomputed:pred".parse(), Ok(OracleSpec::Precomputed("pred".into())));
        assert_eq!(
            "subprocess:python3 m.py --x".parse(),
            Ok(OracleSpec::Subprocess("python3 m.py --x".into()))
        );
        assert_eq!(
            "http://localhost:9/p".parse::<OracleSpec>().map(|s| s.to_string()),
            Ok("http://localhost:9/p".to_string())
        );
        assert!("precomputed:".parse::<OracleSpec>().is_err());
        assert!("magic:x".parse::<OracleSpec>().is_err());
        assert!("nothing".parse::<OracleSpec>().is_err());
    }

    #[test]
    fn http_spec_keeps_the_url() {
        assert_eq!(
            "http:http://127.0.0.1:8/predict".parse(),
            Ok(OracleSpec::Http("http://127.0.0.1:8/predict".into()))
        );
        assert_eq!(
            "https://example.org/p".parse(),
            Ok(OracleSpec::Http("https://example.org/p".into()))
        );
    }
}
