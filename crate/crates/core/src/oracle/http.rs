use std::time::Duration;

use super::{parse_label, record_to_json, PredictionOracle};
use crate::data::{Record, Schema};
use crate::error::OracleError;

/// POSTs a JSON array of records to a URL and expects a JSON array of labels,
/// one per record, in order.
pub struct HttpOracle {
    url: String,
    schema: Schema,
    agent: ureq::Agent,
}

impl HttpOracle {
    pub fn new(url: impl Into<String>, schema: Schema) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build();
        HttpOracle {
            url: url.into(),
            schema,
            agent,
        }
    }
}

impl PredictionOracle for HttpOracle {
    fn class_labels(&self) -> &[String] {
        &self.schema.label.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        let body: Vec<serde_json::Value> =
            records.iter().map(|r| record_to_json(&self.schema.features, r)).collect();
        let response = self
            .agent
            .post(&self.url)
            .send_json(serde_json::Value::Array(body))
            .map_err(|e| OracleError::Unavailable(format!("{}: {e}", self.url)))?;
        let labels: Vec<serde_json::Value> = response
            .into_json()
            .map_err(|e| OracleError::Protocol(format!("response is not a JSON array: {e}")))?;
        labels
            .iter()
            .map(|v| match v {
                serde_json::Value::String(s) => parse_label(&self.schema.label.classes, s),
                other => parse_label(&self.schema.label.classes, &other.to_string()),
            })
            .collect()
    }
}
