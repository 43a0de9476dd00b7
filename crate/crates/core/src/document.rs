//! The result document: everything needed to apply, evaluate, or serve a
//! frozen generalization, plus the run's trace and reports. Stored as JSON.
//!
//! Categories appear by name, feature maps follow schema order, and numbers
//! use the shortest round-trip form, so equal results give equal bytes.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, FeatureKind, Record, Schema};
use crate::error::{Error, Result};
use crate::generalization::{
    cluster_profiles, Constraint, FeatureGeneralization, FeatureStatus, Generalization, GeneralizationModel, Interval,
    Recoding,
};
use crate::metrics::{AccuracyReport, NcpReport};
use crate::minimizer::{Action, MinimizationResult, Outcome, TraceRow};
use crate::tree::GeneralizerTree;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format_version: u32,
    /// The effective configuration of the run that produced the document.
    #[serde(default)]
    pub config: serde_json::Value,
    pub schema: Schema,
    #[serde(default)]
    pub input: InputDoc,
    pub generalization: GeneralizationDoc,
    pub clusters: Vec<ClusterDoc>,
    pub tree: GeneralizerTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ncp: Option<NcpSection>,
}

/// How raw CSV input is read before the model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDoc {
    /// Cell strings that count as missing.
    pub missing: Vec<String>,
    /// Fill value per feature for missing cells.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub imputation: IndexMap<String, serde_json::Value>,
}

impl Default for InputDoc {
    fn default() -> Self {
        InputDoc {
            missing: vec![String::new()],
            imputation: IndexMap::new(),
        }
    }
}

impl InputDoc {
    pub fn new(schema: &Schema, missing: Vec<String>, fills: &[Cell]) -> Self {
        InputDoc {
            missing,
            imputation: schema
                .features
                .iter()
                .zip(fills)
                .map(|(f, &c)| (f.name.clone(), f.cell_to_json(c)))
                .collect(),
        }
    }

    /// Replaces missing cells with the recorded fill values. Missing cells
    /// of features without a fill are left alone.
    pub fn impute(&self, schema: &Schema, records: &mut [Record]) -> Result<()> {
        let fills = schema
            .features
            .iter()
            .map(|f| match self.imputation.get(&f.name) {
                Some(v) => f.cell_from_json(v).map_err(malformed),
                None => Ok(Cell::Missing),
            })
            .collect::<Result<Vec<Cell>>>()?;
        for r in records {
            for (cell, fill) in r.0.iter_mut().zip(&fills) {
                if cell.is_missing() {
                    *cell = *fill;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationDoc {
    pub recoding: Recoding,
    pub features: IndexMap<String, FeatureDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDoc {
    pub status: FeatureStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<Vec<Interval>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintDoc {
    Range(Interval),
    Categories { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub id: usize,
    /// Only the features the cluster's path constrains.
    pub features: IndexMap<String, ConstraintDoc>,
    pub representative: IndexMap<String, serde_json::Value>,
    pub majority_label: String,
    pub class_counts: IndexMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub step: usize,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    pub ncp: f64,
    pub relative_accuracy: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySection {
    pub optimization: AccuracyReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<AccuracyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcpSection {
    pub gcp: f64,
    pub per_feature: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_gcp: Option<f64>,
}

impl NcpSection {
    pub fn from_report(schema: &Schema, report: &NcpReport) -> Self {
        NcpSection {
            gcp: report.gcp,
            per_feature: schema
                .features
                .iter()
                .zip(&report.per_feature)
                .map(|(f, v)| (f.name.clone(), *v))
                .collect(),
            validation_gcp: None,
        }
    }
}

fn trace_doc(schema: &Schema, row: &TraceRow) -> TraceDoc {
    let (action, feature) = match row.action {
        Action::Fit => ("fit", None),
        Action::Prune => ("prune", None),
        Action::Rollback => ("rollback", None),
        Action::Remove(j) => ("remove", Some(schema.features[j].name.clone())),
    };
    TraceDoc {
        step: row.step,
        action: action.to_string(),
        feature,
        ncp: row.ncp,
        relative_accuracy: row.relative_accuracy,
        clusters: row.clusters,
    }
}

fn malformed(message: impl std::fmt::Display) -> Error {
    Error::Config(format!("malformed result document: {message}"))
}

impl ResultDocument {
    /// The frozen part of a document: schema, generalization, clusters, tree.
    pub fn from_model(model: &GeneralizationModel) -> Self {
        let schema = &model.schema;
        let features = schema
            .features
            .iter()
            .zip(&model.generalization.features)
            .map(|(f, g)| {
                let doc = match g {
                    FeatureGeneralization::Ranges(r) => FeatureDoc {
                        status: FeatureStatus::Generalized,
                        ranges: Some(r.clone()),
                        groups: None,
                    },
                    FeatureGeneralization::Groups(gs) => FeatureDoc {
                        status: FeatureStatus::Generalized,
                        ranges: None,
                        groups: Some(
                            gs.iter()
                                .map(|g| g.iter().map(|&c| f.category_name(c).to_string()).collect())
                                .collect(),
                        ),
                    },
                    other => FeatureDoc {
                        status: other.status(),
                        ranges: None,
                        groups: None,
                    },
                };
                (f.name.clone(), doc)
            })
            .collect();
        let clusters = model
            .profiles
            .iter()
            .map(|p| ClusterDoc {
                id: p.cluster,
                features: schema
                    .features
                    .iter()
                    .zip(&p.constraints)
                    .filter_map(|(f, c)| {
                        let doc = match c.as_ref()? {
                            Constraint::Range(iv) => ConstraintDoc::Range(*iv),
                            Constraint::Categories(cs) => ConstraintDoc::Categories {
                                categories: cs.iter().map(|&c| f.category_name(c).to_string()).collect(),
                            },
                        };
                        Some((f.name.clone(), doc))
                    })
                    .collect(),
                representative: match &p.representative {
                    Some(r) => schema
                        .features
                        .iter()
                        .zip(r.cells())
                        .map(|(f, &c)| (f.name.clone(), f.cell_to_json(c)))
                        .collect(),
                    None => IndexMap::new(),
                },
                majority_label: schema.label.classes[p.majority as usize].clone(),
                class_counts: schema
                    .label
                    .classes
                    .iter()
                    .cloned()
                    .zip(p.class_counts.iter().copied())
                    .collect(),
            })
            .collect();
        ResultDocument {
            format_version: FORMAT_VERSION,
            config: serde_json::Value::Null,
            schema: schema.clone(),
            input: InputDoc::default(),
            generalization: GeneralizationDoc {
                recoding: model.generalization.recoding,
                features,
            },
            clusters,
            tree: model.tree.clone(),
            outcome: None,
            trace: Vec::new(),
            accuracy: None,
            ncp: None,
        }
    }

    /// Full document for a minimization run. `validation` carries the
    /// held-out reports when a validation split was evaluated.
    pub fn from_result(
        result: &MinimizationResult,
        config: serde_json::Value,
        validation: Option<&(AccuracyReport, NcpReport)>,
    ) -> Self {
        let schema = &result.model.schema;
        let mut doc = ResultDocument::from_model(&result.model);
        doc.config = config;
        doc.outcome = Some(result.outcome);
        doc.trace = result.trace.iter().map(|r| trace_doc(schema, r)).collect();
        doc.accuracy = Some(AccuracySection {
            optimization: result.accuracy,
            validation: validation.map(|v| v.0),
        });
        let mut ncp = NcpSection::from_report(schema, &result.ncp);
        ncp.validation_gcp = validation.map(|v| v.1.gcp);
        doc.ncp = Some(ncp);
        doc
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ResultDocument = serde_json::from_str(text).map_err(malformed)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(malformed(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read result document {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    /// Rebuilds the frozen model, checking the document against itself.
    pub fn to_model(&self) -> Result<GeneralizationModel> {
        let schema = &self.schema;
        if self.tree.n_features != schema.n_features() || self.tree.n_classes != schema.n_classes() {
            return Err(malformed("tree and schema disagree on shape"));
        }
        let names: Vec<&String> = self.generalization.features.keys().collect();
        if names.len() != schema.n_features() || names.iter().zip(&schema.features).any(|(n, f)| **n != f.name) {
            return Err(malformed("generalization features do not match the schema"));
        }
        for split in self.tree.root.splits() {
            let f = split.feature();
            let ok = match (split, schema.features.get(f).map(|f| &f.kind)) {
                (crate::tree::Split::LessEqual { .. }, Some(FeatureKind::Numeric { .. })) => true,
                (crate::tree::Split::Equals { category, .. }, Some(FeatureKind::Categorical { values })) => {
                    (*category as usize) < values.len()
                }
                _ => false,
            };
            if !ok {
                return Err(malformed(format!("tree tests feature {f} inconsistently with the schema")));
            }
        }
        let features = schema
            .features
            .iter()
            .zip(self.generalization.features.values())
            .map(|(f, doc)| {
                Ok(match doc.status {
                    FeatureStatus::Untouched => FeatureGeneralization::Untouched,
                    FeatureStatus::Suppressed => FeatureGeneralization::Suppressed,
                    FeatureStatus::Generalized => match (&f.kind, &doc.ranges, &doc.groups) {
                        (FeatureKind::Numeric { .. }, Some(r), None) if !r.is_empty() => {
                            FeatureGeneralization::Ranges(r.clone())
                        }
                        (FeatureKind::Categorical { .. }, None, Some(gs)) if !gs.is_empty() => {
                            FeatureGeneralization::Groups(
                                gs.iter()
                                    .map(|g| {
                                        g.iter()
                                            .map(|name| {
                                                f.category_index(name).ok_or_else(|| {
                                                    malformed(format!("`{}`: unknown category `{name}`", f.name))
                                                })
                                            })
                                            .collect::<Result<Vec<u32>>>()
                                    })
                                    .collect::<Result<_>>()?,
                            )
                        }
                        _ => return Err(malformed(format!("`{}`: generalization does not fit its kind", f.name))),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut profiles = cluster_profiles(&self.tree, schema);
        if profiles.len() != self.clusters.len() {
            return Err(malformed(format!(
                "{} clusters listed for a tree with {} leaves",
                self.clusters.len(),
                profiles.len()
            )));
        }
        for (p, c) in profiles.iter_mut().zip(&self.clusters) {
            if c.id != p.cluster {
                return Err(malformed(format!("cluster {} listed out of order", c.id)));
            }
            let cells = schema
                .features
                .iter()
                .map(|f| {
                    let v = c
                        .representative
                        .get(&f.name)
                        .ok_or_else(|| malformed(format!("cluster {}: no representative value for `{}`", c.id, f.name)))?;
                    let cell = f.cell_from_json(v).map_err(malformed)?;
                    if cell == Cell::Missing || !f.contains(cell) {
                        return Err(malformed(format!("cluster {}: bad representative value for `{}`", c.id, f.name)));
                    }
                    Ok(cell)
                })
                .collect::<Result<Vec<Cell>>>()?;
            p.representative = Some(Record(cells));
        }
        Ok(GeneralizationModel {
            schema: schema.clone(),
            tree: self.tree.clone(),
            profiles,
            generalization: Generalization {
                features,
                recoding: self.generalization.recoding,
            },
        })
    }

    /// Trace rows as CSV, ready for an accuracy-versus-NCP plot.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "action", "feature", "ncp", "relative_accuracy", "clusters"])?;
        for r in &self.trace {
            w.write_record([
                r.step.to_string(),
                r.action.clone(),
                r.feature.clone().unwrap_or_default(),
                r.ncp.to_string(),
                r.relative_accuracy.to_string(),
                r.clusters.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
