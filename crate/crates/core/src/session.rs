//! Personalized minimization: a data subject discloses one feature at a
//! time, choosing among coarse options, and every answer narrows what the
//! remaining features still need to say.
//!
//! The session tracks the clusters still consistent with the answers. A
//! feature's options are the regions of its domain that split those
//! clusters differently; regions that no surviving cluster tells apart are
//! merged, and a feature that no longer separates anything is not needed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Cell, FeatureKind};
use crate::generalization::{full_domain, Constraint, FeatureStatus, GeneralizationModel, Interval};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("{0}")]
    Protocol(String),
}

/// What a data subject disclosed about one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disclosure {
    Range(Interval),
    Group { categories: Vec<String> },
    /// Declined, or not needed.
    Any,
    /// Exact value; only for features collected exactly.
    Value { value: serde_json::Value },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferMode {
    /// Pick one of `options` (or decline).
    Choose,
    /// The feature is collected exactly: send the value (or decline).
    Exact,
    /// Nothing to ask: the answer would not change the outcome.
    NotNeeded,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferOption {
    pub id: String,
    pub label: String,
    #[serde(flatten)]
    pub disclosure: Disclosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOffer {
    pub feature: String,
    pub mode: OfferMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<OfferOption>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Option(String),
    Value(Cell),
    Decline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub feature: String,
    #[serde(flatten)]
    pub disclosure: Disclosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finalized {
    pub label: String,
    pub surviving_clusters: Vec<usize>,
    pub transcript: Vec<TranscriptEntry>,
}

/// A candidate option with the surviving clusters it keeps.
struct Candidate {
    option: OfferOption,
    clusters: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Session {
    model: Arc<GeneralizationModel>,
    surviving: Vec<usize>,
    transcript: Vec<(usize, Disclosure)>,
}

impl Session {
    pub fn new(model: Arc<GeneralizationModel>) -> Self {
        let surviving = (0..model.profiles.len()).collect();
        Session {
            model,
            surviving,
            transcript: Vec::new(),
        }
    }

    pub fn model(&self) -> &GeneralizationModel {
        &self.model
    }

    /// Ids of the clusters consistent with every answer so far, ascending.
    pub fn surviving(&self) -> &[usize] {
        &self.surviving
    }

    fn is_answered(&self, feature: usize) -> bool {
        self.transcript.iter().any(|(f, _)| *f == feature)
    }

    fn constraint(&self, cluster: usize, feature: usize) -> Constraint {
        self.model.profiles[cluster].constraints[feature]
            .clone()
            .unwrap_or_else(|| full_domain(&self.model.schema, feature))
    }

    fn candidates(&self, feature: usize) -> Vec<Candidate> {
        let f = &self.model.schema.features[feature];
        match &f.kind {
            FeatureKind::Numeric { lo, hi } => {
                let mut cuts = vec![*lo, *hi];
                for &c in &self.surviving {
                    if let Constraint::Range(iv) = self.constraint(c, feature) {
                        cuts.extend([iv.start, iv.end].into_iter().filter(|v| lo <= v && v <= hi));
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let pieces: Vec<Interval> = if cuts.len() == 1 {
                    vec![Interval::closed(cuts[0], cuts[0])]
                } else {
                    cuts.windows(2)
                        .enumerate()
                        .map(|(i, w)| {
                            if i == 0 {
                                Interval::closed(w[0], w[1])
                            } else {
                                Interval::left_open(w[0], w[1])
                            }
                        })
                        .collect()
                };
                let mut merged: Vec<(Interval, Vec<usize>)> = Vec::new();
                for piece in pieces {
                    let sig: Vec<usize> = self
                        .surviving
                        .iter()
                        .copied()
                        .filter(|&c| self.constraint(c, feature).admits(Cell::Num(piece.end)))
                        .collect();
                    if sig.is_empty() {
                        continue;
                    }
                    match merged.last_mut() {
                        Some((prev, prev_sig)) if *prev_sig == sig && prev.end == piece.start => prev.end = piece.end,
                        _ => merged.push((piece, sig)),
                    }
                }
                merged
                    .into_iter()
                    .map(|(iv, clusters)| Candidate {
                        option: OfferOption {
                            id: format!("r:{}:{}", iv.start, iv.end),
                            label: format!(
                                "{}{}, {}]",
                                if iv.open_start { "(" } else { "[" },
                                iv.start,
                                iv.end
                            ),
                            disclosure: Disclosure::Range(iv),
                        },
                        clusters,
                    })
                    .collect()
            }
            FeatureKind::Categorical { values } => {
                let mut groups: Vec<(Vec<u32>, Vec<usize>)> = Vec::new();
                for v in 0..values.len() as u32 {
                    let sig: Vec<usize> = self
                        .surviving
                        .iter()
                        .copied()
                        .filter(|&c| self.constraint(c, feature).admits(Cell::Cat(v)))
                        .collect();
                    if sig.is_empty() {
                        continue;
                    }
                    match groups.iter_mut().find(|(_, s)| *s == sig) {
                        Some((members, _)) => members.push(v),
                        None => groups.push((vec![v], sig)),
                    }
                }
                groups
                    .into_iter()
                    .map(|(members, clusters)| {
                        let names: Vec<String> = members.iter().map(|&c| f.category_name(c).to_string()).collect();
                        let ids: Vec<String> = members.iter().map(u32::to_string).collect();
                        Candidate {
                            option: OfferOption {
                                id: format!("g:{}", ids.join(",")),
                                label: names.join(", "),
                                disclosure: Disclosure::Group { categories: names },
                            },
                            clusters,
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn offer(&self, feature: usize) -> FeatureOffer {
        let name = self.model.schema.features[feature].name.clone();
        let (mode, options) = if self.is_answered(feature) {
            (OfferMode::Answered, Vec::new())
        } else {
            match self.model.generalization.status(feature) {
                FeatureStatus::Untouched => (OfferMode::Exact, Vec::new()),
                FeatureStatus::Suppressed => (OfferMode::NotNeeded, Vec::new()),
                FeatureStatus::Generalized => {
                    let candidates = self.candidates(feature);
                    if candidates.len() <= 1 {
                        (OfferMode::NotNeeded, Vec::new())
                    } else {
                        (OfferMode::Choose, candidates.into_iter().map(|c| c.option).collect())
                    }
                }
            }
        };
        FeatureOffer {
            feature: name,
            mode,
            options,
        }
    }

    /// One offer per feature, in schema order.
    pub fn offers(&self) -> Vec<FeatureOffer> {
        (0..self.model.schema.n_features()).map(|j| self.offer(j)).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, SessionError> {
        self.model
            .schema
            .feature_index(name)
            .ok_or_else(|| SessionError::UnknownFeature(name.to_string()))
    }

    pub fn answer(&mut self, feature: usize, answer: Answer) -> Result<(), SessionError> {
        let f = self
            .model
            .schema
            .features
            .get(feature)
            .ok_or_else(|| SessionError::UnknownFeature(feature.to_string()))?;
        let protocol = |m: String| Err(SessionError::Protocol(m));
        if self.is_answered(feature) {
            return protocol(format!("`{}` was already answered", f.name));
        }
        let status = self.model.generalization.status(feature);
        let disclosure = match answer {
            Answer::Decline => Disclosure::Any,
            Answer::Option(id) => {
                if status != FeatureStatus::Generalized {
                    return protocol(format!("`{}` has no options to choose from", f.name));
                }
                let candidates = self.candidates(feature);
                if candidates.len() <= 1 {
                    return protocol(format!("`{}` is not needed; decline it instead", f.name));
                }
                let Some(chosen) = candidates.into_iter().find(|c| c.option.id == id) else {
                    return protocol(format!("option `{id}` is not currently offered for `{}`", f.name));
                };
                self.surviving = chosen.clusters;
                chosen.option.disclosure
            }
            Answer::Value(cell) => {
                if status != FeatureStatus::Untouched {
                    return protocol(format!(
                        "`{}` is not collected exactly; raw values are not accepted",
                        f.name
                    ));
                }
                if cell == Cell::Missing || !f.contains(cell) {
                    return protocol(format!("value outside the domain of `{}`", f.name));
                }
                let keep: Vec<usize> = self
                    .surviving
                    .iter()
                    .copied()
                    .filter(|&c| self.constraint(c, feature).admits(cell))
                    .collect();
                if keep.is_empty() {
                    return protocol(format!("value of `{}` contradicts earlier answers", f.name));
                }
                self.surviving = keep;
                Disclosure::Value {
                    value: f.cell_to_json(cell),
                }
            }
        };
        self.transcript.push((feature, disclosure));
        Ok(())
    }

    /// Whether every surviving cluster predicts the same label.
    pub fn is_resolved(&self) -> bool {
        let p = &self.model.profiles;
        self.surviving.windows(2).all(|w| p[w[0]].majority == p[w[1]].majority)
    }

    /// The label backed by the most training records across the surviving
    /// clusters (each cluster votes its size for its majority label; ties go
    /// to the lower class), and the disclosures in answer order.
    pub fn finalize(&self) -> Finalized {
        let schema = &self.model.schema;
        let mut votes = vec![0u64; schema.n_classes()];
        for &c in &self.surviving {
            let p = &self.model.profiles[c];
            votes[p.majority as usize] += p.size();
        }
        let label = crate::data::argmax_first(&votes);
        Finalized {
            label: schema.label.classes[label].clone(),
            surviving_clusters: self.surviving.clone(),
            transcript: self
                .transcript
                .iter()
                .map(|(f, d)| TranscriptEntry {
                    feature: schema.features[*f].name.clone(),
                    disclosure: d.clone(),
                })
                .collect(),
        }
    }
}
