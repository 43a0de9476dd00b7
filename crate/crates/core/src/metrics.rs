//! Information loss (NCP and its dataset aggregate GCP), relative accuracy,
//! the ILAG removal score, and identity-disclosure risk.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::{Cell, Record};
use crate::error::{Error, Result};
use crate::generalization::{Constraint, FeatureGeneralization, GeneralizationModel, Interval, Recoding};
use crate::oracle::{predict, PredictionOracle};

/// NCP of a numeric range: its width over the domain width. A zero-width
/// domain carries no information, so its NCP is 0.
pub fn ncp_numeric(range: &Interval, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        0.0
    } else {
        range.width() / width
    }
}

/// NCP of a category group: 0 for a single category (nothing generalized),
/// otherwise the share of the domain it covers.
pub fn ncp_categorical(group_size: usize, domain_size: usize) -> Result<f64> {
    if group_size == 0 {
        return Err(Error::Domain("empty category group".into()));
    }
    if group_size > domain_size {
        return Err(Error::Domain(format!(
            "group of {group_size} categories exceeds a domain of {domain_size}"
        )));
    }
    Ok(if group_size == 1 {
        0.0
    } else {
        group_size as f64 / domain_size as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcpReport {
    /// Mean NCP of each feature over the records.
    pub per_feature: Vec<f64>,
    /// Weighted average NCP of each record.
    pub per_record: Vec<f64>,
    /// Mean of `per_record`.
    pub gcp: f64,
    pub weights: Vec<f64>,
}

fn check_weights(weights: &[f64], n_features: usize) -> Result<()> {
    if weights.len() != n_features {
        return Err(Error::Domain(format!(
            "{} weights for {n_features} features",
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Domain("weights must be non-negative and finite".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Domain("weights are all zero".into()));
    }
    Ok(())
}

/// NCP of every (record, feature) cell under the model's generalization,
/// aggregated per record with `weights` (uniform when `None`) and averaged
/// into the GCP. Untouched features score 0 and suppressed ones 1. A
/// generalized feature scores the range or group holding the record's value
/// (global recoding) or its cluster's constraint (local recoding).
pub fn ncp_dataset(model: &GeneralizationModel, records: &[Record], weights: Option<&[f64]>) -> Result<NcpReport> {
    let schema = &model.schema;
    let n_features = schema.n_features();
    let weights = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n_features],
    };
    check_weights(&weights, n_features)?;
    if records.is_empty() {
        return Err(Error::Domain("NCP of an empty record set".into()));
    }
    let weight_sum: f64 = weights.iter().sum();
    let mut per_feature = vec![0.0; n_features];
    let mut per_record = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let profile = match model.generalization.recoding {
            Recoding::Local => Some(&model.profiles[model.route(r)]),
            Recoding::Global => None,
        };
        let mut acc = 0.0;
        for (j, fg) in model.generalization.features.iter().enumerate() {
            let feature = &schema.features[j];
            let cell = r.get(j);
            let inconsistent = || Error::Consistency(format!("record {i}: `{}` value outside every range", feature.name));
            let ncp = match fg {
                FeatureGeneralization::Untouched => 0.0,
                FeatureGeneralization::Suppressed => 1.0,
                generalized => match profile {
                    Some(p) => match &p.constraints[j] {
                        None => 1.0,
                        Some(Constraint::Range(iv)) => {
                            let width = feature.width().unwrap_or(0.0);
                            ncp_numeric(iv, 0.0, width)
                        }
                        Some(Constraint::Categories(cs)) => {
                            ncp_categorical(cs.len(), feature.cardinality().unwrap_or(0))?
                        }
                    },
                    None => match (generalized, cell) {
                        (FeatureGeneralization::Ranges(ranges), Cell::Num(v)) => {
                            let iv = ranges.iter().find(|iv| iv.contains(v)).ok_or_else(inconsistent)?;
                            let width = feature.width().unwrap_or(0.0);
                            ncp_numeric(iv, 0.0, width)
                        }
                        (FeatureGeneralization::Groups(groups), Cell::Cat(c)) => {
                            let g = groups.iter().find(|g| g.contains(&c)).ok_or_else(inconsistent)?;
                            ncp_categorical(g.len(), feature.cardinality().unwrap_or(0))?
                        }
                        _ => return Err(inconsistent()),
                    },
                },
            };
            per_feature[j] += ncp;
            acc += weights[j] * ncp;
        }
        per_record.push(acc / weight_sum);
    }
    let n = records.len() as f64;
    for v in &mut per_feature {
        *v /= n;
    }
    let gcp = per_record.iter().sum::<f64>() / n;
    Ok(NcpReport {
        per_feature,
        per_record,
        gcp,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub matches: usize,
    pub total: usize,
    pub relative_accuracy: f64,
}

/// Share of predictions on generalized data that agree with predictions on
/// the original data. An empty comparison counts as full agreement.
pub fn accuracy_from_predictions(original: &[u32], generalized: &[u32]) -> Result<AccuracyReport> {
    if original.len() != generalized.len() {
        return Err(Error::Domain(format!(
            "{} original predictions vs {} generalized",
            original.len(),
            generalized.len()
        )));
    }
    let matches = original.iter().zip(generalized).filter(|(a, b)| a == b).count();
    let total = original.len();
    Ok(AccuracyReport {
        matches,
        total,
        relative_accuracy: if total == 0 { 1.0 } else { matches as f64 / total as f64 },
    })
}

pub fn relative_accuracy<O: PredictionOracle + ?Sized>(
    oracle: &O,
    original: &[Record],
    generalized: &[Record],
) -> Result<AccuracyReport> {
    if original.len() != generalized.len() {
        return Err(Error::Domain(format!(
            "{} original records vs {} generalized",
            original.len(),
            generalized.len()
        )));
    }
    let a = predict(oracle, original)?;
    let b = predict(oracle, generalized)?;
    accuracy_from_predictions(&a, &b)
}

/// Information loss per unit of accuracy gain. Falls back to the NCP itself
/// when the gain is zero. Negative gains give negative scores.
pub fn ilag(ncp: f64, accuracy_gain: f64) -> f64 {
    if accuracy_gain != 0.0 {
        ncp / accuracy_gain
    } else {
        ncp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk: f64,
    pub distinct: usize,
    pub records: usize,
}

/// Identity-disclosure risk of a set of quasi-identifier keys: the mean over
/// records of 1/frequency of the record's key within the set.
pub fn risk_from_keys<K: Hash + Eq>(keys: impl IntoIterator<Item = K>) -> Result<RiskReport> {
    let keys: Vec<K> = keys.into_iter().collect();
    if keys.is_empty() {
        return Err(Error::Domain("disclosure risk of an empty dataset".into()));
    }
    let mut freq: HashMap<&K, usize> = HashMap::new();
    for k in &keys {
        *freq.entry(k).or_default() += 1;
    }
    let sum: f64 = keys.iter().map(|k| 1.0 / freq[k] as f64).sum();
    Ok(RiskReport {
        risk: sum / keys.len() as f64,
        distinct: freq.len(),
        records: keys.len(),
    })
}

pub fn disclosure_risk(records: &[Record], quasi_identifiers: &[usize]) -> Result<f64> {
    Ok(disclosure_report(records, quasi_identifiers)?.risk)
}

pub fn disclosure_report(records: &[Record], quasi_identifiers: &[usize]) -> Result<RiskReport> {
    risk_from_keys(
        records
            .iter()
            .map(|r| quasi_identifiers.iter().map(|&j| r.get(j)).collect::<Vec<Cell>>()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Feature, LabelSchema, Schema};
    use crate::generalization::{Generalization, GeneralizationModel};
    use crate::tree::{GeneralizerTree, Leaf, Node, Split};

    #[test]
    fn numeric_ncp_examples() {
        assert!((ncp_numeric(&Interval::closed(20.0, 30.0), 0.0, 120.0) - 10.0 / 120.0).abs() < 1e-15);
        assert_eq!(ncp_numeric(&Interval::closed(0.0, 120.0), 0.0, 120.0), 1.0);
        assert_eq!(ncp_numeric(&Interval::closed(25.0, 25.0), 0.0, 120.0), 0.0);
        assert_eq!(ncp_numeric(&Interval::closed(3.0, 3.0), 3.0, 3.0), 0.0);
    }

    #[test]
    fn categorical_ncp_examples() {
        assert_eq!(ncp_categorical(1, 6).unwrap(), 0.0);
        assert_eq!(ncp_categorical(3, 6).unwrap(), 0.5);
        assert_eq!(ncp_categorical(6, 6).unwrap(), 1.0);
        assert!(matches!(ncp_categorical(0, 6), Err(Error::Domain(_))));
    }

    #[test]
    fn ilag_examples() {
        assert!((ilag(0.4, 0.02) - 20.0).abs() < 1e-12);
        assert_eq!(ilag(0.4, 0.0), 0.4);
        assert!((ilag(0.4, -0.02) + 20.0).abs() < 1e-12);
        assert!(ilag(0.4, -0.02) < ilag(0.01, 0.5));
    }

    #[test]
    fn risk_examples() {
        let unique: Vec<Record> = (0..5).map(|i| Record(vec![Cell::Cat(i)])).collect();
        assert_eq!(disclosure_risk(&unique, &[0]).unwrap(), 1.0);
        let same: Vec<Record> = (0..4).map(|_| Record(vec![Cell::Cat(0)])).collect();
        assert_eq!(disclosure_risk(&same, &[0]).unwrap(), 0.25);
        let abc: Vec<Record> = [0, 0, 1, 2].iter().map(|&c| Record(vec![Cell::Cat(c)])).collect();
        assert!((disclosure_risk(&abc, &[0]).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(disclosure_risk(&[], &[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn accuracy_counts() {
        let r = accuracy_from_predictions(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap();
        assert_eq!((r.matches, r.total), (3, 4));
        assert_eq!(r.relative_accuracy, 0.75);
        assert!(accuracy_from_predictions(&[0], &[]).is_err());
    }

    fn halves_model() -> (GeneralizationModel, Vec<Record>) {
        // age split at 50 over [0, 100]; color never tested (suppressed).
        let schema = Schema {
            features: vec![Feature::numeric("age", 0.0, 100.0), Feature::categorical("color", ["r", "g"])],
            label: LabelSchema {
                name: "y".into(),
                classes: vec!["0".into(), "1".into()],
            },
        };
        let leaf = |cluster, counts: Vec<u64>, majority| {
            Box::new(Node::Leaf(Leaf {
                cluster,
                class_counts: counts,
                majority,
                unsplittable: false,
                depth_capped: false,
            }))
        };
        let tree = GeneralizerTree {
            root: Node::Internal {
                split: Split::LessEqual {
                    feature: 0,
                    threshold: 50.0,
                },
                left: leaf(0, vec![2, 0], 0),
                right: leaf(1, vec![0, 2], 1),
            },
            n_features: 2,
            n_classes: 2,
            level: 0,
        };
        let recs: Vec<Record> = [(10.0, 0), (40.0, 1), (60.0, 0), (90.0, 1)]
            .iter()
            .map(|&(a, c)| Record(vec![Cell::Num(a), Cell::Cat(c)]))
            .collect();
        let model = GeneralizationModel::build(&schema, tree, &[false, false], &recs, &[0, 0, 1, 1]).unwrap();
        (model, recs)
    }

    #[test]
    fn gcp_of_halves_and_suppression() {
        let (model, recs) = halves_model();
        let report = ncp_dataset(&model, &recs, None).unwrap();
        assert_eq!(report.per_feature, vec![0.5, 1.0]);
        assert!((report.gcp - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gcp_extremes() {
        let (mut model, recs) = halves_model();
        model.generalization.features[0] = FeatureGeneralization::Suppressed;
        assert_eq!(ncp_dataset(&model, &recs, None).unwrap().gcp, 1.0);
        model.generalization = Generalization::identity(2);
        assert_eq!(ncp_dataset(&model, &recs, None).unwrap().gcp, 0.0);
    }

    #[test]
    fn weighted_gcp() {
        let (model, recs) = halves_model();
        let report = ncp_dataset(&model, &recs, Some(&[3.0, 1.0])).unwrap();
        assert!((report.gcp - (3.0 * 0.5 + 1.0) / 4.0).abs() < 1e-12);
        assert!(ncp_dataset(&model, &recs, Some(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn local_recoding_uses_cluster_constraints() {
        let (mut model, recs) = halves_model();
        model.generalization.recoding = Recoding::Local;
        let report = ncp_dataset(&model, &recs, None).unwrap();
        // Cluster ranges are [0,50] and (50,100]; color unconstrained.
        assert_eq!(report.per_feature, vec![0.5, 1.0]);
    }

    #[test]
    fn value_outside_ranges_is_inconsistent() {
        let (model, _) = halves_model();
        let bad = vec![Record(vec![Cell::Num(150.0), Cell::Cat(0)])];
        assert!(matches!(ncp_dataset(&model, &bad, None), Err(Error::Consistency(_))));
    }
}
