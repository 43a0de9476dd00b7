//! The minimization loop.
//!
//! Fit a generalizer tree to the oracle's labels, derive the generalization,
//! and measure how many of the oracle's predictions survive on the
//! optimization split. If the target is met, coarsen by pruning the tree one
//! level at a time while the target still holds. If it is not, give features
//! back one at a time (the one with the lowest ILAG score first) until it is.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::generalization::{FeatureStatus, GeneralizationModel};
use crate::metrics::{accuracy_from_predictions, ilag, ncp_dataset, AccuracyReport, NcpReport};
use crate::oracle::{predict, Memoized, PredictionOracle};
use crate::tree::{GeneralizerTree, PruneOutcome, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizationConfig {
    /// Share of original predictions that must survive, in `[0, 1]`.
    pub target_accuracy: f64,
    pub tree: TreeParams,
    /// Safety cap on prune and removal steps combined.
    pub max_iterations: usize,
    /// Per-feature NCP weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for MinimizationConfig {
    fn default() -> Self {
        MinimizationConfig {
            target_accuracy: 0.98,
            tree: TreeParams::default(),
            max_iterations: 10_000,
            weights: None,
            seed: 0,
        }
    }
}

impl MinimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return Err(Error::Config(format!(
                "target accuracy {} is outside [0, 1]",
                self.target_accuracy
            )));
        }
        if self.tree.max_depth == 0 {
            return Err(Error::Config("tree depth cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Fit,
    Prune,
    /// The previous prune undershot the target and was undone.
    Rollback,
    Remove(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: Action,
    /// GCP on the optimization split.
    pub ncp: f64,
    pub relative_accuracy: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Stopped at the coarsest state meeting the target.
    TargetMet,
    /// Pruned to a single cluster and still met the target.
    AtRoot,
    /// Every feature is collected exactly.
    AllUntouched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationResult {
    pub model: GeneralizationModel,
    /// On the optimization split.
    pub accuracy: AccuracyReport,
    /// On the optimization split.
    pub ncp: NcpReport,
    pub trace: Vec<TraceRow>,
    pub outcome: Outcome,
    pub config: MinimizationConfig,
}

struct Evaluator<'a, O: ?Sized> {
    oracle: &'a O,
    records: &'a [Record],
    original: Vec<u32>,
    weights: Option<&'a [f64]>,
}

impl<O: PredictionOracle + ?Sized> Evaluator<'_, O> {
    fn accuracy(&self, model: &GeneralizationModel) -> Result<AccuracyReport> {
        let generalized = model.apply(self.records);
        let predicted = predict(self.oracle, &generalized)?;
        accuracy_from_predictions(&self.original, &predicted)
    }

    fn evaluate(&self, model: &GeneralizationModel) -> Result<(AccuracyReport, NcpReport)> {
        Ok((self.accuracy(model)?, ncp_dataset(model, self.records, self.weights)?))
    }

    fn gain(&self, model: &GeneralizationModel, feature: usize, base: f64) -> Result<f64> {
        if model.generalization.status(feature) == FeatureStatus::Untouched {
            return Ok(0.0);
        }
        let mut probe = model.clone();
        let _ = probe.generalization.remove_feature(feature);
        Ok(self.accuracy(&probe)?.relative_accuracy - base)
    }
}

/// Relative accuracy on `records` with `feature` collected exactly, minus the
/// current relative accuracy. Everything else, representatives included,
/// stays as it is, so gains for different features share one base state.
pub fn accuracy_gain<O: PredictionOracle + ?Sized>(
    model: &GeneralizationModel,
    feature: usize,
    records: &[Record],
    oracle: &O,
) -> Result<f64> {
    let eval = Evaluator {
        oracle,
        records,
        original: predict(oracle, records)?,
        weights: None,
    };
    let base = eval.accuracy(model)?.relative_accuracy;
    eval.gain(model, feature, base)
}

/// Runs the full loop. The oracle is queried through a cache, since the
/// generalized records repeat heavily.
pub fn minimize<O: PredictionOracle + ?Sized>(
    generalizer: &Dataset,
    optimize: &Dataset,
    oracle: &O,
    config: &MinimizationConfig,
) -> Result<MinimizationResult> {
    config.validate()?;
    if generalizer.is_empty() {
        return Err(Error::Domain("the generalizer split is empty".into()));
    }
    if optimize.is_empty() {
        return Err(Error::Domain("the optimization split is empty".into()));
    }
    let schema = &generalizer.schema;
    let oracle = Memoized::new(oracle);
    let labels = predict(&oracle, &generalizer.records)?;
    let eval = Evaluator {
        oracle: &oracle,
        records: &optimize.records,
        original: predict(&oracle, &optimize.records)?,
        weights: config.weights.as_deref(),
    };
    let target = config.target_accuracy;
    let none_untouched = vec![false; schema.n_features()];

    let tree = GeneralizerTree::fit(&generalizer.records, &labels, schema, &config.tree)?;
    let mut model = GeneralizationModel::build(schema, tree, &none_untouched, &generalizer.records, &labels)?;
    let (mut accuracy, mut ncp) = eval.evaluate(&model)?;
    let mut trace = Vec::new();
    let row = |trace: &mut Vec<TraceRow>, action, acc: &AccuracyReport, ncp: &NcpReport, clusters| {
        trace.push(TraceRow {
            step: trace.len(),
            action,
            ncp: ncp.gcp,
            relative_accuracy: acc.relative_accuracy,
            clusters,
        })
    };
    row(&mut trace, Action::Fit, &accuracy, &ncp, model.tree.n_clusters());
    let mut iterations = 0;
    let mut tick = |trace: &Vec<TraceRow>| {
        iterations += 1;
        if iterations > config.max_iterations {
            Err(Error::IterationCap {
                cap: config.max_iterations,
                trace: trace.clone(),
            })
        } else {
            Ok(())
        }
    };

    let outcome = if accuracy.relative_accuracy >= target {
        loop {
            tick(&trace)?;
            let mut tree = model.tree.clone();
            if tree.prune_level() == PruneOutcome::AtRoot {
                break Outcome::AtRoot;
            }
            let candidate = GeneralizationModel::build(schema, tree, &none_untouched, &generalizer.records, &labels)?;
            let (a, n) = eval.evaluate(&candidate)?;
            row(&mut trace, Action::Prune, &a, &n, candidate.tree.n_clusters());
            if a.relative_accuracy >= target {
                model = candidate;
                accuracy = a;
                ncp = n;
            } else {
                row(&mut trace, Action::Rollback, &accuracy, &ncp, model.tree.n_clusters());
                break Outcome::TargetMet;
            }
        }
    } else {
        loop {
            if accuracy.relative_accuracy >= target {
                break Outcome::TargetMet;
            }
            let candidates: Vec<usize> = (0..schema.n_features())
                .filter(|&j| model.generalization.status(j) != FeatureStatus::Untouched)
                .collect();
            if candidates.is_empty() {
                break Outcome::AllUntouched;
            }
            tick(&trace)?;
            let mut best: Option<(f64, usize)> = None;
            for &j in &candidates {
                let score = ilag(ncp.per_feature[j], eval.gain(&model, j, accuracy.relative_accuracy)?);
                log::debug!("feature `{}`: ILAG {score}", schema.features[j].name);
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, j));
                }
            }
            let (_, feature) = best.expect("at least one candidate");
            let mut untouched = model.generalization.untouched_mask();
            untouched[feature] = true;
            model = GeneralizationModel::build(schema, model.tree, &untouched, &generalizer.records, &labels)?;
            (accuracy, ncp) = eval.evaluate(&model)?;
            row(&mut trace, Action::Remove(feature), &accuracy, &ncp, model.tree.n_clusters());
        }
    };
    let outcome = if outcome == Outcome::TargetMet
        && model.statuses().iter().all(|s| *s == FeatureStatus::Untouched)
    {
        Outcome::AllUntouched
    } else {
        outcome
    };
    Ok(MinimizationResult {
        model,
        accuracy,
        ncp,
        trace,
        outcome,
        config: config.clone(),
    })
}

/// Applies a frozen model to held-out records: how many of the oracle's
/// predictions survive, and how much information is lost.
pub fn evaluate<O: PredictionOracle + ?Sized>(
    model: &GeneralizationModel,
    records: &[Record],
    oracle: &O,
    weights: Option<&[f64]>,
) -> Result<(AccuracyReport, NcpReport)> {
    let eval = Evaluator {
        oracle,
        records,
        original: predict(oracle, records)?,
        weights,
    };
    eval.evaluate(model)
}

pub fn validate<O: PredictionOracle + ?Sized>(
    result: &MinimizationResult,
    validation: &Dataset,
    oracle: &O,
) -> Result<(AccuracyReport, NcpReport)> {
    evaluate(&result.model, &validation.records, oracle, result.config.weights.as_deref())
}
