use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictionOracle;
use crate::data::{argmax_first, Dataset, Record};
use crate::error::{OracleError, Result};
use crate::tree::{grow_tree, Node, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 10,
            max_depth: 12,
            seed: 0,
        }
    }
}

/// Bagged Gini trees with majority voting (ties to the lowest class index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub classes: Vec<String>,
    pub params: ForestParams,
    pub trees: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub training_accuracy: f64,
    /// All training labels were the same class; the model is constant.
    pub degenerate: bool,
}

impl ReferenceModel {
    pub fn vote(&self, record: &Record) -> u32 {
        let mut votes = vec![0usize; self.classes.len()];
        for tree in &self.trees {
            votes[tree.leaf_for(record).majority as usize] += 1;
        }
        argmax_first(&votes) as u32
    }
}

impl PredictionOracle for ReferenceModel {
    fn class_labels(&self) -> &[String] {
        &self.classes
    }

    fn predict_batch(&self, records: &[Record]) -> Result<Vec<u32>, OracleError> {
        Ok(records.iter().map(|r| self.vote(r)).collect())
    }
}

/// Trains the built-in reference classifier on labelled data. Each tree sees
/// a bootstrap sample drawn from a seeded stream, so results are reproducible.
pub fn train_reference_model(train: &Dataset, params: &ForestParams) -> Result<(ReferenceModel, TrainingReport)> {
    let labels = train.complete_labels()?;
    let n = train.len();
    let degenerate = labels.windows(2).all(|w| w[0] == w[1]);
    if degenerate {
        log::warn!("reference model training labels are a single class; the model is constant");
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_trees.max(1));
    for _ in 0..params.n_trees.max(1) {
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let records: Vec<Record> = sample.iter().map(|&i| train.records[i].clone()).collect();
        let y: Vec<u32> = sample.iter().map(|&i| labels[i]).collect();
        let (root, _) = grow_tree(&records, &y, &train.schema, &tree_params)?;
        trees.push(root);
    }
    let model = ReferenceModel {
        classes: train.schema.label.classes.clone(),
        params: *params,
        trees,
    };
    let correct = train
        .records
        .iter()
        .zip(&labels)
        .filter(|(r, &l)| model.vote(r) == l)
        .count();
    let report = TrainingReport {
        training_accuracy: correct as f64 / n as f64,
        degenerate,
    };
    Ok((model, report))
}
