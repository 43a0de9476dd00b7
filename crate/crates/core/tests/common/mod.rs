//! Shared fixtures and brute-force reference implementations. The reference
//! code deliberately avoids the library's generalization and metric types:
//! it reads thresholds straight off the tree and counts frequencies by
//! pairwise comparison.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dmin_core::data::LabelSchema;
use dmin_core::generalization::GeneralizationModel;
use dmin_core::tree::{Node, Split};
use dmin_core::{Cell, Dataset, Feature, FeatureKind, Record, Schema};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random table with up to `max_features` features, mixed numeric (small
/// integer grids, so ties are common) and categorical. Labels are not set.
pub fn random_table(rng: &mut ChaCha8Rng, max_records: usize, max_features: usize) -> Dataset {
    let n_features = rng.gen_range(1..=max_features);
    let n = rng.gen_range(2..=max_records);
    let features: Vec<Feature> = (0..n_features)
        .map(|j| {
            if rng.gen_bool(0.6) {
                let lo = rng.gen_range(-20..=20) as f64;
                let span = rng.gen_range(0..=40) as f64;
                Feature::numeric(format!("n{j}"), lo, lo + span)
            } else {
                let k = rng.gen_range(1..=5);
                Feature::categorical(format!("c{j}"), (0..k).map(|c| format!("v{c}")))
            }
        })
        .collect();
    let records = (0..n)
        .map(|_| {
            Record(
                features
                    .iter()
                    .map(|f| match &f.kind {
                        FeatureKind::Numeric { lo, hi } => Cell::Num(rng.gen_range(*lo as i64..=*hi as i64) as f64),
                        FeatureKind::Categorical { values } => Cell::Cat(rng.gen_range(0..values.len() as u32)),
                    })
                    .collect(),
            )
        })
        .collect();
    let schema = Schema {
        features,
        label: LabelSchema {
            name: "y".into(),
            classes: vec!["a".into(), "b".into(), "c".into()],
        },
    };
    Dataset::new(schema, records, None)
}

/// A random decision rule over the table's features: a few random axis
/// tests combined into a class index.
pub fn random_rule(rng: &mut ChaCha8Rng, schema: &Schema) -> impl Fn(&Record) -> u32 + Send + Sync + Clone {
    let n_classes = rng.gen_range(2..=3u32);
    let tests: Vec<(usize, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let j = rng.gen_range(0..schema.n_features());
            let t = match &schema.features[j].kind {
                FeatureKind::Numeric { lo, hi } => rng.gen_range(*lo..=*hi),
                FeatureKind::Categorical { values } => rng.gen_range(0..values.len()) as f64,
            };
            (j, t)
        })
        .collect();
    move |r: &Record| {
        let bits = tests.iter().enumerate().fold(0u32, |acc, (i, &(j, t))| {
            let hit = match r.get(j) {
                Cell::Num(v) => v <= t,
                Cell::Cat(c) => c as f64 == t,
                Cell::Missing => false,
            };
            acc + ((hit as u32) << i)
        });
        bits % n_classes
    }
}

/// Split thresholds and tested categories per feature, read off the tree.
pub fn tree_tests(root: &Node, n_features: usize) -> (Vec<Vec<f64>>, Vec<BTreeSet<u32>>) {
    let mut thresholds = vec![Vec::new(); n_features];
    let mut categories = vec![BTreeSet::new(); n_features];
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if let Node::Internal { split, left, right } = node {
            match *split {
                Split::LessEqual { feature, threshold } => thresholds[feature].push(threshold),
                Split::Equals { feature, category } => {
                    categories[feature].insert(category);
                }
            }
            stack.push(left);
            stack.push(right);
        }
    }
    (thresholds, categories)
}

/// Global-recoding NCP of one cell, computed from the raw tree tests.
pub fn brute_ncp_cell(
    feature: &Feature,
    cell: Cell,
    untouched: bool,
    thresholds: &[f64],
    categories: &BTreeSet<u32>,
) -> f64 {
    if untouched {
        return 0.0;
    }
    match (&feature.kind, cell) {
        (FeatureKind::Numeric { lo, hi }, Cell::Num(v)) => {
            if thresholds.is_empty() {
                return 1.0;
            }
            let a = thresholds.iter().copied().filter(|&t| t < v).fold(*lo, f64::max);
            let b = thresholds.iter().copied().filter(|&t| t >= v).fold(*hi, f64::min);
            if hi > lo {
                (b - a) / (hi - lo)
            } else {
                0.0
            }
        }
        (FeatureKind::Categorical { values }, Cell::Cat(c)) => {
            if categories.is_empty() {
                return 1.0;
            }
            let size = if categories.contains(&c) {
                1
            } else {
                values.len() - categories.len()
            };
            if size == 1 {
                0.0
            } else {
                size as f64 / values.len() as f64
            }
        }
        _ => panic!("cell kind does not match the feature"),
    }
}

/// GCP by direct enumeration: a plain double loop over records and features.
pub fn brute_gcp(model: &GeneralizationModel, records: &[Record], untouched: &[bool], weights: &[f64]) -> f64 {
    let schema = &model.schema;
    let (thresholds, categories) = tree_tests(&model.tree.root, schema.n_features());
    let wsum: f64 = weights.iter().sum();
    let mut total = 0.0;
    for r in records {
        let mut rec = 0.0;
        for j in 0..schema.n_features() {
            rec += weights[j]
                * brute_ncp_cell(&schema.features[j], r.get(j), untouched[j], &thresholds[j], &categories[j]);
        }
        total += rec / wsum;
    }
    total / records.len() as f64
}

/// Disclosure risk by pairwise comparison.
pub fn brute_risk(records: &[Record], qi: &[usize]) -> f64 {
    let key = |r: &Record| qi.iter().map(|&j| r.get(j)).collect::<Vec<_>>();
    let mut total = 0.0;
    for a in records {
        let ka = key(a);
        let freq = records.iter().filter(|b| key(b) == ka).count();
        total += 1.0 / freq as f64;
    }
    total / records.len() as f64
}

/// Data with three features: `x` in [0, 99] decides the label, `z` in
/// [0, 9] and the category `c` are noise. Label 1 for `x >= 50`.
pub fn threshold_table(n: usize, seed: u64) -> (Dataset, impl Fn(&Record) -> u32 + Send + Sync + Clone) {
    let mut rng = rng(seed);
    let schema = Schema {
        features: vec![
            Feature::numeric("x", 0.0, 99.0),
            Feature::numeric("z", 0.0, 9.0),
            Feature::categorical("c", ["p", "q", "r"]),
        ],
        label: LabelSchema {
            name: "y".into(),
            classes: vec!["no".into(), "yes".into()],
        },
    };
    let records: Vec<Record> = (0..n)
        .map(|_| {
            Record(vec![
                Cell::Num(rng.gen_range(0..100) as f64),
                Cell::Num(rng.gen_range(0..10) as f64),
                Cell::Cat(rng.gen_range(0..3)),
            ])
        })
        .collect();
    let rule = |r: &Record| (r.get(0).as_num().unwrap() >= 50.0) as u32;
    let labels = records.iter().map(rule).collect();
    (Dataset::new(schema, records, Some(labels)), rule)
}
