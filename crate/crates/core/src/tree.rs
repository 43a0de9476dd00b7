//! Univariate binary decision trees grown with Gini impurity.
//!
//! The generalizer tree is grown until every leaf is label-homogeneous; its
//! leaves are the clusters that get generalized together. The same growth
//! routine, with a depth cap, backs the built-in reference model.

use serde::{Deserialize, Serialize};

use crate::data::{argmax_first, Cell, Record, Schema};
use crate::error::{Error, Result};

/// Node test. Records satisfying the test go left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum Split {
    /// `value <= threshold`
    LessEqual { feature: usize, threshold: f64 },
    /// `value == category`
    Equals { feature: usize, category: u32 },
}

impl Split {
    pub fn feature(&self) -> usize {
        match *self {
            Split::LessEqual { feature, .. } | Split::Equals { feature, .. } => feature,
        }
    }

    pub fn goes_left(&self, record: &Record) -> bool {
        match *self {
            Split::LessEqual { feature, threshold } => match record.get(feature) {
                Cell::Num(v) => v <= threshold,
                _ => false,
            },
            Split::Equals { feature, category } => record.get(feature) == Cell::Cat(category),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub cluster: usize,
    pub class_counts: Vec<u64>,
    pub majority: u32,
    /// Impure because the records here are identical on every feature.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unsplittable: bool,
    /// Impure because growth hit the depth cap.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub depth_capped: bool,
}

impl Leaf {
    fn from_counts(class_counts: Vec<u64>) -> Leaf {
        let majority = argmax_first(&class_counts) as u32;
        Leaf {
            cluster: 0,
            class_counts,
            majority,
            unsplittable: false,
            depth_capped: false,
        }
    }

    pub fn size(&self) -> u64 {
        self.class_counts.iter().sum()
    }

    pub fn is_pure(&self) -> bool {
        self.class_counts.iter().filter(|&&c| c > 0).count() <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Internal {
        split: Split,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf(Leaf),
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_for(&self, record: &Record) -> &Leaf {
        let mut node = self;
        loop {
            match node {
                Node::Leaf(leaf) => return leaf,
                Node::Internal { split, left, right } => {
                    node = if split.goes_left(record) { left } else { right };
                }
            }
        }
    }

    fn class_counts(&self) -> Vec<u64> {
        match self {
            Node::Leaf(l) => l.class_counts.clone(),
            Node::Internal { left, right, .. } => left
                .class_counts()
                .iter()
                .zip(right.class_counts())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |l| out.push(l));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut dyn FnMut(&'a Leaf)) {
        match self {
            Node::Leaf(l) => f(l),
            Node::Internal { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    /// Every split in the tree, pre-order.
    pub fn splits(&self) -> Vec<&Split> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a Split>) {
            if let Node::Internal { split, left, right } = n {
                out.push(split);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Numbers leaves left to right as clusters, starting at `*next`.
    pub fn number_leaves(&mut self, next: &mut usize) {
        match self {
            Node::Leaf(l) => {
                l.cluster = *next;
                *next += 1;
            }
            Node::Internal { left, right, .. } => {
                left.number_leaves(next);
                right.number_leaves(next);
            }
        }
    }

    /// Collapses every internal node whose children are both leaves, judged
    /// on the tree as it was before this pass.
    fn collapse_bottom(&mut self) {
        let Node::Internal { left, right, .. } = self else {
            return;
        };
        if matches!(**left, Node::Leaf(_)) && matches!(**right, Node::Leaf(_)) {
            *self = Node::Leaf(Leaf::from_counts(self.class_counts()));
        } else {
            left.collapse_bottom();
            right.collapse_bottom();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Safety cap on depth. Growth normally stops at purity long before this.
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 30 }
    }
}

// Candidate splits within this much weighted impurity count as tied.
const IMPURITY_EPS: f64 = 1e-9;

struct Grower<'a> {
    records: &'a [Record],
    labels: &'a [u32],
    n_classes: usize,
    // Per feature: Some(cardinality) for categorical, None for numeric.
    categorical: Vec<Option<usize>>,
    max_depth: usize,
    capped_leaves: usize,
}

fn weighted_gini(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_classes];
        for &i in idx {
            counts[self.labels[i] as usize] += 1;
        }
        counts
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> Node {
        let counts = self.counts(&idx);
        let mut leaf = Leaf::from_counts(counts.clone());
        if leaf.is_pure() {
            return Node::Leaf(leaf);
        }
        if depth >= self.max_depth {
            leaf.depth_capped = true;
            self.capped_leaves += 1;
            return Node::Leaf(leaf);
        }
        let Some(split) = self.best_split(&idx, &counts) else {
            leaf.unsplittable = true;
            return Node::Leaf(leaf);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| split.goes_left(&self.records[i]));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        Node::Internal {
            split,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Lowest weighted Gini over all non-trivial splits. Ties go to the lowest
    /// feature index, then the lowest threshold or category index. Zero-gain
    /// splits are allowed: purity, not impurity decrease, is the stop rule.
    fn best_split(&self, idx: &[usize], total: &[u64]) -> Option<Split> {
        let n = idx.len() as u64;
        let mut best: Option<(f64, Split)> = None;
        let consider = |score: f64, split: Split, best: &mut Option<(f64, Split)>| {
            if best.as_ref().is_none_or(|(b, _)| score < *b - IMPURITY_EPS) {
                *best = Some((score, split));
            }
        };
        let mut right = vec![0u64; self.n_classes];
        for (feature, cat) in self.categorical.iter().enumerate() {
            match cat {
                None => {
                    let mut pairs: Vec<(f64, u32)> = idx
                        .iter()
                        .filter_map(|&i| self.records[i].get(feature).as_num().map(|v| (v, self.labels[i])))
                        .collect();
                    if pairs.len() < idx.len() {
                        // Non-numeric cells in a numeric column; treat as unsplittable here.
                        continue;
                    }
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut left = vec![0u64; self.n_classes];
                    for k in 0..pairs.len() - 1 {
                        left[pairs[k].1 as usize] += 1;
                        if pairs[k].0 == pairs[k + 1].0 {
                            continue;
                        }
                        let nl = (k + 1) as u64;
                        for c in 0..self.n_classes {
                            right[c] = total[c] - left[c];
                        }
                        let score = weighted_gini(&left, nl) + weighted_gini(&right, n - nl);
                        let threshold = midpoint(pairs[k].0, pairs[k + 1].0);
                        consider(score, Split::LessEqual { feature, threshold }, &mut best);
                    }
                }
                Some(cardinality) => {
                    let mut table = vec![vec![0u64; self.n_classes]; *cardinality];
                    let mut present = vec![0u64; *cardinality];
                    for &i in idx {
                        if let Cell::Cat(c) = self.records[i].get(feature) {
                            table[c as usize][self.labels[i] as usize] += 1;
                            present[c as usize] += 1;
                        }
                    }
                    for (category, left) in table.iter().enumerate() {
                        let nl = present[category];
                        if nl == 0 || nl == n {
                            continue;
                        }
                        for c in 0..self.n_classes {
                            right[c] = total[c] - left[c];
                        }
                        let score = weighted_gini(left, nl) + weighted_gini(&right, n - nl);
                        consider(
                            score,
                            Split::Equals {
                                feature,
                                category: category as u32,
                            },
                            &mut best,
                        );
                    }
                }
            }
        }
        best.map(|(_, s)| s)
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Keep the midpoint strictly below b so `<=` routes b to the right.
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows a tree over `records` labelled with class indices `< n_classes`.
/// Returns the root and the number of leaves that hit the depth cap.
pub fn grow_tree(
    records: &[Record],
    labels: &[u32],
    schema: &Schema,
    params: &TreeParams,
) -> Result<(Node, usize)> {
    if records.is_empty() {
        return Err(Error::Domain("cannot fit a tree on zero records".into()));
    }
    if records.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    let n_classes = schema.n_classes();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(Error::Domain(format!("label {bad} outside {n_classes} classes")));
    }
    let mut grower = Grower {
        records,
        labels,
        n_classes,
        categorical: schema.features.iter().map(|f| f.cardinality()).collect(),
        max_depth: params.max_depth,
        capped_leaves: 0,
    };
    let mut root = grower.grow((0..records.len()).collect(), 0);
    root.number_leaves(&mut 0);
    Ok((root, grower.capped_leaves))
}

/// Outcome of [`GeneralizerTree::prune_level`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub enum PruneOutcome {
    Pruned,
    AtRoot,
}

/// The surrogate tree fit to the oracle's predictions. Leaves are clusters,
/// numbered left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizerTree {
    pub root: Node,
    pub n_features: usize,
    pub n_classes: usize,
    /// Number of pruning passes applied since fitting.
    pub level: usize,
}

impl GeneralizerTree {
    /// Fits to homogeneous leaves. Leaves that cannot be made pure (identical
    /// records with different labels) are flagged `unsplittable`.
    pub fn fit(records: &[Record], labels: &[u32], schema: &Schema, params: &TreeParams) -> Result<Self> {
        let (root, capped) = grow_tree(records, labels, schema, params)?;
        if capped > 0 {
            log::warn!(
                "generalizer tree hit the depth cap of {} in {capped} leaves; those leaves are impure",
                params.max_depth
            );
        }
        Ok(GeneralizerTree {
            root,
            n_features: schema.n_features(),
            n_classes: schema.n_classes(),
            level: 0,
        })
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn n_clusters(&self) -> usize {
        self.root.leaves().len()
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        self.root.leaves()
    }

    pub fn route(&self, record: &Record) -> usize {
        self.root.leaf_for(record).cluster
    }

    /// Goes up one level across the whole tree at once: every internal node
    /// whose two children are leaves becomes a leaf with the summed counts.
    pub fn prune_level(&mut self) -> PruneOutcome {
        if matches!(self.root, Node::Leaf(_)) {
            return PruneOutcome::AtRoot;
        }
        self.root.collapse_bottom();
        self.root.number_leaves(&mut 0);
        self.level += 1;
        PruneOutcome::Pruned
    }
}
