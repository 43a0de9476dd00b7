//! Turning a fitted generalizer tree into generalizations.
//!
//! Two views are derived from the same tree. The *global* view cuts each
//! numeric domain at every threshold the tree uses for that feature and
//! splits off every category the tree tests by equality; features the tree
//! never tests are suppressed. The *cluster* view follows each root-to-leaf
//! path and intersects its tests, which gives per-leaf ranges (local
//! recoding). Records are generalized by replacing them with their leaf's
//! representative, an actual training record near the leaf's median.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{argmax_first, median_sorted, Cell, FeatureKind, Record, Schema};
use crate::error::{Error, Result};
use crate::tree::{GeneralizerTree, Node, Split};

/// A numeric range. Ranges cut from a domain are `[lo, t1]`, `(t1, t2]`, ...
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub open_start: bool,
}

impl Interval {
    pub fn closed(start: f64, end: f64) -> Self {
        Interval {
            start,
            end,
            open_start: false,
        }
    }

    pub fn left_open(start: f64, end: f64) -> Self {
        Interval {
            start,
            end,
            open_start: true,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.open_start { v > self.start } else { v >= self.start };
        above && v <= self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStatus {
    Untouched,
    Generalized,
    Suppressed,
}

/// How one feature is collected.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureGeneralization {
    /// Collected exactly.
    Untouched,
    /// Not collected at all (any value will do).
    Suppressed,
    /// Sorted, disjoint ranges covering the numeric domain.
    Ranges(Vec<Interval>),
    /// Partition of the categorical domain into groups of category indices.
    Groups(Vec<Vec<u32>>),
}

impl FeatureGeneralization {
    pub fn status(&self) -> FeatureStatus {
        match self {
            FeatureGeneralization::Untouched => FeatureStatus::Untouched,
            FeatureGeneralization::Suppressed => FeatureStatus::Suppressed,
            FeatureGeneralization::Ranges(_) | FeatureGeneralization::Groups(_) => FeatureStatus::Generalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recoding {
    #[default]
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generalization {
    pub features: Vec<FeatureGeneralization>,
    pub recoding: Recoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub enum RemoveOutcome {
    Removed,
    AlreadyUntouched,
}

impl Generalization {
    /// Every feature collected exactly.
    pub fn identity(n_features: usize) -> Self {
        Generalization {
            features: vec![FeatureGeneralization::Untouched; n_features],
            recoding: Recoding::Global,
        }
    }

    pub fn status(&self, feature: usize) -> FeatureStatus {
        self.features[feature].status()
    }

    pub fn untouched_mask(&self) -> Vec<bool> {
        self.features
            .iter()
            .map(|f| f.status() == FeatureStatus::Untouched)
            .collect()
    }

    /// Takes a feature out of the generalization: it is collected exactly
    /// from now on. Other features are unaffected.
    pub fn remove_feature(&mut self, feature: usize) -> RemoveOutcome {
        match self.features[feature] {
            FeatureGeneralization::Untouched => RemoveOutcome::AlreadyUntouched,
            _ => {
                self.features[feature] = FeatureGeneralization::Untouched;
                RemoveOutcome::Removed
            }
        }
    }
}

/// Global recoding from the tree: thresholds per numeric feature cut its
/// domain, equality-tested categories become singleton groups next to one
/// group of untested categories, and untested features are suppressed.
pub fn derive_global(tree: &GeneralizerTree, schema: &Schema) -> Generalization {
    let mut thresholds: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); schema.n_features()];
    let mut tested: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); schema.n_features()];
    for split in tree.root.splits() {
        match *split {
            // Thresholds are finite; ordered_bits gives f64 total order in a BTreeSet.
            Split::LessEqual { feature, threshold } => {
                thresholds[feature].insert(ordered_bits(threshold));
            }
            Split::Equals { feature, category } => {
                tested[feature].insert(category);
            }
        }
    }
    let features = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| match &f.kind {
            FeatureKind::Numeric { lo, hi } => {
                let cuts: Vec<f64> = thresholds[j]
                    .iter()
                    .map(|&b| from_ordered_bits(b))
                    .filter(|t| *lo <= *t && *t < *hi)
                    .collect();
                if cuts.is_empty() {
                    FeatureGeneralization::Suppressed
                } else {
                    FeatureGeneralization::Ranges(cut_domain(*lo, *hi, &cuts))
                }
            }
            FeatureKind::Categorical { values } => {
                if tested[j].is_empty() {
                    FeatureGeneralization::Suppressed
                } else {
                    let mut groups: Vec<Vec<u32>> = tested[j].iter().map(|&c| vec![c]).collect();
                    let rest: Vec<u32> = (0..values.len() as u32).filter(|c| !tested[j].contains(c)).collect();
                    if !rest.is_empty() {
                        groups.push(rest);
                    }
                    groups.sort_by_key(|g| g[0]);
                    FeatureGeneralization::Groups(groups)
                }
            }
        })
        .collect();
    Generalization {
        features,
        recoding: Recoding::Global,
    }
}

fn cut_domain(lo: f64, hi: f64, cuts: &[f64]) -> Vec<Interval> {
    let mut ranges = Vec::with_capacity(cuts.len() + 1);
    ranges.push(Interval::closed(lo, cuts[0]));
    for w in cuts.windows(2) {
        ranges.push(Interval::left_open(w[0], w[1]));
    }
    ranges.push(Interval::left_open(*cuts.last().unwrap(), hi));
    ranges
}

fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    f64::from_bits(if b >> 63 == 1 { b & !(1 << 63) } else { !b })
}

/// What a root-to-leaf path says about one feature.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Range(Interval),
    /// Sorted category indices.
    Categories(Vec<u32>),
}

impl Constraint {
    pub fn admits(&self, cell: Cell) -> bool {
        match (self, cell) {
            (Constraint::Range(r), Cell::Num(v)) => r.contains(v),
            (Constraint::Categories(cs), Cell::Cat(c)) => cs.binary_search(&c).is_ok(),
            _ => false,
        }
    }
}

/// A leaf of the generalizer tree seen as a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    pub cluster: usize,
    /// Per feature; `None` when the path never tests the feature.
    pub constraints: Vec<Option<Constraint>>,
    pub class_counts: Vec<u64>,
    pub majority: u32,
    pub representative: Option<Record>,
}

impl ClusterProfile {
    pub fn size(&self) -> u64 {
        self.class_counts.iter().sum()
    }

    pub fn admits(&self, record: &Record) -> bool {
        self.constraints
            .iter()
            .zip(record.cells())
            .all(|(c, &cell)| c.as_ref().is_none_or(|c| c.admits(cell)))
    }
}

/// One profile per leaf, in cluster order, with path tests intersected.
/// Representatives are filled in by [`select_representatives`].
pub fn cluster_profiles(tree: &GeneralizerTree, schema: &Schema) -> Vec<ClusterProfile> {
    fn walk(node: &Node, schema: &Schema, path: &mut Vec<Option<Constraint>>, out: &mut Vec<ClusterProfile>) {
        match node {
            Node::Leaf(leaf) => out.push(ClusterProfile {
                cluster: leaf.cluster,
                constraints: path.clone(),
                class_counts: leaf.class_counts.clone(),
                majority: leaf.majority,
                representative: None,
            }),
            Node::Internal { split, left, right } => {
                let f = split.feature();
                let saved = path[f].clone();
                let current = saved.clone().unwrap_or_else(|| full_domain(schema, f));
                let (l, r) = match (*split, current) {
                    (Split::LessEqual { threshold, .. }, Constraint::Range(iv)) => (
                        Constraint::Range(Interval {
                            end: iv.end.min(threshold),
                            ..iv
                        }),
                        Constraint::Range(if threshold >= iv.start {
                            Interval::left_open(threshold, iv.end)
                        } else {
                            iv
                        }),
                    ),
                    (Split::Equals { category, .. }, Constraint::Categories(cs)) => (
                        Constraint::Categories(cs.iter().copied().filter(|&c| c == category).collect()),
                        Constraint::Categories(cs.iter().copied().filter(|&c| c != category).collect()),
                    ),
                    _ => unreachable!("split kind matches feature kind"),
                };
                path[f] = Some(l);
                walk(left, schema, path, out);
                path[f] = Some(r);
                walk(right, schema, path, out);
                path[f] = saved;
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, schema, &mut vec![None; schema.n_features()], &mut out);
    out
}

pub(crate) fn full_domain(schema: &Schema, feature: usize) -> Constraint {
    match &schema.features[feature].kind {
        FeatureKind::Numeric { lo, hi } => Constraint::Range(Interval::closed(*lo, *hi)),
        FeatureKind::Categorical { values } => Constraint::Categories((0..values.len() as u32).collect()),
    }
}

/// Picks each cluster's representative: among the cluster's training records
/// that the oracle labels with the cluster's majority class, the one closest
/// to the cluster median. Distance is the mean, over the features in
/// `distance_features`, of |Δ|/domain-width (numeric) or 0/1 mismatch
/// (categorical). Ties go to the lower record index. If no member carries the
/// majority label, the closest member overall is used.
///
/// `labels` are the oracle's predictions for `records`.
pub fn select_representatives(
    profiles: &mut [ClusterProfile],
    tree: &GeneralizerTree,
    schema: &Schema,
    records: &[Record],
    labels: &[u32],
    distance_features: &[bool],
) -> Result<()> {
    if records.len() != labels.len() {
        return Err(Error::Domain("records and labels differ in length".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); profiles.len()];
    for (i, r) in records.iter().enumerate() {
        let c = tree.route(r);
        members
            .get_mut(c)
            .ok_or_else(|| Error::Invariant(format!("record routed to unknown cluster {c}")))?
            .push(i);
    }
    let mut features: Vec<usize> = (0..schema.n_features()).filter(|&j| distance_features[j]).collect();
    if features.is_empty() {
        features = (0..schema.n_features()).collect();
    }
    for profile in profiles.iter_mut() {
        let idx = &members[profile.cluster];
        if idx.is_empty() {
            return Err(Error::Invariant(format!("cluster {} has no training records", profile.cluster)));
        }
        let centre = cluster_median(schema, records, idx);
        let distance = |i: usize| -> f64 {
            let r = &records[i];
            let total: f64 = features
                .iter()
                .map(|&j| match (r.get(j), centre[j]) {
                    (Cell::Num(v), Cell::Num(m)) => {
                        let w = schema.features[j].width().unwrap_or(0.0);
                        if w > 0.0 {
                            (v - m).abs() / w
                        } else {
                            0.0
                        }
                    }
                    (a, b) => (a != b) as u8 as f64,
                })
                .sum();
            total / features.len() as f64
        };
        let nearest = |candidates: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            let mut best: Option<(f64, usize)> = None;
            for i in candidates {
                let d = distance(i);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            best.map(|(_, i)| i)
        };
        let chosen = nearest(&mut idx.iter().copied().filter(|&i| labels[i] == profile.majority))
            .or_else(|| nearest(&mut idx.iter().copied()))
            .expect("non-empty cluster");
        profile.representative = Some(records[chosen].clone());
    }
    Ok(())
}

/// Per-feature centre of a set of records: median for numeric features, mode
/// for categorical ones.
fn cluster_median(schema: &Schema, records: &[Record], idx: &[usize]) -> Vec<Cell> {
    schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| match &f.kind {
            FeatureKind::Numeric { .. } => {
                let mut vs: Vec<f64> = idx.iter().filter_map(|&i| records[i].get(j).as_num()).collect();
                if vs.is_empty() {
                    return Cell::Missing;
                }
                vs.sort_by(f64::total_cmp);
                Cell::Num(median_sorted(&vs))
            }
            FeatureKind::Categorical { values } => {
                let mut counts = vec![0usize; values.len()];
                for &i in idx {
                    if let Some(c) = records[i].get(j).as_cat() {
                        counts[c as usize] += 1;
                    }
                }
                Cell::Cat(argmax_first(&counts) as u32)
            }
        })
        .collect()
}

/// The representative of the record's cluster.
pub fn generalize_record(tree: &GeneralizerTree, profiles: &[ClusterProfile], record: &Record) -> Record {
    let c = tree.route(record);
    profiles[c]
        .representative
        .clone()
        .expect("representatives selected before generalizing")
}

/// Generalizes each record: start from its cluster's representative, then
/// restore the record's own value on every untouched feature.
pub fn apply_generalization(
    generalization: &Generalization,
    tree: &GeneralizerTree,
    profiles: &[ClusterProfile],
    records: &[Record],
) -> Vec<Record> {
    let untouched = generalization.untouched_mask();
    if untouched.iter().all(|&u| u) {
        return records.to_vec();
    }
    records
        .iter()
        .map(|r| {
            let mut out = generalize_record(tree, profiles, r);
            for (j, keep) in untouched.iter().enumerate() {
                if *keep {
                    out.0[j] = r.get(j);
                }
            }
            out
        })
        .collect()
}

/// A frozen generalization: the tree, its cluster profiles with
/// representatives, and the per-feature statuses.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationModel {
    pub schema: Schema,
    pub tree: GeneralizerTree,
    pub profiles: Vec<ClusterProfile>,
    pub generalization: Generalization,
}

impl GeneralizationModel {
    /// Derives the global generalization from `tree`, marks `untouched`
    /// features, and selects representatives from the generalizer-training
    /// records and their oracle labels. Representatives are chosen by
    /// distance over the features that are not untouched, since untouched
    /// features are restored from the input anyway.
    pub fn build(
        schema: &Schema,
        tree: GeneralizerTree,
        untouched: &[bool],
        records: &[Record],
        labels: &[u32],
    ) -> Result<Self> {
        let mut generalization = derive_global(&tree, schema);
        for (j, &u) in untouched.iter().enumerate() {
            if u {
                let _ = generalization.remove_feature(j);
            }
        }
        let mut profiles = cluster_profiles(&tree, schema);
        let mask: Vec<bool> = generalization.untouched_mask().iter().map(|u| !u).collect();
        select_representatives(&mut profiles, &tree, schema, records, labels, &mask)?;
        Ok(GeneralizationModel {
            schema: schema.clone(),
            tree,
            profiles,
            generalization,
        })
    }

    pub fn route(&self, record: &Record) -> usize {
        self.tree.route(record)
    }

    pub fn generalize_record(&self, record: &Record) -> Record {
        generalize_record(&self.tree, &self.profiles, record)
    }

    pub fn apply(&self, records: &[Record]) -> Vec<Record> {
        apply_generalization(&self.generalization, &self.tree, &self.profiles, records)
    }

    pub fn statuses(&self) -> Vec<FeatureStatus> {
        self.generalization.features.iter().map(|f| f.status()).collect()
    }
}
