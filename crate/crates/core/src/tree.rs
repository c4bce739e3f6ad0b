//! Decision-tree feature importance.
//!
//! An unpruned binary tree is grown depth-first. Every split removes the
//! chosen feature from both children, so a feature appears at most once on
//! any root-to-leaf path. The shallowest depth at which a feature is chosen
//! anywhere in the tree is mapped to a multiplicative scaling factor.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Target};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("feature count must be at least 1")]
    NoFeatures,
    #[error("impurity of an empty set is undefined")]
    EmptyInput,
    #[error("a split needs at least 2 rows, node has {0}")]
    TooFewRows(usize),
    #[error("dataset has no target column")]
    NoTarget,
    #[error("exponent must be finite and positive, got {0}")]
    InvalidExponent(f64),
}

pub type Result<T> = std::result::Result<T, TreeError>;

/// Direction of the depth-to-factor mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FactorMode {
    /// `S = e^(x * depth)`: factors grow with depth, topping out at 2.
    #[default]
    #[serde(rename = "as-published")]
    AsPublished,
    /// `S = e^(-x * (depth - 1))`: the root feature gets 1, deeper features
    /// decay towards 0.5.
    #[serde(rename = "descending")]
    Descending,
}

impl FactorMode {
    pub const ALL: [FactorMode; 2] = [FactorMode::AsPublished, FactorMode::Descending];

    pub fn factor(self, exponent_x: f64, depth: usize) -> f64 {
        match self {
            FactorMode::AsPublished => (exponent_x * depth as f64).exp(),
            FactorMode::Descending => (-exponent_x * (depth - 1) as f64).exp(),
        }
    }
}

impl fmt::Display for FactorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorMode::AsPublished => "as-published",
            FactorMode::Descending => "descending",
        })
    }
}

impl FromStr for FactorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "as-published" => Ok(FactorMode::AsPublished),
            "descending" => Ok(FactorMode::Descending),
            other => Err(format!(
                "unknown factor mode '{other}' (expected as-published or descending)"
            )),
        }
    }
}

/// Rate constant `ln(2) / nf`: at depth `nf` the as-published factor is 2.
pub fn exponent(nf: usize) -> Result<f64> {
    if nf == 0 {
        return Err(TreeError::NoFeatures);
    }
    Ok(std::f64::consts::LN_2 / nf as f64)
}

/// Gini impurity `1 - sum(p_k^2)` from per-class counts.
fn gini_from_counts(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    let sum_sq: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum();
    1.0 - sum_sq
}

/// Gini impurity of a list of class labels.
pub fn gini_impurity<L: Ord>(labels: &[L]) -> Result<f64> {
    if labels.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let counts: Vec<usize> = counts.into_values().collect();
    Ok(gini_from_counts(&counts, labels.len()))
}

/// Population variance, the regression impurity.
pub fn regression_impurity(targets: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    Ok(targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n)
}

/// The split chosen at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    pub feature: String,
    pub feature_index: usize,
    /// Rows with `value < split_point` go left.
    pub split_point: f64,
    pub impurity_decrease: f64,
}

/// Threshold between two consecutive distinct values `a < b`.
///
/// Guaranteed to satisfy `a < t <= b` so `value < t` separates them.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let mut m = (a + b) / 2.0;
    if !m.is_finite() {
        m = a / 2.0 + b / 2.0;
    }
    if m <= a {
        b
    } else {
        m
    }
}

/// Best single split of a labeled node over every feature.
///
/// Candidates are midpoints between consecutive distinct values; the one
/// minimising weighted child impurity wins, ties going to the lower feature
/// index and then the smaller threshold.
pub fn best_split(node_data: &Dataset) -> Result<Option<SplitChoice>> {
    let target = node_data.target().ok_or(TreeError::NoTarget)?;
    let n = node_data.n_rows();
    if n < 2 {
        return Err(TreeError::TooFewRows(n));
    }
    let mut grower = Grower::new(node_data.columns(), target);
    let rows: Vec<usize> = (0..n).collect();
    let active = vec![true; node_data.n_features()];
    Ok(grower.find_split(&rows, &active).map(|c| SplitChoice {
        feature: node_data.feature_names()[c.feature].clone(),
        feature_index: c.feature,
        split_point: c.threshold,
        impurity_decrease: c.decrease,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEntry {
    pub feature: String,
    /// Shallowest depth (root = 1) where the feature was the split variable.
    pub first_depth: Option<usize>,
    pub factor: f64,
}

/// Per-feature scaling factors, in dataset column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactorTable {
    pub exponent_x: f64,
    pub nf_total: usize,
    pub mode: FactorMode,
    pub entries: Vec<FactorEntry>,
}

impl ScalingFactorTable {
    fn from_depths(
        names: &[String],
        depths: &[Option<usize>],
        exponent_x: f64,
        mode: FactorMode,
    ) -> Self {
        let entries = names
            .iter()
            .zip(depths)
            .map(|(name, &first_depth)| FactorEntry {
                feature: name.clone(),
                first_depth,
                factor: first_depth.map_or(1.0, |d| mode.factor(exponent_x, d)),
            })
            .collect();
        ScalingFactorTable {
            exponent_x,
            nf_total: names.len(),
            mode,
            entries,
        }
    }

    pub fn entry(&self, feature: &str) -> Option<&FactorEntry> {
        self.entries.iter().find(|e| e.feature == feature)
    }

    pub fn factor(&self, feature: &str) -> Option<f64> {
        self.entry(feature).map(|e| e.factor)
    }

    pub fn first_depth(&self, feature: &str) -> Option<usize> {
        self.entry(feature).and_then(|e| e.first_depth)
    }

    /// The same depths re-materialised under another mode.
    pub fn with_mode(&self, mode: FactorMode) -> Self {
        let names: Vec<String> = self.entries.iter().map(|e| e.feature.clone()).collect();
        let depths: Vec<Option<usize>> = self.entries.iter().map(|e| e.first_depth).collect();
        Self::from_depths(&names, &depths, self.exponent_x, mode)
    }

    /// Whether every stored factor equals the value implied by its depth.
    pub fn is_consistent(&self) -> bool {
        self.exponent_x > 0.0
            && self.exponent_x.is_finite()
            && self.entries.len() == self.nf_total
            && self.entries.iter().all(|e| match e.first_depth {
                Some(d) => {
                    d >= 1 && d <= self.nf_total && e.factor == self.mode.factor(self.exponent_x, d)
                }
                None => e.factor == 1.0,
            })
    }

    /// Rows sorted by depth then name; unassigned features last.
    pub fn sorted_entries(&self) -> Vec<&FactorEntry> {
        let mut rows: Vec<&FactorEntry> = self.entries.iter().collect();
        rows.sort_by(|a, b| {
            let key = |e: &FactorEntry| e.first_depth.unwrap_or(usize::MAX);
            key(a).cmp(&key(b)).then_with(|| a.feature.cmp(&b.feature))
        });
        rows
    }
}

/// One internal node of the importance tree, in depth-first pre-order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub depth: usize,
    pub parent: Option<usize>,
    pub feature_index: usize,
    pub split_point: f64,
    pub n_rows: usize,
    pub impurity_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportanceTree {
    pub feature_names: Vec<String>,
    pub nodes: Vec<TreeNode>,
}

impl ImportanceTree {
    /// Feature indices from the root down to `node` (inclusive).
    pub fn path(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = Some(node);
        while let Some(i) = cur {
            out.push(self.nodes[i].feature_index);
            cur = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    /// Indented text rendering, one split per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            let _ = writeln!(
                out,
                "{}[depth {}] {} < {} (rows={}, decrease={:.4})",
                "  ".repeat(node.depth - 1),
                node.depth,
                self.feature_names[node.feature_index],
                node.split_point,
                node.n_rows,
                node.impurity_decrease
            );
        }
        out
    }
}

/// Builds the importance tree and derives the factor table from it.
pub fn calculate_sf(d: &Dataset, exponent_x: f64, mode: FactorMode) -> Result<ScalingFactorTable> {
    grow_importance_tree(d, exponent_x, mode).map(|(table, _)| table)
}

/// [`calculate_sf`] that also returns the grown tree.
pub fn grow_importance_tree(
    d: &Dataset,
    exponent_x: f64,
    mode: FactorMode,
) -> Result<(ScalingFactorTable, ImportanceTree)> {
    if !(exponent_x > 0.0 && exponent_x.is_finite()) {
        return Err(TreeError::InvalidExponent(exponent_x));
    }
    let target = d.target().ok_or(TreeError::NoTarget)?;
    let mut grower = Grower::new(d.columns(), target);
    let mut rows: Vec<usize> = (0..d.n_rows()).collect();
    let mut active = vec![true; d.n_features()];
    let mut first_depth = vec![None; d.n_features()];
    let mut tree = ImportanceTree {
        feature_names: d.feature_names().to_vec(),
        nodes: Vec::new(),
    };
    grower.grow(
        &mut rows,
        &mut active,
        1,
        None,
        &mut first_depth,
        &mut tree.nodes,
    );
    let table = ScalingFactorTable::from_depths(d.feature_names(), &first_depth, exponent_x, mode);
    Ok((table, tree))
}

enum NodeTarget<'a> {
    Classes { codes: Vec<usize>, n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    weighted: f64,
    decrease: f64,
}

/// Reusable buffers for split search; `O(n)` in total.
struct Scratch {
    sorted: Vec<(f64, usize)>,
    left_counts: Vec<usize>,
    right_counts: Vec<usize>,
    parent_counts: Vec<usize>,
    suffix_m2: Vec<f64>,
}

impl Scratch {
    fn sort_feature(&mut self, column: &[f64], rows: &[usize]) {
        self.sorted.clear();
        self.sorted.extend(rows.iter().map(|&r| (column[r], r)));
        self.sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    target: NodeTarget<'a>,
    nf_total: usize,
    scratch: Scratch,
}

impl<'a> Grower<'a> {
    fn new(columns: &'a [Vec<f64>], target: &'a Target) -> Self {
        let target = match target {
            Target::Labels(labels) => {
                let classes: BTreeMap<&str, usize> = labels
                    .iter()
                    .map(String::as_str)
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| (l, i))
                    .collect();
                NodeTarget::Classes {
                    codes: labels.iter().map(|l| classes[l.as_str()]).collect(),
                    n_classes: classes.len(),
                }
            }
            Target::Values(v) => NodeTarget::Values(v),
        };
        let n = columns.first().map_or(0, Vec::len);
        let k = match &target {
            NodeTarget::Classes { n_classes, .. } => *n_classes,
            NodeTarget::Values(_) => 0,
        };
        Grower {
            columns,
            target,
            nf_total: columns.len(),
            scratch: Scratch {
                sorted: Vec::with_capacity(n),
                left_counts: vec![0; k],
                right_counts: vec![0; k],
                parent_counts: vec![0; k],
                suffix_m2: Vec::new(),
            },
        }
    }

    fn grow(
        &mut self,
        rows: &mut [usize],
        active: &mut [bool],
        depth: usize,
        parent: Option<usize>,
        first_depth: &mut [Option<usize>],
        nodes: &mut Vec<TreeNode>,
    ) {
        if depth > self.nf_total || rows.len() < 2 {
            return;
        }
        let Some(choice) = self.find_split(rows, active) else {
            return;
        };
        let f = choice.feature;
        if first_depth[f].is_none_or(|d| depth < d) {
            first_depth[f] = Some(depth);
        }
        let id = nodes.len();
        nodes.push(TreeNode {
            depth,
            parent,
            feature_index: f,
            split_point: choice.threshold,
            n_rows: rows.len(),
            impurity_decrease: choice.decrease,
        });

        let column = &self.columns[f];
        let mut boundary = 0;
        for i in 0..rows.len() {
            if column[rows[i]] < choice.threshold {
                rows.swap(i, boundary);
                boundary += 1;
            }
        }
        active[f] = false;
        let (left, right) = rows.split_at_mut(boundary);
        self.grow(left, active, depth + 1, Some(id), first_depth, nodes);
        self.grow(right, active, depth + 1, Some(id), first_depth, nodes);
        active[f] = true;
    }

    fn find_split(&mut self, rows: &[usize], active: &[bool]) -> Option<Candidate> {
        let columns = self.columns;
        let scratch = &mut self.scratch;
        match &self.target {
            NodeTarget::Classes { codes, .. } => {
                find_split_gini(columns, codes, scratch, rows, active)
            }
            NodeTarget::Values(y) => find_split_variance(columns, y, scratch, rows, active),
        }
    }
}

fn find_split_gini(
    columns: &[Vec<f64>],
    codes: &[usize],
    s: &mut Scratch,
    rows: &[usize],
    active: &[bool],
) -> Option<Candidate> {
    let m = rows.len();
    s.parent_counts.iter_mut().for_each(|c| *c = 0);
    for &r in rows {
        s.parent_counts[codes[r]] += 1;
    }
    if s.parent_counts.contains(&m) {
        return None;
    }
    let parent = gini_from_counts(&s.parent_counts, m);
    let total = m as f64;

    let mut best: Option<Candidate> = None;
    for feature in (0..columns.len()).filter(|&f| active[f]) {
        s.sort_feature(&columns[feature], rows);
        s.left_counts.iter_mut().for_each(|c| *c = 0);
        s.right_counts.copy_from_slice(&s.parent_counts);
        for i in 0..m - 1 {
            let (value, row) = s.sorted[i];
            s.left_counts[codes[row]] += 1;
            s.right_counts[codes[row]] -= 1;
            let next = s.sorted[i + 1].0;
            if value >= next {
                continue;
            }
            let n_left = i + 1;
            let n_right = m - n_left;
            let weighted = (n_left as f64 / total) * gini_from_counts(&s.left_counts, n_left)
                + (n_right as f64 / total) * gini_from_counts(&s.right_counts, n_right);
            if best.is_none_or(|b| weighted < b.weighted) {
                best = Some(Candidate {
                    feature,
                    threshold: midpoint(value, next),
                    weighted,
                    decrease: (parent - weighted).max(0.0),
                });
            }
        }
    }
    best
}

fn find_split_variance(
    columns: &[Vec<f64>],
    y: &[f64],
    s: &mut Scratch,
    rows: &[usize],
    active: &[bool],
) -> Option<Candidate> {
    let m = rows.len();
    let first = y[rows[0]];
    if rows.iter().all(|&r| y[r] == first) {
        return None;
    }
    let parent = welford(rows.iter().map(|&r| y[r])).1 / m as f64;
    let total = m as f64;

    let mut best: Option<Candidate> = None;
    for feature in (0..columns.len()).filter(|&f| active[f]) {
        s.sort_feature(&columns[feature], rows);
        // suffix_m2[i]: sum of squared deviations over sorted[i..]
        s.suffix_m2.clear();
        s.suffix_m2.resize(m + 1, 0.0);
        let mut acc = Welford::default();
        for i in (0..m).rev() {
            acc.push(y[s.sorted[i].1]);
            s.suffix_m2[i] = acc.m2;
        }
        let mut acc = Welford::default();
        for i in 0..m - 1 {
            let (value, row) = s.sorted[i];
            acc.push(y[row]);
            let next = s.sorted[i + 1].0;
            if value >= next {
                continue;
            }
            let n_left = (i + 1) as f64;
            let n_right = total - n_left;
            let weighted = (n_left / total) * (acc.m2 / n_left)
                + (n_right / total) * (s.suffix_m2[i + 1] / n_right);
            if best.is_none_or(|b| weighted < b.weighted) {
                best = Some(Candidate {
                    feature,
                    threshold: midpoint(value, next),
                    weighted,
                    decrease: (parent - weighted).max(0.0),
                });
            }
        }
    }
    best
}

#[derive(Default)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }
}

/// Returns (mean, sum of squared deviations).
fn welford(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut acc = Welford::default();
    for v in values {
        acc.push(v);
    }
    (acc.mean, acc.m2)
}
