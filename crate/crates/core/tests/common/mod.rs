//! Shared generators and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dtization::dataset::{Dataset, Target};
use rand::Rng;

#[allow(clippy::approx_constant)]
pub const LN_2: f64 = 0.693_147_180_559_945_309_417_232_121_458;

pub fn names(nf: usize) -> Vec<String> {
    (0..nf).map(|i| format!("f{i}")).collect()
}

/// Integer-valued features in `0..=max_value`, labels drawn from `k` classes.
pub fn random_classification<R: Rng>(
    rng: &mut R,
    n: usize,
    nf: usize,
    k: usize,
    max_value: i32,
) -> Dataset {
    let columns: Vec<Vec<f64>> = (0..nf)
        .map(|_| {
            (0..n)
                .map(|_| rng.gen_range(0..=max_value) as f64)
                .collect()
        })
        .collect();
    let labels = (0..n)
        .map(|_| format!("c{}", rng.gen_range(0..k)))
        .collect();
    Dataset::new(names(nf), columns)
        .unwrap()
        .with_target("y", Target::Labels(labels))
        .unwrap()
}

/// Labels depend on the first features, so trees grow past the root.
pub fn structured_classification<R: Rng>(rng: &mut R, n: usize, nf: usize, noise: f64) -> Dataset {
    let columns: Vec<Vec<f64>> = (0..nf)
        .map(|_| (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect())
        .collect();
    let labels = (0..n)
        .map(|i| {
            let score: f64 = columns
                .iter()
                .enumerate()
                .map(|(j, c)| c[i] / (j + 1) as f64)
                .sum();
            let flip = rng.gen_bool(noise);
            let class = if score > 0.0 { 1 } else { 0 } ^ usize::from(flip);
            format!("c{class}")
        })
        .collect();
    Dataset::new(names(nf), columns)
        .unwrap()
        .with_target("y", Target::Labels(labels))
        .unwrap()
}

pub fn random_regression<R: Rng>(rng: &mut R, n: usize, nf: usize) -> Dataset {
    let columns: Vec<Vec<f64>> = (0..nf)
        .map(|_| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect())
        .collect();
    let y = (0..n)
        .map(|i| columns.iter().map(|c| c[i]).sum::<f64>() + rng.gen_range(-1.0..1.0))
        .collect();
    Dataset::new(names(nf), columns)
        .unwrap()
        .with_target("y", Target::Values(y))
        .unwrap()
}

/// Quartiles by insertion sort and the interpolation formula written out.
pub fn oracle_quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let pos = sorted
            .iter()
            .position(|&s| s.total_cmp(&v).is_gt())
            .unwrap_or(sorted.len());
        sorted.insert(pos, v);
    }
    let at = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let lo = h.floor();
        if h == lo {
            sorted[lo as usize]
        } else {
            let i = lo as usize;
            sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
        }
    };
    (at(0.25), at(0.75))
}

fn oracle_gini(labels: &[&str]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let mut sum = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        sum += p * p;
    }
    1.0 - sum
}

/// Exhaustive search over every (feature, midpoint) pair, partitioning the
/// rows from scratch for each candidate.
pub fn oracle_best_split(d: &Dataset) -> Option<(usize, f64, f64)> {
    let labels: Vec<&str> = d.target()?.labels()?.iter().map(String::as_str).collect();
    let n = labels.len();
    let parent = oracle_gini(&labels);
    if labels.iter().all(|l| *l == labels[0]) {
        return None;
    }
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for f in 0..d.n_features() {
        let col = d.column(f);
        let mut distinct = col.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for w in distinct.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let left: Vec<&str> = (0..n)
                .filter(|&i| col[i] < threshold)
                .map(|i| labels[i])
                .collect();
            let right: Vec<&str> = (0..n)
                .filter(|&i| col[i] >= threshold)
                .map(|i| labels[i])
                .collect();
            let weighted = (left.len() as f64 / n as f64) * oracle_gini(&left)
                + (right.len() as f64 / n as f64) * oracle_gini(&right);
            if best.is_none_or(|b| weighted < b.3) {
                best = Some((f, threshold, (parent - weighted).max(0.0), weighted));
            }
        }
    }
    best.map(|(f, t, dec, _)| (f, t, dec))
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
