//! CART regression trees.
//!
//! Greedy binary splitting on axis-aligned thresholds, maximizing the
//! reduction in within-node sum of squares. Candidate thresholds are the
//! midpoints between consecutive distinct feature values; a row goes left
//! when `x[feature] <= threshold`. Ties between equally good splits go to the
//! lowest feature index, then the lowest threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 30,
            min_leaf: 5,
            min_split: 10,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 1 || self.min_split < 2 * self.min_leaf {
            return Err(Error::input(format!(
                "tree parameters need min_leaf >= 1 and min_split >= 2 * min_leaf (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tree {
    dim: usize,
    nodes: Vec<Node>,
}

impl Tree {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

pub fn fit_tree(data: &Dataset, params: &TreeParams) -> Result<Tree> {
    if data.is_empty() {
        return Err(Error::input("cannot grow a tree on an empty dataset"));
    }
    params.validate()?;
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(grow(data, &Presorted::new(data), &rows, params, None))
}

/// Feature subsampling for forest trees: `mtry` candidates drawn per node.
pub(crate) struct FeatureSampler<'a> {
    pub mtry: usize,
    pub rng: &'a mut Rng,
}

/// Row indices of a dataset sorted by each feature, computed once and
/// shared by every tree grown on that dataset.
pub(crate) struct Presorted {
    n: usize,
    by_feature: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(data: &Dataset) -> Self {
        let by_feature = (0..data.dim())
            .map(|f| {
                let mut idx: Vec<u32> = (0..data.len() as u32).collect();
                idx.sort_by(|&a, &b| data.row(a as usize)[f].total_cmp(&data.row(b as usize)[f]));
                idx
            })
            .collect();
        Self {
            n: data.len(),
            by_feature,
        }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grow a tree on the sample `rows` (duplicates allowed, as in a bootstrap).
///
/// Each node owns a contiguous range in one sorted slot list per feature;
/// splitting partitions every list stably, so no node re-sorts.
pub(crate) fn grow(
    data: &Dataset,
    presorted: &Presorted,
    rows: &[usize],
    params: &TreeParams,
    mut sampler: Option<FeatureSampler<'_>>,
) -> Tree {
    let dim = data.dim();
    let m = rows.len();
    let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();
    // feature-major copy of the sample: cols[f * m + slot]
    let mut cols = vec![0.0; dim * m];
    for (slot, &r) in rows.iter().enumerate() {
        for (f, &v) in data.row(r).iter().enumerate() {
            cols[f * m + slot] = v;
        }
    }

    // slots grouped by data row, so sorted rows expand to sorted slots
    let mut first = vec![0u32; presorted.n + 1];
    for &r in rows {
        first[r + 1] += 1;
    }
    for i in 0..presorted.n {
        first[i + 1] += first[i];
    }
    let mut fill = first.clone();
    let mut slots_by_row = vec![0u32; m];
    for (slot, &r) in rows.iter().enumerate() {
        slots_by_row[fill[r] as usize] = slot as u32;
        fill[r] += 1;
    }
    let mut order = vec![0u32; dim * m];
    for (f, sorted) in presorted.by_feature.iter().enumerate() {
        let out = &mut order[f * m..(f + 1) * m];
        let mut at = 0;
        for &r in sorted {
            let r = r as usize;
            for k in first[r]..first[r + 1] {
                out[at] = slots_by_row[k as usize];
                at += 1;
            }
        }
    }

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // (node id, start, end, depth); every feature list shares the same range
    let mut work = vec![(0usize, 0usize, m, 0usize)];
    let mut goes_left = vec![false; m];
    let mut right_buf = vec![0u32; m];
    let all_features: Vec<usize> = (0..dim).collect();

    while let Some((id, start, end, depth)) = work.pop() {
        let count = end - start;
        let part = &order[start..end];
        let sum: f64 = part.iter().map(|&s| y[s as usize]).sum();
        let mean = if count == 0 { 0.0 } else { sum / count as f64 };
        nodes[id] = Node::Leaf { value: mean };

        if depth >= params.max_depth || count < params.min_split || count < 2 * params.min_leaf {
            continue;
        }
        let y0 = y[part[0] as usize];
        if part.iter().all(|&s| y[s as usize] == y0) {
            continue;
        }
        let sse: f64 = part.iter().map(|&s| (y[s as usize] - mean).powi(2)).sum();

        let features = match sampler.as_mut() {
            Some(sm) if sm.mtry < dim => sm.rng.sample_indices(dim, sm.mtry),
            _ => all_features.clone(),
        };
        let base = sum * sum / count as f64;
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            let seg = &order[f * m + start..f * m + end];
            let col = &cols[f * m..(f + 1) * m];
            let mut left_sum = 0.0;
            for split_at in 1..count {
                let prev = seg[split_at - 1] as usize;
                left_sum += y[prev];
                let (lo, hi) = (col[prev], col[seg[split_at] as usize]);
                if lo == hi || split_at < params.min_leaf || count - split_at < params.min_leaf {
                    continue;
                }
                let nl = split_at as f64;
                let nr = (count - split_at) as f64;
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        let Some(best) = best else { continue };
        if best.gain <= 1e-12 * sse {
            continue;
        }

        let split_col = &cols[best.feature * m..(best.feature + 1) * m];
        let mut boundary = 0;
        for &s in &order[start..end] {
            let left = split_col[s as usize] <= best.threshold;
            goes_left[s as usize] = left;
            boundary += usize::from(left);
        }
        for f in 0..dim {
            let seg = &mut order[f * m + start..f * m + end];
            // branchless stable partition; the side of each slot is unpredictable
            let (mut at, mut rt) = (0, 0);
            for k in 0..count {
                let s = seg[k];
                let left = goes_left[s as usize];
                seg[at] = s;
                right_buf[rt] = s;
                at += usize::from(left);
                rt += usize::from(!left);
            }
            seg[at..].copy_from_slice(&right_buf[..rt]);
        }

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        // right pushed first so the left subtree is grown first
        work.push((right, start + boundary, end, depth + 1));
        work.push((left, start, start + boundary, depth + 1));
    }
    Tree { dim, nodes }
}
