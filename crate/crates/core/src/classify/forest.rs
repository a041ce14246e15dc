//! Random forest of Gini CART trees on bootstrap samples.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{math, rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means `round(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            features_per_split: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        departed: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { departed } => return departed,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Fraction of trees voting departed.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        votes as f64 / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let departed = match (2 * pos).cmp(&idx.len()) {
            core::cmp::Ordering::Greater => true,
            core::cmp::Ordering::Less => false,
            core::cmp::Ordering::Equal => self.rng.random::<bool>(),
        };
        self.nodes.push(Node::Leaf { departed });
        self.nodes.len() - 1
    }

    /// Best `(weighted child impurity, feature, threshold)` over up to
    /// `mtry` non-constant features in random order.
    fn best_split(&mut self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        self.features.shuffle(&mut self.rng);
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
        for fi in 0..self.features.len() {
            if examined == self.mtry {
                break;
            }
            let f = self.features[fi];
            column.clear();
            column.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut left_pos = 0;
            for i in 1..n {
                left_pos += usize::from(column[i - 1].1);
                if column[i].0 == column[i - 1].0 || i < self.min_leaf || n - i < self.min_leaf {
                    continue;
                }
                let score =
                    (i as f64 * gini(left_pos, i) + (n - i) as f64 * gini(total_pos - left_pos, n - i)) / n as f64;
                if best.is_none_or(|(b, _, _)| score < b) {
                    let threshold = column[i - 1].0 + (column[i].0 - column[i - 1].0) / 2.0;
                    best = Some((score, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        if pos == 0 || pos == idx.len() || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return self.leaf(idx);
        }
        let Some((_, feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let mut split = 0;
        for i in 0..idx.len() {
            if self.x[idx[i]][feature] <= threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { departed: false });
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// Features examined per split for `p` columns.
pub fn resolve_mtry(config: &ForestConfig, p: usize) -> Result<usize> {
    match config.features_per_split {
        Some(m) if p > 0 && (m < 1 || m > p) => Err(Error::invalid(alloc::format!(
            "features_per_split {m} outside [1, {p}]"
        ))),
        Some(m) => Ok(m.min(p)),
        None => Ok((math::round(math::sqrt(p as f64)) as usize).clamp(usize::from(p > 0), p)),
    }
}

/// Tree `i` is seeded with `seed + i`, so trees can be grown in any order.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], config: &ForestConfig, seed: u64) -> Result<Forest> {
    if config.n_trees == 0 {
        return Err(Error::invalid("n_trees must be at least 1"));
    }
    if config.min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }
    let p = x.first().map_or(0, Vec::len);
    let mtry = resolve_mtry(config, p)?;
    let n = x.len();
    let trees = (0..config.n_trees)
        .map(|t| {
            let mut r = rng::seeded(seed.wrapping_add(t as u64));
            let mut idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let mut b = Builder {
                x,
                y,
                mtry,
                max_depth: config.max_depth.unwrap_or(usize::MAX),
                min_leaf: config.min_leaf,
                rng: r,
                nodes: Vec::new(),
                features: (0..p).collect(),
            };
            b.grow(&mut idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { trees })
}
