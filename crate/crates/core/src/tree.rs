//! CART regression trees shared by the forest and the booster.
//!
//! Splits maximize the reduction in squared error. Each feature's rows are
//! sorted once per training set and the sorted lists are partitioned stably
//! as the tree grows, so a level costs `O(samples * features)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numeric::{mean, Matrix};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_leaf: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row indices of a matrix sorted by each feature (ties by row index).
#[derive(Debug, Clone)]
pub struct ColumnOrder {
    per_feature: Vec<Vec<u32>>,
}

impl ColumnOrder {
    pub fn new(x: &Matrix) -> Self {
        let per_feature = (0..x.cols())
            .map(|f| {
                let mut rows: Vec<u32> = (0..x.rows() as u32).collect();
                rows.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .total_cmp(&x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                rows
            })
            .collect();
        Self { per_feature }
    }
}

struct Grower<'a> {
    x: &'a Matrix,
    /// Matrix row of each sample position.
    rows: &'a [usize],
    /// Target of each sample position.
    targets: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut SplitMix64>,
    nodes: Vec<Node>,
    is_left: Vec<bool>,
}

/// Grows one tree on the samples `rows[p]` with targets `targets[p]`.
/// `rows` may repeat matrix rows (bootstrap). `rng` drives feature
/// subsampling and is only consulted when `max_features` is below the
/// feature count.
pub fn grow_tree(
    x: &Matrix,
    order: &ColumnOrder,
    rows: &[usize],
    targets: &[f64],
    params: TreeParams,
    rng: Option<&mut SplitMix64>,
) -> RegressionTree {
    assert_eq!(rows.len(), targets.len());
    let mut positions_of_row: Vec<Vec<u32>> = vec![Vec::new(); x.rows()];
    for (p, &r) in rows.iter().enumerate() {
        positions_of_row[r].push(p as u32);
    }
    let lists: Vec<Vec<u32>> = order
        .per_feature
        .iter()
        .map(|sorted| {
            let mut list = Vec::with_capacity(rows.len());
            for &r in sorted {
                list.extend_from_slice(&positions_of_row[r as usize]);
            }
            list
        })
        .collect();
    let mut grower = Grower {
        x,
        rows,
        targets,
        params,
        rng,
        nodes: Vec::new(),
        is_left: vec![false; rows.len()],
    };
    if rows.is_empty() {
        return RegressionTree {
            nodes: vec![Node::Leaf { value: 0.0 }],
        };
    }
    grower.build(lists, 0);
    RegressionTree {
        nodes: grower.nodes,
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn value(&self, p: u32) -> f64 {
        self.targets[p as usize]
    }

    fn feature(&self, p: u32, f: usize) -> f64 {
        self.x.get(self.rows[p as usize], f)
    }

    fn build(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let samples: Vec<f64> = match lists.first() {
            Some(l) => l.iter().map(|&p| self.value(p)).collect(),
            None => self.targets.to_vec(),
        };
        let node_mean = mean(&samples).unwrap_or(0.0);
        self.nodes.push(Node::Leaf { value: node_mean });

        let n = samples.len();
        let constant = samples.iter().all(|&v| v == samples[0]);
        if depth >= self.params.max_depth
            || n < 2 * self.params.min_leaf.max(1)
            || constant
            || lists.is_empty()
        {
            return id;
        }
        let Some(best) = self.best_split(&lists, node_mean) else {
            return id;
        };

        for &p in &lists[best.feature] {
            self.is_left[p as usize] = self.feature(p, best.feature) <= best.threshold;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in lists {
            let (l, r): (Vec<u32>, Vec<u32>) =
                list.into_iter().partition(|&p| self.is_left[p as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = self.build(left_lists, depth + 1);
        let right = self.build(right_lists, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self, total: usize) -> Vec<usize> {
        let mut features: Vec<usize> = (0..total).collect();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < total => {
                rng.partial_shuffle(&mut features, m.max(1));
                features.truncate(m.max(1));
                features.sort_unstable();
                features
            }
            _ => features,
        }
    }

    fn best_split(&mut self, lists: &[Vec<u32>], node_mean: f64) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features(lists.len()) {
            let list = &lists[f];
            let n = list.len();
            let total: f64 = list.iter().map(|&p| self.value(p) - node_mean).sum();
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.value(list[i]) - node_mean;
                let left_n = i + 1;
                let right_n = n - left_n;
                if left_n < min_leaf {
                    continue;
                }
                if right_n < min_leaf {
                    break;
                }
                let a = self.feature(list[i], f);
                let b = self.feature(list[i + 1], f);
                if a >= b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - total * total / n as f64;
                if gain > 0.0 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}
