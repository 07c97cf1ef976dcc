//! Regression tree growth with sparsity-aware splits.
//!
//! Split candidates are enumerated over the observed values of each feature;
//! records with an absent value are routed to whichever child minimizes the
//! regularized loss, and that choice is stored as the split's default
//! direction for prediction time.

use serde::{Deserialize, Serialize};

/// Child a record with an absent split value is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

/// One tree node; internal nodes carry the learned default direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        default_direction: Direction,
        /// Loss reduction of this split; feeds feature importance.
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

/// A single boosted regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: TreeNode,
}

impl Tree {
    /// Root-to-leaf traversal; absent values follow the default direction.
    pub fn predict(&self, values: &[Option<f64>]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Internal {
                    feature,
                    threshold,
                    default_direction,
                    left,
                    right,
                    ..
                } => {
                    let go_left = match values[*feature] {
                        Some(v) => v < *threshold,
                        None => *default_direction == Direction::Left,
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    /// Adds every split's gain to `gains`, indexed by feature.
    pub fn accumulate_gains(&self, gains: &mut [f64]) {
        fn walk(node: &TreeNode, gains: &mut [f64]) {
            if let TreeNode::Internal {
                feature,
                gain,
                left,
                right,
                ..
            } = node
            {
                gains[*feature] += *gain;
                walk(left, gains);
                walk(right, gains);
            }
        }
        walk(&self.root, gains);
    }

    pub fn max_depth(&self) -> usize {
        fn depth(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }
}

/// Column-major training view shared by all folds and rounds.
#[derive(Debug, Clone)]
pub(crate) struct TrainFrame {
    pub n_rows: usize,
    /// Per feature: observed `(value, row)` pairs sorted by value, plus the
    /// rows where the feature is absent.
    pub columns: Vec<SortedColumn>,
    /// Row-major copy for tree traversal.
    pub row_values: Vec<Vec<Option<f64>>>,
    /// Class index per row.
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SortedColumn {
    pub sorted: Vec<(f64, u32)>,
    pub missing: Vec<u32>,
}

impl TrainFrame {
    pub fn new(row_values: Vec<Vec<Option<f64>>>, labels: Vec<usize>, n_classes: usize) -> Self {
        let n_rows = row_values.len();
        let n_features = row_values.first().map_or(0, Vec::len);
        let mut columns = Vec::with_capacity(n_features);
        for j in 0..n_features {
            let mut sorted = Vec::new();
            let mut missing = Vec::new();
            for (i, row) in row_values.iter().enumerate() {
                match row[j] {
                    Some(v) => sorted.push((v, i as u32)),
                    None => missing.push(i as u32),
                }
            }
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            columns.push(SortedColumn { sorted, missing });
        }
        TrainFrame {
            n_rows,
            columns,
            row_values,
            labels,
            n_classes,
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf_count: usize,
    pub lambda: f64,
    pub learning_rate: f64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    default_direction: Direction,
    gain: f64,
}

/// Grows one regression tree on `rows` against gradients and hessians.
///
/// `in_node` is scratch space of length `frame.n_rows`, false on entry and
/// restored to false on exit.
pub(crate) fn grow_tree(
    frame: &TrainFrame,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    in_node: &mut [bool],
) -> Tree {
    let root = grow_node(frame, rows, grad, hess, params, in_node, 0);
    Tree { root }
}

fn leaf_weight(g: f64, h: f64, params: &GrowParams) -> f64 {
    params.learning_rate * (-g / (h + params.lambda))
}

fn grow_node(
    frame: &TrainFrame,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    in_node: &mut [bool],
    depth: usize,
) -> TreeNode {
    let mut g_total = 0.0;
    let mut h_total = 0.0;
    for &r in rows {
        g_total += grad[r as usize];
        h_total += hess[r as usize];
    }
    let make_leaf = |g: f64, h: f64| TreeNode::Leaf {
        weight: leaf_weight(g, h, params),
    };
    if depth >= params.max_depth || rows.len() < 2 * params.min_leaf_count {
        return make_leaf(g_total, h_total);
    }

    let best = find_best_split(frame, rows, grad, hess, params, in_node, g_total, h_total);
    let Some(best) = best else {
        return make_leaf(g_total, h_total);
    };

    let mut left_rows = Vec::new();
    let mut right_rows = Vec::new();
    for &r in rows {
        let go_left = match frame.row_values[r as usize][best.feature] {
            Some(v) => v < best.threshold,
            None => best.default_direction == Direction::Left,
        };
        if go_left {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    debug_assert!(left_rows.len() >= params.min_leaf_count);
    debug_assert!(right_rows.len() >= params.min_leaf_count);

    let left = grow_node(frame, &left_rows, grad, hess, params, in_node, depth + 1);
    let right = grow_node(frame, &right_rows, grad, hess, params, in_node, depth + 1);
    TreeNode::Internal {
        feature: best.feature,
        threshold: best.threshold,
        default_direction: best.default_direction,
        gain: best.gain,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[allow(clippy::too_many_arguments)]
fn find_best_split(
    frame: &TrainFrame,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    in_node: &mut [bool],
    g_total: f64,
    h_total: f64,
) -> Option<BestSplit> {
    const MIN_GAIN: f64 = 1e-12;
    let score = |g: f64, h: f64| g * g / (h + params.lambda);
    let parent_score = score(g_total, h_total);
    let n_node = rows.len();

    for &r in rows.iter() {
        in_node[r as usize] = true;
    }

    let mut best: Option<BestSplit> = None;
    for (feature, column) in frame.columns.iter().enumerate() {
        // Gradient mass of this node's rows with the feature absent.
        let mut g_miss = 0.0;
        let mut h_miss = 0.0;
        let mut n_miss = 0usize;
        for &r in &column.missing {
            if in_node[r as usize] {
                g_miss += grad[r as usize];
                h_miss += hess[r as usize];
                n_miss += 1;
            }
        }
        let n_observed = n_node - n_miss;
        if n_observed < 2 {
            continue;
        }

        let mut g_left = 0.0;
        let mut h_left = 0.0;
        let mut n_left = 0usize;
        let mut prev_value: Option<f64> = None;
        for &(value, r) in &column.sorted {
            if !in_node[r as usize] {
                continue;
            }
            if let Some(prev) = prev_value {
                if value > prev && n_left > 0 && n_left < n_observed {
                    let threshold = prev + (value - prev) / 2.0;
                    for direction in [Direction::Left, Direction::Right] {
                        let (gl, hl, nl) = if direction == Direction::Left {
                            (g_left + g_miss, h_left + h_miss, n_left + n_miss)
                        } else {
                            (g_left, h_left, n_left)
                        };
                        let nr = n_node - nl;
                        if nl < params.min_leaf_count || nr < params.min_leaf_count {
                            continue;
                        }
                        let gr = g_total - gl;
                        let hr = h_total - hl;
                        let gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent_score);
                        if gain > MIN_GAIN && best.as_ref().map_or(true, |b| gain > b.gain) {
                            best = Some(BestSplit {
                                feature,
                                threshold,
                                default_direction: direction,
                                gain,
                            });
                        }
                    }
                }
            }
            g_left += grad[r as usize];
            h_left += hess[r as usize];
            n_left += 1;
            prev_value = Some(value);
        }
    }

    for &r in rows.iter() {
        in_node[r as usize] = false;
    }
    best
}
