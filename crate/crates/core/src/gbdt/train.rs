//! Leaf-wise boosting loop.

use crate::error::{Error, Result};
use crate::gbdt::binning::BinnedDataset;
use crate::gbdt::goss::goss_sample;
use crate::gbdt::histogram::{find_best_split, Histogram, NodeTotals, SplitInfo};
use crate::gbdt::loss::{loss_grad_hess, Loss};
use crate::gbdt::model::{TrainParams, TreeEnsemble};
use crate::gbdt::tree::{leaf_ref, Node, Tree};

/// Per-round losses in transformed space; index 0 is the base score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
}

fn round_seed(seed: u64, round: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn train(params: &TrainParams, train: &BinnedDataset, valid: &BinnedDataset) -> Result<TreeEnsemble> {
    train_with_trace(params, train, valid).map(|(e, _)| e)
}

/// Boosts trees until the validation loss has not improved for
/// `early_stopping_rounds` rounds or `max_trees` is reached. With an empty
/// validation set the training loss drives early stopping.
pub fn train_with_trace(
    params: &TrainParams,
    train: &BinnedDataset,
    valid: &BinnedDataset,
) -> Result<(TreeEnsemble, TrainingTrace)> {
    params.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Validation("training set is empty".into()));
    }
    if !train.same_bins(valid) {
        return Err(Error::Validation("training and validation sets use different bin boundaries".into()));
    }
    if valid.n_rows() > 0 && valid.transform != train.transform {
        return Err(Error::Validation("training and validation targets use different transforms".into()));
    }

    let loss = params.loss;
    let lr = params.learning_rate;
    // shifted mean: exact for constant targets
    let anchor = train.target[0];
    let base_score = anchor + train.target.iter().map(|y| y - anchor).sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut vpred = vec![base_score; valid.n_rows()];
    let use_valid = valid.n_rows() > 0;

    let mut trace = TrainingTrace::default();
    trace.train_loss.push(loss.mean(&train.target, &pred));
    trace.valid_loss.push(if use_valid { loss.mean(&valid.target, &vpred) } else { trace.train_loss[0] });
    let mut best_loss = trace.valid_loss[0];
    let mut best_iteration = 0;

    let mut trees = Vec::new();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut wgrad = vec![0.0; n];
    let mut whess = vec![0.0; n];
    let mut leaf_of = vec![0u32; n];

    for round in 0..params.max_trees {
        for r in 0..n {
            let (g, h) = loss_grad_hess(&loss, train.target[r], pred[r]);
            grad[r] = g;
            hess[r] = h;
        }
        let sample = goss_sample(&grad, params.goss_top_rate, params.goss_other_rate, round_seed(params.seed, round))?;
        for (&r, &w) in sample.indices.iter().zip(&sample.weights) {
            wgrad[r as usize] = grad[r as usize] * w;
            whess[r as usize] = hess[r as usize] * w;
        }

        let mut tree = grow_tree(train, &sample.indices, &wgrad, &whess, params);
        for (r, slot) in leaf_of.iter_mut().enumerate() {
            *slot = tree.leaf_index_binned(train, r) as u32;
        }
        damp_leaves(&mut tree.leaves, &leaf_of, &pred, &train.target, lr, &loss);
        if tree.n_leaves() == 1 && tree.leaves[0] == 0.0 {
            break;
        }

        for r in 0..n {
            pred[r] += lr * tree.leaves[leaf_of[r] as usize];
        }
        for (r, p) in vpred.iter_mut().enumerate() {
            *p += lr * tree.leaves[tree.leaf_index_binned(valid, r)];
        }
        trees.push(tree);

        let train_loss = loss.mean(&train.target, &pred);
        let eval_loss = if use_valid { loss.mean(&valid.target, &vpred) } else { train_loss };
        trace.train_loss.push(train_loss);
        trace.valid_loss.push(eval_loss);

        if eval_loss < best_loss {
            best_loss = eval_loss;
            best_iteration = trees.len();
        } else if trees.len() - best_iteration >= params.early_stopping_rounds {
            break;
        }
    }

    let ensemble = TreeEnsemble {
        pollutant: None,
        params: params.clone(),
        trees,
        learning_rate: lr,
        base_score,
        transform: train.transform,
        loss,
        best_iteration,
        bin_boundaries: train.mappers.clone(),
    };
    Ok((ensemble, trace))
}

struct LeafState {
    rows: Vec<u32>,
    totals: NodeTotals,
    hist: Option<Histogram>,
    split: Option<SplitInfo>,
    /// Node whose child reference points at this leaf, and which side.
    parent: Option<(usize, bool)>,
}

fn totals_of(rows: &[u32], grad: &[f64], hess: &[f64]) -> NodeTotals {
    let mut t = NodeTotals::default();
    for &r in rows {
        t.grad += grad[r as usize];
        t.hess += hess[r as usize];
        t.count += 1;
    }
    t
}

fn evaluate_leaf(state: &mut LeafState, params: &TrainParams) {
    state.split = state
        .hist
        .as_ref()
        .and_then(|h| find_best_split(h, state.totals, params.lambda_l2, params.min_data_in_leaf));
    if state.split.is_none() {
        state.hist = None;
    }
}

/// Grows one tree best-first: the leaf with the largest gain is split until
/// `num_leaves` is reached or no leaf has a valid split. Depth is unbounded.
fn grow_tree(data: &BinnedDataset, rows: &[u32], grad: &[f64], hess: &[f64], params: &TrainParams) -> Tree {
    let can_split = |count: u32| count as usize >= 2 * params.min_data_in_leaf.max(1);
    let totals = totals_of(rows, grad, hess);
    let hist = can_split(totals.count).then(|| Histogram::build(data, rows, grad, hess));
    let mut root = LeafState {
        rows: rows.to_vec(),
        totals,
        hist,
        split: None,
        parent: None,
    };
    evaluate_leaf(&mut root, params);
    let mut leaves = vec![root];
    let mut nodes: Vec<Node> = Vec::new();

    while leaves.len() < params.num_leaves {
        let mut chosen: Option<(usize, f64)> = None;
        for (i, l) in leaves.iter().enumerate() {
            if let Some(s) = &l.split {
                if chosen.is_none_or(|(_, g)| s.gain > g) {
                    chosen = Some((i, s.gain));
                }
            }
        }
        let Some((leaf_id, _)) = chosen else { break };

        let new_leaf = leaves.len();
        let parent = &mut leaves[leaf_id];
        let split = parent.split.take().expect("chosen leaf has a split");
        let parent_hist = parent.hist.take().expect("splittable leaf keeps its histogram");
        let column = &data.columns[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = std::mem::take(&mut parent.rows)
            .into_iter()
            .partition(|&r| column[r as usize] as usize <= split.threshold_bin);

        let node_id = nodes.len();
        nodes.push(Node {
            feature: split.feature,
            threshold_bin: split.threshold_bin,
            threshold: data.mappers[split.feature].threshold(split.threshold_bin),
            default_left: true,
            left: leaf_ref(leaf_id),
            right: leaf_ref(new_leaf),
        });
        if let Some((p, is_left)) = parent.parent {
            if is_left {
                nodes[p].left = node_id as i32;
            } else {
                nodes[p].right = node_id as i32;
            }
        }

        let left_split = can_split(split.left.count);
        let right_split = can_split(split.right.count);
        let (left_hist, right_hist) = if !left_split && !right_split {
            (None, None)
        } else if left_rows.len() <= right_rows.len() {
            let small = Histogram::build(data, &left_rows, grad, hess);
            let large = right_split.then(|| Histogram::subtract(&parent_hist, &small));
            (left_split.then_some(small), large)
        } else {
            let small = Histogram::build(data, &right_rows, grad, hess);
            let large = left_split.then(|| Histogram::subtract(&parent_hist, &small));
            (large, right_split.then_some(small))
        };

        leaves[leaf_id] = LeafState {
            rows: left_rows,
            totals: split.left,
            hist: left_hist,
            split: None,
            parent: Some((node_id, true)),
        };
        evaluate_leaf(&mut leaves[leaf_id], params);
        let mut right = LeafState {
            rows: right_rows,
            totals: split.right,
            hist: right_hist,
            split: None,
            parent: Some((node_id, false)),
        };
        evaluate_leaf(&mut right, params);
        leaves.push(right);
    }

    let values = leaves
        .iter()
        .map(|l| -l.totals.grad / (l.totals.hess + params.lambda_l2))
        .collect();
    Tree { nodes, leaves: values }
}

/// Halves any leaf value whose step would raise the training loss of the
/// rows in that leaf, so the per-round training loss never increases.
fn damp_leaves(leaves: &mut [f64], leaf_of: &[u32], pred: &[f64], target: &[f64], lr: f64, loss: &Loss) {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); leaves.len()];
    for (r, l) in leaf_of.iter().enumerate() {
        members[*l as usize].push(r as u32);
    }
    for (value, rows) in leaves.iter_mut().zip(&members) {
        if rows.is_empty() {
            continue;
        }
        let at = |w: f64| -> f64 {
            rows.iter()
                .map(|&r| loss.value(target[r as usize], pred[r as usize] + lr * w))
                .sum()
        };
        let before = at(0.0);
        let mut w = *value;
        let mut halvings = 0;
        while w != 0.0 && at(w) > before {
            w *= 0.5;
            halvings += 1;
            if halvings == 40 {
                w = 0.0;
            }
        }
        *value = w;
    }
}
