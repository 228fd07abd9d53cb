//! Per-node gradient histograms and split search over bin boundaries.

use rayon::prelude::*;

use crate::gbdt::binning::BinnedDataset;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStat {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

impl BinStat {
    #[inline]
    fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1;
    }
}

/// Gradient/hessian/count totals per (feature, bin), features laid out back
/// to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    offsets: Vec<usize>,
    bins: Vec<BinStat>,
}

/// Rows below this size are accumulated on the calling thread.
const PARALLEL_ROWS: usize = 4096;

impl Histogram {
    pub fn zeros(bin_counts: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(bin_counts.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for c in bin_counts {
            total += c;
            offsets.push(total);
        }
        Histogram {
            offsets,
            bins: vec![BinStat::default(); total],
        }
    }

    pub fn n_features(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn feature(&self, f: usize) -> &[BinStat] {
        &self.bins[self.offsets[f]..self.offsets[f + 1]]
    }

    /// Accumulates `grad[r]`, `hess[r]` of each listed row. `grad` and `hess`
    /// are indexed by row id. Features are filled independently, so the
    /// result does not depend on thread scheduling.
    pub fn build(data: &BinnedDataset, rows: &[u32], grad: &[f64], hess: &[f64]) -> Self {
        let counts: Vec<usize> = data.mappers.iter().map(|m| m.n_bins()).collect();
        let mut hist = Histogram::zeros(&counts);
        let fill = |(f, slot): (usize, &mut [BinStat])| {
            let column = &data.columns[f];
            for &r in rows {
                let r = r as usize;
                slot[column[r] as usize].add(grad[r], hess[r]);
            }
        };
        let slices = split_by_offsets(&mut hist.bins, &hist.offsets);
        if rows.len() >= PARALLEL_ROWS {
            slices.into_par_iter().enumerate().for_each(fill);
        } else {
            slices.into_iter().enumerate().for_each(fill);
        }
        hist
    }

    /// `parent - child`, bin by bin.
    pub fn subtract(parent: &Histogram, child: &Histogram) -> Histogram {
        debug_assert_eq!(parent.offsets, child.offsets);
        let bins = parent
            .bins
            .iter()
            .zip(&child.bins)
            .map(|(p, c)| BinStat {
                grad: p.grad - c.grad,
                hess: p.hess - c.hess,
                count: p.count - c.count,
            })
            .collect();
        Histogram {
            offsets: parent.offsets.clone(),
            bins,
        }
    }
}

fn split_by_offsets<'a>(mut bins: &'a mut [BinStat], offsets: &[usize]) -> Vec<&'a mut [BinStat]> {
    let mut out = Vec::with_capacity(offsets.len() - 1);
    for w in offsets.windows(2) {
        let (head, tail) = bins.split_at_mut(w[1] - w[0]);
        out.push(head);
        bins = tail;
    }
    out
}

/// Totals of a node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeTotals {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub feature: usize,
    /// Rows with `bin <= threshold_bin` go left.
    pub threshold_bin: usize,
    pub gain: f64,
    pub left: NodeTotals,
    pub right: NodeTotals,
}

/// Gains at or below this are treated as no improvement. Gradients live in
/// log-concentration units, where a split worth less than 1e-6 is noise.
pub const MIN_SPLIT_GAIN: f64 = 1e-6;

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Best (feature, bin) split by second-order gain. Both children must hold
/// at least `min_data_in_leaf` rows and the gain must exceed
/// [`MIN_SPLIT_GAIN`]. Ties go to the lower feature index, then the lower
/// bin.
pub fn find_best_split(
    hist: &Histogram,
    parent: NodeTotals,
    lambda_l2: f64,
    min_data_in_leaf: usize,
) -> Option<SplitInfo> {
    let min_data = min_data_in_leaf.max(1) as u32;
    if parent.count < 2 * min_data {
        return None;
    }
    let parent_score = score(parent.grad, parent.hess, lambda_l2);
    let mut best: Option<SplitInfo> = None;
    for f in 0..hist.n_features() {
        let bins = hist.feature(f);
        let mut left = NodeTotals::default();
        for (t, b) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
            left.grad += b.grad;
            left.hess += b.hess;
            left.count += b.count;
            if left.count < min_data {
                continue;
            }
            let right_count = parent.count - left.count;
            if right_count < min_data {
                break;
            }
            let right = NodeTotals {
                grad: parent.grad - left.grad,
                hess: parent.hess - left.hess,
                count: right_count,
            };
            let gain = score(left.grad, left.hess, lambda_l2) + score(right.grad, right.hess, lambda_l2) - parent_score;
            if !(gain > MIN_SPLIT_GAIN) {
                continue;
            }
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitInfo {
                    feature: f,
                    threshold_bin: t,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
    best
}
