//! Randomized hyperparameter search scored on the validation set.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{train, BinnedDataset, Loss, TrainParams, TreeEnsemble, MAX_BIN};

pub const FIXED_EARLY_STOPPING_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub num_leaves: (usize, usize),
    pub min_data_in_leaf: (usize, usize),
    /// Sampled log-uniformly.
    pub lambda_l2: (f64, f64),
    /// Settings shared by every candidate. Early stopping and the loss are
    /// overwritten with their fixed values.
    #[serde(default)]
    pub base: TrainParams,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            num_leaves: (1000, 4095),
            min_data_in_leaf: (20, 200),
            lambda_l2: (1e-3, 10.0),
            base: TrainParams::default(),
        }
    }
}

impl SearchSpace {
    pub const MAX_BIN: usize = MAX_BIN;

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_leaves.0 > self.num_leaves.1 || self.num_leaves.0 < 2 || self.num_leaves.1 > 4095 {
            problems.push(format!("num_leaves range {:?} must be non-empty within [2, 4095]", self.num_leaves));
        }
        if self.min_data_in_leaf.0 > self.min_data_in_leaf.1 || self.min_data_in_leaf.0 < 1 {
            problems.push(format!("min_data_in_leaf range {:?} must be non-empty and >= 1", self.min_data_in_leaf));
        }
        let (lo, hi) = self.lambda_l2;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            problems.push(format!("lambda_l2 range {:?} must be positive and non-empty", self.lambda_l2));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// `n` independent draws from the space, fully determined by `seed`.
pub fn sample_param_sets(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<TrainParams>> {
    space.validate()?;
    if n < 1 {
        return Err(Error::Validation("need at least one parameter set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (llo, lhi) = (space.lambda_l2.0.ln(), space.lambda_l2.1.ln());
    Ok((0..n)
        .map(|_| {
            let mut p = space.base.clone();
            p.num_leaves = rng.gen_range(space.num_leaves.0..=space.num_leaves.1);
            p.min_data_in_leaf = rng.gen_range(space.min_data_in_leaf.0..=space.min_data_in_leaf.1);
            let u: f64 = rng.gen();
            p.lambda_l2 = if llo == lhi {
                space.lambda_l2.0
            } else {
                (llo + u * (lhi - llo)).exp().clamp(space.lambda_l2.0, space.lambda_l2.1)
            };
            p.early_stopping_rounds = FIXED_EARLY_STOPPING_ROUNDS;
            p.loss = Loss::MseLog;
            p
        })
        .collect())
}

/// Index of the minimal MSE; the earliest wins ties.
pub fn select_best_index(mses: &[f64]) -> Result<usize> {
    if mses.is_empty() {
        return Err(Error::Validation("no candidates to select from".into()));
    }
    if let Some(i) = mses.iter().position(|m| !m.is_finite()) {
        return Err(Error::Validation(format!("candidate {i} has non-finite validation MSE")));
    }
    let mut best = 0;
    for (i, m) in mses.iter().enumerate() {
        if *m < mses[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn select_best(results: &[(TrainParams, f64)]) -> Result<TrainParams> {
    let mses: Vec<f64> = results.iter().map(|(_, m)| *m).collect();
    Ok(results[select_best_index(&mses)?].0.clone())
}

/// Mean squared error in the dataset's transformed target space.
pub fn validation_mse(model: &TreeEnsemble, valid: &BinnedDataset, rows: &[Vec<f64>]) -> Result<f64> {
    if rows.len() != valid.n_rows() || rows.is_empty() {
        return Err(Error::Validation("validation rows do not match the binned set".into()));
    }
    let mut sum = 0.0;
    for (x, z) in rows.iter().zip(&valid.target) {
        let d = model.predict_transformed(x)? - z;
        sum += d * d;
    }
    Ok(sum / rows.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TuningReport {
    pub candidates: Vec<(TrainParams, f64)>,
    pub selected: usize,
    pub model: TreeEnsemble,
}

impl TuningReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["candidate_idx", "num_leaves", "min_data_in_leaf", "lambda_l2", "val_mse", "selected"])?;
        for (i, (p, mse)) in self.candidates.iter().enumerate() {
            w.write_record([
                i.to_string(),
                p.num_leaves.to_string(),
                p.min_data_in_leaf.to_string(),
                p.lambda_l2.to_string(),
                mse.to_string(),
                (i == self.selected).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("writing tuning report", e))
    }
}

/// Trains every sampled candidate on `train_set`, scores it on `valid` and
/// keeps the best model.
pub fn tune(
    space: &SearchSpace,
    n: usize,
    seed: u64,
    train_set: &BinnedDataset,
    valid: &BinnedDataset,
    valid_rows: &[Vec<f64>],
) -> Result<TuningReport> {
    let params = sample_param_sets(space, n, seed)?;
    let fitted = params
        .par_iter()
        .map(|p| {
            let m = train(p, train_set, valid)?;
            let mse = validation_mse(&m, valid, valid_rows)?;
            Ok((m, mse))
        })
        .collect::<Result<Vec<_>>>()?;
    let mses: Vec<f64> = fitted.iter().map(|(_, m)| *m).collect();
    let selected = select_best_index(&mses)?;
    let model = fitted[selected].0.clone();
    Ok(TuningReport {
        candidates: params.into_iter().zip(mses).collect(),
        selected,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_in_bounds_and_reproducible() {
        let space = SearchSpace::default();
        let a = sample_param_sets(&space, 5, 9).unwrap();
        assert_eq!(a.len(), 5);
        for p in &a {
            assert!((1000..=4095).contains(&p.num_leaves));
            assert!((20..=200).contains(&p.min_data_in_leaf));
            assert!((1e-3..=10.0).contains(&p.lambda_l2));
            assert_eq!(p.early_stopping_rounds, 10);
            assert_eq!(p.loss, Loss::MseLog);
        }
        assert_eq!(a, sample_param_sets(&space, 5, 9).unwrap());
        assert_ne!(a, sample_param_sets(&space, 5, 10).unwrap());
    }

    #[test]
    fn degenerate_space_repeats() {
        let space = SearchSpace {
            num_leaves: (1500, 1500),
            min_data_in_leaf: (30, 30),
            lambda_l2: (0.5, 0.5),
            base: TrainParams::default(),
        };
        let a = sample_param_sets(&space, 4, 1).unwrap();
        assert!(a.iter().all(|p| *p == a[0]));
        assert_eq!(a[0].lambda_l2, 0.5);
    }

    #[test]
    fn empty_range_rejected() {
        let space = SearchSpace {
            num_leaves: (2000, 1000),
            ..SearchSpace::default()
        };
        assert!(matches!(sample_param_sets(&space, 5, 0), Err(Error::Validation(_))));
        assert!(sample_param_sets(&SearchSpace::default(), 0, 0).is_err());
    }

    #[test]
    fn argmin_with_first_tie() {
        assert_eq!(select_best_index(&[3.0, 1.0, 2.0]).unwrap(), 1);
        assert_eq!(select_best_index(&[1.0, 1.0]).unwrap(), 0);
        assert!(select_best_index(&[1.0, f64::NAN]).is_err());
        let p = |l| TrainParams {
            num_leaves: l,
            ..TrainParams::default()
        };
        assert_eq!(select_best(&[(p(10), 3.0), (p(20), 1.0), (p(30), 2.0)]).unwrap().num_leaves, 20);
    }
}
