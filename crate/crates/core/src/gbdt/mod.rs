//! Histogram gradient-boosted regression trees with GOSS row sampling.

pub mod binning;
pub mod goss;
pub mod histogram;
pub mod loss;
pub mod model;
pub mod train;
pub mod transform;
pub mod tree;

pub use binning::{bin_features, BinMapper, BinnedDataset, FeatureMatrix, MAX_BIN};
pub use goss::{goss_sample, GossSample};
pub use histogram::{find_best_split, BinStat, Histogram, NodeTotals, SplitInfo, MIN_SPLIT_GAIN};
pub use loss::{loss_grad_hess, Loss};
pub use model::{TrainParams, TreeEnsemble, MODEL_VERSION};
pub use train::{train, train_with_trace, TrainingTrace};
pub use transform::{inverse_transform, transform_target, Transform, LOG_EPS};
pub use tree::{Node, Tree};
