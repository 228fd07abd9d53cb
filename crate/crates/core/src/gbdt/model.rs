use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::gbdt::binning::BinMapper;
use crate::gbdt::loss::Loss;
use crate::gbdt::transform::Transform;
use crate::gbdt::tree::Tree;
use crate::types::Pollutant;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub lambda_l2: f64,
    pub learning_rate: f64,
    pub max_trees: usize,
    pub early_stopping_rounds: usize,
    pub goss_top_rate: f64,
    pub goss_other_rate: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            num_leaves: 2047,
            min_data_in_leaf: 20,
            lambda_l2: 1.0,
            learning_rate: 0.1,
            max_trees: 1000,
            early_stopping_rounds: 10,
            goss_top_rate: 0.2,
            goss_other_rate: 0.1,
            loss: Loss::MseLog,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(2..=4095).contains(&self.num_leaves) {
            problems.push(format!("num_leaves {} outside [2, 4095]", self.num_leaves));
        }
        if self.min_data_in_leaf < 1 {
            problems.push("min_data_in_leaf must be >= 1".to_string());
        }
        if !(self.lambda_l2 >= 0.0) || !self.lambda_l2.is_finite() {
            problems.push(format!("lambda_l2 {} must be finite and >= 0", self.lambda_l2));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            problems.push(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.early_stopping_rounds < 1 {
            problems.push("early_stopping_rounds must be >= 1".to_string());
        }
        let (a, b) = (self.goss_top_rate, self.goss_other_rate);
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a + b > 1.0 + 1e-12 || a + b == 0.0 {
            problems.push(format!("GOSS rates a={a}, b={b} need a, b in [0, 1], 0 < a + b <= 1"));
        }
        if let Loss::Pinball { q } = self.loss {
            if !(q > 0.0 && q < 1.0) {
                problems.push(format!("quantile {q} outside (0, 1)"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// A trained boosted ensemble with everything needed to predict from raw
/// feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub pollutant: Option<Pollutant>,
    pub params: TrainParams,
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub transform: Transform,
    pub loss: Loss,
    /// Number of leading trees used for prediction.
    pub best_iteration: usize,
    pub bin_boundaries: Vec<BinMapper>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    pollutant: Option<Pollutant>,
    loss: Loss,
    transform: Transform,
    params: TrainParams,
    base_score: f64,
    learning_rate: f64,
    best_iteration: usize,
    bin_boundaries: Vec<Vec<f64>>,
    trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.bin_boundaries.len()
    }

    /// Output in transformed space: base score plus the learning-rate scaled
    /// leaf values of the first `best_iteration` trees.
    pub fn predict_transformed(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| v.is_nan()) {
            return Err(Error::Input(format!("feature {i} is NaN")));
        }
        Ok(self.raw_score(x))
    }

    #[inline]
    pub(crate) fn raw_score(&self, x: &[f64]) -> f64 {
        let mut z = self.base_score;
        for tree in &self.trees[..self.best_iteration] {
            z += self.learning_rate * tree.predict(x);
        }
        z
    }

    /// Concentration prediction, never negative.
    pub fn predict(&self, f: &FeatureVector) -> Result<f64> {
        self.predict_slice(f.as_slice())
    }

    pub fn predict_slice(&self, x: &[f64]) -> Result<f64> {
        Ok(self.transform.inverse(self.predict_transformed(x)?))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            version: MODEL_VERSION,
            pollutant: self.pollutant,
            loss: self.loss,
            transform: self.transform,
            params: self.params.clone(),
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            best_iteration: self.best_iteration,
            bin_boundaries: self.bin_boundaries.iter().map(|m| m.upper_edges.clone()).collect(),
            trees: self.trees.clone(),
        };
        let mut bytes = serde_json::to_vec(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Decode(format!("model JSON: {e}")))?;
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => return Err(Error::Decode(format!("model version {v}, expected {MODEL_VERSION}"))),
            None => return Err(Error::Decode("model file lacks a version".into())),
        }
        let file: ModelFile =
            serde_json::from_value(probe).map_err(|e| Error::Decode(format!("model JSON: {e}")))?;
        let bin_boundaries: Vec<BinMapper> = file
            .bin_boundaries
            .into_iter()
            .map(|upper_edges| BinMapper { upper_edges })
            .collect();
        for m in &bin_boundaries {
            m.validate(255).map_err(|e| Error::Decode(e.to_string()))?;
        }
        for (i, t) in file.trees.iter().enumerate() {
            t.validate(bin_boundaries.len())
                .map_err(|e| Error::Decode(format!("tree {i}: {e}")))?;
        }
        if file.best_iteration > file.trees.len() {
            return Err(Error::Decode(format!(
                "best_iteration {} exceeds {} trees",
                file.best_iteration,
                file.trees.len()
            )));
        }
        if !file.base_score.is_finite() || !file.learning_rate.is_finite() {
            return Err(Error::Decode("non-finite base score or learning rate".into()));
        }
        Ok(TreeEnsemble {
            pollutant: file.pollutant,
            params: file.params,
            trees: file.trees,
            learning_rate: file.learning_rate,
            base_score: file.base_score,
            transform: file.transform,
            loss: file.loss,
            best_iteration: file.best_iteration,
            bin_boundaries,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        TreeEnsemble::from_json(&bytes)
    }
}
