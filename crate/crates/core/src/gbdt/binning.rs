//! Equal-frequency discretization of feature columns into at most 63 bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::gbdt::transform::Transform;

pub const MAX_BIN: usize = 63;

/// Dense row-major feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize, values: Vec<f64>) -> Result<Self> {
        if n_features == 0 || values.len() % n_features != 0 {
            return Err(Error::Validation(format!(
                "{} values do not form rows of {n_features} features",
                values.len()
            )));
        }
        Ok(FeatureMatrix { n_features, values })
    }

    pub fn from_vectors(rows: &[FeatureVector]) -> Self {
        let values = rows.iter().flat_map(|r| r.0).collect();
        FeatureMatrix {
            n_features: crate::features::N_FEATURES,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn column(&self, f: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(f).step_by(self.n_features).copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_features)
    }
}

/// Upper bin edges of one feature. Bin `i` holds values `x` with
/// `edges[i-1] < x <= edges[i]`; the last bin is unbounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub upper_edges: Vec<f64>,
}

impl BinMapper {
    pub fn n_bins(&self) -> usize {
        self.upper_edges.len() + 1
    }

    #[inline]
    pub fn bin(&self, x: f64) -> u8 {
        self.upper_edges.partition_point(|e| *e < x) as u8
    }

    /// Raw threshold equivalent to "bin <= `bin`".
    pub fn threshold(&self, bin: usize) -> f64 {
        self.upper_edges[bin]
    }

    pub fn validate(&self, max_bins: usize) -> Result<()> {
        if self.n_bins() > max_bins {
            return Err(Error::Validation(format!("{} bins exceed max_bin {max_bins}", self.n_bins())));
        }
        if self.upper_edges.iter().any(|e| !e.is_finite()) || self.upper_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("bin edges must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    /// Fits edges for one column. Columns with at most `max_bins` distinct
    /// values get one bin per value; otherwise cuts are placed so each bin
    /// holds about `n / max_bins` rows.
    pub fn fit(values: impl Iterator<Item = f64>, max_bins: usize) -> BinMapper {
        let max_bins = max_bins.clamp(1, 255);
        let mut sorted: Vec<f64> = values.filter(|v| !v.is_nan()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted.iter().copied() {
            match distinct.last_mut() {
                Some((last, c)) if *last == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let n = sorted.len();
        let mut edges = Vec::new();
        if distinct.len() <= max_bins {
            for w in distinct.windows(2) {
                edges.push(midpoint(w[0].0, w[1].0));
            }
        } else {
            let per_bin = n as f64 / max_bins as f64;
            let mut cum = 0usize;
            for (k, (v, c)) in distinct.iter().enumerate() {
                cum += c;
                if edges.len() + 1 >= max_bins || k + 1 == distinct.len() {
                    break;
                }
                if cum as f64 >= (edges.len() + 1) as f64 * per_bin {
                    edges.push(midpoint(*v, distinct[k + 1].0));
                }
            }
        }
        BinMapper { upper_edges: edges }
    }
}

/// A value in `[a, b)`, strictly below `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Column store of bin ids plus the target in transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDataset {
    pub mappers: Vec<BinMapper>,
    /// One column of bin ids per feature.
    pub columns: Vec<Vec<u8>>,
    pub target: Vec<f64>,
    pub transform: Transform,
}

impl BinnedDataset {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.mappers.len()
    }

    /// Bins `matrix` with already-fitted edges, e.g. validation data that
    /// must share the training boundaries.
    pub fn with_mappers(matrix: &FeatureMatrix, mappers: Vec<BinMapper>) -> Result<Self> {
        if mappers.len() != matrix.n_features() {
            return Err(Error::Validation(format!(
                "{} bin mappers for {} features",
                mappers.len(),
                matrix.n_features()
            )));
        }
        let columns = mappers
            .iter()
            .enumerate()
            .map(|(f, m)| matrix.column(f).map(|x| m.bin(x)).collect())
            .collect();
        Ok(BinnedDataset {
            mappers,
            columns,
            target: vec![0.0; matrix.n_rows()],
            transform: Transform::Identity,
        })
    }

    /// Sets the training target from concentrations, applying `transform`.
    pub fn with_target(mut self, raw: &[f64], transform: Transform) -> Result<Self> {
        if raw.len() != self.n_rows() {
            return Err(Error::Validation(format!(
                "{} targets for {} rows",
                raw.len(),
                self.n_rows()
            )));
        }
        self.target = raw.iter().map(|y| transform.forward(*y)).collect::<Result<_>>()?;
        self.transform = transform;
        Ok(self)
    }

    pub fn same_bins(&self, other: &BinnedDataset) -> bool {
        self.mappers == other.mappers
    }
}

/// Fits per-feature edges on `matrix` and bins it. The target starts at zero
/// under the identity transform; see [`BinnedDataset::with_target`].
pub fn bin_features(matrix: &FeatureMatrix, max_bins: usize) -> BinnedDataset {
    let mappers: Vec<BinMapper> = (0..matrix.n_features())
        .map(|f| BinMapper::fit(matrix.column(f), max_bins))
        .collect();
    BinnedDataset::with_mappers(matrix, mappers).expect("mapper count matches matrix")
}
