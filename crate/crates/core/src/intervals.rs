//! Quantile triplets, non-crossing prediction intervals and placement
//! ranking by cumulative interval width.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::gbdt::{train, BinnedDataset, Loss, TrainParams, TreeEnsemble};
use crate::grid::{is_missing, PredictionTile};

pub const QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTriplet {
    pub q05: TreeEnsemble,
    pub q50: TreeEnsemble,
    pub q95: TreeEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalPrediction {
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

impl IntervalPrediction {
    /// Orders three raw quantile outputs.
    pub fn from_raw(raw: [f64; 3]) -> Self {
        let mut v = raw;
        v.sort_by(f64::total_cmp);
        IntervalPrediction {
            lo: v[0],
            mid: v[1],
            hi: v[2],
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Three pinball-loss trainings that differ only in the quantile.
pub fn train_triplet(params: &TrainParams, train_set: &BinnedDataset, valid: &BinnedDataset) -> Result<QuantileTriplet> {
    let fit = |q: f64| {
        let mut p = params.clone();
        p.loss = Loss::pinball(q)?;
        train(&p, train_set, valid)
    };
    let (q05, (q50, q95)) = rayon::join(|| fit(QUANTILES[0]), || rayon::join(|| fit(QUANTILES[1]), || fit(QUANTILES[2])));
    Ok(QuantileTriplet {
        q05: q05?,
        q50: q50?,
        q95: q95?,
    })
}

impl QuantileTriplet {
    pub fn models(&self) -> [&TreeEnsemble; 3] {
        [&self.q05, &self.q50, &self.q95]
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (name, m) in ["q05", "q50", "q95"].iter().zip(self.models()) {
            m.save(&dir.join(format!("{name}.json")))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let load = |name: &str| TreeEnsemble::load(&dir.join(format!("{name}.json")));
        let t = QuantileTriplet {
            q05: load("q05")?,
            q50: load("q50")?,
            q95: load("q95")?,
        };
        if t.q05.n_features() != t.q50.n_features() || t.q05.n_features() != t.q95.n_features() {
            return Err(Error::Validation("quantile models disagree on the feature schema".into()));
        }
        Ok(t)
    }
}

pub fn predict_interval(t: &QuantileTriplet, f: &FeatureVector) -> Result<IntervalPrediction> {
    predict_interval_slice(t, f.as_slice())
}

pub fn predict_interval_slice(t: &QuantileTriplet, x: &[f64]) -> Result<IntervalPrediction> {
    Ok(IntervalPrediction::from_raw([
        t.q05.predict_slice(x)?,
        t.q50.predict_slice(x)?,
        t.q95.predict_slice(x)?,
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedCell {
    pub rank: usize,
    pub lat: f64,
    pub lon: f64,
    pub interval_size_sum: f64,
}

const FIXED_SCALE: f64 = (1u64 << 32) as f64;

/// Per-cell Σ(hi − lo) over the supplied hours, ranked descending with
/// ties broken by (lat, lon). Cells missing in an hour skip that hour;
/// cells missing in every hour are left out.
pub fn interval_size_sum(tiles: &[(PredictionTile, PredictionTile)]) -> Result<Vec<RankedCell>> {
    let Some((first, _)) = tiles.first() else {
        return Ok(Vec::new());
    };
    for (lo, hi) in tiles {
        first.check_same_grid(lo)?;
        first.check_same_grid(hi)?;
        if lo.timestamp != hi.timestamp {
            return Err(Error::Validation(format!(
                "interval tiles paired across different hours ({} vs {})",
                lo.timestamp, hi.timestamp
            )));
        }
    }
    let spec = &first.spec;
    // Fixed-point accumulation keeps the sum independent of hour order.
    let mut sums = vec![0i128; spec.n_cells()];
    let mut seen = vec![false; spec.n_cells()];
    for (lo, hi) in tiles {
        for k in 0..spec.n_cells() {
            let (a, b) = (lo.values[k], hi.values[k]);
            if is_missing(a) || is_missing(b) {
                continue;
            }
            let w = (b as f64 - a as f64).max(0.0);
            sums[k] += (w * FIXED_SCALE).round() as i128;
            seen[k] = true;
        }
    }
    let mut cells: Vec<RankedCell> = (0..spec.n_cells())
        .filter(|&k| seen[k])
        .map(|k| {
            let (lat, lon) = spec.cell(k);
            RankedCell {
                rank: 0,
                lat,
                lon,
                interval_size_sum: sums[k] as f64 / FIXED_SCALE,
            }
        })
        .collect();
    cells.sort_by(|a, b| {
        b.interval_size_sum
            .total_cmp(&a.interval_size_sum)
            .then(a.lat.total_cmp(&b.lat))
            .then(a.lon.total_cmp(&b.lon))
    });
    for (i, c) in cells.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(cells)
}

pub fn write_ranking_csv<W: Write>(cells: &[RankedCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "lat", "lon", "interval_size_sum"])?;
    for c in cells {
        w.write_record([
            c.rank.to_string(),
            c.lat.to_string(),
            c.lon.to_string(),
            c.interval_size_sum.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing ranking CSV", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, TileKind, TILE_MISSING};
    use chrono::{Duration, TimeZone, Utc};

    #[test]
    fn sorting_repairs_crossing() {
        let p = IntervalPrediction::from_raw([2.0, 5.0, 9.0]);
        assert_eq!((p.lo, p.mid, p.hi), (2.0, 5.0, 9.0));
        let p = IntervalPrediction::from_raw([5.0, 4.0, 6.0]);
        assert_eq!((p.lo, p.mid, p.hi), (4.0, 5.0, 6.0));
    }

    fn pair(spec: &GridSpec, hour: i64, lo: Vec<f32>, hi: Vec<f32>) -> (PredictionTile, PredictionTile) {
        let t = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap() + Duration::hours(hour);
        (
            PredictionTile::new(None, t, TileKind::Q05, spec.clone(), lo).unwrap(),
            PredictionTile::new(None, t, TileKind::Q95, spec.clone(), hi).unwrap(),
        )
    }

    #[test]
    fn hand_added_three_cells_two_hours() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 1, 3).unwrap();
        let tiles = vec![
            pair(&spec, 0, vec![1.0, 2.0, 3.0], vec![2.0, 2.5, 7.0]),
            pair(&spec, 1, vec![0.0, 1.0, 1.0], vec![4.0, 1.25, 2.0]),
        ];
        let r = interval_size_sum(&tiles).unwrap();
        // widths: cell0 1 + 4 = 5, cell1 0.5 + 0.25 = 0.75, cell2 4 + 1 = 5
        let got: Vec<(usize, f64, f64)> = r.iter().map(|c| (c.rank, c.lon, c.interval_size_sum)).collect();
        assert_eq!(got, vec![(1, 0.0, 5.0), (2, 2.0, 5.0), (3, 1.0, 0.75)]);
    }

    #[test]
    fn zero_width_and_missing() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 2, 1).unwrap();
        let tiles = vec![pair(&spec, 0, vec![3.0, TILE_MISSING], vec![3.0, 1.0])];
        let r = interval_size_sum(&tiles).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].interval_size_sum, 0.0);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let a = GridSpec::new(0.0, 0.0, 1.0, 1, 2).unwrap();
        let b = GridSpec::new(0.0, 0.0, 1.0, 2, 1).unwrap();
        let tiles = vec![pair(&a, 0, vec![0.0; 2], vec![1.0; 2]), pair(&b, 1, vec![0.0; 2], vec![1.0; 2])];
        assert!(matches!(interval_size_sum(&tiles), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_layout() {
        let cells = [RankedCell {
            rank: 1,
            lat: -0.5,
            lon: 2.25,
            interval_size_sum: 3.5,
        }];
        let mut buf = Vec::new();
        write_ranking_csv(&cells, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,lat,lon,interval_size_sum\n1,-0.5,2.25,3.5\n");
    }
}
