//! Per-station scores and their aggregates.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{Continent, Pollutant};

fn check_pair(obs: &[f64], pred: &[f64], min_len: usize) -> Result<()> {
    if obs.len() != pred.len() {
        return Err(Error::Validation(format!(
            "observation and prediction lengths differ ({} vs {})",
            obs.len(),
            pred.len()
        )));
    }
    if obs.len() < min_len {
        return Err(Error::Precondition(format!("need at least {min_len} values, got {}", obs.len())));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Coefficient of determination, 1 − SS_res / SS_tot.
pub fn r2(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred, 2)?;
    let m = mean(obs);
    let ss_tot: f64 = obs.iter().map(|o| (o - m) * (o - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Precondition("R² is undefined for constant observations".into()));
    }
    let ss_res: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of `pred − obs`; positive means overestimation.
pub fn bias(obs: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(obs, pred, 1)?;
    Ok(obs.iter().zip(pred).map(|(o, p)| p - o).sum::<f64>() / obs.len() as f64)
}

/// Product-moment correlation; `None` when either series is constant.
pub fn pearson(obs: &[f64], pred: &[f64]) -> Result<Option<f64>> {
    check_pair(obs, pred, 2)?;
    let (mo, mp) = (mean(obs), mean(pred));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (o, p) in obs.iter().zip(pred) {
        let (dx, dy) = (o - mo, p - mp);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationScore {
    pub station_id: String,
    pub pollutant: Pollutant,
    pub continent: Continent,
    pub n: usize,
    /// `None` when the observations are constant or too few.
    pub r2: Option<f64>,
    pub bias: f64,
    pub pearson: Option<f64>,
}

impl StationScore {
    pub fn compute(
        station_id: &str,
        pollutant: Pollutant,
        continent: Continent,
        obs: &[f64],
        pred: &[f64],
    ) -> Result<Self> {
        let bias = bias(obs, pred)?;
        let (r2, pearson) = if obs.len() >= 2 {
            (r2(obs, pred).ok(), pearson(obs, pred)?)
        } else {
            (None, None)
        };
        Ok(StationScore {
            station_id: station_id.to_string(),
            pollutant,
            continent,
            n: obs.len(),
            r2,
            bias,
            pearson,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_scores_csv<W: Write>(scores: &[StationScore], experiment: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["station_id", "pollutant", "experiment", "n", "r2", "bias", "pearson"])?;
    for s in scores {
        w.write_record([
            s.station_id.clone(),
            s.pollutant.as_str().to_string(),
            experiment.to_string(),
            s.n.to_string(),
            opt(s.r2),
            s.bias.to_string(),
            opt(s.pearson),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing scores CSV", e))
}

/// Station totals and positive-R² counts per continent for one pollutant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContinentRow {
    pub pollutant: Pollutant,
    pub total: usize,
    pub positive: BTreeMap<Continent, usize>,
}

impl ContinentRow {
    pub fn count(&self, c: Continent) -> usize {
        self.positive.get(&c).copied().unwrap_or(0)
    }
}

/// Counts stations with R² > 0 per continent, one row per pollutant.
pub fn positive_r2_table(scores: &[StationScore]) -> Vec<ContinentRow> {
    let mut rows: BTreeMap<Pollutant, ContinentRow> = BTreeMap::new();
    for s in scores {
        let row = rows.entry(s.pollutant).or_insert_with(|| ContinentRow {
            pollutant: s.pollutant,
            total: 0,
            positive: Continent::ALL.iter().map(|c| (*c, 0)).collect(),
        });
        row.total += 1;
        if s.r2.is_some_and(|r| r > 0.0) {
            *row.positive.entry(s.continent).or_insert(0) += 1;
        }
    }
    rows.into_values().collect()
}

pub fn write_continent_table_csv<W: Write>(rows: &[ContinentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["pollutant".to_string(), "total".to_string()];
    header.extend(Continent::ALL.iter().map(|c| c.as_str().to_string()));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.pollutant.as_str().to_string(), r.total.to_string()];
        rec.extend(Continent::ALL.iter().map(|c| r.count(*c).to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("writing continent table", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Iqr90 {
    pub p05: f64,
    pub p95: f64,
    pub width: f64,
}

/// Linear interpolation between order statistics at position p·(n−1).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn iqr90(values: &[f64]) -> Result<Iqr90> {
    if values.is_empty() {
        return Err(Error::Precondition("percentiles of an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("percentiles of a list containing NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (p05, p95) = (percentile(&v, 0.05), percentile(&v, 0.95));
    Ok(Iqr90 {
        p05,
        p95,
        width: (p95 - p05).max(0.0),
    })
}

/// Median of the defined values, if any.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(percentile(&v, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_examples() {
        let obs = [1.0, 2.0, 3.0];
        assert_eq!(r2(&obs, &obs).unwrap(), 1.0);
        assert_eq!(r2(&obs, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r2(&obs, &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(r2(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::Precondition(_))));
        assert!(r2(&[1.0], &[1.0]).is_err());
        assert!(r2(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn bias_and_pearson_examples() {
        let obs = [1.0, 4.0, 2.0, 8.0];
        assert_eq!(bias(&obs, &obs).unwrap(), 0.0);
        let shifted: Vec<f64> = obs.iter().map(|o| o + 2.0).collect();
        assert_eq!(bias(&obs, &shifted).unwrap(), 2.0);
        let tripled: Vec<f64> = obs.iter().map(|o| 3.0 * o).collect();
        assert!((pearson(&obs, &tripled).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = obs.iter().map(|o| -o).collect();
        assert!((pearson(&obs, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&obs, &[1.0; 4]).unwrap(), None);
    }

    #[test]
    fn iqr_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = iqr90(&v).unwrap();
        assert!((q.p05 - 5.95).abs() < 1e-12);
        assert!((q.p95 - 95.05).abs() < 1e-12);
        assert!((q.width - 89.1).abs() < 1e-12);
        assert_eq!(iqr90(&[7.0]).unwrap(), Iqr90 { p05: 7.0, p95: 7.0, width: 0.0 });
        assert_eq!(iqr90(&[3.0; 9]).unwrap().width, 0.0);
    }

    #[test]
    fn continent_counts() {
        let score = |id: &str, c: Continent, r: f64| StationScore {
            station_id: id.into(),
            pollutant: Pollutant::NO2,
            continent: c,
            n: 10,
            r2: Some(r),
            bias: 0.0,
            pearson: None,
        };
        let rows = positive_r2_table(&[score("a", Continent::Europe, 0.81), score("b", Continent::Asia, -0.2)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].total, 2);
        assert_eq!(rows[0].count(Continent::Europe), 1);
        assert_eq!(rows[0].count(Continent::Asia), 0);
        let neg = positive_r2_table(&[score("a", Continent::Europe, -1.0)]);
        assert!(Continent::ALL.iter().all(|c| neg[0].count(*c) == 0));
    }

    #[test]
    fn shift_lowers_r2_but_not_pearson() {
        let obs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 10.0 + 20.0).collect();
        let mut last = f64::INFINITY;
        for c in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let pred: Vec<f64> = obs.iter().map(|o| o + c).collect();
            let r = r2(&obs, &pred).unwrap();
            assert!(r < last || c == 0.0);
            last = r;
            assert!((pearson(&obs, &pred).unwrap().unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
