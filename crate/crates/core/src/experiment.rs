//! Validation protocols: temporal hold-out baseline and spatial
//! leave-group-out experiments, scored per station.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aqi::DaqiTable;
use crate::error::{Error, Result};
use crate::evaluator::{median, positive_r2_table, ContinentRow, StationScore};
use crate::features::{assemble_with_offset, utc_offset_from_longitude, FeatureVector};
use crate::gbdt::{bin_features, train, BinnedDataset, FeatureMatrix, TrainParams, Transform, TreeEnsemble, MAX_BIN};
use crate::splitter::{leave_group_out, stratified_split, within_network_kfold, FoldPlan, Grouping, LabeledRow};
use crate::splitter::{TEST_LABEL, TRAIN_LABEL};
use crate::station_store::{MeasurementSeries, StationMeta};
use crate::types::Pollutant;

/// Assembles one labelled row per sample. Samples whose covariates cannot
/// be resolved are skipped and counted.
pub fn build_rows(
    series: &[MeasurementSeries],
    sources: &crate::features::CovariateSources,
    offset_overrides: &BTreeMap<String, i32>,
) -> Result<(Vec<LabeledRow>, usize)> {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for s in series {
        let st = &s.station;
        let offset = match offset_overrides.get(&st.station_id) {
            Some(o) => *o,
            None => utc_offset_from_longitude(st.lon)?,
        };
        for sample in &s.samples {
            match assemble_with_offset(st.lat, st.lon, sample.time, offset, sources) {
                Ok(features) => rows.push(LabeledRow {
                    features,
                    target: sample.value,
                    station_id: st.station_id.clone(),
                    network_id: st.network_id.clone(),
                    country_code: st.country_code.clone(),
                    continent: st.continent,
                    timestamp: sample.time,
                }),
                Err(Error::Assembly { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((rows, skipped))
}

/// `station_id,timestamp,target,<features...>` rows.
pub fn write_rows_csv<W: std::io::Write>(rows: &[LabeledRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["station_id", "timestamp", "target"];
    header.extend(crate::features::FEATURE_NAMES);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.station_id.clone(),
            crate::station_store::format_timestamp(r.timestamp),
            r.target.to_string(),
        ];
        rec.extend(r.features.to_csv_fields());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("writing feature rows", e))
}

fn matrix_of(rows: &[LabeledRow], idx: &[usize]) -> FeatureMatrix {
    let vectors: Vec<FeatureVector> = idx.iter().map(|&i| rows[i].features.clone()).collect();
    FeatureMatrix::from_vectors(&vectors)
}

fn targets_of(rows: &[LabeledRow], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| rows[i].target).collect()
}

/// Bins the training rows and applies the same edges to the validation
/// rows.
pub fn binned_pair(
    rows: &[LabeledRow],
    train_idx: &[usize],
    valid_idx: &[usize],
    transform: Transform,
) -> Result<(BinnedDataset, BinnedDataset)> {
    if train_idx.is_empty() {
        return Err(Error::Validation("no training rows".into()));
    }
    let train_set = bin_features(&matrix_of(rows, train_idx), MAX_BIN).with_target(&targets_of(rows, train_idx), transform)?;
    let valid = BinnedDataset::with_mappers(&matrix_of(rows, valid_idx), train_set.mappers.clone())?
        .with_target(&targets_of(rows, valid_idx), transform)?;
    Ok((train_set, valid))
}

pub fn fit_point_model(
    params: &TrainParams,
    rows: &[LabeledRow],
    train_idx: &[usize],
    valid_idx: &[usize],
    pollutant: Pollutant,
) -> Result<TreeEnsemble> {
    let (t, v) = binned_pair(rows, train_idx, valid_idx, Transform::LogPlusEps)?;
    let mut model = train(params, &t, &v)?;
    model.pollutant = Some(pollutant);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Baseline,
    WithinNetwork,
    BetweenCountry,
    BetweenContinent,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Baseline,
        ExperimentKind::WithinNetwork,
        ExperimentKind::BetweenCountry,
        ExperimentKind::BetweenContinent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::WithinNetwork => "within-network",
            ExperimentKind::BetweenCountry => "between-country",
            ExperimentKind::BetweenContinent => "between-continent",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub pollutant: Pollutant,
    pub params: TrainParams,
    pub seed: u64,
    pub k_folds: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub scores: Vec<StationScore>,
    pub plans: Vec<FoldPlan>,
    /// Plans that could not be trained, with the reason.
    pub skipped: Vec<String>,
}

impl ExperimentResult {
    pub fn table(&self) -> Vec<ContinentRow> {
        positive_r2_table(&self.scores)
    }

    pub fn median_r2(&self) -> Option<f64> {
        median(self.scores.iter().filter_map(|s| s.r2))
    }
}

/// Per-station scores of `model` over the rows in `idx`.
pub fn score_rows(model: &TreeEnsemble, rows: &[LabeledRow], idx: &[usize], pollutant: Pollutant) -> Result<Vec<StationScore>> {
    let mut by_station: BTreeMap<&str, (Vec<f64>, Vec<f64>, crate::types::Continent)> = BTreeMap::new();
    for &i in idx {
        let r = &rows[i];
        let pred = model.predict(&r.features)?;
        let e = by_station
            .entry(r.station_id.as_str())
            .or_insert_with(|| (Vec::new(), Vec::new(), r.continent));
        e.0.push(r.target);
        e.1.push(pred);
    }
    by_station
        .into_iter()
        .map(|(id, (obs, pred, continent))| StationScore::compute(id, pollutant, continent, &obs, &pred))
        .collect()
}

/// Trains on the rows of `train_stations` (with a stratified validation
/// share for early stopping) and scores the rows of `test_stations`.
fn run_group_plan(
    cfg: &ExperimentConfig,
    daqi: &DaqiTable,
    rows: &[LabeledRow],
    train_stations: &[&str],
    test_stations: &[&str],
) -> Result<Vec<StationScore>> {
    let in_set = |set: &[&str], id: &str| set.binary_search(&id).is_ok();
    let train_pool: Vec<usize> = (0..rows.len()).filter(|&i| in_set(train_stations, &rows[i].station_id)).collect();
    let test_idx: Vec<usize> = (0..rows.len()).filter(|&i| in_set(test_stations, &rows[i].station_id)).collect();
    let pool_rows: Vec<LabeledRow> = train_pool.iter().map(|&i| rows[i].clone()).collect();
    let split = stratified_split(&pool_rows, cfg.pollutant, daqi, cfg.seed)?;
    let mut fit_idx: Vec<usize> = split.train.iter().chain(&split.test).map(|&k| train_pool[k]).collect();
    fit_idx.sort_unstable();
    let valid_idx: Vec<usize> = split.validation.iter().map(|&k| train_pool[k]).collect();
    let model = fit_point_model(&cfg.params, rows, &fit_idx, &valid_idx, cfg.pollutant)?;
    score_rows(&model, rows, &test_idx, cfg.pollutant)
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    daqi: &DaqiTable,
    stations: &[StationMeta],
    rows: &[LabeledRow],
) -> Result<ExperimentResult> {
    if rows.is_empty() {
        return Err(Error::Precondition("experiment needs at least one labelled row".into()));
    }
    let mut result = ExperimentResult {
        kind: cfg.kind,
        scores: Vec::new(),
        plans: Vec::new(),
        skipped: Vec::new(),
    };
    match cfg.kind {
        ExperimentKind::Baseline => {
            let split = stratified_split(rows, cfg.pollutant, daqi, cfg.seed)?;
            let model = fit_point_model(&cfg.params, rows, &split.train, &split.validation, cfg.pollutant)?;
            result.scores = score_rows(&model, rows, &split.test, cfg.pollutant)?;
        }
        ExperimentKind::WithinNetwork => {
            let plan = within_network_kfold(stations, cfg.k_folds, cfg.seed)?;
            for label in plan.labels() {
                let mut test = plan.stations_in(&label);
                let mut train: Vec<&str> = plan
                    .assignments
                    .iter()
                    .filter(|(_, l)| **l != label)
                    .map(|(s, _)| s.as_str())
                    .collect();
                test.sort_unstable();
                train.sort_unstable();
                if train.is_empty() {
                    result.skipped.push(format!("{label}: no training stations"));
                    continue;
                }
                result.scores.extend(run_group_plan(cfg, daqi, rows, &train, &test)?);
            }
            result.plans.push(plan);
        }
        ExperimentKind::BetweenCountry | ExperimentKind::BetweenContinent => {
            let grouping = if cfg.kind == ExperimentKind::BetweenCountry {
                Grouping::Country
            } else {
                Grouping::Continent
            };
            let plans = leave_group_out(stations, grouping)?;
            for plan in &plans {
                let group = plan.group.clone().unwrap_or_default();
                if plan.is_degenerate() {
                    result.skipped.push(format!("{group}: degenerate plan, no training stations"));
                    continue;
                }
                let train = plan.stations_in(TRAIN_LABEL);
                let test = plan.stations_in(TEST_LABEL);
                result.scores.extend(run_group_plan(cfg, daqi, rows, &train, &test)?);
            }
            result.plans = plans;
        }
    }
    result.scores.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    Ok(result)
}
