//! Run configuration: a TOML file with typed sections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use airmap_core::gbdt::{Loss, TrainParams, MAX_BIN};
use airmap_core::grid::GridSpec;
use airmap_core::station_store::{parse_hour_timestamp, QcRule, QcRuleSet};
use airmap_core::tuner::SearchSpace;
use airmap_core::types::Pollutant;
use chrono::{DateTime, Utc};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Reference text shown by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIGURATION (TOML, unknown keys are rejected; relative paths resolve against the config file)

  [paths]
    stations      station metadata CSV
    measurements  measurement CSV
    covariates    directory of *.covgrid / *.csv covariate grids
    daqi_table    DAQI band table CSV            default: built-in UK DEFRA table
    model         trained model JSON             default: <out>/model.json
    output        output directory               default: <config dir>/out

  [run]
    pollutant     NO2 | O3 | PM10 | PM2_5 | SO2  default: NO2
    seed          integer                        default: 0
    k_folds       within-network folds           default: 10

  [train]
    num_leaves 2047, min_data_in_leaf 20, lambda_l2 1.0, learning_rate 0.1,
    max_trees 1000, goss_top_rate 0.2, goss_other_rate 0.1,
    max_bin 63 (fixed), early stopping after 10 rounds (fixed)

  [tune]
    candidates 5, num_leaves [1000, 4095], min_data_in_leaf [20, 200],
    lambda_l2 [0.001, 10.0] (log-uniform)

  [qc]
    rules         enabled rule ids               default: [\"R1\",\"R2\",\"R3\",\"R4\",\"R5\",\"R6\"]

  [features]
    utc_offsets   table of station_id = hours    default: derived from longitude

  [grid]
    lat0, lon0, resolution, nlat, nlon           default: global 0.25 degree cell centers
    timestamps    list of UTC hours to map       default: []
    csv           also export lat,lon,value CSV  default: false
    top_k         placement ranking length       default: 100
";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    paths: RawPaths,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    tune: RawTune,
    #[serde(default)]
    qc: RawQc,
    #[serde(default)]
    features: RawFeatures,
    #[serde(default)]
    grid: RawGrid,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    stations: Option<PathBuf>,
    measurements: Option<PathBuf>,
    covariates: Option<PathBuf>,
    daqi_table: Option<PathBuf>,
    model: Option<PathBuf>,
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    pollutant: Option<String>,
    seed: Option<u64>,
    k_folds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    num_leaves: Option<usize>,
    min_data_in_leaf: Option<usize>,
    lambda_l2: Option<f64>,
    learning_rate: Option<f64>,
    max_trees: Option<usize>,
    goss_top_rate: Option<f64>,
    goss_other_rate: Option<f64>,
    max_bin: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTune {
    candidates: Option<usize>,
    num_leaves: Option<(usize, usize)>,
    min_data_in_leaf: Option<(usize, usize)>,
    lambda_l2: Option<(f64, f64)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQc {
    rules: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    #[serde(default)]
    utc_offsets: BTreeMap<String, i32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    lat0: Option<f64>,
    lon0: Option<f64>,
    resolution: Option<f64>,
    nlat: Option<usize>,
    nlon: Option<usize>,
    #[serde(default)]
    timestamps: Vec<String>,
    csv: Option<bool>,
    top_k: Option<usize>,
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: PathBuf,
    /// SHA-256 of the config file bytes.
    pub hash: String,
    stations: Option<PathBuf>,
    measurements: Option<PathBuf>,
    covariates: Option<PathBuf>,
    pub daqi_table: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: PathBuf,
    pub pollutant: Pollutant,
    pub seed: u64,
    pub k_folds: usize,
    pub params: TrainParams,
    pub space: SearchSpace,
    pub candidates: usize,
    pub qc_rules: QcRuleSet,
    pub utc_offsets: BTreeMap<String, i32>,
    pub grid: GridSpec,
    pub timestamps: Vec<DateTime<Utc>>,
    pub tile_csv: bool,
    pub top_k: usize,
}

impl RunConfig {
    pub fn stations(&self) -> Result<&Path, CliError> {
        self.stations.as_deref().ok_or_else(|| missing("paths.stations"))
    }

    pub fn measurements(&self) -> Result<&Path, CliError> {
        self.measurements.as_deref().ok_or_else(|| missing("paths.measurements"))
    }

    pub fn covariates(&self) -> Result<&Path, CliError> {
        self.covariates.as_deref().ok_or_else(|| missing("paths.covariates"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.output.join("model.json"))
    }
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing required key `{key}`"))
}

/// Parses, defaults and validates a config file. Problems are reported
/// together, one per line.
pub fn validate_config(path: &Path) -> Result<RunConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("config {} is not UTF-8", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let hash = hex::encode(Sha256::digest(&bytes));
    resolve(raw, &base, path, hash)
}

fn resolve(raw: RawConfig, base: &Path, source: &Path, hash: String) -> Result<RunConfig, CliError> {
    let mut problems: Vec<String> = Vec::new();
    let mut existing = |key: &str, p: Option<PathBuf>| -> Option<PathBuf> {
        let p = p.map(|p| base.join(p))?;
        if !p.exists() {
            problems.push(format!("{key}: `{}` does not exist", p.display()));
        }
        Some(p)
    };
    let stations = existing("paths.stations", raw.paths.stations);
    let measurements = existing("paths.measurements", raw.paths.measurements);
    let covariates = existing("paths.covariates", raw.paths.covariates);
    let daqi_table = existing("paths.daqi_table", raw.paths.daqi_table);
    let model = raw.paths.model.map(|p| base.join(p));
    let output = base.join(raw.paths.output.unwrap_or_else(|| PathBuf::from("out")));

    let pollutant = match raw.run.pollutant.as_deref().unwrap_or("NO2").parse::<Pollutant>() {
        Ok(p) => p,
        Err(e) => {
            problems.push(format!("run.pollutant: {e}"));
            Pollutant::NO2
        }
    };
    let seed = raw.run.seed.unwrap_or(0);
    let k_folds = raw.run.k_folds.unwrap_or(10);
    if k_folds < 2 {
        problems.push(format!("run.k_folds: must be >= 2, got {k_folds}"));
    }

    let t = raw.train;
    if let Some(mb) = t.max_bin {
        if mb != MAX_BIN {
            problems.push(format!("train.max_bin: fixed at {MAX_BIN}, got {mb}"));
        }
    }
    let d = TrainParams::default();
    let params = TrainParams {
        num_leaves: t.num_leaves.unwrap_or(d.num_leaves),
        min_data_in_leaf: t.min_data_in_leaf.unwrap_or(d.min_data_in_leaf),
        lambda_l2: t.lambda_l2.unwrap_or(d.lambda_l2),
        learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
        max_trees: t.max_trees.unwrap_or(d.max_trees),
        early_stopping_rounds: 10,
        goss_top_rate: t.goss_top_rate.unwrap_or(d.goss_top_rate),
        goss_other_rate: t.goss_other_rate.unwrap_or(d.goss_other_rate),
        loss: Loss::MseLog,
        seed,
    };
    if let Err(e) = params.validate() {
        problems.push(format!("train: {e}"));
    }

    let ds = SearchSpace::default();
    let space = SearchSpace {
        num_leaves: raw.tune.num_leaves.unwrap_or(ds.num_leaves),
        min_data_in_leaf: raw.tune.min_data_in_leaf.unwrap_or(ds.min_data_in_leaf),
        lambda_l2: raw.tune.lambda_l2.unwrap_or(ds.lambda_l2),
        base: params.clone(),
    };
    if let Err(e) = space.validate() {
        problems.push(format!("tune: {e}"));
    }
    let candidates = raw.tune.candidates.unwrap_or(5);
    if candidates == 0 {
        problems.push("tune.candidates: must be >= 1".into());
    }

    let qc_rules = match raw.qc.rules {
        None => QcRuleSet::default(),
        Some(ids) => {
            let mut set = QcRuleSet::none();
            for id in ids {
                match QcRule::from_id(&id) {
                    Some(r) => set = set.with(r, true),
                    None => problems.push(format!("qc.rules: unknown rule `{id}`")),
                }
            }
            set
        }
    };

    let g = raw.grid;
    let global = GridSpec::global_quarter_degree();
    let grid = GridSpec::new(
        g.lat0.unwrap_or(global.lat0),
        g.lon0.unwrap_or(global.lon0),
        g.resolution.unwrap_or(global.resolution),
        g.nlat.unwrap_or(global.nlat),
        g.nlon.unwrap_or(global.nlon),
    )
    .unwrap_or_else(|e| {
        problems.push(format!("grid: {e}"));
        global.clone()
    });
    let mut timestamps = Vec::new();
    for raw_t in &g.timestamps {
        match parse_hour_timestamp(raw_t) {
            Ok(t) => timestamps.push(t),
            Err(e) => problems.push(format!("grid.timestamps: {e}")),
        }
    }
    let top_k = g.top_k.unwrap_or(100);

    if !problems.is_empty() {
        return Err(CliError::Config(format!(
            "{}:\n  {}",
            source.display(),
            problems.join("\n  ")
        )));
    }
    Ok(RunConfig {
        source: source.to_path_buf(),
        hash,
        stations,
        measurements,
        covariates,
        daqi_table,
        model,
        output,
        pollutant,
        seed,
        k_folds,
        params,
        space,
        candidates,
        qc_rules,
        utc_offsets: raw.features.utc_offsets,
        grid,
        timestamps,
        tile_csv: g.csv.unwrap_or(false),
        top_k,
    })
}
