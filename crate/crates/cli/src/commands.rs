//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use airmap_core::aqi::{annual_summation, driving_subindex, index_tile, overall_index_tile, DaqiTable};
use airmap_core::evaluator::{iqr90, median, write_continent_table_csv, write_scores_csv};
use airmap_core::experiment::{
    binned_pair, build_rows, fit_point_model, run_experiment, score_rows, write_rows_csv, ExperimentConfig,
    ExperimentKind,
};
use airmap_core::features::CovariateSources;
use airmap_core::gbdt::{Transform, TreeEnsemble};
use airmap_core::grid::{predict_interval_tiles, predict_tile, PredictionTile, TileKind};
use airmap_core::intervals::{interval_size_sum, predict_interval, train_triplet, write_ranking_csv};
use airmap_core::splitter::{leave_group_out, stratified_split, within_network_kfold, FoldPlan, Grouping, LabeledRow};
use airmap_core::station_store::{
    apply_qc, format_timestamp, parse_measurements, parse_station_file, write_measurements_csv, write_stations_csv,
    MeasurementSeries, QcReport, StationMeta,
};
use airmap_core::synth::{synthetic_world, WorldConfig};
use airmap_core::tuner::tune;
use airmap_core::types::Pollutant;
use chrono::{DateTime, Utc};

use crate::config::{validate_config, RunConfig};
use crate::manifest::OutputSet;
use crate::{Cli, CliError, Command, ExperimentArg};

type Res<T> = Result<T, CliError>;

pub fn dispatch(cli: &Cli) -> Res<()> {
    if let Command::Synth { days } = cli.command {
        return synth(cli, days);
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config <FILE> is required for this subcommand".into()))?;
    let mut cfg = validate_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.params.seed = seed;
        cfg.space.base.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let mut out = OutputSet::new(&cfg.output)?;
    let name = match &cli.command {
        Command::Qc => qc(&cfg, &mut out).map(|_| "qc".to_string()),
        Command::Features => features(&cfg, &mut out).map(|_| "features".to_string()),
        Command::Split => split(&cfg, &mut out).map(|_| "split".to_string()),
        Command::Train => train(&cfg, &mut out).map(|_| "train".to_string()),
        Command::Tune => tune_cmd(&cfg, &mut out).map(|_| "tune".to_string()),
        Command::Experiment { kind } => {
            let kind = experiment_kind(*kind);
            experiment(&cfg, &mut out, kind).map(|_| format!("experiment {kind}"))
        }
        Command::Intervals => intervals(&cfg, &mut out).map(|_| "intervals".to_string()),
        Command::PredictGrid => predict_grid(&cfg, &mut out).map(|_| "predict-grid".to_string()),
        Command::Aqi => aqi(&cfg, &mut out).map(|_| "aqi".to_string()),
        Command::Report => report(&cfg, &mut out).map(|_| "report".to_string()),
        Command::Synth { .. } => unreachable!("handled above"),
    }?;
    out.finish(&name, &cfg.source.to_string_lossy(), &cfg.hash, cfg.seed)?;
    Ok(())
}

fn experiment_kind(k: ExperimentArg) -> ExperimentKind {
    match k {
        ExperimentArg::Baseline => ExperimentKind::Baseline,
        ExperimentArg::WithinNetwork => ExperimentKind::WithinNetwork,
        ExperimentArg::BetweenCountry => ExperimentKind::BetweenCountry,
        ExperimentArg::BetweenContinent => ExperimentKind::BetweenContinent,
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> airmap_core::Result<()>) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn daqi(cfg: &RunConfig) -> Res<DaqiTable> {
    Ok(match &cfg.daqi_table {
        Some(p) => DaqiTable::load(p)?,
        None => DaqiTable::default(),
    })
}

fn load_qc(cfg: &RunConfig) -> Res<(Vec<MeasurementSeries>, QcReport)> {
    let (stations_path, measurements_path) = (cfg.stations()?, cfg.measurements()?);
    let stations = parse_station_file(stations_path)?;
    let series: Vec<MeasurementSeries> = parse_measurements(measurements_path, &stations)?
        .into_iter()
        .filter(|s| s.station.pollutant == cfg.pollutant)
        .collect();
    Ok(apply_qc(series, &cfg.qc_rules))
}

struct Loaded {
    stations: Vec<StationMeta>,
    rows: Vec<LabeledRow>,
}

fn load_rows(cfg: &RunConfig) -> Res<Loaded> {
    let covariates = cfg.covariates()?;
    let (kept, _) = load_qc(cfg)?;
    let sources = CovariateSources::load_dir(covariates)?;
    let (rows, skipped) = build_rows(&kept, &sources, &cfg.utc_offsets)?;
    if skipped > 0 {
        eprintln!("airmap: {skipped} measurements skipped (covariates unavailable)");
    }
    if rows.is_empty() {
        return Err(airmap_core::Error::Precondition(format!(
            "no usable {} measurements after QC and feature assembly",
            cfg.pollutant
        ))
        .into());
    }
    Ok(Loaded {
        stations: kept.into_iter().map(|s| s.station).collect(),
        rows,
    })
}

fn qc(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let (kept, report) = load_qc(cfg)?;
    out.write("qc_report.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    write_measurements_csv(&out.path("measurements_qc.csv")?, &kept)?;
    println!("qc: kept {} series, rejected {}", report.kept, report.rejected.len());
    Ok(())
}

fn features(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let l = load_rows(cfg)?;
    out.write("features.csv", &csv_bytes(|b| write_rows_csv(&l.rows, b))?)?;
    println!("features: {} rows", l.rows.len());
    Ok(())
}

fn write_plan(out: &mut OutputSet, rel: &str, plan: &FoldPlan) -> Res<()> {
    out.write(rel, &csv_bytes(|b| plan.write_csv(b))?)?;
    Ok(())
}

fn write_plans(out: &mut OutputSet, prefix: &str, plans: &[FoldPlan]) -> Res<()> {
    for p in plans {
        let rel = match &p.group {
            Some(g) => format!("folds/{prefix}_{g}.csv"),
            None => format!("folds/{prefix}.csv"),
        };
        write_plan(out, &rel, p)?;
    }
    Ok(())
}

fn split(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let l = load_rows(cfg)?;
    let s = stratified_split(&l.rows, cfg.pollutant, &daqi(cfg)?, cfg.seed)?;
    out.write("split.csv", &csv_bytes(|b| s.write_manifest(b))?)?;
    write_plans(out, "within_network", &[within_network_kfold(&l.stations, cfg.k_folds, cfg.seed)?])?;
    write_plans(out, "country", &leave_group_out(&l.stations, Grouping::Country)?)?;
    write_plans(out, "continent", &leave_group_out(&l.stations, Grouping::Continent)?)?;
    println!(
        "split: train {}, validation {}, test {}",
        s.train.len(),
        s.validation.len(),
        s.test.len()
    );
    Ok(())
}

fn train(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let l = load_rows(cfg)?;
    let s = stratified_split(&l.rows, cfg.pollutant, &daqi(cfg)?, cfg.seed)?;
    let model = fit_point_model(&cfg.params, &l.rows, &s.train, &s.validation, cfg.pollutant)?;
    out.write("model.json", &model.to_json()?)?;
    let scores = score_rows(&model, &l.rows, &s.test, cfg.pollutant)?;
    out.write("scores_holdout.csv", &csv_bytes(|b| write_scores_csv(&scores, "holdout", b))?)?;
    println!(
        "train: {} trees (best iteration {}), median test R² {}",
        model.trees.len(),
        model.best_iteration,
        fmt_opt(median(scores.iter().filter_map(|s| s.r2)))
    );
    Ok(())
}

fn tune_cmd(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let l = load_rows(cfg)?;
    let s = stratified_split(&l.rows, cfg.pollutant, &daqi(cfg)?, cfg.seed)?;
    let (t, v) = binned_pair(&l.rows, &s.train, &s.validation, Transform::LogPlusEps)?;
    let valid_rows: Vec<Vec<f64>> = s.validation.iter().map(|&i| l.rows[i].features.0.to_vec()).collect();
    let mut report = tune(&cfg.space, cfg.candidates, cfg.seed, &t, &v, &valid_rows)?;
    report.model.pollutant = Some(cfg.pollutant);
    out.write("tuning.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    out.write("model.json", &report.model.to_json()?)?;
    println!("tune: selected candidate {} of {}", report.selected, report.candidates.len());
    Ok(())
}

fn experiment(cfg: &RunConfig, out: &mut OutputSet, kind: ExperimentKind) -> Res<()> {
    let l = load_rows(cfg)?;
    let ecfg = ExperimentConfig {
        kind,
        pollutant: cfg.pollutant,
        params: cfg.params.clone(),
        seed: cfg.seed,
        k_folds: cfg.k_folds,
    };
    let r = run_experiment(&ecfg, &daqi(cfg)?, &l.stations, &l.rows)?;
    let tag = kind.as_str();
    out.write(
        &format!("scores_{tag}.csv"),
        &csv_bytes(|b| write_scores_csv(&r.scores, tag, b))?,
    )?;
    out.write(
        &format!("table_{tag}.csv"),
        &csv_bytes(|b| write_continent_table_csv(&r.table(), b))?,
    )?;
    write_plans(out, tag, &r.plans)?;
    for s in &r.skipped {
        eprintln!("airmap: skipped plan {s}");
    }
    println!(
        "experiment {tag}: {} stations scored, median R² {}",
        r.scores.len(),
        fmt_opt(r.median_r2())
    );
    Ok(())
}

fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y%m%dT%H").to_string()
}

fn require_timestamps(cfg: &RunConfig) -> Res<()> {
    if cfg.timestamps.is_empty() {
        return Err(CliError::Config("missing required key `grid.timestamps`".into()));
    }
    Ok(())
}

fn save_tile(out: &mut OutputSet, rel: &str, tile: &PredictionTile, csv: bool) -> Res<()> {
    let mut bytes = Vec::new();
    tile.write_to(&mut bytes)?;
    out.write(&format!("{rel}.aptile"), &bytes)?;
    if csv {
        out.write(&format!("{rel}.csv"), &csv_bytes(|b| tile.write_csv(b))?)?;
    }
    Ok(())
}

fn intervals(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let l = load_rows(cfg)?;
    let s = stratified_split(&l.rows, cfg.pollutant, &daqi(cfg)?, cfg.seed)?;
    let (t, v) = binned_pair(&l.rows, &s.train, &s.validation, Transform::LogPlusEps)?;
    let mut triplet = train_triplet(&cfg.params, &t, &v)?;
    for m in [&mut triplet.q05, &mut triplet.q50, &mut triplet.q95] {
        m.pollutant = Some(cfg.pollutant);
    }
    for (name, m) in [("q05", &triplet.q05), ("q50", &triplet.q50), ("q95", &triplet.q95)] {
        out.write(&format!("intervals/{name}.json"), &m.to_json()?)?;
    }

    let mut inside = 0usize;
    let test_csv = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["station_id", "timestamp", "obs", "lo", "mid", "hi"])?;
        for &i in &s.test {
            let r = &l.rows[i];
            let p = predict_interval(&triplet, &r.features)?;
            inside += p.contains(r.target) as usize;
            w.write_record([
                r.station_id.clone(),
                format_timestamp(r.timestamp),
                r.target.to_string(),
                p.lo.to_string(),
                p.mid.to_string(),
                p.hi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| airmap_core::Error::Io {
            context: "writing interval predictions".into(),
            source: e,
        })
    })?;
    out.write("intervals/test_intervals.csv", &test_csv)?;
    println!(
        "intervals: test coverage {:.3} over {} rows",
        inside as f64 / s.test.len().max(1) as f64,
        s.test.len()
    );

    if !cfg.timestamps.is_empty() {
        let sources = CovariateSources::load_dir(cfg.covariates()?)?;
        let mut pairs = Vec::new();
        for &ts in &cfg.timestamps {
            let [lo, mid, hi] = predict_interval_tiles(&triplet, &sources, ts, &cfg.grid)?;
            let base = format!("intervals/tiles/{}_{}", cfg.pollutant, stamp(ts));
            save_tile(out, &format!("{base}_q05"), &lo, cfg.tile_csv)?;
            save_tile(out, &format!("{base}_q50"), &mid, cfg.tile_csv)?;
            save_tile(out, &format!("{base}_q95"), &hi, cfg.tile_csv)?;
            pairs.push((lo, hi));
        }
        let mut ranking = interval_size_sum(&pairs)?;
        ranking.truncate(cfg.top_k);
        out.write("intervals/ranking.csv", &csv_bytes(|b| write_ranking_csv(&ranking, b))?)?;
    }
    Ok(())
}

fn predict_grid(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    require_timestamps(cfg)?;
    let sources = CovariateSources::load_dir(cfg.covariates()?)?;
    let model = TreeEnsemble::load(&cfg.model_path())?;
    let pollutant = model.pollutant.unwrap_or(cfg.pollutant);
    for &ts in &cfg.timestamps {
        let tile = predict_tile(&model, &sources, ts, &cfg.grid)?;
        save_tile(out, &format!("tiles/{pollutant}_{}", stamp(ts)), &tile, cfg.tile_csv)?;
        println!(
            "predict-grid: {} {} completeness {:.4}",
            pollutant,
            format_timestamp(ts),
            tile.completeness()
        );
    }
    Ok(())
}

fn point_tiles(dir: &Path, cfg: &RunConfig) -> Res<Vec<PredictionTile>> {
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "aptile"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    let mut tiles = Vec::new();
    for p in paths {
        let t = PredictionTile::load(&p, &cfg.grid)?;
        if t.kind == TileKind::Point && t.pollutant.is_some() {
            tiles.push(t);
        }
    }
    Ok(tiles)
}

fn aqi(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let table = daqi(cfg)?;
    let tiles = point_tiles(&out.root().join("tiles"), cfg)?;
    if tiles.is_empty() {
        return Err(airmap_core::Error::Precondition(format!(
            "no point tiles under {}; run predict-grid first",
            out.root().join("tiles").display()
        ))
        .into());
    }
    let mut by_pollutant: BTreeMap<Pollutant, Vec<PredictionTile>> = BTreeMap::new();
    let mut by_hour: BTreeMap<DateTime<Utc>, Vec<PredictionTile>> = BTreeMap::new();
    for t in &tiles {
        let idx = index_tile(t, &table)?;
        let p = t.pollutant.expect("filtered to pollutant tiles");
        save_tile(out, &format!("aqi/index_{p}_{}", stamp(t.timestamp)), &idx, false)?;
        by_pollutant.entry(p).or_default().push(idx.clone());
        by_hour.entry(t.timestamp).or_default().push(idx);
    }
    for (ts, idx) in &by_hour {
        save_tile(out, &format!("aqi/overall_{}", stamp(*ts)), &overall_index_tile(idx)?, cfg.tile_csv)?;
    }
    let mut sums = Vec::new();
    for (p, idx) in &by_pollutant {
        let s = annual_summation(idx)?;
        save_tile(out, &format!("aqi/sum_{p}"), &s, cfg.tile_csv)?;
        sums.push(s);
    }
    let driving = driving_subindex(&sums)?;
    save_tile(out, "aqi/driving", &driving, true)?;
    println!(
        "aqi: {} hours, {} pollutants",
        by_hour.len(),
        by_pollutant.len()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn report(cfg: &RunConfig, out: &mut OutputSet) -> Res<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&cfg.output)
        .map_err(|e| airmap_core::Error::Io {
            context: format!("reading {}", cfg.output.display()),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("scores_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(airmap_core::Error::Precondition("no scores_*.csv files to report on".into()).into());
    }
    // (experiment, pollutant) → (r2, bias, pearson) per station
    type Cols = (Vec<f64>, Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(String, String), Cols> = BTreeMap::new();
    for f in &files {
        let mut rdr = csv::Reader::from_path(f).map_err(airmap_core::Error::from)?;
        for rec in rdr.records() {
            let rec = rec.map_err(airmap_core::Error::from)?;
            let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok());
            let e = groups
                .entry((rec[2].to_string(), rec[1].to_string()))
                .or_default();
            e.0.push(num(4).unwrap_or(f64::NAN));
            if let Some(b) = num(5) {
                e.1.push(b);
            }
            if let Some(p) = num(6) {
                e.2.push(p);
            }
        }
    }
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "experiment",
            "pollutant",
            "stations",
            "positive_r2",
            "median_r2",
            "bias_p05",
            "bias_p95",
            "bias_iqr90",
            "pearson_p05",
            "pearson_p95",
            "pearson_iqr90",
        ])?;
        for ((exp, pol), (r2, bias, pearson)) in &groups {
            let q = |v: &[f64]| iqr90(v).ok();
            let (bq, pq) = (q(bias), q(pearson));
            w.write_record([
                exp.clone(),
                pol.clone(),
                r2.len().to_string(),
                r2.iter().filter(|r| **r > 0.0).count().to_string(),
                fmt_opt(median(r2.iter().copied())),
                fmt_opt(bq.map(|x| x.p05)),
                fmt_opt(bq.map(|x| x.p95)),
                fmt_opt(bq.map(|x| x.width)),
                fmt_opt(pq.map(|x| x.p05)),
                fmt_opt(pq.map(|x| x.p95)),
                fmt_opt(pq.map(|x| x.width)),
            ])?;
        }
        w.flush().map_err(|e| airmap_core::Error::Io {
            context: "writing report".into(),
            source: e,
        })
    })?;
    out.write("report.csv", &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

const SYNTH_CONFIG: &str = r#"# Synthetic fixture world written by `airmap synth`.
[paths]
stations = "stations.csv"
measurements = "measurements.csv"
covariates = "covariates"

[run]
pollutant = "NO2"
seed = 42

[train]
num_leaves = 63
min_data_in_leaf = 20
learning_rate = 0.1
max_trees = 300

[tune]
candidates = 3
num_leaves = [16, 64]

[grid]
lat0 = 30.125
lon0 = -9.875
resolution = 0.25
nlat = 120
nlon = 136
timestamps = ["{T0}", "{T1}"]
top_k = 20
"#;

fn synth(cli: &Cli, days: usize) -> Res<()> {
    let cfg = WorldConfig {
        seed: cli.seed.unwrap_or(WorldConfig::default().seed),
        days,
        ..WorldConfig::default()
    };
    let world = synthetic_world(&cfg)?;
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("synth-world"));
    let mut out = OutputSet::new(&root)?;
    write_stations_csv(&out.path("stations.csv")?, &world.stations)?;
    write_measurements_csv(&out.path("measurements.csv")?, &world.series)?;
    for g in world.sources.grids() {
        let mut bytes = Vec::new();
        g.write_covgrid(&mut bytes)?;
        out.write(&format!("covariates/{}.covgrid", g.name), &bytes)?;
    }
    let t0 = cfg.start + chrono::Duration::hours(12);
    let t1 = cfg.start + chrono::Duration::hours(13);
    let config = SYNTH_CONFIG
        .replace("{T0}", &format_timestamp(t0))
        .replace("{T1}", &format_timestamp(t1));
    out.write("run.toml", config.as_bytes())?;
    out.finish("synth", "", "", cfg.seed)?;
    println!(
        "synth: {} stations, {} days written to {}",
        world.stations.len(),
        days,
        root.display()
    );
    Ok(())
}
