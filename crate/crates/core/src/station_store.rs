//! Station metadata and measurement ingestion plus the quality-control rules
//! that decide which station series are fit for training.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Continent, Pollutant, Unit};

pub const STATIONS_HEADER: [&str; 8] = [
    "station_id",
    "network_id",
    "country_code",
    "continent",
    "lat",
    "lon",
    "pollutant",
    "unit",
];

pub const MEASUREMENTS_HEADER: [&str; 5] = ["station_id", "pollutant", "timestamp_utc", "value", "unit"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub network_id: String,
    pub country_code: String,
    pub continent: Continent,
    pub lat: f64,
    pub lon: f64,
    pub pollutant: Pollutant,
    pub unit: Unit,
}

impl StationMeta {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Validation(format!(
                "latitude {} of station {} outside [-90, 90]",
                self.lat, self.station_id
            )));
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return Err(Error::Validation(format!(
                "longitude {} of station {} outside [-180, 180)",
                self.lon, self.station_id
            )));
        }
        if self.station_id.is_empty() {
            return Err(Error::Validation("empty station_id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: DateTime<Utc>,
    pub value: f64,
}

/// Hourly concentration series of one station and pollutant, ordered by time.
///
/// Freshly parsed series may still contain repeated timestamps; the series
/// returned by [`apply_qc`] are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub station: StationMeta,
    pub samples: Vec<Sample>,
}

impl MeasurementSeries {
    pub fn new(station: StationMeta, mut samples: Vec<Sample>) -> Self {
        samples.sort_by_key(|s| s.time);
        MeasurementSeries { station, samples }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }
}

/// Parses an RFC-3339 UTC timestamp that must sit exactly on a whole hour.
pub fn parse_hour_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if !raw.ends_with('Z') {
        return Err(format!("timestamp `{raw}` must be UTC with a `Z` suffix"));
    }
    let t = DateTime::parse_from_rfc3339(raw)
        .map_err(|e| format!("bad timestamp `{raw}`: {e}"))?
        .with_timezone(&Utc);
    if t.minute() != 0 || t.second() != 0 || t.nanosecond() != 0 {
        return Err(format!("timestamp `{raw}` is not hour-aligned"));
    }
    Ok(t)
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

/// Reads `stations.csv`. Row order is preserved.
pub fn parse_station_file(path: &Path) -> Result<Vec<StationMeta>> {
    let mut reader = open_csv(path)?;
    check_header(path, reader.headers()?, &STATIONS_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        let meta = parse_station_row(&record).map_err(|m| Error::parse(path, line, m))?;
        meta.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}:{line}: {m}", path.display())),
            other => other,
        })?;
        if !seen.insert((meta.station_id.clone(), meta.pollutant)) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate station {} for {}", meta.station_id, meta.pollutant),
            ));
        }
        out.push(meta);
    }
    Ok(out)
}

fn parse_station_row(record: &csv::StringRecord) -> std::result::Result<StationMeta, String> {
    if record.len() != STATIONS_HEADER.len() {
        return Err(format!("expected {} fields, found {}", STATIONS_HEADER.len(), record.len()));
    }
    let field = |i: usize| record[i].trim();
    let number = |i: usize| {
        field(i)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{} `{}` is not a finite number", STATIONS_HEADER[i], field(i)))
    };
    Ok(StationMeta {
        station_id: field(0).to_string(),
        network_id: field(1).to_string(),
        country_code: field(2).to_string(),
        continent: field(3).parse().map_err(|e: Error| e.to_string())?,
        lat: number(4)?,
        lon: number(5)?,
        pollutant: field(6).parse().map_err(|e: Error| e.to_string())?,
        unit: field(7).parse().map_err(|e: Error| e.to_string())?,
    })
}

/// Reads `measurements.csv` and groups rows into one series per known
/// (station, pollutant). Stations without measurements yield empty series.
/// The output follows the order of `stations`.
pub fn parse_measurements(path: &Path, stations: &[StationMeta]) -> Result<Vec<MeasurementSeries>> {
    let index: HashMap<(&str, Pollutant), usize> = stations
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.station_id.as_str(), s.pollutant), i))
        .collect();
    let mut buckets: Vec<Vec<Sample>> = vec![Vec::new(); stations.len()];

    let mut reader = open_csv(path)?;
    check_header(path, reader.headers()?, &MEASUREMENTS_HEADER)?;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        let err = |m: String| Error::parse(path, line, m);
        if record.len() != MEASUREMENTS_HEADER.len() {
            return Err(err(format!("expected 5 fields, found {}", record.len())));
        }
        let station_id = record[0].trim();
        let pollutant: Pollutant = record[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let time = parse_hour_timestamp(&record[2]).map_err(err)?;
        let value: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| err(format!("value `{}` is not a number", record[3].trim())))?;
        if !value.is_finite() || value < 0.0 {
            return Err(err(format!("concentration {value} must be finite and non-negative")));
        }
        let unit: Unit = record[4].parse().map_err(|e: Error| err(e.to_string()))?;
        let slot = *index
            .get(&(station_id, pollutant))
            .ok_or_else(|| err(format!("unknown station {station_id} for {pollutant}")))?;
        if stations[slot].unit != unit {
            return Err(err(format!(
                "unit {unit} disagrees with station metadata unit {}",
                stations[slot].unit
            )));
        }
        buckets[slot].push(Sample { time, value });
    }
    Ok(stations
        .iter()
        .cloned()
        .zip(buckets)
        .map(|(meta, samples)| MeasurementSeries::new(meta, samples))
        .collect())
}

pub fn write_stations_csv(path: &Path, stations: &[StationMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(STATIONS_HEADER)?;
    for s in stations {
        w.write_record([
            s.station_id.clone(),
            s.network_id.clone(),
            s.country_code.clone(),
            s.continent.to_string(),
            s.lat.to_string(),
            s.lon.to_string(),
            s.pollutant.to_string(),
            s.unit.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_measurements_csv(path: &Path, series: &[MeasurementSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MEASUREMENTS_HEADER)?;
    for s in series {
        for sample in &s.samples {
            w.write_record([
                s.station.station_id.clone(),
                s.station.pollutant.to_string(),
                format_timestamp(sample.time),
                sample.value.to_string(),
                s.station.unit.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QcRule {
    /// Station reports in ppb.
    PpbUnit,
    /// Two or fewer data points.
    TooFewPoints,
    /// Repeated timestamp carrying differing values.
    ConflictingDuplicates,
    /// Every value zero, or a single constant value throughout.
    ConstantValue,
    /// Some hour of day 00..23 never observed.
    MissingHourOfDay,
    /// Some day of week never observed.
    MissingDayOfWeek,
}

impl QcRule {
    pub const ALL: [QcRule; 6] = [
        QcRule::PpbUnit,
        QcRule::TooFewPoints,
        QcRule::ConflictingDuplicates,
        QcRule::ConstantValue,
        QcRule::MissingHourOfDay,
        QcRule::MissingDayOfWeek,
    ];

    pub fn id(self) -> &'static str {
        match self {
            QcRule::PpbUnit => "R1",
            QcRule::TooFewPoints => "R2",
            QcRule::ConflictingDuplicates => "R3",
            QcRule::ConstantValue => "R4",
            QcRule::MissingHourOfDay => "R5",
            QcRule::MissingDayOfWeek => "R6",
        }
    }

    pub fn from_id(id: &str) -> Option<QcRule> {
        QcRule::ALL.into_iter().find(|r| r.id().eq_ignore_ascii_case(id.trim()))
    }
}

impl fmt::Display for QcRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Which of the six rules are active. All are enabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QcRuleSet {
    enabled: [bool; 6],
}

impl Default for QcRuleSet {
    fn default() -> Self {
        QcRuleSet { enabled: [true; 6] }
    }
}

impl QcRuleSet {
    pub fn none() -> Self {
        QcRuleSet { enabled: [false; 6] }
    }

    pub fn with(mut self, rule: QcRule, on: bool) -> Self {
        self.enabled[rule as usize] = on;
        self
    }

    pub fn is_enabled(&self, rule: QcRule) -> bool {
        self.enabled[rule as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub station_id: String,
    pub pollutant: Pollutant,
    pub rule: QcRule,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QcReport {
    pub kept: usize,
    pub rejected: Vec<Rejection>,
}

impl QcReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "rule_id", "detail"])?;
        for r in &self.rejected {
            w.write_record([r.station_id.as_str(), r.rule.id(), r.detail.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("writing QC report", e))
    }
}

/// Collapses identical repeated timestamps. Returns the conflicting
/// timestamp count alongside the collapsed samples (first value wins).
fn collapse_duplicates(samples: &[Sample]) -> (Vec<Sample>, usize) {
    let mut out: Vec<Sample> = Vec::with_capacity(samples.len());
    let mut conflicts = 0;
    let mut conflicted_last = false;
    for s in samples {
        match out.last() {
            Some(prev) if prev.time == s.time => {
                if prev.value != s.value && !conflicted_last {
                    conflicts += 1;
                    conflicted_last = true;
                }
            }
            _ => {
                out.push(*s);
                conflicted_last = false;
            }
        }
    }
    (out, conflicts)
}

fn first_violation(series: &MeasurementSeries, rules: &QcRuleSet) -> std::result::Result<Vec<Sample>, (QcRule, String)> {
    let mut samples = series.samples.clone();
    samples.sort_by_key(|s| s.time);
    let (samples, conflicts) = collapse_duplicates(&samples);

    for rule in QcRule::ALL {
        if !rules.is_enabled(rule) {
            continue;
        }
        let verdict = match rule {
            QcRule::PpbUnit => (series.station.unit == Unit::Ppb).then(|| "unit is ppb".to_string()),
            QcRule::TooFewPoints => {
                (samples.len() <= 2).then(|| format!("only {} data points", samples.len()))
            }
            QcRule::ConflictingDuplicates => (conflicts > 0)
                .then(|| format!("{conflicts} timestamps repeated with differing values")),
            QcRule::ConstantValue => {
                let first = samples.first().map(|s| s.value);
                match first {
                    Some(v) if samples.iter().all(|s| s.value == v) => Some(if v == 0.0 {
                        "all values zero".to_string()
                    } else {
                        format!("every value equals {v}")
                    }),
                    _ => None,
                }
            }
            QcRule::MissingHourOfDay => {
                let mut seen = [false; 24];
                for s in &samples {
                    seen[s.time.hour() as usize] = true;
                }
                let missing: Vec<String> = (0..24).filter(|h| !seen[*h]).map(|h| format!("{h:02}")).collect();
                (!missing.is_empty()).then(|| format!("no readings at hours {}", missing.join(" ")))
            }
            QcRule::MissingDayOfWeek => {
                let mut seen = [false; 7];
                for s in &samples {
                    seen[s.time.weekday().num_days_from_monday() as usize] = true;
                }
                let missing: Vec<String> = (0..7).filter(|d| !seen[*d]).map(|d| d.to_string()).collect();
                (!missing.is_empty())
                    .then(|| format!("no readings on weekdays {} (Monday=0)", missing.join(" ")))
            }
        };
        if let Some(detail) = verdict {
            return Err((rule, detail));
        }
    }
    Ok(samples)
}

/// Applies the enabled rules in the fixed order R1..R6. Identical repeated
/// readings are kept once; rejected stations are reported with the first
/// rule they violate, sorted by station id.
pub fn apply_qc(series_set: Vec<MeasurementSeries>, rules: &QcRuleSet) -> (Vec<MeasurementSeries>, QcReport) {
    let verdicts: Vec<_> = series_set
        .into_par_iter()
        .map(|s| {
            let verdict = first_violation(&s, rules);
            (s, verdict)
        })
        .collect();

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (series, verdict) in verdicts {
        match verdict {
            Ok(samples) => kept.push(MeasurementSeries {
                station: series.station,
                samples,
            }),
            Err((rule, detail)) => rejected.push(Rejection {
                station_id: series.station.station_id,
                pollutant: series.station.pollutant,
                rule,
                detail,
            }),
        }
    }
    rejected.sort_by(|a, b| (&a.station_id, a.pollutant).cmp(&(&b.station_id, b.pollutant)));
    let report = QcReport {
        kept: kept.len(),
        rejected,
    };
    (kept, report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub distinct: usize,
    pub first: DateTime<Utc>,
    pub last: DateTime<Utc>,
}

pub fn station_summary(series: &MeasurementSeries) -> Result<SeriesSummary> {
    let first = series
        .samples
        .first()
        .ok_or_else(|| Error::Precondition(format!("series of {} is empty", series.station.station_id)))?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    // Neumaier-compensated sum
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut distinct = HashSet::new();
    for v in series.values() {
        min = min.min(v);
        max = max.max(v);
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        distinct.insert((v + 0.0).to_bits());
    }
    let count = series.samples.len();
    Ok(SeriesSummary {
        count,
        min,
        max,
        mean: (sum + comp) / count as f64,
        distinct: distinct.len(),
        first: first.time,
        last: series.samples.last().map(|s| s.time).unwrap_or(first.time),
    })
}

/// Series keyed by station id, for lookups after QC.
pub fn index_by_station(series: &[MeasurementSeries]) -> BTreeMap<String, &MeasurementSeries> {
    series.iter().map(|s| (s.station.station_id.clone(), s)).collect()
}
