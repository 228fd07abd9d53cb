//! The 26-element feature vector: temporal fields, bilinearly interpolated
//! meteorology, monthly remote-sensing averages and emissions totals.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};

use crate::error::{Error, Result};
use crate::station_store::{format_timestamp, parse_hour_timestamp};

pub const N_FEATURES: usize = 26;

/// Canonical feature order. Serialized models and feature files depend on it.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "hour",
    "day_of_week",
    "week_number",
    "month",
    "utc_offset_hours",
    "u100",
    "v100",
    "u10",
    "v10",
    "dewpoint_2m",
    "temp_2m",
    "boundary_layer_height",
    "downward_uv",
    "wind_gust_10m",
    "surface_pressure",
    "total_column_rain_water",
    "rs_no2",
    "rs_o3",
    "rs_so2",
    "rs_aai",
    "em_co",
    "em_nox",
    "em_nmvoc",
    "em_other_voc",
    "em_so2",
    "em_biogenic_co",
];

/// Index of the first covariate (non-temporal) feature.
pub const FIRST_COVARIATE: usize = 5;

/// Anthropogenic emission sectors whose per-species grids are summed into the
/// five anthropogenic emissions features.
pub const EMISSION_SECTORS: [&str; 11] = [
    "refineries",
    "ships",
    "fugitives",
    "power_generation",
    "off_road_transportation",
    "road_transportation",
    "residential",
    "industrial_process",
    "solvents",
    "agricultural_waste_burning",
    "solid_waste_and_waste_water",
];

pub const DEFAULT_MISSING: f32 = -9999.0;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Comma-separated values with shortest round-trip formatting.
    pub fn to_csv_fields(&self) -> Vec<String> {
        self.0.iter().map(|v| v.to_string()).collect()
    }

    pub fn from_csv_fields<'a, I: IntoIterator<Item = &'a str>>(fields: I) -> Result<Self> {
        let mut out = [0.0; N_FEATURES];
        let mut n = 0;
        for (i, f) in fields.into_iter().enumerate() {
            if i >= N_FEATURES {
                return Err(Error::Validation(format!("more than {N_FEATURES} feature values")));
            }
            out[i] = f
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("feature {} value `{f}` is not a number", FEATURE_NAMES[i])))?;
            n += 1;
        }
        if n != N_FEATURES {
            return Err(Error::Validation(format!("expected {N_FEATURES} feature values, found {n}")));
        }
        Ok(FeatureVector(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalFeatures {
    pub hour: u32,
    /// Monday = 0.
    pub day_of_week: u32,
    /// ISO-8601 week number.
    pub week_number: u32,
    pub month: u32,
    pub utc_offset: i32,
}

/// Calendar fields come from the UTC instant; the offset is carried as its
/// own feature rather than used to localize the timestamp.
pub fn temporal_features(t: DateTime<Utc>, offset_hours: i32) -> TemporalFeatures {
    TemporalFeatures {
        hour: t.hour(),
        day_of_week: t.weekday().num_days_from_monday(),
        week_number: t.iso_week().week(),
        month: t.month(),
        utc_offset: offset_hours,
    }
}

/// Nominal time-zone offset, `round(lon / 15)` clamped to [-12, 14].
pub fn utc_offset_from_longitude(lon: f64) -> Result<i32> {
    if !(-180.0..180.0).contains(&lon) {
        return Err(Error::Validation(format!("longitude {lon} outside [-180, 180)")));
    }
    // f64::round rounds half away from zero
    Ok(((lon / 15.0).round() as i32).clamp(-12, 14))
}

/// A regular lat/lon covariate grid with a time axis. Values are stored
/// time-major, then latitude, then longitude.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateGrid {
    pub name: String,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
    pub times: Vec<DateTime<Utc>>,
    pub values: Vec<f32>,
    pub missing: f32,
}

const SNAP: f64 = 1e-9;

impl CovariateGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        nlat: usize,
        nlon: usize,
        times: Vec<DateTime<Utc>>,
        values: Vec<f32>,
        missing: f32,
    ) -> Result<Self> {
        let grid = CovariateGrid {
            name: name.into(),
            lat0,
            lon0,
            dlat,
            dlon,
            nlat,
            nlon,
            times,
            values,
            missing,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid holding a single value everywhere at every listed time.
    #[allow(clippy::too_many_arguments)]
    pub fn filled(
        name: impl Into<String>,
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        nlat: usize,
        nlon: usize,
        times: Vec<DateTime<Utc>>,
        value: f32,
    ) -> Result<Self> {
        let n = times.len() * nlat * nlon;
        CovariateGrid::new(name, lat0, lon0, dlat, dlon, nlat, nlon, times, vec![value; n], DEFAULT_MISSING)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("grid `{}`: {m}", self.name)));
        if !(self.dlat > 0.0 && self.dlon > 0.0) {
            return bad(format!("spacing must be positive, got dlat={} dlon={}", self.dlat, self.dlon));
        }
        if self.nlat == 0 || self.nlon == 0 || self.times.is_empty() {
            return bad("empty grid".into());
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return bad("times must be strictly increasing".into());
        }
        let expected = self.times.len() * self.nlat * self.nlon;
        if self.values.len() != expected {
            return bad(format!("expected {expected} values, found {}", self.values.len()));
        }
        if !self.missing.is_finite() {
            return bad("missing sentinel must be finite".into());
        }
        Ok(())
    }

    pub fn wraps_longitude(&self) -> bool {
        (self.nlon as f64 * self.dlon - 360.0).abs() < 1e-6
    }

    fn index(&self, ti: usize, i: usize, j: usize) -> usize {
        (ti * self.nlat + i) * self.nlon + j
    }

    pub fn get(&self, ti: usize, i: usize, j: usize) -> Option<f32> {
        let v = self.values[self.index(ti, i, j)];
        (v != self.missing && v.is_finite()).then_some(v)
    }

    /// Index of the last time slice at or before `t`.
    pub fn time_slice(&self, t: DateTime<Utc>) -> Option<usize> {
        match self.times.binary_search(&t) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    fn out_of_domain(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Error {
        Error::OutOfDomain {
            grid: self.name.clone(),
            lat,
            lon,
            time: format_timestamp(t),
        }
    }

    /// Fractional index along an axis, snapped to integers within 1e-9.
    fn axis_position(x: f64, x0: f64, dx: f64) -> f64 {
        let f = (x - x0) / dx;
        if (f - f.round()).abs() < SNAP {
            f.round()
        } else {
            f
        }
    }

    /// Bilinear interpolation over the four surrounding cell centers at the
    /// last time slice at or before `t`. Missing neighbours are dropped and
    /// the remaining weights renormalized.
    pub fn interpolate(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<f64> {
        let ti = self.time_slice(t).ok_or_else(|| self.out_of_domain(lat, lon, t))?;
        self.sample(ti, lat, lon).map_err(|miss| match miss {
            Miss::OutOfDomain => self.out_of_domain(lat, lon, t),
            Miss::Missing => Error::MissingData {
                grid: self.name.clone(),
                lat,
                lon,
            },
        })
    }

    /// Same as [`interpolate`](Self::interpolate) with the time slice already
    /// resolved; `None` when the point is outside the grid or all
    /// neighbours are missing.
    #[inline]
    pub fn interpolate_slice(&self, ti: usize, lat: f64, lon: f64) -> Option<f64> {
        self.sample(ti, lat, lon).ok()
    }

    fn sample(&self, ti: usize, lat: f64, lon: f64) -> std::result::Result<f64, Miss> {
        let fi = Self::axis_position(lat, self.lat0, self.dlat);
        if !(fi >= 0.0 && fi <= (self.nlat - 1) as f64) {
            return Err(Miss::OutOfDomain);
        }
        let (i0, i1, wi) = Self::bracket(fi, self.nlat);

        let (j0, j1, wj) = if self.wraps_longitude() {
            let fj = Self::axis_position(lon, self.lon0, self.dlon).rem_euclid(self.nlon as f64);
            let fj = if (fj - self.nlon as f64).abs() < SNAP { 0.0 } else { fj };
            let j0 = (fj.floor() as usize).min(self.nlon - 1);
            (j0, (j0 + 1) % self.nlon, fj - j0 as f64)
        } else {
            let fj = Self::axis_position(lon, self.lon0, self.dlon);
            if !(fj >= 0.0 && fj <= (self.nlon - 1) as f64) {
                return Err(Miss::OutOfDomain);
            }
            Self::bracket(fj, self.nlon)
        };

        let corners = [
            (i0, j0, (1.0 - wi) * (1.0 - wj)),
            (i0, j1, (1.0 - wi) * wj),
            (i1, j0, wi * (1.0 - wj)),
            (i1, j1, wi * wj),
        ];
        let (mut acc, mut wsum) = (0.0f64, 0.0f64);
        for (i, j, w) in corners {
            if w == 0.0 {
                continue;
            }
            if let Some(v) = self.get(ti, i, j) {
                acc += w * v as f64;
                wsum += w;
            }
        }
        if wsum == 0.0 {
            return Err(Miss::Missing);
        }
        Ok(if wsum == 1.0 { acc } else { acc / wsum })
    }

    fn bracket(f: f64, n: usize) -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i0 = (f.floor() as usize).min(n - 2);
        (i0, i0 + 1, f - i0 as f64)
    }

    pub fn same_geometry(&self, other: &CovariateGrid) -> bool {
        self.lat0 == other.lat0
            && self.lon0 == other.lon0
            && self.dlat == other.dlat
            && self.dlon == other.dlon
            && self.nlat == other.nlat
            && self.nlon == other.nlon
            && self.times == other.times
    }

    pub fn write_covgrid<W: Write>(&self, mut out: W) -> Result<()> {
        let times: Vec<String> = self.times.iter().map(|t| format_timestamp(*t)).collect();
        let header = format!(
            "covgrid v1\nname={}\nlat0={}\nlon0={}\ndlat={}\ndlon={}\nnlat={}\nnlon={}\ntimes={}\nmissing={}\n",
            self.name,
            self.lat0,
            self.lon0,
            self.dlat,
            self.dlon,
            self.nlat,
            self.nlon,
            times.join(","),
            self.missing
        );
        let mut buf = Vec::with_capacity(header.len() + self.values.len() * 4);
        buf.extend_from_slice(header.as_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io(format!("writing grid {}", self.name), e))
    }

    pub fn read_covgrid<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut line = String::new();
        let read_line = |reader: &mut BufReader<R>, line: &mut String| -> Result<()> {
            line.clear();
            let n = reader
                .read_line(line)
                .map_err(|e| Error::Decode(format!("covgrid header: {e}")))?;
            if n == 0 {
                return Err(Error::Decode("covgrid header truncated".into()));
            }
            Ok(())
        };
        read_line(&mut reader, &mut line)?;
        if line.trim_end() != "covgrid v1" {
            return Err(Error::Decode(format!("not a covgrid v1 file (found `{}`)", line.trim_end())));
        }
        let keys = ["name", "lat0", "lon0", "dlat", "dlon", "nlat", "nlon", "times", "missing"];
        let mut fields = BTreeMap::new();
        for key in keys {
            read_line(&mut reader, &mut line)?;
            let (k, v) = line
                .trim_end_matches(['\n', '\r'])
                .split_once('=')
                .ok_or_else(|| Error::Decode(format!("bad covgrid header line `{}`", line.trim_end())))?;
            if k != key {
                return Err(Error::Decode(format!("expected covgrid key `{key}`, found `{k}`")));
            }
            fields.insert(key, v.to_string());
        }
        let num = |k: &str| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| Error::Decode(format!("covgrid `{k}` is not a number")))
        };
        let count = |k: &str| -> Result<usize> {
            fields[k]
                .parse()
                .map_err(|_| Error::Decode(format!("covgrid `{k}` is not a count")))
        };
        let times = fields["times"]
            .split(',')
            .map(|s| parse_hour_timestamp(s).map_err(Error::Decode))
            .collect::<Result<Vec<_>>>()?;
        let (nlat, nlon) = (count("nlat")?, count("nlon")?);
        let mut payload = Vec::new();
        reader
            .read_to_end(&mut payload)
            .map_err(|e| Error::Decode(format!("covgrid payload: {e}")))?;
        let expected = times.len() * nlat * nlon * 4;
        if payload.len() != expected {
            return Err(Error::Decode(format!(
                "covgrid payload has {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let missing: f32 = fields["missing"]
            .parse()
            .map_err(|_| Error::Decode("covgrid `missing` is not a number".into()))?;
        CovariateGrid::new(
            fields["name"].clone(),
            num("lat0")?,
            num("lon0")?,
            num("dlat")?,
            num("dlon")?,
            nlat,
            nlon,
            times,
            values,
            missing,
        )
        .map_err(|e| Error::Decode(e.to_string()))
    }

    /// Reads the small-fixture CSV form `time,lat,lon,value`. The geometry is
    /// inferred from the distinct coordinates, which must be evenly spaced;
    /// absent combinations become missing.
    pub fn read_csv(name: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != ["time", "lat", "lon", "value"] {
            return Err(Error::parse(path, 1, "expected header `time,lat,lon,value`"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            let err = |m: String| Error::parse(path, line, m);
            let t = parse_hour_timestamp(&rec[0]).map_err(err)?;
            let num = |k: usize| rec[k].trim().parse::<f64>().map_err(|_| err(format!("`{}` is not a number", &rec[k])));
            rows.push((t, num(1)?, num(2)?, num(3)?));
        }
        let axis = |vals: Vec<f64>| -> Result<(f64, f64, usize)> {
            let mut v = vals;
            v.sort_by(f64::total_cmp);
            v.dedup();
            if v.is_empty() {
                return Err(Error::Validation(format!("grid CSV {} is empty", path.display())));
            }
            let step = if v.len() > 1 { v[1] - v[0] } else { 1.0 };
            for w in v.windows(2) {
                if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1.0) {
                    return Err(Error::Validation(format!("grid CSV {} is not evenly spaced", path.display())));
                }
            }
            Ok((v[0], step, v.len()))
        };
        let (lat0, dlat, nlat) = axis(rows.iter().map(|r| r.1).collect())?;
        let (lon0, dlon, nlon) = axis(rows.iter().map(|r| r.2).collect())?;
        let mut times: Vec<DateTime<Utc>> = rows.iter().map(|r| r.0).collect();
        times.sort();
        times.dedup();
        let mut values = vec![DEFAULT_MISSING; times.len() * nlat * nlon];
        for (t, lat, lon, v) in rows {
            let ti = times.binary_search(&t).unwrap_or_default();
            let i = ((lat - lat0) / dlat).round() as usize;
            let j = ((lon - lon0) / dlon).round() as usize;
            values[(ti * nlat + i) * nlon + j] = v as f32;
        }
        CovariateGrid::new(name, lat0, lon0, dlat, dlon, nlat, nlon, times, values, DEFAULT_MISSING)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Validation(format!("bad grid file name {}", path.display())))?;
            CovariateGrid::read_csv(name, path)
        } else {
            let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
            CovariateGrid::read_covgrid(file)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_covgrid(std::io::BufWriter::new(file))
    }
}

/// Per-month means of a study-year series; `None` marks a month without any
/// observation. Missing inputs are skipped.
pub fn monthly_average(series: &[(DateTime<Utc>, Option<f64>)]) -> [Option<f64>; 12] {
    let mut sums = [0.0f64; 12];
    let mut counts = [0usize; 12];
    for (t, v) in series {
        if let Some(v) = v {
            let m = t.month0() as usize;
            sums[m] += v;
            counts[m] += 1;
        }
    }
    let mut out = [None; 12];
    for m in 0..12 {
        if counts[m] > 0 {
            out[m] = Some(sums[m] / counts[m] as f64);
        }
    }
    out
}

/// Reduces a sub-monthly grid (e.g. daily satellite retrievals) to twelve
/// monthly-mean slices starting on the first of each month of the first
/// time's year. Months without data become missing.
pub fn monthly_grid(grid: &CovariateGrid) -> Result<CovariateGrid> {
    let year = grid.times[0].year();
    let times: Vec<DateTime<Utc>> = (1..=12)
        .map(|m| Utc.with_ymd_and_hms(year, m, 1, 0, 0, 0).single().expect("valid month start"))
        .collect();
    let cells = grid.nlat * grid.nlon;
    let mut values = vec![grid.missing; 12 * cells];
    for c in 0..cells {
        let series: Vec<(DateTime<Utc>, Option<f64>)> = grid
            .times
            .iter()
            .enumerate()
            .filter(|(_, t)| t.year() == year)
            .map(|(ti, t)| {
                let v = grid.values[ti * cells + c];
                (*t, (v != grid.missing && v.is_finite()).then_some(v as f64))
            })
            .collect();
        for (m, avg) in monthly_average(&series).into_iter().enumerate() {
            if let Some(a) = avg {
                values[m * cells + c] = a as f32;
            }
        }
    }
    CovariateGrid::new(
        grid.name.clone(),
        grid.lat0,
        grid.lon0,
        grid.dlat,
        grid.dlon,
        grid.nlat,
        grid.nlon,
        times,
        values,
        grid.missing,
    )
}

/// Cell-wise sum of same-geometry grids, e.g. one species across emission
/// sectors. A cell missing in any input is missing in the sum.
pub fn sum_grids(name: &str, grids: &[CovariateGrid]) -> Result<CovariateGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Validation(format!("no grids to sum for `{name}`")))?;
    if let Some(g) = grids.iter().find(|g| !g.same_geometry(first)) {
        return Err(Error::Validation(format!(
            "grid `{}` does not share geometry with `{}`",
            g.name, first.name
        )));
    }
    let mut values = vec![0.0f32; first.values.len()];
    for g in grids {
        for (acc, v) in values.iter_mut().zip(&g.values) {
            if *acc == first.missing || *v == g.missing || !v.is_finite() {
                *acc = first.missing;
            } else {
                *acc += *v;
            }
        }
    }
    CovariateGrid::new(
        name,
        first.lat0,
        first.lon0,
        first.dlat,
        first.dlon,
        first.nlat,
        first.nlon,
        first.times.clone(),
        values,
        first.missing,
    )
}

enum Miss {
    OutOfDomain,
    Missing,
}

/// The covariate grids backing features 5..25, keyed by feature name.
#[derive(Debug, Clone, Default)]
pub struct CovariateSources {
    grids: BTreeMap<String, CovariateGrid>,
}

impl CovariateSources {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, grid: CovariateGrid) {
        self.grids.insert(grid.name.clone(), grid);
    }

    pub fn get(&self, name: &str) -> Option<&CovariateGrid> {
        self.grids.get(name)
    }

    pub fn grids(&self) -> impl Iterator<Item = &CovariateGrid> {
        self.grids.values()
    }

    /// Loads every `*.covgrid` and `*.csv` file in `dir`. Grids named
    /// `<species>.<sector>` (e.g. `em_co.ships`) are summed into the species
    /// feature when the species grid itself is absent.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e == "covgrid" || e == "csv")
            })
            .collect();
        entries.sort();
        let mut sources = CovariateSources::new();
        let mut sectors: BTreeMap<String, Vec<CovariateGrid>> = BTreeMap::new();
        for path in entries {
            let grid = CovariateGrid::load(&path)?;
            match grid.name.split_once('.') {
                Some((species, _sector)) => sectors.entry(species.to_string()).or_default().push(grid),
                None => sources.insert(grid),
            }
        }
        for (species, grids) in sectors {
            if sources.get(&species).is_none() {
                sources.insert(sum_grids(&species, &grids)?);
            }
        }
        Ok(sources)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for g in self.grids.values() {
            g.save(&dir.join(format!("{}.covgrid", g.name)))?;
        }
        Ok(())
    }

    /// Names of covariate features with no backing grid.
    pub fn missing_features(&self) -> Vec<&'static str> {
        FEATURE_NAMES[FIRST_COVARIATE..]
            .iter()
            .copied()
            .filter(|n| !self.grids.contains_key(*n))
            .collect()
    }
}

/// Assembles the feature vector with the longitude-derived UTC offset.
pub fn assemble(lat: f64, lon: f64, t: DateTime<Utc>, sources: &CovariateSources) -> Result<FeatureVector> {
    let offset = utc_offset_from_longitude(lon)?;
    assemble_with_offset(lat, lon, t, offset, sources)
}

pub fn assemble_with_offset(
    lat: f64,
    lon: f64,
    t: DateTime<Utc>,
    offset_hours: i32,
    sources: &CovariateSources,
) -> Result<FeatureVector> {
    let tf = temporal_features(t, offset_hours);
    let mut v = [0.0; N_FEATURES];
    v[0] = tf.hour as f64;
    v[1] = tf.day_of_week as f64;
    v[2] = tf.week_number as f64;
    v[3] = tf.month as f64;
    v[4] = tf.utc_offset as f64;
    for (index, name) in FEATURE_NAMES.iter().enumerate().skip(FIRST_COVARIATE) {
        let wrap = |source: Error| Error::Assembly {
            index,
            name,
            source: Box::new(source),
        };
        let grid = sources
            .get(name)
            .ok_or_else(|| wrap(Error::Validation(format!("no covariate grid named `{name}`"))))?;
        v[index] = grid.interpolate(lat, lon, t).map_err(wrap)?;
    }
    Ok(FeatureVector(v))
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv_fields().join(","))
    }
}
