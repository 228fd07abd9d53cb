//! Regular lat/lon cell-center grids and hourly prediction tiles.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{temporal_features, utc_offset_from_longitude, CovariateGrid, CovariateSources};
use crate::features::{FEATURE_NAMES, FIRST_COVARIATE, N_FEATURES};
use crate::gbdt::TreeEnsemble;
use crate::intervals::{predict_interval_slice, QuantileTriplet};
use crate::station_store::{format_timestamp, parse_hour_timestamp};
use crate::types::Pollutant;

pub const TILE_MAGIC: &str = "aptile v1";
pub const TILE_MISSING: f32 = -9999.0;

/// Cell-center registered regular grid; cell `(i, j)` has its center at
/// `(lat0 + i·res, lon0 + j·res)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat0: f64,
    pub lon0: f64,
    pub resolution: f64,
    pub nlat: usize,
    pub nlon: usize,
}

impl GridSpec {
    pub fn new(lat0: f64, lon0: f64, resolution: f64, nlat: usize, nlon: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) || nlat == 0 || nlon == 0 {
            return Err(Error::Validation(format!(
                "grid needs positive resolution and extent, got res={resolution} {nlat}x{nlon}"
            )));
        }
        if !lat0.is_finite() || !lon0.is_finite() {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(GridSpec {
            lat0,
            lon0,
            resolution,
            nlat,
            nlon,
        })
    }

    /// 0.25° global grid, 720 × 1440 cells.
    pub fn global_quarter_degree() -> Self {
        GridSpec {
            lat0: -89.875,
            lon0: -179.875,
            resolution: 0.25,
            nlat: 720,
            nlon: 1440,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nlat * self.nlon
    }

    #[inline]
    pub fn lat(&self, i: usize) -> f64 {
        self.lat0 + i as f64 * self.resolution
    }

    #[inline]
    pub fn lon(&self, j: usize) -> f64 {
        self.lon0 + j as f64 * self.resolution
    }

    /// Center of the cell at lat-major position `index`.
    pub fn cell(&self, index: usize) -> (f64, f64) {
        (self.lat(index / self.nlon), self.lon(index % self.nlon))
    }

    /// Short content hash identifying the geometry.
    pub fn hash(&self) -> String {
        let canonical = format!(
            "gridspec v1;lat0={:?};lon0={:?};res={:?};nlat={};nlon={}",
            self.lat0, self.lon0, self.resolution, self.nlat, self.nlon
        );
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

/// All cell centers in lat-major order.
pub fn make_grid(spec: &GridSpec) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..spec.n_cells()).map(move |k| spec.cell(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    Point,
    Q05,
    Q50,
    Q95,
    /// Hourly DAQI index (1..10).
    Index,
    /// Sum of hourly indices over a period.
    IndexSum,
    /// Pollutant code of the driving subindex.
    Driving,
}

impl TileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TileKind::Point => "point",
            TileKind::Q05 => "q05",
            TileKind::Q50 => "q50",
            TileKind::Q95 => "q95",
            TileKind::Index => "index",
            TileKind::IndexSum => "index_sum",
            TileKind::Driving => "driving",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TileKind::Point,
            TileKind::Q05,
            TileKind::Q50,
            TileKind::Q95,
            TileKind::Index,
            TileKind::IndexSum,
            TileKind::Driving,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Dense lat-major array of per-cell values. Cells that could not be
/// computed hold [`TILE_MISSING`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTile {
    /// `None` for multi-pollutant products.
    pub pollutant: Option<Pollutant>,
    pub timestamp: DateTime<Utc>,
    pub kind: TileKind,
    pub spec: GridSpec,
    pub values: Vec<f32>,
}

#[inline]
pub fn is_missing(v: f32) -> bool {
    v == TILE_MISSING
}

impl PredictionTile {
    pub fn new(
        pollutant: Option<Pollutant>,
        timestamp: DateTime<Utc>,
        kind: TileKind,
        spec: GridSpec,
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != spec.n_cells() {
            return Err(Error::Validation(format!(
                "tile has {} values, grid has {} cells",
                values.len(),
                spec.n_cells()
            )));
        }
        Ok(PredictionTile {
            pollutant,
            timestamp,
            kind,
            spec,
            values,
        })
    }

    pub fn filled(pollutant: Option<Pollutant>, timestamp: DateTime<Utc>, kind: TileKind, spec: GridSpec, v: f32) -> Self {
        let values = vec![v; spec.n_cells()];
        PredictionTile {
            pollutant,
            timestamp,
            kind,
            spec,
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.spec.nlon + j]
    }

    /// Fraction of cells holding a value.
    pub fn completeness(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let present = self.values.iter().filter(|v| !is_missing(**v)).count();
        present as f64 / self.values.len() as f64
    }

    pub fn header(&self) -> String {
        format!(
            "{TILE_MAGIC}\npollutant={}\ntimestamp={}\nkind={}\ngridspec_hash={}\nmissing={}\n",
            self.pollutant.map_or("all", |p| p.as_str()),
            format_timestamp(self.timestamp),
            self.kind.as_str(),
            self.spec.hash(),
            TILE_MISSING
        )
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut bytes = self.header().into_bytes();
        bytes.reserve(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes).map_err(|e| Error::io("writing tile", e))
    }

    /// Reads a tile written for `spec`; a different grid is an
    /// incompatibility error.
    pub fn read_from<R: Read>(input: R, spec: &GridSpec) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut line = String::new();
        let next_line = |reader: &mut BufReader<R>, line: &mut String| -> Result<String> {
            line.clear();
            let n = reader.read_line(line).map_err(|e| Error::io("reading tile header", e))?;
            if n == 0 || !line.ends_with('\n') {
                return Err(Error::Decode("truncated tile header".into()));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut reader, &mut line)? != TILE_MAGIC {
            return Err(Error::Decode("not an aptile v1 file".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let l = next_line(&mut reader, &mut line)?;
            l.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::Decode(format!("expected `{key}=`, found `{l}`")))
        };
        let pollutant = match field("pollutant")?.as_str() {
            "all" => None,
            p => Some(p.parse::<Pollutant>().map_err(|e| Error::Decode(e.to_string()))?),
        };
        let timestamp = parse_hour_timestamp(&field("timestamp")?).map_err(Error::Decode)?;
        let kind_raw = field("kind")?;
        let kind = TileKind::parse(&kind_raw).ok_or_else(|| Error::Decode(format!("unknown tile kind `{kind_raw}`")))?;
        let hash = field("gridspec_hash")?;
        let missing: f32 = field("missing")?
            .parse()
            .map_err(|e| Error::Decode(format!("bad missing value: {e}")))?;
        if hash != spec.hash() {
            return Err(Error::Incompatible(format!(
                "tile grid hash {hash} does not match expected grid {}",
                spec.hash()
            )));
        }
        let mut payload = Vec::new();
        reader
            .read_to_end(&mut payload)
            .map_err(|e| Error::io("reading tile payload", e))?;
        if payload.len() != spec.n_cells() * 4 {
            return Err(Error::Decode(format!(
                "tile payload has {} bytes, expected {}",
                payload.len(),
                spec.n_cells() * 4
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v == missing {
                    TILE_MISSING
                } else {
                    v
                }
            })
            .collect();
        PredictionTile::new(pollutant, timestamp, kind, spec.clone(), values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path, spec: &GridSpec) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(f, spec)
    }

    /// `lat,lon,value` rows; missing cells are skipped.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lat", "lon", "value"])?;
        for (k, v) in self.values.iter().enumerate() {
            if is_missing(*v) {
                continue;
            }
            let (lat, lon) = self.spec.cell(k);
            w.write_record([lat.to_string(), lon.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("writing tile CSV", e))
    }

    pub fn check_same_grid(&self, other: &PredictionTile) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Validation(format!(
                "tile grids differ ({} vs {})",
                self.spec.hash(),
                other.spec.hash()
            )));
        }
        Ok(())
    }
}

/// Per-tile view of the covariates: each grid with its time slice resolved.
struct Snapshot<'a> {
    grids: Vec<(&'a CovariateGrid, usize)>,
}

impl<'a> Snapshot<'a> {
    fn resolve(sources: &'a CovariateSources, t: DateTime<Utc>) -> Option<Self> {
        let mut grids = Vec::with_capacity(N_FEATURES - FIRST_COVARIATE);
        for name in &FEATURE_NAMES[FIRST_COVARIATE..] {
            let g = sources.get(name)?;
            grids.push((g, g.time_slice(t)?));
        }
        Some(Snapshot { grids })
    }

    #[inline]
    fn fill(&self, lat: f64, lon: f64, x: &mut [f64; N_FEATURES]) -> bool {
        for (k, (g, ti)) in self.grids.iter().enumerate() {
            match g.interpolate_slice(*ti, lat, lon) {
                Some(v) => x[FIRST_COVARIATE + k] = v,
                None => return false,
            }
        }
        true
    }
}

/// Temporal features per grid column; `None` where the longitude has no
/// valid UTC offset.
fn column_temporals(spec: &GridSpec, t: DateTime<Utc>) -> Vec<Option<[f64; FIRST_COVARIATE]>> {
    (0..spec.nlon)
        .map(|j| {
            let offset = utc_offset_from_longitude(spec.lon(j)).ok()?;
            let tf = temporal_features(t, offset);
            Some([
                tf.hour as f64,
                tf.day_of_week as f64,
                tf.week_number as f64,
                tf.month as f64,
                tf.utc_offset as f64,
            ])
        })
        .collect()
}

fn check_schema(model: &TreeEnsemble) -> Result<()> {
    if model.n_features() != N_FEATURES {
        return Err(Error::Validation(format!(
            "model expects {} features, the feature schema has {N_FEATURES}",
            model.n_features()
        )));
    }
    Ok(())
}

/// Evaluates `cell` for every grid cell with assembled features, row by row
/// in parallel. Each cell is computed independently so the result does not
/// depend on the schedule.
fn map_cells<const K: usize, F>(sources: &CovariateSources, t: DateTime<Utc>, spec: &GridSpec, cell: F) -> [Vec<f32>; K]
where
    F: Fn(&[f64; N_FEATURES]) -> Option<[f32; K]> + Sync,
{
    let n = spec.n_cells();
    let mut out: [Vec<f32>; K] = std::array::from_fn(|_| vec![TILE_MISSING; n]);
    let Some(snapshot) = Snapshot::resolve(sources, t) else {
        return out;
    };
    let temporals = column_temporals(spec, t);
    let rows: Vec<Vec<[f32; K]>> = (0..spec.nlat)
        .into_par_iter()
        .map(|i| {
            let lat = spec.lat(i);
            let mut x = [0.0; N_FEATURES];
            (0..spec.nlon)
                .map(|j| {
                    let Some(tf) = &temporals[j] else {
                        return [TILE_MISSING; K];
                    };
                    x[..FIRST_COVARIATE].copy_from_slice(tf);
                    if !snapshot.fill(lat, spec.lon(j), &mut x) {
                        return [TILE_MISSING; K];
                    }
                    cell(&x).unwrap_or([TILE_MISSING; K])
                })
                .collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, vals) in row.into_iter().enumerate() {
            for (k, v) in vals.into_iter().enumerate() {
                out[k][i * spec.nlon + j] = v;
            }
        }
    }
    out
}

/// Predicts every cell of `spec` at hour `t`, treating each cell as an
/// independent station.
pub fn predict_tile(
    model: &TreeEnsemble,
    sources: &CovariateSources,
    t: DateTime<Utc>,
    spec: &GridSpec,
) -> Result<PredictionTile> {
    check_schema(model)?;
    let [values] = map_cells::<1, _>(sources, t, spec, |x| model.predict_slice(x).ok().map(|v| [v as f32]));
    PredictionTile::new(model.pollutant, t, TileKind::Point, spec.clone(), values)
}

/// Lower, median and upper quantile tiles at hour `t`.
pub fn predict_interval_tiles(
    triplet: &QuantileTriplet,
    sources: &CovariateSources,
    t: DateTime<Utc>,
    spec: &GridSpec,
) -> Result<[PredictionTile; 3]> {
    check_schema(&triplet.q05)?;
    let [lo, mid, hi] = map_cells::<3, _>(sources, t, spec, |x| {
        predict_interval_slice(triplet, x)
            .ok()
            .map(|p| [p.lo as f32, p.mid as f32, p.hi as f32])
    });
    let p = triplet.q05.pollutant;
    Ok([
        PredictionTile::new(p, t, TileKind::Q05, spec.clone(), lo)?,
        PredictionTile::new(p, t, TileKind::Q50, spec.clone(), mid)?,
        PredictionTile::new(p, t, TileKind::Q95, spec.clone(), hi)?,
    ])
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
