//! DAQI banding of concentrations and derived index map products.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{is_missing, PredictionTile, TileKind, TILE_MISSING};
use crate::types::Pollutant;

pub const N_BANDS: usize = 10;

const DEFAULT_TABLE: &str = include_str!("../data/daqi_default.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandGroup {
    Low,
    Moderate,
    High,
    VeryHigh,
}

pub fn band_group(index: u8) -> BandGroup {
    match index {
        0..=3 => BandGroup::Low,
        4..=6 => BandGroup::Moderate,
        7..=9 => BandGroup::High,
        _ => BandGroup::VeryHigh,
    }
}

/// Per-pollutant inclusive upper bounds for bands 1..10 (µg/m³).
#[derive(Debug, Clone, PartialEq)]
pub struct DaqiTable {
    bounds: BTreeMap<Pollutant, [f64; N_BANDS]>,
}

impl Default for DaqiTable {
    fn default() -> Self {
        DaqiTable::parse_csv(DEFAULT_TABLE.as_bytes(), "<built-in DAQI table>").expect("built-in DAQI table is valid")
    }
}

impl DaqiTable {
    pub fn new(bounds: BTreeMap<Pollutant, [f64; N_BANDS]>) -> Result<Self> {
        for (p, b) in &bounds {
            if b.iter().any(|v| v.is_nan()) || b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("DAQI bounds for {p} must be strictly increasing")));
            }
            if b[0] < 0.0 {
                return Err(Error::Config(format!("DAQI bounds for {p} must be non-negative")));
            }
        }
        Ok(DaqiTable { bounds })
    }

    /// Parses `pollutant,band,upper_bound` rows; `inf` is accepted.
    pub fn parse_csv<R: std::io::Read>(input: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["pollutant", "band", "upper_bound"] {
            return Err(Error::Config(format!(
                "{origin}: header must be `pollutant,band,upper_bound`"
            )));
        }
        let mut partial: BTreeMap<Pollutant, [Option<f64>; N_BANDS]> = BTreeMap::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let bad = |msg: String| Error::Config(format!("{origin}:{line}: {msg}"));
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", rec.len())));
            }
            let p: Pollutant = rec[0].parse().map_err(|e: Error| bad(e.to_string()))?;
            let band: usize = rec[1].parse().map_err(|_| bad(format!("bad band `{}`", &rec[1])))?;
            if !(1..=N_BANDS).contains(&band) {
                return Err(bad(format!("band {band} outside 1..{N_BANDS}")));
            }
            let ub: f64 = match rec[2].to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => f64::INFINITY,
                s => s.parse().map_err(|_| bad(format!("bad upper bound `{s}`")))?,
            };
            let slot = &mut partial.entry(p).or_insert([None; N_BANDS])[band - 1];
            if slot.replace(ub).is_some() {
                return Err(bad(format!("duplicate band {band} for {p}")));
            }
        }
        let mut bounds = BTreeMap::new();
        for (p, slots) in partial {
            let mut b = [0.0; N_BANDS];
            for (i, s) in slots.iter().enumerate() {
                b[i] = s.ok_or_else(|| Error::Config(format!("{origin}: {p} lacks band {}", i + 1)))?;
            }
            bounds.insert(p, b);
        }
        DaqiTable::new(bounds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        DaqiTable::parse_csv(f, &path.display().to_string())
    }

    pub fn bounds(&self, p: Pollutant) -> Option<&[f64; N_BANDS]> {
        self.bounds.get(&p)
    }

    pub fn pollutants(&self) -> impl Iterator<Item = Pollutant> + '_ {
        self.bounds.keys().copied()
    }

    pub fn covers(&self, p: Pollutant) -> bool {
        self.bounds.contains_key(&p)
    }
}

/// Smallest band whose upper bound is ≥ `c`; 10 above every finite bound.
pub fn subindex(p: Pollutant, c: f64, table: &DaqiTable) -> Result<u8> {
    let b = table
        .bounds(p)
        .ok_or_else(|| Error::Config(format!("DAQI table has no bands for {p}")))?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("concentration {c} must be >= 0")));
    }
    Ok(b.iter().position(|ub| c <= *ub).map_or(N_BANDS, |i| i + 1) as u8)
}

pub fn overall_index(subindices: &[u8]) -> Result<u8> {
    subindices
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::Validation("overall index needs at least one subindex".into()))
}

/// Hourly subindex tile for a concentration tile.
pub fn index_tile(conc: &PredictionTile, table: &DaqiTable) -> Result<PredictionTile> {
    let p = conc
        .pollutant
        .ok_or_else(|| Error::Validation("concentration tile carries no pollutant".into()))?;
    if !table.covers(p) {
        return Err(Error::Config(format!("DAQI table has no bands for {p}")));
    }
    let values = conc
        .values
        .iter()
        .map(|&c| {
            if is_missing(c) {
                Ok(TILE_MISSING)
            } else {
                subindex(p, c as f64, table).map(f32::from)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionTile::new(Some(p), conc.timestamp, TileKind::Index, conc.spec.clone(), values)
}

fn check_shared_grid(tiles: &[PredictionTile]) -> Result<&PredictionTile> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Validation("no tiles supplied".into()))?;
    for t in &tiles[1..] {
        first.check_same_grid(t)?;
    }
    Ok(first)
}

/// Per-cell maximum over per-pollutant index tiles for the same hour.
pub fn overall_index_tile(indices: &[PredictionTile]) -> Result<PredictionTile> {
    let first = check_shared_grid(indices)?;
    let values = (0..first.values.len())
        .map(|k| {
            indices
                .iter()
                .map(|t| t.values[k])
                .filter(|v| !is_missing(*v))
                .fold(None, |m: Option<f32>, v| Some(m.map_or(v, |m| m.max(v))))
                .unwrap_or(TILE_MISSING)
        })
        .collect();
    PredictionTile::new(None, first.timestamp, TileKind::Index, first.spec.clone(), values)
}

/// Per-cell sum of hourly index tiles; a cell missing in any hour stays
/// missing.
pub fn annual_summation(tiles: &[PredictionTile]) -> Result<PredictionTile> {
    let first = check_shared_grid(tiles)?;
    let mut sums = vec![0.0f64; first.values.len()];
    let mut missing = vec![false; first.values.len()];
    for t in tiles {
        for (k, v) in t.values.iter().enumerate() {
            if is_missing(*v) {
                missing[k] = true;
            } else {
                sums[k] += *v as f64;
            }
        }
    }
    let values = sums
        .iter()
        .zip(&missing)
        .map(|(s, m)| if *m { TILE_MISSING } else { *s as f32 })
        .collect();
    PredictionTile::new(first.pollutant, first.timestamp, TileKind::IndexSum, first.spec.clone(), values)
}

/// Per cell, the code of the pollutant with the largest summed subindex.
/// Ties go to the pollutant listed first in [`Pollutant::ALL`].
pub fn driving_subindex(sums: &[PredictionTile]) -> Result<PredictionTile> {
    let first = check_shared_grid(sums)?;
    let mut ordered: Vec<(Pollutant, &PredictionTile)> = Vec::with_capacity(sums.len());
    for t in sums {
        let p = t
            .pollutant
            .ok_or_else(|| Error::Validation("summation tile carries no pollutant".into()))?;
        if ordered.iter().any(|(q, _)| *q == p) {
            return Err(Error::Validation(format!("two summation tiles for {p}")));
        }
        ordered.push((p, t));
    }
    ordered.sort_by_key(|(p, _)| *p);
    let values = (0..first.values.len())
        .map(|k| {
            let mut best: Option<(Pollutant, f32)> = None;
            for (p, t) in &ordered {
                let v = t.values[k];
                if is_missing(v) {
                    return TILE_MISSING;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((*p, v));
                }
            }
            best.map_or(TILE_MISSING, |(p, _)| p.code() as f32)
        })
        .collect();
    PredictionTile::new(None, first.timestamp, TileKind::Driving, first.spec.clone(), values)
}
