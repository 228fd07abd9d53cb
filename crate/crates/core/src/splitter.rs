//! Stratified hold-out splits and spatial fold plans.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aqi::{subindex, DaqiTable};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::station_store::StationMeta;
use crate::types::{Continent, Pollutant};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub features: FeatureVector,
    /// Concentration, µg/m³.
    pub target: f64,
    pub station_id: String,
    pub network_id: String,
    pub country_code: String,
    pub continent: Continent,
    pub timestamp: DateTime<Utc>,
}

/// Row indices of the three hold-out sets, each ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// `row_index,set` manifest in row order.
    pub fn write_manifest<W: Write>(&self, out: W) -> Result<()> {
        let mut labelled: Vec<(usize, &str)> = self
            .train
            .iter()
            .map(|&i| (i, "train"))
            .chain(self.validation.iter().map(|&i| (i, "validation")))
            .chain(self.test.iter().map(|&i| (i, "test")))
            .collect();
        labelled.sort();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row_index", "set"])?;
        for (i, s) in labelled {
            w.write_record([i.to_string().as_str(), s])?;
        }
        w.flush().map_err(|e| Error::io("writing split manifest", e))
    }
}

/// FNV-1a, used to derive per-group RNG streams that do not depend on
/// group iteration order.
fn stream_key(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream_key(parts))
}

/// 70/20/10 allocation of `n` rows by largest remainder; ties in the
/// remainder favour train, then validation.
pub fn allocate(n: usize) -> (usize, usize, usize) {
    let shares = [7usize, 2, 1];
    let mut counts = shares.map(|s| n * s / 10);
    let rems = shares.map(|s| n * s % 10);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| rems[*b].cmp(&rems[*a]).then(a.cmp(b)));
    for k in order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    (counts[0], counts[1], counts[2])
}

/// Per (station, DAQI band) stratum, shuffles rows by `seed` and allocates
/// them 70/20/10. Strata with fewer than 3 rows go wholly to train.
pub fn stratified_split(rows: &[LabeledRow], pollutant: Pollutant, daqi: &DaqiTable, seed: u64) -> Result<Split> {
    if rows.is_empty() {
        return Err(Error::Precondition("cannot split an empty row set".into()));
    }
    let mut strata: BTreeMap<(&str, u8), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let band = subindex(pollutant, r.target, daqi)?;
        strata.entry((r.station_id.as_str(), band)).or_default().push(i);
    }
    let mut split = Split::default();
    for ((station, band), mut idx) in strata {
        if idx.len() < 3 {
            split.train.extend(idx);
            continue;
        }
        idx.shuffle(&mut rng_for(seed, &[station.as_bytes(), &[band]]));
        let (n_train, n_val, _) = allocate(idx.len());
        split.train.extend_from_slice(&idx[..n_train]);
        split.validation.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldKind {
    Holdout,
    WithinNetworkKFold,
    LeaveCountryOut,
    LeaveContinentOut,
}

pub const TRAIN_LABEL: &str = "train";
pub const TEST_LABEL: &str = "test";

/// Station → fold label assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub kind: FoldKind,
    pub assignments: BTreeMap<String, String>,
    pub seed: u64,
    /// Held-out group for leave-group-out plans.
    pub group: Option<String>,
}

impl FoldPlan {
    /// Declared labels in order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.assignments.values().cloned().collect();
        labels.sort_by_key(|l| fold_number(l).unwrap_or(usize::MAX));
        labels.dedup();
        labels
    }

    pub fn stations_in(&self, label: &str) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// A leave-group-out plan with nothing left to train on.
    pub fn is_degenerate(&self) -> bool {
        self.group.is_some() && !self.assignments.values().any(|l| l == TRAIN_LABEL)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "fold_label"])?;
        for (s, l) in &self.assignments {
            w.write_record([s, l])?;
        }
        w.flush().map_err(|e| Error::io("writing fold plan", e))
    }
}

pub fn fold_label(k: usize) -> String {
    format!("fold_{k}")
}

fn fold_number(label: &str) -> Option<usize> {
    label.strip_prefix("fold_")?.parse().ok()
}

fn unique_stations(stations: &[StationMeta]) -> Vec<&StationMeta> {
    let mut seen = std::collections::BTreeSet::new();
    stations.iter().filter(|s| seen.insert(s.station_id.as_str())).collect()
}

/// Shuffles each network's stations by `seed` and deals them round-robin
/// into `k` folds. The dealing position carries over between networks so
/// fold sizes stay balanced.
pub fn within_network_kfold(stations: &[StationMeta], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut networks: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in unique_stations(stations) {
        networks
            .entry(s.network_id.as_str())
            .or_default()
            .push(s.station_id.as_str());
    }
    let mut assignments = BTreeMap::new();
    let mut next = 0usize;
    for (network, mut ids) in networks {
        ids.sort_unstable();
        ids.shuffle(&mut rng_for(seed, &[network.as_bytes()]));
        for id in ids {
            assignments.insert(id.to_string(), fold_label(next % k));
            next += 1;
        }
    }
    Ok(FoldPlan {
        kind: FoldKind::WithinNetworkKFold,
        assignments,
        seed,
        group: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Country,
    Continent,
}

/// One plan per distinct group value; the group is the test fold and all
/// other stations train.
pub fn leave_group_out(stations: &[StationMeta], grouping: Grouping) -> Result<Vec<FoldPlan>> {
    let stations = unique_stations(stations);
    let key = |s: &StationMeta| -> Result<String> {
        let k = match grouping {
            Grouping::Country => s.country_code.trim().to_string(),
            Grouping::Continent => s.continent.as_str().to_string(),
        };
        if k.is_empty() {
            return Err(Error::Validation(format!("station {} has an empty {grouping:?} key", s.station_id)));
        }
        Ok(k)
    };
    let keyed = stations
        .iter()
        .map(|s| Ok((s.station_id.as_str(), key(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let groups: std::collections::BTreeSet<&str> = keyed.iter().map(|(_, k)| k.as_str()).collect();
    let kind = match grouping {
        Grouping::Country => FoldKind::LeaveCountryOut,
        Grouping::Continent => FoldKind::LeaveContinentOut,
    };
    Ok(groups
        .into_iter()
        .map(|g| FoldPlan {
            kind,
            assignments: keyed
                .iter()
                .map(|(id, k)| (id.to_string(), if k == g { TEST_LABEL } else { TRAIN_LABEL }.to_string()))
                .collect(),
            seed: 0,
            group: Some(g.to_string()),
        })
        .collect())
}
