//! Synthetic fixtures: a small covariate world with stations whose
//! concentrations follow a known function of the covariates, and an
//! adversarial QC station set with hand labels.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{assemble, feature_index, CovariateGrid, CovariateSources, FeatureVector, DEFAULT_MISSING};
use crate::features::{FEATURE_NAMES, FIRST_COVARIATE};
use crate::station_store::{MeasurementSeries, QcRule, Sample, StationMeta};
use crate::types::{Continent, Pollutant, Unit};

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub days: usize,
    pub stations_per_country: usize,
    pub n_networks: usize,
    /// Standard deviation of the additive measurement noise, µg/m³.
    pub noise_sd: f64,
    pub pollutant: Pollutant,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 7,
            start: Utc.with_ymd_and_hms(2022, 3, 1, 0, 0, 0).unwrap(),
            days: 30,
            stations_per_country: 5,
            n_networks: 5,
            noise_sd: 1.5,
            pollutant: Pollutant::NO2,
        }
    }
}

/// Fictional countries: code, continent, station box (lat range, lon range)
/// and the additive concentration offset applied to every station.
pub const COUNTRIES: [(&str, Continent, (f64, f64), (f64, f64), f64); 4] = [
    ("AA", Continent::Europe, (44.0, 52.0), (-6.0, 4.0), 14.0),
    ("BB", Continent::Europe, (50.0, 57.0), (8.0, 20.0), -9.0),
    ("CC", Continent::Africa, (33.0, 39.0), (-6.0, 6.0), 7.0),
    ("DD", Continent::Africa, (32.0, 40.0), (12.0, 24.0), -12.0),
];

pub const LAT0: f64 = 30.0;
pub const LON0: f64 = -10.0;
pub const STEP: f64 = 2.5;
pub const NLAT: usize = 13;
pub const NLON: usize = 15;

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub stations: Vec<StationMeta>,
    pub series: Vec<MeasurementSeries>,
    pub sources: CovariateSources,
    pub country_offsets: BTreeMap<String, f64>,
}

/// Smooth field parameters for one covariate.
struct Field {
    base: f64,
    spatial: f64,
    diurnal: f64,
    synoptic: f64,
    k: (f64, f64),
    phase: (f64, f64, f64),
    period_days: f64,
}

impl Field {
    fn random(rng: &mut ChaCha8Rng, base: f64, spatial: f64, diurnal: f64, synoptic: f64) -> Self {
        let tau = std::f64::consts::TAU;
        Field {
            base,
            spatial,
            diurnal,
            synoptic,
            k: (rng.gen_range(0.05..0.2), rng.gen_range(0.05..0.2)),
            phase: (rng.gen_range(0.0..tau), rng.gen_range(0.0..tau), rng.gen_range(0.0..tau)),
            period_days: rng.gen_range(3.0..9.0),
        }
    }

    fn value(&self, lat: f64, lon: f64, hours: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let local_hour = hours + lon / 15.0;
        self.base
            + self.spatial * (self.k.0 * lat + self.k.1 * lon + self.phase.0).sin()
            + self.diurnal * (tau * local_hour / 24.0 + self.phase.1).sin()
            + self.synoptic * (tau * hours / (24.0 * self.period_days) + 0.1 * lon + self.phase.2).sin()
    }
}

fn hourly_times(start: DateTime<Utc>, hours: usize) -> Vec<DateTime<Utc>> {
    (0..hours).map(|h| start + Duration::hours(h as i64)).collect()
}

fn field_grid(name: &str, field: &Field, times: &[DateTime<Utc>], start: DateTime<Utc>) -> Result<CovariateGrid> {
    let mut values = Vec::with_capacity(times.len() * NLAT * NLON);
    for t in times {
        let hours = (*t - start).num_hours() as f64;
        for i in 0..NLAT {
            for j in 0..NLON {
                let v = field.value(LAT0 + i as f64 * STEP, LON0 + j as f64 * STEP, hours);
                values.push(v as f32);
            }
        }
    }
    CovariateGrid::new(name, LAT0, LON0, STEP, STEP, NLAT, NLON, times.to_vec(), values, DEFAULT_MISSING)
}

fn z(f: &FeatureVector, name: &str, centre: f64, scale: f64) -> f64 {
    (f.0[feature_index(name).expect("known feature")] - centre) / scale
}

/// The noiseless concentration for a feature vector, before the country
/// offset.
pub fn signal(f: &FeatureVector) -> f64 {
    30.0 + 7.0 * z(f, "temp_2m", 285.0, 6.0) - 6.0 * z(f, "boundary_layer_height", 800.0, 400.0)
        + 4.0 * z(f, "u10", 0.0, 4.0)
        + 5.0 * z(f, "em_nox", 5.0, 2.0)
        + 3.0 * z(f, "rs_no2", 1.0, 0.5)
}

pub fn synthetic_world(config: &WorldConfig) -> Result<SyntheticWorld> {
    if config.days == 0 || config.stations_per_country == 0 || config.n_networks == 0 {
        return Err(Error::Validation("synthetic world needs days, stations and networks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hours = config.days * 24;
    let hourly = hourly_times(config.start, hours);
    let once = vec![config.start];

    let mut sources = CovariateSources::new();
    for name in &FEATURE_NAMES[FIRST_COVARIATE..] {
        let (field, times) = match *name {
            "u100" | "v100" => (Field::random(&mut rng, 0.0, 4.0, 2.0, 5.0), &hourly),
            "u10" | "v10" => (Field::random(&mut rng, 0.0, 3.0, 1.5, 4.0), &hourly),
            "dewpoint_2m" => (Field::random(&mut rng, 278.0, 4.0, 2.0, 3.0), &hourly),
            "temp_2m" => (Field::random(&mut rng, 285.0, 5.0, 5.0, 3.0), &hourly),
            "boundary_layer_height" => (Field::random(&mut rng, 800.0, 250.0, 350.0, 150.0), &hourly),
            "downward_uv" => (Field::random(&mut rng, 40.0, 10.0, 35.0, 5.0), &hourly),
            "wind_gust_10m" => (Field::random(&mut rng, 8.0, 2.0, 2.0, 3.0), &hourly),
            "surface_pressure" => (Field::random(&mut rng, 101_000.0, 600.0, 50.0, 800.0), &hourly),
            "total_column_rain_water" => (Field::random(&mut rng, 0.2, 0.1, 0.05, 0.15), &hourly),
            "rs_no2" | "rs_o3" | "rs_so2" | "rs_aai" => (Field::random(&mut rng, 1.0, 0.5, 0.0, 0.0), &once),
            _ => (Field::random(&mut rng, 5.0, 2.0, 0.0, 0.0), &once),
        };
        sources.insert(field_grid(name, &field, times, config.start)?);
    }

    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let mut stations = Vec::new();
    let mut series = Vec::new();
    let mut country_offsets = BTreeMap::new();
    let mut n = 0;
    for (code, continent, (lat_lo, lat_hi), (lon_lo, lon_hi), offset) in COUNTRIES {
        country_offsets.insert(code.to_string(), offset);
        for _ in 0..config.stations_per_country {
            let station = StationMeta {
                station_id: format!("{code}-{n:03}"),
                network_id: format!("net{}", n % config.n_networks),
                country_code: code.to_string(),
                continent,
                lat: rng.gen_range(lat_lo..lat_hi),
                lon: rng.gen_range(lon_lo..lon_hi),
                pollutant: config.pollutant,
                unit: Unit::UgM3,
            };
            n += 1;
            let mut samples = Vec::with_capacity(hours);
            for t in &hourly {
                let f = assemble(station.lat, station.lon, *t, &sources)?;
                let y = signal(&f) + offset + noise.sample(&mut rng);
                samples.push(Sample {
                    time: *t,
                    value: y.max(0.5),
                });
            }
            series.push(MeasurementSeries::new(station.clone(), samples));
            stations.push(station);
        }
    }
    Ok(SyntheticWorld {
        config: config.clone(),
        stations,
        series,
        sources,
        country_offsets,
    })
}

/// Twelve stations: one violating each QC rule, plus six clean controls.
/// Returns the series with the expected verdict for each station.
pub fn qc_fixture() -> Vec<(MeasurementSeries, Option<QcRule>)> {
    let start = Utc.with_ymd_and_hms(2022, 1, 3, 0, 0, 0).unwrap();
    let meta = |id: &str, unit: Unit| StationMeta {
        station_id: id.to_string(),
        network_id: "qc".into(),
        country_code: "AA".into(),
        continent: Continent::Europe,
        lat: 45.0,
        lon: 2.0,
        pollutant: Pollutant::NO2,
        unit,
    };
    let hourly = |n: usize, f: &dyn Fn(usize) -> f64| -> Vec<Sample> {
        (0..n)
            .map(|h| Sample {
                time: start + Duration::hours(h as i64),
                value: f(h),
            })
            .collect()
    };
    let wave = |h: usize| 20.0 + 5.0 * ((h as f64) * 0.3).sin();
    let week = 24 * 7;

    let mut out = Vec::new();
    out.push((MeasurementSeries::new(meta("q01-ppb", Unit::Ppb), hourly(week * 2, &wave)), Some(QcRule::PpbUnit)));
    out.push((MeasurementSeries::new(meta("q02-two", Unit::UgM3), hourly(2, &wave)), Some(QcRule::TooFewPoints)));
    let mut dup = hourly(week * 2, &wave);
    dup.push(Sample {
        time: start + Duration::hours(5),
        value: 999.0,
    });
    out.push((MeasurementSeries::new(meta("q03-dup", Unit::UgM3), dup), Some(QcRule::ConflictingDuplicates)));
    out.push((
        MeasurementSeries::new(meta("q04-const", Unit::UgM3), hourly(week * 2, &|_| 0.0)),
        Some(QcRule::ConstantValue),
    ));
    let no_night: Vec<Sample> = hourly(week * 2, &wave)
        .into_iter()
        .filter(|s| s.time.format("%H").to_string() != "03")
        .collect();
    out.push((MeasurementSeries::new(meta("q05-hour", Unit::UgM3), no_night), Some(QcRule::MissingHourOfDay)));
    out.push((
        MeasurementSeries::new(meta("q06-week", Unit::UgM3), hourly(24 * 6, &wave)),
        Some(QcRule::MissingDayOfWeek),
    ));
    for k in 0..6 {
        let id = format!("q{:02}-clean", 7 + k);
        let mut samples = hourly(week * (1 + k % 3), &|h| wave(h) + k as f64);
        if k == 0 {
            // identical repeat is collapsed, not rejected
            samples.push(samples[10]);
        }
        out.push((MeasurementSeries::new(meta(&id, Unit::UgM3), samples), None));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::station_store::{apply_qc, QcRuleSet};

    #[test]
    fn world_shape() {
        let w = synthetic_world(&WorldConfig::default()).unwrap();
        assert_eq!(w.stations.len(), 20);
        let networks: std::collections::BTreeSet<_> = w.stations.iter().map(|s| &s.network_id).collect();
        let countries: std::collections::BTreeSet<_> = w.stations.iter().map(|s| &s.country_code).collect();
        let continents: std::collections::BTreeSet<_> = w.stations.iter().map(|s| s.continent).collect();
        assert_eq!((networks.len(), countries.len(), continents.len()), (5, 4, 2));
        assert!(w.series.iter().all(|s| s.samples.len() == 720));
        assert!(w.sources.missing_features().is_empty());
    }

    #[test]
    fn world_is_seeded() {
        let cfg = WorldConfig {
            days: 2,
            ..WorldConfig::default()
        };
        let a = synthetic_world(&cfg).unwrap();
        let b = synthetic_world(&cfg).unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn qc_fixture_labels_hold() {
        let fixture = qc_fixture();
        assert_eq!(fixture.len(), 12);
        let expected: BTreeMap<String, Option<QcRule>> =
            fixture.iter().map(|(s, r)| (s.station.station_id.clone(), *r)).collect();
        let (_, report) = apply_qc(fixture.into_iter().map(|(s, _)| s).collect(), &QcRuleSet::default());
        let got: BTreeMap<String, QcRule> = report.rejected.iter().map(|r| (r.station_id.clone(), r.rule)).collect();
        for (id, rule) in expected {
            assert_eq!(got.get(&id).copied(), rule, "{id}");
        }
    }
}
