//! Shared domain enums: pollutants, continents and measurement units.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pollutants in their canonical order. The order doubles as the tie-break
/// order for the driving-subindex map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    NO2,
    O3,
    PM10,
    PM2_5,
    SO2,
}

impl Pollutant {
    pub const ALL: [Pollutant; 5] = [
        Pollutant::NO2,
        Pollutant::O3,
        Pollutant::PM10,
        Pollutant::PM2_5,
        Pollutant::SO2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::NO2 => "NO2",
            Pollutant::O3 => "O3",
            Pollutant::PM10 => "PM10",
            Pollutant::PM2_5 => "PM2_5",
            Pollutant::SO2 => "SO2",
        }
    }

    /// Position in [`Pollutant::ALL`].
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Pollutant> {
        Pollutant::ALL.get(code).copied()
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace(['.', '-'], "_").as_str() {
            "NO2" => Ok(Pollutant::NO2),
            "O3" => Ok(Pollutant::O3),
            "PM10" => Ok(Pollutant::PM10),
            "PM2_5" | "PM25" => Ok(Pollutant::PM2_5),
            "SO2" => Ok(Pollutant::SO2),
            other => Err(Error::Validation(format!("unknown pollutant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    Asia,
    Australia,
    SouthAmerica,
    Africa,
    Europe,
    NorthAmerica,
    Oceania,
}

impl Continent {
    pub const ALL: [Continent; 7] = [
        Continent::Asia,
        Continent::Australia,
        Continent::SouthAmerica,
        Continent::Africa,
        Continent::Europe,
        Continent::NorthAmerica,
        Continent::Oceania,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Continent::Asia => "Asia",
            Continent::Australia => "Australia",
            Continent::SouthAmerica => "SouthAmerica",
            Continent::Africa => "Africa",
            Continent::Europe => "Europe",
            Continent::NorthAmerica => "NorthAmerica",
            Continent::Oceania => "Oceania",
        }
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Continent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Continent::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Validation(format!("unknown continent `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    UgM3,
    Ppb,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::UgM3 => "ug_m3",
            Unit::Ppb => "ppb",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ug_m3" | "µg/m³" | "ug/m3" => Ok(Unit::UgM3),
            "ppb" => Ok(Unit::Ppb),
            other => Err(Error::Validation(format!("unknown unit `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips() {
        for p in Pollutant::ALL {
            assert_eq!(p.as_str().parse::<Pollutant>().unwrap(), p);
            assert_eq!(Pollutant::from_code(p.code()), Some(p));
        }
        for c in Continent::ALL {
            assert_eq!(c.as_str().parse::<Continent>().unwrap(), c);
        }
        assert_eq!("North America".parse::<Continent>().unwrap(), Continent::NorthAmerica);
        assert_eq!("pm2.5".parse::<Pollutant>().unwrap(), Pollutant::PM2_5);
        assert!("CO".parse::<Pollutant>().is_err());
    }
}
