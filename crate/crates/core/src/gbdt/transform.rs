use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset added before taking the log so zero concentrations stay finite.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    LogPlusEps,
    Identity,
}

impl Transform {
    pub fn forward(self, y: f64) -> Result<f64> {
        match self {
            Transform::LogPlusEps => transform_target(y),
            Transform::Identity => {
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Domain(format!("target {y} is not finite")))
                }
            }
        }
    }

    /// Maps a model output back to concentration units. Never negative.
    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::LogPlusEps => inverse_transform(z),
            Transform::Identity => z.max(0.0),
        }
    }
}

/// `ln(y + 1e-7)` for a non-negative concentration.
pub fn transform_target(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("concentration {y} must be finite and >= 0")));
    }
    Ok((y + LOG_EPS).ln())
}

/// `max(0, exp(z) - 1e-7)`.
pub fn inverse_transform(z: f64) -> f64 {
    (z.exp() - LOG_EPS).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let z = transform_target(0.0).unwrap();
        assert!((z - (-16.118_095_650_958_32)).abs() < 1e-12);
        let y = inverse_transform(transform_target(12.5).unwrap());
        assert!((y - 12.5).abs() <= 1e-9 * 12.5);
        assert_eq!(inverse_transform(-100.0), 0.0);
        assert!(matches!(transform_target(-0.1), Err(Error::Domain(_))));
        assert!(transform_target(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_tight(y in 0.0f64..1e4) {
            let back = inverse_transform(transform_target(y).unwrap());
            prop_assert!((back - y).abs() <= 1e-9 * y.max(1e-7) + 1e-15);
        }

        #[test]
        fn inverse_is_non_negative(z in -1e3f64..50.0) {
            prop_assert!(inverse_transform(z) >= 0.0);
        }
    }
}
