use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training objective in transformed target space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// Squared error on log-transformed targets.
    MseLog,
    /// Pinball (quantile) loss at level `q`.
    Pinball { q: f64 },
}

impl Loss {
    pub fn pinball(q: f64) -> Result<Loss> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Validation(format!("quantile {q} must lie in (0, 1)")));
        }
        Ok(Loss::Pinball { q })
    }

    pub fn quantile(&self) -> Option<f64> {
        match self {
            Loss::MseLog => None,
            Loss::Pinball { q } => Some(*q),
        }
    }

    /// Pointwise loss value.
    #[inline]
    pub fn value(&self, y: f64, yhat: f64) -> f64 {
        match *self {
            Loss::MseLog => {
                let r = yhat - y;
                r * r
            }
            Loss::Pinball { q } => {
                if y >= yhat {
                    q * (y - yhat)
                } else {
                    (1.0 - q) * (yhat - y)
                }
            }
        }
    }

    /// Mean loss over paired slices.
    pub fn mean(&self, y: &[f64], yhat: &[f64]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let total: f64 = y.iter().zip(yhat).map(|(a, b)| self.value(*a, *b)).sum();
        total / y.len() as f64
    }
}

/// Gradient and hessian of the loss with respect to `yhat`. The hessian is
/// held at 1 for both losses.
#[inline]
pub fn loss_grad_hess(loss: &Loss, y: f64, yhat: f64) -> (f64, f64) {
    match *loss {
        Loss::MseLog => (yhat - y, 1.0),
        Loss::Pinball { q } => {
            if y > yhat {
                (-q, 1.0)
            } else {
                (1.0 - q, 1.0)
            }
        }
    }
}
