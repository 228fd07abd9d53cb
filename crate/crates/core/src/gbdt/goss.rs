//! Gradient-based one-side sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Rows chosen for one boosting round, ascending, with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    pub indices: Vec<u32>,
    pub weights: Vec<f64>,
}

fn count_for(rate: f64, n: usize) -> usize {
    // guard against products like 0.3 * 10 = 3.0000000000000004
    ((rate * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps the `ceil(a * n)` rows with the largest `|gradient|` at weight 1 and
/// `ceil(b * n)` rows drawn uniformly from the rest at weight `(1 - a) / b`.
pub fn goss_sample(gradients: &[f64], a: f64, b: f64, seed: u64) -> Result<GossSample> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a + b > 1.0 + 1e-12 {
        return Err(Error::Validation(format!("GOSS rates a={a}, b={b} must lie in [0, 1] with a + b <= 1")));
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::Validation("GOSS rates a and b are both zero".into()));
    }
    let n = gradients.len();
    if n == 0 {
        return Err(Error::Validation("GOSS needs at least one row".into()));
    }
    let top_n = count_for(a, n).min(n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    // stable: ties keep ascending row order
    order.sort_by(|&i, &j| gradients[j as usize].abs().total_cmp(&gradients[i as usize].abs()));

    let mut picked: Vec<(u32, f64)> = order[..top_n].iter().map(|&i| (i, 1.0)).collect();
    let rest = &order[top_n..];
    if b > 0.0 && !rest.is_empty() {
        let other_n = count_for(b, n).min(rest.len());
        let weight = (1.0 - a) / b;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = rand::seq::index::sample(&mut rng, rest.len(), other_n);
        picked.extend(chosen.into_iter().map(|k| (rest[k], weight)));
    }
    picked.sort_unstable_by_key(|(i, _)| *i);
    Ok(GossSample {
        indices: picked.iter().map(|(i, _)| *i).collect(),
        weights: picked.iter().map(|(_, w)| *w).collect(),
    })
}
