use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sum::ExactSum;

/// Order-independent mean: the exact sum of offsets from the minimum,
/// rounded once. A constant sample returns its value exactly.
pub fn stable_mean(values: &[f64]) -> f64 {
    let pivot = values.iter().copied().fold(f64::INFINITY, f64::min);
    let offsets: ExactSum = values.iter().map(|v| v - pivot).collect();
    pivot + offsets.value() / values.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile bootstrap of the mean: `(mean, lo, hi)` with `lo ≤ mean ≤ hi`.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, level: f64, seed: u64) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Input("cannot bootstrap an empty sample".into()));
    }
    if n_resamples == 0 {
        return Err(Error::Config("need at least one bootstrap resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("bootstrap sample contains non-finite values".into()));
    }
    let mean = stable_mean(values);
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = vec![0.0; n];
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| {
            for d in draw.iter_mut() {
                *d = values[rng.gen_range(0..n)];
            }
            stable_mean(&draw)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile(&means, tail).min(mean);
    let hi = quantile(&means, 1.0 - tail).max(mean);
    Ok((mean, lo, hi))
}
