use super::Real;
use crate::error::{Error, Result};
use crate::mdp::ConvergenceTest;

/// Evaluates a stopping rule on the most recent value vectors.
///
/// `window` is ordered oldest first; its last entry is `V_i` where `i` is
/// `iteration`. The value-span and change-span tests need two vectors; the
/// periodic test needs eight and is never satisfied before iteration 7.
pub fn check_convergence<T: Real>(
    test: ConvergenceTest,
    window: &[&[T]],
    gamma: f64,
    epsilon: f64,
    iteration: u64,
) -> Result<bool> {
    if test == ConvergenceTest::PeriodicSpan && iteration < 7 {
        return Ok(false);
    }
    let needed = test.history_len();
    if window.len() < needed {
        return Err(Error::Contract(format!(
            "{test:?} needs {needed} value vectors, got {}",
            window.len()
        )));
    }
    let window = &window[window.len() - needed..];
    let n = window[0].len();
    if window.iter().any(|v| v.len() != n) {
        return Err(Error::Contract("value vectors differ in length".into()));
    }

    match test {
        ConvergenceTest::ValueSpan => {
            let (prev, cur) = (window[0], window[1]);
            let span = prev
                .iter()
                .zip(cur)
                .map(|(p, c)| (c.as_f64() - p.as_f64()).abs())
                .fold(0.0f64, f64::max);
            Ok(span < epsilon)
        }
        ConvergenceTest::ChangeSpan => {
            let (prev, cur) = (window[0], window[1]);
            let (lo, hi) = min_max(prev.iter().zip(cur).map(|(p, c)| c.as_f64() - p.as_f64()));
            Ok(hi - lo < epsilon)
        }
        ConvergenceTest::PeriodicSpan => {
            // window[7] = V_i, window[7 - j] = V_{i-j}.
            let weights: Vec<f64> = (0..7u64)
                .map(|j| gamma.powi(-((iteration - j - 1) as i32)))
                .collect();
            let sums = (0..n).map(|s| {
                (0..7)
                    .map(|j| {
                        let newer = window[7 - j][s].as_f64();
                        let older = window[6 - j][s].as_f64();
                        (newer - older) * weights[j]
                    })
                    .sum::<f64>()
            });
            let (lo, hi) = min_max(sums);
            if !(lo.is_finite() && hi.is_finite()) {
                return Ok(false);
            }
            // Opposite signs: the bound below cannot be met meaningfully.
            if lo.signum() != hi.signum() {
                return Ok(false);
            }
            Ok(hi - lo <= 2.0 * epsilon * hi.abs().min(lo.abs()))
        }
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}
