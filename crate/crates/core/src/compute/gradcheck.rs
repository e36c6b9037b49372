use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients against central differences.
///
/// `objective` returns the loss and its gradient at the given parameters.
/// For every parameter up to `per_param` coordinates are checked: half drawn
/// from coordinates with a nonzero analytic gradient, the rest uniformly.
pub fn gradient_check<F>(
    params: &ParamSet,
    step: f64,
    per_param: usize,
    seed: u64,
    mut objective: F,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> (f64, Gradients),
{
    let (_, analytic) = objective(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (id, p) in params.iter() {
        let n = p.data.len();
        let grad = analytic.get(id);
        let nonzero: Vec<usize> = grad
            .map(|g| (0..n).filter(|&k| g[k] != 0.0).collect())
            .unwrap_or_default();
        let mut coords: Vec<usize> = if nonzero.len() <= per_param / 2 {
            nonzero.clone()
        } else {
            sample(&mut rng, nonzero.len(), per_param / 2)
                .into_iter()
                .map(|i| nonzero[i])
                .collect()
        };
        let rest = per_param.saturating_sub(coords.len()).min(n);
        coords.extend(sample(&mut rng, n, rest));
        coords.sort_unstable();
        coords.dedup();

        for k in coords {
            let orig = work.get(id).data[k];
            let mut at = |delta: f64| {
                work.get_mut(id).data[k] = orig + delta;
                let (v, _) = objective(&work);
                work.get_mut(id).data[k] = orig;
                v
            };
            // five-point stencil: truncation error O(step⁴), so a larger step
            // keeps round-off small even for tiny gradients
            let numeric = (at(-2.0 * step) - 8.0 * at(-step) + 8.0 * at(step) - at(2.0 * step)) / (12.0 * step);
            let a = grad.map_or(0.0, |g| g[k]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((p.name.clone(), k));
            }
        }
    }
    report
}
