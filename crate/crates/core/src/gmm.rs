//! One-dimensional Gaussian mixture fitting by expectation-maximisation,
//! and the pooled component bank whose means and variances the MoG head
//! keeps fixed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-8;
/// Component counts of the pooled sub-models.
pub const BANK_SIZES: [usize; 7] = [2, 4, 8, 16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Total log-likelihood after initialisation and after every M-step.
    pub trace: Vec<f64>,
    /// True if any variance hit the floor.
    pub floored: bool,
}

impl Mixture {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Distinct values with multiplicities, in ascending order.
fn compress(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut xs, mut ws): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for v in sorted {
        if xs.last() == Some(&v) {
            *ws.last_mut().expect("paired") += 1.0;
        } else {
            xs.push(v);
            ws.push(1.0);
        }
    }
    (xs, ws)
}

pub fn distinct_count(values: &[f64]) -> usize {
    compress(values).0.len()
}

/// Variance floor `1e-6 · range²`; a zero range is treated as a unit range.
pub fn variance_floor(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    1e-6 * if range > 0.0 { range * range } else { 1.0 }
}

/// Linear-interpolation quantiles at `i / (K + 1)`, `i = 1..=K`.
pub fn percentile_init(values: &[f64], k: usize) -> Vec<f64> {
    assert!(!values.is_empty(), "percentile_init on empty data");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (1..=k)
        .map(|i| quantile_sorted(&v, i as f64 / (k + 1) as f64))
        .collect()
}

/// Quantile of sorted data at position `p·(n−1)` with linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

struct Step {
    log_likelihood: f64,
    resp: Vec<f64>,
}

fn e_step(xs: &[f64], ws: &[f64], weights: &[f64], means: &[f64], vars: &[f64]) -> Step {
    let k = means.len();
    let offset: Vec<f64> = weights
        .iter()
        .zip(vars)
        .map(|(w, v)| w.ln() - 0.5 * (2.0 * std::f64::consts::PI * v).ln())
        .collect();
    let inv2var: Vec<f64> = vars.iter().map(|v| 0.5 / v).collect();
    let mut resp = vec![0.0; xs.len() * k];
    let mut ll = 0.0;
    for (i, (&x, &n)) in xs.iter().zip(ws).enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut m = f64::NEG_INFINITY;
        for j in 0..k {
            let d = x - means[j];
            row[j] = offset[j] - d * d * inv2var[j];
            m = m.max(row[j]);
        }
        let mut z = 0.0;
        for r in row.iter_mut() {
            *r = (*r - m).exp();
            z += *r;
        }
        let inv = 1.0 / z;
        for r in row.iter_mut() {
            *r *= inv;
        }
        ll += n * (m + z.ln());
    }
    Step {
        log_likelihood: ll,
        resp,
    }
}

/// Fits a `k`-component mixture by EM from the given initial means.
///
/// Weights start uniform and variances at the sample variance. Iterates
/// until the per-value log-likelihood improves by less than `1e-8` or
/// [`MAX_ITERATIONS`] M-steps have run.
pub fn em_fit(values: &[f64], k: usize, init_means: &[f64]) -> Result<Mixture> {
    if k == 0 || init_means.len() != k {
        return Err(Error::InvalidArgument(format!(
            "need K >= 1 and K initial means (K = {k}, {} given)",
            init_means.len()
        )));
    }
    let (xs, ws) = compress(values);
    if xs.len() < k {
        return Err(Error::TooFewDistinct {
            needed: k,
            found: xs.len(),
        });
    }
    let n: f64 = ws.iter().sum();
    let floor = variance_floor(values);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;

    let mut weights = vec![1.0 / k as f64; k];
    let mut means = init_means.to_vec();
    let mut floored = var < floor;
    let mut vars = vec![var.max(floor); k];
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;

    for iter in 0..=MAX_ITERATIONS {
        let step = e_step(&xs, &ws, &weights, &means, &vars);
        let ll = step.log_likelihood;
        trace.push(ll);
        if let Some(p) = prev {
            assert!(
                ll >= p - 1e-9 * p.abs().max(1.0),
                "EM log-likelihood decreased at iteration {iter}: {p} -> {ll}"
            );
            if (ll - p) / n < TOLERANCE {
                break;
            }
        }
        if iter == MAX_ITERATIONS {
            break;
        }
        prev = Some(ll);

        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        for (i, (&x, &c)) in xs.iter().zip(&ws).enumerate() {
            for (j, &r) in step.resp[i * k..(i + 1) * k].iter().enumerate() {
                nk[j] += c * r;
                sx[j] += c * r * x;
            }
        }
        let mu: Vec<f64> = (0..k).map(|j| if nk[j] > f64::MIN_POSITIVE { sx[j] / nk[j] } else { means[j] }).collect();
        let mut sv = vec![0.0; k];
        for (i, (&x, &c)) in xs.iter().zip(&ws).enumerate() {
            for (j, &r) in step.resp[i * k..(i + 1) * k].iter().enumerate() {
                sv[j] += c * r * (x - mu[j]).powi(2);
            }
        }
        for j in 0..k {
            weights[j] = nk[j] / n;
            if nk[j] <= f64::MIN_POSITIVE {
                continue; // dead component keeps its mean and variance
            }
            let v = sv[j] / nk[j];
            if v < floor {
                floored = true;
            }
            means[j] = mu[j];
            vars[j] = v.max(floor);
        }
    }
    if floored {
        warn!("EM with K={k}: a component variance was floored at {floor:e}");
    }
    Ok(Mixture {
        weights,
        means,
        variances: vars,
        trace,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: f64,
    pub variance: f64,
    /// Component count of the sub-model this component came from.
    pub source_k: usize,
}

/// Frozen means and variances pooled from several EM fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBank {
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub k: usize,
    pub trace: Vec<f64>,
}

impl ComponentBank {
    pub fn new(components: Vec<Component>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("#components={}\n", self.len());
        for c in &self.components {
            let _ = writeln!(s, "{} {} {}", c.mean, c.variance, c.source_k);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::Format {
            what: "bank file",
            detail: d,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let count: usize = header
            .strip_prefix("#components=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(format!("bad header {header:?}")))?;
        let mut components = Vec::with_capacity(count);
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
                .flatten();
            let (mean, variance, source_k): (f64, f64, usize) =
                parsed.ok_or_else(|| bad(format!("line {}: {line:?}", n + 2)))?;
            if !(variance > 0.0) || !mean.is_finite() {
                return Err(bad(format!("line {}: invalid component", n + 2)));
            }
            components.push(Component {
                mean,
                variance,
                source_k,
            });
        }
        if components.len() != count {
            return Err(bad(format!("header says {count} components, found {}", components.len())));
        }
        Ok(Self { components })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Fits mixtures with 2, 4, …, 128 components (each initialised at
/// percentiles of the data) and pools every fitted mean and variance.
/// Sub-models needing more distinct values than available are skipped.
pub fn build_component_bank(values: &[f64]) -> Result<(ComponentBank, Vec<FitTrace>)> {
    build_component_bank_with(values, &BANK_SIZES)
}

pub fn build_component_bank_with(values: &[f64], sizes: &[usize]) -> Result<(ComponentBank, Vec<FitTrace>)> {
    if values.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let distinct = distinct_count(values);
    let fits: Vec<Option<Mixture>> = sizes
        .par_iter()
        .map(|&k| {
            if distinct < k {
                warn!("skipping K={k}: only {distinct} distinct values");
                return Ok(None);
            }
            em_fit(values, k, &percentile_init(values, k)).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut components = Vec::new();
    let mut traces = Vec::new();
    for (&k, fit) in sizes.iter().zip(fits) {
        let Some(m) = fit else { continue };
        for j in 0..k {
            components.push(Component {
                mean: m.means[j],
                variance: m.variances[j],
                source_k: k,
            });
        }
        traces.push(FitTrace { k, trace: m.trace });
    }
    if components.is_empty() {
        return Err(Error::TooFewDistinct {
            needed: sizes.iter().copied().min().unwrap_or(1),
            found: distinct,
        });
    }
    Ok((ComponentBank::new(components), traces))
}

pub fn traces_to_csv(traces: &[FitTrace]) -> String {
    let mut s = String::from("k,iteration,log_likelihood\n");
    for t in traces {
        for (i, ll) in t.trace.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", t.k, i, ll);
        }
    }
    s
}

/// Checks that every trace is non-decreasing (up to rounding).
pub fn validate_traces(csv: &str) -> Result<()> {
    let mut last: BTreeMap<usize, f64> = BTreeMap::new();
    for (n, line) in csv.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            what: "trace file",
            detail: format!("line {}", n + 1),
        };
        if f.len() != 3 {
            return Err(bad());
        }
        let k: usize = f[0].parse().map_err(|_| bad())?;
        let ll: f64 = f[2].parse().map_err(|_| bad())?;
        if let Some(&p) = last.get(&k) {
            if ll < p - 1e-9 * p.abs().max(1.0) {
                return Err(Error::Format {
                    what: "trace file",
                    detail: format!("K={k} log-likelihood decreased at line {}", n + 1),
                });
            }
        }
        last.insert(k, ll);
    }
    Ok(())
}
