//! Discretised mixture-of-Gaussians numeral model. Means and variances come
//! from a frozen component bank; only the mixture-weight projection and the
//! precision model are trained.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use libm::{erf, erfc};

use crate::compute::nn::{log_softmax, INIT_SCALE};
use crate::compute::{Graph, NodeId, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::gmm::ComponentBank;

use super::pattern::PatternModel;

/// Beyond this many standard deviations the upper tail is evaluated with its
/// asymptotic series instead of `erfc`.
const TAIL_SWITCH: f64 = 35.0;

/// `log(1 - Φ(x))`.
pub fn log_upper_tail(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        (0.5 * erfc(x / SQRT_2)).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `log(Φ(b) - Φ(a))`, accurate in both tails and for narrow intervals.
pub fn log_normal_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let (la, lb) = (log_upper_tail(a), log_upper_tail(b));
        la + (-(lb - la).exp_m1()).ln()
    } else if b <= 0.0 {
        let (la, lb) = (log_upper_tail(-b), log_upper_tail(-a));
        la + (-(lb - la).exp_m1()).ln()
    } else {
        (0.5 * (erf(b / SQRT_2) - erf(a / SQRT_2))).ln()
    }
}

/// Half-width of a precision-`r` cell.
pub fn epsilon(r: u32) -> f64 {
    0.5 * 10f64.powi(-(r as i32))
}

/// Bounds of the precision-`r` cell centred on `v`. Fails when `v` is not a
/// multiple of `10^-r`.
pub fn cell(v: f64, r: u32) -> Result<(f64, f64)> {
    let scale = 10f64.powi(r as i32);
    let scaled = v * scale;
    let k = scaled.round();
    if (scaled - k).abs() > 1e-6 * k.abs().max(1.0) {
        return Err(Error::OffGrid { value: v, precision: r });
    }
    Ok(((k - 0.5) / scale, (k + 0.5) / scale))
}

#[derive(Debug, Clone)]
pub struct MogHead {
    /// `K × D` projection from the hidden state to mixture logits.
    pub proj: ParamId,
    pub pattern: PatternModel,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl MogHead {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        dim: usize,
        bank: &ComponentBank,
        rng: &mut R,
    ) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::InvalidArgument("component bank is empty".into()));
        }
        let proj = params.add_uniform(&format!("{prefix}.proj"), &[bank.len(), dim], INIT_SCALE, rng);
        let pattern = PatternModel::new(params, &format!("{prefix}.pattern"), dim, rng);
        Ok(Self::assemble(proj, pattern, bank))
    }

    pub fn from_params(params: &ParamSet, prefix: &str, bank: &ComponentBank) -> Result<Self> {
        let proj = params.id(&format!("{prefix}.proj"))?;
        if params.get(proj).rows() != bank.len() {
            return Err(Error::DimensionMismatch {
                expected: bank.len(),
                actual: params.get(proj).rows(),
            });
        }
        let pattern = PatternModel::from_params(params, &format!("{prefix}.pattern"))?;
        Ok(Self::assemble(proj, pattern, bank))
    }

    fn assemble(proj: ParamId, pattern: PatternModel, bank: &ComponentBank) -> Self {
        Self {
            proj,
            pattern,
            means: bank.components.iter().map(|c| c.mean).collect(),
            std_devs: bank.components.iter().map(|c| c.variance.sqrt()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// `log π = log_softmax(B h)`.
    pub fn log_weights(&self, g: &mut Graph<'_>, h: NodeId) -> NodeId {
        let z = g.matvec(self.proj, h);
        g.log_softmax(z)
    }

    /// Mixture weights for a concrete hidden state.
    pub fn weights(&self, params: &ParamSet, h: &[f64]) -> Vec<f64> {
        let p = params.get(self.proj);
        let logits: Vec<f64> = (0..p.rows()).map(|k| crate::compute::tape::dot(p.row(k), h)).collect();
        log_softmax(&logits).into_iter().map(f64::exp).collect()
    }

    /// Mixture density `q(v)` under the given weights.
    pub fn density(&self, weights: &[f64], v: f64) -> f64 {
        weights
            .iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(w, (m, s))| {
                let z = (v - m) / s;
                w * (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
            })
            .sum()
    }

    /// Per-component log-mass of the precision-`r` cell around `v`.
    pub fn cell_log_masses(&self, v: f64, r: u32) -> Result<Vec<f64>> {
        let (lo, hi) = cell(v, r)?;
        Ok(self
            .means
            .iter()
            .zip(&self.std_devs)
            .map(|(m, s)| log_normal_interval((lo - m) / s, (hi - m) / s))
            .collect())
    }

    /// `log Q̃(v | r) = log Σ_k π_k (Φ_k(v + ε_r) - Φ_k(v - ε_r))`.
    pub fn log_pmf(&self, g: &mut Graph<'_>, log_weights: NodeId, v: f64, r: u32) -> Result<NodeId> {
        let offsets = self.cell_log_masses(v, r)?;
        Ok(g.logsumexp_offset(log_weights, offsets))
    }

    /// Same as [`Self::log_pmf`] on plain values.
    pub fn log_pmf_value(&self, log_weights: &[f64], v: f64, r: u32) -> Result<f64> {
        let (lo, hi) = cell(v, r)?;
        Ok(self.interval_log_mass(log_weights, lo, hi))
    }

    /// `log (F(hi) - F(lo))` for the mixture CDF `F`.
    pub fn interval_log_mass(&self, log_weights: &[f64], lo: f64, hi: f64) -> f64 {
        let offsets: Vec<f64> = self
            .means
            .iter()
            .zip(&self.std_devs)
            .map(|(m, s)| log_normal_interval((lo - m) / s, (hi - m) / s))
            .collect();
        let terms: Vec<f64> = log_weights.iter().zip(&offsets).map(|(a, b)| a + b).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    /// `log p(r) + log Q̃(v | r)`.
    pub fn log_prob(&self, g: &mut Graph<'_>, h: NodeId, v: f64, r: u32) -> Result<NodeId> {
        let lw = self.log_weights(g, h);
        let q = self.log_pmf(g, lw, v, r)?;
        let pr = self.pattern.log_prob(g, h, r)?;
        Ok(g.add(pr, q))
    }
}
