//! Gated mixture over the numeral strategies `{h-softmax, d-RNN, MoG}`.

use rand::Rng;

use crate::compute::nn::INIT_SCALE;
use crate::compute::{Graph, NodeId, ParamId, ParamSet};
use crate::error::{Error, Result};

pub const STRATEGIES: [&str; 3] = ["h-softmax", "d-RNN", "MoG"];

#[derive(Debug, Clone, Copy)]
pub struct CombinationGate {
    /// `|M| × D`.
    pub weight: ParamId,
}

impl CombinationGate {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, dim: usize, rng: &mut R) -> Self {
        Self { weight: params.add_uniform(name, &[STRATEGIES.len(), dim], INIT_SCALE, rng) }
    }

    pub fn from_params(params: &ParamSet, name: &str) -> Result<Self> {
        Ok(Self { weight: params.id(name)? })
    }

    /// `log α = log_softmax(A h)`.
    pub fn log_alpha(&self, g: &mut Graph<'_>, h: NodeId) -> NodeId {
        let z = g.matvec(self.weight, h);
        g.log_softmax(z)
    }
}

/// `log Σ_m α_m p(s | m)` over the constituents that can score `s`; a
/// missing constituent contributes zero probability.
pub fn mix(g: &mut Graph<'_>, log_alpha: NodeId, parts: &[Option<NodeId>; 3]) -> Result<NodeId> {
    let terms: Vec<NodeId> = parts
        .iter()
        .enumerate()
        .filter_map(|(m, p)| p.map(|lp| (m, lp)))
        .map(|(m, lp)| {
            let a = g.pick(log_alpha, m);
            g.add(a, lp)
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::InvalidArgument("no strategy can score this numeral".into()));
    }
    let stacked = g.concat(&terms);
    Ok(g.logsumexp(stacked))
}

/// Plain-value counterpart of [`mix`].
pub fn mix_values(log_alpha: &[f64], parts: &[Option<f64>; 3]) -> f64 {
    let terms: Vec<f64> = parts
        .iter()
        .zip(log_alpha)
        .filter_map(|(p, a)| p.map(|lp| a + lp))
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
