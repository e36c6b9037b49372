//! Neural building blocks on top of the tape: LSTM cells, softmax,
//! cross entropy and dropout.

use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tape::{Graph, NodeId};
use crate::error::{Error, Result};

/// Initialisation range for all weights and biases except the LSTM forget
/// gate bias.
pub const INIT_SCALE: f64 = 0.1;
pub const FORGET_BIAS: f64 = 1.0;

/// Numerically stable softmax of a plain vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-probability. A zero probability yields `+inf` rather
/// than a panic.
pub fn cross_entropy(log_probs: &[f64]) -> f64 {
    if log_probs.is_empty() {
        return 0.0;
    }
    -log_probs.iter().sum::<f64>() / log_probs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout mask: kept entries are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_rate(rate)?;
    let keep = 1.0 - rate;
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Applies dropout to a node. Identity in evaluation mode or at rate 0.
pub fn dropout<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    x: NodeId,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(g.value(x).len(), rate, rng)?;
    Ok(g.mul_const(x, mask))
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// A single LSTM layer. Gate rows are ordered input, forget, candidate,
/// output.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_uniform(
            &format!("{prefix}.weight"),
            &[4 * hidden_dim, input_dim + hidden_dim],
            INIT_SCALE,
            rng,
        );
        let bias = params.add_uniform(&format!("{prefix}.bias"), &[4 * hidden_dim], INIT_SCALE, rng);
        params.get_mut(bias).data[hidden_dim..2 * hidden_dim].fill(FORGET_BIAS);
        Self {
            weight,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    pub fn from_params(params: &ParamSet, prefix: &str) -> Result<Self> {
        let weight = params.id(&format!("{prefix}.weight"))?;
        let bias = params.id(&format!("{prefix}.bias"))?;
        let w = params.get(weight);
        let hidden_dim = w.rows() / 4;
        Ok(Self {
            weight,
            bias,
            input_dim: w.cols() - hidden_dim,
            hidden_dim,
        })
    }

    pub fn zero_state(&self, g: &mut Graph<'_>) -> LstmState {
        let h = g.constant(vec![0.0; self.hidden_dim]);
        let c = g.constant(vec![0.0; self.hidden_dim]);
        LstmState { h, c }
    }

    /// State with a given hidden vector and a zero cell.
    pub fn state_from(&self, g: &mut Graph<'_>, h: NodeId) -> Result<LstmState> {
        self.check(g.value(h).len(), self.hidden_dim)?;
        let c = g.constant(vec![0.0; self.hidden_dim]);
        Ok(LstmState { h, c })
    }

    fn check(&self, actual: usize, expected: usize) -> Result<()> {
        if actual != expected {
            return Err(Error::DimensionMismatch { expected, actual });
        }
        Ok(())
    }

    pub fn step(&self, g: &mut Graph<'_>, x: NodeId, state: LstmState) -> Result<LstmState> {
        let d = self.hidden_dim;
        self.check(g.value(x).len(), self.input_dim)?;
        self.check(g.value(state.h).len(), d)?;
        self.check(g.value(state.c).len(), d)?;
        let xh = g.concat(&[x, state.h]);
        let wx = g.matvec(self.weight, xh);
        let b = g.param(self.bias);
        let z = g.add(wx, b);
        let zi = g.slice(z, 0, d);
        let zf = g.slice(z, d, d);
        let zg = g.slice(z, 2 * d, d);
        let zo = g.slice(z, 3 * d, d);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let fc = g.mul(f, state.c);
        let ig = g.mul(i, cand);
        let c = g.add(fc, ig);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        Ok(LstmState { h, c })
    }
}
