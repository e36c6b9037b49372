//! Decimal-precision model: a small LSTM over the pattern tokens
//! `SOS INT_PART [. \d … \d] EOS`, started from the token-level state.
//!
//! Emissions are restricted to those the pattern grammar allows at each
//! position, so the distribution over `r = 0, 1, 2, …` is proper.

use rand::Rng;

use crate::compute::nn::INIT_SCALE;
use crate::compute::{Graph, Lstm, LstmState, NodeId, ParamId, ParamSet};
use crate::error::Result;

pub const INT_PART: usize = 0;
pub const POINT: usize = 1;
pub const DIGIT: usize = 2;
pub const EOS: usize = 3;
pub const SOS: usize = 4;
pub const EMISSIONS: usize = 4;
const INPUTS: usize = 5;

/// Emissions permitted after `previous`.
pub fn allowed_after(previous: usize) -> &'static [usize] {
    match previous {
        SOS => &[INT_PART],
        INT_PART => &[POINT, EOS],
        POINT => &[DIGIT],
        _ => &[DIGIT, EOS],
    }
}

/// The pattern token sequence (without SOS) for precision `r`.
pub fn pattern(r: u32) -> Vec<usize> {
    let mut out = vec![INT_PART];
    if r > 0 {
        out.push(POINT);
        out.extend(std::iter::repeat_n(DIGIT, r as usize));
    }
    out.push(EOS);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct PatternModel {
    pub inputs: ParamId,
    pub lstm: Lstm,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl PatternModel {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            inputs: params.add_uniform(&format!("{prefix}.inputs"), &[INPUTS, dim], INIT_SCALE, rng),
            lstm: Lstm::new(params, &format!("{prefix}.lstm"), dim, dim, rng),
            out_weight: params.add_uniform(&format!("{prefix}.out.weight"), &[EMISSIONS, dim], INIT_SCALE, rng),
            out_bias: params.add_uniform(&format!("{prefix}.out.bias"), &[EMISSIONS], INIT_SCALE, rng),
        }
    }

    pub fn from_params(params: &ParamSet, prefix: &str) -> Result<Self> {
        Ok(Self {
            inputs: params.id(&format!("{prefix}.inputs"))?,
            lstm: Lstm::from_params(params, &format!("{prefix}.lstm"))?,
            out_weight: params.id(&format!("{prefix}.out.weight"))?,
            out_bias: params.id(&format!("{prefix}.out.bias"))?,
        })
    }

    fn feed(&self, g: &mut Graph<'_>, state: LstmState, token: usize) -> Result<LstmState> {
        let x = g.row(self.inputs, token);
        self.lstm.step(g, x, state)
    }

    /// Log-distribution over the emissions allowed after `previous`, in the
    /// order of [`allowed_after`]. `None` when the next emission is forced.
    fn choice(&self, g: &mut Graph<'_>, state: LstmState, previous: usize) -> Option<NodeId> {
        let allowed = allowed_after(previous);
        if allowed.len() < 2 {
            return None;
        }
        let z = g.matvec(self.out_weight, state.h);
        let b = g.param(self.out_bias);
        let logits = g.add(z, b);
        let masked = g.gather(logits, allowed.to_vec());
        Some(g.log_softmax(masked))
    }

    /// `log p(r | h)`.
    pub fn log_prob(&self, g: &mut Graph<'_>, h: NodeId, r: u32) -> Result<NodeId> {
        let mut state = self.lstm.state_from(g, h)?;
        let mut previous = SOS;
        let mut terms = Vec::new();
        for token in pattern(r) {
            state = self.feed(g, state, previous)?;
            if let Some(lp) = self.choice(g, state, previous) {
                let pos = allowed_after(previous)
                    .iter()
                    .position(|&t| t == token)
                    .expect("pattern follows the grammar");
                terms.push(g.pick(lp, pos));
            }
            previous = token;
        }
        Ok(if terms.is_empty() { g.scalar(0.0) } else { g.add_all(&terms) })
    }

    /// `log p(r)` for `r = 0..=r_max` in one pass, plus the log-mass of all
    /// patterns with more than `r_max` decimals.
    pub fn log_probs_up_to(&self, g: &mut Graph<'_>, h: NodeId, r_max: u32) -> Result<(Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(r_max as usize + 1);
        let mut state = self.lstm.state_from(g, h)?;
        state = self.feed(g, state, SOS)?;
        // SOS forces INT_PART
        state = self.feed(g, state, INT_PART)?;
        let lp = self.choice(g, state, INT_PART).expect("choice after INT_PART");
        let (p_point, p_end) = (g.value(lp)[0], g.value(lp)[1]);
        out.push(p_end);
        // after '.', a digit is forced
        let mut prefix = p_point;
        state = self.feed(g, state, POINT)?;
        for _ in 1..=r_max {
            state = self.feed(g, state, DIGIT)?;
            let lp = self.choice(g, state, DIGIT).expect("choice after a digit");
            out.push(prefix + g.value(lp)[1]);
            prefix += g.value(lp)[0];
        }
        Ok((out, prefix))
    }
}
