//! Digit-by-digit numeral model: a character-level LSTM started from the
//! token-level hidden state, normalised one symbol at a time.

use rand::Rng;

use crate::compute::nn::INIT_SCALE;
use crate::compute::{Graph, Lstm, LstmState, NodeId, ParamId, ParamSet};
use crate::embed::{char_indices, chars};
use crate::error::Result;

/// Emission alphabet: digits 0-9, the decimal point and end-of-sequence.
pub const EMISSIONS: usize = 12;
pub const EOS: usize = chars::EOS;

#[derive(Debug, Clone, Copy)]
pub struct DigitHead {
    pub inputs: ParamId,
    pub lstm: Lstm,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl DigitHead {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            inputs: params.add_uniform(&format!("{prefix}.inputs"), &[chars::COUNT, dim], INIT_SCALE, rng),
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

    fn emit(&self, g: &mut Graph<'_>, state: LstmState) -> NodeId {
        let z = g.matvec(self.out_weight, state.h);
        let b = g.param(self.out_bias);
        let logits = g.add(z, b);
        g.log_softmax(logits)
    }

    /// Feeds the start symbol from `(h, 0)`. Returns the new state and the
    /// log-distribution of the first emitted symbol.
    pub fn start(&self, g: &mut Graph<'_>, h: NodeId) -> Result<(LstmState, NodeId)> {
        let s0 = self.lstm.state_from(g, h)?;
        self.feed(g, s0, chars::SOS)
    }

    /// Feeds an emitted symbol back in and returns the next log-distribution.
    pub fn feed(&self, g: &mut Graph<'_>, state: LstmState, symbol: usize) -> Result<(LstmState, NodeId)> {
        let x = g.row(self.inputs, symbol);
        let s = self.lstm.step(g, x, state)?;
        let lp = self.emit(g, s);
        Ok((s, lp))
    }

    /// `log p(d_1) + log p(d_2 | d_1) + … + log p(EOS | d_1 … d_N)`.
    pub fn log_prob(&self, g: &mut Graph<'_>, h: NodeId, surface: &str) -> Result<NodeId> {
        let symbols = char_indices(surface)?;
        let (mut state, mut lp) = self.start(g, h)?;
        let mut terms = Vec::with_capacity(symbols.len() + 1);
        for &s in &symbols {
            terms.push(g.pick(lp, s));
            (state, lp) = self.feed(g, state, s)?;
        }
        terms.push(g.pick(lp, EOS));
        Ok(g.add_all(&terms))
    }

    /// Log-probabilities of many surfaces from one state, sharing common
    /// prefixes. Order follows `surfaces`.
    pub fn log_probs_shared(&self, g: &mut Graph<'_>, h: NodeId, surfaces: &[&str]) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..surfaces.len()).collect();
        order.sort_by(|&a, &b| surfaces[a].cmp(surfaces[b]));
        let mut out = vec![0.0; surfaces.len()];
        // stack[i] = (state, log-dist, cumulative log-prob) after i symbols
        let (s0, lp0) = self.start(g, h)?;
        let mut stack: Vec<(LstmState, NodeId, f64)> = vec![(s0, lp0, 0.0)];
        let mut prefix: Vec<usize> = Vec::new();
        let mut marks: Vec<usize> = vec![g.len()];
        for i in order {
            let sym = char_indices(surfaces[i])?;
            let common = prefix.iter().zip(&sym).take_while(|(a, b)| a == b).count();
            stack.truncate(common + 1);
            marks.truncate(common + 1);
            g.truncate(*marks.last().expect("root mark"));
            prefix.truncate(common);
            for &s in &sym[common..] {
                let (state, lp, acc) = *stack.last().expect("non-empty");
                let acc = acc + g.value(lp)[s];
                let (ns, nlp) = self.feed(g, state, s)?;
                stack.push((ns, nlp, acc));
                marks.push(g.len());
                prefix.push(s);
            }
            let (_, lp, acc) = *stack.last().expect("non-empty");
            out[i] = acc + g.value(lp)[EOS];
        }
        Ok(out)
    }

    /// Distribution of the first emitted symbol.
    pub fn first_symbol_probs(&self, g: &mut Graph<'_>, h: NodeId) -> Result<Vec<f64>> {
        let (_, lp) = self.start(g, h)?;
        Ok(g.value(lp).iter().map(|x| x.exp()).collect())
    }

    /// Rows of the output layer for the ten digits.
    pub fn digit_embeddings(&self, params: &ParamSet) -> Vec<Vec<f64>> {
        (0..10).map(|d| params.get(self.out_weight).row(d).to_vec()).collect()
    }
}
