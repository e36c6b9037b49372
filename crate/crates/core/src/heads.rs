//! Token-level recurrent backbone and the closed-vocabulary output layers.

use std::collections::HashMap;

use rand::Rng;

use crate::compute::nn::{sigmoid, INIT_SCALE};
use crate::compute::tape::dot;
use crate::compute::{Graph, Lstm, LstmState, NodeId, ParamId, ParamSet};
use crate::corpus::{Token, Vocabulary};
use crate::embed::{char_indices, CharEncoder, EmbeddingTable, GatedEmbedding};
use crate::error::Result;

/// Input embeddings plus the token LSTM. Numerals enter through the gated
/// combination of their token row (or `UNK_numeral`) and character encoding.
#[derive(Debug, Clone, Copy)]
pub struct Backbone {
    pub input: EmbeddingTable,
    /// Input fed before the first token so that every token is predicted.
    pub start: ParamId,
    pub chars: CharEncoder,
    pub gate: GatedEmbedding,
    pub lstm: Lstm,
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, vocab_len: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            input: EmbeddingTable::new(params, "embed.input", vocab_len, dim, rng),
            start: params.add_uniform("embed.start", &[dim], INIT_SCALE, rng),
            chars: CharEncoder::new(params, "embed.chars", dim, rng),
            gate: GatedEmbedding::new(params, "embed.gate", dim, rng),
            lstm: Lstm::new(params, "lstm", dim, dim, rng),
        }
    }

    pub fn from_params(params: &ParamSet) -> Result<Self> {
        Ok(Self {
            input: EmbeddingTable::from_params(params, "embed.input")?,
            start: params.id("embed.start")?,
            chars: CharEncoder::from_params(params, "embed.chars")?,
            gate: GatedEmbedding::from_params(params, "embed.gate")?,
            lstm: Lstm::from_params(params, "lstm")?,
        })
    }

    pub fn dim(&self) -> usize {
        self.lstm.hidden_dim
    }

    pub fn start_input(&self, g: &mut Graph<'_>) -> NodeId {
        g.param(self.start)
    }

    /// Input embedding of a token; never fails for a normalised numeral.
    pub fn input(&self, g: &mut Graph<'_>, vocab: &Vocabulary, token: &Token) -> Result<NodeId> {
        let row = self.input.embed(g, vocab.lookup(token).index)?;
        if !token.is_numeral() {
            return Ok(row);
        }
        let chars = self.chars.encode(g, &token.surface)?;
        Ok(self.gate.combine(g, row, chars))
    }

    pub fn initial_state(&self, g: &mut Graph<'_>) -> Result<LstmState> {
        let zero = self.lstm.zero_state(g);
        let x = self.start_input(g);
        self.lstm.step(g, x, zero)
    }

    pub fn advance(&self, g: &mut Graph<'_>, vocab: &Vocabulary, state: LstmState, token: &Token) -> Result<LstmState> {
        let x = self.input(g, vocab, token)?;
        self.lstm.step(g, x, state)
    }
}

/// `p(numeral | h) = σ(hᵀb)`, `p(word | h) = 1 − σ(hᵀb)`.
#[derive(Debug, Clone, Copy)]
pub struct ClassGate {
    pub b: ParamId,
}

impl ClassGate {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, dim: usize, rng: &mut R) -> Self {
        Self { b: params.add_uniform("class.b", &[dim], INIT_SCALE, rng) }
    }

    pub fn from_params(params: &ParamSet) -> Result<Self> {
        Ok(Self { b: params.id("class.b")? })
    }

    /// `(log p(word), log p(numeral))`.
    pub fn log_probs(&self, g: &mut Graph<'_>, h: NodeId) -> (NodeId, NodeId) {
        let b = g.param(self.b);
        let z = g.dot(h, b);
        let neg = g.scale(z, -1.0);
        (g.log_sigmoid(neg), g.log_sigmoid(z))
    }

    /// `(p(word), p(numeral))`.
    pub fn probs(&self, params: &ParamSet, h: &[f64]) -> (f64, f64) {
        let p = sigmoid(dot(h, &params.get(self.b).data));
        (1.0 - p, p)
    }
}

/// Output-side character encoder supplying the extra score columns of the
/// `+rnn` variants.
#[derive(Debug, Clone, Copy)]
pub struct OutputChars {
    pub encoder: CharEncoder,
}

impl OutputChars {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, dim: usize, rng: &mut R) -> Self {
        Self { encoder: CharEncoder::new(params, "out.chars", dim, rng) }
    }

    pub fn from_params(params: &ParamSet) -> Result<Self> {
        Ok(Self { encoder: CharEncoder::from_params(params, "out.chars")? })
    }

    /// Row-major matrix whose row `i` is the character encoding of
    /// `surfaces[i]`; shared prefixes are encoded once. `None` when empty.
    pub fn columns(&self, g: &mut Graph<'_>, surfaces: &[String]) -> Result<Option<NodeId>> {
        if surfaces.is_empty() {
            return Ok(None);
        }
        let lstm = self.encoder.lstm;
        let zero = lstm.zero_state(g);
        let mut memo: HashMap<&str, LstmState> = HashMap::new();
        let mut rows = Vec::with_capacity(surfaces.len());
        for s in surfaces {
            let idx = char_indices(s)?;
            let mut state = zero;
            for (end, &c) in idx.iter().enumerate() {
                let prefix = &s[..=end];
                state = match memo.get(prefix) {
                    Some(&cached) => cached,
                    None => {
                        let x = g.row(self.encoder.chars, c);
                        let next = lstm.step(g, x, state)?;
                        memo.insert(prefix, next);
                        next
                    }
                };
            }
            rows.push(state.h);
        }
        Ok(Some(g.concat(&rows)))
    }
}

/// `ψ(s) = hᵀ E_out[s]` for every row of `out`.
pub fn softmax_logits(g: &mut Graph<'_>, out: ParamId, h: NodeId) -> NodeId {
    g.matvec(out, h)
}

/// Adds the `+rnn` column to token logits: rows `start..start + n` gain
/// `hᵀ chars(s)` from `columns`, every other row counts its token column a
/// second time.
pub fn with_char_scores(
    g: &mut Graph<'_>,
    base: NodeId,
    h: NodeId,
    columns: Option<NodeId>,
    start: usize,
    n: usize,
) -> NodeId {
    let total = g.value(base).len();
    let mut parts = Vec::with_capacity(3);
    if start > 0 {
        parts.push(g.slice(base, 0, start));
    }
    if let Some(m) = columns {
        parts.push(g.matvec_node(m, h));
    }
    if start + n < total {
        parts.push(g.slice(base, start + n, total - start - n));
    }
    let extra = if parts.len() == 1 { parts[0] } else { g.concat(&parts) };
    g.add(base, extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::softmax;
    use crate::corpus::tokenize;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::from_types(vec!["a".into(), "b".into()], vec!["1".into(), "2.5".into()])
    }

    fn backbone(seed: u64) -> (ParamSet, Backbone) {
        let mut params = ParamSet::new();
        let bb = Backbone::new(&mut params, vocab().len(), 4, &mut ChaCha8Rng::seed_from_u64(seed));
        (params, bb)
    }

    fn run(params: &ParamSet, bb: &Backbone, text: &str) -> Vec<f64> {
        let v = vocab();
        let mut g = Graph::new(params);
        let mut s = bb.initial_state(&mut g).unwrap();
        for t in tokenize(text) {
            s = bb.advance(&mut g, &v, s, &t).unwrap();
        }
        g.value(s.h).to_vec()
    }

    #[test]
    fn advancing_is_deterministic_and_order_sensitive() {
        let (params, bb) = backbone(1);
        assert_eq!(run(&params, &bb, "a b 7.25"), run(&params, &bb, "a b 7.25"));
        assert_ne!(run(&params, &bb, "a b"), run(&params, &bb, "b a"));
    }

    #[test]
    fn zero_weights_keep_a_zero_state() {
        let (mut params, bb) = backbone(1);
        for (_, p) in params.iter_mut() {
            p.data.fill(0.0);
        }
        assert!(run(&params, &bb, "a 12 b 3.5 zzz").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_vocabulary_numerals_embed() {
        let (params, bb) = backbone(2);
        let v = vocab();
        let mut g = Graph::new(&params);
        let t = Token::numeral("31415.9").unwrap();
        let x = bb.input(&mut g, &v, &t).unwrap();
        assert_eq!(g.value(x).len(), 4);
    }

    #[test]
    fn class_gate_probabilities() {
        let mut params = ParamSet::new();
        let gate = ClassGate { b: params.insert("class.b", &[2], vec![0.0, 0.0]) };
        assert_eq!(gate.probs(&params, &[0.3, -1.0]), (0.5, 0.5));
        params.get_mut(gate.b).data = vec![3f64.ln(), 0.0];
        let (w, n) = gate.probs(&params, &[1.0, 5.0]);
        assert_abs_diff_eq!(n, 0.75, epsilon = 1e-15);
        assert_eq!(w + n, 1.0);
        let mut g = Graph::new(&params);
        let h = g.constant(vec![1.0, 5.0]);
        let (lw, ln) = gate.log_probs(&mut g, h);
        assert_abs_diff_eq!(g.scalar_value(lw).exp(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.scalar_value(ln).exp(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn softmax_logits_are_bilinear() {
        let mut params = ParamSet::new();
        let out = params.insert("out", &[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mut g = Graph::new(&params);
        let zero = g.constant(vec![0.0, 0.0]);
        let l0 = softmax_logits(&mut g, out, zero);
        assert_eq!(softmax(g.value(l0)), vec![1.0 / 3.0; 3]);
        let h = g.constant(vec![0.5, -2.0]);
        let l = softmax_logits(&mut g, out, h);
        // hand dot-products: 0.5, -2.0, -1.5 → argmax is row 0
        assert_eq!(g.value(l), &[0.5, -2.0, -1.5]);
        let h2 = g.constant(vec![1.0, -4.0]);
        let l2 = softmax_logits(&mut g, out, h2);
        let doubled: Vec<f64> = g.value(l).iter().map(|x| 2.0 * x).collect();
        assert_eq!(g.value(l2), doubled.as_slice());
    }

    #[test]
    fn char_scores_double_token_columns_outside_the_numeral_range() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = params.add_uniform("out", &[5, 3], 0.5, &mut rng);
        let oc = OutputChars::new(&mut params, 3, &mut rng);
        for (_, p) in params.iter_mut().filter(|(_, p)| p.name.starts_with("out.chars")) {
            p.data.fill(0.0);
        }
        let mut g = Graph::new(&params);
        let h = g.constant(vec![0.2, -0.7, 1.1]);
        let base = softmax_logits(&mut g, out, h);
        let cols = oc.columns(&mut g, &["1".into(), "2.5".into()]).unwrap();
        let l = with_char_scores(&mut g, base, h, cols, 2, 2);
        let (b, l) = (g.value(base).to_vec(), g.value(l).to_vec());
        for i in [0, 1, 4] {
            assert_eq!(l[i], 2.0 * b[i]);
        }
        for i in [2, 3] {
            assert_eq!(l[i], b[i]);
        }
        let total: f64 = softmax(&l).iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn char_columns_follow_the_digits() {
        let mut params = ParamSet::new();
        let oc = OutputChars::new(&mut params, 3, &mut ChaCha8Rng::seed_from_u64(8));
        let mut g = Graph::new(&params);
        let surfaces: Vec<String> = vec!["12".into(), "1".into(), "21".into(), "12.5".into()];
        let m = oc.columns(&mut g, &surfaces).unwrap().unwrap();
        let rows: Vec<Vec<f64>> = g.value(m).chunks(3).map(|c| c.to_vec()).collect();
        assert_ne!(rows[0], rows[2]);
        for (s, row) in surfaces.iter().zip(&rows) {
            let direct = oc.encoder.encode(&mut g, s).unwrap();
            assert_eq!(g.value(direct), row.as_slice());
        }
    }
}
