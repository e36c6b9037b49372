//! Language models assembled from the backbone and one numeral strategy.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compute::nn::{dropout, INIT_SCALE};
use crate::compute::{Graph, Mode, NodeId, ParamId, ParamSet};
use crate::corpus::{Lookup, Token, TokenKind, Vocabulary};
use crate::error::{Error, Result};
use crate::gmm::ComponentBank;
use crate::heads::{softmax_logits, with_char_scores, Backbone, ClassGate, OutputChars};
use crate::numeral_heads::combination::{mix, mix_values};
use crate::numeral_heads::{CombinationGate, DigitHead, MogHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "softmax")]
    Softmax,
    #[serde(rename = "softmax+rnn")]
    SoftmaxRnn,
    #[serde(rename = "h-softmax")]
    HSoftmax,
    #[serde(rename = "h-softmax+rnn")]
    HSoftmaxRnn,
    #[serde(rename = "d-RNN")]
    DRnn,
    #[serde(rename = "MoG")]
    Mog,
    #[serde(rename = "combination")]
    Combination,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Softmax,
        ModelKind::SoftmaxRnn,
        ModelKind::HSoftmax,
        ModelKind::HSoftmaxRnn,
        ModelKind::DRnn,
        ModelKind::Mog,
        ModelKind::Combination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Softmax => "softmax",
            ModelKind::SoftmaxRnn => "softmax+rnn",
            ModelKind::HSoftmax => "h-softmax",
            ModelKind::HSoftmaxRnn => "h-softmax+rnn",
            ModelKind::DRnn => "d-RNN",
            ModelKind::Mog => "MoG",
            ModelKind::Combination => "combination",
        }
    }

    /// Word/numeral class gate in front of separate distributions.
    pub fn is_hierarchical(self) -> bool {
        !matches!(self, ModelKind::Softmax | ModelKind::SoftmaxRnn)
    }

    /// Numerals are scored without an `UNK_numeral` fallback.
    pub fn is_open_vocabulary(self) -> bool {
        matches!(self, ModelKind::DRnn | ModelKind::Mog | ModelKind::Combination)
    }

    pub fn needs_bank(self) -> bool {
        matches!(self, ModelKind::Mog | ModelKind::Combination)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone)]
struct Layout {
    backbone: Backbone,
    out_all: Option<ParamId>,
    out_chars: Option<OutputChars>,
    class: Option<ClassGate>,
    out_words: Option<ParamId>,
    out_numerals: Option<ParamId>,
    drnn: Option<DigitHead>,
    mog: Option<MogHead>,
    combo: Option<CombinationGate>,
}

/// One scored position of a document.
#[derive(Debug, Clone, Copy)]
pub struct TokenStep {
    pub log_prob: NodeId,
    /// Hidden state the prediction was made from (before dropout).
    pub state: NodeId,
    pub kind: TokenKind,
    pub oov: bool,
}

/// Plain-value score of one token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScore {
    pub log_prob: f64,
    pub kind: TokenKind,
    pub oov: bool,
    /// Hidden state before the token, kept for numerals only.
    pub state: Option<Vec<f64>>,
}

/// Graph-level values shared by every position of one pass.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    char_columns: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub kind: ModelKind,
    pub vocab: Vocabulary,
    pub bank: Option<ComponentBank>,
    pub params: ParamSet,
    pub dropout: f64,
    layout: Layout,
}

impl LanguageModel {
    pub fn new<R: Rng + ?Sized>(
        kind: ModelKind,
        vocab: Vocabulary,
        bank: Option<ComponentBank>,
        dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("hidden dimension must be positive".into()));
        }
        if kind.needs_bank() && bank.is_none() {
            return Err(Error::InvalidArgument(format!("{kind} needs a component bank")));
        }
        let mut params = ParamSet::new();
        let p = &mut params;
        let backbone = Backbone::new(p, vocab.len(), dim, rng);
        let n_known = vocab.known_numerals().len();
        let mut layout = Layout {
            backbone,
            out_all: None,
            out_chars: None,
            class: None,
            out_words: None,
            out_numerals: None,
            drnn: None,
            mog: None,
            combo: None,
        };
        match kind {
            ModelKind::Softmax | ModelKind::SoftmaxRnn => {
                layout.out_all = Some(p.add_uniform("out.all", &[vocab.len(), dim], INIT_SCALE, rng));
            }
            _ => {
                layout.class = Some(ClassGate::new(p, dim, rng));
                layout.out_words = Some(p.add_uniform("out.words", &[vocab.n_words(), dim], INIT_SCALE, rng));
            }
        }
        match kind {
            ModelKind::HSoftmax | ModelKind::HSoftmaxRnn => {
                layout.out_numerals =
                    Some(p.add_uniform("out.numerals", &[vocab.n_numerals(), dim], INIT_SCALE, rng));
            }
            ModelKind::Combination => {
                layout.out_numerals = Some(p.add_uniform("out.numerals", &[n_known, dim], INIT_SCALE, rng));
            }
            _ => {}
        }
        if matches!(kind, ModelKind::SoftmaxRnn | ModelKind::HSoftmaxRnn) {
            layout.out_chars = Some(OutputChars::new(p, dim, rng));
        }
        if matches!(kind, ModelKind::DRnn | ModelKind::Combination) {
            layout.drnn = Some(DigitHead::new(p, "drnn", dim, rng));
        }
        if let (true, Some(b)) = (kind.needs_bank(), &bank) {
            layout.mog = Some(MogHead::new(p, "mog", dim, b, rng)?);
        }
        if kind == ModelKind::Combination {
            layout.combo = Some(CombinationGate::new(p, "combo.gate", dim, rng));
        }
        Ok(Self { kind, vocab, bank, params, dropout, layout })
    }

    /// Rebuilds a model around existing parameters, e.g. from a checkpoint.
    pub fn from_params(
        kind: ModelKind,
        vocab: Vocabulary,
        bank: Option<ComponentBank>,
        params: ParamSet,
        dropout: f64,
    ) -> Result<Self> {
        let p = &params;
        let opt = |name: &str| p.id(name).ok();
        let backbone = Backbone::from_params(p)?;
        if backbone.input.size != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), actual: backbone.input.size });
        }
        let mog = match (kind.needs_bank(), &bank) {
            (true, Some(b)) => Some(MogHead::from_params(p, "mog", b)?),
            (true, None) => return Err(Error::InvalidArgument(format!("{kind} needs a component bank"))),
            _ => None,
        };
        let layout = Layout {
            backbone,
            out_all: opt("out.all"),
            out_chars: OutputChars::from_params(p).ok(),
            class: ClassGate::from_params(p).ok(),
            out_words: opt("out.words"),
            out_numerals: opt("out.numerals"),
            drnn: DigitHead::from_params(p, "drnn").ok(),
            mog,
            combo: CombinationGate::from_params(p, "combo.gate").ok(),
        };
        let model = Self { kind, vocab, bank, params, dropout, layout };
        model.check_layout()?;
        Ok(model)
    }

    fn check_layout(&self) -> Result<()> {
        let l = &self.layout;
        let missing = |what: &'static str| Error::Format { what: "checkpoint", detail: format!("missing {what}") };
        let h = self.kind.is_hierarchical();
        if !h && l.out_all.is_none() {
            return Err(missing("out.all"));
        }
        if h && (l.class.is_none() || l.out_words.is_none()) {
            return Err(missing("class gate or word outputs"));
        }
        let needs_num = matches!(self.kind, ModelKind::HSoftmax | ModelKind::HSoftmaxRnn | ModelKind::Combination);
        if needs_num && l.out_numerals.is_none() {
            return Err(missing("out.numerals"));
        }
        if matches!(self.kind, ModelKind::SoftmaxRnn | ModelKind::HSoftmaxRnn) && l.out_chars.is_none() {
            return Err(missing("out.chars"));
        }
        if matches!(self.kind, ModelKind::DRnn | ModelKind::Combination) && l.drnn.is_none() {
            return Err(missing("drnn"));
        }
        if self.kind == ModelKind::Combination && l.combo.is_none() {
            return Err(missing("combo.gate"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.layout.backbone.dim()
    }

    pub fn backbone(&self) -> &Backbone {
        &self.layout.backbone
    }

    pub fn digit_head(&self) -> Option<&DigitHead> {
        self.layout.drnn.as_ref()
    }

    pub fn mog_head(&self) -> Option<&MogHead> {
        self.layout.mog.as_ref()
    }

    pub fn class_gate(&self) -> Option<&ClassGate> {
        self.layout.class.as_ref()
    }

    /// Output embedding rows of the given type: `out.all` for flat models,
    /// `out.words` / `out.numerals` for hierarchical ones.
    pub fn output_embedding(&self, surface: &str) -> Option<&[f64]> {
        let global = self.vocab.get(surface)?;
        if let Some(all) = self.layout.out_all {
            return Some(self.params.get(all).row(global));
        }
        match self.vocab.kind_of(global) {
            TokenKind::Word => Some(self.params.get(self.layout.out_words?).row(global)),
            TokenKind::Numeral => {
                let p = self.params.get(self.layout.out_numerals?);
                let off = self.vocab.numeral_offset(global);
                (off < p.rows()).then(|| p.row(off))
            }
        }
    }

    /// Parameters owned by the numeral branch.
    pub fn numeral_branch_params(&self) -> Vec<ParamId> {
        let l = &self.layout;
        let mut ids: Vec<ParamId> = Vec::new();
        ids.extend(l.out_numerals);
        if let Some(oc) = l.out_chars {
            ids.extend([oc.encoder.chars, oc.encoder.lstm.weight, oc.encoder.lstm.bias]);
        }
        if let Some(d) = l.drnn {
            ids.extend([d.inputs, d.lstm.weight, d.lstm.bias, d.out_weight, d.out_bias]);
        }
        if let Some(m) = &l.mog {
            let p = m.pattern;
            ids.extend([m.proj, p.inputs, p.lstm.weight, p.lstm.bias, p.out_weight, p.out_bias]);
        }
        if let Some(c) = l.combo {
            ids.push(c.weight);
        }
        ids
    }

    fn prepare(&self, g: &mut Graph<'_>) -> Result<Prepared> {
        let char_columns = match self.layout.out_chars {
            Some(oc) => oc.columns(g, self.vocab.known_numerals())?,
            None => None,
        };
        Ok(Prepared { char_columns })
    }

    fn flat_log_probs(&self, g: &mut Graph<'_>, prep: Prepared, h: NodeId) -> NodeId {
        let out = self.layout.out_all.expect("flat output layer");
        let mut logits = softmax_logits(g, out, h);
        if self.kind == ModelKind::SoftmaxRnn {
            let n_known = self.vocab.known_numerals().len();
            logits = with_char_scores(g, logits, h, prep.char_columns, self.vocab.n_words(), n_known);
        }
        g.log_softmax(logits)
    }

    fn word_log_probs(&self, g: &mut Graph<'_>, h: NodeId) -> NodeId {
        let out = self.layout.out_words.expect("word output layer");
        let logits = softmax_logits(g, out, h);
        g.log_softmax(logits)
    }

    /// Closed numeral distribution of the h-softmax variants (with
    /// `UNK_numeral`) or the combination constituent (without).
    fn numeral_softmax(&self, g: &mut Graph<'_>, prep: Prepared, h: NodeId) -> Option<NodeId> {
        let out = self.layout.out_numerals?;
        if g.params().get(out).rows() == 0 {
            return None;
        }
        let mut logits = softmax_logits(g, out, h);
        if self.kind == ModelKind::HSoftmaxRnn {
            let n_known = self.vocab.known_numerals().len();
            logits = with_char_scores(g, logits, h, prep.char_columns, 0, n_known);
        }
        Some(g.log_softmax(logits))
    }

    fn numeral_value(token: &Token) -> Result<(f64, u32)> {
        token
            .numeral
            .map(|n| (n.value, n.precision))
            .ok_or_else(|| Error::NotANumeral(token.surface.clone()))
    }

    /// `log p(s | numeral, h)`.
    fn numeral_branch(
        &self,
        g: &mut Graph<'_>,
        prep: Prepared,
        h: NodeId,
        token: &Token,
        lookup: Lookup,
    ) -> Result<NodeId> {
        let offset = self.vocab.numeral_offset(lookup.index);
        match self.kind {
            ModelKind::HSoftmax | ModelKind::HSoftmaxRnn => {
                let lp = self.numeral_softmax(g, prep, h).expect("numeral outputs");
                Ok(g.pick(lp, offset))
            }
            ModelKind::DRnn => self.layout.drnn.expect("digit head").log_prob(g, h, &token.surface),
            ModelKind::Mog => {
                let (v, r) = Self::numeral_value(token)?;
                self.layout.mog.as_ref().expect("mog head").log_prob(g, h, v, r)
            }
            ModelKind::Combination => {
                let la = self.layout.combo.expect("combination gate").log_alpha(g, h);
                let hs = match lookup.oov {
                    true => None,
                    false => self.numeral_softmax(g, prep, h).map(|lp| g.pick(lp, offset)),
                };
                let d = self.layout.drnn.expect("digit head").log_prob(g, h, &token.surface)?;
                let (v, r) = Self::numeral_value(token)?;
                let m = self.layout.mog.as_ref().expect("mog head").log_prob(g, h, v, r)?;
                mix(g, la, &[hs, Some(d), Some(m)])
            }
            ModelKind::Softmax | ModelKind::SoftmaxRnn => Err(Error::UnsupportedClass("numeral branch")),
        }
    }

    fn token_log_prob(&self, g: &mut Graph<'_>, prep: Prepared, h: NodeId, token: &Token) -> Result<(NodeId, bool)> {
        let lookup = self.vocab.lookup(token);
        if !self.kind.is_hierarchical() {
            let lp = self.flat_log_probs(g, prep, h);
            return Ok((g.pick(lp, lookup.index), lookup.oov));
        }
        let (lw, ln) = self.layout.class.expect("class gate").log_probs(g, h);
        let lp = match token.kind {
            TokenKind::Word => {
                let words = self.word_log_probs(g, h);
                let w = g.pick(words, lookup.index);
                g.add(lw, w)
            }
            TokenKind::Numeral => {
                let n = self.numeral_branch(g, prep, h, token, lookup)?;
                g.add(ln, n)
            }
        };
        let oov = lookup.oov && !(token.is_numeral() && self.kind.is_open_vocabulary());
        Ok((lp, oov))
    }

    /// Runs the model over a document, predicting every token from the
    /// states before it.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_>,
        doc: &[Token],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<TokenStep>> {
        let prep = self.prepare(g)?;
        let bb = &self.layout.backbone;
        let zero = bb.lstm.zero_state(g);
        let x0 = bb.start_input(g);
        let x0 = dropout(g, x0, self.dropout, mode, rng)?;
        let mut state = bb.lstm.step(g, x0, zero)?;
        let mut steps = Vec::with_capacity(doc.len());
        for (i, token) in doc.iter().enumerate() {
            let h = dropout(g, state.h, self.dropout, mode, rng)?;
            let (log_prob, oov) = self.token_log_prob(g, prep, h, token)?;
            steps.push(TokenStep { log_prob, state: state.h, kind: token.kind, oov });
            if i + 1 < doc.len() {
                let x = bb.input(g, &self.vocab, token)?;
                let x = dropout(g, x, self.dropout, mode, rng)?;
                state = bb.lstm.step(g, x, state)?;
            }
        }
        Ok(steps)
    }

    /// Mean negative log-likelihood of a document as a graph node.
    pub fn document_loss<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_>,
        doc: &[Token],
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        if doc.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let steps = self.forward(g, doc, mode, rng)?;
        let terms: Vec<NodeId> = steps.iter().map(|s| s.log_prob).collect();
        let total = g.add_all(&terms);
        Ok(g.scale(total, -1.0 / doc.len() as f64))
    }

    /// Evaluation-mode scores of every token.
    pub fn score_document(&self, doc: &[Token]) -> Result<Vec<TokenScore>> {
        let mut g = Graph::new(&self.params);
        // evaluation mode draws nothing from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let steps = self.forward(&mut g, doc, Mode::Eval, &mut rng)?;
        Ok(steps
            .iter()
            .map(|s| TokenScore {
                log_prob: g.scalar_value(s.log_prob),
                kind: s.kind,
                oov: s.oov,
                state: (s.kind == TokenKind::Numeral).then(|| g.value(s.state).to_vec()),
            })
            .collect())
    }

    /// Evaluation-mode hidden state after feeding `prefix`.
    pub fn state_after(&self, prefix: &[Token]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let bb = &self.layout.backbone;
        let mut state = bb.initial_state(&mut g)?;
        for t in prefix {
            state = bb.advance(&mut g, &self.vocab, state, t)?;
        }
        Ok(g.value(state.h).to_vec())
    }

    /// `(p(word | h), p(numeral | h))`; for flat models the class masses
    /// are sums of the full softmax.
    pub fn class_probs(&self, h: &[f64]) -> Result<(f64, f64)> {
        if let Some(c) = &self.layout.class {
            return Ok(c.probs(&self.params, h));
        }
        let dist = self.full_distribution(h)?;
        let n_words = self.vocab.n_words();
        Ok((dist[..n_words].iter().sum(), dist[n_words..].iter().sum()))
    }

    /// Probability of every vocabulary entry (closed-vocabulary kinds only).
    pub fn full_distribution(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let prep = self.prepare(&mut g)?;
        let hn = g.constant(h.to_vec());
        if !self.kind.is_hierarchical() {
            let lp = self.flat_log_probs(&mut g, prep, hn);
            return Ok(g.value(lp).iter().map(|x| x.exp()).collect());
        }
        if self.kind.is_open_vocabulary() {
            return Err(Error::UnsupportedClass("full distribution of an open-vocabulary model"));
        }
        let (lw, ln) = self.layout.class.expect("class gate").log_probs(&mut g, hn);
        let (lw, ln) = (g.scalar_value(lw), g.scalar_value(ln));
        let words = self.word_log_probs(&mut g, hn);
        let nums = self.numeral_softmax(&mut g, prep, hn).expect("numeral outputs");
        let mut out: Vec<f64> = g.value(words).iter().map(|x| (x + lw).exp()).collect();
        out.extend(g.value(nums).iter().map(|x| (x + ln).exp()));
        Ok(out)
    }

    /// Mixture weights over `{h-softmax, d-RNN, MoG}` (combination only).
    pub fn strategy_weights(&self, h: &[f64]) -> Result<[f64; 3]> {
        let gate = self.layout.combo.ok_or(Error::UnsupportedClass("strategy weights"))?;
        let mut g = Graph::new(&self.params);
        let hn = g.constant(h.to_vec());
        let la = gate.log_alpha(&mut g, hn);
        let v = g.value(la);
        Ok([v[0].exp(), v[1].exp(), v[2].exp()])
    }

    /// Distribution of the digit-level model's first emitted symbol, indexed
    /// by digit, point and end-of-sequence.
    pub fn first_symbol_probs(&self, h: &[f64]) -> Result<Vec<f64>> {
        let head = self.layout.drnn.ok_or(Error::UnsupportedClass("first-digit distribution"))?;
        let mut g = Graph::new(&self.params);
        let hn = g.constant(h.to_vec());
        head.first_symbol_probs(&mut g, hn)
    }

    /// Scorer for `log p(s | numeral, h)` over a fixed candidate list.
    /// `oov_count` spreads the closed models' `UNK_numeral` mass over the
    /// out-of-vocabulary candidates.
    pub fn numeral_scorer<'m>(&'m self, candidates: &'m [Token], oov_count: usize) -> Result<NumeralScorer<'m>> {
        NumeralScorer::new(self, candidates, oov_count)
    }
}

/// Scores a fixed candidate list against many hidden states, reusing
/// everything that does not depend on the state.
pub struct NumeralScorer<'m> {
    model: &'m LanguageModel,
    candidates: &'m [Token],
    lookups: Vec<Lookup>,
    graph: Graph<'m>,
    prep: Prepared,
    mark: usize,
    log_oov: f64,
    /// Per-candidate component cell log-masses.
    cells: Vec<Vec<f64>>,
    max_precision: u32,
}

impl<'m> NumeralScorer<'m> {
    fn new(model: &'m LanguageModel, candidates: &'m [Token], oov_count: usize) -> Result<Self> {
        let mut lookups = Vec::with_capacity(candidates.len());
        let mut max_precision = 0;
        for c in candidates {
            let (_, r) = LanguageModel::numeral_value(c)?;
            max_precision = max_precision.max(r);
            lookups.push(model.vocab.lookup(c));
        }
        let cells = match &model.layout.mog {
            Some(m) => candidates
                .iter()
                .map(|c| {
                    let n = c.numeral.expect("checked above");
                    m.cell_log_masses(n.value, n.precision)
                })
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let mut graph = Graph::new(&model.params);
        let prep = model.prepare(&mut graph)?;
        let mark = graph.len();
        Ok(Self {
            model,
            candidates,
            lookups,
            graph,
            prep,
            mark,
            log_oov: (oov_count.max(1) as f64).ln(),
            cells,
            max_precision,
        })
    }

    pub fn candidates(&self) -> &[Token] {
        self.candidates
    }

    /// `log p(s | numeral, h)` for every candidate.
    pub fn log_probs(&mut self, h: &[f64]) -> Result<Vec<f64>> {
        self.graph.truncate(self.mark);
        let model = self.model;
        let l = &model.layout;
        let g = &mut self.graph;
        let hn = g.constant(h.to_vec());
        let closed = |lp: &[f64], base: f64, index: usize, lk: &Lookup, log_oov: f64| {
            if lk.oov {
                lp[index] - base - log_oov
            } else {
                lp[index] - base
            }
        };
        let out = match model.kind {
            ModelKind::Softmax | ModelKind::SoftmaxRnn => {
                let lp = model.flat_log_probs(g, self.prep, hn);
                let lp = g.value(lp);
                let num = &lp[model.vocab.n_words()..];
                let base = logsumexp(num);
                self.lookups
                    .iter()
                    .map(|lk| closed(lp, base, lk.index, lk, self.log_oov))
                    .collect()
            }
            ModelKind::HSoftmax | ModelKind::HSoftmaxRnn => {
                let lp = model.numeral_softmax(g, self.prep, hn).expect("numeral outputs");
                let lp = g.value(lp);
                self.lookups
                    .iter()
                    .map(|lk| closed(lp, 0.0, model.vocab.numeral_offset(lk.index), lk, self.log_oov))
                    .collect()
            }
            ModelKind::DRnn => self.digit_scores(hn)?,
            ModelKind::Mog => self.mog_scores(hn)?,
            ModelKind::Combination => {
                let la = l.combo.expect("combination gate").log_alpha(g, hn);
                let la = g.value(la).to_vec();
                let hs = model.numeral_softmax(g, self.prep, hn).map(|lp| g.value(lp).to_vec());
                let d = self.digit_scores(hn)?;
                let m = self.mog_scores(hn)?;
                self.lookups
                    .iter()
                    .enumerate()
                    .map(|(i, lk)| {
                        let h = match (&hs, lk.oov) {
                            (Some(lp), false) => Some(lp[model.vocab.numeral_offset(lk.index)]),
                            _ => None,
                        };
                        mix_values(&la, &[h, Some(d[i]), Some(m[i])])
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    fn digit_scores(&mut self, h: NodeId) -> Result<Vec<f64>> {
        let head = self.model.layout.drnn.expect("digit head");
        let surfaces: Vec<&str> = self.candidates.iter().map(|c| c.surface.as_str()).collect();
        head.log_probs_shared(&mut self.graph, h, &surfaces)
    }

    fn mog_scores(&mut self, h: NodeId) -> Result<Vec<f64>> {
        let head = self.model.layout.mog.as_ref().expect("mog head");
        let g = &mut self.graph;
        let lw = head.log_weights(g, h);
        let lw = g.value(lw).to_vec();
        let (pr, _) = head.pattern.log_probs_up_to(g, h, self.max_precision)?;
        Ok(self
            .candidates
            .iter()
            .zip(&self.cells)
            .map(|(c, cells)| {
                let terms: Vec<f64> = lw.iter().zip(cells).map(|(a, b)| a + b).collect();
                pr[c.precision().expect("numeral") as usize] + logsumexp(&terms)
            })
            .collect())
    }
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability of the first emitted symbol being each digit `1..=9`,
/// renormalised over those nine.
pub fn leading_digit_distribution(first_symbol: &[f64]) -> [f64; 9] {
    let total: f64 = first_symbol[1..10].iter().sum();
    let mut out = [0.0; 9];
    for d in 1..10 {
        out[d - 1] = first_symbol[d] / total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::gmm::Component;
    use approx::assert_abs_diff_eq;

    fn vocab() -> Vocabulary {
        Vocabulary::from_types(
            vec!["the".into(), "ef".into(), "is".into()],
            vec!["60".into(), "55.5".into(), "7".into()],
        )
    }

    fn bank() -> ComponentBank {
        ComponentBank::new(vec![
            Component { mean: 10.0, variance: 25.0, source_k: 2 },
            Component { mean: 58.0, variance: 16.0, source_k: 2 },
        ])
    }

    fn model(kind: ModelKind, seed: u64) -> LanguageModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LanguageModel::new(kind, vocab(), Some(bank()), 5, 0.1, &mut rng).unwrap()
    }

    fn some_state(m: &LanguageModel) -> Vec<f64> {
        m.state_after(&tokenize("the ef is 60 the")).unwrap()
    }

    #[test]
    fn kinds_round_trip_through_their_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ModelKind>().is_err());
    }

    #[test]
    fn closed_models_normalise_over_the_vocabulary() {
        for kind in [ModelKind::Softmax, ModelKind::SoftmaxRnn, ModelKind::HSoftmax, ModelKind::HSoftmaxRnn] {
            let m = model(kind, 3);
            let dist = m.full_distribution(&some_state(&m)).unwrap();
            assert_eq!(dist.len(), m.vocab.len());
            assert_abs_diff_eq!(dist.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mog_needs_a_bank() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(LanguageModel::new(ModelKind::Mog, vocab(), None, 4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn forward_scores_match_the_numeral_scorer() {
        let doc = tokenize("the ef is 55.5 is 7 the 123.25");
        for kind in ModelKind::ALL {
            let m = model(kind, 11);
            let scores = m.score_document(&doc).unwrap();
            assert_eq!(scores.len(), doc.len());
            let cands: Vec<Token> = doc.iter().filter(|t| t.is_numeral()).cloned().collect();
            let mut scorer = m.numeral_scorer(&cands, 1).unwrap();
            let mut k = 0;
            for (t, s) in doc.iter().zip(&scores) {
                if !t.is_numeral() {
                    continue;
                }
                let h = s.state.as_ref().unwrap();
                let (_, pn) = m.class_probs(h).unwrap();
                let cond = scorer.log_probs(h).unwrap()[k];
                assert_abs_diff_eq!(s.log_prob, pn.ln() + cond, epsilon = 1e-10);
                k += 1;
            }
        }
    }

    #[test]
    fn open_models_score_unseen_numerals_directly() {
        let doc = tokenize("the 31415.9");
        for kind in ModelKind::ALL {
            let s = model(kind, 2).score_document(&doc).unwrap();
            assert!(s[1].log_prob.is_finite());
            assert_eq!(s[1].oov, !kind.is_open_vocabulary(), "{kind}");
        }
    }

    #[test]
    fn numeral_branch_leaves_word_probabilities_untouched() {
        let m = model(ModelKind::HSoftmax, 5);
        let doc = tokenize("the ef is 60 is the 7");
        let before = m.score_document(&doc).unwrap();
        let mut perturbed = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in m.numeral_branch_params() {
            for x in perturbed.params.get_mut(id).data.iter_mut() {
                *x += rng.random_range(-0.5..0.5);
            }
        }
        let after = perturbed.score_document(&doc).unwrap();
        let mut changed = false;
        for (b, a) in before.iter().zip(&after) {
            match b.kind {
                TokenKind::Word => assert_eq!(b.log_prob.to_bits(), a.log_prob.to_bits()),
                TokenKind::Numeral => changed |= b.log_prob != a.log_prob,
            }
        }
        assert!(changed);
    }

    #[test]
    fn rebuilding_from_parameters_preserves_scores() {
        let doc = tokenize("the 60 ef 3.25");
        for kind in ModelKind::ALL {
            let m = model(kind, 8);
            let bank = kind.needs_bank().then(bank);
            let r = LanguageModel::from_params(kind, vocab(), bank, m.params.clone(), 0.1).unwrap();
            assert_eq!(m.score_document(&doc).unwrap(), r.score_document(&doc).unwrap());
        }
    }

    #[test]
    fn untrained_gate_weights_stay_on_the_simplex() {
        let m = model(ModelKind::Combination, 4);
        let a = m.strategy_weights(&some_state(&m)).unwrap();
        assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(model(ModelKind::Mog, 4).strategy_weights(&[0.0; 5]).is_err());
    }
}
