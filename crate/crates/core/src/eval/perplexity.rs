//! Perplexity and adjusted perplexity by token class.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenKind, Vocabulary};
use crate::error::{Error, Result};
use crate::model::TokenScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassFilter {
    Words,
    Numerals,
    All,
}

impl ClassFilter {
    pub fn admits(self, kind: TokenKind) -> bool {
        match self {
            ClassFilter::Words => kind == TokenKind::Word,
            ClassFilter::Numerals => kind == TokenKind::Numeral,
            ClassFilter::All => true,
        }
    }
}

/// Distinct out-of-vocabulary types of one class in the evaluated split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OovClass {
    pub members: BTreeSet<String>,
}

impl OovClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// OOV classes for words and numerals, determined by the vocabulary and the
/// evaluated corpus alone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OovSets {
    pub words: OovClass,
    pub numerals: OovClass,
}

impl OovSets {
    pub fn from_corpus(vocab: &Vocabulary, docs: &[Document]) -> Self {
        let mut out = Self::default();
        for t in docs.iter().flatten() {
            if vocab.lookup(t).oov {
                out.class_mut(t.kind).members.insert(t.surface.clone());
            }
        }
        out
    }

    pub fn class(&self, kind: TokenKind) -> &OovClass {
        match kind {
            TokenKind::Word => &self.words,
            TokenKind::Numeral => &self.numerals,
        }
    }

    fn class_mut(&mut self, kind: TokenKind) -> &mut OovClass {
        match kind {
            TokenKind::Word => &mut self.words,
            TokenKind::Numeral => &mut self.numerals,
        }
    }
}

fn selected(scores: &[TokenScore], filter: ClassFilter) -> impl Iterator<Item = &TokenScore> {
    scores.iter().filter(move |s| filter.admits(s.kind))
}

/// `exp(-(1/N) Σ log p)` over the admitted tokens; `None` when there are
/// none, infinite when any token has zero probability.
pub fn perplexity(scores: &[TokenScore], filter: ClassFilter) -> Option<f64> {
    let (sum, n) = selected(scores, filter).fold((0.0, 0usize), |(s, n), t| (s + t.log_prob, n + 1));
    (n > 0).then(|| (-sum / n as f64).exp())
}

fn check_oov(scores: &[TokenScore], filter: ClassFilter, oov: &OovSets) -> Result<()> {
    for t in selected(scores, filter).filter(|t| t.oov) {
        if oov.class(t.kind).is_empty() {
            return Err(Error::InconsistentOov(t.kind.label()));
        }
    }
    Ok(())
}

/// `exp(H + Σ_c (N_c / N) log |OOV_c|)`, where `N_c` counts tokens scored
/// through their class UNK.
pub fn adjusted_perplexity(scores: &[TokenScore], filter: ClassFilter, oov: &OovSets) -> Result<Option<f64>> {
    check_oov(scores, filter, oov)?;
    let n = selected(scores, filter).count();
    if n == 0 {
        return Ok(None);
    }
    let h = -selected(scores, filter).map(|t| t.log_prob).sum::<f64>() / n as f64;
    let mut adjust = 0.0;
    for kind in [TokenKind::Word, TokenKind::Numeral] {
        let n_c = selected(scores, filter).filter(|t| t.oov && t.kind == kind).count();
        if n_c > 0 {
            adjust += n_c as f64 / n as f64 * (oov.class(kind).len() as f64).ln();
        }
    }
    Ok(Some((h + adjust).exp()))
}

/// The same quantity computed token by token: each UNK-scored token gets
/// `p(UNK_c) / |OOV_c|`.
pub fn adjusted_perplexity_redistributed(
    scores: &[TokenScore],
    filter: ClassFilter,
    oov: &OovSets,
) -> Result<Option<f64>> {
    check_oov(scores, filter, oov)?;
    let adjusted: Vec<TokenScore> = selected(scores, filter)
        .map(|t| TokenScore {
            log_prob: if t.oov {
                t.log_prob - (oov.class(t.kind).len() as f64).ln()
            } else {
                t.log_prob
            },
            kind: t.kind,
            oov: false,
            state: None,
        })
        .collect();
    Ok(perplexity(&adjusted, ClassFilter::All))
}
