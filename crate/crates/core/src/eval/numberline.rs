//! Number-line evaluation: candidate sets, argmax decoding and regression
//! metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{median, Document, Token, Vocabulary};
use crate::error::{Error, Result};
use crate::gmm::percentile_init;
use crate::model::{LanguageModel, NumeralScorer, TokenScore};

/// Number of training percentiles added to the candidate set.
pub const PERCENTILE_POINTS: usize = 100;

/// Smallest `n` such that at least `coverage` of the training numerals have
/// at most `n` decimal digits.
pub fn choose_decimal_limit(precisions: &[u32], coverage: f64) -> Result<u32> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!("coverage {coverage} outside (0, 1]")));
    }
    if precisions.is_empty() {
        return Ok(0);
    }
    let mut sorted = precisions.to_vec();
    sorted.sort_unstable();
    let need = (coverage * sorted.len() as f64).ceil() as usize;
    Ok(sorted[need.clamp(1, sorted.len()) - 1])
}

fn by_value(a: &Token, b: &Token) -> Ordering {
    let (va, vb) = (a.value().unwrap_or(0.0), b.value().unwrap_or(0.0));
    va.total_cmp(&vb).then(a.precision().cmp(&b.precision()))
}

/// In-vocabulary numerals and [`PERCENTILE_POINTS`] training percentiles,
/// each rendered at every precision `0..=n`, deduplicated and sorted by value.
pub fn build_candidate_set(train_values: &[f64], vocab: &Vocabulary, n: u32) -> Result<Vec<Token>> {
    if train_values.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut surfaces: BTreeMap<String, ()> = BTreeMap::new();
    let mut bases: Vec<f64> = percentile_init(train_values, PERCENTILE_POINTS);
    for s in vocab.known_numerals() {
        surfaces.insert(s.clone(), ());
        bases.push(Token::numeral(s.as_str())?.value().expect("numeral"));
    }
    for b in bases {
        for r in 0..=n as usize {
            surfaces.insert(format!("{b:.r$}"), ());
        }
    }
    let mut out: Vec<Token> = surfaces.into_keys().map(Token::numeral).collect::<Result<_>>()?;
    out.sort_by(by_value);
    Ok(out)
}

/// Index of the most probable candidate; ties go to the smaller value, then
/// to fewer decimals, so the result does not depend on candidate order.
pub fn decode_number(candidates: &[Token], log_probs: &[f64]) -> Option<usize> {
    (0..candidates.len()).min_by(|&i, &j| {
        log_probs[j]
            .total_cmp(&log_probs[i])
            .then_with(|| by_value(&candidates[i], &candidates[j]))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc: usize,
    pub token: usize,
    pub truth: f64,
    pub predicted: f64,
    pub surface: String,
}

/// Evaluation-mode scores for every document, in order.
pub fn score_corpus(model: &LanguageModel, docs: &[Document]) -> Result<Vec<Vec<TokenScore>>> {
    docs.par_iter().map(|d| model.score_document(d)).collect()
}

/// Candidates the vocabulary does not cover.
pub fn oov_candidate_count(vocab: &Vocabulary, candidates: &[Token]) -> usize {
    candidates.iter().filter(|c| vocab.lookup(c).oov).count()
}

/// Decodes every numeral position admitted by `include(doc, token)`, given
/// the corpus scores from [`score_corpus`].
pub fn predict_numerals<F>(
    model: &LanguageModel,
    docs: &[Document],
    scores: &[Vec<TokenScore>],
    candidates: &[Token],
    include: F,
) -> Result<Vec<Prediction>>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    if docs.len() != scores.len() {
        return Err(Error::DimensionMismatch { expected: docs.len(), actual: scores.len() });
    }
    let oov_count = oov_candidate_count(&model.vocab, candidates);
    let per_doc: Vec<Vec<Prediction>> = docs
        .par_iter()
        .zip(scores)
        .enumerate()
        .map_init(
            || None::<NumeralScorer<'_>>,
            |slot, (d, (doc, doc_scores))| -> Result<Vec<Prediction>> {
                let mut out = Vec::new();
                for (t, (tok, s)) in doc.iter().zip(doc_scores).enumerate() {
                    let Some(h) = s.state.as_ref().filter(|_| tok.is_numeral() && include(d, t)) else {
                        continue;
                    };
                    if slot.is_none() {
                        *slot = Some(model.numeral_scorer(candidates, oov_count)?);
                    }
                    let lp = slot.as_mut().expect("initialised").log_probs(h)?;
                    let best = decode_number(candidates, &lp).expect("non-empty");
                    out.push(Prediction {
                        doc: d,
                        token: t,
                        truth: tok.value().expect("numeral"),
                        predicted: candidates[best].value().expect("numeral"),
                        surface: candidates[best].surface.clone(),
                    });
                }
                Ok(out)
            },
        )
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub count: usize,
    pub rmse: f64,
    pub mae: f64,
    pub mdae: f64,
    /// Percent; `None` when every target is zero.
    pub mape: Option<f64>,
    pub mdape: Option<f64>,
    pub excluded_zero_targets: usize,
}

/// RMSE, MAE, MdAE over all pairs; MAPE and MdAPE (in percent) over the
/// pairs with a nonzero target.
pub fn regression_metrics(truths: &[f64], preds: &[f64]) -> Result<RegressionMetrics> {
    if truths.len() != preds.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), actual: preds.len() });
    }
    if truths.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = truths.len() as f64;
    let abs: Vec<f64> = truths.iter().zip(preds).map(|(v, p)| (v - p).abs()).collect();
    let pct: Vec<f64> = truths
        .iter()
        .zip(&abs)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, e)| e / v.abs() * 100.0)
        .collect();
    Ok(RegressionMetrics {
        count: truths.len(),
        rmse: (abs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mae: abs.iter().sum::<f64>() / n,
        mdae: median(&abs).expect("non-empty"),
        mape: (!pct.is_empty()).then(|| pct.iter().sum::<f64>() / pct.len() as f64),
        mdape: median(&pct),
        excluded_zero_targets: truths.len() - pct.len(),
    })
}
