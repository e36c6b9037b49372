//! Benford first-digit analysis, embedding similarity and strategy
//! selection reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Token};
use crate::error::{Error, Result};
use crate::model::{leading_digit_distribution, LanguageModel};
use crate::numeral_heads::STRATEGIES;

/// Benford probabilities of the significant digit at `position` (1-based):
/// digits `1..=9` for the first position, `0..=9` afterwards.
pub fn benford_reference(position: usize) -> Result<Vec<f64>> {
    match position {
        0 => Err(Error::InvalidArgument("digit positions start at 1".into())),
        1 => Ok((1..=9).map(|d| (1.0 + 1.0 / d as f64).log10()).collect()),
        // the sum runs over 9·10^(k−2) prefixes; cap it to keep it cheap
        k if k <= 6 => {
            let lo = 10u64.pow(k as u32 - 2);
            Ok((0..10u64)
                .map(|d| (lo..lo * 10).map(|j| (1.0 + 1.0 / (10 * j + d) as f64).log10()).sum())
                .collect())
        }
        _ => Ok(vec![0.1; 10]),
    }
}

/// Significant digit at `position` of a numeral surface, ignoring leading
/// zeros and the decimal point. `None` for zero or too-short numerals.
pub fn significant_digit(surface: &str, position: usize) -> Option<u8> {
    if position == 0 {
        return None;
    }
    surface
        .bytes()
        .filter(u8::is_ascii_digit)
        .skip_while(|&b| b == b'0')
        .nth(position - 1)
        .map(|b| b - b'0')
}

/// Empirical distribution of significant digits at `position` over the
/// numerals of a corpus, indexed like [`benford_reference`].
pub fn corpus_digit_distribution<'a, I>(surfaces: I, position: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a str>,
{
    let first = usize::from(position == 1);
    let mut counts = vec![0usize; 10 - first];
    for s in surfaces {
        if let Some(d) = significant_digit(s, position) {
            counts[d as usize - first] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// The digit-level model's leading-digit distribution, averaged over the
/// hidden states that precede each numeral of `docs`.
pub fn model_leading_digits(model: &LanguageModel, docs: &[Document]) -> Result<[f64; 9]> {
    model.digit_head().ok_or(Error::UnsupportedClass("first-digit distribution"))?;
    let partial: Vec<([f64; 9], usize)> = docs
        .par_iter()
        .map(|doc| -> Result<([f64; 9], usize)> {
            let mut acc = [0.0; 9];
            let mut n = 0;
            if !doc.iter().any(Token::is_numeral) {
                return Ok((acc, n));
            }
            for s in model.score_document(doc)? {
                if let Some(h) = s.state {
                    let d = leading_digit_distribution(&model.first_symbol_probs(&h)?);
                    acc.iter_mut().zip(d).for_each(|(a, p)| *a += p);
                    n += 1;
                }
            }
            Ok((acc, n))
        })
        .collect::<Result<_>>()?;
    let mut total = [0.0; 9];
    let mut n = 0;
    for (acc, k) in partial {
        total.iter_mut().zip(acc).for_each(|(t, a)| *t += a);
        n += k;
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(total.map(|t| t / n as f64))
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenfordTable {
    pub position: usize,
    pub digits: Vec<u8>,
    pub reference: Vec<f64>,
    pub corpus: Option<Vec<f64>>,
    pub model: Option<Vec<f64>>,
}

impl BenfordTable {
    pub fn new(position: usize) -> Result<Self> {
        let reference = benford_reference(position)?;
        let first = u8::from(position == 1);
        Ok(Self {
            position,
            digits: (first..10).collect(),
            reference,
            corpus: None,
            model: None,
        })
    }

    pub fn tv_corpus(&self) -> Option<f64> {
        self.corpus.as_ref().map(|c| total_variation(c, &self.reference))
    }

    pub fn tv_model(&self) -> Option<f64> {
        self.model.as_ref().map(|m| total_variation(m, &self.reference))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("digit,benford");
        if self.corpus.is_some() {
            out.push_str(",corpus");
        }
        if self.model.is_some() {
            out.push_str(",model");
        }
        out.push('\n');
        for (i, d) in self.digits.iter().enumerate() {
            let _ = write!(out, "{d},{}", self.reference[i]);
            for col in [&self.corpus, &self.model].into_iter().flatten() {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Requested tokens without an output embedding.
    pub skipped: Vec<String>,
}

impl SimilarityMatrix {
    pub fn from_vectors(labels: Vec<String>, vectors: &[Vec<f64>]) -> Self {
        let n = vectors.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            matrix[i][i] = if vectors[i].iter().any(|&x| x != 0.0) { 1.0 } else { 0.0 };
            for j in 0..i {
                let c = cosine_similarity(&vectors[i], &vectors[j]);
                matrix[i][j] = c;
                matrix[j][i] = c;
            }
        }
        Self { labels, matrix, skipped: Vec::new() }
    }

    /// Index of each row's most similar other row.
    pub fn nearest_neighbours(&self) -> Vec<Option<usize>> {
        (0..self.labels.len())
            .map(|i| {
                (0..self.labels.len())
                    .filter(|&j| j != i)
                    .max_by(|&a, &b| self.matrix[i][a].total_cmp(&self.matrix[i][b]).then(b.cmp(&a)))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("token");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.matrix) {
            out.push_str(l);
            for x in row {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Cosine similarities between the output embeddings of the given numerals,
/// sorted by value. Numerals without an embedding are skipped.
pub fn numeral_similarity(model: &LanguageModel, surfaces: &[String]) -> Result<SimilarityMatrix> {
    let mut found: Vec<(Token, Vec<f64>)> = Vec::new();
    let mut skipped = Vec::new();
    for s in surfaces {
        match (Token::numeral(s.as_str()), model.output_embedding(s)) {
            (Ok(t), Some(e)) => found.push((t, e.to_vec())),
            _ => skipped.push(s.clone()),
        }
    }
    found.sort_by(|(a, _), (b, _)| {
        a.value()
            .unwrap_or(0.0)
            .total_cmp(&b.value().unwrap_or(0.0))
            .then(a.precision().cmp(&b.precision()))
    });
    let (tokens, vectors): (Vec<Token>, Vec<Vec<f64>>) = found.into_iter().unzip();
    let mut m = SimilarityMatrix::from_vectors(tokens.into_iter().map(|t| t.surface).collect(), &vectors);
    m.skipped = skipped;
    Ok(m)
}

/// Cosine similarities between the digit-level model's output digit
/// embeddings, in digit order.
pub fn digit_similarity(model: &LanguageModel) -> Result<SimilarityMatrix> {
    let head = model.digit_head().ok_or(Error::UnsupportedClass("digit embeddings"))?;
    let vectors = head.digit_embeddings(&model.params);
    Ok(SimilarityMatrix::from_vectors((0..10).map(|d| d.to_string()).collect(), &vectors))
}

/// Number of digits whose nearest neighbour is an adjacent digit.
pub fn adjacent_neighbour_count(digits: &SimilarityMatrix) -> usize {
    digits
        .nearest_neighbours()
        .iter()
        .enumerate()
        .filter(|(i, nn)| nn.is_some_and(|j| j.abs_diff(*i) == 1))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub surface: String,
    pub count: usize,
    /// Mean mixture weights over `{h-softmax, d-RNN, MoG}`.
    pub alpha: [f64; 3],
}

/// Mean strategy weights per numeral type over its occurrences in `docs`,
/// sorted by surface.
pub fn strategy_selection(model: &LanguageModel, docs: &[Document]) -> Result<Vec<SelectionRow>> {
    let per_doc: Vec<Vec<(String, [f64; 3])>> = docs
        .par_iter()
        .map(|doc| -> Result<Vec<(String, [f64; 3])>> {
            if !doc.iter().any(Token::is_numeral) {
                return Ok(Vec::new());
            }
            let scores = model.score_document(doc)?;
            doc.iter()
                .zip(scores)
                .filter_map(|(t, s)| s.state.map(|h| (t, h)))
                .map(|(t, h)| Ok((t.surface.clone(), model.strategy_weights(&h)?)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut acc: BTreeMap<String, ([f64; 3], usize)> = BTreeMap::new();
    for (s, a) in per_doc.into_iter().flatten() {
        let e = acc.entry(s).or_insert(([0.0; 3], 0));
        e.0.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(surface, (sum, count))| SelectionRow { surface, count, alpha: sum.map(|x| x / count as f64) })
        .collect())
}

/// The `top` numerals with the highest mean weight for each strategy.
pub fn selection_rankings(rows: &[SelectionRow], top: usize) -> [Vec<&SelectionRow>; 3] {
    std::array::from_fn(|m| {
        let mut sorted: Vec<&SelectionRow> = rows.iter().collect();
        sorted.sort_by(|a, b| b.alpha[m].total_cmp(&a.alpha[m]).then_with(|| a.surface.cmp(&b.surface)));
        sorted.truncate(top);
        sorted
    })
}

pub fn selection_csv(rows: &[SelectionRow]) -> String {
    let mut out = format!("numeral,count,{}\n", STRATEGIES.join(","));
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.surface, r.count, r.alpha[0], r.alpha[1], r.alpha[2]);
    }
    out
}
