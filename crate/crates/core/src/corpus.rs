//! Tokenisation, numeral normalisation, vocabularies and corpus statistics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Word,
    Numeral,
}

impl TokenKind {
    pub fn label(self) -> &'static str {
        match self {
            TokenKind::Word => "word",
            TokenKind::Numeral => "numeral",
        }
    }
}

/// Numeric reading of a numeral surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumeralValue {
    pub value: f64,
    /// Number of digits after the decimal point.
    pub precision: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
    /// Present iff `kind == Numeral`.
    pub numeral: Option<NumeralValue>,
}

impl Token {
    pub fn word(surface: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            kind: TokenKind::Word,
            numeral: None,
        }
    }

    /// Builds a numeral token from an already normalised surface.
    pub fn numeral(surface: impl Into<String>) -> Result<Self> {
        let surface = surface.into();
        let numeral = parse_value(&surface)?;
        Ok(Self {
            surface,
            kind: TokenKind::Numeral,
            numeral: Some(numeral),
        })
    }

    /// Classifies a single already-split, lowercased piece.
    pub fn classify(piece: &str) -> Self {
        match normalize_numeral(piece) {
            Ok(norm) => Token::numeral(norm).expect("normalised numerals parse"),
            Err(_) => Token::word(piece),
        }
    }

    pub fn is_numeral(&self) -> bool {
        self.kind == TokenKind::Numeral
    }

    pub fn value(&self) -> Option<f64> {
        self.numeral.map(|n| n.value)
    }

    pub fn precision(&self) -> Option<u32> {
        self.numeral.map(|n| n.precision)
    }
}

pub type Document = Vec<Token>;

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Matches `digits [ '.' digits ]` with optional `,` thousands separators
/// in the integer part.
fn split_raw_numeral(raw: &str) -> Option<(&str, Option<&str>)> {
    let (int, frac) = match raw.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (raw, None),
    };
    if let Some(f) = frac {
        if !all_digits(f) {
            return None;
        }
    }
    if all_digits(int) {
        return Some((int, frac));
    }
    let groups: Vec<&str> = int.split(',').collect();
    if groups.len() < 2 {
        return None;
    }
    let head_ok = all_digits(groups[0]) && groups[0].len() <= 3;
    let tail_ok = groups[1..].iter().all(|g| g.len() == 3 && all_digits(g));
    (head_ok && tail_ok).then_some((int, frac))
}

/// Removes thousands separators and leading integer zeros. Trailing decimal
/// zeros are kept since they carry the numeral's precision.
pub fn normalize_numeral(raw: &str) -> Result<String> {
    let (int, frac) = split_raw_numeral(raw).ok_or_else(|| Error::NotANumeral(raw.to_string()))?;
    let digits: String = int.chars().filter(|c| *c != ',').collect();
    let trimmed = digits.trim_start_matches('0');
    let int_part = if trimmed.is_empty() { "0" } else { trimmed };
    Ok(match frac {
        Some(f) => format!("{int_part}.{f}"),
        None => int_part.to_string(),
    })
}

/// Reads a normalised numeral surface as (value, precision).
pub fn parse_value(surface: &str) -> Result<NumeralValue> {
    let bad = || Error::NotANumeral(surface.to_string());
    let (int, frac) = match surface.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (surface, None),
    };
    if !all_digits(int) || frac.is_some_and(|f| !all_digits(f)) {
        return Err(bad());
    }
    let value: f64 = surface.parse().map_err(|_| bad())?;
    Ok(NumeralValue {
        value,
        precision: frac.map_or(0, |f| f.len() as u32),
    })
}

fn is_split_symbol(c: char) -> bool {
    c == '-' || c == '/'
}

/// Lowercases, splits on whitespace, and separates `-` and `/` from
/// adjacent digits so that negations and fractions become symbol tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lower.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut piece = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
            let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if is_split_symbol(c) && (prev_digit || next_digit) {
                if !piece.is_empty() {
                    out.push(Token::classify(&piece));
                    piece.clear();
                }
                out.push(Token::word(c.to_string()));
            } else {
                piece.push(c);
            }
        }
        if !piece.is_empty() {
            out.push(Token::classify(&piece));
        }
    }
    out
}

/// One document per non-empty line.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(tokenize)
        .collect())
}

/// Writes tokenised documents, one per line, tokens separated by a space.
pub fn write_tokenized(path: &Path, docs: &[Document]) -> Result<()> {
    let mut s = String::new();
    for d in docs {
        let line: Vec<&str> = d.iter().map(|t| t.surface.as_str()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Deterministic shuffle-and-split into (train, dev, test).
pub fn split_documents<T>(docs: Vec<T>, dev_fraction: f64, test_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = docs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = (n as f64 * dev_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut slots: Vec<Option<T>> = docs.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<T> {
        idx.iter().map(|&i| slots[i].take().expect("each doc once")).collect()
    };
    let dev = take(&order[..n_dev]);
    let test = take(&order[n_dev..n_dev + n_test]);
    let train = take(&order[n_dev + n_test..]);
    (train, dev, test)
}

pub const UNK_WORD: &str = "UNK_word";
pub const UNK_NUMERAL: &str = "UNK_numeral";

/// Where a token lands in a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup {
    /// Global index, with out-of-vocabulary tokens mapped to their class UNK.
    pub index: usize,
    pub oov: bool,
}

/// Closed word and numeral inventories. Global indices place all words
/// (ending with `UNK_word`) before all numerals (ending with `UNK_numeral`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    numerals: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from explicit inventories (UNK symbols are appended).
    pub fn from_types(words: Vec<String>, numerals: Vec<String>) -> Self {
        let mut words = words;
        let mut numerals = numerals;
        words.push(UNK_WORD.to_string());
        numerals.push(UNK_NUMERAL.to_string());
        Self::assemble(words, numerals)
    }

    fn assemble(words: Vec<String>, numerals: Vec<String>) -> Self {
        let index = words
            .iter()
            .chain(&numerals)
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self {
            words,
            numerals,
            index,
        }
    }

    /// Keeps the `cap` most frequent types (ties broken by first occurrence),
    /// split into word and numeral inventories by kind.
    pub fn build<'a, I>(docs: I, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut counts: HashMap<&str, (usize, usize, TokenKind)> = HashMap::new();
        for (seen, t) in docs.into_iter().flatten().enumerate() {
            counts.entry(t.surface.as_str()).or_insert((0, seen, t.kind)).0 += 1;
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut types: Vec<(&str, usize, usize, TokenKind)> =
            counts.into_iter().map(|(s, (c, first, k))| (s, c, first, k)).collect();
        types.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        types.truncate(cap);
        let (mut words, mut numerals) = (Vec::new(), Vec::new());
        for (s, _, _, kind) in types {
            match kind {
                TokenKind::Word => words.push(s.to_string()),
                TokenKind::Numeral => numerals.push(s.to_string()),
            }
        }
        Ok(Self::from_types(words, numerals))
    }

    pub fn len(&self) -> usize {
        self.words.len() + self.numerals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Word types including `UNK_word`.
    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Numeral types including `UNK_numeral`.
    pub fn n_numerals(&self) -> usize {
        self.numerals.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn numerals(&self) -> &[String] {
        &self.numerals
    }

    /// In-vocabulary numeral surfaces, without `UNK_numeral`.
    pub fn known_numerals(&self) -> &[String] {
        &self.numerals[..self.numerals.len() - 1]
    }

    pub fn unk_word(&self) -> usize {
        self.words.len() - 1
    }

    pub fn unk_numeral(&self) -> usize {
        self.len() - 1
    }

    pub fn surface(&self, index: usize) -> &str {
        if index < self.words.len() {
            &self.words[index]
        } else {
            &self.numerals[index - self.words.len()]
        }
    }

    pub fn kind_of(&self, index: usize) -> TokenKind {
        if index < self.words.len() {
            TokenKind::Word
        } else {
            TokenKind::Numeral
        }
    }

    /// Exact-match index of a surface, if in vocabulary.
    pub fn get(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn lookup(&self, token: &Token) -> Lookup {
        match self.index.get(&token.surface) {
            Some(&i) if self.kind_of(i) == token.kind => Lookup { index: i, oov: false },
            _ => Lookup {
                index: match token.kind {
                    TokenKind::Word => self.unk_word(),
                    TokenKind::Numeral => self.unk_numeral(),
                },
                oov: true,
            },
        }
    }

    /// Index of a numeral relative to the start of the numeral inventory.
    pub fn numeral_offset(&self, global: usize) -> usize {
        global - self.words.len()
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("#words={} #numerals={}\n", self.n_words(), self.n_numerals());
        for t in self.words.iter().chain(&self.numerals) {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::Format {
            what: "vocabulary file",
            detail: d,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut nw = None;
        let mut nn = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("#words=") {
                nw = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("#numerals=") {
                nn = v.parse::<usize>().ok();
            }
        }
        let (nw, nn) = nw.zip(nn).ok_or_else(|| bad(format!("bad header {header:?}")))?;
        let rest: Vec<String> = lines.map(str::to_string).collect();
        if rest.len() != nw + nn || nw == 0 || nn == 0 {
            return Err(bad(format!("expected {} entries, found {}", nw + nn, rest.len())));
        }
        let numerals = rest[nw..].to_vec();
        let words = rest[..nw].to_vec();
        if words.last().map(String::as_str) != Some(UNK_WORD)
            || numerals.last().map(String::as_str) != Some(UNK_NUMERAL)
        {
            return Err(bad("class inventories must end with their UNK symbol".into()));
        }
        Ok(Self::assemble(words, numerals))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeralSummary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub tokens: usize,
    pub max_len: usize,
    pub avg_len: f64,
    pub pct_words: f64,
    pub pct_numerals: f64,
    pub numerals: Option<NumeralSummary>,
    pub oov_rate_words: f64,
    pub oov_rate_numerals: f64,
}

/// Median with the two middle values averaged on even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn numeral_values(docs: &[Document]) -> Vec<f64> {
    docs.iter().flatten().filter_map(Token::value).collect()
}

pub fn corpus_stats(docs: &[Document], vocab: &Vocabulary) -> CorpusStats {
    let tokens: usize = docs.iter().map(Vec::len).sum();
    let mut n_num = 0usize;
    let (mut oov_w, mut oov_n) = (0usize, 0usize);
    for t in docs.iter().flatten() {
        let oov = vocab.lookup(t).oov;
        match t.kind {
            TokenKind::Word => oov_w += usize::from(oov),
            TokenKind::Numeral => {
                n_num += 1;
                oov_n += usize::from(oov);
            }
        }
    }
    let n_word = tokens - n_num;
    let pct = |k: usize| if tokens == 0 { 0.0 } else { 100.0 * k as f64 / tokens as f64 };
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let values = numeral_values(docs);
    let numerals = median(&values).map(|median| NumeralSummary {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        median,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    CorpusStats {
        instances: docs.len(),
        tokens,
        max_len: docs.iter().map(Vec::len).max().unwrap_or(0),
        avg_len: if docs.is_empty() { 0.0 } else { tokens as f64 / docs.len() as f64 },
        pct_words: pct(n_word),
        pct_numerals: pct(n_num),
        numerals,
        oov_rate_words: rate(oov_w, n_word),
        oov_rate_numerals: rate(oov_n, n_num),
    }
}

fn fmt_magnitude(x: f64) -> String {
    if x.abs() >= 1e5 {
        format!("~10^{}", x.abs().log10().round() as i64)
    } else {
        format!("{x:.1}")
    }
}

/// Renders statistics for several splits side by side.
pub fn format_stats_table(columns: &[(&str, &CorpusStats)]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "");
    for (name, _) in columns {
        let _ = write!(s, "{name:>12}");
    }
    s.push('\n');
    let row = |s: &mut String, label: &str, f: &dyn Fn(&CorpusStats) -> String| {
        let _ = write!(s, "{label:<10}");
        for (_, st) in columns {
            let _ = write!(s, "{:>12}", f(st));
        }
        s.push('\n');
    };
    row(&mut s, "#inst", &|c| c.instances.to_string());
    row(&mut s, "maxLen", &|c| c.max_len.to_string());
    row(&mut s, "avgLen", &|c| format!("{:.1}", c.avg_len));
    row(&mut s, "%word", &|c| format!("{:.1}", c.pct_words));
    row(&mut s, "%nums", &|c| format!("{:.1}", c.pct_numerals));
    let num = |f: fn(&NumeralSummary) -> f64| {
        move |c: &CorpusStats| c.numerals.as_ref().map_or("-".into(), |n| fmt_magnitude(f(n)))
    };
    row(&mut s, "min", &num(|n| n.min));
    row(&mut s, "median", &num(|n| n.median));
    row(&mut s, "mean", &num(|n| n.mean));
    row(&mut s, "max", &num(|n| n.max));
    row(&mut s, "oov%word", &|c| format!("{:.1}", 100.0 * c.oov_rate_words));
    row(&mut s, "oov%nums", &|c| format!("{:.1}", 100.0 * c.oov_rate_numerals));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(ts: &[Token]) -> Vec<&str> {
        ts.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn negation_and_fraction_are_split() {
        let t = tokenize("-1");
        assert_eq!(surfaces(&t), ["-", "1"]);
        assert!(t[1].is_numeral());
        assert_eq!(surfaces(&tokenize("3/4")), ["3", "/", "4"]);
        assert_eq!(surfaces(&tokenize("x-ray and/or")), ["x-ray", "and/or"]);
        assert_eq!(surfaces(&tokenize("10-20")), ["10", "-", "20"]);
    }

    #[test]
    fn words_are_lowercased() {
        let t = tokenize("Apple");
        assert_eq!(surfaces(&t), ["apple"]);
        assert_eq!(t[0].kind, TokenKind::Word);
    }

    #[test]
    fn scientific_notation_is_a_word() {
        assert_eq!(tokenize("1e5")[0].kind, TokenKind::Word);
    }

    #[test]
    fn normalisation_examples() {
        assert_eq!(normalize_numeral("2,000").unwrap(), "2000");
        assert_eq!(normalize_numeral("1,234,567.50").unwrap(), "1234567.50");
        assert_eq!(normalize_numeral("007").unwrap(), "7");
        assert_eq!(normalize_numeral("000").unwrap(), "0");
        assert_eq!(normalize_numeral("00.5").unwrap(), "0.5");
        assert_eq!(normalize_numeral("0.50").unwrap(), "0.50");
        for bad in ["", "abc", "1,5", "12,34", ".5", "5.", "1.2.3", "1,000,00", "-1"] {
            assert!(normalize_numeral(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn value_and_precision() {
        assert_eq!(parse_value("60.5").unwrap(), NumeralValue { value: 60.5, precision: 1 });
        assert_eq!(parse_value("7").unwrap(), NumeralValue { value: 7.0, precision: 0 });
        assert_eq!(parse_value("0.001").unwrap(), NumeralValue { value: 0.001, precision: 3 });
        assert!(parse_value("1,000").is_err());
        assert!(parse_value("x").is_err());
    }

    fn doc(s: &str) -> Document {
        tokenize(s)
    }

    #[test]
    fn vocabulary_keeps_most_frequent_types() {
        let d = doc("a a a a a b b b 1 1 1 1");
        let v = Vocabulary::build([&d], 2).unwrap();
        assert_eq!(v.words(), ["a", UNK_WORD]);
        assert_eq!(v.numerals(), ["1", UNK_NUMERAL]);
        assert!(v.lookup(&Token::word("b")).oov);
    }

    #[test]
    fn vocabulary_ties_go_to_first_seen() {
        let d = doc("b a a b c");
        let v = Vocabulary::build([&d], 1).unwrap();
        assert_eq!(v.words(), ["b", UNK_WORD]);
    }

    #[test]
    fn vocabulary_without_cap_pressure_has_no_oov() {
        let d = doc("the value is 5 and the other is 6.0");
        let v = Vocabulary::build([&d], 100).unwrap();
        assert!(d.iter().all(|t| !v.lookup(t).oov));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let d: Document = Vec::new();
        assert!(matches!(Vocabulary::build([&d], 10), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn vocabulary_file_roundtrip() {
        let d = doc("a b 1 2.5 a");
        let v = Vocabulary::build([&d], 10).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("#words=3 #numerals=3\n"));
        assert_eq!(Vocabulary::parse(&text).unwrap(), v);
        assert!(Vocabulary::parse("#words=2 #numerals=1\na\n").is_err());
    }

    #[test]
    fn stats_examples() {
        let d = vec![doc("x 1 2")];
        let v = Vocabulary::build(&d, 10).unwrap();
        let s = corpus_stats(&d, &v);
        assert!((s.pct_numerals - 66.666_666).abs() < 1e-3);
        assert!((s.pct_words + s.pct_numerals - 100.0).abs() < 1e-9);
        let d = vec![doc("0 59 10000000")];
        let s = corpus_stats(&d, &v);
        let n = s.numerals.unwrap();
        assert_eq!(n.median, 59.0);
        assert_eq!(n.min, 0.0);
        assert_eq!(n.max, 1e7);
        let table = format_stats_table(&[("test", &corpus_stats(&d, &v))]);
        assert!(table.contains("%nums"));
        assert!(table.contains("~10^7"));
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let docs: Vec<Document> = (0..50).map(|i| doc(&format!("doc {i}"))).collect();
        let a = split_documents(docs.clone(), 0.1, 0.2, 7);
        let b = split_documents(docs, 0.1, 0.2, 7);
        assert_eq!(a, b);
        assert_eq!((a.0.len(), a.1.len(), a.2.len()), (35, 5, 10));
    }

    proptest! {
        #[test]
        fn normalisation_is_idempotent(int in "[0-9]{1,9}", frac in proptest::option::of("[0-9]{1,4}")) {
            let raw = match &frac { Some(f) => format!("{int}.{f}"), None => int.clone() };
            let once = normalize_numeral(&raw).unwrap();
            prop_assert_eq!(normalize_numeral(&once).unwrap(), once.clone());
            let p = parse_value(&once).unwrap();
            prop_assert_eq!(p.precision as usize, frac.map_or(0, |f| f.len()));
        }

        #[test]
        fn word_and_numeral_counts_partition_tokens(text in "[a-c0-9 ,./-]{0,40}") {
            let toks = tokenize(&text);
            let words = toks.iter().filter(|t| t.kind == TokenKind::Word).count();
            let nums = toks.iter().filter(|t| t.is_numeral()).count();
            prop_assert_eq!(words + nums, toks.len());
            for t in &toks {
                if let Some(n) = t.numeral {
                    prop_assert!(n.value >= 0.0);
                    prop_assert_eq!(parse_value(&t.surface).unwrap(), n);
                }
            }
        }

        #[test]
        fn vocabulary_is_deterministic(text in "[a-d1-4 ]{1,60}", cap in 1usize..8) {
            let d = tokenize(&text);
            prop_assume!(!d.is_empty());
            let a = Vocabulary::build([&d], cap).unwrap();
            let b = Vocabulary::build([&d], cap).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
