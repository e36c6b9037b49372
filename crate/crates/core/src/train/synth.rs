//! Template-based synthetic corpora whose numerals follow known
//! distributions.
//!
//! A spec is TOML:
//!
//! ```toml
//! documents = 200
//! sentences = [2, 4]
//!
//! [[templates]]
//! text = "the ejection fraction is {ef} %"
//!
//! [slots.ef]
//! dist = "normal"
//! mean = 58.0
//! sd = 8.0
//! precision = 1
//! continuous = true
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{split_documents, tokenize, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum SlotDistribution {
    Normal { mean: f64, sd: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Uniform { low: f64, high: f64 },
    UniformInt { low: u64, high: u64 },
    LogUniform { low: f64, high: f64 },
    /// Uniform choice among literal tokens (words or numerals).
    Choice { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    #[serde(flatten)]
    pub dist: SlotDistribution,
    /// Decimal digits the drawn value is rounded to.
    #[serde(default)]
    pub precision: u32,
    /// Marks attributes measured on a continuous scale.
    #[serde(default)]
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub text: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

fn default_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub documents: usize,
    /// Inclusive range of sentences per document.
    pub sentences: [usize; 2],
    #[serde(default = "default_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    pub templates: Vec<Template>,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotSpec>,
}

/// Position of a generated slot value inside its document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMark {
    pub token: usize,
    pub slot: String,
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDocument {
    pub text: String,
    pub tokens: Document,
    pub slots: Vec<SlotMark>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<SyntheticDocument>,
    pub dev: Vec<SyntheticDocument>,
    pub test: Vec<SyntheticDocument>,
}

enum Piece {
    Literal(String, usize),
    Slot(String),
}

impl SlotSpec {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<String> {
        let r = self.precision as usize;
        let invalid = |e: &dyn std::fmt::Display| Error::Config(format!("slot distribution: {e}"));
        let value = match &self.dist {
            SlotDistribution::Choice { values } => {
                if values.is_empty() {
                    return Err(Error::Config("choice slot without values".into()));
                }
                return Ok(values[rng.random_range(0..values.len())].clone());
            }
            SlotDistribution::UniformInt { low, high } => {
                if low > high {
                    return Err(Error::Config("uniform_int: low > high".into()));
                }
                return Ok(rng.random_range(*low..=*high).to_string());
            }
            SlotDistribution::Normal { mean, sd } => {
                let d = Normal::new(*mean, *sd).map_err(|e| invalid(&e))?;
                resample(rng, |g| d.sample(g))?
            }
            SlotDistribution::Lognormal { mu, sigma } => {
                let d = LogNormal::new(*mu, *sigma).map_err(|e| invalid(&e))?;
                d.sample(rng)
            }
            SlotDistribution::Uniform { low, high } => {
                if !(low < high) {
                    return Err(Error::Config("uniform: low must be below high".into()));
                }
                resample(rng, |g| g.random_range(*low..*high))?
            }
            SlotDistribution::LogUniform { low, high } => {
                if !(0.0 < *low && low < high) {
                    return Err(Error::Config("log_uniform: need 0 < low < high".into()));
                }
                let (a, b) = (low.ln(), high.ln());
                rng.random_range(a..b).exp()
            }
        };
        Ok(format!("{value:.r$}"))
    }

    /// Mean of the drawn value before rounding, when it has a closed form.
    pub fn mean(&self) -> Option<f64> {
        match &self.dist {
            SlotDistribution::Normal { mean, .. } => Some(*mean),
            SlotDistribution::Lognormal { mu, sigma } => Some((mu + 0.5 * sigma * sigma).exp()),
            SlotDistribution::Uniform { low, high } => Some(0.5 * (low + high)),
            SlotDistribution::UniformInt { low, high } => Some(0.5 * (*low + *high) as f64),
            SlotDistribution::LogUniform { low, high } => Some((high - low) / (high.ln() - low.ln())),
            SlotDistribution::Choice { .. } => None,
        }
    }
}

/// Draws until the value is non-negative.
fn resample<R: Rng + ?Sized>(rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> Result<f64> {
    for _ in 0..10_000 {
        let v = draw(rng);
        if v >= 0.0 {
            return Ok(v);
        }
    }
    Err(Error::Config("slot distribution puts almost no mass on non-negative values".into()))
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Config("spec has no templates".into()));
        }
        if self.sentences[0] == 0 || self.sentences[0] > self.sentences[1] {
            return Err(Error::Config("`sentences` must be [min, max] with 1 <= min <= max".into()));
        }
        for t in &self.templates {
            for p in self.pieces(&t.text)? {
                if let Piece::Slot(name) = p {
                    if !self.slots.contains_key(&name) {
                        return Err(Error::Config(format!("template uses undefined slot `{name}`")));
                    }
                }
            }
        }
        Ok(())
    }

    fn pieces(&self, text: &str) -> Result<Vec<Piece>> {
        text.split_whitespace()
            .map(|w| {
                if let Some(name) = w.strip_prefix('{').and_then(|x| x.strip_suffix('}')) {
                    Ok(Piece::Slot(name.to_string()))
                } else if w.contains('{') || w.contains('}') {
                    Err(Error::Config(format!("slot placeholders must stand alone: `{w}`")))
                } else {
                    Ok(Piece::Literal(w.to_string(), tokenize(w).len()))
                }
            })
            .collect()
    }

    fn document<R: Rng + ?Sized>(&self, rng: &mut R, pick: &WeightedIndex<f64>) -> Result<SyntheticDocument> {
        let n = rng.random_range(self.sentences[0]..=self.sentences[1]);
        let (mut words, mut slots, mut at) = (Vec::new(), Vec::new(), 0usize);
        for _ in 0..n {
            let template = &self.templates[pick.sample(rng)];
            for piece in self.pieces(&template.text)? {
                match piece {
                    Piece::Literal(w, len) => {
                        words.push(w);
                        at += len;
                    }
                    Piece::Slot(name) => {
                        let spec = &self.slots[&name];
                        let value = spec.draw(rng)?;
                        let len = tokenize(&value).len();
                        if len == 1 {
                            slots.push(SlotMark { token: at, slot: name, continuous: spec.continuous });
                        }
                        words.push(value);
                        at += len;
                    }
                }
            }
        }
        let text = words.join(" ");
        let tokens = tokenize(&text);
        debug_assert_eq!(tokens.len(), at);
        Ok(SyntheticDocument { text, tokens, slots })
    }

    /// Generates and splits a corpus; fully determined by `seed`.
    pub fn generate(&self, seed: u64) -> Result<SyntheticCorpus> {
        let weights: Vec<f64> = self.templates.iter().map(|t| t.weight).collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("template weights: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = (0..self.documents)
            .map(|_| self.document(&mut rng, &pick))
            .collect::<Result<Vec<_>>>()?;
        let (train, dev, test) = split_documents(docs, self.dev_fraction, self.test_fraction, seed);
        Ok(SyntheticCorpus { train, dev, test })
    }
}

impl SyntheticCorpus {
    pub fn split(&self, name: &str) -> Option<&[SyntheticDocument]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Tokens of every document.
pub fn documents(docs: &[SyntheticDocument]) -> Vec<Document> {
    docs.iter().map(|d| d.tokens.clone()).collect()
}

/// One JSON array of slot marks per line.
pub fn slots_to_jsonl(docs: &[SyntheticDocument]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(&d.slots)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn slots_from_jsonl(text: &str) -> Result<Vec<Vec<SlotMark>>> {
    text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    const SPEC: &str = r#"
documents = 300
sentences = [1, 3]

[[templates]]
text = "the ejection fraction is {ef} %"
weight = 2

[[templates]]
text = "measured {w} x {h} mm"

[[templates]]
text = "{name} et al . {year}"

[slots.ef]
dist = "normal"
mean = 58
sd = 8
precision = 1
continuous = true

[slots.w]
dist = "uniform_int"
low = 1
high = 40

[slots.h]
dist = "uniform_int"
low = 1
high = 40

[slots.name]
dist = "choice"
values = ["smith", "jones", "wu"]

[slots.year]
dist = "uniform_int"
low = 1950
high = 2016
"#;

    #[test]
    fn fixed_seed_reproduces_the_corpus() {
        let spec = SynthSpec::parse(SPEC).unwrap();
        assert_eq!(spec.generate(4).unwrap(), spec.generate(4).unwrap());
        assert_ne!(spec.generate(4).unwrap(), spec.generate(5).unwrap());
        let c = spec.generate(4).unwrap();
        assert_eq!(c.train.len() + c.dev.len() + c.test.len(), 300);
    }

    #[test]
    fn slot_marks_point_at_the_drawn_tokens() {
        let c = SynthSpec::parse(SPEC).unwrap().generate(1).unwrap();
        for d in c.train.iter().chain(&c.test) {
            for m in &d.slots {
                let t = &d.tokens[m.token];
                assert_eq!(t.is_numeral(), m.slot != "name", "{t:?} {m:?}");
                if m.slot == "ef" {
                    assert!(m.continuous);
                    assert_eq!(t.precision(), Some(1));
                }
            }
        }
        let text = slots_to_jsonl(&c.dev).unwrap();
        let back = slots_from_jsonl(&text).unwrap();
        assert_eq!(back, c.dev.iter().map(|d| d.slots.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn sample_mean_matches_the_distribution() {
        let spec = SynthSpec::parse(&SPEC.replace("documents = 300", "documents = 3000")).unwrap();
        let c = spec.generate(9).unwrap();
        let values: Vec<f64> = c
            .train
            .iter()
            .chain(&c.dev)
            .chain(&c.test)
            .flat_map(|d| d.slots.iter().filter(|m| m.slot == "ef").map(|m| d.tokens[m.token].value().unwrap()))
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = spec.slots["ef"].mean().unwrap();
        assert!((mean - expected).abs() < 3.0 * sd / n.sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn small_cap_leaves_most_test_numerals_out_of_vocabulary() {
        let spec = r#"
documents = 1000
sentences = [1, 1]
[[templates]]
text = "value {x}"
[slots.x]
dist = "uniform_int"
low = 0
high = 499
"#;
        let c = SynthSpec::parse(spec).unwrap().generate(3).unwrap();
        let train = documents(&c.train);
        let vocab = Vocabulary::build(&train, 50).unwrap();
        let test = documents(&c.test);
        let nums: Vec<_> = test.iter().flatten().filter(|t| t.is_numeral()).collect();
        let oov = nums.iter().filter(|t| vocab.lookup(t).oov).count();
        assert!(oov as f64 / nums.len() as f64 > 0.8);
    }

    #[test]
    fn negative_draws_are_resampled() {
        let spec = r#"
documents = 200
sentences = [3, 3]
[[templates]]
text = "x {v}"
[slots.v]
dist = "normal"
mean = 0.5
sd = 2
precision = 2
"#;
        let c = SynthSpec::parse(spec).unwrap().generate(0).unwrap();
        for d in &c.train {
            assert!(d.tokens.iter().all(|t| t.surface != "-"));
            assert_eq!(d.slots.len(), 3);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SynthSpec::parse("documents = 1\nsentences = [1, 1]\ntemplates = []").is_err());
        let undefined = "documents = 1\nsentences = [1,1]\n[[templates]]\ntext = \"a {b}\"\n";
        assert!(SynthSpec::parse(undefined).is_err());
        let glued = "documents = 1\nsentences = [1,1]\n[[templates]]\ntext = \"a{b}\"\n[slots.b]\ndist = \"choice\"\nvalues = [\"x\"]\n";
        assert!(SynthSpec::parse(glued).is_err());
    }
}
