//! Assembly and serialization of a full evaluation run.

use serde::{Deserialize, Serialize, Serializer};

use crate::corpus::{numeral_values, Document, TokenKind};
use crate::error::Result;
use crate::eval::analysis::{corpus_digit_distribution, model_leading_digits, BenfordTable};
use crate::eval::numberline::{
    build_candidate_set, choose_decimal_limit, predict_numerals, regression_metrics, score_corpus, Prediction,
    RegressionMetrics,
};
use crate::eval::perplexity::{adjusted_perplexity, perplexity, ClassFilter, OovSets};
use crate::model::LanguageModel;

/// Share of training numerals the decimal limit must cover.
pub const DEFAULT_COVERAGE: f64 = 0.9;

/// Writes non-finite values as the string `"inf"` (JSON has no infinity).
fn finite_or_inf<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(_) => s.serialize_str("inf"),
        None => s.serialize_none(),
    }
}

fn de_finite_or_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    Ok(match Option::<Raw>::deserialize(d)? {
        None => None,
        Some(Raw::Num(x)) => Some(x),
        Some(Raw::Text(t)) if t == "inf" => Some(f64::INFINITY),
        Some(Raw::Text(t)) => return Err(serde::de::Error::custom(format!("unexpected value {t:?}"))),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ByClass {
    #[serde(serialize_with = "finite_or_inf", deserialize_with = "de_finite_or_inf")]
    pub words: Option<f64>,
    #[serde(serialize_with = "finite_or_inf", deserialize_with = "de_finite_or_inf")]
    pub numerals: Option<f64>,
    #[serde(serialize_with = "finite_or_inf", deserialize_with = "de_finite_or_inf")]
    pub all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OovSummary {
    /// Which split the OOV types were counted on.
    pub scope: String,
    pub words: usize,
    pub numerals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub size: usize,
    pub n: u32,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenfordSummary {
    pub reference: Vec<f64>,
    pub corpus: Vec<f64>,
    pub model: Option<Vec<f64>>,
    pub tv_corpus: f64,
    pub tv_model: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub tokens: usize,
    pub pp: ByClass,
    pub app: ByClass,
    pub reg: Option<RegressionMetrics>,
    pub candidates: CandidateSummary,
    pub oov: OovSummary,
    pub benford: Option<BenfordSummary>,
    pub artifacts: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

/// Scores `test`, decodes its numerals against candidates built from
/// `train`, and summarizes everything in an [`EvalReport`]. `include`
/// restricts which numeral positions enter the regression metrics.
pub fn evaluate<F>(
    model: &LanguageModel,
    train: &[Document],
    test: &[Document],
    coverage: f64,
    include: F,
) -> Result<Evaluation>
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let scores = score_corpus(model, test)?;
    let flat: Vec<_> = scores.iter().flatten().cloned().collect();
    let oov = OovSets::from_corpus(&model.vocab, test);

    let pp = ByClass {
        words: perplexity(&flat, ClassFilter::Words),
        numerals: perplexity(&flat, ClassFilter::Numerals),
        all: perplexity(&flat, ClassFilter::All),
    };
    let app = ByClass {
        words: adjusted_perplexity(&flat, ClassFilter::Words, &oov)?,
        numerals: adjusted_perplexity(&flat, ClassFilter::Numerals, &oov)?,
        all: adjusted_perplexity(&flat, ClassFilter::All, &oov)?,
    };

    let precisions: Vec<u32> = train.iter().flatten().filter_map(|t| t.precision()).collect();
    let n = choose_decimal_limit(&precisions, coverage)?;
    let candidates = build_candidate_set(&numeral_values(train), &model.vocab, n)?;
    let predictions = predict_numerals(model, test, &scores, &candidates, include)?;
    let reg = if predictions.is_empty() {
        None
    } else {
        let (t, p): (Vec<f64>, Vec<f64>) = predictions.iter().map(|x| (x.truth, x.predicted)).unzip();
        Some(regression_metrics(&t, &p)?)
    };

    let surfaces = test.iter().flatten().filter(|t| t.kind == TokenKind::Numeral).map(|t| t.surface.as_str());
    let benford = match corpus_digit_distribution(surfaces, 1) {
        Ok(corpus) => {
            let mut table = BenfordTable::new(1)?;
            table.corpus = Some(corpus);
            if model.digit_head().is_some() {
                table.model = Some(model_leading_digits(model, test)?.to_vec());
            }
            Some(BenfordSummary {
                tv_corpus: table.tv_corpus().expect("corpus column"),
                tv_model: table.tv_model(),
                reference: table.reference,
                corpus: table.corpus.expect("corpus column"),
                model: table.model,
            })
        }
        Err(_) => None,
    };

    Ok(Evaluation {
        report: EvalReport {
            model: model.kind.name().to_string(),
            tokens: flat.len(),
            pp,
            app,
            reg,
            candidates: CandidateSummary { size: candidates.len(), n, coverage },
            oov: OovSummary { scope: "test".into(), words: oov.words.len(), numerals: oov.numerals.len() },
            benford,
            artifacts: Vec::new(),
        },
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocabulary};
    use crate::gmm::{Component, ComponentBank};
    use crate::model::ModelKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn docs() -> (Vec<Document>, Vec<Document>) {
        (
            vec![tokenize("the ef is 60 and 55.5"), tokenize("the hr is 72")],
            vec![tokenize("the ef is 61 and 7"), tokenize("the bp is 120")],
        )
    }

    fn model(kind: ModelKind) -> LanguageModel {
        let (train, _) = docs();
        let vocab = Vocabulary::build(train.iter(), 100).unwrap();
        let bank = kind.needs_bank().then(|| {
            ComponentBank::new(vec![
                Component { mean: 60.0, variance: 100.0, source_k: 2 },
                Component { mean: 10.0, variance: 25.0, source_k: 2 },
            ])
        });
        LanguageModel::new(kind, vocab, bank, 5, 0.1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn report_has_every_field_and_sane_values() {
        let (train, test) = docs();
        for kind in ModelKind::ALL {
            let m = model(kind);
            let e = evaluate(&m, &train, &test, DEFAULT_COVERAGE, |_, _| true).unwrap();
            let r = &e.report;
            assert_eq!(e.predictions.len(), 3);
            assert!(r.pp.all.unwrap() >= 1.0);
            for (pp, app) in [(r.pp.words, r.app.words), (r.pp.numerals, r.app.numerals), (r.pp.all, r.app.all)] {
                assert!(app.unwrap() >= pp.unwrap() * (1.0 - 1e-12), "{kind}");
            }
            if kind.is_open_vocabulary() {
                assert_eq!(r.pp.numerals, r.app.numerals, "{kind}");
            }
            assert_eq!(r.oov.numerals, 3);
            assert_eq!(r.benford.as_ref().unwrap().model.is_some(), m.digit_head().is_some());
            let json = r.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            for path in ["/pp/words", "/app/all", "/reg/rmse", "/reg/mape", "/reg/excluded_zero_targets", "/candidates/size", "/benford/tv_corpus"] {
                assert!(v.pointer(path).is_some(), "{path}");
            }
            assert_eq!(&EvalReport::from_json(&json).unwrap(), r);
        }
    }

    #[test]
    fn infinite_values_serialize_as_text() {
        let b = ByClass { words: Some(f64::INFINITY), numerals: None, all: Some(2.0) };
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"words":"inf","numerals":null,"all":2.0}"#);
        let back: ByClass = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn include_filter_limits_predictions() {
        let (train, test) = docs();
        let m = model(ModelKind::HSoftmax);
        let e = evaluate(&m, &train, &test, DEFAULT_COVERAGE, |d, _| d == 1).unwrap();
        assert_eq!(e.predictions.len(), 1);
        assert_eq!(e.report.reg.unwrap().count, 1);
    }
}
