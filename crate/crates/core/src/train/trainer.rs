//! Per-document Adam training with early stopping on dev cross entropy.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compute::{AdamConfig, AdamState, Graph, Mode};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::model::LanguageModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Token-averaged training cross entropy, measured with dropout active.
    pub train_loss: f64,
    /// Token-averaged dev cross entropy; `None` without a dev split.
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev loss.
    pub model: LanguageModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Token-averaged negative log-likelihood in evaluation mode. Documents are
/// scored in parallel and reduced in order, so the value is reproducible.
pub fn corpus_loss(model: &LanguageModel, docs: &[Document]) -> Result<f64> {
    let per_doc: Vec<(f64, usize)> = docs
        .par_iter()
        .filter(|d| !d.is_empty())
        .map(|d| {
            let s = model.score_document(d)?;
            Ok((s.iter().map(|t| -t.log_prob).sum::<f64>(), s.len()))
        })
        .collect::<Result<_>>()?;
    let tokens: usize = per_doc.iter().map(|p| p.1).sum();
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(per_doc.iter().map(|p| p.0).sum::<f64>() / tokens as f64)
}

/// One pass over `docs` in a seeded order, one Adam step per document.
/// Returns the token-averaged training loss.
pub fn train_epoch(
    model: &mut LanguageModel,
    adam: &mut AdamState,
    docs: &[Document],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..docs.len()).filter(|&i| !docs[i].is_empty()).collect();
    order.shuffle(rng);
    let (mut total, mut tokens) = (0.0, 0usize);
    for i in order {
        let doc = &docs[i];
        let grads = {
            let mut g = Graph::new(&model.params);
            let loss = model.document_loss(&mut g, doc, Mode::Train, rng)?;
            let value = g.scalar_value(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { doc: i });
            }
            total += value * doc.len() as f64;
            tokens += doc.len();
            g.backward(loss)
        };
        adam.step(&mut model.params, &grads)?;
    }
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(total / tokens as f64)
}

/// Trains until the dev loss has not improved for `patience` epochs or
/// `max_epochs` is reached, and returns the best-dev parameters.
pub fn train(
    mut model: LanguageModel,
    opts: &TrainOptions,
    train_docs: &[Document],
    dev_docs: &[Document],
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(&model.params, opts.adam);
    let has_dev = dev_docs.iter().any(|d| !d.is_empty());
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut stale = 0;
    for epoch in 1..=opts.max_epochs {
        let train_loss = train_epoch(&mut model, &mut adam, train_docs, &mut rng)?;
        let dev_loss = if has_dev { Some(corpus_loss(&model, dev_docs)?) } else { None };
        info!(
            "{} epoch {epoch}: train {train_loss:.4} dev {}",
            model.kind,
            dev_loss.map_or("-".to_string(), |d| format!("{d:.4}"))
        );
        log.push(EpochLog { epoch, train_loss, dev_loss });
        let score = dev_loss.unwrap_or(train_loss);
        if !has_dev || score < best.0 {
            best = (score, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if has_dev && stale >= opts.patience {
                break;
            }
        }
    }
    if best.1 == 0 {
        // no epoch produced a finite score; keep the final parameters
        best.1 = log.len();
        best.2 = model.params.clone();
    }
    model.params = best.2;
    Ok(TrainOutcome { model, log, best_epoch: best.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocabulary};
    use crate::model::ModelKind;

    fn docs(lines: &[&str]) -> Vec<Document> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    fn softmax_model(train: &[Document], seed: u64) -> LanguageModel {
        let vocab = Vocabulary::build(train, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LanguageModel::new(ModelKind::Softmax, vocab, None, 16, 0.0, &mut rng).unwrap()
    }

    fn opts(max_epochs: usize, lr: f64) -> TrainOptions {
        TrainOptions {
            adam: AdamConfig { learning_rate: lr, ..AdamConfig::default() },
            patience: 3,
            max_epochs,
            seed: 1,
        }
    }

    #[test]
    fn first_epoch_loss_is_near_log_vocabulary_size() {
        let docs_train = docs(&["a b c d e f g h", "h g f e d c b a", "1 2 3 4 5"]);
        let model = softmax_model(&docs_train, 0);
        let ln_v = (model.vocab.len() as f64).ln();
        let loss = corpus_loss(&model, &docs_train).unwrap();
        assert!((loss - ln_v).abs() < 0.15 * ln_v, "{loss} vs {ln_v}");
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let docs_train = docs(&["the ef is 55 %", "the ef is 60 %", "size 3 x 4 mm"]);
        let dev = docs(&["the ef is 58 %"]);
        let a = train(softmax_model(&docs_train, 3), &opts(3, 1e-2), &docs_train, &dev).unwrap();
        let b = train(softmax_model(&docs_train, 3), &opts(3, 1e-2), &docs_train, &dev).unwrap();
        for ((_, p), (_, q)) in a.model.params.iter().zip(b.model.params.iter()) {
            assert!(p.data.iter().zip(&q.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn early_stopping_returns_the_best_dev_epoch() {
        let docs_train = docs(&["a a a a b", "a a a b a"]);
        // a dev split the training data actively misleads on
        let dev = docs(&["b b b b b b b b"]);
        let out = train(softmax_model(&docs_train, 2), &opts(30, 5e-2), &docs_train, &dev).unwrap();
        let best = out.log.iter().map(|e| e.dev_loss.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(out.log[out.best_epoch - 1].dev_loss.unwrap(), best);
        assert!(out.log.len() < 30);
        assert!(out.log.len() - out.best_epoch <= 3);
        let reloaded = corpus_loss(&out.model, &dev).unwrap();
        assert_eq!(reloaded, best);
    }

    #[test]
    fn softmax_memorises_ten_sentences() {
        // one document of ten sentences, so nothing is left unpredictable
        let docs_train = vec![docs(&[
            "the patient has an ejection fraction of 55 %",
            "no acute distress was noted",
            "the left ventricle measures 4.5 cm",
            "mild mitral regurgitation is present",
            "blood pressure was 120 / 80",
            "heart rate of 72 beats per minute",
            "the aortic root is normal",
            "smith et al . 2004 reported similar",
            "there is trace tricuspid regurgitation",
            "right atrium is 3.2 cm",
        ])
        .concat()];
        let out = train(softmax_model(&docs_train, 5), &opts(500, 1e-2), &docs_train, &[]).unwrap();
        let loss = corpus_loss(&out.model, &docs_train).unwrap();
        assert!(loss < 0.1, "training cross entropy {loss}");
    }
}
