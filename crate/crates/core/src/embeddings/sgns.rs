//! Skip-gram with negative sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, DEFAULT_DIM};
use crate::corpus::{build_vocabulary, Document};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    /// Starting learning rate; decays linearly towards zero over training.
    pub learning_rate: f64,
    pub subsample_threshold: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: DEFAULT_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            learning_rate: 0.025,
            subsample_threshold: 1e-3,
            seed: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::Config(
                "skip-gram dim, window, negatives, epochs and min_count must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || self.subsample_threshold < 0.0 {
            return Err(Error::Config(
                "skip-gram learning rate must be positive and the subsampling threshold non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// -ln σ(x), stable for large |x|
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn train_embeddings(docs: &[Document], cfg: &SkipGramConfig) -> Result<EmbeddingMatrix> {
    train_embeddings_with_losses(docs, cfg).map(|(emb, _)| emb)
}

/// Trains center vectors and also returns the mean per-pair SGNS loss of each epoch.
pub fn train_embeddings_with_losses(
    docs: &[Document],
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    cfg.validate()?;
    let vocab = build_vocabulary(docs, cfg.min_count)?;
    if vocab.num_words() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let dim = cfg.dim;
    let v = vocab.len();

    let sentences: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.tokens().iter().filter_map(|t| vocab.index_of(t)).collect())
        .collect();
    let total_words: u64 = vocab.counts().iter().sum();

    // Negatives come from the unigram distribution raised to 0.75; the
    // reserved rows have zero count and are never drawn.
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|e| Error::Invalid(e.to_string()))?;

    let keep_prob: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| {
            if cfg.subsample_threshold <= 0.0 || c == 0 {
                return 1.0;
            }
            let t = cfg.subsample_threshold * total_words as f64;
            let c = c as f64;
            (((c / t).sqrt() + 1.0) * t / c).min(1.0)
        })
        .collect();

    let mut init_rng = rng_for(cfg.seed, "sgns-init", 0);
    let mut input = vec![0.0; v * dim];
    for x in &mut input[2 * dim..] {
        *x = (init_rng.random::<f64>() - 0.5) / dim as f64;
    }
    let mut output = vec![0.0; v * dim];

    let mut rng = rng_for(cfg.seed, "sgns-train", 0);
    let total_steps = (cfg.epochs as u64 * total_words) as f64 + 1.0;
    let mut processed: u64 = 0;
    let mut grad_in = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut kept = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        for sentence in &sentences {
            processed += sentence.len() as u64;
            let alpha = cfg.learning_rate * (1.0 - processed as f64 / total_steps).max(1e-4);
            kept.clear();
            kept.extend(
                sentence
                    .iter()
                    .copied()
                    .filter(|&w| rng.random::<f64>() < keep_prob[w]),
            );
            for pos in 0..kept.len() {
                let center = kept[pos];
                let reach = cfg.window - rng.random_range(0..cfg.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = kept[ctx_pos];
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    let center_vec = center * dim..(center + 1) * dim;
                    for n in 0..=cfg.negatives {
                        let (target, label) = if n == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_vec = target * dim..(target + 1) * dim;
                        let score: f64 = input[center_vec.clone()]
                            .iter()
                            .zip(&output[out_vec.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        loss_sum += if label == 1.0 {
                            neg_log_sigmoid(score)
                        } else {
                            neg_log_sigmoid(-score)
                        };
                        let g = (label - sigmoid(score)) * alpha;
                        for ((acc, o), i) in grad_in
                            .iter_mut()
                            .zip(&mut output[out_vec])
                            .zip(&input[center_vec.clone()])
                        {
                            *acc += g * *o;
                            *o += g * i;
                        }
                    }
                    input[center_vec]
                        .iter_mut()
                        .zip(&grad_in)
                        .for_each(|(x, g)| *x += g);
                    pairs += 1;
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 };
        log::info!("skip-gram epoch {}: {pairs} pairs, mean loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }

    Ok((EmbeddingMatrix::new(vocab, dim, input)?, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SkipGramConfig {
        SkipGramConfig {
            dim: 16,
            min_count: 1,
            epochs: 2,
            ..SkipGramConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let docs: Vec<Document> = (0..50)
            .map(|i| Document::new(i.to_string(), "the cat sat on the mat with a hat"))
            .collect();
        let a = train_embeddings(&docs, &small_cfg()).unwrap();
        let b = train_embeddings(&docs, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = train_embeddings(&docs, &SkipGramConfig { seed: 9, ..small_cfg() }).unwrap();
        assert_ne!(a.vectors(), c.vectors());
        assert!(a.vectors().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let mut docs: Vec<Document> = (0..5).map(|i| Document::new(i.to_string(), "common")).collect();
        for i in 0..4 {
            docs.push(Document::new(format!("r{i}"), "rare"));
        }
        let emb = train_embeddings(&docs, &SkipGramConfig { min_count: 5, ..small_cfg() }).unwrap();
        assert!(emb.vocab().contains("common"));
        assert!(!emb.vocab().contains("rare"));
        assert_eq!(emb.dim(), 16);
        assert_eq!(emb.len(), 3);
    }

    #[test]
    fn empty_after_filtering_is_an_error() {
        let docs = vec![Document::new("1", "lonely words")];
        assert!(matches!(
            train_embeddings(&docs, &SkipGramConfig { min_count: 5, ..small_cfg() }),
            Err(Error::EmptyCorpus)
        ));
        assert!(train_embeddings(&[], &small_cfg()).is_err());
    }

    #[test]
    fn reserved_rows_stay_zero() {
        let docs: Vec<Document> = (0..20).map(|i| Document::new(i.to_string(), "a b c a b c")).collect();
        let emb = train_embeddings(&docs, &small_cfg()).unwrap();
        assert!(emb.row(0).iter().chain(emb.row(1)).all(|&v| v == 0.0));
    }
}
