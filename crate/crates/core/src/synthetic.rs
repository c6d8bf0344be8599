//! Seeded synthetic corpora for smoke runs and tests.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{build_vocabulary, Document, Vocabulary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::Result;
use crate::seed::rng_for;

const ENGLISH: &[&str] = &[
    "the", "people", "are", "going", "to", "city", "today", "news", "about", "match", "watch", "this", "video",
    "good", "morning", "friends", "new", "song", "movie", "was", "great", "time", "for", "dinner", "with",
    "family", "and", "work", "office", "rain",
];

const HINDI: &[&str] = &[
    "yaar", "kya", "hai", "bahut", "accha", "nahi", "kal", "aaj", "ghar", "chalo", "mast", "khana", "dost",
    "bhai", "sab", "log", "kaise", "ho", "matlab", "pyaar", "dekho", "zindagi", "baat", "sahi",
];

/// Words that only ever appear in positive documents.
pub const MARKERS: &[&str] = &["nafrat", "ganda", "bakwaas", "nikalo", "zeher", "gussa"];

/// Romanized Hindi word list used by the synthetic corpora, for building a
/// language lexicon.
pub fn hindi_words() -> Vec<&'static str> {
    HINDI.iter().chain(MARKERS).copied().collect()
}

/// Labeled documents separable by the presence of marker words: every
/// positive carries markers at two positions, no negative contains any.
/// Exactly half of the documents (rounded down) are positive.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = rng_for(seed, "separable", 0);
    let neutral: Vec<&str> = ENGLISH.iter().chain(HINDI).copied().collect();
    (0..n)
        .map(|i| {
            let positive = i % 2 == 1;
            let len = rng.random_range(5..=9);
            let mut words: Vec<&str> = (0..len).map(|_| *neutral.choose(&mut rng).unwrap()).collect();
            if positive {
                for at in rand::seq::index::sample(&mut rng, words.len(), 2) {
                    words[at] = MARKERS.choose(&mut rng).unwrap();
                }
            }
            Document::labeled(format!("s{i}"), words.join(" "), positive as u8)
        })
        .collect()
}

/// Code-mixed tweets with mentions, URLs, hashtags and retweets. Positives
/// usually, but not always, carry a marker word, so the task is learnable
/// without being trivial. About 37% of documents are positive.
pub fn code_mixed_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = rng_for(seed, "code-mixed", 0);
    (0..n)
        .map(|i| {
            let positive = rng.random_bool(0.37);
            let len = rng.random_range(6..=14);
            let mut words: Vec<String> = (0..len)
                .map(|_| {
                    let pool = if rng.random_bool(0.45) { HINDI } else { ENGLISH };
                    pool.choose(&mut rng).unwrap().to_string()
                })
                .collect();
            if positive && rng.random_bool(0.85) || !positive && rng.random_bool(0.08) {
                let at = rng.random_range(0..words.len());
                words[at] = MARKERS.choose(&mut rng).unwrap().to_string();
            }
            if rng.random_bool(0.3) {
                words.insert(0, format!("@user{}", rng.random_range(0..20)));
            }
            if rng.random_bool(0.2) {
                words.push(format!("#{}", HINDI.choose(&mut rng).unwrap()));
            }
            if rng.random_bool(0.15) {
                words.push(format!("https://t.co/x{}", rng.random_range(0..1000)));
            }
            let retweet = rng.random_bool(0.25);
            if retweet {
                words.insert(0, "RT".to_string());
            }
            Document {
                id: format!("t{i}"),
                text: words.join(" "),
                label: Some(positive as u8),
                is_retweet: Some(retweet),
            }
        })
        .collect()
}

/// Sentences drawn from two disjoint word clusters; each sentence uses words
/// of a single cluster only.
pub fn two_cluster_corpus(sentences: usize, seed: u64) -> (Vec<Document>, Vec<String>, Vec<String>) {
    let a: Vec<String> = (0..8).map(|i| format!("alpha{i}")).collect();
    let b: Vec<String> = (0..8).map(|i| format!("beta{i}")).collect();
    let mut rng = rng_for(seed, "two-cluster", 0);
    let docs = (0..sentences)
        .map(|i| {
            let cluster = if i % 2 == 0 { &a } else { &b };
            let words: Vec<&str> = (0..10).map(|_| cluster.choose(&mut rng).unwrap().as_str()).collect();
            Document::new(format!("c{i}"), words.join(" "))
        })
        .collect();
    (docs, a, b)
}

/// Embeddings drawn uniformly from (−0.5, 0.5) for every token
/// of `docs`; reserved rows are zero.
pub fn random_embeddings(docs: &[Document], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let vocab: Vocabulary = build_vocabulary(docs, 1)?;
    let mut rng = rng_for(seed, "random-embeddings", 0);
    let mut values = vec![0.0; vocab.len() * dim];
    for v in &mut values[2 * dim..] {
        *v = rng.random_range(-0.5..0.5);
    }
    EmbeddingMatrix::new(vocab, dim, values)
}
