//! Document ingestion, tokenization, vocabularies and corpus statistics.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const MENTION_TOKEN: &str = "<mention>";
pub const URL_TOKEN: &str = "<url>";

/// One short text, optionally labeled (1 = hate, 0 = non-hate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, rename = "retweet", skip_serializing_if = "Option::is_none")]
    pub is_retweet: Option<bool>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            is_retweet: None,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: u8) -> Self {
        Document {
            label: Some(label),
            ..Document::new(id, text)
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; ids must be unique
/// and non-empty, labels must be 0 or 1.
pub fn parse_corpus(source: &str, path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in source.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, line_no, format!("malformed document: {e}")))?;
        if doc.id.is_empty() {
            return Err(Error::parse(path, line_no, "empty document id"));
        }
        if let Some(label) = doc.label {
            if label > 1 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("label must be 0 or 1, got {label}"),
                ));
            }
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(
                path,
                line_no,
                format!("duplicate document id `{}`", doc.id),
            ));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&source, path)
}

pub fn write_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("documents always serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn token_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"<mention>|<url>|https?://\S+|www\.\S+|@\w+|#(\w+)|\w+|[^\w\s]+")
            .expect("token pattern compiles")
    })
}

/// Lowercases and splits social-media text.
///
/// Mentions become `<mention>`, URLs `<url>`, hashtags keep their word, and
/// runs of punctuation are emitted as single tokens. Re-tokenizing the
/// space-joined output reproduces it.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    token_pattern()
        .captures_iter(&lowered)
        .map(|caps| {
            let whole = caps.get(0).expect("group 0 always matches").as_str();
            if let Some(tag) = caps.get(1) {
                tag.as_str().to_string()
            } else if whole.starts_with('@') {
                MENTION_TOKEN.to_string()
            } else if whole.starts_with("http") && whole.contains("://") || whole.starts_with("www.")
            {
                URL_TOKEN.to_string()
            } else {
                whole.to_string()
            }
        })
        .collect()
}

/// True for tokens that carry a word: not a placeholder and not pure punctuation.
pub fn is_word_token(token: &str) -> bool {
    token != MENTION_TOKEN && token != URL_TOKEN && token.chars().any(char::is_alphanumeric)
}

/// Bidirectional token/index map with occurrence counts.
///
/// Index 0 is always `<pad>` and index 1 `<unk>`; the remaining tokens are
/// ordered by descending count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
}

impl Vocabulary {
    fn reserved_only(min_count: u64) -> Self {
        let mut vocab = Vocabulary {
            token_to_index: HashMap::new(),
            index_to_token: Vec::new(),
            counts: Vec::new(),
            min_count,
        };
        vocab.push(PAD_TOKEN.to_string(), 0);
        vocab.push(UNK_TOKEN.to_string(), 0);
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        self.token_to_index
            .insert(token.clone(), self.index_to_token.len());
        self.index_to_token.push(token);
        self.counts.push(count);
    }

    /// Rebuilds a vocabulary from an ordered token list (e.g. the rows of an
    /// embedding file). Reserved tokens are prepended when absent. Counts are
    /// unknown and recorded as zero.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let has_reserved = tokens.len() >= 2 && tokens[0] == PAD_TOKEN && tokens[1] == UNK_TOKEN;
        let mut vocab = Vocabulary::reserved_only(0);
        let rest = if has_reserved { &tokens[2..] } else { &tokens[..] };
        for token in rest {
            if vocab.token_to_index.contains_key(token) {
                return Err(Error::Invalid(format!("duplicate token `{token}`")));
            }
            vocab.push(token.clone(), 0);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    /// Number of tokens excluding `<pad>` and `<unk>`.
    pub fn num_words(&self) -> usize {
        self.len() - 2
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    /// Index of `token`, or `UNK` when it is missing.
    pub fn lookup(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(index).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

pub fn build_vocabulary(docs: &[Document], min_count: u64) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(Error::Config("min_count must be positive".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for token in doc.tokens() {
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

    let mut vocab = Vocabulary::reserved_only(min_count);
    for (token, count) in kept {
        vocab.push(token, count);
    }
    Ok(vocab)
}

/// Maps tokens through `vocab` into exactly `max_len` indices: truncated on
/// the right, right-padded with `PAD`.
pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(t.as_ref()))
        .collect();
    out.resize(max_len, PAD);
    out
}

pub fn encode(doc: &Document, vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    encode_tokens(&doc.tokens(), vocab, max_len)
}

/// Decides whether a token is Hindi. The lexicon is the default; an
/// API-backed identifier can implement this as well.
pub trait LanguageIdentifier {
    fn is_hindi(&self, token: &str) -> bool;
}

/// Romanized Hindi word forms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageLexicon {
    entries: HashSet<String>,
}

impl LanguageLexicon {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        LanguageLexicon {
            entries: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One word per line; `#` starts a comment.
    pub fn parse(source: &str, path: &Path) -> Result<Self> {
        let mut entries = HashSet::new();
        for (lineno, line) in source.lines().enumerate() {
            let word = line.split('#').next().unwrap_or("").trim();
            if word.is_empty() {
                continue;
            }
            if word.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("lexicon entry `{word}` contains whitespace"),
                ));
            }
            entries.insert(word.to_lowercase());
        }
        Ok(LanguageLexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&source, path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, word: &str) {
        self.entries.insert(word.to_lowercase());
    }
}

impl LanguageIdentifier for LanguageLexicon {
    fn is_hindi(&self, token: &str) -> bool {
        self.entries.contains(token)
    }
}

/// Fraction of word tokens identified as Hindi; 0 when there are no word tokens.
pub fn hindi_proportion<S: AsRef<str>>(tokens: &[S], identifier: &dyn LanguageIdentifier) -> f64 {
    let (words, hindi) = tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| is_word_token(t))
        .fold((0usize, 0usize), |(w, h), t| {
            (w + 1, h + usize::from(identifier.is_hindi(t)))
        });
    if words == 0 {
        0.0
    } else {
        hindi as f64 / words as f64
    }
}

/// Corpus-level statistics in the shape of a dataset-description table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_documents: usize,
    pub num_retweets: usize,
    pub total_tokens: usize,
    /// Distinct non-reserved tokens.
    pub vocab_size: usize,
    pub pct_hindi_tokens_mean: f64,
}

impl CorpusStats {
    /// (label, value) rows in display order.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("Number of Documents", self.num_documents.to_string()),
            ("Number of Retweets", self.num_retweets.to_string()),
            ("Total Number of Words", self.total_tokens.to_string()),
            ("Size of Vocabulary", self.vocab_size.to_string()),
            (
                "% Hindi Words per Document",
                format!("{:.2}", self.pct_hindi_tokens_mean),
            ),
        ]
    }
}

pub fn corpus_stats(
    docs: &[Document],
    vocab: &Vocabulary,
    identifier: &dyn LanguageIdentifier,
) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total_tokens = 0;
    let mut pct_sum = 0.0;
    for doc in docs {
        let tokens = doc.tokens();
        total_tokens += tokens.len();
        pct_sum += hindi_proportion(&tokens, identifier) * 100.0;
    }
    Ok(CorpusStats {
        num_documents: docs.len(),
        num_retweets: docs.iter().filter(|d| d.is_retweet == Some(true)).count(),
        total_tokens,
        vocab_size: vocab.num_words(),
        pct_hindi_tokens_mean: pct_sum / docs.len() as f64,
    })
}
