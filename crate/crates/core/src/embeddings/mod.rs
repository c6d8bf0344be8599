//! Word embeddings: training, text-format persistence and similarity probes.

mod sgns;

pub use sgns::{train_embeddings, train_embeddings_with_losses, SkipGramConfig};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{Vocabulary, PAD_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_DIM: usize = 300;

/// Vocabulary-aligned `V×dim` matrix of word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if vectors.len() != vocab.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} tokens of dimension {dim}",
                vectors.len(),
                vocab.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingMatrix { vocab, dim, vectors })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.index_of(token).map(|i| self.row(i))
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), self.dim, self.vectors.clone()).expect("shape checked at construction")
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with {} and {} components",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn lookup<'e>(emb: &'e EmbeddingMatrix, token: &str) -> Result<&'e [f64]> {
    emb.vector(token)
        .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSimilarity {
    pub mean: f64,
    pub used: Vec<String>,
    pub skipped: Vec<String>,
}

/// Mean cosine between `reference` and each in-vocabulary member of `group`.
pub fn group_similarity<S: AsRef<str>>(
    reference: &str,
    group: &[S],
    emb: &EmbeddingMatrix,
) -> Result<GroupSimilarity> {
    let anchor = lookup(emb, reference)?;
    let mut total = 0.0;
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for word in group.iter().map(AsRef::as_ref) {
        match emb.vector(word) {
            Some(v) => {
                total += cosine_similarity(anchor, v)?;
                used.push(word.to_string());
            }
            None => skipped.push(word.to_string()),
        }
    }
    if used.is_empty() {
        return Err(Error::OutOfVocabulary(format!(
            "every group token ({})",
            skipped.join(", ")
        )));
    }
    Ok(GroupSimilarity {
        mean: total / used.len() as f64,
        used,
        skipped,
    })
}

/// Splits `words` into (present, missing) by vocabulary membership, keeping order.
pub fn coverage_check<S: AsRef<str>>(words: &[S], emb: &EmbeddingMatrix) -> (Vec<String>, Vec<String>) {
    words
        .iter()
        .map(|w| w.as_ref().to_string())
        .partition(|w| emb.vocab().contains(w))
}

/// The `k` tokens most cosine-similar to `word`, excluding itself and
/// zero vectors. Ties are broken lexicographically.
pub fn nearest_neighbors(word: &str, k: usize, emb: &EmbeddingMatrix) -> Result<Vec<(String, f64)>> {
    let query_index = emb
        .vocab()
        .index_of(word)
        .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
    if k == 0 || k >= emb.len() {
        return Err(Error::Invalid(format!(
            "k must be in [1, {}), got {k}",
            emb.len()
        )));
    }
    let query = emb.row(query_index);
    let mut scored = Vec::with_capacity(emb.len());
    for (i, token) in emb.vocab().tokens().iter().enumerate() {
        if i == query_index {
            continue;
        }
        match cosine_similarity(query, emb.row(i)) {
            Ok(sim) => scored.push((token.clone(), sim)),
            Err(Error::UndefinedSimilarity) => continue,
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Writes the word-vector text format: a `V d` header, then one
/// `token v1 … vd` line per row. Values use the shortest decimal form that
/// parses back to the same bits.
pub fn save_embeddings(emb: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_embeddings(emb)).map_err(|e| Error::io(path, e))
}

pub fn format_embeddings(emb: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", emb.len(), emb.dim()).unwrap();
    for (i, token) in emb.vocab().tokens().iter().enumerate() {
        out.push_str(token);
        for v in emb.row(i) {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&source, path)
}

/// Parses the word-vector text format. Files without leading `<pad>` and
/// `<unk>` rows get zero rows prepended for them.
pub fn parse_embeddings(source: &str, path: &Path) -> Result<EmbeddingMatrix> {
    let mut lines = source.lines().enumerate();
    let (rows, dim) = match lines.next() {
        Some((_, header)) => {
            let fields: Vec<&str> = header.split_whitespace().collect();
            match fields[..] {
                [v, d] => match (v.parse::<usize>(), d.parse::<usize>()) {
                    (Ok(v), Ok(d)) if d > 0 => (v, d),
                    _ => return Err(Error::parse(path, 1, format!("malformed header `{header}`"))),
                },
                _ => return Err(Error::parse(path, 1, format!("malformed header `{header}`"))),
            }
        }
        None => return Err(Error::parse(path, 1, "missing header")),
    };

    let mut tokens = Vec::with_capacity(rows);
    let mut values = Vec::with_capacity(rows * dim);
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in lines {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a field");
        let row: Vec<&str> = fields.collect();
        if row.len() != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("token `{token}` has {} values, header declares {dim}", row.len()),
            ));
        }
        for field in row {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("invalid number `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite value `{field}`")));
            }
            values.push(v);
        }
        if !seen.insert(token.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate token `{token}`")));
        }
        tokens.push(token.to_string());
    }
    if tokens.len() != rows {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {rows} rows, found {}", tokens.len()),
        ));
    }

    let has_reserved = tokens.len() >= 2 && tokens[0] == PAD_TOKEN && tokens[1] == UNK_TOKEN;
    if !has_reserved {
        if let Some(pos) = tokens.iter().position(|t| t == PAD_TOKEN || t == UNK_TOKEN) {
            return Err(Error::parse(
                path,
                pos + 2,
                format!("reserved token `{}` must occupy the first rows", tokens[pos]),
            ));
        }
        let mut padded = vec![0.0; 2 * dim];
        padded.extend_from_slice(&values);
        values = padded;
    }
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    EmbeddingMatrix::new(vocab, dim, values)
}

/// Group word lists, one group per line: `name: word word …`.
pub fn parse_groups(source: &str, path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let mut groups = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, words) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected `name: word word …`"))?;
        let words: Vec<String> = words.split_whitespace().map(str::to_lowercase).collect();
        if name.trim().is_empty() || words.is_empty() {
            return Err(Error::parse(path, lineno + 1, "group needs a name and at least one word"));
        }
        groups.push((name.trim().to_string(), words));
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub group_name: String,
    pub domain_similarity: f64,
    pub general_similarity: Option<f64>,
}

/// Reference-word vs. group similarities for a domain embedding and,
/// optionally, a general-purpose one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub reference_word: String,
    pub rows: Vec<SimilarityRow>,
}

impl SimilarityReport {
    /// Fails when `reference` or an entire group is missing from `domain`.
    /// Gaps in `general` leave that cell empty.
    pub fn build(
        reference: &str,
        groups: &[(String, Vec<String>)],
        domain: &EmbeddingMatrix,
        general: Option<&EmbeddingMatrix>,
    ) -> Result<Self> {
        let mut rows = Vec::with_capacity(groups.len());
        for (name, words) in groups {
            let domain_sim = group_similarity(reference, words, domain)?;
            if !domain_sim.skipped.is_empty() {
                log::warn!(
                    "group `{name}`: skipped out-of-vocabulary tokens {:?}",
                    domain_sim.skipped
                );
            }
            let general_similarity = match general {
                Some(g) => match group_similarity(reference, words, g) {
                    Ok(s) => Some(s.mean),
                    Err(e) => {
                        log::warn!("group `{name}` has no similarity in the general embedding: {e}");
                        None
                    }
                },
                None => None,
            };
            rows.push(SimilarityRow {
                group_name: name.clone(),
                domain_similarity: domain_sim.mean,
                general_similarity,
            });
        }
        Ok(SimilarityReport {
            reference_word: reference.to_string(),
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group_name,domain_similarity,general_similarity\n");
        for row in &self.rows {
            let general = row
                .general_similarity
                .map(|g| format!("{g:.6}"))
                .unwrap_or_default();
            writeln!(out, "{},{:.6},{general}", row.group_name, row.domain_similarity).unwrap();
        }
        out
    }
}
