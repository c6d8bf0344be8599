//! Cross-validation, confusion-matrix metrics and report rendering.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::models::{ClassifierModel, ModelSpec};
use crate::seed::{derive_seed, rng_for};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// Percent-scale metrics. A ratio with a zero denominator is reported as 0.
    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64, what: &str| {
            if den == 0 {
                log::warn!("{what} is undefined (no {what} denominator); reporting 0");
                0.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        let precision = ratio(self.tp, self.tp + self.fp, "precision");
        let recall = ratio(self.tp, self.tp + self.fn_, "recall");
        let f_score = if precision > 0.0 && recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let accuracy = ratio(self.tp + self.tn, self.total(), "accuracy");
        Metrics {
            precision,
            recall,
            f_score,
            accuracy,
        }
    }
}

/// Precision, recall, F-score and accuracy, all in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn values(&self) -> [f64; 4] {
        [self.precision, self.recall, self.f_score, self.accuracy]
    }

    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len().max(1) as f64;
        let sum = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Metrics {
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f_score: sum(|m| m.f_score),
            accuracy: sum(|m| m.accuracy),
        }
    }
}

pub fn confusion_matrix(probs: &[f64], gold: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    if probs.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} probabilities for {} gold labels",
            probs.len(),
            gold.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(gold) {
        match (p >= threshold, y) {
            (true, 1) => cm.tp += 1,
            (true, 0) => cm.fp += 1,
            (false, 1) => cm.fn_ += 1,
            (false, 0) => cm.tn += 1,
            (_, other) => return Err(Error::Invalid(format!("label {other} is not binary"))),
        }
    }
    Ok(cm)
}

/// Predicts 1 when the probability is at least `threshold`.
pub fn compute_metrics(probs: &[f64], gold: &[u8], threshold: f64) -> Result<(ConfusionMatrix, Metrics)> {
    let cm = confusion_matrix(probs, gold, threshold)?;
    Ok((cm, cm.metrics()))
}

/// Fold index for every sample, by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

/// Shuffles each class with a seeded generator and deals it round-robin over
/// the folds. Dealing continues from where the previous class stopped so that
/// overall fold sizes also stay within one of each other.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the number of samples ({})",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Invalid(format!("label {bad} is not binary")));
    }
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng_for(seed, "folds", class as u64));
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, seed, folds })
}

fn gold_labels(docs: &[Document]) -> Result<Vec<u8>> {
    docs.iter()
        .map(|d| match d.label {
            Some(y @ (0 | 1)) => Ok(y),
            Some(y) => Err(Error::Invalid(format!("document {}: label {y} is not binary", d.id))),
            None => Err(Error::Invalid(format!("document {} has no label", d.id))),
        })
        .collect()
}

/// Trained model plus the mean training-mode batch loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: ClassifierModel,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam for exactly `spec.epochs` epochs. Samples are reshuffled
/// every epoch; the last batch may be short.
pub fn train_model(
    spec: &ModelSpec,
    train_docs: &[Document],
    embeddings: &EmbeddingMatrix,
    seed: u64,
) -> Result<TrainedModel> {
    if train_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let targets: Vec<f64> = gold_labels(train_docs)?.into_iter().map(f64::from).collect();
    let mut model = ClassifierModel::new(spec.clone(), embeddings, seed)?;
    let encoded: Vec<Vec<usize>> = train_docs.iter().map(|d| model.encode(d)).collect();
    let mut dropout_rng = rng_for(seed, "dropout", 0);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng_for(seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let seqs: Vec<&[usize]> = batch.iter().map(|&i| encoded[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            total += model.train_step(&seqs, &ys, &mut dropout_rng)? * batch.len() as f64;
        }
        let mean = total / encoded.len() as f64;
        log::info!(
            "{} epoch {}/{}: mean training loss {mean:.6}",
            spec.architecture.label(),
            epoch + 1,
            spec.epochs
        );
        epoch_losses.push(mean);
    }
    Ok(TrainedModel { model, epoch_losses })
}

/// Anything that can be trained on one fold and score the held-out fold.
pub trait FoldLearner: Sync {
    fn name(&self) -> String;

    fn fit_predict(&self, train: &[Document], test: &[Document], seed: u64) -> Result<Vec<f64>>;
}

pub struct NeuralLearner<'a> {
    pub spec: ModelSpec,
    pub embeddings: &'a EmbeddingMatrix,
}

impl FoldLearner for NeuralLearner<'_> {
    fn name(&self) -> String {
        self.spec.architecture.label().to_string()
    }

    fn fit_predict(&self, train: &[Document], test: &[Document], seed: u64) -> Result<Vec<f64>> {
        let trained = train_model(&self.spec, train, self.embeddings, seed)?;
        trained.model.predict_proba(test)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Arithmetic mean of the per-fold metrics.
    #[default]
    Mean,
    /// Metrics of the confusion matrix pooled over all folds.
    Pooled,
}

impl Aggregation {
    pub fn key(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Pooled => "pooled",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "pooled" => Ok(Aggregation::Pooled),
            _ => Err(Error::Config(format!("unknown aggregation `{s}`; use mean or pooled"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub jobs: usize,
    pub threshold: f64,
}

impl CvOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        CvOptions {
            k,
            seed,
            jobs: 1,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_jobs(self, jobs: usize) -> Self {
        CvOptions { jobs, ..self }
    }

    /// Seed handed to the learner for `fold`.
    pub fn fold_seed(&self, fold: usize) -> u64 {
        derive_seed(self.seed, "fold", fold as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub fold: usize,
    pub label: u8,
    pub probability: f64,
}

/// Cross-validation outcome for one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureResult {
    pub architecture: String,
    pub folds: Vec<FoldResult>,
    pub mean: Metrics,
    pub pooled: Metrics,
    /// One entry per document, in corpus order.
    pub predictions: Vec<Prediction>,
}

impl ArchitectureResult {
    pub fn summary(&self, aggregation: Aggregation) -> Metrics {
        match aggregation {
            Aggregation::Mean => self.mean,
            Aggregation::Pooled => self.pooled,
        }
    }
}

/// Trains on k−1 folds and scores the held-out fold, k times. Folds may run
/// on up to `opts.jobs` threads; results are always assembled in fold order.
pub fn cross_validate(learner: &dyn FoldLearner, docs: &[Document], opts: &CvOptions) -> Result<ArchitectureResult> {
    let gold = gold_labels(docs)?;
    let assignment = stratified_kfold(&gold, opts.k, opts.seed)?;
    let run_fold = |fold: usize| -> Result<(FoldResult, Vec<usize>, Vec<f64>)> {
        let train: Vec<Document> = assignment
            .train_indices(fold)
            .into_iter()
            .map(|i| docs[i].clone())
            .collect();
        let test_idx = assignment.test_indices(fold);
        let test: Vec<Document> = test_idx.iter().map(|&i| docs[i].clone()).collect();
        let seed = opts.fold_seed(fold);
        log::info!("{}: fold {}/{}", learner.name(), fold + 1, opts.k);
        let probs = learner.fit_predict(&train, &test, seed)?;
        let test_gold: Vec<u8> = test_idx.iter().map(|&i| gold[i]).collect();
        let (confusion, metrics) = compute_metrics(&probs, &test_gold, opts.threshold)?;
        Ok((
            FoldResult {
                fold,
                seed,
                confusion,
                metrics,
            },
            test_idx,
            probs,
        ))
    };

    let outcomes: Vec<_> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot start worker threads: {e}")))?;
        pool.install(|| (0..opts.k).into_par_iter().map(run_fold).collect())
    } else {
        (0..opts.k).map(run_fold).collect()
    };

    let mut folds = Vec::with_capacity(opts.k);
    let mut predictions: Vec<Option<Prediction>> = vec![None; docs.len()];
    for outcome in outcomes {
        let (result, test_idx, probs) = outcome?;
        for (i, p) in test_idx.into_iter().zip(probs) {
            predictions[i] = Some(Prediction {
                id: docs[i].id.clone(),
                fold: result.fold,
                label: gold[i],
                probability: p,
            });
        }
        folds.push(result);
    }
    let fold_metrics: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    let pooled = folds
        .iter()
        .fold(ConfusionMatrix::default(), |acc, f| acc.merge(&f.confusion))
        .metrics();
    Ok(ArchitectureResult {
        architecture: learner.name(),
        mean: Metrics::mean(&fold_metrics),
        pooled,
        folds,
        predictions: predictions
            .into_iter()
            .map(|p| p.expect("every document lies in exactly one fold"))
            .collect(),
    })
}

/// Provenance recorded next to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub toolkit_version: String,
    pub master_seed: u64,
    pub fold_seeds: Vec<u64>,
    pub k: usize,
    pub stratified: bool,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub bce_epsilon: f64,
    pub corpus_sha256: String,
    pub num_documents: usize,
    pub specs: Vec<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub results: Vec<ArchitectureResult>,
    pub metadata: RunMetadata,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

pub const CSV_HEADER: &str = "architecture,fold,P,R,F,A";

/// Table: one row per architecture with its aggregated metrics. CSV: every
/// fold row followed by an aggregate row labelled `mean` or `pooled`.
pub fn render_report(results: &[ArchitectureResult], aggregation: Aggregation, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Table => {
            let width = results
                .iter()
                .map(|r| r.architecture.len())
                .max()
                .unwrap_or(0)
                .max("Model".len());
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
                "Model", "P(%)", "R(%)", "F(%)", "A(%)"
            );
            for r in results {
                let [p, rc, f, a] = r.summary(aggregation).values();
                let _ = writeln!(
                    out,
                    "{:<width$}  {p:>7.2}  {rc:>7.2}  {f:>7.2}  {a:>7.2}",
                    r.architecture
                );
            }
        }
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            let mut row = |name: &str, fold: &str, m: &Metrics| {
                let [p, rc, f, a] = m.values();
                let _ = writeln!(out, "{name},{fold},{p:.2},{rc:.2},{f:.2},{a:.2}");
            };
            for r in results {
                for f in &r.folds {
                    row(&r.architecture, &(f.fold + 1).to_string(), &f.metrics);
                }
                row(&r.architecture, aggregation.key(), &r.summary(aggregation));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub architecture: String,
    /// Fold number (1-based) or the aggregate label.
    pub fold: String,
    pub metrics: Metrics,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let here = std::path::Path::new("<report>");
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::parse(here, 1, format!("expected header `{CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::parse(here, i + 2, "expected 6 fields"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(here, i + 2, format!("`{s}` is not a number")))
            };
            Ok(ReportRow {
                architecture: fields[0].to_string(),
                fold: fields[1].to_string(),
                metrics: Metrics {
                    precision: num(fields[2])?,
                    recall: num(fields[3])?,
                    f_score: num(fields[4])?,
                    accuracy: num(fields[5])?,
                },
            })
        })
        .collect()
}
