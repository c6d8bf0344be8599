//! CNN-1D, LSTM and BiLSTM binary classifiers over word embeddings.
//!
//! All three share the same head: global max pooling over time, dropout,
//! one dense unit and a sigmoid.

pub mod layers;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode, Document, Vocabulary, PAD};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tensor::{read_params, write_params, AdamConfig, Parameter, Tape, Tensor, Var};
use layers::{bilstm_forward, conv1d_forward, global_max_pool, lstm_sequence, Conv1dLayer, LstmCell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cnn1d,
    Lstm,
    Bilstm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Cnn1d, Architecture::Lstm, Architecture::Bilstm];

    /// Name used on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Architecture::Cnn1d => "cnn1d",
            Architecture::Lstm => "lstm",
            Architecture::Bilstm => "bilstm",
        }
    }

    /// Name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Cnn1d => "CNN-1D",
            Architecture::Lstm => "LSTM",
            Architecture::Bilstm => "BiLSTM",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.key() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown architecture `{s}`; valid names: cnn1d, lstm, bilstm"
                ))
            })
    }
}

/// Architecture plus its full hyperparameter bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub filter_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub recurrent_dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub embeddings_trainable: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(architecture: Architecture) -> Self {
        ModelSpec {
            architecture,
            embedding_dim: 300,
            filter_sizes: vec![2, 3, 4],
            filters_per_size: 64,
            lstm_units: 100,
            dropout_rate: 0.5,
            recurrent_dropout_rate: 0.2,
            batch_size: 64,
            epochs: 5,
            max_len: 64,
            embeddings_trainable: true,
            learning_rate: 0.001,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.embedding_dim == 0 || self.max_len == 0 || self.batch_size == 0 {
            return fail("embedding_dim, max_len and batch_size must be positive".into());
        }
        if self.architecture == Architecture::Cnn1d {
            if self.filter_sizes.is_empty() || self.filters_per_size == 0 {
                return fail("CNN needs at least one filter size and one filter per size".into());
            }
            if let Some(&h) = self.filter_sizes.iter().find(|&&h| h == 0 || h > self.max_len) {
                return fail(format!("filter size {h} must lie in [1, max_len = {}]", self.max_len));
            }
        } else if self.lstm_units == 0 {
            return fail("lstm_units must be positive".into());
        }
        for (name, rate) in [
            ("dropout_rate", self.dropout_rate),
            ("recurrent_dropout_rate", self.recurrent_dropout_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return fail(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }

    /// Width of the pooled feature vector fed to the output unit.
    pub fn pooled_width(&self) -> usize {
        match self.architecture {
            Architecture::Cnn1d => self.filter_sizes.len() * self.filters_per_size,
            Architecture::Lstm => self.lstm_units,
            Architecture::Bilstm => 2 * self.lstm_units,
        }
    }

    /// Parameter names and shapes in storage order for a vocabulary of `vocab_size`.
    pub fn parameter_shapes(&self, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
        let d = self.embedding_dim;
        let u = self.lstm_units;
        let mut shapes = vec![("embedding".to_string(), vec![vocab_size, d])];
        let lstm = |prefix: &str| {
            vec![
                (format!("{prefix}.input_weights"), vec![d, 4 * u]),
                (format!("{prefix}.recurrent_weights"), vec![u, 4 * u]),
                (format!("{prefix}.bias"), vec![4 * u]),
            ]
        };
        match self.architecture {
            Architecture::Cnn1d => {
                for &h in &self.filter_sizes {
                    shapes.push((format!("conv{h}.weight"), vec![h * d, self.filters_per_size]));
                    shapes.push((format!("conv{h}.bias"), vec![self.filters_per_size]));
                }
            }
            Architecture::Lstm => shapes.extend(lstm("lstm")),
            Architecture::Bilstm => {
                shapes.extend(lstm("lstm_fwd"));
                shapes.extend(lstm("lstm_bwd"));
            }
        }
        shapes.push(("dense.weight".to_string(), vec![self.pooled_width(), 1]));
        shapes.push(("dense.bias".to_string(), vec![1]));
        shapes
    }
}

fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

/// `rows×cols` matrix with orthonormal rows (`rows ≤ cols`), from
/// Gram-Schmidt on Gaussian rows.
fn orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Tensor::matrix(rows, cols, basis.concat()).expect("length matches shape")
}

/// A trained or freshly initialized classifier together with the
/// vocabulary its embedding table is aligned to.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    spec: ModelSpec,
    vocab: Vocabulary,
    params: Vec<Parameter>,
}

const CHECKPOINT_TAG: &str = "codemix-model 1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: ModelSpec,
    vocabulary: Vec<String>,
}

impl ClassifierModel {
    /// Initializes weights from `seed`; the embedding table starts as a copy of
    /// `embeddings` with the padding row zeroed.
    pub fn new(spec: ModelSpec, embeddings: &EmbeddingMatrix, seed: u64) -> Result<Self> {
        spec.validate()?;
        if embeddings.dim() != spec.embedding_dim {
            return Err(Error::Config(format!(
                "embedding file has dimension {}, model expects {}",
                embeddings.dim(),
                spec.embedding_dim
            )));
        }
        let mut rng = rng_for(seed, "init", 0);
        let d = spec.embedding_dim;
        let u = spec.lstm_units;
        let mut params = Vec::new();
        for (name, shape) in spec.parameter_shapes(embeddings.len()) {
            let value = if name == "embedding" {
                let mut table = embeddings.to_tensor();
                table.data_mut()[PAD * d..(PAD + 1) * d].fill(0.0);
                table
            } else if name.ends_with(".bias") && name.starts_with("lstm") {
                // forget gate starts open
                let mut b = vec![0.0; 4 * u];
                b[u..2 * u].fill(1.0);
                Tensor::vector(b)
            } else if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else if name.ends_with(".recurrent_weights") {
                orthogonal(&mut rng, u, 4 * u)
            } else if let Some(h) = name.strip_prefix("conv").and_then(|s| s.split('.').next()) {
                let h: usize = h.parse().expect("conv names carry their width");
                glorot_uniform(&mut rng, &shape, h * d, h * spec.filters_per_size)
            } else {
                glorot_uniform(&mut rng, &shape, shape[0], shape[1])
            };
            params.push(Parameter::new(name, value));
        }
        Ok(ClassifierModel {
            spec,
            vocab: embeddings.vocab().clone(),
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn encode(&self, doc: &Document) -> Vec<usize> {
        encode(doc, &self.vocab, self.spec.max_len)
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    fn var(&self, bound: &BoundParams, name: &str) -> Var {
        let i = self
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("model has no parameter `{name}`"));
        bound.vars[i]
    }

    fn cell(&self, bound: &BoundParams, prefix: &str) -> LstmCell {
        LstmCell {
            units: self.spec.lstm_units,
            input_weights: self.var(bound, &format!("{prefix}.input_weights")),
            recurrent_weights: self.var(bound, &format!("{prefix}.recurrent_weights")),
            bias: self.var(bound, &format!("{prefix}.bias")),
        }
    }

    /// Pooled `1×pooled_width` feature vector for one encoded document,
    /// before dropout.
    pub fn pooled_features<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        indices: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let seq = tape.gather_rows(self.var(bound, "embedding"), indices)?;
        let spec = &self.spec;
        match spec.architecture {
            Architecture::Cnn1d => {
                let mut pooled = Vec::with_capacity(spec.filter_sizes.len());
                for &h in &spec.filter_sizes {
                    let layer = Conv1dLayer {
                        filter_size: h,
                        weight: self.var(bound, &format!("conv{h}.weight")),
                        bias: self.var(bound, &format!("conv{h}.bias")),
                    };
                    let maps = conv1d_forward(tape, seq, &layer)?;
                    let maps = tape.relu(maps);
                    pooled.push(global_max_pool(tape, maps)?);
                }
                tape.concat(&pooled, 1)
            }
            Architecture::Lstm => {
                let cell = self.cell(bound, "lstm");
                let states = lstm_sequence(tape, seq, &cell, spec.recurrent_dropout_rate, training, rng)?;
                global_max_pool(tape, states)
            }
            Architecture::Bilstm => {
                let fwd = self.cell(bound, "lstm_fwd");
                let bwd = self.cell(bound, "lstm_bwd");
                let states =
                    bilstm_forward(tape, seq, &fwd, &bwd, spec.recurrent_dropout_rate, training, rng)?;
                global_max_pool(tape, states)
            }
        }
    }

    /// Probability (`1×1`) that one encoded document is hateful.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        indices: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let features = self.pooled_features(tape, bound, indices, training, rng)?;
        let width = tape.value(features).numel();
        if width != self.spec.pooled_width() {
            return Err(Error::Shape(format!(
                "{} pooled width {width}, expected {}",
                self.spec.architecture.label(),
                self.spec.pooled_width()
            )));
        }
        let features = tape.dropout(features, self.spec.dropout_rate, training, rng)?;
        let logit = tape.matmul(features, self.var(bound, "dense.weight"))?;
        let logit = tape.add_bias(logit, self.var(bound, "dense.bias"))?;
        Ok(tape.sigmoid(logit))
    }

    /// Mean binary cross-entropy over a batch and its gradient for every
    /// parameter, in parameter order.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &[&[usize]],
        targets: &[f64],
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let probs = batch
            .iter()
            .map(|indices| self.forward(&mut tape, &bound, indices, training, rng))
            .collect::<Result<Vec<_>>>()?;
        let probs = tape.concat(&probs, 0)?;
        let loss = tape.binary_cross_entropy(probs, targets)?;
        let loss_value = tape.value(loss).item().expect("scalar loss");
        let mut grads = tape.backward(loss)?;
        let grads = bound
            .vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        Ok((loss_value, grads))
    }

    /// Mean inference-mode loss over a set of encoded documents.
    pub fn mean_loss(&self, encoded: &[Vec<usize>], targets: &[f64]) -> Result<f64> {
        let probs = self.predict_encoded(encoded)?;
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(probs));
        let loss = tape.binary_cross_entropy(p, targets)?;
        Ok(tape.value(loss).item().expect("scalar loss"))
    }

    /// One Adam update on a batch with dropout active; returns the batch loss.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        batch: &[&[usize]],
        targets: &[f64],
        rng: &mut R,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(batch, targets, true, rng)?;
        let adam = self.spec.adam();
        let trainable_embeddings = self.spec.embeddings_trainable;
        for (param, grad) in self.params.iter_mut().zip(&grads) {
            if param.name == "embedding" && !trainable_embeddings {
                continue;
            }
            param.adam_step(grad, &adam)?;
        }
        Ok(loss)
    }

    /// Inference-mode probabilities for encoded documents.
    pub fn predict_encoded(&self, encoded: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut probs = Vec::with_capacity(encoded.len());
        // inference never draws from the generator
        let mut rng = rng_for(0, "unused", 0);
        for chunk in encoded.chunks(self.spec.batch_size.max(1)) {
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape);
            for indices in chunk {
                let p = self.forward(&mut tape, &bound, indices, false, &mut rng)?;
                probs.push(tape.value(p).data()[0]);
            }
        }
        Ok(probs)
    }

    pub fn predict_proba(&self, docs: &[Document]) -> Result<Vec<f64>> {
        let encoded: Vec<Vec<usize>> = docs.iter().map(|d| self.encode(d)).collect();
        self.predict_encoded(&encoded)
    }

    /// Writes a checkpoint: a tag line, a one-line JSON header with the spec
    /// and vocabulary, then the binary parameter container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = CheckpointHeader {
            spec: self.spec.clone(),
            vocabulary: self.vocab.tokens().to_vec(),
        };
        let mut bytes = Vec::new();
        writeln!(bytes, "{CHECKPOINT_TAG}").expect("writing to memory");
        serde_json::to_writer(&mut bytes, &header).expect("header serializes");
        bytes.push(b'\n');
        write_params(&mut bytes, &self.params)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint, checking every stored tensor against the shapes
    /// the recorded spec implies.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut rest = &bytes[..];
        let mut next_line = |line: usize| -> Result<&[u8]> {
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::parse(path, line, "truncated checkpoint"))?;
            let (head, tail) = rest.split_at(end);
            rest = &tail[1..];
            Ok(head)
        };
        if next_line(1)? != CHECKPOINT_TAG.as_bytes() {
            return Err(Error::parse(path, 1, "not a model checkpoint"));
        }
        let header: CheckpointHeader = serde_json::from_slice(next_line(2)?)
            .map_err(|e| Error::parse(path, 2, format!("bad checkpoint header: {e}")))?;
        header
            .spec
            .validate()
            .map_err(|e| Error::parse(path, 2, e.to_string()))?;
        let vocab = Vocabulary::from_tokens(header.vocabulary)
            .map_err(|e| Error::parse(path, 2, e.to_string()))?;
        let params = read_params(&mut rest)?;

        let expected = header.spec.parameter_shapes(vocab.len());
        let found: Vec<(String, Vec<usize>)> = params
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect();
        if expected != found {
            let detail = expected
                .iter()
                .zip(&found)
                .find(|(e, f)| e != f)
                .map(|(e, f)| format!("expected {} {:?}, found {} {:?}", e.0, e.1, f.0, f.1))
                .unwrap_or_else(|| {
                    format!("expected {} tensors, found {}", expected.len(), found.len())
                });
            return Err(Error::Invalid(format!(
                "{}: checkpoint tensors disagree with its model spec: {detail}",
                path.display()
            )));
        }
        Ok(ClassifierModel {
            spec: header.spec,
            vocab,
            params,
        })
    }
}

/// Tape leaves for a model's parameters, in parameter order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_embeddings(dim: usize, words: usize) -> EmbeddingMatrix {
        let vocab = Vocabulary::from_tokens((0..words).map(|i| format!("w{i}"))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = (0..vocab.len() * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        EmbeddingMatrix::new(vocab, dim, values).unwrap()
    }

    fn tiny_spec(arch: Architecture) -> ModelSpec {
        ModelSpec {
            embedding_dim: 4,
            filters_per_size: 2,
            lstm_units: 3,
            max_len: 5,
            ..ModelSpec::new(arch)
        }
    }

    #[test]
    fn architecture_names() {
        for arch in Architecture::ALL {
            assert_eq!(arch.key().parse::<Architecture>().unwrap(), arch);
        }
        let err = "gru".parse::<Architecture>().unwrap_err().to_string();
        assert!(err.contains("cnn1d") && err.contains("bilstm"));
    }

    #[test]
    fn spec_defaults_and_validation() {
        let spec = ModelSpec::new(Architecture::Cnn1d);
        assert_eq!(spec.pooled_width(), 192);
        assert_eq!(ModelSpec::new(Architecture::Lstm).pooled_width(), 100);
        assert_eq!(ModelSpec::new(Architecture::Bilstm).pooled_width(), 200);
        assert!(spec.validate().is_ok());
        assert!(ModelSpec { max_len: 3, ..spec.clone() }.validate().is_err());
        assert!(ModelSpec { dropout_rate: 1.0, ..spec.clone() }.validate().is_err());
        // filter sizes are irrelevant to recurrent models
        let lstm = ModelSpec { max_len: 1, ..ModelSpec::new(Architecture::Lstm) };
        assert!(lstm.validate().is_ok());
    }

    #[test]
    fn initialization_conventions() {
        let emb = tiny_embeddings(4, 6);
        let model = ClassifierModel::new(tiny_spec(Architecture::Lstm), &emb, 3).unwrap();
        let table = &model.param("embedding").unwrap().value;
        assert!(table.row(PAD).iter().all(|&v| v == 0.0));
        assert_eq!(table.row(3), emb.row(3));
        let bias = model.param("lstm.bias").unwrap().value.data();
        assert_eq!(&bias[3..6], [1.0, 1.0, 1.0]);
        assert!(bias[..3].iter().chain(&bias[6..]).all(|&b| b == 0.0));
        let u = &model.param("lstm.recurrent_weights").unwrap().value;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
        let wrong_dim = tiny_embeddings(5, 6);
        assert!(ClassifierModel::new(tiny_spec(Architecture::Lstm), &wrong_dim, 3).is_err());
    }

    #[test]
    fn forward_outputs_and_widths() {
        let emb = tiny_embeddings(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for arch in Architecture::ALL {
            let model = ClassifierModel::new(tiny_spec(arch), &emb, 1).unwrap();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let seq = [2, 5, 9, 0, 0];
            let f = model.pooled_features(&mut tape, &bound, &seq, false, &mut rng).unwrap();
            assert_eq!(tape.value(f).shape(), [1, model.spec().pooled_width()]);
            let p = model.forward(&mut tape, &bound, &seq, true, &mut rng).unwrap();
            let p = tape.value(p).data()[0];
            assert!(p > 0.0 && p < 1.0);

            let pads = vec![vec![0; 5]];
            let a = model.predict_encoded(&pads).unwrap();
            let b = model.predict_encoded(&pads).unwrap();
            assert_eq!(a, b);

            assert!(matches!(
                model.predict_encoded(&[vec![10, 0, 0, 0, 0]]),
                Err(Error::IndexOutOfRange { index: 10, .. })
            ));
        }
    }

    #[test]
    fn constant_sequence_is_permutation_invariant() {
        let emb = tiny_embeddings(4, 8);
        let model = ClassifierModel::new(tiny_spec(Architecture::Lstm), &emb, 2).unwrap();
        let constant = vec![4; 5];
        let mut permuted = constant.clone();
        permuted.reverse();
        let p = model.predict_encoded(&[constant, permuted]).unwrap();
        assert_eq!(p[0], p[1]);

        let varied = vec![2, 3, 4, 5, 6];
        let reversed: Vec<usize> = varied.iter().rev().copied().collect();
        let p = model.predict_encoded(&[varied, reversed]).unwrap();
        assert_ne!(p[0], p[1]);
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let emb = tiny_embeddings(4, 8);
        let model = ClassifierModel::new(tiny_spec(Architecture::Bilstm), &emb, 4).unwrap();
        model.save(&path).unwrap();
        let back = ClassifierModel::load(&path).unwrap();
        assert_eq!(back.spec(), model.spec());
        let seqs = vec![vec![2, 3, 4, 0, 0], vec![9, 9, 1, 1, 0]];
        let bits = |p: Vec<f64>| p.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(
            bits(back.predict_encoded(&seqs).unwrap()),
            bits(model.predict_encoded(&seqs).unwrap())
        );

        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        assert!(text.contains("\"lstm_units\":3"));
        let tampered = replace_once(&bytes, b"\"lstm_units\":3", b"\"lstm_units\":4");
        fs::write(&path, tampered).unwrap();
        let err = ClassifierModel::load(&path).unwrap_err();
        assert!(err.to_string().contains("disagree"), "{err}");
        assert!(err.is_user_error());
    }

    fn replace_once(hay: &[u8], from: &[u8], to: &[u8]) -> Vec<u8> {
        let at = hay.windows(from.len()).position(|w| w == from).unwrap();
        [&hay[..at], to, &hay[at + from.len()..]].concat()
    }
}
