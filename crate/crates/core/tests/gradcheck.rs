//! Central finite differences against backprop for every differentiable op
//! and for each full architecture at tiny scale.

use codemix::corpus::Vocabulary;
use codemix::embeddings::EmbeddingMatrix;
use codemix::models::{Architecture, ClassifierModel, ModelSpec};
use codemix::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const COORDS: usize = 20;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Coordinates to probe: all of them for small tensors, otherwise `COORDS`
/// distinct random ones.
fn probe_coords(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= COORDS {
        return (0..n).collect();
    }
    rand::seq::index::sample(rng, n, COORDS).into_vec()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    // keep clear of relu / hard-sigmoid kinks and max-pool ties
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.5..1.5);
            if v.abs() < 0.05 { v + 0.1 } else { v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces the op output to a scalar through fixed random weights, then
/// compares analytic and numeric gradients for every input.
fn check_op<F>(name: &str, inputs: Vec<Tensor>, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let eval = |inputs: &[Tensor], weights: Option<&[f64]>| -> (f64, Tape, Vec<Var>, Var, Vec<f64>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let n = tape.value(out).numel();
        let w: Vec<f64> = match weights {
            Some(w) => w.to_vec(),
            None => (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.25).collect(),
        };
        let weighted = tape.mul_const(out, w.clone()).unwrap();
        let loss = tape.sum(weighted);
        (tape.value(loss).item().unwrap(), tape, vars, loss, w)
    };
    let (_, tape, vars, loss, weights) = eval(&inputs, None);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for c in probe_coords(inputs[k].numel(), &mut rng) {
            let mut plus = inputs.clone();
            plus[k].data_mut()[c] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[c] -= H;
            let numeric = (eval(&plus, Some(&weights)).0 - eval(&minus, Some(&weights)).0) / (2.0 * H);
            let err = rel_err(analytic.data()[c], numeric);
            assert!(
                err < TOL,
                "{name}: input {k} coord {c}: analytic {} numeric {numeric} rel err {err:e}",
                analytic.data()[c]
            );
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn elementwise_and_linear_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tensor(&[3, 4], &mut rng);
    let b = random_tensor(&[4, 5], &mut rng);
    let c = random_tensor(&[3, 4], &mut rng);
    let bias = random_tensor(&[4], &mut rng);

    check_op("matmul", vec![a.clone(), b], |t, v| t.matmul(v[0], v[1]).unwrap());
    check_op("add", vec![a.clone(), c.clone()], |t, v| t.add(v[0], v[1]).unwrap());
    check_op("mul", vec![a.clone(), c.clone()], |t, v| t.mul(v[0], v[1]).unwrap());
    check_op("add_bias", vec![a.clone(), bias], |t, v| t.add_bias(v[0], v[1]).unwrap());
    check_op("scale", vec![a.clone()], |t, v| t.scale(v[0], -1.7));
    check_op("relu", vec![a.clone()], |t, v| t.relu(v[0]));
    check_op("sigmoid", vec![a.clone()], |t, v| t.sigmoid(v[0]));
    check_op("tanh", vec![a.clone()], |t, v| t.tanh(v[0]));
    // spread inputs across both the linear region and the clipped tails
    let wide = Tensor::new(vec![2, 4], vec![-4.0, -2.2, -1.0, 0.3, 1.1, 2.4, 3.0, -0.7]).unwrap();
    check_op("hard_sigmoid", vec![wide], |t, v| t.hard_sigmoid(v[0]));
    check_op("mul_const", vec![a.clone()], |t, v| {
        t.mul_const(v[0], (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 2.0 }).collect()).unwrap()
    });
    check_op("sum", vec![a], |t, v| t.sum(v[0]));
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_tensor(&[3, 4], &mut rng);
    let b = random_tensor(&[2, 4], &mut rng);
    let c = random_tensor(&[3, 2], &mut rng);
    check_op("concat rows", vec![a.clone(), b], |t, v| t.concat(&[v[0], v[1]], 0).unwrap());
    check_op("concat cols", vec![a.clone(), c], |t, v| t.concat(&[v[0], v[1]], 1).unwrap());
    check_op("slice rows", vec![a.clone()], |t, v| t.slice(v[0], 0, 1, 2).unwrap());
    check_op("slice cols", vec![a.clone()], |t, v| t.slice(v[0], 1, 1, 3).unwrap());
    check_op("max_rows", vec![a.clone()], |t, v| t.max_rows(v[0]).unwrap());
    check_op("unfold", vec![random_tensor(&[6, 3], &mut rng)], |t, v| t.unfold(v[0], 3).unwrap());
    let table = random_tensor(&[5, 3], &mut rng);
    check_op("gather_rows", vec![table], |t, v| t.gather_rows(v[0], &[4, 0, 4, 2]).unwrap());
}

#[test]
fn binary_cross_entropy_op() {
    let probs = Tensor::new(vec![4, 1], vec![0.2, 0.7, 0.55, 0.9]).unwrap();
    check_op("bce", vec![probs], |t, v| t.binary_cross_entropy(v[0], &[0.0, 1.0, 0.0, 1.0]).unwrap());
    // composed with the sigmoid, as in every model head
    let logits = Tensor::new(vec![3, 1], vec![-1.2, 0.4, 2.0]).unwrap();
    check_op("sigmoid+bce", vec![logits], |t, v| {
        let p = t.sigmoid(v[0]);
        t.binary_cross_entropy(p, &[1.0, 0.0, 1.0]).unwrap()
    });
}

fn tiny_model(arch: Architecture) -> ClassifierModel {
    let dim = 4;
    let vocab = Vocabulary::from_tokens((0..8).map(|i| format!("w{i}"))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values = (0..vocab.len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let emb = EmbeddingMatrix::new(vocab, dim, values).unwrap();
    let spec = ModelSpec {
        embedding_dim: dim,
        filters_per_size: 2,
        lstm_units: 3,
        max_len: 5,
        ..ModelSpec::new(arch)
    };
    let mut model = ClassifierModel::new(spec, &emb, 17).unwrap();
    // larger-than-default biases and head weights so every gradient is well above noise
    for p in model.params_mut() {
        if p.name.ends_with("bias") || p.name.starts_with("dense") {
            for (i, v) in p.value.data_mut().iter_mut().enumerate() {
                *v += 0.3 * ((i % 5) as f64 - 2.0) + 0.05;
            }
        }
    }
    model
}

fn check_model(arch: Architecture) {
    let mut model = tiny_model(arch);
    let batch: Vec<Vec<usize>> = vec![vec![2, 3, 4, 5, 6], vec![7, 8, 9, 2, 0], vec![9, 5, 3, 0, 0]];
    let seqs: Vec<&[usize]> = batch.iter().map(Vec::as_slice).collect();
    let targets = [1.0, 0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = model.loss_and_grads(&seqs, &targets, false, &mut rng).unwrap();
    let mut coord_rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut expected = 0;
    for k in 0..model.params().len() {
        let n = model.params()[k].value.numel();
        expected += n.min(COORDS);
        for c in probe_coords(n, &mut coord_rng) {
            let original = model.params()[k].value.data()[c];
            model.params_mut()[k].value.data_mut()[c] = original + H;
            let up = model.loss_and_grads(&seqs, &targets, false, &mut rng).unwrap().0;
            model.params_mut()[k].value.data_mut()[c] = original - H;
            let down = model.loss_and_grads(&seqs, &targets, false, &mut rng).unwrap().0;
            model.params_mut()[k].value.data_mut()[c] = original;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads[k].data()[c];
            let err = rel_err(analytic, numeric);
            assert!(
                err < TOL,
                "{arch}: {} coord {c}: analytic {analytic} numeric {numeric} rel err {err:e}",
                model.params()[k].name
            );
            checked += 1;
        }
    }
    assert_eq!(checked, expected);
}

#[test]
fn cnn1d_model_gradients() {
    check_model(Architecture::Cnn1d);
}

#[test]
fn lstm_model_gradients() {
    check_model(Architecture::Lstm);
}

#[test]
fn bilstm_model_gradients() {
    check_model(Architecture::Bilstm);
}
