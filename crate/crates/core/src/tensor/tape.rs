use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clipped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the log.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    HardSigmoid(Var),
    MulConst(Var, Vec<f64>),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    MaxRows { src: Var, argmax: Vec<usize> },
    Gather { table: Var, indices: Vec<usize> },
    Unfold { src: Var, width: usize },
    Sum(Var),
    Bce { probs: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations in execution order. Node ids are assigned
/// sequentially, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that influenced it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

// C (m×n) = A (m×k) · B (k×n) + beta·C, with arbitrary strides on A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn hard_sigmoid_scalar(x: f64) -> f64 {
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor {
            shape: src.shape().to_vec(),
            data,
        };
        self.push(out, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul: ({m}, {k}) x ({k2}, {n})")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            0.0,
            &mut out,
        );
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a bias vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let vx = self.value(x);
        let vb = self.value(bias);
        let width = *vx.shape().last().unwrap_or(&1);
        if vb.numel() != width {
            return Err(Error::Shape(format!(
                "add_bias: bias of {} values for last axis {width}",
                vb.numel()
            )));
        }
        let data = vx
            .data()
            .chunks(width.max(1))
            .flat_map(|row| row.iter().zip(vb.data()).map(|(a, b)| a + b))
            .collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// max(0, x); the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid_scalar, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    /// clip(0.2·x + 0.5, 0, 1).
    pub fn hard_sigmoid(&mut self, x: Var) -> Var {
        self.map(x, hard_sigmoid_scalar, Op::HardSigmoid(x))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let vx = self.value(x);
        if factors.len() != vx.numel() {
            return Err(Error::Shape(format!(
                "mul_const: {} factors for {} values",
                factors.len(),
                vx.numel()
            )));
        }
        let data = vx.data().iter().zip(&factors).map(|(a, b)| a * b).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MulConst(x, factors)))
    }

    /// Inverted dropout. Returns `x` itself in inference mode or when
    /// `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let mask = dropout_mask(self.value(x).numel(), rate, training, rng)?;
        match mask {
            Some(mask) => self.mul_const(x, mask),
            None => Ok(x),
        }
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let (_, cols0) = self.value(first).dims2()?;
        let (rows0, _) = self.value(first).dims2()?;
        let out = match axis {
            0 => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let (r, c) = self.value(p).dims2()?;
                    if c != cols0 {
                        return Err(Error::Shape(format!("concat rows: {c} vs {cols0} columns")));
                    }
                    rows += r;
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::new(vec![rows, cols0], data)?
            }
            1 => {
                let mut cols = 0;
                for &p in parts {
                    let (r, c) = self.value(p).dims2()?;
                    if r != rows0 {
                        return Err(Error::Shape(format!("concat columns: {r} vs {rows0} rows")));
                    }
                    cols += c;
                }
                let mut data = Vec::with_capacity(rows0 * cols);
                for r in 0..rows0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(r));
                    }
                }
                Tensor::new(vec![rows0, cols], data)?
            }
            _ => return Err(Error::Shape(format!("concat: unsupported axis {axis}"))),
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// `len` rows (axis 0) or columns (axis 1) of a 2-D tensor starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        let extent = if axis == 0 { rows } else { cols };
        if axis > 1 || start + len > extent {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) out of axis {axis} with extent {extent}",
                start + len
            )));
        }
        let src = self.value(x).data();
        let out = if axis == 0 {
            Tensor::new(vec![len, cols], src[start * cols..(start + len) * cols].to_vec())?
        } else {
            let data = (0..rows)
                .flat_map(|r| src[r * cols + start..r * cols + start + len].iter().copied())
                .collect();
            Tensor::new(vec![rows, len], data)?
        };
        Ok(self.push(out, Op::Slice { src: x, axis, start }))
    }

    /// Column-wise maximum over the rows of a `T×F` tensor, giving `1×F`.
    /// The gradient flows to the first maximal row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if rows == 0 {
            return Err(Error::Shape("max over zero rows".into()));
        }
        let src = self.value(x);
        let mut argmax = vec![0usize; cols];
        let mut best: Vec<f64> = src.row(0).to_vec();
        for r in 1..rows {
            for (c, &v) in src.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let out = Tensor::new(vec![1, cols], best)?;
        Ok(self.push(out, Op::MaxRows { src: x, argmax }))
    }

    /// Rows `indices` of a `V×d` table, giving `n×d`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(table).dims2()?;
        let src = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::IndexOutOfRange { index: i, rows });
            }
            data.extend_from_slice(src.row(i));
        }
        let out = Tensor::new(vec![indices.len(), cols], data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Sliding windows of `width` consecutive rows of a `T×d` tensor,
    /// flattened into a `(T-width+1)×(width·d)` matrix (row `t` holds rows
    /// `t..t+width` back to back).
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if width == 0 || width > rows {
            return Err(Error::Shape(format!(
                "window of {width} rows over a sequence of {rows}"
            )));
        }
        let windows = rows - width + 1;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(windows * width * cols);
        for t in 0..windows {
            data.extend_from_slice(&src[t * cols..(t + width) * cols]);
        }
        let out = Tensor::new(vec![windows, width * cols], data)?;
        Ok(self.push(out, Op::Unfold { src: x, width }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &[f64]) -> Result<Var> {
        let p = self.value(probs);
        if p.numel() != targets.len() {
            return Err(Error::Shape(format!(
                "binary_cross_entropy: {} probabilities for {} targets",
                p.numel(),
                targets.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::Shape("binary_cross_entropy of an empty batch".into()));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let loss = total / targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                probs,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Reverse-mode sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| Tensor {
                    shape: self.nodes[id].value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let n = self.nodes[v.0].value.numel();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matmul input is 2-D");
                let n = node.value.shape()[1];
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                // dA += G · Bᵀ
                let ga = self.acc(grads, *a);
                gemm(m, n, k, g, (n, 1), vb, (1, n), 1.0, ga);
                // dB += Aᵀ · G
                let gb = self.acc(grads, *b);
                gemm(k, m, n, va, (1, k), g, (n, 1), 1.0, gb);
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let ga = self.acc(grads, v);
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            Op::Mul(a, b) => {
                let vb = self.value(*b).data();
                let ga = self.acc(grads, *a);
                for ((d, s), y) in ga.iter_mut().zip(g).zip(vb) {
                    *d += s * y;
                }
                let va = self.value(*a).data();
                let gb = self.acc(grads, *b);
                for ((d, s), x) in gb.iter_mut().zip(g).zip(va) {
                    *d += s * x;
                }
            }
            Op::AddBias(x, bias) => {
                let gx = self.acc(grads, *x);
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                let gb = self.acc(grads, *bias);
                let width = gb.len().max(1);
                for row in g.chunks(width) {
                    gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                }
            }
            Op::Scale(x, factor) => {
                let gx = self.acc(grads, *x);
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += s * factor);
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                let gx = self.acc(grads, *x);
                for ((d, s), &xi) in gx.iter_mut().zip(g).zip(vx) {
                    if xi > 0.0 {
                        *d += s;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = self.acc(grads, *x);
                for ((d, s), y) in gx.iter_mut().zip(g).zip(out) {
                    *d += s * y * (1.0 - y);
                }
            }
            Op::Tanh(x) => {
                let gx = self.acc(grads, *x);
                for ((d, s), y) in gx.iter_mut().zip(g).zip(out) {
                    *d += s * (1.0 - y * y);
                }
            }
            Op::HardSigmoid(x) => {
                let vx = self.value(*x).data();
                let gx = self.acc(grads, *x);
                for ((d, s), &xi) in gx.iter_mut().zip(g).zip(vx) {
                    if xi > -2.5 && xi < 2.5 {
                        *d += 0.2 * s;
                    }
                }
            }
            Op::MulConst(x, factors) => {
                let gx = self.acc(grads, *x);
                for ((d, s), f) in gx.iter_mut().zip(g).zip(factors) {
                    *d += s * f;
                }
            }
            Op::Concat { parts, axis } => {
                let cols = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.value(p).dims2().expect("concat input is 2-D");
                    let gp = self.acc(grads, p);
                    if *axis == 0 {
                        gp.iter_mut()
                            .zip(&g[offset * cols..(offset + pr) * cols])
                            .for_each(|(d, s)| *d += s);
                        offset += pr;
                    } else {
                        for r in 0..pr {
                            let src = &g[r * cols + offset..r * cols + offset + pc];
                            gp[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += s);
                        }
                        offset += pc;
                    }
                }
            }
            Op::Slice { src, axis, start } => {
                let (rows, cols) = self.value(*src).dims2().expect("slice input is 2-D");
                let gs = self.acc(grads, *src);
                if *axis == 0 {
                    gs[start * cols..start * cols + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, s)| *d += s);
                } else {
                    let len = g.len() / rows.max(1);
                    for r in 0..rows {
                        gs[r * cols + start..r * cols + start + len]
                            .iter_mut()
                            .zip(&g[r * len..(r + 1) * len])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::MaxRows { src, argmax } => {
                let cols = argmax.len();
                let gs = self.acc(grads, *src);
                for (c, &r) in argmax.iter().enumerate() {
                    gs[r * cols + c] += g[c];
                }
            }
            Op::Gather { table, indices } => {
                let cols = self.value(*table).shape()[1];
                let gt = self.acc(grads, *table);
                for (row, &i) in indices.iter().enumerate() {
                    gt[i * cols..(i + 1) * cols]
                        .iter_mut()
                        .zip(&g[row * cols..(row + 1) * cols])
                        .for_each(|(d, s)| *d += s);
                }
            }
            Op::Unfold { src, width } => {
                let cols = self.value(*src).shape()[1];
                let span = width * cols;
                let gs = self.acc(grads, *src);
                for (t, row) in g.chunks(span).enumerate() {
                    gs[t * cols..t * cols + span]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(d, s)| *d += s);
                }
            }
            Op::Sum(x) => {
                let gx = self.acc(grads, *x);
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Bce { probs, targets } => {
                let n = targets.len() as f64;
                let vp = self.value(*probs).data();
                let gp = self.acc(grads, *probs);
                for ((d, &p), &y) in gp.iter_mut().zip(vp).zip(targets) {
                    if p > BCE_EPSILON && p < 1.0 - BCE_EPSILON {
                        *d += g[0] * (-(y / p) + (1.0 - y) / (1.0 - p)) / n;
                    }
                }
            }
        }
    }
}

/// Inverted-dropout mask of `len` factors (0 or `1/(1-rate)`), or `None`
/// when dropout is inactive.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grad_of_sum(x: &[f64], f: impl Fn(&mut Tape, Var) -> Var) -> Vec<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(x.to_vec()));
        let y = f(&mut tape, v);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap().get(v).unwrap().data().to_vec()
    }

    fn eval(x: &[f64], f: impl Fn(&mut Tape, Var) -> Var) -> Vec<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(x.to_vec()));
        let y = f(&mut tape, v);
        tape.value(y).data().to_vec()
    }

    #[test]
    fn relu_values_and_gradients() {
        assert_eq!(eval(&[-1.0, 0.0, 2.0], |t, v| t.relu(v)), [0.0, 0.0, 2.0]);
        assert_eq!(grad_of_sum(&[-1.0], |t, v| t.relu(v)), [0.0]);
        assert_eq!(grad_of_sum(&[3.0], |t, v| t.relu(v)), [1.0]);
        assert_eq!(grad_of_sum(&[0.0], |t, v| t.relu(v)), [0.0]);
    }

    #[test]
    fn sigmoid_values_and_stability() {
        assert_eq!(eval(&[0.0], |t, v| t.sigmoid(v)), [0.5]);
        assert_eq!(grad_of_sum(&[0.0], |t, v| t.sigmoid(v)), [0.25]);
        let tiny = eval(&[-1000.0], |t, v| t.sigmoid(v))[0];
        assert!(tiny.is_finite() && (0.0..=1e-300).contains(&tiny));
        let big = eval(&[1000.0], |t, v| t.sigmoid(v))[0];
        assert_eq!(big, 1.0);
    }

    #[test]
    fn tanh_values() {
        assert_eq!(eval(&[0.0], |t, v| t.tanh(v)), [0.0]);
        assert_eq!(grad_of_sum(&[0.0], |t, v| t.tanh(v)), [1.0]);
        for x in [0.3, 1.7, 4.2] {
            let pos = eval(&[x], |t, v| t.tanh(v))[0];
            let neg = eval(&[-x], |t, v| t.tanh(v))[0];
            assert_eq!(pos, -neg);
        }
    }

    #[test]
    fn hard_sigmoid_values() {
        let ys = eval(&[0.0, 2.5, -2.5, 1.0], |t, v| t.hard_sigmoid(v));
        assert_eq!(ys[0], 0.5);
        assert_eq!(ys[1], 1.0);
        assert_eq!(ys[2], 0.0);
        assert!((ys[3] - 0.7).abs() < 1e-15);
        assert_eq!(
            grad_of_sum(&[0.0, 2.4, 3.0, -2.6], |t, v| t.hard_sigmoid(v)),
            [0.2, 0.2, 0.0, 0.0]
        );
    }

    fn bce(p: &[f64], y: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(p.to_vec()));
        let l = tape.binary_cross_entropy(v, y).unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce(&[0.5], &[1.0]) - ln2).abs() < 1e-15);
        assert!((bce(&[0.5], &[0.0]) - ln2).abs() < 1e-15);
        assert!(bce(&[1.0, 0.0], &[1.0, 0.0]) < 1e-6);
        assert!((bce(&[0.9, 0.1], &[1.0, 0.0]) - 0.105_360_515_657_826_3).abs() < 1e-12);

        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(vec![0.5, 0.5]));
        assert!(tape.binary_cross_entropy(v, &[1.0]).is_err());
    }

    #[test]
    fn bce_logit_gradient_is_p_minus_y_over_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::vector(logits.clone()));
        let p = tape.sigmoid(z);
        let loss = tape.binary_cross_entropy(p, &ys).unwrap();
        let grads = tape.backward(loss).unwrap();
        let probs = tape.value(p).data().to_vec();
        for ((g, p), y) in grads.get(z).unwrap().data().iter().zip(probs).zip(ys) {
            assert!((g - (p - y) / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[4], 2.0));
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());

        let ones = tape.leaf(Tensor::full(&[100_000], 1.0));
        let y = tape.dropout(ones, 0.5, true, &mut rng).unwrap();
        let vals = tape.value(y).data();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn backward_examples() {
        assert_eq!(grad_of_sum(&[1.0, 2.0, 3.0], |_, v| v), [1.0, 1.0, 1.0]);
        assert_eq!(
            grad_of_sum(&[1.0, 2.0], |t, v| t.mul(v, v).unwrap()),
            [2.0, 4.0]
        );
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x*3 + x*x) → 3 + 2x
        let g = grad_of_sum(&[1.0, -2.0], |t, v| {
            let a = t.scale(v, 3.0);
            let b = t.mul(v, v).unwrap();
            t.add(a, b).unwrap()
        });
        assert_eq!(g, [5.0, -1.0]);
    }

    #[test]
    fn structural_ops() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let m = tape.max_rows(x).unwrap();
        assert_eq!(tape.value(m).data(), [3.0, 5.0]);
        let empty = tape.leaf(Tensor::zeros(&[0, 3]));
        assert!(tape.max_rows(empty).is_err());

        let seq = tape.leaf(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let u = tape.unfold(seq, 2).unwrap();
        assert_eq!(tape.value(u).shape(), [2, 2]);
        assert_eq!(tape.value(u).data(), [1.0, 2.0, 2.0, 3.0]);
        assert!(tape.unfold(seq, 4).is_err());

        let table = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = tape.gather_rows(table, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(g).data(), [3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        assert!(matches!(
            tape.gather_rows(table, &[2]),
            Err(Error::IndexOutOfRange { index: 2, rows: 2 })
        ));
        let loss = tape.sum(g);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(table).unwrap().data(), [1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn max_rows_routes_to_first_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap());
        let m = tape.max_rows(x).unwrap();
        let loss = tape.sum(m);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), [1.0, 0.0, 0.0]);
    }
}
