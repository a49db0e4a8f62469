//! Tape for reverse-mode differentiation.
//!
//! Every call records its output and inputs in evaluation order; [`Graph::backward`]
//! replays the tape in reverse, dispatching to the backward rules in [`super::ops`].

use super::ops;
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::Result;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Adds a constant tensor; gradient passes straight through.
    AddConst(Var),
    /// Multiplies by a constant tensor (dropout masks).
    MulConst(Var, Tensor),
    Relu(Var),
    Tanh(Var),
    Softmax(Var, usize),
    LayerNorm { x: Var, gain: Var, bias: Var, eps: f64 },
    Conv2d { x: Var, w: Var, b: Var },
    Reshape(Var),
    ConcatCols(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where nothing flowed back.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a))?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, x: Var, v: Var) -> Result<Var> {
        let out = ops::add_row_broadcast(self.value(x), self.value(v))?;
        Ok(self.push(out, Op::AddRow(x, v)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = ops::scale(self.value(x), factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let out = ops::add(self.value(x), c)?;
        Ok(self.push(out, Op::AddConst(x)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = ops::tanh(self.value(x));
        self.push(out, Op::Tanh(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = ops::softmax(self.value(x), axis)?;
        Ok(self.push(out, Op::Softmax(x, axis)))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let out = ops::layer_norm(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, eps }))
    }

    /// Pointwise convolution over time, recorded as a matmul plus a row bias.
    pub fn conv1d_pointwise(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn conv2d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::conv2d_same(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Conv2d { x, w, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat_cols(&values)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        match ops::dropout(self.value(x), rate, rng, training)? {
            (_, None) => Ok(x),
            (out, Some(mask)) => Ok(self.push(out, Op::MulConst(x, mask))),
        }
    }

    /// Back-propagates `seed` (the gradient of some scalar with respect to
    /// `output`) through every recorded operation.
    pub fn backward(&self, output: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.value(output).shape(), "seed gradient shape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, t: Tensor| accumulate(&mut grads[v.0], t);
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (da, db) = ops::matmul_backward(self.value(*a), self.value(*b), &g);
                    send(*a, da);
                    send(*b, db);
                }
                Op::Transpose(a) => send(*a, ops::transpose(&g).expect("rank-2")),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(x, v) => {
                    send(*v, ops::sum_rows(&g));
                    send(*x, g);
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip_map(self.value(*b), |u, w| u * w));
                    send(*b, g.zip_map(self.value(*a), |u, w| u * w));
                }
                Op::Scale(x, f) => send(*x, ops::scale(&g, *f)),
                Op::AddConst(x) => send(*x, g),
                Op::MulConst(x, mask) => send(*x, g.zip_map(mask, |u, m| u * m)),
                Op::Relu(x) => send(*x, ops::relu_backward(self.value(*x), &g)),
                Op::Tanh(x) => send(*x, ops::tanh_backward(&node.value, &g)),
                Op::Softmax(x, axis) => send(*x, ops::softmax_backward(&node.value, *axis, &g)),
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (dx, dg, db) = ops::layer_norm_backward(self.value(*x), self.value(*gain), *eps, &g);
                    send(*x, dx);
                    send(*gain, dg);
                    send(*bias, db);
                }
                Op::Conv2d { x, w, b } => {
                    let (dx, dw, db) = ops::conv2d_same_backward(self.value(*x), self.value(*w), &g);
                    send(*x, dx);
                    send(*w, dw);
                    send(*b, db);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    send(*x, g.reshape(&shape).expect("same length"));
                }
                Op::ConcatCols(parts) => {
                    let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[1]).collect();
                    for (p, part) in parts.iter().zip(ops::split_cols(&g, &widths)) {
                        send(*p, part);
                    }
                }
            }
        }
        Gradients(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += v;
            }
        }
        None => *slot = Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_input_accumulates() {
        // y = sum(x ⊙ x) → dy/dx = 2x
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y, Tensor::ones(&[3]));
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn inference_dropout_records_nothing() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::ones(&[4]));
        let y = g.dropout(x, 0.5, &mut Rng::new(0), false).unwrap();
        assert_eq!(x, y);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[2]));
        let b = g.leaf(Tensor::ones(&[2]));
        let y = g.scale(a, 3.0);
        let grads = g.backward(y, Tensor::ones(&[2]));
        assert_eq!(grads.get(a).unwrap().data(), &[3.0, 3.0]);
        assert!(grads.get(b).is_none());
    }
}
