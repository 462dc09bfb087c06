//! Dense layers and MLP stacks shared by the backbone, encoder and decoder.

use crate::error::Result;
use crate::numerics::tape::{Tape, ValueId};
use crate::numerics::tensor::Tensor;
use rand::Rng;

/// A fully connected layer: weight [in, out] plus bias [out].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

/// Tape handles for one registered dense layer.
#[derive(Debug, Clone, Copy)]
pub struct DenseIds {
    pub w: ValueId,
    pub b: ValueId,
}

impl Dense {
    /// He initialization, for layers followed by ReLU.
    pub fn he(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        Dense {
            w: Tensor::randn(vec![in_dim, out_dim], std, rng),
            b: Tensor::zeros(vec![out_dim]),
        }
    }

    /// Plain linear readout initialization.
    pub fn linear(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        Dense {
            w: Tensor::randn(vec![in_dim, out_dim], std, rng),
            b: Tensor::zeros(vec![out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn register(&self, tape: &mut Tape) -> DenseIds {
        DenseIds {
            w: tape.param(self.w.clone()),
            b: tape.param(self.b.clone()),
        }
    }

    /// Register as constants so no gradient flows (frozen models).
    pub fn register_frozen(&self, tape: &mut Tape) -> DenseIds {
        DenseIds {
            w: tape.constant(self.w.clone()),
            b: tape.constant(self.b.clone()),
        }
    }

    /// Plain (non-tape) forward for inference paths: y = x W + b.
    pub fn forward_infer(&self, x: &[f64]) -> Vec<f64> {
        let (ind, outd) = (self.in_dim(), self.out_dim());
        debug_assert_eq!(x.len(), ind);
        let mut y = self.b.data().to_vec();
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let wrow = &self.w.data()[k * outd..(k + 1) * outd];
            for j in 0..outd {
                y[j] += xk * wrow[j];
            }
        }
        y
    }
}

impl DenseIds {
    pub fn apply(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let y = tape.matmul(x, self.w)?;
        tape.add_bias(y, self.b)
    }
}

/// A stack of dense layers with ReLU after each hidden layer and optionally
/// after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

impl Mlp {
    /// All-ReLU stack over the given widths, e.g. [d, 356, 128, 64].
    pub fn relu_stack(widths: &[usize], rng: &mut impl Rng) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Dense::he(w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            relu_last: true,
        }
    }

    /// ReLU on hidden layers, linear final layer (decoder-style readout).
    pub fn linear_out_stack(widths: &[usize], rng: &mut impl Rng) -> Self {
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i + 1 == n {
                    Dense::linear(w[0], w[1], rng)
                } else {
                    Dense::he(w[0], w[1], rng)
                }
            })
            .collect();
        Mlp {
            layers,
            relu_last: false,
        }
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<DenseIds> {
        self.layers.iter().map(|l| l.register(tape)).collect()
    }

    pub fn register_frozen(&self, tape: &mut Tape) -> Vec<DenseIds> {
        self.layers.iter().map(|l| l.register_frozen(tape)).collect()
    }

    pub fn apply(ids: &[DenseIds], relu_last: bool, tape: &mut Tape, mut x: ValueId) -> Result<ValueId> {
        let n = ids.len();
        for (i, l) in ids.iter().enumerate() {
            x = l.apply(tape, x)?;
            if i + 1 < n || relu_last {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }

    pub fn forward_infer(&self, x: &[f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward_infer(&h);
            if i + 1 < n || self.relu_last {
                for v in &mut h {
                    *v = v.max(0.0);
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;
    use crate::rng::stream;

    #[test]
    fn tape_and_infer_paths_agree() {
        let mut rng = stream(5, &["init"]);
        let mlp = Mlp::relu_stack(&[4, 6, 3], &mut rng);
        let x = vec![0.3, -1.2, 0.0, 2.0];

        let mut tape = Tape::new();
        let ids = mlp.register(&mut tape);
        let xid = tape.constant(Tensor::matrix(1, 4, x.clone()).unwrap());
        let y = Mlp::apply(&ids, mlp.relu_last, &mut tape, xid).unwrap();
        let on_tape = tape.value(y).data().to_vec();

        let infer = mlp.forward_infer(&x);
        assert_eq!(on_tape, infer);
    }

    #[test]
    fn linear_out_stack_skips_final_relu() {
        let mut rng = stream(6, &["init"]);
        let mlp = Mlp::linear_out_stack(&[3, 5, 2], &mut rng);
        // with a negative bias shift the output can go negative
        let mut m = mlp.clone();
        m.layers[1].b = Tensor::from_vec(vec![-100.0, -100.0]);
        let y = m.forward_infer(&[1.0, 1.0, 1.0]);
        assert!(y.iter().all(|&v| v < 0.0));
    }
}
