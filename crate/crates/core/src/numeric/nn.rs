//! Reverse-mode gradients for stacks of dense layers, plus the two optimizers.

use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    /// Operator name recorded in model artifacts.
    pub fn operator_name(self) -> Option<&'static str> {
        match self {
            Activation::Identity => None,
            Activation::Relu => Some("relu"),
            Activation::Tanh => Some("tanh"),
        }
    }
}

/// `act(x · W + b)` with `W` stored input-major (in × out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    /// 1 × out
    pub bias: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl Dense {
    /// Fan-in scaled uniform initialization, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            _ => (3.0 / fan_in as f64).sqrt(),
        };
        Self {
            weights: rng.uniform_matrix(fan_in, fan_out, -limit, limit),
            bias: Matrix::zeros(1, fan_out),
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(dim_err("Dense::forward", self.input_dim(), x.cols()));
        }
        let mut out = x.matmul(&self.weights)?;
        out.add_row_vector(self.bias.data())?;
        if self.activation != Activation::Identity {
            let act = self.activation;
            out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(out)
    }

    /// Backpropagates `grad_out` (∂L/∂output). Returns ∂L/∂input and the
    /// parameter gradients. Skips the input gradient when `need_input` is
    /// false.
    pub fn backward(
        &self,
        input: &Matrix,
        output: &Matrix,
        grad_out: &Matrix,
        need_input: bool,
    ) -> Result<(Option<Matrix>, DenseGrad)> {
        output.same_shape(grad_out, "Dense::backward")?;
        let mut delta = grad_out.clone();
        if self.activation != Activation::Identity {
            let act = self.activation;
            for (d, &o) in delta.data_mut().iter_mut().zip(output.data()) {
                *d *= act.derivative_from_output(o);
            }
        }
        let weights = input.t_matmul(&delta)?;
        let bias = Matrix::new(1, delta.cols(), delta.column_sums())?;
        let grad_in = if need_input {
            Some(delta.matmul_t(&self.weights)?)
        } else {
            None
        };
        Ok((grad_in, DenseGrad { weights, bias }))
    }
}

/// A plain feed-forward stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Hidden layers use `hidden`; the last layer uses `output`.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Output of every layer, in order.
    pub fn forward_cached(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut outs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.forward(outs.last().unwrap_or(x))?;
            outs.push(next);
        }
        Ok(outs)
    }

    pub fn backward(&self, x: &Matrix, outs: &[Matrix], grad_out: &Matrix) -> Result<Vec<DenseGrad>> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = if i == 0 { x } else { &outs[i - 1] };
            let (gin, pg) = layer.backward(input, &outs[i], &g, i > 0)?;
            grads.push(pg);
            if let Some(gin) = gin {
                g = gin;
            }
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn flatten_grads(grads: Vec<DenseGrad>) -> Vec<Matrix> {
        grads.into_iter().flat_map(|g| [g.weights, g.bias]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    AdaptiveMoments,
}

/// Stateful optimizer over an ordered parameter list.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
        momentum: f64,
        velocity: Vec<Matrix>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Matrix>,
        v: Vec<Matrix>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => Optimizer::Sgd {
                lr,
                momentum: 0.9,
                velocity: vec![],
            },
            OptimizerKind::AdaptiveMoments => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: vec![],
                v: vec![],
            },
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(dim_err("Optimizer::step", params.len(), grads.len()));
        }
        match self {
            Optimizer::Sgd {
                lr,
                momentum,
                velocity,
            } => {
                if velocity.is_empty() {
                    *velocity = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                }
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    p.same_shape(g, "Optimizer::step")?;
                    for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                        *vv = *momentum * *vv + gv;
                        *pv -= *lr * *vv;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                if m.is_empty() {
                    *m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                    *v = m.clone();
                }
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for (((p, g), mm), vv) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                    p.same_shape(g, "Optimizer::step")?;
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(mm.data_mut())
                        .zip(vv.data_mut())
                    {
                        *mv = *beta1 * *mv + (1.0 - *beta1) * gv;
                        *vv = *beta2 * *vv + (1.0 - *beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= *lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}
