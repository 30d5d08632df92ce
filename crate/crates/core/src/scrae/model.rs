use serde::{Deserialize, Serialize};

use super::spec::EncoderSpec;
use super::{PredLoss, ReprLoss};
use crate::error::{dim_err, Result};
use crate::losses::{ClassCenters, LossWeights};
use crate::numeric::nn::{Activation, Dense, DenseGrad, Mlp};
use crate::numeric::{Matrix, Rng};

/// Provenance recorded with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub weights: LossWeights,
    pub repr_loss: Option<ReprLoss>,
    pub pred_loss: Option<PredLoss>,
    /// Kernel bandwidth actually used (after automatic selection).
    pub sigma: Option<f64>,
    /// Resolved run configuration, when trained from one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub spec: EncoderSpec,
    pub encoder: Vec<Dense>,
    pub decoder: Mlp,
    /// Linear map Ψ → predictions (logits for a classifier).
    pub head: Dense,
    /// Linear map Ψ → 2.
    pub projection: Dense,
    pub centers: Option<ClassCenters>,
    pub meta: TrainMeta,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Output of each encoder layer.
    pub activations: Vec<Matrix>,
    /// Concatenation of all encoder layer outputs.
    pub psi: Matrix,
    /// Bottleneck output.
    pub z: Matrix,
    /// Output of each decoder layer; the last is `x_hat`.
    pub decoder_outputs: Vec<Matrix>,
    pub x_hat: Matrix,
    pub y_hat: Matrix,
    pub psi2: Matrix,
}

impl EncoderModel {
    /// Fresh parameters drawn from `seed`.
    pub fn init(spec: &EncoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self::build(spec, seed))
    }

    /// Builds without the architectural checks; the spec must still have at
    /// least one positive-width layer.
    pub(crate) fn build(spec: &EncoderSpec, seed: u64) -> Self {
        let mut rng = Rng::derive(seed, 0x1417);
        let act = spec.activation;
        let mut encoder = Vec::with_capacity(spec.widths.len());
        let mut fan_in = spec.input_dim;
        for &w in &spec.widths {
            encoder.push(Dense::init(fan_in, w, act, &mut rng));
            fan_in = w;
        }
        let mut dec_widths = vec![spec.latent_dim()];
        dec_widths.extend(spec.decoder_hidden());
        dec_widths.push(spec.input_dim);
        let decoder = Mlp::new(&dec_widths, act, Activation::Identity, &mut rng);
        let psi = spec.psi_dim();
        let head = Dense::init(psi, spec.head.output_dim(), Activation::Identity, &mut rng);
        let projection = Dense::init(psi, 2, Activation::Identity, &mut rng);
        Self {
            spec: spec.clone(),
            encoder,
            decoder,
            head,
            projection,
            centers: None,
            meta: TrainMeta::default(),
        }
    }

    /// All parameters zero.
    pub fn zeros(spec: &EncoderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::zeros_unchecked(spec))
    }

    pub(crate) fn zeros_unchecked(spec: &EncoderSpec) -> Self {
        let mut m = Self::build(spec, 0);
        for p in m.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(dim_err("EncoderModel::forward", self.spec.input_dim, x.cols()));
        }
        Ok(())
    }

    fn encoder_activations(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        self.check_input(x)?;
        let mut outs: Vec<Matrix> = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let next = layer.forward(outs.last().unwrap_or(x))?;
            outs.push(next);
        }
        Ok(outs)
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        let activations = self.encoder_activations(x)?;
        let refs: Vec<&Matrix> = activations.iter().collect();
        let psi = Matrix::hcat(&refs)?;
        let z = activations.last().expect("validated spec has a layer").clone();
        let decoder_outputs = self.decoder.forward_cached(&z)?;
        let x_hat = decoder_outputs.last().cloned().unwrap_or_else(|| z.clone());
        let y_hat = self.head.forward(&psi)?;
        let psi2 = self.projection.forward(&psi)?;
        Ok(ForwardPass {
            activations,
            psi,
            z,
            decoder_outputs,
            x_hat,
            y_hat,
            psi2,
        })
    }

    /// Multi-level latent only.
    pub fn psi(&self, x: &Matrix) -> Result<Matrix> {
        let a = self.encoder_activations(x)?;
        let refs: Vec<&Matrix> = a.iter().collect();
        Matrix::hcat(&refs)
    }

    /// Bottleneck output at full precision (trusted side only).
    pub fn bottleneck(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encoder_activations(x)?.pop().expect("validated spec has a layer"))
    }

    /// Supervised head output (logits for a classifier).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.head.forward(&self.psi(x)?)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder.layers).chain([&self.head, &self.projection]) {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in self
            .encoder
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
            .chain([&mut self.head, &mut self.projection])
        {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out
    }

    /// Names matching [`params`](Self::params) order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |prefix: String| {
            out.push(format!("{prefix}.weights"));
            out.push(format!("{prefix}.bias"));
        };
        for i in 0..self.encoder.len() {
            push(format!("encoder.{i}"));
        }
        for i in 0..self.decoder.layers.len() {
            push(format!("decoder.{i}"));
        }
        push("head".into());
        push("projection".into());
        out
    }

    /// Operators appearing in the computation graph.
    pub fn operators(&self) -> Vec<String> {
        let mut ops = vec!["affine".to_string()];
        if let Some(name) = self.spec.activation.operator_name() {
            ops.push(name.to_string());
        }
        ops.push("concat".into());
        ops.push("linear_head".into());
        if matches!(self.spec.head, super::Head::Classifier { .. }) {
            ops.push("softmax".into());
        }
        ops
    }

    /// Zeroed gradient buffers in parameter order.
    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.params().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect()
    }

    /// Backpropagates seeds on `Ψ` and `z` through the encoder. Returns the
    /// encoder parameter gradients in layer order.
    pub(crate) fn backward_encoder(&self, x: &Matrix, fp: &ForwardPass, dpsi: &Matrix, dz: Option<&Matrix>) -> Result<Vec<DenseGrad>> {
        let l = self.encoder.len();
        let mut offsets = Vec::with_capacity(l);
        let mut o = 0;
        for &w in &self.spec.widths {
            offsets.push(o..o + w);
            o += w;
        }
        let mut grads: Vec<Option<DenseGrad>> = (0..l).map(|_| None).collect();
        let mut g = dpsi.select_cols(offsets[l - 1].clone());
        if let Some(dz) = dz {
            g.add_assign(dz)?;
        }
        for i in (0..l).rev() {
            let input = if i == 0 { x } else { &fp.activations[i - 1] };
            let (gin, pg) = self.encoder[i].backward(input, &fp.activations[i], &g, i > 0)?;
            grads[i] = Some(pg);
            if let Some(mut gin) = gin {
                gin.add_assign(&dpsi.select_cols(offsets[i - 1].clone()))?;
                g = gin;
            }
        }
        Ok(grads.into_iter().map(|g| g.expect("filled above")).collect())
    }

    /// Backpropagates `dx_hat` through the decoder; returns its parameter
    /// gradients and the gradient reaching `z`.
    pub(crate) fn backward_decoder(&self, fp: &ForwardPass, dx_hat: &Matrix) -> Result<(Vec<DenseGrad>, Matrix)> {
        let layers = &self.decoder.layers;
        let mut grads: Vec<Option<DenseGrad>> = (0..layers.len()).map(|_| None).collect();
        let mut g = dx_hat.clone();
        for i in (0..layers.len()).rev() {
            let input = if i == 0 { &fp.z } else { &fp.decoder_outputs[i - 1] };
            let (gin, pg) = layers[i].backward(input, &fp.decoder_outputs[i], &g, true)?;
            grads[i] = Some(pg);
            g = gin.expect("input gradient requested");
        }
        Ok((grads.into_iter().map(|g| g.expect("filled above")).collect(), g))
    }
}

/// Free-function form of [`EncoderModel::forward`].
pub fn forward_multilevel(model: &EncoderModel, x: &Matrix) -> Result<ForwardPass> {
    model.forward(x)
}

/// Row-major 32-bit latents, the only form in which encodings leave the
/// trusted side.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl LatentBatch {
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            dim: m.cols(),
            data: m.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(self.rows, self.dim, self.data.iter().map(|&v| v as f64).collect())
            .expect("length matches by construction")
    }

    /// Rounds again through 32 bits; a no-op on already quantized data.
    pub fn requantize(&self) -> Self {
        Self::from_matrix(&self.to_matrix())
    }
}

/// Bottleneck latents quantized to 32-bit floats.
pub fn encode_batch(model: &EncoderModel, x: &Matrix) -> Result<LatentBatch> {
    Ok(LatentBatch::from_matrix(&model.bottleneck(x)?))
}
