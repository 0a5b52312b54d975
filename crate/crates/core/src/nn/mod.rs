//! Single-hidden-layer autoencoder: `relu` encoder, `sigmoid` decoder,
//! mean-squared-error loss with an optional L1 penalty on hidden
//! activations, hand-written backpropagation and Adam.
//!
//! Shapes: `n` is the input/output width, `m` the hidden width, `B` the
//! batch size. Batches are row-major, one sample per row.
//!
//! ```text
//! z = x W_enc^T + b_enc        (B x m)
//! h = relu(z)
//! y = sigmoid(h W_dec^T + b_dec)   (B x n)
//! ```

mod adam;
mod gradcheck;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_STEP, GRAD_FLOOR, KINK_MARGIN};

use crate::error::{Error, Result};
use crate::linalg::{matmul, uniform_matrix, Matrix, Rng};

// sigmoid outputs are kept strictly inside (0, 1) after rounding to f32
const SIGMOID_LO: f32 = f32::MIN_POSITIVE;
const SIGMOID_HI: f32 = 1.0 - f32::EPSILON / 2.0;

/// Learnable parameters of one autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    enc_w: Matrix,
    enc_b: Vec<f32>,
    dec_w: Matrix,
    dec_b: Vec<f32>,
}

impl AutoencoderParams {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            enc_w: Matrix::zeros(m, n),
            enc_b: vec![0.0; m],
            dec_w: Matrix::zeros(n, m),
            dec_b: vec![0.0; n],
        }
    }

    /// Assembles parameters from an `m x n` encoder matrix, `m` encoder
    /// biases, an `n x m` decoder matrix and `n` decoder biases.
    pub fn from_parts(enc_w: Matrix, enc_b: Vec<f32>, dec_w: Matrix, dec_b: Vec<f32>) -> Result<Self> {
        let (m, n) = enc_w.shape();
        if dec_w.shape() != (n, m) || enc_b.len() != m || dec_b.len() != n {
            return Err(Error::Shape {
                op: "AutoencoderParams::from_parts",
                left: enc_w.shape(),
                right: dec_w.shape(),
            });
        }
        if n == 0 || m == 0 {
            return Err(Error::Param("autoencoder dimensions must be nonzero".into()));
        }
        let p = Self {
            enc_w,
            enc_b,
            dec_w,
            dec_b,
        };
        if !p.blocks().iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::Value("non-finite parameter".into()));
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_w.rows()
    }

    pub fn encoder_weights(&self) -> &Matrix {
        &self.enc_w
    }

    pub fn encoder_bias(&self) -> &[f32] {
        &self.enc_b
    }

    pub fn decoder_weights(&self) -> &Matrix {
        &self.dec_w
    }

    pub fn decoder_bias(&self) -> &[f32] {
        &self.dec_b
    }

    /// Parameter blocks in storage order: encoder weights, encoder bias,
    /// decoder weights, decoder bias.
    pub fn blocks(&self) -> [&[f32]; 4] {
        [self.enc_w.as_slice(), &self.enc_b, self.dec_w.as_slice(), &self.dec_b]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f32]; 4] {
        [
            self.enc_w.as_mut_slice(),
            &mut self.enc_b,
            self.dec_w.as_mut_slice(),
            &mut self.dec_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

/// Gradients with the same layout as [`AutoencoderParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub enc_w: Matrix,
    pub enc_b: Vec<f32>,
    pub dec_w: Matrix,
    pub dec_b: Vec<f32>,
}

impl Gradients {
    pub fn blocks(&self) -> [&[f32]; 4] {
        [self.enc_w.as_slice(), &self.enc_b, self.dec_w.as_slice(), &self.dec_b]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f32 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0f32, |acc, v| acc.max(v.abs()))
    }
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub pre_hidden: Matrix,
    pub hidden: Matrix,
    pub output: Matrix,
}

/// Glorot-uniform weights on `[-L, L)` with `L = sqrt(6 / (n + m))`, zero
/// biases. The encoder matrix is drawn first, then the decoder matrix.
pub fn init_params(n: usize, m: usize, rng: &mut Rng) -> Result<AutoencoderParams> {
    if n == 0 || m == 0 {
        return Err(Error::Param(format!(
            "autoencoder dimensions must be nonzero, got n={n}, hidden={m}"
        )));
    }
    let limit = (6.0f64 / (n + m) as f64).sqrt() as f32;
    let enc_w = uniform_matrix(rng, m, n, -limit, limit)?;
    let dec_w = uniform_matrix(rng, n, m, -limit, limit)?;
    Ok(AutoencoderParams {
        enc_w,
        enc_b: vec![0.0; m],
        dec_w,
        dec_b: vec![0.0; n],
    })
}

fn add_bias_rows(m: &mut Matrix, bias: &[f32]) {
    for i in 0..m.rows() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn sigmoid(z: f32) -> f32 {
    let y = (1.0 / (1.0 + (-(z as f64)).exp())) as f32;
    y.clamp(SIGMOID_LO, SIGMOID_HI)
}

/// Runs a batch through the encoder and decoder.
pub fn forward(p: &AutoencoderParams, x: &Matrix) -> Result<ForwardTrace> {
    if x.cols() != p.input_dim() {
        return Err(Error::Shape {
            op: "forward",
            left: x.shape(),
            right: p.enc_w.shape(),
        });
    }
    let mut pre_hidden = matmul(x, &p.enc_w.transpose())?;
    add_bias_rows(&mut pre_hidden, &p.enc_b);
    let hidden = pre_hidden.map(|v| v.max(0.0));
    let mut output = matmul(&hidden, &p.dec_w.transpose())?;
    add_bias_rows(&mut output, &p.dec_b);
    let output = output.map(sigmoid);
    Ok(ForwardTrace {
        input: x.clone(),
        pre_hidden,
        hidden,
        output,
    })
}

/// Reconstructions only; skips keeping the trace.
pub fn reconstruct(p: &AutoencoderParams, x: &Matrix) -> Result<Matrix> {
    forward(p, x).map(|t| t.output)
}

/// Mean of squared differences over every entry of the batch.
pub fn mse_loss(output: &Matrix, target: &Matrix) -> Result<f64> {
    if output.shape() != target.shape() {
        return Err(Error::Shape {
            op: "mse_loss",
            left: output.shape(),
            right: target.shape(),
        });
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = output
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(ss / output.as_slice().len() as f64)
}

/// `alpha * sum |h|` over the whole batch (a sum, not a mean).
pub fn l1_activity_penalty(hidden: &Matrix, alpha: f64) -> f64 {
    alpha * hidden.as_slice().iter().map(|&v| (v as f64).abs()).sum::<f64>()
}

/// Gradients of `mse_loss(y, target) + l1_activity_penalty(h, alpha)` with
/// respect to all four parameter blocks.
///
/// `relu'(0)` and the L1 subgradient at 0 are both taken as 0.
pub fn backward(p: &AutoencoderParams, trace: &ForwardTrace, target: &Matrix, alpha: f64) -> Result<Gradients> {
    let y = &trace.output;
    if target.shape() != y.shape() {
        return Err(Error::Shape {
            op: "backward",
            left: y.shape(),
            right: target.shape(),
        });
    }
    if trace.hidden.cols() != p.hidden_dim() || y.cols() != p.input_dim() {
        return Err(Error::Shape {
            op: "backward",
            left: trace.hidden.shape(),
            right: p.enc_w.shape(),
        });
    }
    let count = y.as_slice().len().max(1);
    let scale = (2.0 / count as f64) as f32;

    // dL/d(decoder pre-activation)
    let mut d_out = Matrix::zeros(y.rows(), y.cols());
    for ((d, &yv), &tv) in d_out.as_mut_slice().iter_mut().zip(y.as_slice()).zip(target.as_slice()) {
        *d = scale * (yv - tv) * yv * (1.0 - yv);
    }

    let dec_w = matmul(&trace.hidden.transpose(), &d_out)?.transpose();
    let dec_b = d_out.column_sums();

    let mut d_hidden = matmul(&d_out, &p.dec_w)?;
    let alpha = alpha as f32;
    for (d, &z) in d_hidden.as_mut_slice().iter_mut().zip(trace.pre_hidden.as_slice()) {
        // h > 0 exactly when z > 0, so the L1 subgradient rides on the relu gate
        *d = if z > 0.0 { *d + alpha } else { 0.0 };
    }

    let enc_w = matmul(&d_hidden.transpose(), &trace.input)?;
    let enc_b = d_hidden.column_sums();

    Ok(Gradients {
        enc_w,
        enc_b,
        dec_w,
        dec_b,
    })
}
