//! Finite-difference verification of [`backward`].
//!
//! The reference loss here is an independent straight-line implementation in
//! `f64`; it shares nothing with the batched `f32` path except the
//! parameter values it is handed.

use crate::error::{Error, Result};
use crate::linalg::{uniform_matrix, Matrix, Rng};

use super::{backward, forward, init_params, AutoencoderParams};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-4;

/// Hidden pre-activations closer than this to zero are redrawn, so that no
/// finite-difference probe straddles the relu/L1 kink.
pub const KINK_MARGIN: f64 = 1e-2;

/// Magnitude below which gradient entries are compared absolutely:
/// `rel = |a - fd| / max(|a|, |fd|, GRAD_FLOOR)`.
pub const GRAD_FLOOR: f64 = 1e-6;

const MAX_DIM: usize = 16;
const MAX_DRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Block (0 enc_w, 1 enc_b, 2 dec_w, 3 dec_b) and index of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

struct Net64 {
    n: usize,
    m: usize,
    blocks: [Vec<f64>; 4],
}

impl Net64 {
    fn from_params(p: &AutoencoderParams) -> Self {
        let b = p.blocks();
        let conv = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        Self {
            n: p.input_dim(),
            m: p.hidden_dim(),
            blocks: [conv(b[0]), conv(b[1]), conv(b[2]), conv(b[3])],
        }
    }

    fn pre_hidden(&self, x: &[f64], b: usize) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let [w1, b1, _, _] = &self.blocks;
        (0..m)
            .map(|j| {
                let mut z = b1[j];
                for i in 0..n {
                    z += w1[j * n + i] * x[b * n + i];
                }
                z
            })
            .collect()
    }

    fn loss(&self, x: &[f64], t: &[f64], batch: usize, alpha: f64) -> f64 {
        let (n, m) = (self.n, self.m);
        let [_, _, w2, b2] = &self.blocks;
        let mut sq = 0.0;
        let mut l1 = 0.0;
        for b in 0..batch {
            let h: Vec<f64> = self.pre_hidden(x, b).into_iter().map(|z| z.max(0.0)).collect();
            l1 += h.iter().map(|v| v.abs()).sum::<f64>();
            for i in 0..n {
                let mut z = b2[i];
                for j in 0..m {
                    z += w2[i * m + j] * h[j];
                }
                let y = 1.0 / (1.0 + (-z).exp());
                sq += (y - t[b * n + i]).powi(2);
            }
        }
        sq / (batch * n) as f64 + alpha * l1
    }
}

/// Builds a random network and batch from `seed`, then compares the
/// analytic gradient against central differences of the `f64` loss.
/// Returns the worst relative error over every parameter entry.
pub fn gradcheck(n: usize, m: usize, batch: usize, alpha: f64, seed: u64) -> Result<GradcheckReport> {
    if [n, m, batch].iter().any(|&d| d == 0 || d > MAX_DIM) {
        return Err(Error::Param(format!(
            "gradcheck dimensions must be in 1..={MAX_DIM}, got n={n}, hidden={m}, batch={batch}"
        )));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::Param(format!("alpha must be >= 0, got {alpha}")));
    }
    let mut rng = Rng::new(seed);
    let (params, x, target) = draw_case(n, m, batch, &mut rng)?;

    let trace = forward(&params, &x)?;
    let grads = backward(&params, &trace, &target, alpha)?;

    let x64: Vec<f64> = x.as_slice().iter().map(|&v| v as f64).collect();
    let t64: Vec<f64> = target.as_slice().iter().map(|&v| v as f64).collect();
    let mut net = Net64::from_params(&params);

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (bi, analytic) in grads.blocks().iter().enumerate() {
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = net.blocks[bi][idx];
            net.blocks[bi][idx] = orig + GRADCHECK_STEP;
            let up = net.loss(&x64, &t64, batch, alpha);
            net.blocks[bi][idx] = orig - GRADCHECK_STEP;
            let down = net.loss(&x64, &t64, batch, alpha);
            net.blocks[bi][idx] = orig;

            let fd = (up - down) / (2.0 * GRADCHECK_STEP);
            let a = a as f64;
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (bi, idx);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Random parameters (nonzero biases), inputs and targets, redrawn until
/// every hidden pre-activation is at least [`KINK_MARGIN`] away from zero.
fn draw_case(n: usize, m: usize, batch: usize, rng: &mut Rng) -> Result<(AutoencoderParams, Matrix, Matrix)> {
    for _ in 0..MAX_DRAWS {
        let p = init_params(n, m, rng)?;
        let enc_b = uniform_matrix(rng, 1, m, -0.5, 0.5)?.into_vec();
        let dec_b = uniform_matrix(rng, 1, n, -0.5, 0.5)?.into_vec();
        let p = AutoencoderParams::from_parts(p.encoder_weights().clone(), enc_b, p.decoder_weights().clone(), dec_b)?;
        let x = uniform_matrix(rng, batch, n, 0.0, 1.0)?;
        let target = uniform_matrix(rng, batch, n, 0.0, 1.0)?;

        let net = Net64::from_params(&p);
        let x64: Vec<f64> = x.as_slice().iter().map(|&v| v as f64).collect();
        let clear = (0..batch).all(|b| net.pre_hidden(&x64, b).iter().all(|z| z.abs() >= KINK_MARGIN));
        if clear {
            return Ok((p, x, target));
        }
    }
    Err(Error::Numeric(format!(
        "no kink-free gradcheck case found in {MAX_DRAWS} draws"
    )))
}
