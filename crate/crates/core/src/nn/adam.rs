use crate::error::{Error, Result};

use super::{AutoencoderParams, Gradients};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Moment accumulators for a list of parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            first: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, p: &AutoencoderParams) -> Self {
        let lens: Vec<usize> = p.blocks().iter().map(|b| b.len()).collect();
        Self::new(config, &lens)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.second
    }
}

/// Stateless driver over [`AdamState`] for arbitrary parameter blocks.
pub struct Adam;

impl Adam {
    /// One bias-corrected Adam update:
    ///
    /// ```text
    /// m = b1 m + (1 - b1) g
    /// v = b2 v + (1 - b2) g^2
    /// theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    /// ```
    ///
    /// Non-finite gradients abort the step before anything is modified.
    pub fn step(state: &mut AdamState, params: &mut [&mut [f32]], grads: &[&[f32]]) -> Result<()> {
        if params.len() != state.first.len() || grads.len() != state.first.len() {
            return Err(Error::Param(format!(
                "adam state has {} blocks, got {} params and {} gradients",
                state.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.first).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Param(format!(
                    "block {i}: adam state has {} entries, params {} gradients {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        if let Some(bad) = grads.iter().flat_map(|g| g.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient ({bad}) at optimizer step {}",
                state.t + 1
            )));
        }

        state.t += 1;
        let c = state.config;
        let t = state.t as i32;
        let b1 = c.beta1 as f32;
        let b2 = c.beta2 as f32;
        let one_minus_b1 = (1.0 - c.beta1) as f32;
        let one_minus_b2 = (1.0 - c.beta2) as f32;
        let bias1 = (1.0 - c.beta1.powi(t)) as f32;
        let bias2 = (1.0 - c.beta2.powi(t)) as f32;
        let lr = c.lr as f32;
        let eps = c.eps as f32;

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(state.first.iter_mut().zip(state.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + one_minus_b1 * gv;
                *vv = b2 * *vv + one_minus_b2 * gv * gv;
                let m_hat = *mv / bias1;
                let v_hat = *vv / bias2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(p: &mut AutoencoderParams, g: &Gradients, s: &mut AdamState) -> Result<()> {
    let grads = g.blocks();
    let mut blocks = p.blocks_mut();
    Adam::step(s, &mut blocks, &grads)
}
