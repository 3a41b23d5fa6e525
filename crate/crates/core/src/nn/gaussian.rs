//! Diagonal Gaussian utilities: reparameterized sampling and closed-form KL.

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -8.0;
pub const LOG_STD_MAX: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::DimensionMismatch {
                what: "gaussian log_std",
                expected: mean.len(),
                got: log_std.len(),
            });
        }
        let log_std = log_std.into_iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Which KL direction to use against the unit normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(N(μ, σ) ‖ N(0, I))`, the usual ELBO term.
    #[default]
    Standard,
    /// `KL(N(0, I) ‖ N(μ, σ))`.
    AsWritten,
}

/// `z = μ + exp(log σ) ⊙ noise`.
pub fn reparameterize(g: &GaussianParams, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            what: "noise",
            expected: g.dim(),
            got: noise.len(),
        });
    }
    Ok((0..g.dim()).map(|k| g.mean[k] + g.log_std[k].exp() * noise[k]).collect())
}

pub fn kl_divergence(g: &GaussianParams, direction: KlDirection) -> f64 {
    g.mean
        .iter()
        .zip(&g.log_std)
        .map(|(m, ls)| match direction {
            KlDirection::Standard => 0.5 * (m * m + (2.0 * ls).exp() - 1.0) - ls,
            KlDirection::AsWritten => ls + 0.5 * (1.0 + m * m) * (-2.0 * ls).exp() - 0.5,
        })
        .sum()
}

/// Differentiable reparameterization on the tape.
pub fn reparameterize_on(tape: &mut Tape, mean: Var, log_std: Var, noise: Tensor) -> Var {
    let std = tape.exp(log_std);
    let scaled = tape.mul_const(std, noise);
    tape.add(mean, scaled)
}

/// KL summed over every row and latent dimension, as a `[1, 1]` node.
pub fn kl_on(tape: &mut Tape, mean: Var, log_std: Var, direction: KlDirection) -> Var {
    let (rows, cols) = tape.value(mean).shape();
    let mu2 = tape.mul(mean, mean);
    let body = match direction {
        KlDirection::Standard => {
            let two = tape.scale(log_std, 2.0);
            let var = tape.exp(two);
            let s = tape.add(mu2, var);
            let half = tape.scale(s, 0.5);
            tape.sub(half, log_std)
        }
        KlDirection::AsWritten => {
            let ones = tape.constant(Tensor::filled(rows, cols, 1.0));
            let num = tape.add(mu2, ones);
            let m2 = tape.scale(log_std, -2.0);
            let inv_var = tape.exp(m2);
            let q = tape.mul(num, inv_var);
            let half = tape.scale(q, 0.5);
            tape.add(half, log_std)
        }
    };
    let sum = tape.sum_all(body);
    let offset = tape.constant(Tensor::scalar(-0.5 * (rows * cols) as f64));
    tape.add(sum, offset)
}
