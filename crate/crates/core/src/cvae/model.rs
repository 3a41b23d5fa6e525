//! Encoder/decoder pair, feature normalization and the forward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::diff::TapeSkeleton;
use crate::body::{PoseDelta, Skeleton};
use crate::error::{Error, Result};
use crate::intention::ConditionVector;
use crate::nn::gaussian::{LOG_STD_MAX, LOG_STD_MIN};
use crate::nn::{GaussianParams, Mlp, MlpConfig, Mode, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: MlpConfig,
    pub decoder: MlpConfig,
    pub latent: usize,
}

impl ModelSpec {
    /// Encoder and decoder with the same depth, width and dropout.
    pub fn new(joints: usize, latent: usize, layers: usize, hidden: usize, dropout: f64) -> Self {
        let delta = delta_dim(joints);
        let cond = ConditionVector::dim(joints);
        let mlp = |input, output| MlpConfig {
            layers,
            hidden,
            input,
            output,
            dropout,
            layer_norm: true,
        };
        Self {
            encoder: mlp(delta + cond, 2 * latent),
            decoder: mlp(latent + cond, delta),
            latent,
        }
    }

    pub fn joints(&self) -> usize {
        (self.decoder.output - 9) / 6
    }

    pub fn delta_dim(&self) -> usize {
        self.decoder.output
    }

    pub fn condition_dim(&self) -> usize {
        self.decoder.input - self.latent
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(format!("model spec: {m}")));
        if self.latent == 0 {
            return bad("latent dimension must be positive");
        }
        if self.decoder.output < 9 || (self.decoder.output - 9) % 6 != 0 {
            return bad("decoder output is not a pose delta");
        }
        if self.condition_dim() != ConditionVector::dim(self.joints()) {
            return bad("decoder input is not latent + condition");
        }
        if self.encoder.input != self.delta_dim() + self.condition_dim() {
            return bad("encoder input is not delta + condition");
        }
        if self.encoder.output != 2 * self.latent {
            return bad("encoder output is not twice the latent dimension");
        }
        Ok(())
    }
}

pub fn delta_dim(joints: usize) -> usize {
    9 + 6 * joints
}

/// Per-feature affine standardization of deltas and conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub delta_mean: Vec<f64>,
    pub delta_std: Vec<f64>,
    pub cond_mean: Vec<f64>,
    pub cond_std: Vec<f64>,
}

pub const DELTA_STD_FLOOR: f64 = 1e-4;
pub const COND_STD_FLOOR: f64 = 1e-2;

fn moments(rows: &[Vec<f64>], width: usize, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for r in rows {
        for k in 0..width {
            var[k] += (r[k] - mean[k]).powi(2) / n;
        }
    }
    (mean, var.into_iter().map(|v| v.sqrt().max(floor)).collect())
}

impl Normalizer {
    pub fn identity(delta: usize, cond: usize) -> Self {
        Self {
            delta_mean: vec![0.0; delta],
            delta_std: vec![1.0; delta],
            cond_mean: vec![0.0; cond],
            cond_std: vec![1.0; cond],
        }
    }

    pub fn fit(deltas: &[Vec<f64>], conditions: &[Vec<f64>]) -> Result<Self> {
        let (Some(d), Some(c)) = (deltas.first(), conditions.first()) else {
            return Err(Error::InvalidConfig("normalizer needs at least one sample".into()));
        };
        let (delta_mean, delta_std) = moments(deltas, d.len(), DELTA_STD_FLOOR);
        let (cond_mean, cond_std) = moments(conditions, c.len(), COND_STD_FLOOR);
        Ok(Self {
            delta_mean,
            delta_std,
            cond_mean,
            cond_std,
        })
    }

    pub fn normalize_delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter().zip(&self.delta_mean).zip(&self.delta_std).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn affine(mean: &[f64], std: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let scale: Vec<f64> = std.iter().map(|s| 1.0 / s).collect();
        let shift = mean.iter().zip(&scale).map(|(m, k)| -m * k).collect();
        (scale, shift)
    }
}

/// A conditional VAE over pose deltas.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub normalizer: Normalizer,
    pub skeleton: Skeleton,
    pub(crate) tape_skeleton: TapeSkeleton,
}

impl Model {
    pub fn new(spec: ModelSpec, skeleton: &Skeleton, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.joints() != skeleton.joint_count() {
            return Err(Error::DimensionMismatch {
                what: "model joints",
                expected: skeleton.joint_count(),
                got: spec.joints(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Mlp::new(spec.encoder.clone(), "encoder", &mut store, &mut rng)?;
        let decoder = Mlp::new(spec.decoder.clone(), "decoder", &mut store, &mut rng)?;
        let normalizer = Normalizer::identity(spec.delta_dim(), spec.condition_dim());
        Ok(Self {
            spec,
            store,
            encoder,
            decoder,
            normalizer,
            tape_skeleton: TapeSkeleton::new(skeleton),
            skeleton: skeleton.clone(),
        })
    }

    /// Rebuilds a model around an existing parameter store (checkpoint load).
    pub fn from_parts(spec: ModelSpec, skeleton: &Skeleton, store: ParamStore, normalizer: Normalizer) -> Result<Self> {
        spec.validate()?;
        let encoder = Mlp::bind(spec.encoder.clone(), "encoder", &store)?;
        let decoder = Mlp::bind(spec.decoder.clone(), "decoder", &store)?;
        if normalizer.delta_mean.len() != spec.delta_dim() || normalizer.cond_mean.len() != spec.condition_dim() {
            return Err(Error::CorruptFile("normalizer dimensions do not match the model".into()));
        }
        Ok(Self {
            spec,
            store,
            encoder,
            decoder,
            normalizer,
            tape_skeleton: TapeSkeleton::new(skeleton),
            skeleton: skeleton.clone(),
        })
    }

    pub fn tape_skeleton(&self) -> &TapeSkeleton {
        &self.tape_skeleton
    }

    /// Digest over spec, normalizer and every parameter value.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.spec).expect("spec serializes"));
        for v in [
            &self.normalizer.delta_mean,
            &self.normalizer.delta_std,
            &self.normalizer.cond_mean,
            &self.normalizer.cond_std,
        ] {
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        h.update(self.store.digest().as_bytes());
        h.update(self.skeleton.hash().as_bytes());
        crate::body::skeleton::hex16(&h.finalize())
    }

    fn normalized_condition(&self, tape: &mut Tape, cond: Var) -> Var {
        let (scale, shift) = Normalizer::affine(&self.normalizer.cond_mean, &self.normalizer.cond_std);
        tape.scale_shift(cond, &scale, &shift)
    }

    /// `(μ, log σ)` from raw deltas and raw conditions, both `[B, ·]`.
    pub fn encode_on(&self, tape: &mut Tape, delta: Var, cond: Var, mode: Mode) -> Result<(Var, Var)> {
        let (scale, shift) = Normalizer::affine(&self.normalizer.delta_mean, &self.normalizer.delta_std);
        let d = tape.scale_shift(delta, &scale, &shift);
        let c = self.normalized_condition(tape, cond);
        let x = tape.concat(&[d, c]);
        let out = self.encoder.forward(tape, &self.store, x, mode)?;
        let mu = tape.slice(out, 0, self.spec.latent);
        let ls = tape.slice(out, self.spec.latent, self.spec.latent);
        let ls = tape.clamp(ls, LOG_STD_MIN, LOG_STD_MAX);
        Ok((mu, ls))
    }

    /// Normalized delta prediction from latents and raw conditions.
    pub fn decode_normalized_on(&self, tape: &mut Tape, z: Var, cond: Var, mode: Mode) -> Result<Var> {
        let c = self.normalized_condition(tape, cond);
        let x = tape.concat(&[z, c]);
        self.decoder.forward(tape, &self.store, x, mode)
    }

    pub fn denormalize_on(&self, tape: &mut Tape, delta: Var) -> Var {
        tape.scale_shift(delta, &self.normalizer.delta_std, &self.normalizer.delta_mean)
    }

    /// Raw delta prediction.
    pub fn decode_on(&self, tape: &mut Tape, z: Var, cond: Var, mode: Mode) -> Result<Var> {
        let d = self.decode_normalized_on(tape, z, cond, mode)?;
        Ok(self.denormalize_on(tape, d))
    }

    pub fn encode(&self, delta: &PoseDelta, condition: &ConditionVector, mode: Mode) -> Result<GaussianParams> {
        self.check_condition(condition)?;
        let mut tape = Tape::new();
        let d = tape.constant(Tensor::row(delta.to_vec()));
        let c = tape.constant(Tensor::row(condition.to_vec()));
        let (mu, ls) = self.encode_on(&mut tape, d, c, mode)?;
        GaussianParams::new(tape.value(mu).data().to_vec(), tape.value(ls).data().to_vec())
    }

    pub fn decode(&self, z: &[f64], condition: &ConditionVector, mode: Mode) -> Result<PoseDelta> {
        self.check_condition(condition)?;
        if z.len() != self.spec.latent {
            return Err(Error::DimensionMismatch {
                what: "latent",
                expected: self.spec.latent,
                got: z.len(),
            });
        }
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::row(z.to_vec()));
        let c = tape.constant(Tensor::row(condition.to_vec()));
        let d = self.decode_on(&mut tape, zv, c, mode)?;
        PoseDelta::from_slice(tape.value(d).data(), self.spec.joints())
    }

    fn check_condition(&self, c: &ConditionVector) -> Result<()> {
        if c.len() != self.spec.condition_dim() {
            return Err(Error::DimensionMismatch {
                what: "condition",
                expected: self.spec.condition_dim(),
                got: c.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> (Skeleton, Model) {
        let s = Skeleton::desk();
        let m = Model::new(ModelSpec::new(s.joint_count(), 6, 2, 16, 0.1), &s, 9).unwrap();
        (s, m)
    }

    fn probe(m: &Model, seed: u64) -> (PoseDelta, ConditionVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = m.spec.joints();
        let d: Vec<f64> = (0..delta_dim(j)).map(|_| rng.random_range(-0.1..0.1)).collect();
        let c: Vec<f64> = (0..m.spec.condition_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let split = c.len() - 7;
        (
            PoseDelta::from_slice(&d, j).unwrap(),
            ConditionVector {
                state: c[..split].to_vec(),
                intention: c[split..].try_into().unwrap(),
            },
        )
    }

    #[test]
    fn spec_dimensions_line_up() {
        let spec = ModelSpec::new(15, 16, 4, 64, 0.1);
        assert_eq!(spec.delta_dim(), 3 + 6 + 6 * 15);
        assert_eq!(spec.encoder.input, spec.delta_dim() + spec.condition_dim());
        assert_eq!(spec.encoder.output, 32);
        assert_eq!(spec.decoder.input, 16 + spec.condition_dim());
        assert_eq!(spec.decoder.output, spec.delta_dim());
        spec.validate().unwrap();
    }

    #[test]
    fn encode_is_finite_and_deterministic() {
        let (_, m) = tiny();
        let (d, c) = probe(&m, 1);
        let a = m.encode(&d, &c, Mode::Eval).unwrap();
        let b = m.encode(&d, &c, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean.len() + a.log_std.len(), 2 * m.spec.latent);
        assert!(a.mean.iter().all(|v| v.is_finite()));
        assert!(a.log_std.iter().all(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v)));
    }

    #[test]
    fn decode_has_delta_layout() {
        let (s, m) = tiny();
        let (_, c) = probe(&m, 2);
        let z = vec![0.3; m.spec.latent];
        let a = m.decode(&z, &c, Mode::Eval).unwrap();
        assert_eq!(a.to_vec().len(), 3 + 6 + 6 * s.joint_count());
        assert_eq!(a, m.decode(&z, &c, Mode::Eval).unwrap());
        assert!(matches!(m.decode(&[0.0; 2], &c, Mode::Eval), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn decoder_gradient_matches_finite_differences() {
        let (_, m) = tiny();
        let (_, c) = probe(&m, 3);
        let z0: Vec<f64> = (0..m.spec.latent).map(|i| 0.2 * i as f64 - 0.5).collect();
        let weights: Vec<f64> = (0..m.spec.delta_dim()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let f = |z: &[f64]| -> f64 {
            let d = m.decode(z, &c, Mode::Eval).unwrap().to_vec();
            d.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut tape = Tape::new();
        let zv = tape.variable(Tensor::row(z0.clone()));
        let cv = tape.constant(Tensor::row(c.to_vec()));
        let out = m.decode_on(&mut tape, zv, cv, Mode::Eval).unwrap();
        let g = tape.backward(out, &Tensor::row(weights.clone()), &m.store).unwrap();
        let g = g.var(zv).unwrap().data().to_vec();
        for k in 0..z0.len() {
            let h = 1e-6;
            let (mut a, mut b) = (z0.clone(), z0.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "dim {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn normalizer_standardizes_with_floors() {
        let d = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let c = vec![vec![0.0], vec![0.0]];
        let n = Normalizer::fit(&d, &c).unwrap();
        assert_eq!(n.delta_mean, vec![2.0, 5.0]);
        assert_eq!(n.delta_std, vec![1.0, DELTA_STD_FLOOR]);
        assert_eq!(n.cond_std, vec![COND_STD_FLOOR]);
        assert_eq!(n.normalize_delta(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn hash_tracks_parameters() {
        let (s, m) = tiny();
        let same = Model::new(m.spec.clone(), &s, 9).unwrap();
        let other = Model::new(m.spec.clone(), &s, 10).unwrap();
        assert_eq!(m.hash(), same.hash());
        assert_ne!(m.hash(), other.hash());
    }
}
