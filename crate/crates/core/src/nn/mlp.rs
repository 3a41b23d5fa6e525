//! Multi-layer perceptron: `layers` hidden blocks of
//! affine → layer norm → relu → dropout, followed by an output affine.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Number of hidden blocks (the output affine comes on top).
    pub layers: usize,
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
    pub dropout: f64,
    pub layer_norm: bool,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidConfig("mlp needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.hidden == 0 || self.input == 0 || self.output == 0 {
            return Err(Error::InvalidConfig("mlp widths must be positive".into()));
        }
        Ok(())
    }
}

/// Dropout is active only in training mode, with a mask drawn from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
struct Block {
    w: ParamId,
    b: ParamId,
    norm: Option<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    cfg: MlpConfig,
    prefix: String,
    blocks: Vec<Block>,
    out_w: ParamId,
    out_b: ParamId,
}

impl Mlp {
    /// Registers freshly initialized parameters under `prefix`.
    pub fn new<R: Rng + ?Sized>(cfg: MlpConfig, prefix: &str, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut init = |rows: usize, cols: usize, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
        };
        let mut blocks = Vec::with_capacity(cfg.layers);
        let mut width = cfg.input;
        for i in 0..cfg.layers {
            let w = store.add(format!("{prefix}.h{i}.w"), init(cfg.hidden, width, (2.0 / width as f64).sqrt()));
            let b = store.add(format!("{prefix}.h{i}.b"), Tensor::zeros(1, cfg.hidden));
            let norm = cfg.layer_norm.then(|| {
                (
                    store.add(format!("{prefix}.h{i}.ln_gain"), Tensor::filled(1, cfg.hidden, 1.0)),
                    store.add(format!("{prefix}.h{i}.ln_bias"), Tensor::zeros(1, cfg.hidden)),
                )
            });
            blocks.push(Block { w, b, norm });
            width = cfg.hidden;
        }
        let out_w = store.add(format!("{prefix}.out.w"), init(cfg.output, width, (1.0 / width as f64).sqrt()));
        let out_b = store.add(format!("{prefix}.out.b"), Tensor::zeros(1, cfg.output));
        Ok(Self {
            cfg,
            prefix: prefix.to_string(),
            blocks,
            out_w,
            out_b,
        })
    }

    /// Looks up parameters already present in `store` (e.g. after loading).
    pub fn bind(cfg: MlpConfig, prefix: &str, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let find = |name: String, rows: usize, cols: usize| -> Result<ParamId> {
            let id = store
                .id(&name)
                .ok_or_else(|| Error::CorruptFile(format!("missing parameter {name}")))?;
            if store.get(id).shape() != (rows, cols) {
                return Err(Error::CorruptFile(format!("parameter {name} has wrong shape")));
            }
            Ok(id)
        };
        let mut blocks = Vec::with_capacity(cfg.layers);
        let mut width = cfg.input;
        for i in 0..cfg.layers {
            let w = find(format!("{prefix}.h{i}.w"), cfg.hidden, width)?;
            let b = find(format!("{prefix}.h{i}.b"), 1, cfg.hidden)?;
            let norm = if cfg.layer_norm {
                Some((
                    find(format!("{prefix}.h{i}.ln_gain"), 1, cfg.hidden)?,
                    find(format!("{prefix}.h{i}.ln_bias"), 1, cfg.hidden)?,
                ))
            } else {
                None
            };
            blocks.push(Block { w, b, norm });
            width = cfg.hidden;
        }
        let out_w = find(format!("{prefix}.out.w"), cfg.output, width)?;
        let out_b = find(format!("{prefix}.out.b"), 1, cfg.output)?;
        Ok(Self {
            cfg,
            prefix: prefix.to_string(),
            blocks,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let width = tape.value(x).cols();
        if width != self.cfg.input {
            return Err(Error::DimensionMismatch {
                what: "mlp input",
                expected: self.cfg.input,
                got: width,
            });
        }
        let mut h = x;
        for (i, block) in self.blocks.iter().enumerate() {
            let (w, b) = (tape.param(store, block.w), tape.param(store, block.b));
            h = tape.affine(h, w, b);
            if let Some((g, o)) = block.norm {
                let (g, o) = (tape.param(store, g), tape.param(store, o));
                h = tape.layer_norm(h, g, o);
            }
            h = tape.relu(h);
            if let (Mode::Train { seed }, p) = (mode, self.cfg.dropout) {
                if p > 0.0 {
                    let rows = tape.value(h).rows();
                    let mut rng = rng_for(seed, &[i as u64]);
                    let keep = 1.0 / (1.0 - p);
                    let mask = (0..rows * self.cfg.hidden)
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    h = tape.mul_const(h, Tensor::from_vec(rows, self.cfg.hidden, mask));
                }
            }
            if !tape.value(h).is_finite() {
                return Err(Error::NumericFault {
                    context: self.prefix.clone(),
                    layer: Some(i),
                });
            }
        }
        let (w, b) = (tape.param(store, self.out_w), tape.param(store, self.out_b));
        let y = tape.affine(h, w, b);
        if !tape.value(y).is_finite() {
            return Err(Error::NumericFault {
                context: self.prefix.clone(),
                layer: Some(self.blocks.len()),
            });
        }
        Ok(y)
    }
}

/// A completed forward pass over a fresh tape.
#[derive(Debug)]
pub struct MlpForward {
    pub output: Tensor,
    pub tape: Tape,
    pub input: Var,
    pub out: Var,
}

pub fn mlp_forward(mlp: &Mlp, store: &ParamStore, input: &Tensor, mode: Mode) -> Result<MlpForward> {
    let mut tape = Tape::new();
    let x = tape.variable(input.clone());
    let out = mlp.forward(&mut tape, store, x, mode)?;
    Ok(MlpForward {
        output: tape.value(out).clone(),
        tape,
        input: x,
        out,
    })
}

/// Gradients of `⟨output_gradient, output⟩` with respect to every parameter
/// and to the input.
pub fn backward(fwd: &MlpForward, output_gradient: &Tensor, store: &ParamStore) -> Result<Gradients> {
    fwd.tape.backward(fwd.out, output_gradient, store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(dropout: f64) -> (Mlp, ParamStore) {
        let cfg = MlpConfig {
            layers: 2,
            hidden: 6,
            input: 3,
            output: 2,
            dropout,
            layer_norm: true,
        };
        let mut store = ParamStore::new();
        let mlp = Mlp::new(cfg, "m", &mut store, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        (mlp, store)
    }

    fn input() -> Tensor {
        Tensor::from_rows(&[vec![0.2, -0.7, 1.1], vec![-0.4, 0.3, 0.05]])
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (mlp, store) = net(0.0);
        let x = input();
        let fwd = mlp_forward(&mlp, &store, &x, Mode::Eval).unwrap();
        let ones = Tensor::filled(2, 2, 1.0);
        let g = backward(&fwd, &ones, &store).unwrap();
        let gx = g.var(fwd.input).unwrap().clone();
        let total = |x: &Tensor| mlp_forward(&mlp, &store, x, Mode::Eval).unwrap().output.data().iter().sum::<f64>();
        for k in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.data_mut()[k] += 1e-6;
            b.data_mut()[k] -= 1e-6;
            let fd = (total(&a) - total(&b)) / 2e-6;
            assert!((fd - gx.data()[k]).abs() < 1e-6 * fd.abs().max(1.0), "{k}: {fd} vs {}", gx.data()[k]);
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let (mlp, store) = net(0.5);
        let x = input();
        let eval = |m| mlp_forward(&mlp, &store, &x, m).unwrap().output;
        assert_eq!(eval(Mode::Eval), eval(Mode::Eval));
        assert_eq!(eval(Mode::Train { seed: 1 }), eval(Mode::Train { seed: 1 }));
        assert_ne!(eval(Mode::Train { seed: 1 }), eval(Mode::Eval));
        assert_ne!(eval(Mode::Train { seed: 1 }), eval(Mode::Train { seed: 2 }));
    }

    #[test]
    fn bind_finds_the_same_parameters() {
        let (mlp, store) = net(0.0);
        let again = Mlp::bind(mlp.config().clone(), "m", &store).unwrap();
        let x = input();
        assert_eq!(
            mlp_forward(&mlp, &store, &x, Mode::Eval).unwrap().output,
            mlp_forward(&again, &store, &x, Mode::Eval).unwrap().output
        );
        assert!(Mlp::bind(mlp.config().clone(), "other", &store).is_err());
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        let (mlp, store) = net(0.0);
        assert!(mlp_forward(&mlp, &store, &Tensor::zeros(1, 4), Mode::Eval).is_err());
        let mut cfg = mlp.config().clone();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.0;
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
    }
}
