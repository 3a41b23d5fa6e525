//! Training loop with the scheduled-rollout curriculum.
//!
//! Each window of `L` transitions is split in two. The first `L − s` are
//! auto-encoded with ground-truth conditions (teacher forcing). The last
//! `s` are generated: starting from the ground-truth pose at `L − s`, the
//! decoder is fed prior noise and its own integrated output, and each step
//! is compared with the ground-truth delta and joint positions at the same
//! index. Gradients flow through the generated chain.
//!
//! Batches are cut into fixed-size chunks of windows. Chunks may run on
//! any number of threads; their gradients are summed in chunk order, so
//! results do not depend on the worker count.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LossBreakdown;
use super::model::{Model, Normalizer};
use crate::body::diff::{condition_on, integrate_on, joint_positions_on, orthonormalize_on, GoalRow, TapePose};
use crate::body::{forward_kinematics, pose_delta, PoseDelta, Skeleton};
use crate::dataset::{sample_training_window, MotionSequence, TrainingWindow};
use crate::error::{Error, Result};
use crate::intention::{condition_for, Horizon, OrientationMode};
use crate::nn::gaussian::{kl_on, reparameterize_on};
use crate::nn::{Adam, AdamConfig, Gradients, KlDirection, Mode, Tape, Tensor};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// KL weight.
    pub alpha: f64,
    pub batch: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub final_lr: f64,
    /// Largest number of generated steps per window.
    pub s_max: usize,
    pub ramp_epochs: usize,
    pub window_len: usize,
    pub horizon: Horizon,
    pub kl_direction: KlDirection,
    /// Windows per parallel work unit.
    pub chunk: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            batch: 32,
            epochs: 60,
            base_lr: 1e-3,
            final_lr: 1e-4,
            s_max: 10,
            ramp_epochs: 50,
            window_len: 40,
            horizon: Horizon::default(),
            kl_direction: KlDirection::Standard,
            chunk: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train config: {m}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if self.batch == 0 || self.chunk == 0 || self.window_len == 0 {
            return bad("batch, chunk and window length must be positive");
        }
        if self.ramp_epochs == 0 {
            return bad("ramp_epochs must be positive");
        }
        if self.s_max >= self.window_len {
            return bad("s_max must be shorter than the window");
        }
        if !(self.base_lr > 0.0 && self.final_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.horizon.min > self.horizon.max {
            return bad("horizon bounds out of order");
        }
        Ok(())
    }

    /// Generated steps per window at `epoch` (counted from 0).
    pub fn rollout_steps(&self, epoch: usize) -> usize {
        let ramp = (epoch as f64 / self.ramp_epochs as f64).min(1.0);
        (self.s_max as f64 * ramp).round() as usize
    }
}

/// Unnormalized loss sums and their element counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Sums {
    rec: f64,
    rec_n: f64,
    kl: f64,
    kl_n: f64,
    joint: f64,
    joint_n: f64,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.rec += o.rec;
        self.rec_n += o.rec_n;
        self.kl += o.kl;
        self.kl_n += o.kl_n;
        self.joint += o.joint;
        self.joint_n += o.joint_n;
    }

    fn breakdown(&self, alpha: f64) -> LossBreakdown {
        let div = |a: f64, n: f64| if n > 0.0 { a / n } else { 0.0 };
        LossBreakdown::assemble(div(self.rec, self.rec_n), div(self.kl, self.kl_n), div(self.joint, self.joint_n), alpha)
    }
}

/// Element counts a batch will produce, known before any forward pass.
fn batch_counts(windows: &[&TrainingWindow], s: usize, delta: usize, joints: usize) -> Sums {
    let steps: usize = windows.iter().map(|w| w.transitions()).sum();
    let tf: usize = windows.iter().map(|w| w.transitions() - s.min(w.transitions())).sum();
    Sums {
        rec_n: (steps * delta) as f64,
        kl_n: tf as f64,
        joint_n: (steps * 3 * joints) as f64,
        ..Sums::default()
    }
}

/// Per-window previous deltas for every transition index.
fn prev_deltas(w: &TrainingWindow) -> Result<Vec<PoseDelta>> {
    let mut out = Vec::with_capacity(w.transitions() + 1);
    out.push(w.prev_delta.clone());
    for i in 0..w.transitions() {
        out.push(pose_delta(&w.frames[i], &w.frames[i + 1])?);
    }
    Ok(out)
}

/// Differentiable loss of a group of windows. Returns the loss sums and
/// the gradient of `Σ_k sums_k / totals_k` (with `α` on the KL part).
fn chunk_loss(
    model: &Model,
    windows: &[&TrainingWindow],
    s: usize,
    cfg: &TrainConfig,
    totals: &Sums,
    seed: u64,
) -> Result<(Sums, Gradients)> {
    let spec = &model.spec;
    let skeleton = &model.skeleton;
    let norm = &model.normalizer;
    let mut tape = Tape::new();
    let mut sums = Sums::default();
    let mut terms = Vec::new();

    let deltas: Vec<Vec<PoseDelta>> = windows.iter().map(|w| prev_deltas(w)).collect::<Result<_>>()?;

    // teacher-forced part
    let mut d_rows = Vec::new();
    let mut c_rows = Vec::new();
    let mut prev_rows = Vec::new();
    let mut target_rows = Vec::new();
    for (w, ds) in windows.iter().zip(&deltas) {
        let n = w.transitions() - s.min(w.transitions());
        let mode = OrientationMode::Train {
            goal_heading: w.goal_heading,
        };
        for i in 0..n {
            let cond = condition_for(&w.frames[i], &ds[i], &w.goal, w.start + i, mode, skeleton)?;
            c_rows.push(cond.to_vec());
            d_rows.push(ds[i + 1].to_vec());
            prev_rows.push(&w.frames[i]);
            target_rows.push(forward_kinematics(&w.frames[i + 1], skeleton)?.flatten());
        }
    }
    if !d_rows.is_empty() {
        let rows = d_rows.len();
        let d_norm = tape.constant(Tensor::from_rows(&d_rows.iter().map(|d| norm.normalize_delta(d)).collect::<Vec<_>>()));
        let d = tape.constant(Tensor::from_rows(&d_rows));
        let c = tape.constant(Tensor::from_rows(&c_rows));
        let train = Mode::Train {
            seed: derive_seed(seed, &[1]),
        };
        let (mu, ls) = model.encode_on(&mut tape, d, c, train)?;
        let mut eps_rng = rng_for(seed, &[2]);
        let eps: Vec<f64> = (0..rows * spec.latent).map(|_| StandardNormal.sample(&mut eps_rng)).collect();
        let z = reparameterize_on(&mut tape, mu, ls, Tensor::from_vec(rows, spec.latent, eps));
        let out = model.decode_normalized_on(
            &mut tape,
            z,
            c,
            Mode::Train {
                seed: derive_seed(seed, &[3]),
            },
        )?;
        let diff = tape.sub(out, d_norm);
        let rec = tape.sum_sq(diff);
        let kl = kl_on(&mut tape, mu, ls, cfg.kl_direction);
        let raw = model.denormalize_on(&mut tape, out);
        let prev = TapePose::constant(&mut tape, &prev_rows);
        let next = integrate_on(&mut tape, &prev, raw);
        let pos = joint_positions_on(&mut tape, &next, model.tape_skeleton());
        let target = tape.constant(Tensor::from_rows(&target_rows));
        let jd = tape.sub(pos, target);
        let joint = tape.sum_sq(jd);
        sums.rec += tape.value(rec).item();
        sums.kl += tape.value(kl).item();
        sums.joint += tape.value(joint).item();
        terms.push((rec, 1.0 / totals.rec_n));
        terms.push((kl, cfg.alpha / totals.kl_n));
        terms.push((joint, 1.0 / totals.joint_n));
    }

    // generated continuation
    let gen: Vec<usize> = (0..windows.len()).filter(|&k| s > 0 && windows[k].transitions() >= s).collect();
    if !gen.is_empty() {
        let rows = gen.len();
        let begin: Vec<usize> = gen.iter().map(|&k| windows[k].transitions() - s).collect();
        let start_poses: Vec<_> = gen.iter().zip(&begin).map(|(&k, &b)| &windows[k].frames[b]).collect();
        let mut pose = TapePose::constant(&mut tape, &start_poses);
        let mut prev = tape.constant(Tensor::from_rows(
            &gen.iter().zip(&begin).map(|(&k, &b)| deltas[k][b].to_vec()).collect::<Vec<_>>(),
        ));
        let mut prior = rng_for(seed, &[4]);
        for step in 0..s {
            let goals: Vec<GoalRow> = gen
                .iter()
                .zip(&begin)
                .map(|(&k, &b)| {
                    let w = windows[k];
                    GoalRow {
                        position: w.goal.position,
                        target_frame: w.goal.target_frame,
                        current_frame: w.start + b + step,
                        heading: Some(w.goal_heading),
                    }
                })
                .collect();
            let joint_index = windows[gen[0]].goal.joint_index(skeleton)?;
            let c = condition_on(&mut tape, &pose, prev, &goals, joint_index, model.tape_skeleton())?;
            let noise: Vec<f64> = (0..rows * spec.latent).map(|_| StandardNormal.sample(&mut prior)).collect();
            let z = tape.constant(Tensor::from_vec(rows, spec.latent, noise));
            let out = model.decode_normalized_on(
                &mut tape,
                z,
                c,
                Mode::Train {
                    seed: derive_seed(seed, &[5, step as u64]),
                },
            )?;
            let truth: Vec<Vec<f64>> = gen
                .iter()
                .zip(&begin)
                .map(|(&k, &b)| norm.normalize_delta(&deltas[k][b + step + 1].to_vec()))
                .collect();
            let truth = tape.constant(Tensor::from_rows(&truth));
            let diff = tape.sub(out, truth);
            let rec = tape.sum_sq(diff);
            let raw = model.denormalize_on(&mut tape, out);
            let next = integrate_on(&mut tape, &pose, raw);
            pose = orthonormalize_on(&mut tape, &next);
            let pos = joint_positions_on(&mut tape, &pose, model.tape_skeleton());
            let target: Vec<Vec<f64>> = gen
                .iter()
                .zip(&begin)
                .map(|(&k, &b)| forward_kinematics(&windows[k].frames[b + step + 1], skeleton).map(|j| j.flatten()))
                .collect::<Result<_>>()?;
            let target = tape.constant(Tensor::from_rows(&target));
            let jd = tape.sub(pos, target);
            let joint = tape.sum_sq(jd);
            sums.rec += tape.value(rec).item();
            sums.joint += tape.value(joint).item();
            terms.push((rec, 1.0 / totals.rec_n));
            terms.push((joint, 1.0 / totals.joint_n));
            prev = raw;
        }
    }

    if terms.is_empty() {
        return Ok((sums, Gradients::empty_for(&model.store)));
    }
    let weighted: Vec<_> = terms.iter().map(|(v, w)| tape.scale(*v, *w)).collect();
    let mut total = weighted[0];
    for w in &weighted[1..] {
        total = tape.add(total, *w);
    }
    if !tape.value(total).is_finite() {
        return Err(Error::NumericFault {
            context: "training loss".into(),
            layer: None,
        });
    }
    let grads = tape.backward(total, &Tensor::scalar(1.0), &model.store)?;
    Ok((sums, grads))
}

/// Averaged loss of one batch with `s` generated steps and its parameter
/// gradient. All noise derives from `seed`; this is exactly what a single
/// training step differentiates.
pub fn batch_loss(
    model: &Model,
    windows: &[TrainingWindow],
    s: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(LossBreakdown, Gradients)> {
    if windows.is_empty() {
        return Err(Error::InvalidConfig("no training windows".into()));
    }
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    let totals = batch_counts(&refs, s, model.spec.delta_dim(), model.spec.joints());
    let (sums, grads) = chunk_loss(model, &refs, s, cfg, &totals, seed)?;
    let loss = Sums {
        rec_n: totals.rec_n,
        kl_n: totals.kl_n,
        joint_n: totals.joint_n,
        ..sums
    }
    .breakdown(cfg.alpha);
    Ok((loss, grads))
}

/// One pass over `windows` (already in batch order) with one Adam step per
/// batch. Returns the epoch's averaged loss parts.
pub fn train_epoch(
    model: &mut Model,
    adam: &mut Adam,
    windows: &[TrainingWindow],
    epoch: usize,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidConfig("no training windows".into()));
    }
    let s = cfg.rollout_steps(epoch);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let delta = model.spec.delta_dim();
    let joints = model.spec.joints();
    let mut epoch_sums = Sums::default();
    for (b, batch) in windows.chunks(cfg.batch).enumerate() {
        let refs: Vec<&TrainingWindow> = batch.iter().collect();
        let totals = batch_counts(&refs, s, delta, joints);
        let chunks: Vec<&[&TrainingWindow]> = refs.chunks(cfg.chunk).collect();
        let model_ref = &*model;
        let results: Vec<Result<(Sums, Gradients)>> = pool.install(|| {
            chunks
                .par_iter()
                .enumerate()
                .map(|(c, group)| {
                    let seed = derive_seed(cfg.seed, &[epoch as u64, b as u64, c as u64]);
                    chunk_loss(model_ref, group, s, cfg, &totals, seed)
                })
                .collect()
        });
        let mut grads = Gradients::empty_for(&model.store);
        let mut sums = Sums::default();
        for r in results {
            let (part, g) = r?;
            sums.add(&part);
            grads.accumulate(&g);
        }
        adam.step(&mut model.store, &grads)?;
        epoch_sums.add(&Sums {
            rec_n: totals.rec_n,
            kl_n: totals.kl_n,
            joint_n: totals.joint_n,
            ..sums
        });
    }
    let loss = epoch_sums.breakdown(cfg.alpha);
    if !loss.is_finite() {
        return Err(Error::NumericFault {
            context: format!("epoch {epoch} loss"),
            layer: None,
        });
    }
    Ok(loss)
}

/// Number of windows each sequence contributes per epoch.
fn windows_per_sequence(seq: &MotionSequence, window_len: usize) -> usize {
    if seq.len() < window_len + 1 {
        0
    } else {
        (seq.len() - 1) / window_len
    }
}

fn draw_windows(
    sequences: &[MotionSequence],
    skeleton: &Skeleton,
    cfg: &TrainConfig,
    path: u64,
) -> Result<Vec<TrainingWindow>> {
    let mut out = Vec::new();
    for (q, seq) in sequences.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, &[path, q as u64]);
        for _ in 0..windows_per_sequence(seq, cfg.window_len) {
            match sample_training_window(seq, cfg.window_len, &mut rng, cfg.horizon, skeleton) {
                Ok(w) => out.push(w),
                Err(Error::SkipWindow { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Shuffled windows for one epoch. Deterministic in `(seed, epoch)`.
pub fn epoch_windows(
    sequences: &[MotionSequence],
    skeleton: &Skeleton,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<TrainingWindow>> {
    let mut out = draw_windows(sequences, skeleton, cfg, epoch as u64)?;
    out.shuffle(&mut rng_for(cfg.seed, &[u64::MAX - 1, epoch as u64]));
    Ok(out)
}

/// Fits delta and condition statistics on a dedicated window draw.
pub fn fit_normalizer(sequences: &[MotionSequence], skeleton: &Skeleton, cfg: &TrainConfig) -> Result<Normalizer> {
    normalizer_from_windows(&draw_windows(sequences, skeleton, cfg, u64::MAX)?, skeleton)
}

/// Statistics of every teacher-forced delta and condition in `windows`.
pub fn normalizer_from_windows(windows: &[TrainingWindow], skeleton: &Skeleton) -> Result<Normalizer> {
    let mut deltas = Vec::new();
    let mut conds = Vec::new();
    for w in windows {
        let ds = prev_deltas(w)?;
        let mode = OrientationMode::Train {
            goal_heading: w.goal_heading,
        };
        for i in 0..w.transitions() {
            conds.push(condition_for(&w.frames[i], &ds[i], &w.goal, w.start + i, mode, skeleton)?.to_vec());
            deltas.push(ds[i + 1].to_vec());
        }
    }
    if deltas.is_empty() {
        return Err(Error::InvalidConfig("no sequence is long enough for one training window".into()));
    }
    Normalizer::fit(&deltas, &conds)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub s: usize,
    pub loss: LossBreakdown,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "epoch,s,rec,kl,joint,total,lr";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            self.epoch, self.s, self.loss.rec, self.loss.kl, self.loss.joint, self.loss.total, self.lr
        )
    }
}

pub fn log_csv(rows: &[EpochLog]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{LOG_HEADER}");
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Owns the model, optimizer and schedule position.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub config: TrainConfig,
    /// Next epoch to run.
    pub epoch: usize,
    pub log: Vec<EpochLog>,
}

impl Trainer {
    /// Fresh trainer; fits the normalizer on `train` and sizes the learning
    /// rate schedule from the epoch budget.
    pub fn new(mut model: Model, train: &[MotionSequence], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.normalizer = fit_normalizer(train, &model.skeleton, &config)?;
        let per_epoch: usize = train.iter().map(|s| windows_per_sequence(s, config.window_len)).sum();
        let total = config.epochs * per_epoch.div_ceil(config.batch);
        let adam = Adam::for_store(
            AdamConfig::linear(config.base_lr, config.final_lr, total as u64),
            &model.store,
        );
        Ok(Self {
            model,
            adam,
            config,
            epoch: 0,
            log: Vec::new(),
        })
    }

    /// Runs the next epoch and appends its log row.
    pub fn step_epoch(&mut self, train: &[MotionSequence], workers: usize) -> Result<EpochLog> {
        let windows = epoch_windows(train, &self.model.skeleton, &self.config, self.epoch)?;
        let lr = self.adam.current_lr();
        let loss = train_epoch(&mut self.model, &mut self.adam, &windows, self.epoch, &self.config, workers)?;
        let row = EpochLog {
            epoch: self.epoch,
            s: self.config.rollout_steps(self.epoch),
            loss,
            lr,
        };
        self.log.push(row);
        self.epoch += 1;
        Ok(row)
    }

    /// Runs epochs until `config.epochs` is reached.
    pub fn run(&mut self, train: &[MotionSequence], workers: usize, mut on_epoch: impl FnMut(&EpochLog)) -> Result<()> {
        while self.epoch < self.config.epochs {
            let row = self.step_epoch(train, workers)?;
            on_epoch(&row);
        }
        Ok(())
    }
}
