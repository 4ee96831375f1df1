//! Next-timestep training for both variants.
//!
//! Curves are streamed: each step samples a fresh batch from the seeded
//! per-curve stream, so every curve is seen exactly once and the whole loss
//! trace is a function of `(seed, config)`. Each curve contributes one
//! example at a context length drawn from the schedule; the 1-d variant
//! regresses the next value, the relational variant regresses the next
//! similarity row (including its trivial final zero entry).

use crate::checkpoint::{self, CheckpointError};
use crate::codec::{encode_input, target_row, CodecError, RelTokenSet};
use crate::curve::{curve_seed, rng_from_seed, sample_indexed, Curve, CurveError, CurveGenConfig};
use crate::model::{Model, ModelConfig, ModelError, Variant};
use crate::optim::{clip_global_norm, Adam, AdamConfig, OptimError};
use crate::scalar::Scalar;
use crate::tensor::Tape;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("context length {context} too long for curve with {available} points")]
    ContextTooLong { context: usize, available: usize },
    #[error(
        "non-finite loss {loss} at step {step}; parameter norms: {}",
        format_norms(param_norms)
    )]
    NonFiniteLoss {
        step: u64,
        loss: f64,
        param_norms: Vec<(String, f64)>,
    },
    #[error("non-finite parameter '{name}' after step {step}")]
    NonFiniteParam { step: u64, name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn format_norms(norms: &[(String, f64)]) -> String {
    norms
        .iter()
        .map(|(n, v)| format!("{n}={v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Context length per example: fixed, or uniform over a prefix range so
/// the model sees variable context lengths during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSchedule {
    Fixed(usize),
    UniformPrefix { min: usize, max: usize },
}

impl Default for ContextSchedule {
    fn default() -> Self {
        ContextSchedule::UniformPrefix { min: 5, max: 20 }
    }
}

impl ContextSchedule {
    pub fn min_context(&self) -> usize {
        match *self {
            ContextSchedule::Fixed(n) => n,
            ContextSchedule::UniformPrefix { min, .. } => min,
        }
    }

    pub fn max_context(&self) -> usize {
        match *self {
            ContextSchedule::Fixed(n) => n,
            ContextSchedule::UniformPrefix { max, .. } => max,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        match *self {
            ContextSchedule::Fixed(n) => n,
            ContextSchedule::UniformPrefix { min, max } => rng.gen_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total curves consumed; one example per curve.
    pub n_curves: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub schedule: ContextSchedule,
    pub curve: CurveGenConfig,
    pub model: ModelConfig,
    /// Save a checkpoint every this many steps (0: final only).
    pub checkpoint_every: usize,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Where checkpoints and traces go; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_curves: 40_000,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            schedule: ContextSchedule::default(),
            curve: CurveGenConfig::default(),
            model: ModelConfig::default(),
            checkpoint_every: 0,
            grad_clip: Some(1.0),
            seed: 0,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale run of the given variant: 40k curves through a 64/4/4
    /// model.
    pub fn desk(variant: Variant, learned_window: bool, seed: u64) -> Self {
        TrainConfig {
            model: ModelConfig {
                seed,
                ..ModelConfig::desk(variant, learned_window)
            },
            seed,
            ..TrainConfig::default()
        }
    }

    /// Full-scale run: 320k curves through a 256/8/12 model.
    pub fn paper(variant: Variant, learned_window: bool, seed: u64) -> Self {
        TrainConfig {
            n_curves: 320_000,
            model: ModelConfig {
                seed,
                ..ModelConfig::paper(variant, learned_window)
            },
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn steps(&self) -> usize {
        self.n_curves / self.batch_size
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.n_curves == 0 {
            return Err(TrainError::InvalidConfig(
                "n_curves and batch_size must be positive".into(),
            ));
        }
        if !self.n_curves.is_multiple_of(self.batch_size) {
            return Err(TrainError::InvalidConfig(format!(
                "n_curves {} not divisible by batch_size {}",
                self.n_curves, self.batch_size
            )));
        }
        if self.schedule.min_context() < 2 {
            return Err(TrainError::InvalidConfig(
                "minimum context length must be >= 2".into(),
            ));
        }
        if self.schedule.max_context() + 1 > self.curve.n_total() {
            return Err(TrainError::InvalidConfig(format!(
                "context {} + 1 exceeds curve length {}",
                self.schedule.max_context(),
                self.curve.n_total()
            )));
        }
        self.model
            .validate()
            .map_err(TrainError::InvalidConfig)?;
        self.curve.validate()?;
        Ok(())
    }
}

/// One training example, already in model terms.
#[derive(Debug, Clone)]
pub enum TrainExample {
    OneD {
        tokens: Vec<(f64, f64)>,
        query_index: usize,
        target: f64,
    },
    Rel {
        tokens: RelTokenSet,
        target: Vec<f64>,
    },
}

/// Build the model input and target from a curve prefix of length
/// `context_len`; the target is the observed (noisy) next value.
pub fn make_example(
    curve: &Curve,
    variant: Variant,
    context_len: usize,
) -> Result<TrainExample, TrainError> {
    if context_len + 1 > curve.ys.len() {
        return Err(TrainError::ContextTooLong {
            context: context_len,
            available: curve.ys.len(),
        });
    }
    let ctx = &curve.ys[..context_len];
    let y_next = curve.ys[context_len];
    match variant {
        Variant::OneD => {
            let mut tokens: Vec<(f64, f64)> = ctx
                .iter()
                .enumerate()
                .map(|(i, &y)| ((i + 1) as f64, y))
                .collect();
            tokens.push(((context_len + 1) as f64, 0.0));
            Ok(TrainExample::OneD {
                tokens,
                query_index: context_len,
                target: y_next,
            })
        }
        Variant::Relational => Ok(TrainExample::Rel {
            tokens: encode_input(ctx)?,
            target: target_row(ctx, y_next),
        }),
    }
}

/// One optimizer update on a batch: per-example forward/backward with
/// gradient accumulation, then clip and Adam. Returns the mean batch loss.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &[TrainExample],
    adam: &mut Adam<T>,
    grad_clip: Option<f64>,
) -> Result<f64, TrainError> {
    assert!(!batch.is_empty(), "empty batch");
    let sizes = model.params.sizes();
    let mut acc: Vec<Vec<T>> = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
    let mut loss_sum = 0.0f64;

    for ex in batch {
        let mut tape: Tape<T> = Tape::new();
        let (output, staged) = match ex {
            TrainExample::OneD {
                tokens,
                query_index,
                target,
            } => {
                let fp = model.forward_1d(&mut tape, tokens, *query_index, true)?;
                let t = tape.constant_from_f64(&[1], &[*target]);
                let loss = tape.mse_loss(fp.output, t)?;
                (loss, fp.staged)
            }
            TrainExample::Rel { tokens, target } => {
                let fp = model.forward_rel(&mut tape, tokens, true)?;
                let t = tape.constant_from_f64(&[target.len()], target);
                let loss = tape.mse_loss(fp.output, t)?;
                (loss, fp.staged)
            }
        };
        let lv = tape.item(output).as_f64();
        if !lv.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step: adam.step_count() + 1,
                loss: lv,
                param_norms: param_norms(model),
            });
        }
        loss_sum += lv;
        tape.backward(output)?;
        for (a, g) in acc.iter_mut().zip(model.read_grads(&tape, &staged)) {
            for (x, y) in a.iter_mut().zip(&g) {
                *x += *y;
            }
        }
    }

    let inv_b = T::from_f64(1.0 / batch.len() as f64);
    for a in &mut acc {
        for x in a.iter_mut() {
            *x *= inv_b;
        }
    }
    if let Some(max_norm) = grad_clip {
        clip_global_norm(&mut acc, max_norm);
    }

    let mut params: Vec<Vec<T>> = model
        .params
        .tensors
        .iter_mut()
        .map(|t| std::mem::take(&mut t.data))
        .collect();
    adam.step(&mut params, &acc)?;
    for (t, p) in model.params.tensors.iter_mut().zip(params) {
        t.data = p;
    }
    if !model.params.all_finite() {
        let name = model
            .params
            .tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.clone())
            .unwrap_or_default();
        return Err(TrainError::NonFiniteParam {
            step: adam.step_count(),
            name,
        });
    }
    Ok(loss_sum / batch.len() as f64)
}

fn param_norms<T: Scalar>(model: &Model<T>) -> Vec<(String, f64)> {
    model
        .params
        .tensors
        .iter()
        .map(|t| {
            let sq: f64 = t.data.iter().map(|v| v.as_f64() * v.as_f64()).sum();
            (t.name.clone(), sq.sqrt())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub steps_run: usize,
    pub resumed_from_step: Option<usize>,
    /// Mean batch loss per step run in this call.
    pub losses: Vec<f64>,
    pub wall_clock_secs: f64,
    /// Effective (a, b) of each learned window pair after training.
    pub final_window: Vec<(f64, f64)>,
    /// Every curve is drawn fresh from the stream; no epoch reuse.
    pub fresh_curves_per_step: bool,
    pub config: TrainConfig,
}

pub struct TrainOutput {
    pub model: Model<f32>,
    pub optimizer: Adam<f32>,
    pub report: TrainReport,
}

const SCHEDULE_DOMAIN: u64 = 0x7363_6865_6475_6c65;

/// Per-curve example batch for one step of the stream.
fn build_batch(cfg: &TrainConfig, step: usize) -> Result<Vec<TrainExample>, TrainError> {
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for k in 0..cfg.batch_size {
        let index = (step * cfg.batch_size + k) as u64;
        let curve = sample_indexed(cfg.seed, index, &cfg.curve)?;
        let mut sched_rng = rng_from_seed(curve_seed(cfg.seed ^ SCHEDULE_DOMAIN, index));
        let n_ctx = cfg.schedule.draw(&mut sched_rng);
        batch.push(make_example(&curve, cfg.model.variant, n_ctx)?);
    }
    Ok(batch)
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    run_training(cfg, None)
}

/// Continue a run from a checkpoint holding optimizer state. The stream
/// position is the optimizer's step counter, so the continuation consumes
/// exactly the curves the original run would have.
pub fn resume(cfg: &TrainConfig, checkpoint_path: &Path) -> Result<TrainOutput, TrainError> {
    let loaded = checkpoint::load(checkpoint_path)?;
    run_training(cfg, Some(loaded))
}

fn run_training(
    cfg: &TrainConfig,
    resume_from: Option<checkpoint::LoadedCheckpoint>,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let (mut model, mut adam, resumed_from_step) = match resume_from {
        Some(loaded) => {
            let adam = loaded.optimizer.ok_or_else(|| {
                TrainError::InvalidConfig(
                    "checkpoint has no optimizer state; cannot resume".into(),
                )
            })?;
            let step = adam.step_count() as usize;
            (loaded.model, adam, Some(step))
        }
        None => {
            let model = Model::<f32>::new(cfg.model.clone());
            let adam = Adam::new(cfg.optimizer, &model.params.sizes());
            (model, adam, None)
        }
    };

    let total_steps = cfg.steps();
    let start_step = resumed_from_step.unwrap_or(0);
    let mut losses = Vec::with_capacity(total_steps.saturating_sub(start_step));
    for step in start_step..total_steps {
        let batch = build_batch(cfg, step)?;
        let loss = train_step(&mut model, &batch, &mut adam, cfg.grad_clip)?;
        losses.push(loss);
        if let Some(dir) = &cfg.out_dir {
            if cfg.checkpoint_every > 0 && (step + 1).is_multiple_of(cfg.checkpoint_every) {
                let path = dir.join(format!("checkpoint_step_{:06}.fxtf", step + 1));
                checkpoint::save(&path, &model, Some(&adam))?;
            }
        }
    }

    let report = TrainReport {
        seed: cfg.seed,
        steps_run: losses.len(),
        resumed_from_step,
        losses,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        final_window: model.window_values(),
        fresh_curves_per_step: true,
        config: cfg.clone(),
    };

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&dir.join("checkpoint_final.fxtf"), &model, Some(&adam))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("loss.csv"))?);
        write_loss_csv(&mut f, &report)?;
        let json = std::fs::File::create(dir.join("train_report.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(json), &report)
            .map_err(std::io::Error::other)?;
    }

    Ok(TrainOutput {
        model,
        optimizer: adam,
        report,
    })
}

pub fn write_loss_csv<W: Write>(w: &mut W, report: &TrainReport) -> std::io::Result<()> {
    writeln!(w, "step,loss")?;
    let offset = report.resumed_from_step.unwrap_or(0);
    for (i, loss) in report.losses.iter().enumerate() {
        writeln!(w, "{},{}", offset + i + 1, loss)?;
    }
    Ok(())
}

/// Latest step checkpoint in a run directory, falling back to the final one.
pub fn find_latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut best: Option<(usize, PathBuf)> = None;
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name
                .strip_prefix("checkpoint_step_")
                .and_then(|s| s.strip_suffix(".fxtf"))
            {
                if let Ok(step) = stem.parse::<usize>() {
                    if best.as_ref().is_none_or(|(b, _)| step > *b) {
                        best = Some((step, entry.path()));
                    }
                }
            }
        }
    }
    best.map(|(_, p)| p).or_else(|| {
        let f = dir.join("checkpoint_final.fxtf");
        f.exists().then_some(f)
    })
}
