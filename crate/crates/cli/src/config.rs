//! Run configuration: strict-schema TOML with preset < file < flag merging.
//!
//! Unknown keys anywhere in the file are rejected. Every command echoes its
//! fully resolved configuration into the output directory, so a run can be
//! reproduced from the echo alone.

use fxtf_core::curve::{CurveGenConfig, InterceptMode, NoiseWidth};
use fxtf_core::eval::EvalConfig;
use fxtf_core::gating::IndicatorMode;
use fxtf_core::model::{Activation, ModelConfig, Variant};
use fxtf_core::train::{ContextSchedule, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const OUT_ROOT_ENV: &str = "FXTF_OUT_ROOT";

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub curve: CurveGenConfig,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSettings {
    pub n_curves: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: ContextSchedule,
    pub checkpoint_every: usize,
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSettings {
    pub n_test_curves: usize,
    pub horizon: usize,
    pub seed: u64,
    pub noisy_targets: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let eval = EvalConfig::default();
        RunConfig {
            seed: 0,
            threads: 1,
            curve: CurveGenConfig::default(),
            model: ModelConfig::default(),
            train: TrainSettings {
                n_curves: train.n_curves,
                batch_size: train.batch_size,
                lr: train.optimizer.lr,
                schedule: train.schedule,
                checkpoint_every: train.checkpoint_every,
                grad_clip: train.grad_clip,
            },
            eval: EvalSettings {
                n_test_curves: eval.n_test_curves,
                horizon: eval.horizon,
                seed: eval.seed,
                noisy_targets: eval.noisy_targets,
            },
        }
    }
}

impl RunConfig {
    /// Concrete training config; the master seed drives both the curve
    /// stream and the model initialization.
    pub fn train_config(&self, out_dir: Option<PathBuf>) -> TrainConfig {
        let optimizer = fxtf_core::optim::AdamConfig {
            lr: self.train.lr,
            ..fxtf_core::optim::AdamConfig::default()
        };
        TrainConfig {
            n_curves: self.train.n_curves,
            batch_size: self.train.batch_size,
            optimizer,
            schedule: self.train.schedule,
            curve: self.curve.clone(),
            model: ModelConfig {
                seed: self.seed,
                ..self.model.clone()
            },
            checkpoint_every: self.train.checkpoint_every,
            grad_clip: self.train.grad_clip,
            seed: self.seed,
            out_dir,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_test_curves: self.eval.n_test_curves,
            horizon: self.eval.horizon,
            seed: self.eval.seed,
            curve: self.curve.clone(),
            noisy_targets: self.eval.noisy_targets,
            threads: self.threads,
        }
    }
}

// ── Partial overlays ─────────────────────────────────────────────────

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialRunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub curve: PartialCurve,
    #[serde(default)]
    pub model: PartialModel,
    #[serde(default)]
    pub train: PartialTrain,
    #[serde(default)]
    pub eval: PartialEval,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialCurve {
    pub n_context: Option<usize>,
    pub horizon: Option<usize>,
    pub slope_range: Option<(f64, f64)>,
    pub period_range: Option<(f64, f64)>,
    pub amp_range: Option<(f64, f64)>,
    pub phase_range: Option<(f64, f64)>,
    pub rbf_sigma: Option<f64>,
    pub noise_std: Option<f64>,
    pub noise_width: Option<NoiseWidth>,
    pub intercept: Option<InterceptMode>,
    pub class_probs: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialModel {
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub variant: Option<Variant>,
    pub learned_window: Option<bool>,
    pub per_layer_window: Option<bool>,
    pub indicator: Option<IndicatorMode>,
    pub activation: Option<Activation>,
    pub mlp_mult: Option<usize>,
    /// Accepted so an echoed config reloads; the master seed wins at run
    /// time.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialTrain {
    pub n_curves: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub schedule: Option<ContextSchedule>,
    pub checkpoint_every: Option<usize>,
    pub grad_clip: Option<Option<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialEval {
    pub n_test_curves: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub noisy_targets: Option<bool>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })+
    };
}

pub fn apply(base: &mut RunConfig, p: PartialRunConfig) {
    overlay!(*base, p, seed, threads);
    overlay!(
        base.curve, p.curve, n_context, horizon, slope_range, period_range, amp_range,
        phase_range, rbf_sigma, noise_std, noise_width, intercept, class_probs,
    );
    overlay!(
        base.model, p.model, d_model, n_heads, n_layers, variant, learned_window,
        per_layer_window, indicator, activation, mlp_mult, seed,
    );
    overlay!(
        base.train, p.train, n_curves, batch_size, lr, schedule, checkpoint_every, grad_clip,
    );
    overlay!(base.eval, p.eval, n_test_curves, horizon, seed, noisy_targets);
}

/// Named presets: `desk-*` (64/4/4, 40k curves) and `paper-*` (256/8/12,
/// 320k curves) for each variant, with and without the learned window.
pub fn preset(name: &str) -> Option<PartialRunConfig> {
    let (scale, rest) = name.split_once('-')?;
    let (variant, window) = match rest {
        "1d" => (Variant::OneD, false),
        "1d-window" => (Variant::OneD, true),
        "relational" => (Variant::Relational, false),
        "relational-window" => (Variant::Relational, true),
        _ => return None,
    };
    let (dims, n_curves) = match scale {
        "desk" => ((64usize, 4usize, 4usize), 40_000usize),
        "paper" => ((256, 8, 12), 320_000),
        _ => return None,
    };
    Some(PartialRunConfig {
        model: PartialModel {
            d_model: Some(dims.0),
            n_heads: Some(dims.1),
            n_layers: Some(dims.2),
            variant: Some(variant),
            learned_window: Some(window),
            ..PartialModel::default()
        },
        train: PartialTrain {
            n_curves: Some(n_curves),
            ..PartialTrain::default()
        },
        ..PartialRunConfig::default()
    })
}

pub fn preset_names() -> Vec<String> {
    let mut names = Vec::new();
    for scale in ["desk", "paper"] {
        for rest in ["1d", "1d-window", "relational", "relational-window"] {
            names.push(format!("{scale}-{rest}"));
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in preset_names() {
            assert!(preset(&name).is_some(), "{name}");
        }
        assert!(preset("desk-bogus").is_none());
        assert!(preset("nope").is_none());
        let mut cfg = RunConfig::default();
        apply(&mut cfg, preset("paper-relational-window").unwrap());
        assert_eq!(cfg.model.d_model, 256);
        assert_eq!(cfg.model.n_layers, 12);
        assert_eq!(cfg.train.n_curves, 320_000);
        assert!(cfg.model.learned_window);
        assert_eq!(cfg.model.variant, Variant::Relational);
    }

    #[test]
    fn file_overlays_preset_and_flags_overlay_file() {
        let mut cfg = RunConfig::default();
        apply(&mut cfg, preset("desk-1d").unwrap());
        let file: PartialRunConfig = toml::from_str(
            r#"
            seed = 7
            [train]
            n_curves = 64
            lr = 0.001
            [model]
            n_layers = 2
            "#,
        )
        .unwrap();
        apply(&mut cfg, file);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.n_curves, 64);
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.model.n_layers, 2);
        assert_eq!(cfg.model.d_model, 64); // untouched preset value
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<PartialRunConfig>("definitely_not_a_key = 1");
        assert!(err.is_err());
        let err = toml::from_str::<PartialRunConfig>("[curve]\nwobble = 3");
        assert!(err.is_err());
    }

    #[test]
    fn echoed_config_reloads_cleanly() {
        let mut cfg = RunConfig::default();
        apply(&mut cfg, preset("desk-relational-window").unwrap());
        cfg.seed = 11;
        let echo = toml::to_string_pretty(&cfg).unwrap();
        let reloaded: PartialRunConfig =
            toml::from_str(&echo).unwrap_or_else(|e| panic!("echo does not reload: {e}\n{echo}"));
        let mut back = RunConfig::default();
        apply(&mut back, reloaded);
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.model, cfg.model);
        assert_eq!(back.train.schedule, cfg.train.schedule);
        assert_eq!(back.curve, cfg.curve);
    }

    #[test]
    fn schedule_round_trips_through_toml() {
        let file: PartialRunConfig = toml::from_str(
            r#"
            [train]
            schedule = { uniform_prefix = { min = 4, max = 12 } }
            "#,
        )
        .unwrap();
        assert_eq!(
            file.train.schedule,
            Some(ContextSchedule::UniformPrefix { min: 4, max: 12 })
        );
        let fixed: PartialRunConfig =
            toml::from_str("[train]\nschedule = { fixed = 20 }").unwrap();
        assert_eq!(fixed.train.schedule, Some(ContextSchedule::Fixed(20)));
    }
}
