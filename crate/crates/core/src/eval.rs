//! Autoregressive extrapolation, MSE and uncertainty tables, and the
//! closed-form GP-posterior oracle for the RBF family.
//!
//! Rollout feeds the model its own point predictions: at step `t` the
//! context is the `N` observed values plus the `t - 1` predictions made so
//! far. The relational variant reports a per-step uncertainty from its
//! ensemble readout; the 1-d baseline has no native uncertainty and reports
//! none. Errors are scored against the latent (pre-noise) curve by default.

use crate::codec::{encode_input, readout, CodecError};
use crate::curve::{sample_indexed_class, Curve, CurveClass, CurveError, CurveGenConfig};
use crate::linalg::{cholesky_jittered, cholesky_solve, squared_exp_kernel, LinalgError};
use crate::model::{Model, ModelError, Variant};
use crate::scalar::Scalar;
use crate::stats;
use crate::tensor::Tape;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("curve has {got} points, rollout needs {needed}")]
    InsufficientTruth { needed: usize, got: usize },
    #[error("uncertainty table requires a relational model, got {0:?}")]
    UnsupportedModel(Variant),
    #[error("no evaluation results given")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Total test curves, split as evenly as possible among the classes
    /// (the first classes take the remainder, e.g. 2500 -> 834/833/833).
    pub n_test_curves: usize,
    pub horizon: usize,
    pub seed: u64,
    pub curve: CurveGenConfig,
    /// Score against observed noisy values instead of the latent curve.
    pub noisy_targets: bool,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_test_curves: 2500,
            horizon: 10,
            seed: 0x5eed_e7a1,
            curve: CurveGenConfig::default(),
            noisy_targets: false,
            threads: 1,
        }
    }
}

impl EvalConfig {
    pub fn class_counts(&self) -> [usize; 3] {
        let base = self.n_test_curves / 3;
        let rem = self.n_test_curves % 3;
        [
            base + usize::from(rem >= 1),
            base + usize::from(rem >= 2),
            base,
        ]
    }
}

/// One extrapolation step: the point prediction and, for models with an
/// ensemble readout, its sample-std uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepPrediction {
    pub prediction: f64,
    pub uncertainty: Option<f64>,
}

/// Anything that can predict the next value from a context of observed
/// values at positions `1..=context.len()`.
pub trait Predictor {
    fn predict_next(&self, context: &[f64]) -> Result<StepPrediction, EvalError>;
}

impl<T: Scalar> Predictor for Model<T> {
    fn predict_next(&self, context: &[f64]) -> Result<StepPrediction, EvalError> {
        match self.config.variant {
            Variant::OneD => {
                let mut tokens: Vec<(f64, f64)> = context
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| ((i + 1) as f64, y))
                    .collect();
                tokens.push(((context.len() + 1) as f64, 0.0));
                let mut tape: Tape<T> = Tape::new();
                let fp = self.forward_1d(&mut tape, &tokens, context.len(), false)?;
                Ok(StepPrediction {
                    prediction: tape.value(fp.output)[0].as_f64(),
                    uncertainty: None,
                })
            }
            Variant::Relational => {
                let rel = encode_input(context)?;
                let mut tape: Tape<T> = Tape::new();
                let fp = self.forward_rel(&mut tape, &rel, false)?;
                let row: Vec<f64> = tape.value(fp.output).iter().map(|v| v.as_f64()).collect();
                let bundle = readout(&row, context)?;
                Ok(StepPrediction {
                    prediction: bundle.point_estimate,
                    uncertainty: Some(bundle.uncertainty),
                })
            }
        }
    }
}

/// Extrapolate `horizon` steps past the first `n_context` observed values,
/// autoregressively: each point prediction (without its uncertainty) joins
/// the context for the next step.
pub fn rollout_with<P: Predictor + ?Sized>(
    predictor: &P,
    curve: &Curve,
    n_context: usize,
    horizon: usize,
) -> Result<Vec<StepPrediction>, EvalError> {
    let needed = n_context + horizon;
    if curve.ys.len() < needed {
        return Err(EvalError::InsufficientTruth {
            needed,
            got: curve.ys.len(),
        });
    }
    let mut context: Vec<f64> = curve.ys[..n_context].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let step = predictor.predict_next(&context)?;
        context.push(step.prediction);
        out.push(step);
    }
    Ok(out)
}

pub fn rollout<T: Scalar>(
    model: &Model<T>,
    curve: &Curve,
    n_context: usize,
    horizon: usize,
) -> Result<Vec<StepPrediction>, EvalError> {
    rollout_with(model, curve, n_context, horizon)
}

// ── GP posterior oracle ──────────────────────────────────────────────

/// Posterior predictive standard deviation of the observation `t` steps
/// past a context of `n_context` grid points, for a zero-mean
/// squared-exponential GP observed under i.i.d. noise of std `noise_std`:
/// `sqrt((1 + s2) - k*' (K + s2 I)^-1 k*)` with `s2 = noise_std^2`.
///
/// Takes no observed values: for a GP the posterior variance does not
/// depend on them. With `noise_std = 0` this is the bare function
/// posterior `sqrt(1 - k*' K^-1 k*)`.
pub fn gp_posterior_std(
    sigma: f64,
    noise_std: f64,
    n_context: usize,
    t: usize,
) -> Result<f64, EvalError> {
    assert!(sigma > 0.0 && n_context >= 1 && t >= 1 && noise_std >= 0.0);
    let s2 = noise_std * noise_std;
    let grid: Vec<f64> = (1..=n_context).map(|i| i as f64).collect();
    let mut k = squared_exp_kernel(&grid, &grid, sigma);
    for i in 0..n_context {
        k[i * n_context + i] += s2;
    }
    let (l, _) = cholesky_jittered(&k, n_context, 1e-10, 1e-6)?;
    let x_star = (n_context + t) as f64;
    let k_star = squared_exp_kernel(&grid, &[x_star], sigma);
    let alpha = cholesky_solve(&l, n_context, &k_star)?;
    let explained: f64 = k_star.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = (1.0 + s2 - explained).max(0.0);
    Ok(var.sqrt())
}

/// Mean posterior std over steps `1..=horizon`; the optimal uncertainty for
/// the RBF class.
pub fn gp_mean_posterior_std(
    sigma: f64,
    noise_std: f64,
    n_context: usize,
    horizon: usize,
) -> Result<f64, EvalError> {
    let mut acc = 0.0;
    for t in 1..=horizon {
        acc += gp_posterior_std(sigma, noise_std, n_context, t)?;
    }
    Ok(acc / horizon as f64)
}

// ── Per-model evaluation ─────────────────────────────────────────────

/// One detail row. Steps `<= 0` carry the observed context (no prediction);
/// steps `1..=horizon` carry extrapolation results.
#[derive(Debug, Clone, Serialize)]
pub struct DetailRecord {
    pub class: CurveClass,
    pub curve_id: usize,
    pub step: i64,
    pub prediction: Option<f64>,
    pub target: f64,
    pub sq_error: Option<f64>,
    pub pred_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassMse {
    pub class: CurveClass,
    pub mse: f64,
    pub per_step: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelEvalResult {
    pub label: String,
    pub variant: Variant,
    pub learned_window: bool,
    pub seed: u64,
    pub aggregate_mse: f64,
    pub per_class: Vec<ClassMse>,
    /// Pooled mean predicted std per class; `None` for the 1-d baseline.
    pub uncertainty_per_class: Option<Vec<(CurveClass, f64)>>,
    pub uncertainty_all: Option<f64>,
    /// Learned window values (a, b), empty without a learned window.
    pub window: Vec<(f64, f64)>,
    #[serde(skip)]
    pub records: Vec<DetailRecord>,
}

/// Table-1 style row label.
pub fn group_label(variant: Variant, learned_window: bool) -> String {
    match (variant, learned_window) {
        (Variant::OneD, false) => "1d transformer".into(),
        (Variant::OneD, true) => "1d transformer, learned window".into(),
        (Variant::Relational, false) => "relational transformer".into(),
        (Variant::Relational, true) => "relational transformer, learned window".into(),
    }
}

/// Comma-free label for CSV columns.
pub fn group_slug(variant: Variant, learned_window: bool) -> String {
    match (variant, learned_window) {
        (Variant::OneD, false) => "1d".into(),
        (Variant::OneD, true) => "1d-window".into(),
        (Variant::Relational, false) => "relational".into(),
        (Variant::Relational, true) => "relational-window".into(),
    }
}

/// Deterministic stratified test set: same seed, same curves, whatever
/// model is being scored.
pub fn test_curves(cfg: &EvalConfig) -> Result<Vec<(usize, Curve)>, EvalError> {
    let counts = cfg.class_counts();
    let mut curves = Vec::with_capacity(cfg.n_test_curves);
    let mut id = 0usize;
    for (ci, &class) in CurveClass::ALL.iter().enumerate() {
        for k in 0..counts[ci] {
            let index = ((ci as u64) << 32) | k as u64;
            let curve = sample_indexed_class(cfg.seed, index, class, &cfg.curve)?;
            curves.push((id, curve));
            id += 1;
        }
    }
    Ok(curves)
}

pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    cfg: &EvalConfig,
) -> Result<ModelEvalResult, EvalError>
where
    Model<T>: Sync,
{
    let curves = test_curves(cfg)?;
    let n_context = cfg.curve.n_context;
    let horizon = cfg.horizon;

    let per_curve: Vec<(usize, Vec<StepPrediction>)> = if cfg.threads > 1 {
        let chunk = curves.len().div_ceil(cfg.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = curves
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|(id, c)| {
                                rollout(model, c, n_context, horizon).map(|r| (*id, r))
                            })
                            .collect::<Result<Vec<_>, EvalError>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(curves.len());
            for h in handles {
                all.extend(h.join().expect("rollout worker panicked")?);
            }
            Ok::<_, EvalError>(all)
        })?
    } else {
        curves
            .iter()
            .map(|(id, c)| rollout(model, c, n_context, horizon).map(|r| (*id, r)))
            .collect::<Result<Vec<_>, EvalError>>()?
    };

    let mut records = Vec::with_capacity(curves.len() * (n_context + horizon));
    for ((id, curve), (rid, steps)) in curves.iter().zip(&per_curve) {
        debug_assert_eq!(id, rid);
        for k in 0..n_context {
            records.push(DetailRecord {
                class: curve.class,
                curve_id: *id,
                step: k as i64 + 1 - n_context as i64,
                prediction: None,
                target: curve.ys[k],
                sq_error: None,
                pred_std: None,
            });
        }
        for (t, step) in steps.iter().enumerate() {
            let idx = n_context + t;
            let target = if cfg.noisy_targets {
                curve.ys[idx]
            } else {
                curve.latent_ys[idx]
            };
            let err = step.prediction - target;
            records.push(DetailRecord {
                class: curve.class,
                curve_id: *id,
                step: t as i64 + 1,
                prediction: Some(step.prediction),
                target,
                sq_error: Some(err * err),
                pred_std: step.uncertainty,
            });
        }
    }

    let aggregate_mse = recompute_aggregate(&records);
    let per_class = CurveClass::ALL
        .iter()
        .map(|&class| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.class == class)
                .filter_map(|r| r.sq_error)
                .collect();
            let per_step = (1..=horizon)
                .map(|t| {
                    let step_errs: Vec<f64> = records
                        .iter()
                        .filter(|r| r.class == class && r.step == t as i64)
                        .filter_map(|r| r.sq_error)
                        .collect();
                    stats::mean(&step_errs)
                })
                .collect();
            ClassMse {
                class,
                mse: stats::mean(&errs),
                per_step,
            }
        })
        .collect();

    let (uncertainty_per_class, uncertainty_all) = if model.config.variant == Variant::Relational {
        let per = CurveClass::ALL
            .iter()
            .map(|&class| {
                let stds: Vec<f64> = records
                    .iter()
                    .filter(|r| r.class == class)
                    .filter_map(|r| r.pred_std)
                    .collect();
                (class, stats::mean(&stds))
            })
            .collect();
        let all: Vec<f64> = records.iter().filter_map(|r| r.pred_std).collect();
        (Some(per), Some(stats::mean(&all)))
    } else {
        (None, None)
    };

    Ok(ModelEvalResult {
        label: group_label(model.config.variant, model.config.learned_window),
        variant: model.config.variant,
        learned_window: model.config.learned_window,
        seed: model.config.seed,
        aggregate_mse,
        per_class,
        uncertainty_per_class,
        uncertainty_all,
        window: model.window_values(),
        records,
    })
}

/// Aggregate MSE straight from the stored records; the summary value must
/// equal this by construction.
pub fn recompute_aggregate(records: &[DetailRecord]) -> f64 {
    let errs: Vec<f64> = records.iter().filter_map(|r| r.sq_error).collect();
    stats::mean(&errs)
}

/// Per-class pooled mean predicted uncertainty of a single result. Errors
/// for the 1-d baseline, which has no native uncertainty.
pub fn uncertainty_table(result: &ModelEvalResult) -> Result<Vec<(CurveClass, f64)>, EvalError> {
    result
        .uncertainty_per_class
        .clone()
        .ok_or(EvalError::UnsupportedModel(result.variant))
}

// ── Cross-seed summary (Tables 1 and 2 layout) ───────────────────────

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(xs: &[f64]) -> MeanSe {
    MeanSe {
        mean: stats::mean(xs),
        se: stats::standard_error(xs),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub variant: Variant,
    pub learned_window: bool,
    pub seeds: Vec<u64>,
    pub mse_all: MeanSe,
    pub mse_lin: MeanSe,
    pub mse_rbf: MeanSe,
    pub mse_sine: MeanSe,
    pub uncertainty_all: Option<MeanSe>,
    pub uncertainty_lin: Option<MeanSe>,
    pub uncertainty_rbf: Option<MeanSe>,
    pub uncertainty_sine: Option<MeanSe>,
    /// Learned (a, b) per seed.
    pub window: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalUncertainty {
    pub lin: f64,
    pub sine: f64,
    pub rbf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetadata {
    pub n_test_curves: usize,
    pub per_class_counts: [usize; 3],
    pub horizon: usize,
    pub seed: u64,
    pub target: &'static str,
    pub uncertainty_pooling: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub groups: Vec<GroupSummary>,
    pub optimal_uncertainty: OptimalUncertainty,
    pub metadata: EvalMetadata,
}

fn class_mse_of(result: &ModelEvalResult, class: CurveClass) -> f64 {
    result
        .per_class
        .iter()
        .find(|c| c.class == class)
        .map(|c| c.mse)
        .unwrap_or(f64::NAN)
}

fn class_unc_of(result: &ModelEvalResult, class: CurveClass) -> Option<f64> {
    result
        .uncertainty_per_class
        .as_ref()
        .and_then(|v| v.iter().find(|(c, _)| *c == class).map(|(_, u)| *u))
}

/// Optimal uncertainty row: the exogenous noise std for the deterministic
/// families, the GP posterior mean std for RBF.
pub fn optimal_uncertainty(cfg: &EvalConfig) -> Result<OptimalUncertainty, EvalError> {
    let noise = cfg.curve.noise_effective_std();
    Ok(OptimalUncertainty {
        lin: noise,
        sine: noise,
        rbf: gp_mean_posterior_std(cfg.curve.rbf_sigma, noise, cfg.curve.n_context, cfg.horizon)?,
    })
}

/// Group per-seed results by (variant, window) and reduce to mean and
/// standard error across seeds.
pub fn summarize(results: &[ModelEvalResult], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: Vec<GroupSummary> = Vec::new();
    let mut order: Vec<(Variant, bool)> = Vec::new();
    for r in results {
        let key = (r.variant, r.learned_window);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    for (variant, window) in order {
        let members: Vec<&ModelEvalResult> = results
            .iter()
            .filter(|r| r.variant == variant && r.learned_window == window)
            .collect();
        let collect_mse =
            |f: &dyn Fn(&ModelEvalResult) -> f64| members.iter().map(|r| f(r)).collect::<Vec<_>>();
        let unc = |class: Option<CurveClass>| -> Option<MeanSe> {
            let vals: Vec<f64> = members
                .iter()
                .filter_map(|r| match class {
                    Some(c) => class_unc_of(r, c),
                    None => r.uncertainty_all,
                })
                .collect();
            (vals.len() == members.len()).then(|| mean_se(&vals))
        };
        groups.push(GroupSummary {
            label: group_label(variant, window),
            variant,
            learned_window: window,
            seeds: members.iter().map(|r| r.seed).collect(),
            mse_all: mean_se(&collect_mse(&|r| r.aggregate_mse)),
            mse_lin: mean_se(&collect_mse(&|r| class_mse_of(r, CurveClass::Lin))),
            mse_rbf: mean_se(&collect_mse(&|r| class_mse_of(r, CurveClass::Rbf))),
            mse_sine: mean_se(&collect_mse(&|r| class_mse_of(r, CurveClass::Sine))),
            uncertainty_all: unc(None),
            uncertainty_lin: unc(Some(CurveClass::Lin)),
            uncertainty_rbf: unc(Some(CurveClass::Rbf)),
            uncertainty_sine: unc(Some(CurveClass::Sine)),
            window: members.iter().map(|r| r.window.clone()).collect(),
        });
    }
    Ok(EvalReport {
        groups,
        optimal_uncertainty: optimal_uncertainty(cfg)?,
        metadata: EvalMetadata {
            n_test_curves: cfg.n_test_curves,
            per_class_counts: cfg.class_counts(),
            horizon: cfg.horizon,
            seed: cfg.seed,
            target: if cfg.noisy_targets { "noisy" } else { "latent" },
            uncertainty_pooling: "pooled over (curve, step) pairs",
        },
    })
}

// ── CSV output ───────────────────────────────────────────────────────

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat detail rows:
/// `model,variant,seed,class,curve_id,step,prediction,target,sq_error,pred_std`.
/// Context rows carry step <= 0 with empty prediction fields.
pub fn write_detail_csv<W: Write>(w: &mut W, results: &[ModelEvalResult]) -> std::io::Result<()> {
    writeln!(
        w,
        "model,variant,seed,class,curve_id,step,prediction,target,sq_error,pred_std"
    )?;
    for r in results {
        let variant = match r.variant {
            Variant::OneD => "1d",
            Variant::Relational => "relational",
        };
        let slug = group_slug(r.variant, r.learned_window);
        for rec in &r.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                slug,
                variant,
                r.seed,
                rec.class,
                rec.curve_id,
                rec.step,
                opt(rec.prediction),
                rec.target,
                opt(rec.sq_error),
                opt(rec.pred_std),
            )?;
        }
    }
    Ok(())
}

/// Table-1 layout: extrapolation MSE, mean and standard error across seeds.
pub fn write_mse_summary_csv<W: Write>(w: &mut W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(
        w,
        "model,all_mean,all_se,lin_mean,lin_se,rbf_mean,rbf_se,sine_mean,sine_se"
    )?;
    for g in &report.groups {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            group_slug(g.variant, g.learned_window),
            g.mse_all.mean,
            g.mse_all.se,
            g.mse_lin.mean,
            g.mse_lin.se,
            g.mse_rbf.mean,
            g.mse_rbf.se,
            g.mse_sine.mean,
            g.mse_sine.se
        )?;
    }
    Ok(())
}

/// Table-2 layout: predicted uncertainty per class for the relational
/// variants, then the optimal row. The 1-d baseline is omitted: it has no
/// native uncertainty estimate.
pub fn write_uncertainty_summary_csv<W: Write>(
    w: &mut W,
    report: &EvalReport,
) -> std::io::Result<()> {
    writeln!(
        w,
        "model,all_mean,all_se,lin_mean,lin_se,rbf_mean,rbf_se,sine_mean,sine_se"
    )?;
    for g in &report.groups {
        let (Some(all), Some(lin), Some(rbf), Some(sine)) = (
            g.uncertainty_all,
            g.uncertainty_lin,
            g.uncertainty_rbf,
            g.uncertainty_sine,
        ) else {
            continue;
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            group_slug(g.variant, g.learned_window),
            all.mean,
            all.se,
            lin.mean,
            lin.se,
            rbf.mean,
            rbf.se,
            sine.mean,
            sine.se
        )?;
    }
    let o = &report.optimal_uncertainty;
    writeln!(w, "optimal,,,{},,{},,{},", o.lin, o.rbf, o.sine)?;
    Ok(())
}
