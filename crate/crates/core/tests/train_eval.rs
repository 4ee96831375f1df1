//! Mid-level integration: smoke training oracles on constant curves, the
//! evaluation report plumbing, and file-level artifacts.

use fxtf_core::curve::{CurveGenConfig, InterceptMode};
use fxtf_core::eval::{
    evaluate_model, recompute_aggregate, summarize, uncertainty_table, EvalConfig,
};
use fxtf_core::model::{Model, ModelConfig, Variant};
use fxtf_core::tensor::Tape;
use fxtf_core::train::{train, ContextSchedule, TrainConfig};

/// Constant curves: zero slope, random intercept, no noise.
fn constant_curve_config() -> CurveGenConfig {
    CurveGenConfig {
        n_context: 10,
        horizon: 2,
        slope_range: (-1e-12, 1e-12),
        intercept: InterceptMode::Uniform,
        noise_std: 0.0,
        class_probs: [1.0, 0.0, 0.0],
        ..CurveGenConfig::default()
    }
}

fn smoke_train(variant: Variant, steps: usize) -> Model<f32> {
    let cfg = TrainConfig {
        n_curves: 8 * steps,
        batch_size: 8,
        curve: constant_curve_config(),
        model: ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            seed: 1,
            ..ModelConfig::desk(variant, false)
        },
        schedule: ContextSchedule::UniformPrefix { min: 4, max: 8 },
        seed: 1,
        ..TrainConfig::default()
    };
    train(&cfg).expect("smoke training failed").model
}

#[test]
fn trained_1d_model_predicts_constants() {
    let model = smoke_train(Variant::OneD, 2000);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let c = -0.9 + 0.09 * k as f64;
        let mut tokens: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, c)).collect();
        tokens.push((9.0, 0.0));
        let mut tape: Tape<f32> = Tape::new();
        let fp = model.forward_1d(&mut tape, &tokens, 8, false).unwrap();
        let pred = tape.value(fp.output)[0] as f64;
        worst = worst.max((pred - c).abs());
    }
    assert!(worst < 0.05, "worst constant-prediction error {worst}");
}

#[test]
fn trained_relational_model_predicts_zero_row_on_constants() {
    let model = smoke_train(Variant::Relational, 2000);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let c = -0.9 + 0.09 * k as f64;
        let ys = vec![c; 8];
        let rel = fxtf_core::codec::encode_input(&ys).unwrap();
        let mut tape: Tape<f32> = Tape::new();
        let fp = model.forward_rel(&mut tape, &rel, false).unwrap();
        for &v in tape.value(fp.output) {
            worst = worst.max(v.abs() as f64);
        }
    }
    assert!(worst < 0.05, "worst similarity-row magnitude {worst}");
}

#[test]
fn evaluation_report_structure_and_recomputation() {
    let eval_cfg = EvalConfig {
        n_test_curves: 12,
        horizon: 4,
        ..EvalConfig::default()
    };
    let mut results = Vec::new();
    for (variant, window, seed) in [
        (Variant::OneD, false, 0u64),
        (Variant::OneD, false, 1),
        (Variant::Relational, true, 0),
        (Variant::Relational, true, 1),
    ] {
        let model = Model::<f32>::new(ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            seed,
            ..ModelConfig::desk(variant, window)
        });
        results.push(evaluate_model(&model, &eval_cfg).unwrap());
    }

    for r in &results {
        // context rows + horizon rows per curve
        assert_eq!(
            r.records.len(),
            12 * (eval_cfg.curve.n_context + eval_cfg.horizon)
        );
        // the summary aggregate is exactly the mean of the stored records
        assert_eq!(r.aggregate_mse, recompute_aggregate(&r.records));
        match r.variant {
            Variant::OneD => assert!(r.uncertainty_per_class.is_none()),
            Variant::Relational => {
                let table = uncertainty_table(r).unwrap();
                assert_eq!(table.len(), 3);
                assert!(table.iter().all(|(_, u)| u.is_finite() && *u >= 0.0));
            }
        }
    }
    assert!(matches!(
        uncertainty_table(&results[0]),
        Err(fxtf_core::eval::EvalError::UnsupportedModel(_))
    ));

    let report = summarize(&results, &eval_cfg).unwrap();
    assert_eq!(report.groups.len(), 2, "two (variant, window) groups");
    let one_d = &report.groups[0];
    assert_eq!(one_d.seeds, vec![0, 1]);
    assert!(one_d.uncertainty_all.is_none());
    let rel = &report.groups[1];
    assert!(rel.uncertainty_all.is_some());
    assert!(rel.learned_window);
    assert_eq!(rel.window.len(), 2);
    assert_eq!(report.metadata.per_class_counts, [4, 4, 4]);
    assert_eq!(report.optimal_uncertainty.lin, 0.1);
    assert_eq!(report.optimal_uncertainty.sine, 0.1);
    assert!((report.optimal_uncertainty.rbf - 0.5294).abs() < 0.005); // horizon 4

    // detail CSV round-trips through the plot parser schema
    let mut buf = Vec::new();
    fxtf_core::eval::write_detail_csv(&mut buf, &results).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "model,variant,seed,class,curve_id,step,prediction,target,sq_error,pred_std"
    );
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 10, "{line}");
    }
}

#[test]
fn threaded_evaluation_matches_single_threaded() {
    let model = Model::<f32>::new(ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        seed: 4,
        ..ModelConfig::desk(Variant::Relational, true)
    });
    let base_cfg = EvalConfig {
        n_test_curves: 9,
        horizon: 3,
        ..EvalConfig::default()
    };
    let single = evaluate_model(&model, &base_cfg).unwrap();
    let threaded = evaluate_model(
        &model,
        &EvalConfig {
            threads: 3,
            ..base_cfg
        },
    )
    .unwrap();
    assert_eq!(single.aggregate_mse.to_bits(), threaded.aggregate_mse.to_bits());
    assert_eq!(single.records.len(), threaded.records.len());
    for (a, b) in single.records.iter().zip(&threaded.records) {
        assert_eq!(a.curve_id, b.curve_id);
        assert_eq!(a.prediction.map(f64::to_bits), b.prediction.map(f64::to_bits));
    }
}

#[test]
fn train_writes_artifacts_and_loss_trace_has_expected_length() {
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("train-artifacts");
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = TrainConfig {
        n_curves: 96,
        model: ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            seed: 2,
            ..ModelConfig::desk(Variant::Relational, true)
        },
        schedule: ContextSchedule::Fixed(5),
        out_dir: Some(dir.clone()),
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(&cfg).unwrap();
    assert_eq!(out.report.losses.len(), cfg.steps());
    assert!(dir.join("checkpoint_final.fxtf").exists());
    assert!(dir.join("train_report.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("train_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["steps_run"], 3);
    assert_eq!(report["fresh_curves_per_step"], true);
    assert!(report["final_window"].as_array().unwrap().len() == 1);
    let loss_csv = std::fs::read_to_string(dir.join("loss.csv")).unwrap();
    assert_eq!(loss_csv.lines().count(), 4);
    assert!(loss_csv.starts_with("step,loss\n1,"));
}
