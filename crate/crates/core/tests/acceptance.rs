//! Acceptance suite: one test per release criterion, named so the harness
//! output reads as a per-criterion checklist. Run with `-- --nocapture` to
//! see the detail lines.
//!
//! The heavy criterion (desk-scale training of all four variants, three
//! seeds each) trains once and shares its fleet with the uncertainty-table
//! criterion.

use fxtf_core::checkpoint;
use fxtf_core::eval::{
    evaluate_model, gp_mean_posterior_std, group_label, summarize, EvalConfig, EvalReport,
    ModelEvalResult,
};
use fxtf_core::model::{Model, ModelConfig, Variant};
use fxtf_core::optim::{Adam, AdamConfig};
use fxtf_core::train::{train, TrainConfig};
use fxtf_core::verify;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

fn pass(criterion: &str, detail: &str) {
    println!("[{criterion}] PASS: {detail}");
}

fn require(check: verify::Check, criterion: &str) {
    assert!(check.passed, "[{criterion}] FAIL: {}: {}", check.name, check.detail);
    pass(criterion, &format!("{}: {}", check.name, check.detail));
}

#[test]
fn criterion_01_gp_oracle_reproduction() {
    let t0 = Instant::now();
    let mean = gp_mean_posterior_std(3.0, 0.1, 20, 10).unwrap();
    assert!(
        (mean - 0.802).abs() <= 0.005,
        "mean posterior std {mean:.4} outside 0.802 +/- 0.005"
    );
    assert!(t0.elapsed().as_secs_f64() < 1.0, "oracle too slow");
    pass(
        "criterion 1",
        &format!("mean GP posterior std over t=1..10 at sigma=3, N=20: {mean:.4} = 0.802 +/- 0.005"),
    );
}

#[test]
fn criterion_02_gradient_fidelity() {
    require(verify::check_op_gradients(), "criterion 2");
    require(verify::check_model_gradients(), "criterion 2");
}

#[test]
fn criterion_03_codec_round_trip() {
    require(verify::check_codec_round_trip(10_000), "criterion 3");
}

#[test]
fn criterion_04_mask_laws_and_non_leakage() {
    require(verify::check_gate_laws(), "criterion 4");
    require(verify::check_non_leakage(100), "criterion 4");
}

#[test]
fn criterion_05_window_function() {
    require(verify::check_window_shape(), "criterion 5");
}

#[test]
fn criterion_06_sampler_statistics() {
    require(verify::check_sampler_statistics(), "criterion 6");
    require(verify::check_noise_independence(), "criterion 6");
}

#[test]
fn criterion_07_permutation_equivariance() {
    require(verify::check_permutation_equivariance(100), "criterion 7");
}

// ── Desk-scale fleet (criteria 8 and 9) ──────────────────────────────

struct Fleet {
    results: Vec<ModelEvalResult>,
    report: EvalReport,
    final_losses: Vec<(String, u64, f64)>,
}

fn fleet() -> &'static Fleet {
    static FLEET: OnceLock<Fleet> = OnceLock::new();
    FLEET.get_or_init(|| {
        let out_root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-fleet");
        let eval_cfg = EvalConfig {
            n_test_curves: 600,
            ..EvalConfig::default()
        };
        let variants = [
            (Variant::OneD, false),
            (Variant::OneD, true),
            (Variant::Relational, false),
            (Variant::Relational, true),
        ];
        let mut results = Vec::with_capacity(12);
        let mut final_losses = Vec::with_capacity(12);
        for (variant, window) in variants {
            for seed in 0..3u64 {
                let label = group_label(variant, window);
                let dir = out_root.join(format!(
                    "{}-seed{seed}",
                    fxtf_core::eval::group_slug(variant, window)
                ));
                let cfg = TrainConfig {
                    out_dir: Some(dir),
                    ..TrainConfig::desk(variant, window, seed)
                };
                let t0 = Instant::now();
                let out = train(&cfg).expect("fleet training failed");
                let tail = &out.report.losses[out.report.losses.len() - 50..];
                let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
                eprintln!(
                    "[fleet] trained {label} seed {seed}: {:.0}s, final loss {final_loss:.4}",
                    t0.elapsed().as_secs_f64()
                );
                final_losses.push((label.clone(), seed, final_loss));
                let t1 = Instant::now();
                let result = evaluate_model(&out.model, &eval_cfg).expect("fleet eval failed");
                eprintln!(
                    "[fleet] evaluated {label} seed {seed}: {:.0}s, mse {:.4}",
                    t1.elapsed().as_secs_f64(),
                    result.aggregate_mse
                );
                results.push(result);
            }
        }
        let report = summarize(&results, &eval_cfg).expect("summary failed");
        // keep the summary tables on disk for inspection
        let _ = std::fs::create_dir_all(&out_root);
        if let Ok(mut f) = std::fs::File::create(out_root.join("table1_mse.csv")) {
            let _ = fxtf_core::eval::write_mse_summary_csv(&mut f, &report);
        }
        if let Ok(mut f) = std::fs::File::create(out_root.join("table2_uncertainty.csv")) {
            let _ = fxtf_core::eval::write_uncertainty_summary_csv(&mut f, &report);
        }
        Fleet {
            results,
            report,
            final_losses,
        }
    })
}

fn group(fleet: &Fleet, variant: Variant, window: bool) -> &fxtf_core::eval::GroupSummary {
    fleet
        .report
        .groups
        .iter()
        .find(|g| g.variant == variant && g.learned_window == window)
        .expect("missing group")
}

#[test]
fn criterion_08_desk_scale_table1_ordering() {
    let fleet = fleet();
    let one_d = group(fleet, Variant::OneD, false);
    let one_d_w = group(fleet, Variant::OneD, true);
    let rel = group(fleet, Variant::Relational, false);
    let rel_w = group(fleet, Variant::Relational, true);

    for g in &fleet.report.groups {
        eprintln!(
            "[fleet] {:<40} all {:.3}+/-{:.3} lin {:.3} rbf {:.3} sine {:.3}",
            g.label, g.mse_all.mean, g.mse_all.se, g.mse_lin.mean, g.mse_rbf.mean, g.mse_sine.mean
        );
    }

    // (a) relational + window beats the plain 1d baseline overall
    assert!(
        rel_w.mse_all.mean < one_d.mse_all.mean,
        "(a) aggregate: relational+window {:.4} !< 1d {:.4}",
        rel_w.mse_all.mean,
        one_d.mse_all.mean
    );
    // (b) both learned-window variants beat the baseline on sines
    assert!(
        one_d_w.mse_sine.mean < one_d.mse_sine.mean,
        "(b) sine: 1d+window {:.4} !< 1d {:.4}",
        one_d_w.mse_sine.mean,
        one_d.mse_sine.mean
    );
    assert!(
        rel_w.mse_sine.mean < one_d.mse_sine.mean,
        "(b) sine: relational+window {:.4} !< 1d {:.4}",
        rel_w.mse_sine.mean,
        one_d.mse_sine.mean
    );
    // (c) relational variants hold the line on lines
    assert!(
        rel.mse_lin.mean <= one_d_w.mse_lin.mean,
        "(c) lin: relational {:.4} > 1d+window {:.4}",
        rel.mse_lin.mean,
        one_d_w.mse_lin.mean
    );
    assert!(
        rel_w.mse_lin.mean <= one_d_w.mse_lin.mean,
        "(c) lin: relational+window {:.4} > 1d+window {:.4}",
        rel_w.mse_lin.mean,
        one_d_w.mse_lin.mean
    );
    // every desk run converged
    for (label, seed, loss) in &fleet.final_losses {
        assert!(
            *loss < 0.5,
            "{label} seed {seed}: final training loss {loss:.4} >= 0.5"
        );
    }
    pass(
        "criterion 8",
        &format!(
            "seed-mean orderings hold: rel+win all {:.3} < 1d all {:.3}; sine {:.3}/{:.3} < {:.3}; lin {:.3}/{:.3} <= {:.3}; all 12 final losses < 0.5",
            rel_w.mse_all.mean,
            one_d.mse_all.mean,
            one_d_w.mse_sine.mean,
            rel_w.mse_sine.mean,
            one_d.mse_sine.mean,
            rel.mse_lin.mean,
            rel_w.mse_lin.mean,
            one_d_w.mse_lin.mean,
        ),
    );
}

#[test]
fn criterion_09_table2_structure() {
    let fleet = fleet();
    // relational variants report uncertainties for every class; the 1d
    // baseline reports none
    for r in &fleet.results {
        match r.variant {
            Variant::Relational => {
                let per = r.uncertainty_per_class.as_ref().expect("missing uncertainty");
                assert_eq!(per.len(), 3);
                assert!(per.iter().all(|(_, u)| u.is_finite() && *u > 0.0));
            }
            Variant::OneD => assert!(r.uncertainty_per_class.is_none()),
        }
    }
    let o = &fleet.report.optimal_uncertainty;
    assert_eq!(o.lin, 0.1, "optimal lin must be the exogenous noise std");
    assert_eq!(o.sine, 0.1, "optimal sine must be the exogenous noise std");
    let gp = gp_mean_posterior_std(3.0, 0.1, 20, 10).unwrap();
    assert_eq!(o.rbf, gp, "optimal rbf must be the GP posterior value");
    assert!((o.rbf - 0.802).abs() <= 0.005);

    // the uncertainty table lists exactly the relational rows plus optimal
    let mut buf = Vec::new();
    fxtf_core::eval::write_uncertainty_summary_csv(&mut buf, &fleet.report).unwrap();
    let table = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "two relational rows + optimal: {table}");
    assert!(rows[0].starts_with("relational,"));
    assert!(rows[1].starts_with("relational-window,"));
    assert!(rows[2].starts_with("optimal,"));
    for g in &fleet.report.groups {
        if g.variant == Variant::Relational {
            eprintln!(
                "[fleet] {:<40} unc all {:.3} lin {:.3} rbf {:.3} sine {:.3}",
                g.label,
                g.uncertainty_all.unwrap().mean,
                g.uncertainty_lin.unwrap().mean,
                g.uncertainty_rbf.unwrap().mean,
                g.uncertainty_sine.unwrap().mean
            );
        }
    }
    pass(
        "criterion 9",
        &format!(
            "relational rows report per-class uncertainty; 1d reports none; optimal row (0.1, 0.1, {:.4})",
            o.rbf
        ),
    );
}

#[test]
fn criterion_10_checkpoint_round_trip_and_format() {
    let t0 = Instant::now();
    require(verify::check_checkpoint_round_trip(), "criterion 10");

    // byte-level conformance, parsed independently of the writer
    let model = Model::<f32>::new(ModelConfig {
        seed: 9,
        ..ModelConfig::tiny(Variant::Relational, true)
    });
    let adam: Adam<f32> = Adam::new(AdamConfig::default(), &model.params.sizes());
    let mut buf = Vec::new();
    checkpoint::save_to_writer(&mut buf, &model, Some(&adam)).unwrap();

    let u32_at = |off: usize| u32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
    assert_eq!(&buf[0..4], b"FXTF", "magic bytes");
    assert_eq!(u32_at(4), 1, "format version");
    let json_len = u32_at(8) as usize;
    let meta: serde_json::Value = serde_json::from_slice(&buf[12..12 + json_len]).unwrap();
    assert_eq!(meta["model"]["variant"], "relational");
    let mut off = 12 + json_len;
    let n_tensors = u32_at(off) as usize;
    off += 4;
    assert_eq!(
        n_tensors,
        model.params.tensors.len() * 3 + 1,
        "parameters plus adam.m.*, adam.v.* and adam.step"
    );
    let mut names = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = u32_at(off) as usize;
        off += 4;
        let name = std::str::from_utf8(&buf[off..off + name_len]).unwrap().to_string();
        off += name_len;
        let rank = u32_at(off) as usize;
        off += 4;
        let mut numel = 1usize;
        for _ in 0..rank {
            let dim = u64::from_le_bytes(buf[off..off + 8].try_into().unwrap()) as usize;
            off += 8;
            numel *= dim;
        }
        off += 4 * numel; // little-endian f32 payload
        names.push(name);
    }
    assert_eq!(off, buf.len(), "no trailing bytes");
    for t in &model.params.tensors {
        assert!(names.contains(&t.name), "missing tensor {}", t.name);
        assert!(names.contains(&format!("adam.m.{}", t.name)));
        assert!(names.contains(&format!("adam.v.{}", t.name)));
    }
    assert!(names.contains(&"adam.step".to_string()));
    assert!(t0.elapsed().as_secs_f64() < 10.0);
    pass(
        "criterion 10",
        &format!(
            "save/load/forward bit-identical; byte layout walks cleanly over {n_tensors} tensors"
        ),
    );
}
