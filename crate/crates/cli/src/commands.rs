//! The five CLI commands, mapped onto the library crate.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::plot;
use fxtf_core::checkpoint;
use fxtf_core::curve::{self, Curve, CurveClass};
use fxtf_core::eval::{
    self, evaluate_model, optimal_uncertainty, summarize, EvalConfig, ModelEvalResult,
};
use fxtf_core::train::{self, TrainConfig};
use fxtf_core::verify;
use std::io::Write;
use std::path::{Path, PathBuf};

fn echo_config(out_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| CliError::Validation(format!("config serialization: {e}")))?;
    std::fs::write(out_dir.join("resolved_config.toml"), text)?;
    Ok(())
}

pub fn cmd_generate(
    cfg: &RunConfig,
    out_dir: &Path,
    n: usize,
    class: Option<CurveClass>,
    stratified: bool,
) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Validation("--n must be positive".into()));
    }
    cfg.curve
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut curves: Vec<Curve> = Vec::with_capacity(n);
    match (class, stratified) {
        (Some(c), _) => {
            for i in 0..n {
                curves.push(curve::sample_indexed_class(cfg.seed, i as u64, c, &cfg.curve)?);
            }
        }
        (None, true) => {
            // exact per-class counts, earlier classes take the remainder
            let base = n / 3;
            let rem = n % 3;
            for (ci, &c) in CurveClass::ALL.iter().enumerate() {
                let count = base + usize::from(ci < rem);
                for k in 0..count {
                    let index = ((ci as u64) << 32) | k as u64;
                    curves.push(curve::sample_indexed_class(cfg.seed, index, c, &cfg.curve)?);
                }
            }
        }
        (None, false) => {
            for i in 0..n {
                curves.push(curve::sample_indexed(cfg.seed, i as u64, &cfg.curve)?);
            }
        }
    }
    echo_config(out_dir, cfg)?;
    curve::write_dataset(out_dir, &curves)?;
    println!(
        "wrote {} curves ({} points each) to {}",
        curves.len(),
        cfg.curve.n_total(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path, resume: bool) -> Result<(), CliError> {
    echo_config(out_dir, cfg)?;
    let train_cfg: TrainConfig = cfg.train_config(Some(out_dir.to_path_buf()));
    let out = if resume {
        let ckpt = train::find_latest_checkpoint(out_dir).ok_or_else(|| {
            CliError::Validation(format!(
                "--resume: no checkpoint found under {}",
                out_dir.display()
            ))
        })?;
        eprintln!("resuming from {}", ckpt.display());
        train::resume(&train_cfg, &ckpt)?
    } else {
        train::train(&train_cfg)?
    };
    let report = &out.report;
    println!(
        "trained {} steps in {:.1}s (final losses ~{:.4}); artifacts in {}",
        report.steps_run,
        report.wall_clock_secs,
        mean_tail(&report.losses, 50),
        out_dir.display()
    );
    for (a, b) in &report.final_window {
        println!("learned window: a = {a:.4}, b = {b:.4}");
    }
    Ok(())
}

fn mean_tail(xs: &[f64], k: usize) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let tail = &xs[xs.len().saturating_sub(k)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

pub fn cmd_eval(
    cfg: &RunConfig,
    out_dir: &Path,
    checkpoints: &[PathBuf],
    oracle_only: bool,
) -> Result<(), CliError> {
    let eval_cfg: EvalConfig = cfg.eval_config();
    echo_config(out_dir, cfg)?;

    if oracle_only {
        let optimal = optimal_uncertainty(&eval_cfg)?;
        let mut w = std::fs::File::create(out_dir.join("optimal_uncertainty.csv"))?;
        writeln!(w, "lin,sine,rbf")?;
        writeln!(w, "{},{},{}", optimal.lin, optimal.sine, optimal.rbf)?;
        println!(
            "optimal uncertainty: lin {:.3}, sine {:.3}, rbf {:.3}",
            optimal.lin, optimal.sine, optimal.rbf
        );
        return Ok(());
    }
    if checkpoints.is_empty() {
        return Err(CliError::Validation(
            "eval needs at least one checkpoint (or --oracle-only)".into(),
        ));
    }

    let mut results: Vec<ModelEvalResult> = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let loaded = checkpoint::load(path)?;
        eprintln!(
            "evaluating {} ({})",
            path.display(),
            eval::group_label(loaded.model.config.variant, loaded.model.config.learned_window)
        );
        results.push(evaluate_model(&loaded.model, &eval_cfg)?);
    }
    let report = summarize(&results, &eval_cfg)?;

    let mut detail = std::io::BufWriter::new(std::fs::File::create(out_dir.join("detail.csv"))?);
    eval::write_detail_csv(&mut detail, &results)?;
    let mut t1 = std::fs::File::create(out_dir.join("table1_mse.csv"))?;
    eval::write_mse_summary_csv(&mut t1, &report)?;
    let mut t2 = std::fs::File::create(out_dir.join("table2_uncertainty.csv"))?;
    eval::write_uncertainty_summary_csv(&mut t2, &report)?;
    let json = std::fs::File::create(out_dir.join("eval_report.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(json), &report)
        .map_err(|e| CliError::Numeric(format!("report serialization: {e}")))?;

    println!("extrapolation MSE (mean +/- se over seeds):");
    for g in &report.groups {
        println!(
            "  {:<40} all {:.3}+/-{:.3}  lin {:.3}+/-{:.3}  rbf {:.3}+/-{:.3}  sine {:.3}+/-{:.3}",
            g.label,
            g.mse_all.mean,
            g.mse_all.se,
            g.mse_lin.mean,
            g.mse_lin.se,
            g.mse_rbf.mean,
            g.mse_rbf.se,
            g.mse_sine.mean,
            g.mse_sine.se
        );
    }
    println!("predicted uncertainty (relational variants):");
    for g in &report.groups {
        if let (Some(all), Some(lin), Some(rbf), Some(sine)) = (
            g.uncertainty_all,
            g.uncertainty_lin,
            g.uncertainty_rbf,
            g.uncertainty_sine,
        ) {
            println!(
                "  {:<40} all {:.3}+/-{:.3}  lin {:.3}+/-{:.3}  rbf {:.3}+/-{:.3}  sine {:.3}+/-{:.3}",
                g.label, all.mean, all.se, lin.mean, lin.se, rbf.mean, rbf.se, sine.mean, sine.se
            );
        }
    }
    let o = &report.optimal_uncertainty;
    println!(
        "  {:<40} lin {:.3}  rbf {:.3}  sine {:.3}",
        "optimal", o.lin, o.rbf, o.sine
    );
    for g in &report.groups {
        for (seed, windows) in g.seeds.iter().zip(&g.window) {
            for (a, b) in windows {
                println!("  {} seed {seed}: window a = {a:.4}, b = {b:.4}", g.label);
            }
        }
    }
    println!("reports written to {}", out_dir.display());
    Ok(())
}

pub fn cmd_verify() -> Result<(), CliError> {
    let checks = verify::run_all();
    let mut failed = 0usize;
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {:<26} {}", c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    println!("{} / {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} checks failed")));
    }
    Ok(())
}

pub fn cmd_plot(detail_csv: &Path, out_dir: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(detail_csv)?;
    let rows = plot::parse_detail_csv(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", detail_csv.display())))?;
    let written = plot::render_all(&rows, out_dir).map_err(CliError::Io)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
