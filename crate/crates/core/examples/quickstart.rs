//! Minimal end-to-end run: train a small relational transformer with a
//! learned window on a few thousand curves, then extrapolate one test
//! curve with uncertainty. Takes a minute or two on a laptop CPU.
//!
//!     cargo run --release --example quickstart [steps]

use fxtf_core::curve::{sample_indexed, CurveGenConfig};
use fxtf_core::eval::rollout;
use fxtf_core::model::{ModelConfig, Variant};
use fxtf_core::train::{train, TrainConfig};

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let cfg = TrainConfig {
        n_curves: 32 * steps,
        model: ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            seed: 0,
            ..ModelConfig::desk(Variant::Relational, true)
        },
        seed: 0,
        ..TrainConfig::default()
    };
    println!("training relational+window for {steps} steps ...");
    let out = train(&cfg).expect("training failed");
    let losses = &out.report.losses;
    println!(
        "loss: first {:.3}, last {:.3} ({:.1}s)",
        losses[0],
        losses[losses.len() - 1],
        out.report.wall_clock_secs
    );
    for (a, b) in out.model.window_values() {
        println!("learned window: a = {a:.3}, b = {b:.3}");
    }

    let curve = sample_indexed(999, 0, &CurveGenConfig::default()).unwrap();
    println!("\nextrapolating a fresh {} curve:", curve.class);
    let steps = rollout(&out.model, &curve, 20, 10).unwrap();
    println!("{:>4} {:>9} {:>9} {:>7}", "x", "truth", "pred", "std");
    for (t, s) in steps.iter().enumerate() {
        println!(
            "{:>4} {:>9.4} {:>9.4} {:>7.4}",
            21 + t,
            curve.latent_ys[20 + t],
            s.prediction,
            s.uncertainty.unwrap_or(f64::NAN)
        );
    }
}
