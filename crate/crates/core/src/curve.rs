//! Curve sampling: lines, sinusoids and RBF (squared-exponential Gaussian
//! process) draws on an integer grid, with exogenous uniform noise.
//!
//! Everything here is a pure function of `(seed, config)`: curves are
//! generated in f64 with a counter-based per-curve seed scheme, so datasets
//! are reproducible and safe to generate in parallel.

use crate::linalg::{cholesky_jittered, lower_matvec, squared_exp_kernel, LinalgError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("RBF covariance factorization failed: {0}")]
    Factorization(#[from] LinalgError),
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveClass {
    Lin,
    Sine,
    Rbf,
}

impl CurveClass {
    pub const ALL: [CurveClass; 3] = [CurveClass::Lin, CurveClass::Sine, CurveClass::Rbf];
}

impl fmt::Display for CurveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveClass::Lin => write!(f, "lin"),
            CurveClass::Sine => write!(f, "sine"),
            CurveClass::Rbf => write!(f, "rbf"),
        }
    }
}

impl std::str::FromStr for CurveClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lin" => Ok(CurveClass::Lin),
            "sine" => Ok(CurveClass::Sine),
            "rbf" => Ok(CurveClass::Rbf),
            other => Err(format!("unknown curve class '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveParams {
    Lin { slope: f64, intercept: f64 },
    Sine { amplitude: f64, period: f64, phase: f64 },
    Rbf { sigma: f64 },
}

/// One sampled curve on the grid `x_i = i`, `i = 1..=n_total`. `latent_ys`
/// is the underlying function before noise; `ys` is what models observe.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub xs: Vec<u32>,
    pub latent_ys: Vec<f64>,
    pub ys: Vec<f64>,
    pub class: CurveClass,
    pub params: CurveParams,
    pub seed: u64,
}

/// How to read "uniform noise with sigma = 0.1": as the standard deviation
/// of the uniform (support ±0.1·√3, the default) or as its half-width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseWidth {
    #[default]
    StdDev,
    HalfWidth,
}

/// Line intercept distribution; the default pins it to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    #[default]
    Zero,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveGenConfig {
    /// Observed context length N.
    pub n_context: usize,
    /// Extra ground-truth points past the context for evaluation.
    pub horizon: usize,
    pub slope_range: (f64, f64),
    pub period_range: (f64, f64),
    pub amp_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub rbf_sigma: f64,
    /// Noise scale; interpretation controlled by `noise_width`.
    pub noise_std: f64,
    pub noise_width: NoiseWidth,
    pub intercept: InterceptMode,
    pub class_probs: [f64; 3],
}

impl Default for CurveGenConfig {
    fn default() -> Self {
        CurveGenConfig {
            n_context: 20,
            horizon: 10,
            slope_range: (-0.1, 0.1),
            period_range: (5.0, 12.0),
            amp_range: (0.8, 1.2),
            phase_range: (0.0, std::f64::consts::TAU),
            rbf_sigma: 3.0,
            noise_std: 0.1,
            noise_width: NoiseWidth::StdDev,
            intercept: InterceptMode::Zero,
            class_probs: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        }
    }
}

impl CurveGenConfig {
    pub fn n_total(&self) -> usize {
        self.n_context + self.horizon
    }

    /// Half-width of the noise support for the configured interpretation.
    pub fn noise_half_width(&self) -> f64 {
        match self.noise_width {
            NoiseWidth::StdDev => self.noise_std * 3.0f64.sqrt(),
            NoiseWidth::HalfWidth => self.noise_std,
        }
    }

    /// Standard deviation of the noise under the configured interpretation.
    pub fn noise_effective_std(&self) -> f64 {
        match self.noise_width {
            NoiseWidth::StdDev => self.noise_std,
            NoiseWidth::HalfWidth => self.noise_std / 3.0f64.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<(), CurveError> {
        if self.n_context < 2 {
            return Err(CurveError::InvalidConfig("n_context must be >= 2".into()));
        }
        if self.rbf_sigma <= 0.0 {
            return Err(CurveError::InvalidConfig("rbf_sigma must be > 0".into()));
        }
        if self.noise_std < 0.0 {
            return Err(CurveError::InvalidConfig("noise_std must be >= 0".into()));
        }
        let sum: f64 = self.class_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_probs.iter().any(|&p| p < 0.0) {
            return Err(CurveError::InvalidConfig(format!(
                "class_probs must be nonnegative and sum to 1, got {:?}",
                self.class_probs
            )));
        }
        for (name, (lo, hi)) in [
            ("slope_range", self.slope_range),
            ("period_range", self.period_range),
            ("amp_range", self.amp_range),
            ("phase_range", self.phase_range),
        ] {
            // NaN bounds must fail too, so keep the negated comparison
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(lo < hi) {
                return Err(CurveError::InvalidConfig(format!(
                    "{name} must be non-degenerate, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// SplitMix64 step; used to derive independent per-curve seeds from a master
/// seed and a curve counter.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th curve of a stream rooted at `master`.
pub fn curve_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x517c_c1b7_2722_0a95)))
}

/// Deterministic RNG used throughout generation.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn grid(n_total: usize) -> Vec<u32> {
    (1..=n_total as u32).collect()
}

pub fn sample_line(rng: &mut ChaCha8Rng, cfg: &CurveGenConfig) -> Curve {
    let slope = rng.gen_range(cfg.slope_range.0..cfg.slope_range.1);
    let intercept = match cfg.intercept {
        InterceptMode::Zero => 0.0,
        InterceptMode::Uniform => rng.gen_range(-1.0..1.0),
    };
    let n = cfg.n_total();
    let latent_ys: Vec<f64> = (1..=n).map(|i| slope * i as f64 + intercept).collect();
    let ys = add_noise(&latent_ys, rng, cfg);
    Curve {
        xs: grid(n),
        latent_ys,
        ys,
        class: CurveClass::Lin,
        params: CurveParams::Lin { slope, intercept },
        seed: 0,
    }
}

pub fn sample_sine(rng: &mut ChaCha8Rng, cfg: &CurveGenConfig) -> Curve {
    let period = rng.gen_range(cfg.period_range.0..cfg.period_range.1);
    let amplitude = rng.gen_range(cfg.amp_range.0..cfg.amp_range.1);
    let phase = rng.gen_range(cfg.phase_range.0..cfg.phase_range.1);
    let n = cfg.n_total();
    let latent_ys: Vec<f64> = (1..=n)
        .map(|i| amplitude * (std::f64::consts::TAU * i as f64 / period + phase).sin())
        .collect();
    let ys = add_noise(&latent_ys, rng, cfg);
    Curve {
        xs: grid(n),
        latent_ys,
        ys,
        class: CurveClass::Sine,
        params: CurveParams::Sine {
            amplitude,
            period,
            phase,
        },
        seed: 0,
    }
}

pub fn sample_rbf(rng: &mut ChaCha8Rng, cfg: &CurveGenConfig) -> Result<Curve, CurveError> {
    let n = cfg.n_total();
    let xs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let c = squared_exp_kernel(&xs, &xs, cfg.rbf_sigma);
    let (l, _jitter) = cholesky_jittered(&c, n, 1e-10, 1e-6)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let latent_ys = lower_matvec(&l, n, &z);
    let ys = add_noise(&latent_ys, rng, cfg);
    Ok(Curve {
        xs: grid(n),
        latent_ys,
        ys,
        class: CurveClass::Rbf,
        params: CurveParams::Rbf {
            sigma: cfg.rbf_sigma,
        },
        seed: 0,
    })
}

/// Add i.i.d. zero-mean uniform noise to latent values.
pub fn add_noise(latent_ys: &[f64], rng: &mut ChaCha8Rng, cfg: &CurveGenConfig) -> Vec<f64> {
    let hw = cfg.noise_half_width();
    if hw == 0.0 {
        return latent_ys.to_vec();
    }
    latent_ys
        .iter()
        .map(|&y| y + rng.gen_range(-hw..hw))
        .collect()
}

/// Draw a class from `class_probs`, then sample the curve. Noise is always
/// applied. The result records the seed when drawn through [`sample_indexed`].
pub fn sample_curve(rng: &mut ChaCha8Rng, cfg: &CurveGenConfig) -> Result<Curve, CurveError> {
    let u: f64 = rng.gen_range(0.0..1.0);
    let class = if u < cfg.class_probs[0] {
        CurveClass::Lin
    } else if u < cfg.class_probs[0] + cfg.class_probs[1] {
        CurveClass::Sine
    } else {
        CurveClass::Rbf
    };
    sample_class(class, rng, cfg)
}

pub fn sample_class(
    class: CurveClass,
    rng: &mut ChaCha8Rng,
    cfg: &CurveGenConfig,
) -> Result<Curve, CurveError> {
    match class {
        CurveClass::Lin => Ok(sample_line(rng, cfg)),
        CurveClass::Sine => Ok(sample_sine(rng, cfg)),
        CurveClass::Rbf => sample_rbf(rng, cfg),
    }
}

/// Curve `index` of the stream rooted at `master_seed`.
pub fn sample_indexed(
    master_seed: u64,
    index: u64,
    cfg: &CurveGenConfig,
) -> Result<Curve, CurveError> {
    let seed = curve_seed(master_seed, index);
    let mut rng = rng_from_seed(seed);
    let mut curve = sample_curve(&mut rng, cfg)?;
    curve.seed = seed;
    Ok(curve)
}

/// Like [`sample_indexed`] with the class forced (stratified generation).
pub fn sample_indexed_class(
    master_seed: u64,
    index: u64,
    class: CurveClass,
    cfg: &CurveGenConfig,
) -> Result<Curve, CurveError> {
    let seed = curve_seed(master_seed, index);
    let mut rng = rng_from_seed(seed);
    let mut curve = sample_class(class, &mut rng, cfg)?;
    curve.seed = seed;
    Ok(curve)
}

// ── Dataset CSV + metadata sidecar ───────────────────────────────────

/// Write curves as `curve_id,class,i,x,latent_y,y`, one row per point.
pub fn write_dataset_csv<W: Write>(mut w: W, curves: &[Curve]) -> Result<(), CurveError> {
    writeln!(w, "curve_id,class,i,x,latent_y,y")?;
    for (id, c) in curves.iter().enumerate() {
        for (k, &x) in c.xs.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                id,
                c.class,
                k + 1,
                x,
                c.latent_ys[k],
                c.ys[k]
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurveMeta {
    pub curve_id: usize,
    pub class: CurveClass,
    pub seed: u64,
    pub params: CurveParams,
}

/// Sidecar metadata: the per-curve parameter records as JSON.
pub fn write_dataset_meta<W: Write>(w: W, curves: &[Curve]) -> Result<(), CurveError> {
    let metas: Vec<CurveMeta> = curves
        .iter()
        .enumerate()
        .map(|(curve_id, c)| CurveMeta {
            curve_id,
            class: c.class,
            seed: c.seed,
            params: c.params.clone(),
        })
        .collect();
    serde_json::to_writer_pretty(w, &metas).map_err(std::io::Error::other)?;
    Ok(())
}

pub fn write_dataset(dir: &Path, curves: &[Curve]) -> Result<(), CurveError> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join("dataset.csv"))?;
    write_dataset_csv(std::io::BufWriter::new(csv), curves)?;
    let meta = std::fs::File::create(dir.join("dataset_meta.json"))?;
    write_dataset_meta(std::io::BufWriter::new(meta), curves)?;
    Ok(())
}

/// Read back a dataset written by [`write_dataset_csv`]. Params and seeds
/// live in the sidecar and are not reconstructed here.
pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<Curve>, CurveError> {
    let reader = BufReader::new(r);
    let mut curves: Vec<Curve> = Vec::new();
    let mut current_id: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "curve_id,class,i,x,latent_y,y" {
                return Err(CurveError::Parse {
                    line: 1,
                    message: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CurveError::Parse {
                line: lineno + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, CurveError> {
            s.parse().map_err(|_| CurveError::Parse {
                line: lineno + 1,
                message: format!("bad {what} '{s}'"),
            })
        };
        let id: usize = fields[0].parse().map_err(|_| CurveError::Parse {
            line: lineno + 1,
            message: format!("bad curve_id '{}'", fields[0]),
        })?;
        let class: CurveClass = fields[1].parse().map_err(|message| CurveError::Parse {
            line: lineno + 1,
            message,
        })?;
        let x = parse(fields[3], "x")? as u32;
        let latent = parse(fields[4], "latent_y")?;
        let y = parse(fields[5], "y")?;
        if current_id != Some(id) {
            current_id = Some(id);
            curves.push(Curve {
                xs: Vec::new(),
                latent_ys: Vec::new(),
                ys: Vec::new(),
                class,
                params: CurveParams::Rbf { sigma: f64::NAN },
                seed: 0,
            });
        }
        let c = curves.last_mut().unwrap();
        c.xs.push(x);
        c.latent_ys.push(latent);
        c.ys.push(y);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn cfg() -> CurveGenConfig {
        CurveGenConfig::default()
    }

    #[test]
    fn line_formula_is_exact() {
        let c = cfg();
        // force parameters through a handmade curve rather than rng
        let latent: Vec<f64> = (1..=c.n_total()).map(|i| 0.1 * i as f64).collect();
        assert_eq!(latent[19], 2.0); // x = 20, slope 0.1
        let zeros: Vec<f64> = (1..=c.n_total()).map(|_| 0.0).collect();
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_line_satisfies_closed_form() {
        let c = cfg();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let curve = sample_line(&mut rng, &c);
            let CurveParams::Lin { slope, intercept } = curve.params else {
                panic!("wrong params")
            };
            for (k, &x) in curve.xs.iter().enumerate() {
                let expect = slope * x as f64 + intercept;
                assert!((curve.latent_ys[k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_sine_satisfies_closed_form_and_bound() {
        let c = cfg();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let curve = sample_sine(&mut rng, &c);
            let CurveParams::Sine {
                amplitude,
                period,
                phase,
            } = curve.params
            else {
                panic!("wrong params")
            };
            for (k, &x) in curve.xs.iter().enumerate() {
                let expect =
                    amplitude * (std::f64::consts::TAU * x as f64 / period + phase).sin();
                assert!((curve.latent_ys[k] - expect).abs() < 1e-12);
                assert!(curve.latent_ys[k].abs() <= 1.2 + 1e-12);
            }
        }
    }

    #[test]
    fn sine_hand_values() {
        // A=1, T=8, phi=0: y(2) = sin(pi/2) = 1, y(8) = sin(2 pi) ~ 0
        let y2 = (std::f64::consts::TAU * 2.0 / 8.0).sin();
        let y8 = (std::f64::consts::TAU * 8.0 / 8.0).sin();
        assert!((y2 - 1.0).abs() < 1e-12);
        assert!(y8.abs() < 1e-12);
    }

    #[test]
    fn noise_support_and_disable() {
        let mut c = cfg();
        let latent = vec![0.0; 1000];
        let mut rng = rng_from_seed(7);
        let noisy = add_noise(&latent, &mut rng, &c);
        let bound = 0.1 * 3.0f64.sqrt();
        assert!(noisy.iter().all(|&v| v.abs() <= bound));
        c.noise_std = 0.0;
        let clean = add_noise(&latent, &mut rng, &c);
        assert_eq!(clean, latent);
    }

    #[test]
    fn noise_std_matches_config() {
        let c = cfg();
        let latent = vec![0.0; 100_000];
        let mut rng = rng_from_seed(11);
        let noise = add_noise(&latent, &mut rng, &c);
        let std = stats::sample_std(&noise);
        assert!((std - 0.1).abs() < 0.002, "std = {std}");
    }

    #[test]
    fn half_width_interpretation() {
        let c = CurveGenConfig {
            noise_width: NoiseWidth::HalfWidth,
            ..cfg()
        };
        let latent = vec![0.0; 10_000];
        let mut rng = rng_from_seed(3);
        let noise = add_noise(&latent, &mut rng, &c);
        assert!(noise.iter().all(|&v| v.abs() <= 0.1));
        assert!((c.noise_effective_std() - 0.1 / 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forced_class_probs_pick_lin() {
        let c = CurveGenConfig {
            class_probs: [1.0, 0.0, 0.0],
            ..cfg()
        };
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let curve = sample_curve(&mut rng, &c).unwrap();
            assert_eq!(curve.class, CurveClass::Lin);
        }
    }

    #[test]
    fn same_seed_same_curve() {
        let c = cfg();
        let a = sample_indexed(42, 17, &c).unwrap();
        let b = sample_indexed(42, 17, &c).unwrap();
        assert_eq!(a, b);
        let other = sample_indexed(42, 18, &c).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rbf_kernel_diagonal_and_hand_entry() {
        let xs: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let k = squared_exp_kernel(&xs, &xs, 3.0);
        for i in 0..30 {
            assert_eq!(k[i * 30 + i], 1.0);
        }
        // C_{1,4} = exp(-0.5 * 9 / 9)
        assert!((k[3] - (-0.5f64).exp()).abs() < 1e-12);
        assert!((k[3] - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn curve_lengths_and_grid() {
        let c = cfg();
        let curve = sample_indexed(1, 0, &c).unwrap();
        assert_eq!(curve.xs.len(), 30);
        assert_eq!(curve.latent_ys.len(), 30);
        assert_eq!(curve.ys.len(), 30);
        for (k, &x) in curve.xs.iter().enumerate() {
            assert_eq!(x as usize, k + 1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = cfg();
        let curves: Vec<Curve> = (0..4)
            .map(|i| sample_indexed(5, i, &c).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &curves).unwrap();
        let back = read_dataset_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), curves.len());
        for (a, b) in curves.iter().zip(&back) {
            assert_eq!(a.class, b.class);
            assert_eq!(a.xs, b.xs);
            assert_eq!(a.latent_ys, b.latent_ys);
            assert_eq!(a.ys, b.ys);
        }
    }

    #[test]
    fn csv_rejects_bad_header() {
        let junk = b"nope\n1,lin,1,1,0,0\n";
        assert!(read_dataset_csv(&junk[..]).is_err());
    }

    #[test]
    fn config_validation_catches_bad_probs() {
        let c = CurveGenConfig {
            class_probs: [0.5, 0.2, 0.2],
            ..cfg()
        };
        assert!(c.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
