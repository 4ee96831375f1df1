//! Learned attention window and the mask laws for both model variants.
//!
//! The window is a decreasing sigmoidal gate on positional distance,
//! `F_{a,b}(d) = (1 - sigma(d/b - a)) / (1 - sigma(-a))` with `a, b > 0`
//! kept positive through a softplus reparameterization. It multiplies the
//! causal indicator: tokens attend only to positions at or before their own
//! (per axis, for the relational layout), and with the window enabled the
//! weight decays with distance.
//!
//! Both a plain f64 construction (evaluation, brute-force checks) and a
//! taped construction (so gradients reach the window parameters) live here.

use crate::scalar::Scalar;
use crate::tensor::{sigmoid, softplus, Tape, TensorError, TensorId};
use serde::{Deserialize, Serialize};

/// Unconstrained window parameters; effective values go through softplus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub raw_a: f64,
    pub raw_b: f64,
}

impl WindowParams {
    /// Initialization with the window open (a ~ 5, b ~ 2): a closed initial
    /// window would block gradient flow to everything far away.
    pub fn open() -> Self {
        WindowParams {
            raw_a: inverse_softplus(5.0),
            raw_b: inverse_softplus(2.0),
        }
    }

    pub fn effective(&self) -> (f64, f64) {
        (softplus(self.raw_a), softplus(self.raw_b))
    }
}

/// Inverse of `ln(1 + e^x)` for positive targets.
pub fn inverse_softplus(y: f64) -> f64 {
    // x = ln(e^y - 1); rewritten to stay finite for large y
    y + (-(-y).exp_m1()).ln()
}

/// `F_{a,b}(d) = (1 - sigma(d/b - a)) / (1 - sigma(-a))`, evaluated as
/// `sigma(a - d/b) / sigma(a)`: the same ratio, but without the
/// `1 - sigma` cancellation that flushes the tail to exactly zero and
/// breaks strict monotonicity. 1 at zero distance (numerator and
/// denominator share their argument there, so the ratio is bit-exact 1),
/// strictly decreasing, positive.
pub fn window_value(a: f64, b: f64, d: f64) -> f64 {
    debug_assert!(d >= 0.0);
    sigmoid(a - d / b) / sigmoid(a)
}

/// Strict follows the literal indicator `1_{x_i > x_j}`; inclusive (the
/// default) lets every token attend to itself, matching the conventional
/// causal mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorMode {
    #[default]
    Inclusive,
    Strict,
}

impl IndicatorMode {
    #[inline]
    fn allows(&self, query: f64, key: f64) -> bool {
        match self {
            IndicatorMode::Inclusive => query >= key,
            IndicatorMode::Strict => query > key,
        }
    }
}

/// Per-pair multiplicative attention gate, row = query, column = key.
/// Entries live in [0,1]; entries forbidden by the causal indicator are
/// exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GateMatrix {
    pub fn get(&self, query: usize, key: usize) -> f64 {
        self.values[query * self.n + key]
    }

    /// Stage as a constant tensor.
    pub fn to_tensor<T: Scalar>(&self, tape: &mut Tape<T>) -> TensorId {
        tape.constant_from_f64(&[self.n, self.n], &self.values)
    }
}

/// Gate for the 1-d token layout. `xs` are the x positions of all tokens
/// including the query token. With `window = None` this is the pure causal
/// indicator (the standard triangular mask); with `Some((a, b))` each
/// allowed entry is weighted by `F_{a,b}(|x_i - x_j|)`.
pub fn build_gate_1d(xs: &[f64], window: Option<(f64, f64)>, mode: IndicatorMode) -> GateMatrix {
    let n = xs.len();
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if mode.allows(xs[i], xs[j]) {
                values[i * n + j] = match window {
                    Some((a, b)) => window_value(a, b, (xs[i] - xs[j]).abs()),
                    None => 1.0,
                };
            }
        }
    }
    GateMatrix { n, values }
}

/// Gate for the relational token layout. `coords` are each token's
/// similarity-matrix coordinates `(i, j)`. A token may attend only to
/// tokens at-or-left and at-or-above (per `mode`), and the window decays
/// with both coordinate distances:
/// `F(|i - i'|) * F(|j - j'|) * ind(i, i') * ind(j, j')`.
pub fn build_gate_rel(
    coords: &[(f64, f64)],
    window: Option<(f64, f64)>,
    mode: IndicatorMode,
) -> GateMatrix {
    let n = coords.len();
    let mut values = vec![0.0f64; n * n];
    for p in 0..n {
        let (qi, qj) = coords[p];
        for q in 0..n {
            let (ki, kj) = coords[q];
            if mode.allows(qi, ki) && mode.allows(qj, kj) {
                values[p * n + q] = match window {
                    Some((a, b)) => {
                        window_value(a, b, (qi - ki).abs()) * window_value(a, b, (qj - kj).abs())
                    }
                    None => 1.0,
                };
            }
        }
    }
    GateMatrix { n, values }
}

// ── Taped construction (differentiable in raw_a, raw_b) ──────────────

/// `F_{a,b}` applied elementwise to a constant distance matrix, built from
/// the raw (pre-softplus) parameter leaves so gradients flow back to them.
fn window_factor_taped<T: Scalar>(
    tape: &mut Tape<T>,
    raw_a: TensorId,
    raw_b: TensorId,
    distances: &[f64],
    shape: &[usize],
) -> Result<TensorId, TensorError> {
    let a = tape.softplus(raw_a);
    let b = tape.softplus(raw_b);
    let a_full = tape.broadcast_scalar(a, shape)?;
    let b_full = tape.broadcast_scalar(b, shape)?;
    let d = tape.constant_from_f64(shape, distances);
    // sigma(a - d/b) / sigma(a), matching `window_value`; at d = 0 both
    // sigmoid inputs are the same a, so the ratio is exactly 1.
    let scaled = tape.div(d, b_full)?;
    let arg = tape.sub(a_full, scaled)?;
    let numer = tape.sigmoid(arg);
    let denom = tape.sigmoid(a_full);
    tape.div(numer, denom)
}

/// Taped 1-d gate: window factor times the constant causal indicator.
pub fn build_gate_1d_taped<T: Scalar>(
    tape: &mut Tape<T>,
    raw_a: TensorId,
    raw_b: TensorId,
    xs: &[f64],
    mode: IndicatorMode,
) -> Result<TensorId, TensorError> {
    let n = xs.len();
    let shape = [n, n];
    let mut dist = vec![0.0f64; n * n];
    let mut ind = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = (xs[i] - xs[j]).abs();
            ind[i * n + j] = if mode.allows(xs[i], xs[j]) { 1.0 } else { 0.0 };
        }
    }
    let f = window_factor_taped(tape, raw_a, raw_b, &dist, &shape)?;
    let mask = tape.constant_from_f64(&shape, &ind);
    tape.mul(f, mask)
}

/// Taped relational gate: product of the two per-axis window factors and
/// the constant two-axis indicator.
pub fn build_gate_rel_taped<T: Scalar>(
    tape: &mut Tape<T>,
    raw_a: TensorId,
    raw_b: TensorId,
    coords: &[(f64, f64)],
    mode: IndicatorMode,
) -> Result<TensorId, TensorError> {
    let n = coords.len();
    let shape = [n, n];
    let mut dist_i = vec![0.0f64; n * n];
    let mut dist_j = vec![0.0f64; n * n];
    let mut ind = vec![0.0f64; n * n];
    for p in 0..n {
        let (qi, qj) = coords[p];
        for q in 0..n {
            let (ki, kj) = coords[q];
            dist_i[p * n + q] = (qi - ki).abs();
            dist_j[p * n + q] = (qj - kj).abs();
            ind[p * n + q] = if mode.allows(qi, ki) && mode.allows(qj, kj) {
                1.0
            } else {
                0.0
            };
        }
    }
    let fi = window_factor_taped(tape, raw_a, raw_b, &dist_i, &shape)?;
    let fj = window_factor_taped(tape, raw_a, raw_b, &dist_j, &shape)?;
    let f = tape.mul(fi, fj)?;
    let mask = tape.constant_from_f64(&shape, &ind);
    tape.mul(f, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_is_one_at_zero_distance() {
        for (a, b) in [(0.5, 0.3), (2.0, 1.0), (5.0, 2.0), (17.0, 0.01)] {
            assert_eq!(window_value(a, b, 0.0), 1.0, "a={a} b={b}");
        }
    }

    #[test]
    fn window_hand_value() {
        // F_{2,1}(2) = (1 - sigma(0)) / (1 - sigma(-2)) = 0.5 / 0.880797...
        let f = window_value(2.0, 1.0, 2.0);
        assert!((f - 0.56767).abs() < 1e-5, "{f}");
    }

    #[test]
    fn window_decays_to_zero() {
        assert!(window_value(2.0, 1.0, 1e4) < 1e-12);
    }

    #[test]
    fn window_strictly_decreasing() {
        for (a, b) in [(0.7, 0.2), (2.0, 1.0), (5.0, 2.0), (10.0, 0.5)] {
            let mut prev = window_value(a, b, 0.0);
            for k in 1..100 {
                let d = k as f64 * 0.3;
                let cur = window_value(a, b, d);
                assert!(cur < prev, "not decreasing at d={d} for a={a} b={b}");
                prev = cur;
            }
        }
    }

    #[test]
    fn window_opens_as_a_grows() {
        for d in [0.0, 1.0, 2.5, 5.0] {
            assert!(window_value(20.0, 1.0, d) > 0.99);
        }
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for y in [0.01, 0.5, 2.0, 5.0, 30.0] {
            let x = inverse_softplus(y);
            assert!((softplus(x) - y).abs() < 1e-9, "y={y}");
        }
        let w = WindowParams::open();
        let (a, b) = w.effective();
        assert!((a - 5.0).abs() < 1e-9);
        assert!((b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gate_1d_without_window_is_causal_triangle() {
        let g = build_gate_1d(&[1.0, 2.0, 3.0], None, IndicatorMode::Inclusive);
        let expect = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(g.values.as_slice(), expect.as_slice());
    }

    #[test]
    fn gate_1d_strict_mode_excludes_diagonal() {
        let g = build_gate_1d(&[1.0, 2.0], None, IndicatorMode::Strict);
        assert_eq!(g.values, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gate_1d_window_hand_values() {
        let g = build_gate_1d(&[1.0, 2.0, 3.0], Some((2.0, 1.0)), IndicatorMode::Inclusive);
        assert_eq!(g.get(0, 0), 1.0); // F(0) exactly 1
        assert!((g.get(2, 0) - 0.56767).abs() < 1e-5); // F(2)
        // F(1) = (1 - sigma(-1)) / (1 - sigma(-2)) = (1 + e^2) / (e (1 + e))
        let e = std::f64::consts::E;
        let f1 = (1.0 + e * e) / (e * (1.0 + e));
        assert!((g.get(2, 1) - f1).abs() < 1e-12);
        assert!((f1 - 0.83000).abs() < 1e-5);
        let direct = (1.0 - sigmoidf(-1.0)) / (1.0 - sigmoidf(-2.0));
        assert!((g.get(2, 1) - direct).abs() < 1e-12);
    }

    fn sigmoidf(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn gate_rel_indicator_law() {
        // tokens: (2,3) may attend to (1,2) but not (1,4)
        let coords = [(2.0, 3.0), (1.0, 2.0), (1.0, 4.0)];
        let g = build_gate_rel(&coords, None, IndicatorMode::Inclusive);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(0, 2), 0.0);
        // every self-gate is F(0)^2 = 1
        for p in 0..coords.len() {
            assert_eq!(g.get(p, p), 1.0);
        }
    }

    #[test]
    fn gate_rel_window_product() {
        let coords = [(3.0, 4.0), (1.0, 2.0)];
        let g = build_gate_rel(&coords, Some((2.0, 1.0)), IndicatorMode::Inclusive);
        let f2 = window_value(2.0, 1.0, 2.0);
        assert!((g.get(0, 1) - f2 * f2).abs() < 1e-12);
        assert!((g.get(0, 1) - 0.32225).abs() < 1e-5);
    }

    #[test]
    fn taped_gate_matches_plain_construction() {
        let params = WindowParams { raw_a: 0.4, raw_b: -0.3 };
        let (a, b) = params.effective();
        let xs: Vec<f64> = (1..=6).map(|i| i as f64).collect();
        let plain = build_gate_1d(&xs, Some((a, b)), IndicatorMode::Inclusive);
        let mut tape: Tape<f64> = Tape::new();
        let ra = tape.scalar(params.raw_a, true);
        let rb = tape.scalar(params.raw_b, true);
        let gate = build_gate_1d_taped(&mut tape, ra, rb, &xs, IndicatorMode::Inclusive).unwrap();
        for (tv, pv) in tape.value(gate).iter().zip(&plain.values) {
            assert!((tv - pv).abs() < 1e-14);
        }
        // diagonal exactly 1, masked entries exactly 0
        let n = xs.len();
        for i in 0..n {
            assert_eq!(tape.value(gate)[i * n + i], 1.0);
            for j in i + 1..n {
                assert_eq!(tape.value(gate)[i * n + j], 0.0);
            }
        }
    }

    #[test]
    fn taped_gate_gradients_reach_raw_params() {
        let xs: Vec<f64> = (1..=5).map(|i| i as f64).collect();
        let check = crate::gradcheck::check_gradient(&[0.4, -0.3], 1e-5, |theta, want| {
            let mut tape: Tape<f64> = Tape::new();
            let ra = tape.scalar(theta[0], true);
            let rb = tape.scalar(theta[1], true);
            let gate =
                build_gate_1d_taped(&mut tape, ra, rb, &xs, IndicatorMode::Inclusive).unwrap();
            let loss = tape.sum(gate);
            if want {
                tape.backward(loss).unwrap();
                let g = vec![tape.grad(ra).unwrap()[0], tape.grad(rb).unwrap()[0]];
                (tape.item(loss), Some(g))
            } else {
                (tape.item(loss), None)
            }
        });
        assert!(check.passes(1e-6), "{check:?}");
        assert!(check.analytic_at_worst.abs() > 0.0 || check.numeric_at_worst.abs() > 0.0);
    }
}
