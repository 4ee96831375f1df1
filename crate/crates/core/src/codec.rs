//! Relational encoding and readout.
//!
//! The reasoning model never sees raw function values. A curve prefix
//! `y_1..y_N` becomes the strict lower triangle of the signed-difference
//! similarity matrix, as tokens `(i, j, y_i - y_j)` for `i < j <= N`, plus
//! query tokens `(i, N+1, 0)` for `i <= N+1`. The model predicts the next
//! similarity row; because `S(u, v) = u - v` is invertible in one argument,
//! each predicted entry plus its anchor value yields an estimate of
//! `y_{N+1}`, giving an ensemble whose median is the point estimate and
//! whose sample standard deviation is the uncertainty.

use crate::stats;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("relational encoding needs at least 2 context values, got {0}")]
    ContextTooShort(usize),
    #[error("readout needs a non-empty context")]
    EmptyContext,
    #[error("pred_row has length {got}, expected context length + 1 = {expected}")]
    RowLength { got: usize, expected: usize },
}

/// Signed-difference similarity `S(u, v) = u - v`. Antisymmetric, and
/// invertible in the second argument given the first, which is what makes
/// the ensemble readout exact.
#[inline]
pub fn similarity(u: f64, v: f64) -> f64 {
    u - v
}

/// Token set for the relational transformer. Tokens are `(x_i, x_j, s)`
/// triples in a fixed canonical order: observation tokens sweep the strict
/// lower triangle column-by-column (`j` outer, `i < j` inner), then the
/// `N + 1` query tokens follow in order of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelTokenSet {
    pub tokens: Vec<[f64; 3]>,
    pub query_indices: Vec<usize>,
    pub n_context: usize,
}

impl RelTokenSet {
    /// Expected token count for a context of length `n`.
    pub fn expected_len(n: usize) -> usize {
        n * (n - 1) / 2 + (n + 1)
    }

    /// The `(i, j)` matrix coordinates of every token, for gate construction.
    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.tokens.iter().map(|t| (t[0], t[1])).collect()
    }
}

/// Encode the first `N = ys.len()` observed values as a relational token
/// set. Ordering is fixed for reproducibility; the models are permutation
/// equivariant so it carries no meaning.
pub fn encode_input(ys: &[f64]) -> Result<RelTokenSet, CodecError> {
    let n = ys.len();
    if n < 2 {
        return Err(CodecError::ContextTooShort(n));
    }
    let mut tokens = Vec::with_capacity(RelTokenSet::expected_len(n));
    for j in 2..=n {
        for i in 1..j {
            tokens.push([i as f64, j as f64, similarity(ys[i - 1], ys[j - 1])]);
        }
    }
    let mut query_indices = Vec::with_capacity(n + 1);
    for i in 1..=n + 1 {
        query_indices.push(tokens.len());
        tokens.push([i as f64, (n + 1) as f64, 0.0]);
    }
    Ok(RelTokenSet {
        tokens,
        query_indices,
        n_context: n,
    })
}

/// Training target for the next similarity row: `target[i] = y_next - y_i`
/// for `i <= N` and 0 for the final self-similarity entry. The sign is the
/// one the readout inverts, so `target[i] + y_i = y_next` exactly.
pub fn target_row(ys: &[f64], y_next: f64) -> Vec<f64> {
    let mut row: Vec<f64> = ys.iter().map(|&y| similarity(y_next, y)).collect();
    row.push(0.0);
    row
}

/// Ensemble readout of a predicted similarity row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    pub pred_row: Vec<f64>,
    /// `pred_row[i] + ys[i]` for `i <= N`; the trailing self-similarity
    /// entry of the row is not part of the ensemble.
    pub estimates: Vec<f64>,
    /// Median of the ensemble (mean-of-middle for even sizes).
    pub point_estimate: f64,
    /// Sample standard deviation of the ensemble (divisor N-1; 0 when the
    /// ensemble has a single member).
    pub uncertainty: f64,
}

pub fn readout(pred_row: &[f64], ys: &[f64]) -> Result<PredictionBundle, CodecError> {
    let n = ys.len();
    if n == 0 {
        return Err(CodecError::EmptyContext);
    }
    if pred_row.len() != n + 1 {
        return Err(CodecError::RowLength {
            got: pred_row.len(),
            expected: n + 1,
        });
    }
    let estimates: Vec<f64> = pred_row[..n]
        .iter()
        .zip(ys)
        .map(|(&z, &y)| z + y)
        .collect();
    let point_estimate = stats::median(&estimates);
    let uncertainty = stats::sample_std(&estimates);
    Ok(PredictionBundle {
        pred_row: pred_row.to_vec(),
        estimates,
        point_estimate,
        uncertainty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_is_signed_difference() {
        assert_eq!(similarity(3.0, 1.5), 1.5);
        assert_eq!(similarity(2.0, 2.0), 0.0);
        for (u, v) in [(0.3, -0.7), (1e6, 2.0), (-4.5, -4.4)] {
            assert_eq!(similarity(u, v), -similarity(v, u));
        }
    }

    #[test]
    fn encode_enumeration_matches_definition() {
        let ts = encode_input(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(ts.tokens.len(), 7);
        assert_eq!(ts.n_context, 3);
        // observation tokens: (1,2,-1), (1,3,-3), (2,3,-2)
        assert_eq!(&ts.tokens[0], &[1.0, 2.0, -1.0]);
        assert_eq!(&ts.tokens[1], &[1.0, 3.0, -3.0]);
        assert_eq!(&ts.tokens[2], &[2.0, 3.0, -2.0]);
        // query tokens: (1,4,0)..(4,4,0)
        for (k, &qi) in ts.query_indices.iter().enumerate() {
            assert_eq!(ts.tokens[qi], [(k + 1) as f64, 4.0, 0.0]);
        }
        assert_eq!(ts.query_indices.len(), 4);
    }

    #[test]
    fn encode_counts() {
        let ys: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ts = encode_input(&ys).unwrap();
        assert_eq!(ts.tokens.len(), 211); // 190 observations + 21 queries
        assert_eq!(RelTokenSet::expected_len(20), 211);
    }

    #[test]
    fn encode_covers_lower_triangle_once() {
        let ys: Vec<f64> = (1..=7).map(|i| (i * i) as f64).collect();
        let ts = encode_input(&ys).unwrap();
        let n = ys.len();
        let mut seen = std::collections::HashSet::new();
        for t in &ts.tokens[..n * (n - 1) / 2] {
            let (i, j) = (t[0] as usize, t[1] as usize);
            assert!(i < j && j <= n);
            assert!(seen.insert((i, j)), "duplicate ({i},{j})");
            assert_eq!(t[2], ys[i - 1] - ys[j - 1]);
        }
        assert_eq!(seen.len(), n * (n - 1) / 2);
    }

    #[test]
    fn constant_context_gives_zero_similarities() {
        let ts = encode_input(&[0.7; 6]).unwrap();
        for (k, t) in ts.tokens.iter().enumerate() {
            if !ts.query_indices.contains(&k) {
                assert_eq!(t[2], 0.0);
            }
        }
    }

    #[test]
    fn encode_rejects_short_context() {
        assert!(encode_input(&[1.0]).is_err());
        assert!(encode_input(&[]).is_err());
    }

    #[test]
    fn target_row_formula() {
        assert_eq!(target_row(&[1.0, 2.0], 4.0), vec![3.0, 2.0, 0.0]);
        assert_eq!(target_row(&[5.0, 5.0], 5.0), vec![0.0, 0.0, 0.0]);
        let ys = [0.3, -1.2, 7.0];
        let t = target_row(&ys, 2.5);
        for (i, &y) in ys.iter().enumerate() {
            assert_eq!(t[i] + y, 2.5);
        }
    }

    #[test]
    fn readout_exact_prediction_case() {
        let b = readout(&[2.0, 2.0, 2.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(b.estimates, vec![3.0, 3.0, 3.0]);
        assert_eq!(b.point_estimate, 3.0);
        assert_eq!(b.uncertainty, 0.0);
    }

    #[test]
    fn readout_hand_computation() {
        let b = readout(&[1.0, 0.5, 0.2, 0.0], &[2.0, 2.5, 2.9]).unwrap();
        let expect = [3.0, 3.0, 3.1];
        for (e, x) in b.estimates.iter().zip(expect) {
            assert!((e - x).abs() < 1e-12);
        }
        assert!((b.point_estimate - 3.0).abs() < 1e-12);
        assert!((b.uncertainty - 0.05774).abs() < 1e-5);
    }

    #[test]
    fn readout_inverts_target_row() {
        let ys = [0.25, -0.5, 1.75, 3.0];
        let row = target_row(&ys, -0.875);
        let b = readout(&row, &ys).unwrap();
        assert_eq!(b.point_estimate, -0.875);
        assert_eq!(b.uncertainty, 0.0);
    }

    #[test]
    fn readout_rejects_bad_shapes() {
        assert!(readout(&[1.0], &[]).is_err());
        assert!(readout(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn translation_equivariance_of_codec() {
        let ys = [0.1, -0.4, 2.2, 0.9];
        let shifted: Vec<f64> = ys.iter().map(|y| y + 3.25).collect();
        let a = encode_input(&ys).unwrap();
        let b = encode_input(&shifted).unwrap();
        for (ta, tb) in a.tokens.iter().zip(&b.tokens) {
            assert_eq!(ta[0], tb[0]);
            assert_eq!(ta[1], tb[1]);
            assert!((ta[2] - tb[2]).abs() < 1e-12);
        }
        let ra = target_row(&ys, 1.5);
        let rb = target_row(&shifted, 1.5 + 3.25);
        for (x, y) in ra.iter().zip(&rb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn median_is_permutation_invariant_in_ensemble() {
        let ys = [1.0, 2.0, 3.0, 4.0];
        let row = [0.4, -0.3, 0.8, 0.1, 0.0];
        let b = readout(&row, &ys).unwrap();
        let ys_p = [3.0, 1.0, 4.0, 2.0];
        let row_p = [0.8, 0.4, 0.1, -0.3, 0.0];
        let bp = readout(&row_p, &ys_p).unwrap();
        assert_eq!(b.point_estimate, bp.point_estimate);
        assert!((b.uncertainty - bp.uncertainty).abs() < 1e-15);
    }
}
