//! Central finite-difference gradient checking.
//!
//! All checks run in f64: the step h=1e-5 used here drowns in f32 rounding
//! noise, so the engine is instantiated at double precision for testing and
//! at single precision for training.

/// Outcome of a finite-difference sweep over one parameter vector.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over all coordinates.
    pub max_rel_err: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub n_params: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compare the analytic gradient of `f` against central differences.
///
/// `f(theta, want_grad)` evaluates the scalar loss at `theta`; when
/// `want_grad` is true it must also return d loss / d theta. The closure is
/// called once with gradients and `2 * theta.len()` times without.
pub fn check_gradient<F>(theta: &[f64], h: f64, mut f: F) -> GradCheckReport
where
    F: FnMut(&[f64], bool) -> (f64, Option<Vec<f64>>),
{
    let (_, grad) = f(theta, true);
    let grad = grad.expect("closure must return gradients when asked");
    assert_eq!(grad.len(), theta.len(), "gradient length mismatch");

    let mut work = theta.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        n_params: theta.len(),
    };
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + h;
        let (lp, _) = f(&work, false);
        work[i] = orig - h;
        let (lm, _) = f(&work, false);
        work[i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let rel = rel_err(grad[i], numeric);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.analytic_at_worst = grad[i];
            report.numeric_at_worst = numeric;
        }
    }
    report
}

/// Relative error with an absolute floor so near-zero gradients compare
/// against finite-difference noise sensibly.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}
