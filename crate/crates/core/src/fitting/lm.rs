//! Damped least squares (Levenberg–Marquardt).
//!
//! Minimises `Σ ((y − f(x; θ)) / σ)²`. The damping term is scaled by the
//! diagonal of `JᵀJ` and starts at `λ = 1e-3`; it is multiplied by 10 after a
//! rejected step and divided by 10 after an accepted one. A fit converges
//! when both the scaled relative step and the relative cost decrease fall
//! below `tol`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// A curve `f(x; θ)` with an optional analytic gradient.
pub trait Model {
    fn n_params(&self) -> usize;

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// Writes `∂f/∂θ` at `x` into `out`. Returns false when no analytic form
    /// exists, in which case central differences are used.
    fn gradient(&self, _x: f64, _p: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Trial steps outside the admissible region are rejected like uphill ones.
    fn feasible(&self, _p: &[f64]) -> bool {
        true
    }
}

/// Wraps a closure as a [`Model`] without an analytic gradient.
pub struct FnModel<F> {
    n_params: usize,
    f: F,
}

impl<F: Fn(f64, &[f64]) -> f64> FnModel<F> {
    pub fn new(n_params: usize, f: F) -> Self {
        FnModel { n_params, f }
    }
}

impl<F: Fn(f64, &[f64]) -> f64> Model for FnModel<F> {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        (self.f)(x, p)
    }
}

/// Central-difference gradient.
pub fn numeric_gradient<M: Model + ?Sized>(model: &M, x: f64, p: &[f64], out: &mut [f64]) {
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 6e-6 * p[k].abs().max(1e-6);
        q[k] = p[k] + h;
        let up = model.eval(x, &q);
        q[k] = p[k] - h;
        let down = model.eval(x, &q);
        q[k] = p[k];
        out[k] = (up - down) / (2.0 * h);
    }
}

fn gradient_of<M: Model + ?Sized>(model: &M, x: f64, p: &[f64], out: &mut [f64]) {
    if !model.gradient(x, p, out) {
        numeric_gradient(model, x, p, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { tol: 1e-8, max_iterations: 200, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Parameter covariance; NaN-filled when the Jacobian is singular.
    pub covariance: DMatrix<f64>,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostic: Option<String>,
    pub n_points: usize,
}

impl LmOutcome {
    pub fn residual_norm(&self) -> f64 {
        self.chi2.sqrt()
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.covariance[(k, k)].sqrt()
    }

    pub fn is_singular(&self) -> bool {
        self.covariance.iter().any(|v| v.is_nan())
    }
}

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl<M: Model + ?Sized> Problem<'_, M> {
    fn residuals(&self, p: &[f64]) -> Option<(DVector<f64>, f64)> {
        if !self.model.feasible(p) {
            return None;
        }
        let r = DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(&self.w).map(|((&x, &y), &w)| w * (y - self.model.eval(x, p))),
        );
        let cost = r.norm_squared();
        cost.is_finite().then_some((r, cost))
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let k = p.len();
        let mut j = DMatrix::zeros(self.x.len(), k);
        let mut g = vec![0.0; k];
        for (i, (&x, &w)) in self.x.iter().zip(&self.w).enumerate() {
            gradient_of(self.model, x, p, &mut g);
            for c in 0..k {
                j[(i, c)] = w * g[c];
            }
        }
        j
    }
}

/// Fits `model` to `(x, y)` with optional per-point standard deviations.
///
/// With `sigma` the covariance is absolute; without it, it is scaled by the
/// reduced χ².
pub fn lm_fit<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let k = model.n_params();
    if init.len() != k {
        return invalid(format!("{} initial values for {k} parameters", init.len()));
    }
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
        return invalid("x, y and sigma lengths differ");
    }
    if x.len() < k + 1 {
        return invalid(format!("{} points cannot constrain {k} parameters", x.len()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return invalid("initial parameters must be finite");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return invalid("data contain non-finite values");
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return invalid("sigma must be positive and finite");
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; x.len()],
    };
    let prob = Problem { model, x, y, w };

    let mut p = init.to_vec();
    if !model.feasible(init) {
        return invalid("initial parameters outside the model's admissible region");
    }
    let (mut r, mut cost) = prob
        .residuals(&p)
        .ok_or_else(|| Error::Numerical("model evaluates to NaN or infinity at the initial parameters".into()))?;
    let mut lambda = opts.initial_lambda;
    let mut converged = cost == 0.0;
    let mut diagnostic = None;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let j = prob.jacobian(&p);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("model gradient is not finite".into()));
        }
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let max_diag = jtj.diagonal().max();
        if max_diag == 0.0 {
            diagnostic = Some("singular Jacobian: no parameter affects the model".into());
            break;
        }
        let scale: Vec<f64> = jtj.diagonal().iter().map(|&d| d.max(1e-12 * max_diag)).collect();
        let p_norm = p.iter().zip(&scale).map(|(v, d)| v * v * d).sum::<f64>().sqrt();

        let mut accepted = false;
        loop {
            let mut a = jtj.clone();
            for c in 0..k {
                a[(c, c)] += lambda * scale[c];
            }
            let step = a.cholesky().map(|ch| ch.solve(&g));
            if let Some(delta) = step {
                let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(v, d)| v + d).collect();
                let step_norm = delta.iter().zip(&scale).map(|(v, d)| v * v * d).sum::<f64>().sqrt();
                let rel_step = step_norm / (p_norm + opts.tol);
                match prob.residuals(&trial) {
                    Some((r_new, cost_new)) if cost_new <= cost => {
                        let rel_cost = if cost > 0.0 { (cost - cost_new) / cost } else { 0.0 };
                        p = trial;
                        r = r_new;
                        cost = cost_new;
                        lambda = (lambda / 10.0).max(1e-12);
                        accepted = true;
                        if (rel_step < opts.tol && rel_cost < opts.tol) || cost == 0.0 {
                            converged = true;
                        }
                        break;
                    }
                    _ => {
                        if rel_step < opts.tol {
                            // No downhill step even at negligible size: stationary point.
                            converged = true;
                            break;
                        }
                    }
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted && !converged {
            diagnostic = Some("no downhill step found".into());
            break;
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("iteration limit {} reached", opts.max_iterations));
    }

    let j = prob.jacobian(&p);
    let covariance = match covariance_from_jacobian(&j) {
        Some(mut c) => {
            if sigma.is_none() {
                let dof = (x.len() - k).max(1) as f64;
                c *= cost / dof;
            }
            c
        }
        None => {
            if converged {
                diagnostic = Some("singular Jacobian at the solution".into());
            }
            converged = false;
            DMatrix::from_element(k, k, f64::NAN)
        }
    };

    Ok(LmOutcome { params: p, covariance, chi2: cost, converged, iterations, diagnostic, n_points: x.len() })
}

/// `(JᵀJ)⁻¹` via SVD; `None` when `J` is numerically rank deficient.
pub(crate) fn covariance_from_jacobian(j: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = j.ncols();
    let svd = j.clone().svd(false, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    if !(s_max > 0.0) || s.iter().any(|&v| v <= s_max * 1e-10) {
        return None;
    }
    let v_t = svd.v_t?;
    let mut cov = DMatrix::zeros(k, k);
    for (m, &sv) in s.iter().enumerate() {
        let row = v_t.row(m);
        cov += row.transpose() * row / (sv * sv);
    }
    Some(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    struct Line;
    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[0] * x + p[1]
        }
    }

    struct Decay;
    impl Model for Decay {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[1] * (-x / p[0]).exp()
        }
        fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
            let e = (-x / p[0]).exp();
            out[0] = p[1] * e * x / (p[0] * p[0]);
            out[1] = e;
            true
        }
    }

    #[test]
    fn exact_linear_data() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.5 * x - 7.0).collect();
        let fit = lm_fit(&Line, &x, &y, None, &[0.0, 0.0], &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.residual_norm() < 1e-10);
        assert!((fit.params[0] - 2.5).abs() < 1e-10);
        assert!((fit.params[1] + 7.0).abs() < 1e-10);
    }

    #[test]
    fn start_at_truth() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * (-x / 1.3).exp()).collect();
        let fit = lm_fit(&Decay, &x, &y, None, &[1.3, 3.0], &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2, "{}", fit.iterations);
    }

    #[test]
    fn nan_at_start_is_an_error() {
        let m = FnModel::new(1, |x: f64, p: &[f64]| (x * p[0]).ln());
        let r = lm_fit(&m, &[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0], None, &[-1.0], &LmOptions::default());
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn too_few_points() {
        assert!(lm_fit(&Line, &[1.0, 2.0], &[1.0, 2.0], None, &[1.0, 1.0], &LmOptions::default()).is_err());
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // the second parameter never enters the model
        let m = FnModel::new(2, |x: f64, p: &[f64]| p[0] * x);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.1, 5.9, 8.0];
        let fit = lm_fit(&m, &x, &y, None, &[1.0, 5.0], &LmOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.unwrap().contains("singular"));
    }

    #[test]
    fn exponential_noise_coverage() {
        // 1% Gaussian noise, 100 seeds; each parameter should sit within 3σ
        // of the truth in at least 95% of fits.
        let truth = [2.0, 10.0];
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let mut covered = [0usize; 2];
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 1.0).unwrap();
            let clean: Vec<f64> = x.iter().map(|&x| Decay.eval(x, &truth)).collect();
            let sigma: Vec<f64> = clean.iter().map(|v| 0.01 * v).collect();
            let y: Vec<f64> = clean.iter().zip(&sigma).map(|(v, s)| v + s * n.sample(&mut rng)).collect();
            let fit = lm_fit(&Decay, &x, &y, Some(&sigma), &[1.0, 5.0], &LmOptions::default()).unwrap();
            assert!(fit.converged);
            for k in 0..2 {
                if (fit.params[k] - truth[k]).abs() <= 3.0 * fit.sigma(k) {
                    covered[k] += 1;
                }
            }
        }
        assert!(covered.iter().all(|&c| c >= 95), "{covered:?}");
    }
}
