//! Least-squares fits of the photophysical models.

pub mod lm;
pub mod models;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlator::{CorrelationHistogram, LifetimeHistogram};
use crate::error::{invalid, Error, Result};
use crate::K_B_EV;
pub use lm::{lm_fit, FnModel, LmOptions, LmOutcome, Model};
pub use models::{ExpDecay, G2ThreeLevel, G2TwoLevel, Lineshape, PeakOnLine, Quenching};

pub const FLAG_E_UNCONSTRAINED: &str = "E unconstrained";
pub const FLAG_TAU_UNBOUNDED: &str = "tau unbounded";
pub const FLAG_TWO_LEVEL: &str = "two-level";

/// Minimum χ² improvement for the bunching term to be kept (two extra
/// parameters, p ≈ 0.003 under the two-level hypothesis).
pub const BUNCHING_DELTA_CHI2: f64 = 11.8;

/// Named parameters with their covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FitResultDoc", try_from = "FitResultDoc")]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<String>,
    pub diagnostic: Option<String>,
}

impl FitResult {
    fn from_outcome(model: &str, names: &[&str], out: LmOutcome) -> Self {
        FitResult {
            model: model.to_string(),
            names: names.iter().map(|s| s.to_string()).collect(),
            residual_norm: out.residual_norm(),
            params: out.params,
            covariance: out.covariance,
            converged: out.converged,
            iterations: out.iterations,
            flags: Vec::new(),
            diagnostic: out.diagnostic,
        }
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    /// 1σ uncertainty from the covariance diagonal.
    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    fn flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_string());
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamDoc {
    name: String,
    value: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitResultDoc {
    model: String,
    converged: bool,
    iterations: usize,
    residual_norm: Option<f64>,
    parameters: Vec<ParamDoc>,
    covariance: Vec<Vec<Option<f64>>>,
    #[serde(default)]
    flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<FitResult> for FitResultDoc {
    fn from(f: FitResult) -> Self {
        let k = f.params.len();
        FitResultDoc {
            parameters: (0..k)
                .map(|i| ParamDoc {
                    name: f.names[i].clone(),
                    value: finite(f.params[i]),
                    sigma: finite(f.covariance[(i, i)].max(0.0).sqrt()),
                })
                .collect(),
            covariance: (0..k).map(|i| (0..k).map(|j| finite(f.covariance[(i, j)])).collect()).collect(),
            model: f.model,
            converged: f.converged,
            iterations: f.iterations,
            residual_norm: finite(f.residual_norm),
            flags: f.flags,
            diagnostic: f.diagnostic,
        }
    }
}

impl TryFrom<FitResultDoc> for FitResult {
    type Error = Error;

    fn try_from(d: FitResultDoc) -> Result<Self> {
        let k = d.parameters.len();
        if d.covariance.len() != k || d.covariance.iter().any(|r| r.len() != k) {
            return Err(Error::Format("covariance shape does not match parameters".into()));
        }
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        Ok(FitResult {
            model: d.model,
            names: d.parameters.iter().map(|p| p.name.clone()).collect(),
            params: d.parameters.iter().map(|p| nan(p.value)).collect(),
            covariance: DMatrix::from_fn(k, k, |i, j| nan(d.covariance[i][j])),
            residual_norm: nan(d.residual_norm),
            converged: d.converged,
            iterations: d.iterations,
            flags: d.flags,
            diagnostic: d.diagnostic,
        })
    }
}

// ---------------------------------------------------------------- g²

/// Result of [`fit_g2`]: the selected model and its zero-delay verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub fit: FitResult,
    /// True when the bunching term was kept.
    pub three_level: bool,
    /// `model(0) < 0.5`.
    pub single_photon: bool,
}

impl G2Fit {
    /// Parameters in three-level order `[g2_0, tau1_ps, tau2_ps, a]`; a
    /// two-level fit has `a = 0` and `tau2 = NaN`.
    pub fn params(&self) -> [f64; 4] {
        let p = &self.fit.params;
        if self.three_level {
            [p[0], p[1], p[2], p[3]]
        } else {
            [p[0], p[1], f64::NAN, 0.0]
        }
    }

    pub fn g2_0(&self) -> f64 {
        self.fit.params[0]
    }

    pub fn g2_0_sigma(&self) -> f64 {
        self.fit.sigma("g2_0").unwrap_or(f64::NAN)
    }

    pub fn tau1_ps(&self) -> f64 {
        self.fit.params[1]
    }

    pub fn eval(&self, tau_ps: f64) -> f64 {
        let p = &self.fit.params;
        if self.three_level {
            G2ThreeLevel::value(tau_ps, p)
        } else {
            G2TwoLevel.eval(tau_ps, p)
        }
    }
}

fn g2_data(h: &CorrelationHistogram) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let g = h
        .normalized
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("g² fit needs a normalised histogram".into()))?;
    if g.len() != h.bins.len() || g.len() < 8 {
        return invalid("histogram too short for a g² fit");
    }
    let x: Vec<f64> = (0..g.len()).map(|i| h.tau_center_ps(i)).collect();
    // Poisson σ on counts, carried through the normalisation factor
    let sigma: Vec<f64> = h
        .bins
        .iter()
        .zip(g)
        .map(|(&c, &gv)| {
            let scale = if c > 0 { gv / c as f64 } else { h.g2_scale() };
            (c.max(1) as f64).sqrt() * scale
        })
        .collect();
    if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return invalid("cannot derive weights: histogram has no channel counts");
    }
    Ok((x, g.clone(), sigma))
}

fn two_level_init(x: &[f64], y: &[f64]) -> [f64; 2] {
    let n = x.len();
    let mid = n / 2;
    let g0 = (0.5 * (y[mid - 1] + y[mid])).clamp(0.0, 0.99);
    let target = g0 + (1.0 - g0) * (1.0 - (-1.0f64).exp());
    let span = x[n - 1];
    let tau1 = (mid..n).find(|&i| y[i] >= target).map(|i| x[i]).unwrap_or(span / 10.0).max(x[mid]);
    [g0, tau1]
}

/// Fits the antibunching curve, keeping the bunching term only when it is
/// positive and improves χ² by at least [`BUNCHING_DELTA_CHI2`].
pub fn fit_g2(h: &CorrelationHistogram) -> Result<G2Fit> {
    let (x, y, sigma) = g2_data(h)?;
    let opts = LmOptions::default();
    let init2 = two_level_init(&x, &y);
    let two = lm_fit(&G2TwoLevel, &x, &y, Some(&sigma), &init2, &opts)?;

    let span = x[x.len() - 1];
    let t1 = if two.params[1].is_finite() && two.params[1] > 0.0 { two.params[1] } else { init2[1] };
    let excess: Vec<f64> = x.iter().zip(&y).filter(|(t, _)| **t >= 3.0 * t1).map(|(_, g)| g - 1.0).collect();
    let a0 = if excess.is_empty() { 0.05 } else { (excess.iter().sum::<f64>() / excess.len() as f64).max(0.05) };
    let init3 = [two.params[0], t1, (10.0 * t1).min(span / 2.0), a0];
    let three = lm_fit(&G2ThreeLevel, &x, &y, Some(&sigma), &init3, &opts).ok();

    let keep = three.as_ref().is_some_and(|t| {
        t.converged && t.params[3] > 0.0 && t.params[2] > 0.0 && t.params[1] > 0.0 && two.chi2 - t.chi2 >= BUNCHING_DELTA_CHI2
    });
    let (fit, three_level) = match three {
        Some(t) if keep => (FitResult::from_outcome("g2_three_level", &["g2_0", "tau1_ps", "tau2_ps", "a"], t), true),
        _ => {
            let mut f = FitResult::from_outcome("g2_two_level", &["g2_0", "tau1_ps"], two);
            f.flag(FLAG_TWO_LEVEL);
            (f, false)
        }
    };
    let single_photon = fit.params[0] < 0.5;
    Ok(G2Fit { fit, three_level, single_photon })
}

// ---------------------------------------------------------------- background

/// Signal fraction `S / (S + B)`.
pub fn rho_from_sb(s: f64, b: f64) -> Result<f64> {
    if !(s >= 0.0 && b >= 0.0) || !s.is_finite() || !b.is_finite() {
        return invalid(format!("signal and background rates must be non-negative (S={s}, B={b})"));
    }
    if s + b == 0.0 {
        return invalid("S + B = 0: no light");
    }
    Ok(s / (s + b))
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        invalid(format!("rho must lie in (0, 1], got {rho}"))
    }
}

/// `(g² − (1 − ρ²)) / ρ²`.
pub fn correct_background(g2: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let r2 = rho * rho;
    Ok((g2 - (1.0 - r2)) / r2)
}

/// `ρ²·g² + 1 − ρ²`: the raw curve an emitter with `g2` shows under
/// uncorrelated background.
pub fn mix_background(g2: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let r2 = rho * rho;
    Ok(r2 * g2 + 1.0 - r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedCurve {
    pub rho: f64,
    pub tau_ps: Vec<f64>,
    pub g2: Vec<f64>,
}

pub fn correct_background_curve(tau_ps: &[f64], g2: &[f64], rho: f64) -> Result<CorrectedCurve> {
    if tau_ps.len() != g2.len() {
        return invalid("tau and g2 lengths differ");
    }
    let g2 = g2.iter().map(|&g| correct_background(g, rho)).collect::<Result<_>>()?;
    Ok(CorrectedCurve { rho, tau_ps: tau_ps.to_vec(), g2 })
}

/// Corrects a normalised histogram at its bin centres.
pub fn correct_histogram(h: &CorrelationHistogram, rho: f64) -> Result<CorrectedCurve> {
    let g = h.normalized.as_ref().ok_or_else(|| Error::InvalidInput("histogram is not normalised".into()))?;
    let tau: Vec<f64> = (0..g.len()).map(|i| h.tau_center_ps(i)).collect();
    correct_background_curve(&tau, g, rho)
}

// ---------------------------------------------------------------- lifetime

/// Tail fit of `A·exp(−(t − t0)/τ) + C` over bins whose centre is at or after
/// `fit_start_ps`; `t0` is the first fitted bin centre, so `amplitude` is the
/// decaying part there. Names: `tau_ps`, `amplitude`, `offset`.
pub fn fit_lifetime(h: &LifetimeHistogram, fit_start_ps: f64) -> Result<FitResult> {
    let bw = h.bin_width_ps as f64;
    let idx: Vec<usize> =
        (0..h.bins.len()).filter(|&i| h.delay_left_ps(i) as f64 + 0.5 * bw >= fit_start_ps).collect();
    if idx.len() < 10 {
        return invalid(format!("{} bins after fit start; at least 10 needed", idx.len()));
    }
    let t0 = h.delay_left_ps(idx[0]) as f64 + 0.5 * bw;
    let x: Vec<f64> = idx.iter().map(|&i| h.delay_left_ps(i) as f64 + 0.5 * bw - t0).collect();
    let y: Vec<f64> = idx.iter().map(|&i| h.bins[i] as f64).collect();
    let sigma: Vec<f64> = y.iter().map(|&c| c.max(1.0).sqrt()).collect();

    let n = y.len();
    let tail = (n / 10).max(1);
    let c0 = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let head = y[..3.min(n)].iter().sum::<f64>() / 3.min(n) as f64;
    let a0 = (head - c0).max(1.0);
    let span = x[n - 1];
    let tau0 = (0..n)
        .find(|&i| y[i] - c0 < a0 / std::f64::consts::E)
        .map(|i| x[i])
        .filter(|&t| t > 0.0)
        .unwrap_or(span / 2.0)
        .max(bw);

    let out = lm_fit(&ExpDecay, &x, &y, Some(&sigma), &[tau0, a0, c0], &LmOptions::default())?;
    let mut fit = FitResult::from_outcome("lifetime_mono_exp", &["tau_ps", "amplitude", "offset"], out);
    let (tau, amp) = (fit.params[0], fit.params[1]);
    let tau_sigma = fit.covariance[(0, 0)].sqrt();
    if !fit.converged || !(tau > 0.0) || !(amp > 0.0) || tau > 10.0 * span || !(tau_sigma < tau) {
        fit.flag(FLAG_TAU_UNBOUNDED);
        fit.converged = false;
    }
    Ok(fit)
}

// ---------------------------------------------------------------- quenching

fn check_series(series: &[(f64, f64)]) -> Result<()> {
    if series.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return invalid("series contains non-finite values");
    }
    Ok(())
}

/// Fits `I0 / (1 + A·exp(−E/(k_B T)))` to `(T [K], I)` pairs. Names: `I0`,
/// `A`, `E_eV`.
///
/// Noise is taken as proportional to intensity, so each point is weighted by
/// `1/I`; the covariance is scaled by the reduced χ². `A` is fitted as
/// `ln A` and its σ obtained by the delta method.
pub fn fit_quenching(series: &[(f64, f64)]) -> Result<FitResult> {
    check_series(series)?;
    if series.len() < 4 {
        return invalid(format!("{} points; quenching fit needs at least 4", series.len()));
    }
    if series.iter().any(|&(t, _)| t <= 0.0) {
        return invalid("temperatures must be positive");
    }
    if series.iter().any(|&(_, i)| i <= 0.0) {
        return invalid("intensities must be positive");
    }
    let t_min = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if t_max - t_min < 300.0 {
        return invalid(format!("temperature span {} K; at least 300 K needed", t_max - t_min));
    }
    let x: Vec<f64> = series.iter().map(|p| p.0).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let names = ["I0", "A", "E_eV"];

    let i_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let i_hot = series.iter().copied().fold((f64::NEG_INFINITY, 0.0), |m, p| if p.0 > m.0 { p } else { m }).1;
    let t_hot = t_max;
    let t_mid = 0.5 * (t_min + t_max);
    let e0 = K_B_EV * t_mid * (i_max / i_min).ln();
    let a0 = (i_max / i_hot - 1.0) * (e0 / (K_B_EV * t_hot)).exp();

    if !(a0 > 0.0) || !(e0 > 0.0) || (i_max - i_min) <= 1e-12 * i_max {
        return Ok(unquenched(&y, &names));
    }

    let sigma = y.clone();
    let out = lm_fit(&Quenching, &x, &y, Some(&sigma), &[i_max, a0.ln(), e0], &LmOptions::default())?;
    // relative weights carry no absolute scale; rescale by reduced χ²
    let dof = (x.len() - 3).max(1) as f64;
    let cov_ln = out.covariance.clone() * (out.chi2 / dof);
    let converged = out.converged;
    let singular = out.is_singular();
    let mut fit = FitResult::from_outcome("thermal_quenching", &names, out);
    let ln_a = fit.params[1];
    let a = ln_a.exp();
    fit.params[1] = a;
    let jac = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, a, 1.0]));
    fit.covariance = &jac * cov_ln * &jac;
    let e = fit.params[2];
    let sigma_e = fit.covariance[(2, 2)].sqrt();
    if singular || !(sigma_e <= e.abs()) {
        fit.flag(FLAG_E_UNCONSTRAINED);
        if singular && !converged {
            fit.converged = true;
            fit.diagnostic = Some("no quenching resolved; E is not identifiable".into());
        }
    }
    Ok(fit)
}

fn unquenched(y: &[f64], names: &[&str]) -> FitResult {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut cov = DMatrix::from_element(3, 3, f64::NAN);
    cov[(0, 0)] = var / n;
    FitResult {
        model: "thermal_quenching".into(),
        names: names.iter().map(|s| s.to_string()).collect(),
        params: vec![mean, 0.0, f64::NAN],
        covariance: cov,
        residual_norm: (var * (n - 1.0)).sqrt(),
        converged: true,
        iterations: 0,
        flags: vec![FLAG_E_UNCONSTRAINED.into()],
        diagnostic: Some("no quenching: intensity does not fall with temperature".into()),
    }
}

// ---------------------------------------------------------------- linear

/// Ordinary least squares `y = slope·x + intercept`. Slope is in y units per
/// x unit.
pub fn fit_linear(series: &[(f64, f64)]) -> Result<FitResult> {
    check_series(series)?;
    if series.len() < 2 {
        return invalid("linear fit needs at least 2 points");
    }
    let n = series.len() as f64;
    let mx = series.iter().map(|p| p.0).sum::<f64>() / n;
    let my = series.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = series.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-300 || sxx <= 1e-24 * mx * mx * n {
        return invalid("all x values are equal");
    }
    let sxy: f64 = series.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = series.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let s2 = if series.len() > 2 { rss / (n - 2.0) } else { f64::NAN };
    let var_slope = s2 / sxx;
    let var_int = s2 * (1.0 / n + mx * mx / sxx);
    let cov_si = -mx * s2 / sxx;
    Ok(FitResult {
        model: "linear".into(),
        names: vec!["slope".into(), "intercept".into()],
        params: vec![slope, intercept],
        covariance: DMatrix::from_row_slice(2, 2, &[var_slope, cov_si, cov_si, var_int]),
        residual_norm: rss.sqrt(),
        converged: true,
        iterations: 0,
        flags: Vec::new(),
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests;
