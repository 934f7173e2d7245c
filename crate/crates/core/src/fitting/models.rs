//! Curves with analytic gradients.

use super::lm::Model;
use crate::K_B_EV;

/// `1 − (1 − g2_0 + a)·e^{−|τ|/τ1} + a·e^{−|τ|/τ2}`; params `[g2_0, τ1, τ2, a]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct G2ThreeLevel;

impl G2ThreeLevel {
    pub fn value(tau: f64, p: &[f64]) -> f64 {
        let (g0, t1, t2, a) = (p[0], p[1], p[2], p[3]);
        let x = tau.abs();
        1.0 - (1.0 - g0 + a) * (-x / t1).exp() + a * (-x / t2).exp()
    }
}

impl Model for G2ThreeLevel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        Self::value(x, p)
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
        let (g0, t1, t2, a) = (p[0], p[1], p[2], p[3]);
        let x = x.abs();
        let e1 = (-x / t1).exp();
        let e2 = (-x / t2).exp();
        out[0] = e1;
        out[1] = -(1.0 - g0 + a) * e1 * x / (t1 * t1);
        out[2] = a * e2 * x / (t2 * t2);
        out[3] = e2 - e1;
        true
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[1] > 0.0 && p[2] > 0.0
    }
}

/// `1 − (1 − g2_0)·e^{−|τ|/τ1}`; params `[g2_0, τ1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct G2TwoLevel;

impl Model for G2TwoLevel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        1.0 - (1.0 - p[0]) * (-x.abs() / p[1]).exp()
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
        let x = x.abs();
        let e = (-x / p[1]).exp();
        out[0] = e;
        out[1] = -(1.0 - p[0]) * e * x / (p[1] * p[1]);
        true
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }
}

/// `A·e^{−t/τ} + C`; params `[τ, A, C]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpDecay;

impl Model for ExpDecay {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[1] * (-x / p[0]).exp() + p[2]
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
        let e = (-x / p[0]).exp();
        out[0] = p[1] * e * x / (p[0] * p[0]);
        out[1] = e;
        out[2] = 1.0;
        true
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[0] > 0.0
    }
}

/// Thermal quenching `I0 / (1 + e^{lnA − E/(k_B T)})`; params `[I0, ln A, E]`,
/// x is temperature in kelvin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quenching;

impl Model for Quenching {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] / (1.0 + (p[1] - p[2] / (K_B_EV * x)).exp())
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
        let q = (p[1] - p[2] / (K_B_EV * x)).exp();
        let d = 1.0 + q;
        out[0] = 1.0 / d;
        out[1] = -p[0] * q / (d * d);
        out[2] = p[0] * q / (d * d * K_B_EV * x);
        true
    }
}

/// Peak profile used by spectral fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lineshape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl Lineshape {
    pub fn name(self) -> &'static str {
        match self {
            Lineshape::Lorentzian => "lorentzian",
            Lineshape::Gaussian => "gaussian",
        }
    }

    /// Peak of unit height centred at zero.
    pub fn profile(self, u: f64, fwhm: f64) -> f64 {
        match self {
            Lineshape::Lorentzian => {
                let g2 = 0.25 * fwhm * fwhm;
                g2 / (u * u + g2)
            }
            Lineshape::Gaussian => (-4.0 * std::f64::consts::LN_2 * u * u / (fwhm * fwhm)).exp(),
        }
    }

    /// Area under a peak of height `amp`.
    pub fn area(self, amp: f64, fwhm: f64) -> f64 {
        match self {
            Lineshape::Lorentzian => std::f64::consts::FRAC_PI_2 * amp * fwhm,
            Lineshape::Gaussian => amp * fwhm * (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt(),
        }
    }
}

/// Peak on a linear baseline; params `[center, fwhm, amp, b0, b1]` with the
/// baseline `b0 + b1·(x − x0)`.
#[derive(Debug, Clone, Copy)]
pub struct PeakOnLine {
    pub shape: Lineshape,
    pub x0: f64,
}

impl Model for PeakOnLine {
    fn n_params(&self) -> usize {
        5
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[2] * self.shape.profile(x - p[0], p[1]) + p[3] + p[4] * (x - self.x0)
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) -> bool {
        let (c, w, amp) = (p[0], p[1], p[2]);
        let u = x - c;
        match self.shape {
            Lineshape::Lorentzian => {
                let g = 0.5 * w;
                let den = u * u + g * g;
                let l = g * g / den;
                out[0] = amp * g * g * 2.0 * u / (den * den);
                out[1] = 0.5 * amp * 2.0 * g * u * u / (den * den);
                out[2] = l;
            }
            Lineshape::Gaussian => {
                let k = 4.0 * std::f64::consts::LN_2;
                let gs = (-k * u * u / (w * w)).exp();
                out[0] = amp * gs * 2.0 * k * u / (w * w);
                out[1] = amp * gs * 2.0 * k * u * u / (w * w * w);
                out[2] = gs;
            }
        }
        out[3] = 1.0;
        out[4] = x - self.x0;
        true
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }
}
