//! Adaptive explicit integration of the population master equation
//! `dp_j/dt = Σ_i p_i k[i→j] − p_j Σ_l k[j→l]`.

use crate::error::{Error, Result};

const RTOL: f64 = 1e-9;
const ATOL: f64 = 1e-13;
const MAX_STEPS: usize = 20_000_000;

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct MasterEquation<'a> {
    n: usize,
    rates: &'a [f64],
    out: Vec<f64>,
    max_rate: f64,
}

impl<'a> MasterEquation<'a> {
    pub(crate) fn new(n: usize, rates: &'a [f64]) -> Self {
        let out: Vec<f64> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| rates[i * n + j]).sum())
            .collect();
        let max_rate = out.iter().cloned().fold(0.0, f64::max);
        Self { n, rates, out, max_rate }
    }

    fn derivative(&self, p: &[f64], dp: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let mut inflow = 0.0;
            for i in 0..n {
                if i != j {
                    inflow += p[i] * self.rates[i * n + j];
                }
            }
            dp[j] = inflow - p[j] * self.out[j];
        }
    }

    /// Propagates `p` forward by `dt` seconds in place. `h` carries the step
    /// size between calls so consecutive delays reuse the adapted step.
    pub(crate) fn propagate(&self, p: &mut [f64], dt: f64, h: &mut f64) -> Result<()> {
        if dt <= 0.0 || self.max_rate == 0.0 {
            return Ok(());
        }
        let n = self.n;
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut t = 0.0;
        let mut steps = 0usize;
        if *h <= 0.0 {
            *h = 0.01 / self.max_rate;
        }
        self.derivative(p, &mut k[0]);
        while dt - t > dt * 1e-14 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Propagation(format!(
                    "step limit {MAX_STEPS} exceeded at t = {t:.3e} s of {dt:.3e} s \
                     (max rate {:.3e} s^-1, step {:.3e} s)",
                    self.max_rate, *h
                )));
            }
            let step = h.min(dt - t);
            let tableau: [&[f64]; 5] = [
                &[A21],
                &[A31, A32],
                &[A41, A42, A43],
                &[A51, A52, A53, A54],
                &[A61, A62, A63, A64, A65],
            ];
            for (s, row) in tableau.iter().enumerate() {
                for i in 0..n {
                    let mut acc = p[i];
                    for (m, c) in row.iter().enumerate() {
                        acc += step * c * k[m][i];
                    }
                    tmp[i] = acc;
                }
                let (_, rest) = k.split_at_mut(s + 1);
                self.derivative(&tmp, &mut rest[0]);
            }
            for i in 0..n {
                next[i] = p[i]
                    + step
                        * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
            }
            {
                let (_, rest) = k.split_at_mut(6);
                self.derivative(&next, &mut rest[0]);
            }
            let mut err = 0.0f64;
            for i in 0..n {
                let e = step
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let scale = ATOL + RTOL * p[i].abs().max(next[i].abs());
                err = err.max((e / scale).abs());
            }
            if !err.is_finite() {
                return Err(Error::Propagation(format!(
                    "non-finite populations at t = {t:.3e} s"
                )));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t += step;
                p.copy_from_slice(&next);
                // first-same-as-last
                k.swap(0, 6);
                // a step clipped to land on `dt` says nothing about the usable size
                if step < *h {
                    continue;
                }
            }
            *h = step * factor;
        }
        Ok(())
    }
}
