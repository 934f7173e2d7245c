//! N-level rate-equation emitters.
//!
//! A [`LevelSystem`] holds transition rates `k[i→j]` in s⁻¹ and designates
//! one transition as radiative. Photon statistics follow from the population
//! master equation: g²(τ) is the source-state population at delay τ after a
//! detection has reset the emitter into the radiative target state, divided
//! by its steady-state value.
//!
//! The four-level template has states 1 (ground), 2 (emitting excited
//! state), 3 (intermediate) and 4 (shelf). The non-radiative return path is
//! 2 → 4 → 3 → 1, with 4 → 2 back-transfer; temperature enters only through
//! the Arrhenius-activated 2 → 4 rate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::master::MasterEquation;
use crate::K_B_EV;

/// An N-state emitter with one radiative transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevelSystemDoc", into = "LevelSystemDoc")]
pub struct LevelSystem {
    n_states: usize,
    rates: Vec<f64>,
    radiative: (usize, usize),
    labels: Option<Vec<String>>,
}

/// On-disk form: row-major rates and a 1-indexed radiative pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelSystemDoc {
    n_states: usize,
    rates: Vec<f64>,
    radiative: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<LevelSystemDoc> for LevelSystem {
    type Error = Error;

    fn try_from(doc: LevelSystemDoc) -> Result<Self> {
        let [src, dst] = doc.radiative;
        if src == 0 || dst == 0 {
            return invalid("radiative states are 1-indexed");
        }
        LevelSystem::new(doc.n_states, doc.rates, (src - 1, dst - 1), doc.labels)
    }
}

impl From<LevelSystem> for LevelSystemDoc {
    fn from(sys: LevelSystem) -> Self {
        LevelSystemDoc {
            n_states: sys.n_states,
            rates: sys.rates,
            radiative: [sys.radiative.0 + 1, sys.radiative.1 + 1],
            labels: sys.labels,
        }
    }
}

impl LevelSystem {
    /// Builds and validates a system. `rates` is row-major, `rates[i * n + j]`
    /// being the rate from state `i` to state `j`; `radiative` is 0-indexed.
    pub fn new(
        n_states: usize,
        mut rates: Vec<f64>,
        radiative: (usize, usize),
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = n_states;
        if n < 2 {
            return invalid(format!("need at least 2 states, got {n}"));
        }
        if rates.len() != n * n {
            return invalid(format!(
                "rate matrix has {} entries, expected {}",
                rates.len(),
                n * n
            ));
        }
        for i in 0..n {
            rates[i * n + i] = 0.0;
            for j in 0..n {
                let k = rates[i * n + j];
                if !k.is_finite() || k < 0.0 {
                    return invalid(format!("rate {}→{} = {k} is not a finite non-negative number", i + 1, j + 1));
                }
            }
        }
        let (src, dst) = radiative;
        if src >= n || dst >= n || src == dst {
            return invalid(format!("bad radiative transition {}→{}", src + 1, dst + 1));
        }
        if rates[src * n + dst] <= 0.0 {
            return invalid("radiative transition rate must be positive");
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return invalid(format!("{} labels for {n} states", l.len()));
            }
        }
        let sys = LevelSystem { n_states: n, rates, radiative, labels };
        sys.recurrent_class()?;
        Ok(sys)
    }

    /// Two-level emitter: pump 1→2, radiative decay 2→1.
    pub fn two_level(pump: f64, decay: f64) -> Result<Self> {
        LevelSystem::new(
            2,
            vec![0.0, pump, decay, 0.0],
            (1, 0),
            Some(vec!["ground".into(), "excited".into()]),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Rate from `from` to `to` (0-indexed).
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n_states + to]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// (source, target), 0-indexed.
    pub fn radiative(&self) -> (usize, usize) {
        self.radiative
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Copy with the rate `from → to` replaced.
    pub fn with_rate(&self, from: usize, to: usize, rate: f64) -> Result<Self> {
        let mut rates = self.rates.clone();
        if from >= self.n_states || to >= self.n_states {
            return invalid("state index out of range");
        }
        rates[from * self.n_states + to] = rate;
        LevelSystem::new(self.n_states, rates, self.radiative, self.labels.clone())
    }

    /// Total outgoing rate of each state.
    pub fn total_out(&self) -> Vec<f64> {
        let n = self.n_states;
        (0..n).map(|i| (0..n).map(|j| self.rates[i * n + j]).sum()).collect()
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// Rows of `K` with `(K p)_j = Σ_i k[i→j] p_i − p_j Σ_l k[j→l]`.
    pub fn balance_matrix(&self) -> DMatrix<f64> {
        let n = self.n_states;
        let out = self.total_out();
        DMatrix::from_fn(n, n, |j, i| {
            if i == j {
                -out[j]
            } else {
                self.rates[i * n + j]
            }
        })
    }

    /// States of the unique closed communicating class. Every other state is
    /// transient and empties in the steady state.
    fn recurrent_class(&self) -> Result<Vec<usize>> {
        let n = self.n_states;
        let mut reach = vec![false; n * n];
        for i in 0..n {
            reach[i * n + i] = true;
            for j in 0..n {
                if self.rates[i * n + j] > 0.0 {
                    reach[i * n + j] = true;
                }
            }
        }
        for m in 0..n {
            for i in 0..n {
                if reach[i * n + m] {
                    for j in 0..n {
                        if reach[m * n + j] {
                            reach[i * n + j] = true;
                        }
                    }
                }
            }
        }
        // A state is recurrent when every state it reaches can reach it back.
        let recurrent: Vec<bool> = (0..n)
            .map(|i| (0..n).all(|j| !reach[i * n + j] || reach[j * n + i]))
            .collect();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for i in (0..n).filter(|&i| recurrent[i]) {
            match classes.iter_mut().find(|c| reach[c[0] * n + i]) {
                Some(c) => c.push(i),
                None => classes.push(vec![i]),
            }
        }
        if let Some(c) = classes.iter().find(|c| c.len() == 1) {
            return Err(Error::AbsorbingState(format!(
                "state {} has no outgoing transitions",
                c[0] + 1
            )));
        }
        if classes.len() != 1 {
            return Err(Error::AbsorbingState(format!(
                "rate graph splits into {} closed classes; no unique steady state",
                classes.len()
            )));
        }
        let class = classes.pop().unwrap();
        let (src, dst) = self.radiative;
        if !class.contains(&src) || !class.contains(&dst) {
            return Err(Error::AbsorbingState(
                "radiative transition is not part of the recurrent cycle".into(),
            ));
        }
        Ok(class)
    }
}

/// Parameters of the four-level template (rates in s⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelParams {
    pub pump_rate: f64,
    pub k_rad: f64,
    pub k24: f64,
    pub k42: f64,
    pub k43: f64,
    pub k31: f64,
    /// Photon energy of the radiative transition; metadata only.
    #[serde(default, rename = "zpl_energy_eV", skip_serializing_if = "Option::is_none")]
    pub zpl_energy_ev: Option<f64>,
}

impl FourLevelParams {
    fn validate(&self) -> Result<()> {
        let named = [
            ("pump_rate", self.pump_rate),
            ("k_rad", self.k_rad),
            ("k24", self.k24),
            ("k42", self.k42),
            ("k43", self.k43),
            ("k31", self.k31),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if named.iter().all(|(_, v)| *v == 0.0) {
            return invalid("all rates are zero");
        }
        if self.pump_rate <= 0.0 {
            return invalid("pump_rate must be positive");
        }
        if self.k_rad <= 0.0 {
            return invalid("k_rad must be positive");
        }
        Ok(())
    }
}

/// Builds the 4-state system with transitions 1→2 (pump), 2→1 (radiative),
/// 2→4, 4→2, 4→3 and 3→1.
pub fn build_four_level(params: &FourLevelParams) -> Result<LevelSystem> {
    params.validate()?;
    if params.k24 > 0.0 && params.k31 == 0.0 {
        return Err(Error::AbsorbingState("k31 = 0 traps population in state 3".into()));
    }
    if params.k24 > 0.0 && params.k43 == 0.0 {
        return Err(Error::AbsorbingState(
            "k43 = 0 closes the non-radiative return path through state 3".into(),
        ));
    }
    let n = 4;
    let mut rates = vec![0.0; n * n];
    let mut set = |from: usize, to: usize, k: f64| rates[(from - 1) * n + (to - 1)] = k;
    set(1, 2, params.pump_rate);
    set(2, 1, params.k_rad);
    set(2, 4, params.k24);
    set(4, 2, params.k42);
    set(4, 3, params.k43);
    set(3, 1, params.k31);
    LevelSystem::new(
        n,
        rates,
        (1, 0),
        Some(vec!["ground".into(), "excited".into(), "intermediate".into(), "shelf".into()]),
    )
}

/// Steady-state populations: `p ≥ 0`, `Σp = 1`, `K·p = 0`.
pub fn steady_state(sys: &LevelSystem) -> Result<Vec<f64>> {
    let class = sys.recurrent_class()?;
    let n = sys.n_states;
    let m = class.len();
    let scale = sys.max_rate();
    // Balance equations restricted to the recurrent class, rows scaled by the
    // largest rate; the last row is replaced by the normalisation.
    let mut a = DMatrix::zeros(m, m);
    for (r, &j) in class.iter().enumerate() {
        for (c, &i) in class.iter().enumerate() {
            a[(r, c)] = if i == j {
                -(0..n).map(|l| sys.rate(j, l)).sum::<f64>() / scale
            } else {
                sys.rate(i, j) / scale
            };
        }
    }
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let lu = a.full_piv_lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("rate-balance matrix is rank deficient".into()));
    }
    let sol = lu
        .solve(&b)
        .ok_or_else(|| Error::Singular("rate-balance solve failed".into()))?;
    let mut p = vec![0.0; n];
    for (r, &i) in class.iter().enumerate() {
        p[i] = sol[r].max(0.0);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);

    let residual = (sys.balance_matrix() * DVector::from_column_slice(&p)).norm();
    if residual > 1e-10 * scale {
        return Err(Error::Singular(format!(
            "steady-state residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(p)
}

/// Population vector after `t` seconds starting from `p0`.
pub fn propagate(sys: &LevelSystem, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    if p0.len() != sys.n_states {
        return invalid("population vector length does not match the system");
    }
    if !(t >= 0.0) {
        return invalid(format!("propagation time {t} must be non-negative"));
    }
    let eq = MasterEquation::new(sys.n_states, &sys.rates);
    let mut p = p0.to_vec();
    let mut h = 0.0;
    eq.propagate(&mut p, t, &mut h)?;
    Ok(p)
}

/// Analytic g²(τ) for delays in seconds; negative delays use g²(−τ) = g²(τ).
pub fn g2_analytic(sys: &LevelSystem, taus: &[f64]) -> Result<Vec<f64>> {
    if let Some(t) = taus.iter().find(|t| !t.is_finite()) {
        return invalid(format!("delay {t} is not finite"));
    }
    let p_ss = steady_state(sys)?;
    let (src, dst) = sys.radiative;
    let norm = p_ss[src];
    if norm <= 0.0 {
        return Err(Error::Singular("radiative source state is empty in steady state".into()));
    }
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&i, &j| taus[i].abs().total_cmp(&taus[j].abs()));

    let eq = MasterEquation::new(sys.n_states, &sys.rates);
    let mut p = vec![0.0; sys.n_states];
    p[dst] = 1.0;
    let mut t = 0.0;
    let mut h = 0.0;
    let mut out = vec![0.0; taus.len()];
    for idx in order {
        let target = taus[idx].abs();
        eq.propagate(&mut p, target - t, &mut h)?;
        t = target;
        out[idx] = p[src] / norm;
    }
    Ok(out)
}

/// Thermal quenching law `I(T) = I0 / (1 + A·exp(−E/(k_B T)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchModel {
    pub i0: f64,
    pub a: f64,
    /// Activation energy in eV.
    pub e_ev: f64,
}

impl QuenchModel {
    pub fn new(i0: f64, a: f64, e_ev: f64) -> Result<Self> {
        if !(i0 > 0.0) || !(a >= 0.0) || !(e_ev >= 0.0) || !a.is_finite() || !e_ev.is_finite() {
            return invalid(format!("quench model needs I0 > 0, A ≥ 0, E ≥ 0 (got {i0}, {a}, {e_ev})"));
        }
        Ok(QuenchModel { i0, a, e_ev })
    }
}

pub fn quench_intensity(model: &QuenchModel, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return invalid(format!("temperature {temperature_k} K must be positive"));
    }
    Ok(model.i0 / (1.0 + model.a * (-model.e_ev / (K_B_EV * temperature_k)).exp()))
}

/// Replaces `k24` by `kappa · exp(−E/(k_B T))`; all other rates unchanged.
pub fn thermal_rates(
    base: &FourLevelParams,
    e_ev: f64,
    kappa: f64,
    temperature_k: f64,
) -> Result<FourLevelParams> {
    if !(e_ev >= 0.0) || !(kappa >= 0.0) || !kappa.is_finite() || !e_ev.is_finite() {
        return invalid(format!("need E ≥ 0 and kappa ≥ 0 (got {e_ev}, {kappa})"));
    }
    if !(temperature_k > 0.0) {
        return invalid(format!("temperature {temperature_k} K must be positive"));
    }
    if kappa == 0.0 {
        return Ok(*base);
    }
    Ok(FourLevelParams {
        k24: kappa * (-e_ev / (K_B_EV * temperature_k)).exp(),
        ..*base
    })
}

/// Delay at which `1 − g²` has fallen to `1/e` of its zero-delay value.
///
/// For a two-level emitter this is `1/(pump + decay)`.
pub fn antibunching_time(sys: &LevelSystem) -> Result<f64> {
    let g0 = g2_analytic(sys, &[0.0])?[0];
    let target = 1.0 - (1.0 - g0) / std::f64::consts::E;
    let mut hi = 1.0 / sys.max_rate();
    let mut lo = 0.0;
    let limit = 1e6 / sys.max_rate();
    while g2_analytic(sys, &[hi])?[0] < target {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(Error::Numerical("g² never recovers towards 1".into()));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g2_analytic(sys, &[mid])?[0] < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
