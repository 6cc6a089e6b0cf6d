//! Mean-field ODE of the tracking iterate, its per-regime closed forms, the
//! news limit cycle and the viral-influence limit `eta / (a*eta + 1)`.

use crate::branching::{
    classify_regime, mean_offspring, simulate_news_with, NewsPath, NewsState, OffspringLaw,
    OffspringSampling, Regime,
};
use crate::error::{invalid, Error, Result};
use crate::numerics::{find_root_bracketed, integrate, IntegratorConfig, VectorField};

/// Right-hand side of the switched mean-field ODE.
pub fn news_rhs(state: NewsState, eta: f64, law: &OffspringLaw) -> [f64; 2] {
    regime_rhs(state, eta, law, classify_regime(state, law))
}

fn regime_rhs(state: NewsState, eta: f64, law: &OffspringLaw, regime: Regime) -> [f64; 2] {
    match regime {
        Regime::Regular => {
            let m = mean_offspring(state.theta, eta, law);
            [m - 1.0 - state.psi, m - state.theta]
        }
        Regime::Replacement => [-state.psi, -law.c * state.theta],
    }
}

/// The news ODE as a piecewise [`VectorField`] over `(psi, theta)`.
#[derive(Debug, Clone, Copy)]
pub struct NewsField {
    pub law: OffspringLaw,
    pub eta: f64,
}

impl VectorField<2> for NewsField {
    fn mode(&self, _t: f64, x: &[f64; 2]) -> u8 {
        classify_regime(NewsState::from_array(*x), &self.law).code()
    }

    fn eval(&self, _t: f64, x: &[f64; 2], mode: u8) -> [f64; 2] {
        regime_rhs(NewsState::from_array(*x), self.eta, &self.law, Regime::from_code(mode))
    }
}

/// Replacement-regime solution: both fractions decay exponentially,
/// `theta` at rate `c`.
pub fn closed_form_replacement(init: NewsState, tau: f64, law: &OffspringLaw) -> NewsState {
    NewsState {
        psi: init.psi * (-tau).exp(),
        theta: init.theta * (-law.c * tau).exp(),
    }
}

/// Coefficients of the regular-regime solution started at `(psi0, delta_theta)`:
/// `psi(tau) = -k1 e^{-D tau} + k2 e^{-tau} + k3` with `D = a*eta + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub decay: f64,
}

impl RegularCoefficients {
    pub fn new(psi0: f64, eta: f64, law: &OffspringLaw) -> Self {
        let decay = law.a * eta + 1.0;
        let limit = eta / decay;
        Self {
            k1: limit - law.delta_theta,
            k2: psi0 - law.delta_theta + 1.0,
            k3: limit - 1.0,
            decay,
        }
    }

    pub fn psi(&self, tau: f64) -> f64 {
        -self.k1 * (-self.decay * tau).exp() + self.k2 * (-tau).exp() + self.k3
    }

    /// `theta(tau) = eta/D - k1 e^{-D tau}`; note `psi - theta` relaxes at unit rate.
    pub fn theta(&self, tau: f64) -> f64 {
        (self.k3 + 1.0) - self.k1 * (-self.decay * tau).exp()
    }

    pub fn psi_rate(&self, tau: f64) -> f64 {
        self.decay * self.k1 * (-self.decay * tau).exp() - self.k2 * (-tau).exp()
    }
}

/// Regular-regime solution entered at `theta = delta_theta` with live fraction `psi0`.
pub fn closed_form_regular(psi0: f64, tau: f64, eta: f64, law: &OffspringLaw) -> NewsState {
    let k = RegularCoefficients::new(psi0, eta, law);
    NewsState {
        psi: k.psi(tau),
        theta: k.theta(tau),
    }
}

/// Limit of the per-cycle maximum total-copy fraction, `eta / (a*eta + 1)`.
pub fn theta_star(eta: f64, a: f64) -> f64 {
    eta / (a * eta + 1.0)
}

/// Periodic orbit of the news ODE, described by the regime entry points and
/// dwell times: replacement lasts `nu_1` (from `(delta_psi, theta_02)` down to
/// `(psi_01, delta_theta)`), regular lasts `nu_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCycle {
    pub theta_02: f64,
    pub psi_01: f64,
    pub nu_1: f64,
    pub nu_2: f64,
    pub eta: f64,
    pub iterations: usize,
}

impl LimitCycle {
    /// Residuals of the four fixed-point conditions at the stored values.
    pub fn residuals(&self, law: &OffspringLaw) -> [f64; 4] {
        let k = RegularCoefficients::new(self.psi_01, self.eta, law);
        [
            self.theta_02 - k.theta(self.nu_2),
            self.psi_01 - law.delta_psi * (-self.nu_1).exp(),
            self.theta_02 * (-law.c * self.nu_1).exp() - law.delta_theta,
            k.psi(self.nu_2) - law.delta_psi,
        ]
    }

    /// `|delta_theta - eta/D| e^{-D nu_2}`: the gap between `theta_02` and
    /// `theta_star`, and the sensitivity of `theta_02` to where the regular
    /// phase is entered.
    pub fn transient_bound(&self, law: &OffspringLaw) -> f64 {
        let d = law.a * self.eta + 1.0;
        (law.delta_theta - self.eta / d).abs() * (-d * self.nu_2).exp()
    }

    pub fn period(&self) -> f64 {
        self.nu_1 + self.nu_2
    }
}

/// Time at which the regular phase started at `psi01` falls back through
/// `delta_psi` (the last crossing). `None` if `psi` never rises above it.
fn regular_exit_time(psi01: f64, eta: f64, law: &OffspringLaw) -> Option<f64> {
    let k = RegularCoefficients::new(psi01, eta, law);
    let target = law.delta_psi;
    // psi' has at most one zero; it is a maximum when psi' starts positive.
    let peak = if k.psi_rate(0.0) <= 0.0 {
        0.0
    } else if k.decay > 1.0 && k.k2 > 0.0 {
        ((k.decay * k.k1) / k.k2).ln() / (k.decay - 1.0)
    } else {
        return None;
    };
    if !(k.psi(peak) > target) || !(k.k3 < target) {
        return None;
    }
    let mut hi = peak + 1.0;
    while k.psi(hi) >= target {
        hi = peak + 2.0 * (hi - peak);
        if hi > 1e6 {
            return None;
        }
    }
    find_root_bracketed(|t| k.psi(t) - target, peak, hi, 1e-15).ok()
}

/// Fixed point of the cycle connection map, seeded with `theta_02 = eta/D`
/// and refined by substitution until successive `theta_02` agree to 1e-12.
pub fn limit_cycle(eta: f64, law: &OffspringLaw) -> Result<LimitCycle> {
    if !(eta > 1.0) {
        return Err(Error::NoCycle(format!(
            "subcritical attractiveness eta = {eta} (post dies out)"
        )));
    }
    let seed = theta_star(eta, law.a);
    if !(seed > law.delta_theta) {
        return Err(Error::NoCycle(format!(
            "limiting total fraction {seed} does not exceed delta_theta = {}",
            law.delta_theta
        )));
    }
    if !(seed - 1.0 < law.delta_psi) {
        return Err(Error::NoCycle(format!(
            "live fraction settles at {} above delta_psi = {}; the post never saturates",
            seed - 1.0,
            law.delta_psi
        )));
    }

    let mut theta_02 = seed;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let nu_1 = (theta_02 / law.delta_theta).ln() / law.c;
        let psi_01 = law.delta_psi * (-nu_1).exp();
        let nu_2 = regular_exit_time(psi_01, eta, law).ok_or_else(|| {
            Error::NoCycle(format!(
                "regular phase entered at psi = {psi_01} never lifts psi above delta_psi"
            ))
        })?;
        let next = RegularCoefficients::new(psi_01, eta, law).theta(nu_2);
        let done = (next - theta_02).abs() < 1e-12 || iterations >= 100;
        theta_02 = next;
        if done {
            // Re-derive the dependent quantities from the final theta_02 so
            // that the stored tuple is self-consistent.
            let nu_1 = (theta_02 / law.delta_theta).ln() / law.c;
            let psi_01 = law.delta_psi * (-nu_1).exp();
            return Ok(LimitCycle {
                theta_02,
                psi_01,
                nu_1,
                nu_2,
                eta,
                iterations,
            });
        }
    }
}

/// Tracks completed news cycles along a path. A cycle spans two successive
/// regular-to-replacement switches; its value is the largest `theta` seen.
/// A switch only counts once `psi` has risen above `delta_psi` since the
/// previous one, so chattering along `theta = delta_theta` (a post that has
/// not trended yet) does not close spurious cycles.
#[derive(Debug, Clone, Default)]
pub struct CycleTracker {
    delta_psi: f64,
    prev: Option<Regime>,
    armed: bool,
    running_max: Option<f64>,
    last_completed: Option<f64>,
    completed: usize,
}

impl CycleTracker {
    pub fn new(delta_psi: f64) -> Self {
        Self {
            delta_psi,
            ..Self::default()
        }
    }

    pub fn observe(&mut self, state: NewsState, regime: Regime) {
        if let Some(m) = self.running_max.as_mut() {
            *m = m.max(state.theta);
        }
        if regime == Regime::Regular && state.psi > self.delta_psi {
            self.armed = true;
        }
        if self.armed && self.prev == Some(Regime::Regular) && regime == Regime::Replacement {
            if let Some(m) = self.running_max {
                self.last_completed = Some(m);
                self.completed += 1;
            }
            self.running_max = Some(state.theta);
            self.armed = false;
        }
        self.prev = Some(regime);
    }

    /// Max `theta` of the most recently completed cycle.
    pub fn last_completed(&self) -> Option<f64> {
        self.last_completed
    }

    pub fn completed(&self) -> usize {
        self.completed
    }
}

/// Max `theta` of each completed cycle along a sampled path.
pub fn cycle_maxima(states: &[NewsState], regimes: &[Regime], delta_psi: f64) -> Vec<f64> {
    let mut tracker = CycleTracker::new(delta_psi);
    let mut out = Vec::new();
    for (s, r) in states.iter().zip(regimes) {
        let before = tracker.completed();
        tracker.observe(*s, *r);
        if tracker.completed() > before {
            out.extend(tracker.last_completed());
        }
    }
    out
}

/// ODE solution sampled at `tau = eps * k` for `k = 0..=n_steps`. Each
/// interval of length `eps` is split into RK4 substeps no longer than
/// `max_dt`.
pub fn ode_reference(
    law: &OffspringLaw,
    eta: f64,
    eps: f64,
    n_steps: usize,
    init: NewsState,
    max_dt: f64,
) -> Result<Vec<NewsState>> {
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    let sub = (eps / max_dt).ceil().max(1.0) as usize;
    let dt = eps / sub as f64;
    let cfg = IntegratorConfig::new(dt, dt * (sub * n_steps) as f64)?;
    let traj = integrate(&NewsField { law: *law, eta }, init.to_array(), &cfg)?;
    Ok(traj
        .states
        .iter()
        .step_by(sub)
        .map(|x| NewsState::from_array(*x))
        .collect())
}

/// `sup_k |phi_k - phi(eps k)|` (Euclidean norm).
pub fn sup_gap(path: &NewsPath, reference: &[NewsState]) -> f64 {
    path.states
        .iter()
        .zip(reference)
        .map(|(a, b)| (a.psi - b.psi).hypot(a.theta - b.theta))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapStats {
    pub eps: f64,
    pub sup_gaps: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Fraction of seeds whose sup-gap exceeds the threshold.
    pub exceed_fraction: f64,
}

impl GapStats {
    pub fn from_gaps(eps: f64, sup_gaps: Vec<f64>, threshold: f64) -> Self {
        let n = sup_gaps.len().max(1) as f64;
        let mean = sup_gaps.iter().sum::<f64>() / n;
        let variance = sup_gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
        let exceed_fraction = sup_gaps.iter().filter(|&&g| g > threshold).count() as f64 / n;
        Self {
            eps,
            sup_gaps,
            mean,
            variance,
            exceed_fraction,
        }
    }
}

/// Settings for comparing the stochastic iterate with the mean-field ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapExperiment {
    pub eta: f64,
    pub eps: f64,
    pub horizon: f64,
    pub init: NewsState,
    pub threshold: f64,
    pub sampling: OffspringSampling,
    /// Largest RK4 substep for the ODE reference.
    pub ode_dt: f64,
}

impl GapExperiment {
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.eps).floor() as usize
    }

    pub fn reference(&self, law: &OffspringLaw) -> Result<Vec<NewsState>> {
        ode_reference(law, self.eta, self.eps, self.n_steps(), self.init, self.ode_dt)
    }

    pub fn gap_for_seed(&self, law: &OffspringLaw, reference: &[NewsState], seed: u64) -> Result<f64> {
        let path = simulate_news_with(law, self.eta, self.eps, self.n_steps(), self.init, seed, self.sampling)?;
        Ok(sup_gap(&path, reference))
    }
}

/// Sup-gap statistics over seeds `0..n_seeds`.
pub fn stochastic_ode_gap(law: &OffspringLaw, exp: &GapExperiment, n_seeds: u64) -> Result<GapStats> {
    if exp.n_steps() < 1 {
        return Err(invalid("horizon", "horizon shorter than one step"));
    }
    let reference = exp.reference(law)?;
    let gaps = (0..n_seeds)
        .map(|seed| exp.gap_for_seed(law, &reference, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(GapStats::from_gaps(exp.eps, gaps, exp.threshold))
}
