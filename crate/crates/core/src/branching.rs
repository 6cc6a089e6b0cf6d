//! Saturated, total-population-size dependent branching process for the
//! propagation of a single post, and its constant step-size tracking iterate.
//!
//! Raw counts follow the embedded chain observed at wake-up epochs: the user
//! who reads a live copy consumes it and forwards `xi` new copies. The
//! tracking iterate works on the normalised fractions `(psi, theta)` and adds
//! a replacement regime that drains a saturated post so a fresher one can
//! take its place.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Error, Result};

/// Live and total copy counts after `epoch` wake-ups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawCounts {
    pub live: u64,
    pub total: u64,
    pub epoch: u64,
}

impl RawCounts {
    pub fn new(live: u64, total: u64) -> Result<Self> {
        if total < live {
            return Err(invalid(
                "total",
                format!("total copies {total} below live copies {live}"),
            ));
        }
        Ok(Self {
            live,
            total,
            epoch: 0,
        })
    }

    /// One wake-up: a live copy is read and `xi` fresh copies are forwarded.
    pub fn step(self, xi: u64) -> Result<Self> {
        if self.live == 0 {
            return Err(Error::ExtinctPost);
        }
        Ok(Self {
            live: self.live - 1 + xi,
            total: self.total + xi,
            epoch: self.epoch + 1,
        })
    }

    pub fn dead(&self) -> u64 {
        self.total - self.live
    }
}

/// Free-function form of [`RawCounts::step`].
pub fn step_raw(state: RawCounts, xi: u64) -> Result<RawCounts> {
    state.step(xi)
}

/// Normalised live-copy fraction `psi` and total-copy fraction `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewsState {
    pub psi: f64,
    pub theta: f64,
}

impl NewsState {
    pub fn new(psi: f64, theta: f64) -> Self {
        Self { psi, theta }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.psi, self.theta]
    }

    pub fn from_array(x: [f64; 2]) -> Self {
        Self {
            psi: x[0],
            theta: x[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Regular,
    Replacement,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Regular => "regular",
            Regime::Replacement => "replacement",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Regime::Regular => 0,
            Regime::Replacement => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Self {
        if code == 1 {
            Regime::Replacement
        } else {
            Regime::Regular
        }
    }
}

/// Offspring law of a post: attractiveness `eta(i) = eta_bar * (p*i + q)`,
/// saturation factor `a`, offspring bound `rho`, replacement decay `c` and
/// the saturation thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffspringLaw {
    pub eta_bar: f64,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub rho: u32,
    pub c: f64,
    pub delta_psi: f64,
    pub delta_theta: f64,
}

impl OffspringLaw {
    /// Validated law: `eta(i)` must stay inside `[0, rho]` for `i` in `[0, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta_bar: f64,
        p: f64,
        q: f64,
        a: f64,
        rho: u32,
        c: f64,
        delta_psi: f64,
        delta_theta: f64,
    ) -> Result<Self> {
        let law = Self {
            eta_bar,
            p,
            q,
            a,
            rho,
            c,
            delta_psi,
            delta_theta,
        };
        law.validate()?;
        Ok(law)
    }

    /// Like [`OffspringLaw::new`] but accepts attractiveness that dips below
    /// zero on part of `[0, 1]`; such values are clamped by [`Self::eta_clamped`].
    #[allow(clippy::too_many_arguments)]
    pub fn new_allowing_negative_eta(
        eta_bar: f64,
        p: f64,
        q: f64,
        a: f64,
        rho: u32,
        c: f64,
        delta_psi: f64,
        delta_theta: f64,
    ) -> Result<Self> {
        let law = Self {
            eta_bar,
            p,
            q,
            a,
            rho,
            c,
            delta_psi,
            delta_theta,
        };
        law.validate_common()?;
        Ok(law)
    }

    /// Law of a post with fixed attractiveness `eta` (independent of infection).
    pub fn constant(eta: f64, a: f64, rho: u32, c: f64, delta_psi: f64, delta_theta: f64) -> Result<Self> {
        Self::new(eta, 0.0, 1.0, a, rho, c, delta_psi, delta_theta)
    }

    fn validate_common(&self) -> Result<()> {
        for (name, v) in [
            ("eta_bar", self.eta_bar),
            ("p", self.p),
            ("q", self.q),
            ("a", self.a),
            ("c", self.c),
            ("delta_psi", self.delta_psi),
            ("delta_theta", self.delta_theta),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.eta_bar <= 0.0 {
            return Err(invalid("eta_bar", format!("must be positive, got {}", self.eta_bar)));
        }
        if self.a < 0.0 {
            return Err(invalid("a", format!("must be nonnegative, got {}", self.a)));
        }
        if self.rho < 1 {
            return Err(invalid("rho", "offspring bound must be at least 1"));
        }
        if self.c <= 0.0 {
            return Err(invalid("c", format!("must be positive, got {}", self.c)));
        }
        if self.delta_psi <= 0.0 {
            return Err(invalid("delta_psi", format!("must be positive, got {}", self.delta_psi)));
        }
        if self.delta_theta <= 0.0 {
            return Err(invalid(
                "delta_theta",
                format!("must be positive, got {}", self.delta_theta),
            ));
        }
        let hi = self.eta_at(0.0).max(self.eta_at(1.0));
        if hi > self.rho as f64 {
            return Err(invalid(
                "rho",
                format!("attractiveness reaches {hi} on [0, 1], above the offspring bound {}", self.rho),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if !self.eta_nonnegative() {
            return Err(invalid(
                "q",
                format!(
                    "attractiveness must be nonnegative on [0, 1], got eta(0) = {}, eta(1) = {}",
                    self.eta_at(0.0),
                    self.eta_at(1.0)
                ),
            ));
        }
        Ok(())
    }

    /// `eta_bar * (p*i + q)` without clamping.
    pub fn eta_at(&self, i: f64) -> f64 {
        self.eta_bar * (self.p * i + self.q)
    }

    pub fn eta_clamped(&self, i: f64) -> f64 {
        self.eta_at(i).max(0.0)
    }

    /// `eta(i) >= 0` on all of `[0, 1]` (checked at the endpoints since it is affine).
    pub fn eta_nonnegative(&self) -> bool {
        self.eta_at(0.0) >= 0.0 && self.eta_at(1.0) >= 0.0
    }
}

/// Expected offspring `eta * (1 - a*theta)`. Unclamped; negative past `theta = 1/a`.
pub fn mean_offspring(theta: f64, eta: f64, law: &OffspringLaw) -> f64 {
    eta * (1.0 - law.a * theta)
}

/// Draws `xi ~ Binomial(rho, clamp(M, 0, rho) / rho)`.
pub fn sample_offspring<R: Rng + ?Sized>(theta: f64, eta: f64, law: &OffspringLaw, rng: &mut R) -> u32 {
    let rho = law.rho as f64;
    let mean = mean_offspring(theta, eta, law).clamp(0.0, rho);
    let prob = mean / rho;
    if prob <= 0.0 {
        return 0;
    }
    if prob >= 1.0 {
        return law.rho;
    }
    // prob is in (0, 1) here, so construction cannot fail.
    let dist = Binomial::new(law.rho as u64, prob).expect("probability in (0, 1)");
    dist.sample(rng) as u32
}

/// Closed set `{0 <= psi <= delta_psi, theta >= delta_theta}` is the replacement regime.
pub fn classify_regime(state: NewsState, law: &OffspringLaw) -> Regime {
    if state.psi >= 0.0 && state.psi <= law.delta_psi && state.theta >= law.delta_theta {
        Regime::Replacement
    } else {
        Regime::Regular
    }
}

/// Plain stochastic-approximation update of the ratios with step `eps`
/// (no regime switching). With `eps = 1/(k+1)` it reproduces the exact
/// count ratios `Psi/k`, `Theta/k`.
pub fn regular_update(state: NewsState, xi: f64, eps: f64) -> NewsState {
    NewsState {
        psi: state.psi + eps * (xi - 1.0 - state.psi),
        theta: state.theta + eps * (xi - state.theta),
    }
}

/// Tracking update with real-valued offspring; the regime is read from the
/// input state.
pub fn step_tracking_real(state: NewsState, xi: f64, eps: f64, law: &OffspringLaw) -> NewsState {
    match classify_regime(state, law) {
        Regime::Regular => regular_update(state, xi, eps),
        Regime::Replacement => NewsState {
            psi: state.psi - eps * state.psi,
            theta: state.theta - eps * law.c * state.theta,
        },
    }
}

pub fn step_tracking(state: NewsState, xi: u32, eps: f64, law: &OffspringLaw) -> NewsState {
    step_tracking_real(state, xi as f64, eps, law)
}

/// How offspring are generated along a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffspringSampling {
    /// Bounded binomial draws (the stochastic process).
    #[default]
    Binomial,
    /// `xi` replaced by its clamped conditional mean: the noiseless iterate.
    Mean,
}

/// Per-post stochastic source: owns its RNG so independent posts never
/// share state.
#[derive(Debug, Clone)]
pub struct OffspringSource {
    rng: ChaCha8Rng,
    sampling: OffspringSampling,
}

impl OffspringSource {
    pub fn new(seed: u64, sampling: OffspringSampling) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sampling,
        }
    }

    pub fn draw(&mut self, theta: f64, eta: f64, law: &OffspringLaw) -> f64 {
        match self.sampling {
            OffspringSampling::Binomial => sample_offspring(theta, eta, law, &mut self.rng) as f64,
            OffspringSampling::Mean => mean_offspring(theta, eta, law).clamp(0.0, law.rho as f64),
        }
    }
}

/// Sampled path of the tracking iterate. `regimes[k]` is the regime of
/// `states[k]`, i.e. the branch used by the step leaving it.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsPath {
    pub eps: f64,
    pub states: Vec<NewsState>,
    pub regimes: Vec<Regime>,
}

impl NewsPath {
    /// Number of regular-to-replacement switches along the path.
    pub fn saturation_count(&self) -> usize {
        self.regimes
            .windows(2)
            .filter(|w| w[0] == Regime::Regular && w[1] == Regime::Replacement)
            .count()
    }
}

pub fn simulate_news(
    law: &OffspringLaw,
    eta: f64,
    eps: f64,
    n_steps: usize,
    init: NewsState,
    seed: u64,
) -> Result<NewsPath> {
    simulate_news_with(law, eta, eps, n_steps, init, seed, OffspringSampling::Binomial)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_news_with(
    law: &OffspringLaw,
    eta: f64,
    eps: f64,
    n_steps: usize,
    init: NewsState,
    seed: u64,
    sampling: OffspringSampling,
) -> Result<NewsPath> {
    law.validate()?;
    if n_steps < 1 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("must be nonnegative, got {eps}")));
    }
    if !(0.0..=law.rho as f64).contains(&eta) {
        return Err(invalid("eta", format!("must lie in [0, rho], got {eta}")));
    }
    let mut source = OffspringSource::new(seed, sampling);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut regimes = Vec::with_capacity(n_steps + 1);
    let mut x = init;
    for _ in 0..n_steps {
        states.push(x);
        regimes.push(classify_regime(x, law));
        let xi = source.draw(x.theta, eta, law);
        x = step_tracking_real(x, xi, eps, law);
    }
    regimes.push(classify_regime(x, law));
    states.push(x);
    Ok(NewsPath {
        eps,
        states,
        regimes,
    })
}
