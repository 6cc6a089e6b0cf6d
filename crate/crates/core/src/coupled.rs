//! The consolidated two-timescale system: an SIRS epidemic whose infection
//! rate is shifted by the influence of viral posts,
//!
//! `beta(i) = beta_bar + w(i) * eta(i) / (a*eta(i) + 1)`,
//!
//! where `eta(i)` is the attractiveness of posts at infection level `i` and
//! `w(i)` the behavioural influence they exert (positive for misinformation,
//! negative for authentic guidance).

use std::collections::BTreeMap;

use crate::branching::{
    classify_regime, step_tracking_real, NewsState, OffspringLaw, OffspringSampling, OffspringSource,
};
use crate::error::{invalid, Error, Result};
use crate::news_ode::{theta_star, CycleTracker};
use crate::numerics::{
    find_root_bracketed, integrate, step, IntegratorConfig, Method, Smooth, Trajectory, VectorField,
};
use crate::sirs::{epi_rhs, EpiState, SirsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// No news influence.
    SirsOnly,
    /// Interest in news grows with infection, constant influence `w_bar`.
    I3N,
    /// Constant interest, influence `u * i` growing with infection.
    IBIN,
    /// Both effects at once.
    Combined,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SirsOnly => "sirs-only",
            ScenarioKind::I3N => "i3n",
            ScenarioKind::IBIN => "ibin",
            ScenarioKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub w_bar: f64,
    pub u: f64,
    pub news: OffspringLaw,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, w_bar: f64, u: f64, news: OffspringLaw) -> Result<Self> {
        let spec = Self { kind, w_bar, u, news };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sirs_only(news: OffspringLaw) -> Self {
        Self {
            kind: ScenarioKind::SirsOnly,
            w_bar: 0.0,
            u: 0.0,
            news,
        }
    }

    pub fn i3n(w_bar: f64, news: OffspringLaw) -> Result<Self> {
        Self::new(ScenarioKind::I3N, w_bar, 0.0, news)
    }

    /// IBIN keeps the thresholds, bound and decay of `template` but fixes
    /// `eta(i) = 1` and `a = 0`.
    pub fn ibin(u: f64, template: &OffspringLaw) -> Result<Self> {
        let news = OffspringLaw {
            eta_bar: 1.0,
            p: 0.0,
            q: 1.0,
            a: 0.0,
            ..*template
        };
        Self::new(ScenarioKind::IBIN, 0.0, u, news)
    }

    pub fn combined(w_bar: f64, u: f64, news: OffspringLaw) -> Result<Self> {
        Self::new(ScenarioKind::Combined, w_bar, u, news)
    }

    /// Combined scenario with `p = 0` whose consolidated ODE coincides with
    /// the IBIN scenario of slope `ibin_u`: the constant news factor
    /// `g = eta_bar*q / (a*eta_bar*q + 1)` is divided out of the slope.
    pub fn balanced_with_ibin(ibin_u: f64, news: OffspringLaw) -> Result<Self> {
        let news = OffspringLaw { p: 0.0, ..news };
        let eta = news.eta_at(0.0);
        let g = eta / (news.a * eta + 1.0);
        if !(g > 0.0) {
            return Err(invalid("q", "balancing needs positive constant attractiveness"));
        }
        Self::combined(0.0, ibin_u / g, news)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w_bar.is_finite() {
            return Err(invalid("w_bar", "must be finite"));
        }
        if !self.u.is_finite() {
            return Err(invalid("u", "must be finite"));
        }
        match self.kind {
            ScenarioKind::SirsOnly => {
                if self.w_bar != 0.0 || self.u != 0.0 {
                    return Err(invalid("w_bar", "sirs-only scenario carries no influence"));
                }
            }
            ScenarioKind::I3N => {
                if self.u != 0.0 {
                    return Err(invalid("u", "I3N has constant influence; use the combined scenario"));
                }
            }
            ScenarioKind::IBIN => {
                let n = &self.news;
                if n.a != 0.0 || n.p != 0.0 || n.eta_bar * n.q != 1.0 {
                    return Err(invalid("news", "IBIN requires eta(i) = 1 and a = 0"));
                }
                if self.w_bar != 0.0 {
                    return Err(invalid("w_bar", "IBIN influence is u * i only"));
                }
            }
            ScenarioKind::Combined => {}
        }
        Ok(())
    }

    fn require(&self, kind: ScenarioKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongScenario {
                expected: kind.as_str(),
                got: self.kind.as_str(),
            });
        }
        Ok(())
    }

    fn require_nonnegative_eta(&self) -> Result<()> {
        if !self.news.eta_nonnegative() {
            return Err(invalid(
                "q",
                format!(
                    "analysis needs eta(i) >= 0 on [0, 1]; eta(0) = {}",
                    self.news.eta_at(0.0)
                ),
            ));
        }
        Ok(())
    }

    /// Influence weight `w(i)` multiplying the news limit.
    pub fn influence(&self, i: f64) -> f64 {
        match self.kind {
            ScenarioKind::SirsOnly => 0.0,
            ScenarioKind::I3N => self.w_bar,
            ScenarioKind::IBIN => self.u * i,
            ScenarioKind::Combined => self.w_bar + self.u * i,
        }
    }
}

/// Attractiveness at infection level `i` (clamped at zero).
pub fn eta_of_i(i: f64, spec: &ScenarioSpec) -> f64 {
    match spec.kind {
        ScenarioKind::SirsOnly => 0.0,
        ScenarioKind::IBIN => 1.0,
        ScenarioKind::I3N | ScenarioKind::Combined => spec.news.eta_clamped(i),
    }
}

/// `eta / (a*eta + 1)` at infection level `i`.
fn news_factor(i: f64, spec: &ScenarioSpec) -> f64 {
    theta_star(eta_of_i(i, spec), spec.news.a)
}

pub fn beta_of_i(i: f64, beta_bar: f64, spec: &ScenarioSpec) -> f64 {
    match spec.kind {
        ScenarioKind::SirsOnly => beta_bar,
        ScenarioKind::I3N => beta_bar + spec.w_bar * news_factor(i, spec),
        ScenarioKind::IBIN => beta_bar + spec.u * i,
        ScenarioKind::Combined => beta_bar + (spec.w_bar + spec.u * i) * news_factor(i, spec),
    }
}

/// `d beta / d i`, where `eta(i)` is not clamped.
pub fn beta_slope(i: f64, spec: &ScenarioSpec) -> f64 {
    let n = &spec.news;
    let eta = eta_of_i(i, spec);
    let dg = {
        let den = n.a * eta + 1.0;
        n.eta_bar * n.p / (den * den)
    };
    match spec.kind {
        ScenarioKind::SirsOnly => 0.0,
        ScenarioKind::I3N => spec.w_bar * dg,
        ScenarioKind::IBIN => spec.u,
        ScenarioKind::Combined => spec.u * news_factor(i, spec) + (spec.w_bar + spec.u * i) * dg,
    }
}

pub fn coupled_rhs(state: EpiState, params: &SirsParams, spec: &ScenarioSpec) -> [f64; 2] {
    epi_rhs(state, beta_of_i(state.i, params.beta_bar, spec), params)
}

/// Analytic Jacobian of the consolidated field, row-major.
pub fn coupled_jacobian(state: EpiState, params: &SirsParams, spec: &ScenarioSpec) -> [[f64; 2]; 2] {
    let EpiState { i, r } = state;
    let s = 1.0 - i - r;
    let beta = beta_of_i(i, params.beta_bar, spec);
    let slope = beta_slope(i, spec);
    [
        [beta * s - params.alpha + i * (slope * s - beta), -i * beta],
        [params.alpha * params.p_r, -params.l_i],
    ]
}

/// Central-difference Jacobian with relative step `1e-7`.
pub fn numerical_jacobian(state: EpiState, params: &SirsParams, spec: &ScenarioSpec) -> [[f64; 2]; 2] {
    let x = state.to_array();
    let mut jac = [[0.0; 2]; 2];
    for col in 0..2 {
        let h = 1e-7 * x[col].abs().max(1e-3);
        let mut plus = x;
        let mut minus = x;
        plus[col] += h;
        minus[col] -= h;
        let fp = coupled_rhs(EpiState::from_array(plus), params, spec);
        let fm = coupled_rhs(EpiState::from_array(minus), params, spec);
        for row in 0..2 {
            jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    jac
}

/// Real parts of the eigenvalues of a 2x2 matrix, ascending.
pub fn eigen_real_parts(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        (tr / 2.0, tr / 2.0)
    } else {
        let s = disc.sqrt();
        ((tr - s) / 2.0, (tr + s) / 2.0)
    }
}

pub fn determinant(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Long-run behaviour class of the consolidated ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AsymptoticRegime {
    /// Global point attractors.
    GPA,
    /// Closed orbits or point limits; the interior equilibrium attracts locally.
    CoP,
    /// Predominantly closed orbits around an unstable interior equilibrium.
    PCo,
    /// Knife-edge `beta(0) = alpha`.
    Degenerate,
}

impl AsymptoticRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            AsymptoticRegime::GPA => "GPA",
            AsymptoticRegime::CoP => "CoP",
            AsymptoticRegime::PCo => "PCo",
            AsymptoticRegime::Degenerate => "Degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub kind: ScenarioKind,
    pub disease_free_is_la: bool,
    pub interior: Option<EpiState>,
    /// Every interior equilibrium found on `(0, 1/c_ir)`, in increasing `i`.
    pub all_interior: Vec<EpiState>,
    pub regime: AsymptoticRegime,
    /// Eigenvalue real parts of the Jacobian at the interior point, or at
    /// `(0, 0)` when there is none.
    pub jacobian_eigen_realparts: (f64, f64),
    pub jacobian_determinant: f64,
    pub conditions: BTreeMap<&'static str, f64>,
    /// Sufficient condition for the absence of limit cycles (IBIN only).
    pub bendixson_no_cycle: Option<bool>,
}

impl EquilibriumReport {
    /// Largest `|rhs|` over the reported interior equilibria.
    pub fn residual(&self, params: &SirsParams, spec: &ScenarioSpec) -> f64 {
        self.all_interior
            .iter()
            .chain(self.interior.iter())
            .map(|s| {
                let d = coupled_rhs(*s, params, spec);
                d[0].abs().max(d[1].abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `beta(i) (1 - c i) - alpha`, whose zeros are the interior equilibria.
pub fn equilibrium_condition(i: f64, params: &SirsParams, spec: &ScenarioSpec) -> f64 {
    beta_of_i(i, params.beta_bar, spec) * (1.0 - params.c_ir() * i) - params.alpha
}

/// Interior roots of [`equilibrium_condition`] by sign scan and bisection.
/// The flag marks a downward crossing (condition goes from + to -).
pub fn scan_interior_roots(params: &SirsParams, spec: &ScenarioSpec) -> Vec<(f64, bool)> {
    const GRID: usize = 4000;
    let upper = 1.0 / params.c_ir();
    let g = |i: f64| equilibrium_condition(i, params, spec);
    let mut roots = Vec::new();
    let mut prev_x = upper * 1e-9;
    let mut prev = g(prev_x);
    for k in 1..=GRID {
        let x = upper * k as f64 / GRID as f64;
        let v = g(x);
        if prev != 0.0 && (v == 0.0 || prev * v < 0.0) {
            if let Ok(root) = find_root_bracketed(g, prev_x, x, 1e-16) {
                if root > 0.0 && root < upper {
                    roots.push((root, prev > 0.0));
                }
            }
        }
        prev_x = x;
        prev = v;
    }
    roots
}

fn state_at(i: f64, params: &SirsParams) -> EpiState {
    EpiState::new(i, params.r_of_i(i))
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    kind: ScenarioKind,
    params: &SirsParams,
    spec: &ScenarioSpec,
    disease_free_is_la: bool,
    interior: Option<EpiState>,
    regime: AsymptoticRegime,
    conditions: BTreeMap<&'static str, f64>,
    bendixson_no_cycle: Option<bool>,
    numeric_jacobian: bool,
) -> EquilibriumReport {
    let at = interior.unwrap_or_default();
    let jac = if numeric_jacobian {
        numerical_jacobian(at, params, spec)
    } else {
        coupled_jacobian(at, params, spec)
    };
    let all_interior = scan_interior_roots(params, spec)
        .into_iter()
        .map(|(i, _)| state_at(i, params))
        .collect();
    EquilibriumReport {
        kind,
        disease_free_is_la,
        interior,
        all_interior,
        regime,
        jacobian_eigen_realparts: eigen_real_parts(&jac),
        jacobian_determinant: determinant(&jac),
        conditions,
        bendixson_no_cycle,
    }
}

/// Regime of an interior equilibrium from the sign of the Jacobian trace.
fn regime_by_trace(jac: &[[f64; 2]; 2]) -> AsymptoticRegime {
    if jac[0][0] + jac[1][1] > 0.0 {
        AsymptoticRegime::PCo
    } else {
        AsymptoticRegime::CoP
    }
}

/// Handles `beta(0) < alpha`: the disease-free state is locally attracting.
/// Returns the report-ready regime and interior point given whether the
/// closed-form sufficient condition for a single global limit holds.
fn subthreshold(
    params: &SirsParams,
    spec: &ScenarioSpec,
    gpa_condition: bool,
) -> (AsymptoticRegime, Option<EpiState>) {
    let downward = scan_interior_roots(params, spec)
        .into_iter()
        .find(|(_, down)| *down)
        .map(|(i, _)| state_at(i, params));
    match downward {
        // Without interior equilibria no orbit can close inside the simplex.
        None => (AsymptoticRegime::GPA, None),
        Some(_) if gpa_condition => (AsymptoticRegime::GPA, None),
        Some(eq) => (regime_by_trace(&coupled_jacobian(eq, params, spec)), Some(eq)),
    }
}

/// Uncoupled SIRS classification.
pub fn analyze_sirs(params: &SirsParams, spec: &ScenarioSpec) -> Result<EquilibriumReport> {
    spec.require(ScenarioKind::SirsOnly)?;
    let (b, a) = (params.beta_bar, params.alpha);
    let mut conditions = BTreeMap::new();
    conditions.insert("beta_0", b);
    conditions.insert("alpha", a);
    conditions.insert("c_ir", params.c_ir());
    let (la, interior, regime) = if b < a {
        (true, None, AsymptoticRegime::GPA)
    } else if b > a {
        let i = (b - a) / (b * params.c_ir());
        (false, Some(state_at(i, params)), AsymptoticRegime::GPA)
    } else {
        (false, None, AsymptoticRegime::Degenerate)
    };
    Ok(finish_report(
        ScenarioKind::SirsOnly,
        params,
        spec,
        la,
        interior,
        regime,
        conditions,
        None,
        false,
    ))
}

/// Coefficients of the I3N equilibrium quadratic `c_a i^2 + c_b i + c_c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct I3nQuadratic {
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
}

impl I3nQuadratic {
    pub fn new(params: &SirsParams, spec: &ScenarioSpec) -> Self {
        let n = &spec.news;
        let c = params.c_ir();
        let (b, al, w) = (params.beta_bar, params.alpha, spec.w_bar);
        let lead = b * n.a + w;
        Self {
            c_a: -c * lead * n.eta_bar * n.p,
            c_b: (lead - al * n.a) * n.eta_bar * n.p - c * lead * n.eta_bar * n.q - c * b,
            c_c: (lead - al * n.a) * n.eta_bar * n.q + b - al,
        }
    }

    pub fn eval(&self, i: f64) -> f64 {
        (self.c_a * i + self.c_b) * i + self.c_c
    }

    pub fn discriminant(&self) -> f64 {
        self.c_b * self.c_b - 4.0 * self.c_a * self.c_c
    }

    /// The root `(c_b + sqrt(D)) / (-2 c_a)`, evaluated in whichever of the
    /// two algebraically equal forms avoids cancellation. Degenerates to
    /// `-c_c / c_b` when `c_a = 0`.
    pub fn root(&self) -> Option<f64> {
        let d = self.discriminant();
        if d < 0.0 {
            return None;
        }
        let s = d.sqrt();
        if self.c_b >= 0.0 {
            if self.c_a == 0.0 {
                return None;
            }
            Some((self.c_b + s) / (-2.0 * self.c_a))
        } else {
            Some(2.0 * self.c_c / (s - self.c_b))
        }
    }
}

pub fn analyze_i3n(params: &SirsParams, spec: &ScenarioSpec) -> Result<EquilibriumReport> {
    spec.require(ScenarioKind::I3N)?;
    spec.require_nonnegative_eta()?;
    let n = &spec.news;
    let (b, al, w) = (params.beta_bar, params.alpha, spec.w_bar);
    let eta0 = n.eta_bar * n.q;
    let beta_0 = b + w * eta0 / (n.a * eta0 + 1.0);
    let quad = I3nQuadratic::new(params, spec);
    let gpa_margin = b * n.a + w - al * n.a;

    let mut conditions = BTreeMap::new();
    conditions.insert("beta_0", beta_0);
    conditions.insert("alpha", al);
    conditions.insert("c_ir", params.c_ir());
    conditions.insert("c_a", quad.c_a);
    conditions.insert("c_b", quad.c_b);
    conditions.insert("c_c", quad.c_c);
    conditions.insert("discriminant", quad.discriminant());
    conditions.insert("gpa_margin", gpa_margin);

    let (la, interior, regime) = if beta_0 < al {
        let (regime, interior) = subthreshold(params, spec, w < 0.0 || gpa_margin < 0.0);
        (true, interior, regime)
    } else if beta_0 > al {
        let upper = 1.0 / params.c_ir();
        let i = quad.root().ok_or(Error::InconsistentRoot { root: f64::NAN, upper })?;
        if !(i > 0.0 && i <= upper) {
            return Err(Error::InconsistentRoot { root: i, upper });
        }
        conditions.insert("jacobian_slope", 2.0 * i * quad.c_a + quad.c_b);
        (false, Some(state_at(i, params)), AsymptoticRegime::CoP)
    } else {
        (false, None, AsymptoticRegime::Degenerate)
    };
    Ok(finish_report(
        ScenarioKind::I3N,
        params,
        spec,
        la,
        interior,
        regime,
        conditions,
        None,
        false,
    ))
}

/// Interior IBIN equilibrium; exact SIRS value at `u = 0`.
pub fn ibin_interior(params: &SirsParams, u: f64) -> f64 {
    let c = params.c_ir();
    let (b, al) = (params.beta_bar, params.alpha);
    let lin = b * c - u;
    let s = (lin * lin + 4.0 * u * c * (b - al)).sqrt();
    if lin > 0.0 {
        2.0 * (b - al) / (lin + s)
    } else {
        (s - lin) / (2.0 * u * c)
    }
}

pub fn analyze_ibin(params: &SirsParams, spec: &ScenarioSpec) -> Result<EquilibriumReport> {
    spec.require(ScenarioKind::IBIN)?;
    let (b, al, u, li) = (params.beta_bar, params.alpha, spec.u, params.l_i);
    let c = params.c_ir();
    let mut conditions = BTreeMap::new();
    conditions.insert("beta_0", b);
    conditions.insert("alpha", al);
    conditions.insert("c_ir", c);
    conditions.insert("u", u);
    conditions.insert("gpa_margin", u - al * c);
    let bendixson = (u / 2.0).max(al) < b && b < al + li;

    let (la, interior, regime) = if b < al {
        let (regime, interior) = subthreshold(params, spec, u < al * c);
        (true, interior, regime)
    } else if b > al {
        let i = ibin_interior(params, u);
        let upper = 1.0 / c;
        if !(i > 0.0 && i <= upper) {
            return Err(Error::InconsistentRoot { root: i, upper });
        }
        let lhs = u * (1.0 - i - c * i);
        let rhs = b + li / i;
        conditions.insert("oscillation_drive", lhs);
        conditions.insert("oscillation_damping", rhs);
        let regime = if lhs <= rhs {
            AsymptoticRegime::CoP
        } else {
            AsymptoticRegime::PCo
        };
        (false, Some(state_at(i, params)), regime)
    } else {
        (false, None, AsymptoticRegime::Degenerate)
    };
    Ok(finish_report(
        ScenarioKind::IBIN,
        params,
        spec,
        la,
        interior,
        regime,
        conditions,
        Some(bendixson),
        false,
    ))
}

/// Numerical analysis for the combined scenario: roots located by sign scan
/// and bisection, stability from a finite-difference Jacobian.
pub fn analyze_combined(params: &SirsParams, spec: &ScenarioSpec) -> Result<EquilibriumReport> {
    spec.require(ScenarioKind::Combined)?;
    spec.require_nonnegative_eta()?;
    let beta_0 = beta_of_i(0.0, params.beta_bar, spec);
    let al = params.alpha;
    let roots = scan_interior_roots(params, spec);
    let mut conditions = BTreeMap::new();
    conditions.insert("beta_0", beta_0);
    conditions.insert("alpha", al);
    conditions.insert("c_ir", params.c_ir());
    conditions.insert("interior_count", roots.len() as f64);

    let interior = roots
        .iter()
        .find(|(_, down)| *down)
        .map(|(i, _)| state_at(*i, params));
    let regime = if beta_0 == al {
        AsymptoticRegime::Degenerate
    } else {
        match interior {
            Some(eq) => {
                let jac = numerical_jacobian(eq, params, spec);
                conditions.insert("jacobian_trace", jac[0][0] + jac[1][1]);
                regime_by_trace(&jac)
            }
            None => AsymptoticRegime::GPA,
        }
    };
    let interior = if regime == AsymptoticRegime::Degenerate {
        None
    } else {
        interior
    };
    Ok(finish_report(
        ScenarioKind::Combined,
        params,
        spec,
        beta_0 < al,
        interior,
        regime,
        conditions,
        None,
        true,
    ))
}

/// Dispatches to the analysis matching `spec.kind`.
pub fn analyze(params: &SirsParams, spec: &ScenarioSpec) -> Result<EquilibriumReport> {
    match spec.kind {
        ScenarioKind::SirsOnly => analyze_sirs(params, spec),
        ScenarioKind::I3N => analyze_i3n(params, spec),
        ScenarioKind::IBIN => analyze_ibin(params, spec),
        ScenarioKind::Combined => analyze_combined(params, spec),
    }
}

/// Consolidated ODE as a vector field over `(i, r)`.
#[derive(Debug, Clone, Copy)]
pub struct CoupledField {
    pub params: SirsParams,
    pub spec: ScenarioSpec,
}

impl VectorField<2> for CoupledField {
    fn eval(&self, _t: f64, x: &[f64; 2], _mode: u8) -> [f64; 2] {
        coupled_rhs(EpiState::from_array(*x), &self.params, &self.spec)
    }
}

/// Epidemic trajectory annotated with the infection rate at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiTrajectory {
    pub traj: Trajectory<2>,
    pub beta: Vec<f64>,
}

impl EpiTrajectory {
    pub fn state(&self, k: usize) -> EpiState {
        EpiState::from_array(self.traj.states[k])
    }

    pub fn last_state(&self) -> EpiState {
        EpiState::from_array(*self.traj.last().expect("trajectory has samples"))
    }
}

fn check_init(init: EpiState) -> Result<()> {
    if !init.in_simplex(0.0) || !init.i.is_finite() || !init.r.is_finite() {
        return Err(invalid(
            "init",
            format!("({}, {}) is outside the simplex i, r >= 0, i + r <= 1", init.i, init.r),
        ));
    }
    Ok(())
}

pub fn simulate_coupled(
    params: &SirsParams,
    spec: &ScenarioSpec,
    init: EpiState,
    cfg: &IntegratorConfig,
) -> Result<EpiTrajectory> {
    check_init(init)?;
    let field = CoupledField {
        params: *params,
        spec: *spec,
    };
    let traj = integrate(&field, init.to_array(), cfg)?;
    let beta = traj
        .states
        .iter()
        .map(|x| beta_of_i(x[0], params.beta_bar, spec))
        .collect();
    Ok(EpiTrajectory { traj, beta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleOutcome {
    Periodic,
    Converged,
    Undecided,
}

impl CycleOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleOutcome::Periodic => "periodic",
            CycleOutcome::Converged => "converged",
            CycleOutcome::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleReport {
    pub outcome: CycleOutcome,
    pub is_periodic: bool,
    pub period: f64,
    pub amplitude_i: f64,
    pub n_cycles_observed: usize,
    /// `|x_N - x_{N-1}| / dt` at the end of the run.
    pub terminal_rate: f64,
}

/// Minimum samples [`detect_cycle`] accepts.
pub const MIN_CYCLE_SAMPLES: usize = 1000;
/// Relative spread allowed between the last three periods and amplitudes.
pub const CYCLE_AGREEMENT: f64 = 0.02;
/// Terminal derivative norm below which a run counts as converged.
pub const CONVERGED_RATE: f64 = 1e-8;

fn relative_spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if mean == 0.0 {
        f64::INFINITY
    } else {
        (hi - lo) / mean.abs()
    }
}

/// Classifies the tail of an epidemic trajectory as periodic, converged or
/// undecided. Cycles are delimited by upward crossings of `i` through the
/// median of the trailing half of the run.
pub fn detect_cycle(traj: &Trajectory<2>) -> Result<CycleReport> {
    let n = traj.len();
    if n < MIN_CYCLE_SAMPLES {
        return Err(invalid(
            "trajectory",
            format!("need at least {MIN_CYCLE_SAMPLES} samples, got {n}"),
        ));
    }
    let a = traj.states[n - 2];
    let b = traj.states[n - 1];
    let terminal_rate = (b[0] - a[0]).hypot(b[1] - a[1]) / traj.dt;

    let start = n / 2;
    let i: Vec<f64> = traj.states[start..].iter().map(|x| x[0]).collect();
    let mut sorted = i.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];

    let mut crossings = Vec::new();
    for k in 0..i.len() - 1 {
        if i[k] < median && i[k + 1] >= median {
            let w = (median - i[k]) / (i[k + 1] - i[k]);
            crossings.push((k, traj.times[start + k] + w * traj.dt));
        }
    }
    let intervals: Vec<f64> = crossings.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let amplitudes: Vec<(f64, f64)> = crossings
        .windows(2)
        .map(|w| {
            let seg = &i[w[0].0..=w[1].0 + 1];
            let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
            (hi, hi - lo)
        })
        .collect();

    let n_cycles_observed = intervals.len();
    let mut report = CycleReport {
        outcome: CycleOutcome::Undecided,
        is_periodic: false,
        period: 0.0,
        amplitude_i: amplitudes.last().map_or(0.0, |a| a.1),
        n_cycles_observed,
        terminal_rate,
    };
    if terminal_rate < CONVERGED_RATE {
        report.outcome = CycleOutcome::Converged;
        return Ok(report);
    }
    if n_cycles_observed >= 3 {
        let last = &intervals[n_cycles_observed - 3..];
        let amps: Vec<f64> = amplitudes[n_cycles_observed - 3..].iter().map(|a| a.1).collect();
        let peaks: Vec<f64> = amplitudes[n_cycles_observed - 3..].iter().map(|a| a.0).collect();
        let scale = median.abs().max(1e-12);
        if relative_spread(last) <= CYCLE_AGREEMENT
            && relative_spread(&amps) <= CYCLE_AGREEMENT
            && relative_spread(&peaks) <= CYCLE_AGREEMENT
            && amps.iter().all(|&a| a > 1e-6 * scale)
        {
            report.outcome = CycleOutcome::Periodic;
            report.is_periodic = true;
            report.period = last.iter().sum::<f64>() / 3.0;
        }
    }
    Ok(report)
}

/// Step sizes and news settings of the two-timescale simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    /// Epidemic time between two news iterates.
    pub fast_dt: f64,
    /// Epidemic (Euler) step.
    pub slow_dt: f64,
    pub horizon: f64,
    /// Step size of the news tracking iterate.
    pub eps: f64,
    pub news_init: NewsState,
    pub sampling: OffspringSampling,
}

impl HybridConfig {
    pub fn fast_steps_per_slow(&self) -> Result<usize> {
        if !(self.fast_dt > 0.0 && self.slow_dt > self.fast_dt) {
            return Err(invalid(
                "fast_dt",
                format!("need 0 < fast_dt < slow_dt, got {} and {}", self.fast_dt, self.slow_dt),
            ));
        }
        let ratio = self.slow_dt / self.fast_dt;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-9 * m {
            return Err(invalid(
                "slow_dt",
                format!("slow_dt / fast_dt = {ratio} is not an integer"),
            ));
        }
        Ok(m as usize)
    }
}

/// One epidemic sample of a hybrid run together with the news activity of
/// the fast window that preceded it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSample {
    pub t: f64,
    pub state: EpiState,
    /// Infection rate used for the slow step leaving this sample.
    pub beta: f64,
    /// News influence level (max theta of the last completed cycle, or the fallback).
    pub influence: f64,
    /// Largest `theta` and `psi` seen during the preceding fast window.
    pub window_theta_max: f64,
    pub window_psi_max: f64,
    pub completed_cycles: usize,
}

/// Two-timescale simulation: stochastic news iterates at the fast scale,
/// explicit Euler epidemic steps at the slow scale, the latter driven by the
/// peak total-copy fraction of the last completed news cycle.
pub fn simulate_hybrid(
    params: &SirsParams,
    spec: &ScenarioSpec,
    init: EpiState,
    cfg: &HybridConfig,
    seed: u64,
) -> Result<Vec<HybridSample>> {
    check_init(init)?;
    let per_slow = cfg.fast_steps_per_slow()?;
    if !(cfg.eps >= 0.0) {
        return Err(invalid("eps", "news step must be nonnegative"));
    }
    let slow = IntegratorConfig::with_method(cfg.slow_dt, cfg.horizon, Method::Euler)?;
    let n = slow.n_steps();

    let law = spec.news;
    let mut source = OffspringSource::new(seed, cfg.sampling);
    let mut tracker = CycleTracker::new(law.delta_psi);
    let mut news = cfg.news_init;
    let mut x = init;
    let mut out = Vec::with_capacity(n + 1);

    for k in 0..=n {
        let eta = eta_of_i(x.i, spec);
        let mut theta_max = f64::NEG_INFINITY;
        let mut psi_max = f64::NEG_INFINITY;
        for _ in 0..per_slow {
            let regime = classify_regime(news, &law);
            tracker.observe(news, regime);
            let xi = source.draw(news.theta, eta, &law);
            news = step_tracking_real(news, xi, cfg.eps, &law);
            theta_max = theta_max.max(news.theta);
            psi_max = psi_max.max(news.psi);
        }
        let influence = tracker
            .last_completed()
            .unwrap_or_else(|| theta_star(eta, law.a));
        let beta = params.beta_bar + spec.influence(x.i) * influence;
        let t = k as f64 * cfg.slow_dt;
        out.push(HybridSample {
            t,
            state: x,
            beta,
            influence,
            window_theta_max: theta_max,
            window_psi_max: psi_max,
            completed_cycles: tracker.completed(),
        });
        if k == n {
            break;
        }
        let p = *params;
        let field = Smooth(move |_t: f64, s: &[f64; 2]| epi_rhs(EpiState::from_array(*s), beta, &p));
        let next = step(&field, Method::Euler, t, &x.to_array(), cfg.slow_dt, 0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: (k + 1) as f64 * cfg.slow_dt,
            });
        }
        x = EpiState::from_array(next);
    }
    Ok(out)
}
