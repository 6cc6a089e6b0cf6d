//! TOML run configuration. Every section maps onto a validated core type;
//! sections a command does not use may be omitted.

use std::path::PathBuf;

use infodemic::branching::{NewsState, OffspringLaw, OffspringSampling};
use infodemic::coupled::{HybridConfig, ScenarioKind, ScenarioSpec};
use infodemic::numerics::{IntegratorConfig, Method};
use infodemic::sirs::{EpiState, SirsParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sirs: Option<SirsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news: Option<NewsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news_run: Option<NewsRunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_cycle: Option<LimitCycleSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirsSection {
    pub beta_bar: f64,
    pub alpha: f64,
    pub p_r: f64,
    pub l_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsSection {
    pub eta_bar: f64,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub rho: u32,
    pub c: f64,
    pub delta_psi: f64,
    pub delta_theta: f64,
    /// Accept `eta(0) < 0`; attractiveness is then clamped at zero.
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_negative_eta: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindName {
    SirsOnly,
    I3n,
    Ibin,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: KindName,
    #[serde(default)]
    pub w_bar: f64,
    #[serde(default)]
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub max_time: f64,
    #[serde(default)]
    pub method: MethodName,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub i: f64,
    #[serde(default)]
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingName {
    #[default]
    Binomial,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsRunSection {
    /// Attractiveness; defaults to `eta(infection)` from the news law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infection: Option<f64>,
    pub eps: f64,
    pub n_steps: usize,
    pub psi0: f64,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default)]
    pub sampling: SamplingName,
    #[serde(default = "default_ode_dt")]
    pub ode_dt: f64,
    /// Independent seeds `seed..seed+replicas` summarised on stdout.
    #[serde(default = "one")]
    pub replicas: u64,
}

fn default_ode_dt() -> f64 {
    1e-4
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSection {
    pub fast_dt: f64,
    pub slow_dt: f64,
    pub horizon: f64,
    pub eps: f64,
    #[serde(default = "default_psi0")]
    pub psi0: f64,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default)]
    pub sampling: SamplingName,
}

fn default_psi0() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub w_min: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitCycleSection {
    pub etas: Vec<f64>,
}

fn missing(key: &'static str) -> CliError {
    CliError::Config(format!("missing required key `{key}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks every section that is present against the core invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.sirs.is_some() {
            self.sirs_params()?;
        }
        if self.news.is_some() {
            self.news_law()?;
        }
        if self.scenario.is_some() {
            self.scenario_spec()?;
        }
        if self.integrator.is_some() {
            self.integrator_config()?;
        }
        if self.init.is_some() {
            self.init_state()?;
        }
        Ok(())
    }

    pub fn sirs_params(&self) -> Result<SirsParams, CliError> {
        let s = self.sirs.ok_or_else(|| missing("sirs"))?;
        Ok(SirsParams::new(s.beta_bar, s.alpha, s.p_r, s.l_i)?)
    }

    pub fn news_law(&self) -> Result<OffspringLaw, CliError> {
        let n = self.news.ok_or_else(|| missing("news"))?;
        let law = if n.allow_negative_eta {
            OffspringLaw::new_allowing_negative_eta(n.eta_bar, n.p, n.q, n.a, n.rho, n.c, n.delta_psi, n.delta_theta)
        } else {
            OffspringLaw::new(n.eta_bar, n.p, n.q, n.a, n.rho, n.c, n.delta_psi, n.delta_theta)
        };
        Ok(law?)
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, CliError> {
        let s = self.scenario.ok_or_else(|| missing("scenario"))?;
        let law = self.news_law()?;
        let spec = match s.kind {
            KindName::SirsOnly => ScenarioSpec::new(ScenarioKind::SirsOnly, s.w_bar, s.u, law)?,
            KindName::I3n => ScenarioSpec::new(ScenarioKind::I3N, s.w_bar, s.u, law)?,
            KindName::Ibin => {
                if s.w_bar != 0.0 {
                    return Err(CliError::Config("key `scenario.w_bar` must be 0 for ibin".into()));
                }
                ScenarioSpec::ibin(s.u, &law)?
            }
            KindName::Combined => ScenarioSpec::new(ScenarioKind::Combined, s.w_bar, s.u, law)?,
        };
        Ok(spec)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, CliError> {
        let s = self.integrator.ok_or_else(|| missing("integrator"))?;
        let method = match s.method {
            MethodName::Rk4 => Method::Rk4,
            MethodName::Euler => Method::Euler,
        };
        Ok(IntegratorConfig::with_method(s.dt, s.max_time, method)?)
    }

    pub fn init_state(&self) -> Result<EpiState, CliError> {
        let s = self.init.ok_or_else(|| missing("init"))?;
        let state = EpiState::new(s.i, s.r);
        if !(state.in_simplex(0.0) && s.i.is_finite() && s.r.is_finite()) {
            return Err(CliError::Config(format!(
                "key `init`: ({}, {}) is outside i, r >= 0, i + r <= 1",
                s.i, s.r
            )));
        }
        Ok(state)
    }

    pub fn news_run(&self) -> Result<NewsRunSection, CliError> {
        self.news_run.ok_or_else(|| missing("news_run"))
    }

    /// Attractiveness for a standalone news run.
    pub fn news_eta(&self) -> Result<f64, CliError> {
        let run = self.news_run()?;
        match (run.eta, run.infection) {
            (Some(eta), None) => Ok(eta),
            (None, Some(i)) => Ok(self.news_law()?.eta_clamped(i)),
            (None, None) => Err(missing("news_run.eta")),
            (Some(_), Some(_)) => Err(CliError::Config(
                "keys `news_run.eta` and `news_run.infection` are mutually exclusive".into(),
            )),
        }
    }

    pub fn hybrid_config(&self) -> Result<HybridConfig, CliError> {
        let h = self.hybrid.ok_or_else(|| missing("hybrid"))?;
        let cfg = HybridConfig {
            fast_dt: h.fast_dt,
            slow_dt: h.slow_dt,
            horizon: h.horizon,
            eps: h.eps,
            news_init: NewsState::new(h.psi0, h.theta0),
            sampling: sampling(h.sampling),
        };
        cfg.fast_steps_per_slow()?;
        Ok(cfg)
    }

    pub fn fit_section(&self) -> Result<&FitSection, CliError> {
        self.fit.as_ref().ok_or_else(|| missing("fit"))
    }

    pub fn limit_cycle_section(&self) -> Result<&LimitCycleSection, CliError> {
        self.limit_cycle.as_ref().ok_or_else(|| missing("limit_cycle"))
    }
}

pub fn sampling(s: SamplingName) -> OffspringSampling {
    match s {
        SamplingName::Binomial => OffspringSampling::Binomial,
        SamplingName::Mean => OffspringSampling::Mean,
    }
}
