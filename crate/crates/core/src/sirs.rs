//! Uncoupled SIRS dynamics on the simplex `{i, r >= 0, i + r <= 1}`.

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, IntegratorConfig, Smooth, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirsParams {
    pub beta_bar: f64,
    pub alpha: f64,
    pub p_r: f64,
    pub l_i: f64,
}

impl SirsParams {
    pub fn new(beta_bar: f64, alpha: f64, p_r: f64, l_i: f64) -> Result<Self> {
        let p = Self {
            beta_bar,
            alpha,
            p_r,
            l_i,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_bar", self.beta_bar),
            ("alpha", self.alpha),
            ("p_r", self.p_r),
            ("l_i", self.l_i),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.p_r >= 1.0 {
            return Err(invalid("p_r", format!("immunised fraction must be below 1, got {}", self.p_r)));
        }
        Ok(())
    }

    /// `1 + alpha * p_r / l_i`; interior equilibria satisfy `i + r = c * i`.
    pub fn c_ir(&self) -> f64 {
        1.0 + self.alpha * self.p_r / self.l_i
    }

    /// `r*` belonging to an interior `i*`.
    pub fn r_of_i(&self, i: f64) -> f64 {
        self.alpha * self.p_r / self.l_i * i
    }
}

/// Infected and recovered fractions; susceptibles are `1 - i - r`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpiState {
    pub i: f64,
    pub r: f64,
}

impl EpiState {
    pub fn new(i: f64, r: f64) -> Self {
        Self { i, r }
    }

    pub fn in_simplex(&self, tol: f64) -> bool {
        self.i >= -tol && self.r >= -tol && self.i + self.r <= 1.0 + tol
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.i, self.r]
    }

    pub fn from_array(x: [f64; 2]) -> Self {
        Self { i: x[0], r: x[1] }
    }

    pub fn distance(&self, other: &EpiState) -> f64 {
        (self.i - other.i).hypot(self.r - other.r)
    }
}

/// SIRS derivative with an explicit infection rate `beta`. Shared by the
/// coupled model so that a constant `beta` gives bit-identical results.
pub fn epi_rhs(state: EpiState, beta: f64, params: &SirsParams) -> [f64; 2] {
    let EpiState { i, r } = state;
    [
        i * (beta * (1.0 - i - r) - params.alpha),
        i * params.alpha * params.p_r - r * params.l_i,
    ]
}

pub fn sirs_rhs(state: EpiState, params: &SirsParams) -> [f64; 2] {
    epi_rhs(state, params.beta_bar, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SirsEquilibrium {
    DiseaseFree,
    Endemic(EpiState),
}

impl SirsEquilibrium {
    pub fn state(&self) -> EpiState {
        match self {
            SirsEquilibrium::DiseaseFree => EpiState::default(),
            SirsEquilibrium::Endemic(s) => *s,
        }
    }
}

/// Limit of every trajectory started with `i > 0`. Exactly at `beta_bar = alpha`
/// the behaviour is not classified and an error is returned.
pub fn sirs_equilibrium(params: &SirsParams) -> Result<SirsEquilibrium> {
    let (b, a) = (params.beta_bar, params.alpha);
    if b < a {
        Ok(SirsEquilibrium::DiseaseFree)
    } else if b > a {
        let i = (b - a) / (b * params.c_ir());
        Ok(SirsEquilibrium::Endemic(EpiState::new(i, params.r_of_i(i))))
    } else {
        Err(Error::Degenerate(format!("beta_bar = alpha = {a}")))
    }
}

/// Jacobian of the SIRS field at `state`, row-major.
pub fn sirs_jacobian(state: EpiState, params: &SirsParams) -> [[f64; 2]; 2] {
    let b = params.beta_bar;
    [
        [b * (1.0 - state.i - state.r) - params.alpha - b * state.i, -b * state.i],
        [params.alpha * params.p_r, -params.l_i],
    ]
}

pub fn simulate_sirs(params: &SirsParams, init: EpiState, cfg: &IntegratorConfig) -> Result<Trajectory<2>> {
    let p = *params;
    let field = Smooth(move |_t: f64, x: &[f64; 2]| sirs_rhs(EpiState::from_array(*x), &p));
    integrate(&field, init.to_array(), cfg)
}

/// First sample that leaves the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexViolation {
    pub index: usize,
    pub time: f64,
    pub state: EpiState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    pub holds: bool,
    pub tolerance: f64,
    pub first_violation: Option<SimplexViolation>,
}

/// Checks every sample against the simplex with slack `10 * dt^2`.
pub fn check_b2_invariance(traj: &Trajectory<2>) -> InvarianceReport {
    let tolerance = 10.0 * traj.dt * traj.dt;
    let first_violation = traj
        .states
        .iter()
        .enumerate()
        .find(|(_, x)| !EpiState::from_array(**x).in_simplex(tolerance))
        .map(|(index, x)| SimplexViolation {
            index,
            time: traj.times[index],
            state: EpiState::from_array(*x),
        });
    InvarianceReport {
        holds: first_violation.is_none(),
        tolerance,
        first_violation,
    }
}
