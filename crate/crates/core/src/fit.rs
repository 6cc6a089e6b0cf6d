//! Piecewise-constant influence schedules and their fit to an observed
//! infection curve.
//!
//! Segment `k` of a schedule covers `[b_{k-1}, b_k)` with `b_{-1} = 0` and
//! the last segment open-ended. A step of the integrator uses the level in
//! force at the step's start time.

use crate::coupled::{CoupledField, EpiTrajectory, ScenarioKind, ScenarioSpec};
use crate::error::{invalid, Error, Result};
use crate::numerics::{golden_section_min, step, IntegratorConfig, Trajectory};
use crate::sirs::{EpiState, SirsParams};

/// Bracket width at which the per-segment golden-section search stops.
/// Well inside the `1e-6` accuracy asked of fitted levels, so noise-free
/// targets are reproduced to near machine precision.
pub const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl HistoricalSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        for (row, (&t, &v)) in times.iter().zip(&values).enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidSeries(format!("row {row}: time {t} must be finite and >= 0")));
            }
            if row > 0 && t <= times[row - 1] {
                return Err(Error::InvalidSeries(format!("row {row}: times must be strictly increasing")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSeries(format!("row {row}: value {v} outside [0, 1]")));
            }
        }
        Ok(Self { times, values })
    }

    /// Samples `traj` component `i` at `times`.
    pub fn from_trajectory(traj: &Trajectory<2>, times: Vec<f64>) -> Result<Self> {
        let values = times.iter().map(|&t| traj.sample_at(t)[0].clamp(0.0, 1.0)).collect();
        Self::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSchedule {
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
}

impl InfluenceSchedule {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let s = Self { breakpoints, levels };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(level: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            levels: vec![level],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.breakpoints.len() + 1 {
            return Err(invalid(
                "levels",
                format!(
                    "{} breakpoints need {} levels, got {}",
                    self.breakpoints.len(),
                    self.breakpoints.len() + 1,
                    self.levels.len()
                ),
            ));
        }
        check_breakpoints(&self.breakpoints)?;
        if let Some(v) = self.levels.iter().find(|v| !v.is_finite()) {
            return Err(invalid("levels", format!("level {v} is not finite")));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.levels.len()
    }

    /// Level in force at time `t`.
    pub fn level_at(&self, t: f64) -> f64 {
        self.levels[self.breakpoints.iter().filter(|&&b| b <= t).count()]
    }

    /// `(start, end)` of segment `k`; the last end is `horizon`.
    pub fn segment_bounds(&self, k: usize, horizon: f64) -> (f64, f64) {
        let start = if k == 0 { 0.0 } else { self.breakpoints[k - 1] };
        let end = self.breakpoints.get(k).copied().unwrap_or(horizon);
        (start, end)
    }
}

fn check_breakpoints(b: &[f64]) -> Result<()> {
    for (k, &x) in b.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            return Err(invalid("breakpoints", format!("breakpoint {x} must be positive")));
        }
        if k > 0 && x <= b[k - 1] {
            return Err(invalid("breakpoints", "must be strictly increasing"));
        }
    }
    Ok(())
}

fn require_overridable(spec: &ScenarioSpec) -> Result<()> {
    match spec.kind {
        ScenarioKind::I3N | ScenarioKind::Combined => Ok(()),
        other => Err(Error::WrongScenario {
            expected: ScenarioKind::I3N.as_str(),
            got: other.as_str(),
        }),
    }
}

/// First grid index whose time is at or after `t`, allowing for rounding
/// in breakpoints that sit on the grid.
fn grid_index(t: f64, dt: f64) -> usize {
    let pos = t / dt;
    let nearest = pos.round();
    if (pos - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        pos.ceil() as usize
    }
}

/// Grid index where each segment starts.
fn segment_starts(breakpoints: &[f64], dt: f64) -> Vec<usize> {
    std::iter::once(0)
        .chain(breakpoints.iter().map(|&b| grid_index(b, dt)))
        .collect()
}

/// Advances `x` through steps `from..to` at a fixed `w_bar`, appending each
/// new state to `out`.
#[allow(clippy::too_many_arguments)]
fn advance(
    params: &SirsParams,
    spec: &ScenarioSpec,
    w_bar: f64,
    cfg: &IntegratorConfig,
    mut x: [f64; 2],
    from: usize,
    to: usize,
    out: &mut Vec<[f64; 2]>,
) -> Result<()> {
    let field = CoupledField {
        params: *params,
        spec: ScenarioSpec { w_bar, ..*spec },
    };
    for k in from..to {
        let t = k as f64 * cfg.dt;
        x = step(&field, cfg.method, t, &x, cfg.dt, 0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: (k + 1) as f64 * cfg.dt,
            });
        }
        out.push(x);
    }
    Ok(())
}

/// Coupled simulation with `w_bar` following `schedule`.
pub fn simulate_with_schedule(
    params: &SirsParams,
    spec: &ScenarioSpec,
    schedule: &InfluenceSchedule,
    init: EpiState,
    cfg: &IntegratorConfig,
) -> Result<EpiTrajectory> {
    require_overridable(spec)?;
    schedule.validate()?;
    cfg.validate()?;
    let n = cfg.n_steps();
    let starts = segment_starts(&schedule.breakpoints, cfg.dt);
    let mut states = Vec::with_capacity(n + 1);
    states.push(init.to_array());
    for (k, &level) in schedule.levels.iter().enumerate() {
        let from = starts[k].min(n);
        let to = starts.get(k + 1).copied().unwrap_or(n).min(n);
        let x = *states.last().expect("initial state present");
        advance(params, spec, level, cfg, x, from, to, &mut states)?;
    }
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).collect();
    let beta = times
        .iter()
        .zip(&states)
        .map(|(&t, x)| {
            let s = ScenarioSpec {
                w_bar: schedule.level_at(t),
                ..*spec
            };
            crate::coupled::beta_of_i(x[0], params.beta_bar, &s)
        })
        .collect();
    Ok(EpiTrajectory {
        traj: Trajectory {
            dt: cfg.dt,
            modes: vec![0; times.len()],
            times,
            states,
        },
        beta,
    })
}

/// Linear interpolation of `i` over grid states.
fn interp_i(states: &[[f64; 2]], dt: f64, t: f64) -> f64 {
    let pos = t / dt;
    let k = (pos.floor() as usize).min(states.len() - 1);
    if k + 1 >= states.len() {
        return states[k][0];
    }
    let w = pos - k as f64;
    states[k][0] + w * (states[k + 1][0] - states[k][0])
}

/// Root mean square error of a trajectory against the whole series.
pub fn series_rmse(series: &HistoricalSeries, traj: &Trajectory<2>) -> f64 {
    let sse: f64 = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, &v)| {
            let d = traj.sample_at(t)[0] - v;
            d * d
        })
        .sum();
    (sse / series.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub schedule: InfluenceSchedule,
    pub rmse: f64,
    /// RMSE over the samples of each segment at the chosen level.
    pub segment_rmse: Vec<f64>,
    /// Same, with the segment held at level zero.
    pub baseline_rmse: Vec<f64>,
}

/// Search interval of every segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelBounds {
    pub w_min: f64,
    pub w_max: f64,
}

impl LevelBounds {
    pub fn new(w_min: f64, w_max: f64) -> Result<Self> {
        if !(w_min.is_finite() && w_max.is_finite() && w_min < w_max) {
            return Err(invalid("bounds", format!("need finite w_min < w_max, got [{w_min}, {w_max}]")));
        }
        Ok(Self { w_min, w_max })
    }
}

/// Sequential greedy fit: each segment's level minimises the squared error
/// over the samples falling in that segment, earlier levels held fixed.
/// The simulation horizon is `cfg.max_time` and must cover the series.
pub fn fit_schedule(
    series: &HistoricalSeries,
    params: &SirsParams,
    spec: &ScenarioSpec,
    breakpoints: &[f64],
    bounds: LevelBounds,
    init: EpiState,
    cfg: &IntegratorConfig,
) -> Result<FitReport> {
    let windows = vec![(bounds.w_min, bounds.w_max); breakpoints.len() + 1];
    fit_in_windows(series, params, spec, breakpoints, &windows, init, cfg)
}

/// Refits starting from `initial`, searching each level within
/// `half_width` of its previous value (clipped to `bounds`).
#[allow(clippy::too_many_arguments)]
pub fn refit_schedule(
    series: &HistoricalSeries,
    params: &SirsParams,
    spec: &ScenarioSpec,
    initial: &InfluenceSchedule,
    bounds: LevelBounds,
    half_width: f64,
    init: EpiState,
    cfg: &IntegratorConfig,
) -> Result<FitReport> {
    initial.validate()?;
    let windows: Vec<(f64, f64)> = initial
        .levels
        .iter()
        .map(|&w| ((w - half_width).max(bounds.w_min), (w + half_width).min(bounds.w_max)))
        .collect();
    fit_in_windows(series, params, spec, &initial.breakpoints, &windows, init, cfg)
}

fn fit_in_windows(
    series: &HistoricalSeries,
    params: &SirsParams,
    spec: &ScenarioSpec,
    breakpoints: &[f64],
    windows: &[(f64, f64)],
    init: EpiState,
    cfg: &IntegratorConfig,
) -> Result<FitReport> {
    require_overridable(spec)?;
    check_breakpoints(breakpoints)?;
    cfg.validate()?;
    let n = cfg.n_steps();
    let horizon = n as f64 * cfg.dt;
    let last = *series.times.last().expect("validated series is nonempty");
    if last > horizon * (1.0 + 1e-12) {
        return Err(invalid(
            "max_time",
            format!("horizon {horizon} ends before the last sample at {last}"),
        ));
    }
    if let Some(&b) = breakpoints.last() {
        if b >= last {
            return Err(invalid("breakpoints", format!("breakpoint {b} lies beyond the series")));
        }
    }
    for &(lo, hi) in windows {
        if !(lo <= hi) {
            return Err(invalid("bounds", format!("empty search window [{lo}, {hi}]")));
        }
    }

    let starts = segment_starts(breakpoints, cfg.dt);
    let n_seg = breakpoints.len() + 1;
    let mut prefix: Vec<[f64; 2]> = vec![init.to_array()];
    let mut levels = Vec::with_capacity(n_seg);
    let mut segment_rmse = Vec::with_capacity(n_seg);
    let mut baseline_rmse = Vec::with_capacity(n_seg);

    for k in 0..n_seg {
        let seg_start = if k == 0 { 0.0 } else { breakpoints[k - 1] };
        let seg_end = breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
        let samples: Vec<(f64, f64)> = series
            .times
            .iter()
            .zip(&series.values)
            .filter(|(&t, _)| t >= seg_start && t < seg_end)
            .map(|(&t, &v)| (t, v))
            .collect();
        let from = starts[k].min(n);
        let to = starts.get(k + 1).copied().unwrap_or(n).min(n);
        // Interpolating the last sample of a segment may need one state past its end.
        let run_to = (to + 1).min(n);
        let x0 = *prefix.last().expect("prefix holds the initial state");

        let mut scratch = Vec::with_capacity(run_to - from + 1);
        let mut cost = |w: f64| -> f64 {
            scratch.clear();
            scratch.extend_from_slice(&prefix);
            if advance(params, spec, w, cfg, x0, from, run_to, &mut scratch).is_err() {
                return f64::INFINITY;
            }
            let sse: f64 = samples
                .iter()
                .map(|&(t, v)| {
                    let d = interp_i(&scratch, cfg.dt, t) - v;
                    d * d
                })
                .sum();
            if sse.is_finite() {
                sse
            } else {
                f64::INFINITY
            }
        };

        let (lo, hi) = windows[k];
        let (mut best, mut best_cost) = if lo < hi {
            golden_section_min(&mut cost, lo, hi, LEVEL_TOL)
        } else {
            (lo, cost(lo))
        };
        let zero_cost = cost(0.0);
        if (lo..=hi).contains(&0.0) && zero_cost < best_cost {
            best = 0.0;
            best_cost = zero_cost;
        }
        if !best_cost.is_finite() {
            return Err(Error::FitFailed { segment: k });
        }
        let m = samples.len().max(1) as f64;
        segment_rmse.push((best_cost / m).sqrt());
        baseline_rmse.push((zero_cost / m).sqrt());
        levels.push(best);
        advance(params, spec, best, cfg, x0, from, to, &mut prefix)?;
    }

    let schedule = InfluenceSchedule::new(breakpoints.to_vec(), levels)?;
    let traj = Trajectory {
        dt: cfg.dt,
        times: (0..prefix.len()).map(|k| k as f64 * cfg.dt).collect(),
        modes: vec![0; prefix.len()],
        states: prefix,
    };
    Ok(FitReport {
        rmse: series_rmse(series, &traj),
        schedule,
        segment_rmse,
        baseline_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::OffspringLaw;
    use crate::coupled::simulate_coupled;
    use crate::sirs::{check_b2_invariance, simulate_sirs};
    use approx::assert_abs_diff_eq;

    fn news() -> OffspringLaw {
        OffspringLaw::new(10.0, 0.7, 0.2, 1.2, 20, 2.0, 0.05, 0.1).unwrap()
    }

    fn desk() -> (SirsParams, ScenarioSpec) {
        (
            SirsParams::new(0.2, 0.1, 0.2, 0.01).unwrap(),
            ScenarioSpec::i3n(0.0, news()).unwrap(),
        )
    }

    fn sample_times(end: f64, every: f64) -> Vec<f64> {
        let n = (end / every).round() as usize;
        (0..=n).map(|k| k as f64 * every).collect()
    }

    #[test]
    fn schedule_validation_and_lookup() {
        assert!(InfluenceSchedule::new(vec![1.0], vec![0.1]).is_err());
        assert!(InfluenceSchedule::new(vec![2.0, 1.0], vec![0.1, 0.2, 0.3]).is_err());
        let s = InfluenceSchedule::new(vec![1.0, 2.0], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(s.level_at(0.5), 0.1);
        assert_eq!(s.level_at(1.0), 0.2);
        assert_eq!(s.level_at(7.0), 0.3);
        assert_eq!(s.segment_bounds(2, 9.0), (2.0, 9.0));
    }

    #[test]
    fn series_validation() {
        assert!(HistoricalSeries::new(vec![0.0, 1.0], vec![0.1]).is_err());
        assert!(HistoricalSeries::new(vec![0.0, 0.0], vec![0.1, 0.2]).is_err());
        assert!(HistoricalSeries::new(vec![0.0, 1.0], vec![0.1, 1.2]).is_err());
        assert!(HistoricalSeries::new(vec![0.0, 1.0], vec![0.1, 0.2]).is_ok());
    }

    #[test]
    fn single_segment_matches_coupled_run() {
        let (p, spec) = desk();
        let spec = ScenarioSpec { w_bar: 0.3, ..spec };
        let cfg = IntegratorConfig::new(0.01, 20.0).unwrap();
        let init = EpiState::new(1e-3, 0.0);
        let a = simulate_with_schedule(&p, &spec, &InfluenceSchedule::constant(0.3), init, &cfg).unwrap();
        let b = simulate_coupled(&p, &spec, init, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_level_matches_sirs() {
        let (p, spec) = desk();
        let cfg = IntegratorConfig::new(0.01, 20.0).unwrap();
        let init = EpiState::new(1e-3, 0.0);
        let s = InfluenceSchedule::new(vec![5.0, 10.0], vec![0.0; 3]).unwrap();
        let a = simulate_with_schedule(&p, &spec, &s, init, &cfg).unwrap();
        let b = simulate_sirs(&p, init, &cfg).unwrap();
        assert_eq!(a.traj.states, b.states);
    }

    #[test]
    fn small_scale_parameters_stay_in_simplex() {
        let p = SirsParams::new(0.0002, 0.0001, 0.2, 0.01).unwrap();
        let spec = ScenarioSpec::i3n(0.0, news()).unwrap();
        let s = InfluenceSchedule::new(vec![100.0, 200.0], vec![0.4, -0.3, 0.1]).unwrap();
        let cfg = IntegratorConfig::new(0.1, 300.0).unwrap();
        let run = simulate_with_schedule(&p, &spec, &s, EpiState::new(1e-5, 0.0), &cfg).unwrap();
        assert!(run.traj.states.iter().all(|x| x.iter().all(|v| v.is_finite())));
        assert!(check_b2_invariance(&run.traj).holds);
    }

    #[test]
    fn schedule_rejected_for_fixed_influence_scenarios() {
        let p = SirsParams::new(0.2, 0.1, 0.2, 0.01).unwrap();
        let spec = ScenarioSpec::ibin(0.1, &news()).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0).unwrap();
        let r = simulate_with_schedule(&p, &spec, &InfluenceSchedule::constant(0.0), EpiState::new(0.1, 0.0), &cfg);
        assert!(matches!(r, Err(Error::WrongScenario { .. })));
    }

    #[test]
    fn self_fit_single_segment() {
        let (p, spec) = desk();
        let cfg = IntegratorConfig::new(0.01, 30.0).unwrap();
        let init = EpiState::new(1e-3, 0.0);
        let truth = simulate_with_schedule(&p, &spec, &InfluenceSchedule::constant(0.25), init, &cfg).unwrap();
        let series = HistoricalSeries::from_trajectory(&truth.traj, sample_times(30.0, 0.5)).unwrap();
        let rep = fit_schedule(&series, &p, &spec, &[], LevelBounds::new(-1.0, 1.0).unwrap(), init, &cfg).unwrap();
        assert_abs_diff_eq!(rep.schedule.levels[0], 0.25, epsilon = 1e-4);
        assert!(rep.rmse < 1e-8, "rmse {}", rep.rmse);
    }

    #[test]
    fn three_segment_recovery_and_refit() {
        let (p, spec) = desk();
        let cfg = IntegratorConfig::new(0.01, 60.0).unwrap();
        let init = EpiState::new(1e-3, 0.0);
        let truth_sched = InfluenceSchedule::new(vec![20.0, 40.0], vec![0.4, -0.3, 0.1]).unwrap();
        let truth = simulate_with_schedule(&p, &spec, &truth_sched, init, &cfg).unwrap();
        let series = HistoricalSeries::from_trajectory(&truth.traj, sample_times(60.0, 0.5)).unwrap();
        let bounds = LevelBounds::new(-1.0, 1.0).unwrap();
        let rep = fit_schedule(&series, &p, &spec, &[20.0, 40.0], bounds, init, &cfg).unwrap();
        for (got, want) in rep.schedule.levels.iter().zip(&truth_sched.levels) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-3);
        }
        assert!(rep.rmse < 1e-4);
        for (fit, base) in rep.segment_rmse.iter().zip(&rep.baseline_rmse) {
            assert!(fit <= base);
        }
        let again = refit_schedule(&series, &p, &spec, &rep.schedule, bounds, 0.05, init, &cfg).unwrap();
        for (a, b) in again.schedule.levels.iter().zip(&rep.schedule.levels) {
            assert!((a - b).abs() < 1e-6);
        }
        let twice = fit_schedule(&series, &p, &spec, &[20.0, 40.0], bounds, init, &cfg).unwrap();
        assert_eq!(twice, rep);
    }

    #[test]
    fn rise_then_suppression_sign_pattern() {
        // Target produced by a plain SIRS whose rate jumps up and then collapses.
        let cfg = IntegratorConfig::new(0.01, 40.0).unwrap();
        let init = EpiState::new(1e-3, 0.0);
        let fast = SirsParams::new(0.45, 0.1, 0.2, 0.01).unwrap();
        let slow = SirsParams::new(0.05, 0.1, 0.2, 0.01).unwrap();
        let head = simulate_sirs(&fast, init, &IntegratorConfig::new(0.01, 20.0).unwrap()).unwrap();
        let mid = EpiState::from_array(*head.last().unwrap());
        let tail = simulate_sirs(&slow, mid, &IntegratorConfig::new(0.01, 20.0).unwrap()).unwrap();
        let times = sample_times(40.0, 0.5);
        let values = times
            .iter()
            .map(|&t| if t < 20.0 { head.sample_at(t)[0] } else { tail.sample_at(t - 20.0)[0] })
            .collect();
        let series = HistoricalSeries::new(times, values).unwrap();
        let (p, spec) = desk();
        let rep = fit_schedule(&series, &p, &spec, &[20.0], LevelBounds::new(-1.0, 1.0).unwrap(), init, &cfg).unwrap();
        assert!(rep.schedule.levels[0] > 0.0);
        assert!(rep.schedule.levels[1] < 0.0);
    }

    #[test]
    fn horizon_must_cover_series() {
        let (p, spec) = desk();
        let series = HistoricalSeries::new(vec![0.0, 10.0], vec![0.001, 0.01]).unwrap();
        let cfg = IntegratorConfig::new(0.01, 5.0).unwrap();
        let r = fit_schedule(&series, &p, &spec, &[], LevelBounds::new(-1.0, 1.0).unwrap(), EpiState::new(1e-3, 0.0), &cfg);
        assert!(r.is_err());
    }
}
