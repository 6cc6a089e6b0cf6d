//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use infodemic::branching::{mean_offspring, NewsState, OffspringLaw, OffspringSampling, Regime};
use infodemic::coupled::*;
use infodemic::fit::{fit_schedule, simulate_with_schedule, HistoricalSeries, InfluenceSchedule, LevelBounds};
use infodemic::news_ode::{
    closed_form_regular, closed_form_replacement, cycle_maxima, limit_cycle, stochastic_ode_gap, theta_star,
    GapExperiment, NewsField,
};
use infodemic::numerics::{integrate, IntegratorConfig, Smooth};
use infodemic::sirs::{check_b2_invariance, simulate_sirs, sirs_equilibrium, sirs_rhs, EpiState, SirsParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn news_law() -> OffspringLaw {
    OffspringLaw::new(10.0, 0.9, 0.2, 1.2, 20, 2.0, 0.05, 0.1).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, i_min: f64) -> EpiState {
    let i = rng.random_range(i_min..0.9);
    let r = rng.random_range(0.0..1.0 - i);
    EpiState::new(i, r)
}

fn ode_approximation() -> Outcome {
    let start = Instant::now();
    let law = news_law();
    let eta = law.eta_at(1.0);
    let gaps = |horizon: f64| -> Vec<f64> {
        [0.02, 0.01, 0.005]
            .iter()
            .map(|&eps| {
                let exp = GapExperiment {
                    eta,
                    eps,
                    horizon,
                    init: NewsState::new(0.1, 0.0),
                    threshold: 0.1,
                    sampling: OffspringSampling::Binomial,
                    ode_dt: 1e-4,
                };
                stochastic_ode_gap(&law, &exp, 100).unwrap().mean
            })
            .collect()
    };
    let first_cycle = gaps(2.0);
    let longer = gaps(5.0);
    let secs = start.elapsed().as_secs_f64();
    let monotone = first_cycle.windows(2).all(|w| w[1] <= w[0]);
    check(
        monotone && secs < 60.0,
        format!(
            "mean sup-gap over [0, 2] for eps 0.02/0.01/0.005: {:.4} {:.4} {:.4}; over [0, 5]: {:.4} {:.4} {:.4}; {:.1} s",
            first_cycle[0], first_cycle[1], first_cycle[2], longer[0], longer[1], longer[2], secs
        ),
    )
}

fn theta_limit() -> Outcome {
    let sets = [(11.0, 1.2), (8.0, 1.2), (15.0, 1.2), (6.0, 1.0), (20.0, 2.0), (10.0, 2.5)];
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    for (eta, a) in sets {
        let law = OffspringLaw::constant(eta, a, 20, 2.0, 0.05, 0.1).unwrap();
        let lc = limit_cycle(eta, &law).map_err(|e| format!("eta {eta}: {e}"))?;
        let cfg = IntegratorConfig::new(1e-4, 100.0).unwrap();
        let traj = integrate(&NewsField { law, eta }, [0.1, 0.0], &cfg).unwrap();
        let states: Vec<NewsState> = traj.states.iter().map(|x| NewsState::from_array(*x)).collect();
        let regimes: Vec<Regime> = traj.modes.iter().map(|&m| if m == 1 { Regime::Replacement } else { Regime::Regular }).collect();
        let maxima = cycle_maxima(&states, &regimes, law.delta_psi);
        let observed = *maxima.last().ok_or(format!("eta {eta}: no completed cycle"))?;
        worst = worst.max((lc.theta_02 - observed).abs());
        let gap = (lc.theta_02 - theta_star(eta, a)).abs();
        bound_ok &= gap <= lc.transient_bound(&law) * (1.0 + 1e-9) + 1e-15;
    }
    check(
        worst < 1e-4 && bound_ok,
        format!("{} sets, worst |theta_02 - ODE cycle max| = {worst:.2e}, transient bound holds: {bound_ok}", sets.len()),
    )
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = IntegratorConfig::new(1e-4, 5.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let eta = rng.random_range(1.5..15.0);
        let a = rng.random_range(0.2..3.0);
        let c = rng.random_range(0.5..3.0);
        let dpsi = rng.random_range(0.01..0.2);
        let dtheta = rng.random_range(0.05..0.4);
        let law = OffspringLaw::constant(eta, a, 20, c, dpsi, dtheta).unwrap();

        let init = NewsState::new(rng.random_range(0.0..dpsi), rng.random_range(dtheta..1.0));
        let repl = integrate(&Smooth(|_t: f64, x: &[f64; 2]| [-x[0], -c * x[1]]), init.to_array(), &cfg).unwrap();
        for (t, x) in repl.times.iter().zip(&repl.states) {
            let cf = closed_form_replacement(init, *t, &law);
            worst = worst.max((cf.psi - x[0]).abs()).max((cf.theta - x[1]).abs());
        }

        let psi0 = rng.random_range(0.0..dpsi);
        let reg = integrate(
            &Smooth(|_t: f64, x: &[f64; 2]| {
                let m = mean_offspring(x[1], eta, &law);
                [m - 1.0 - x[0], m - x[1]]
            }),
            [psi0, dtheta],
            &cfg,
        )
        .unwrap();
        for (t, x) in reg.times.iter().zip(&reg.states) {
            let cf = closed_form_regular(psi0, *t, eta, &law);
            worst = worst.max((cf.psi - x[0]).abs()).max((cf.theta - x[1]).abs());
        }
    }
    check(worst < 1e-6, format!("20 random sets, worst closed-form vs RK4 deviation on [0, 5] = {worst:.2e}"))
}

fn sirs_equilibria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cfg = IntegratorConfig::new(0.05, 5000.0).unwrap();
    let (mut worst_end, mut worst_free) = (0.0f64, 0.0f64);
    let mut invariant = true;
    for k in 0..20 {
        let alpha = rng.random_range(0.1..0.4);
        let beta = if k % 2 == 0 {
            alpha * rng.random_range(1.2..3.0)
        } else {
            alpha * rng.random_range(0.2..0.8)
        };
        let p = SirsParams::new(beta, alpha, rng.random_range(0.05..0.9), rng.random_range(0.02..0.2)).unwrap();
        let run = simulate_sirs(&p, random_simplex(&mut rng, 0.01), &cfg).unwrap();
        invariant &= check_b2_invariance(&run).holds;
        let end = EpiState::from_array(*run.last().unwrap());
        let target = sirs_equilibrium(&p).unwrap().state();
        if beta > alpha {
            worst_end = worst_end.max(end.distance(&target));
        } else {
            worst_free = worst_free.max(end.distance(&EpiState::default()));
        }
    }
    check(
        worst_end < 1e-6 && worst_free < 1e-6 && invariant,
        format!("10 endemic sets max distance {worst_end:.2e}, 10 disease-free sets max distance {worst_free:.2e}, simplex kept: {invariant}"),
    )
}

/// Root of `g` nearest to `near` found by grid scan and bisection.
fn bisection_oracle(g: impl Fn(f64) -> f64, upper: f64, near: f64) -> Option<f64> {
    let n = 20_000;
    let mut best: Option<f64> = None;
    let mut prev = (upper * 1e-12, g(upper * 1e-12));
    for k in 1..=n {
        let x = upper * k as f64 / n as f64;
        let v = g(x);
        if prev.1 * v <= 0.0 && prev.1 != 0.0 {
            let (mut lo, mut hi, mut flo) = (prev.0, x, prev.1);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                let fm = g(m);
                if flo * fm <= 0.0 {
                    hi = m;
                } else {
                    lo = m;
                    flo = fm;
                }
            }
            let root = 0.5 * (lo + hi);
            if best.is_none_or(|b| (b - near).abs() > (root - near).abs()) {
                best = Some(root);
            }
        }
        prev = (x, v);
    }
    best
}

fn coupled_equilibria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let cfg = IntegratorConfig::new(0.05, 10_000.0).unwrap();
    let (mut worst_res, mut worst_oracle, mut worst_conv) = (0.0f64, 0.0f64, 0.0f64);
    let mut in_range = true;
    let (mut n_i3n, mut n_ibin) = (0, 0);
    while n_i3n < 10 || n_ibin < 10 {
        let alpha = rng.random_range(0.1..0.25);
        let p = SirsParams::new(
            rng.random_range(0.3..0.8),
            alpha,
            rng.random_range(0.1..0.6),
            rng.random_range(0.02..0.1),
        )
        .unwrap();
        let upper = 1.0 / p.c_ir();
        let (spec, rep, poly) = if n_i3n < 10 {
            let Ok(law) = OffspringLaw::new(
                rng.random_range(2.0..12.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.05..1.0),
                rng.random_range(0.5..3.0),
                20,
                2.0,
                0.05,
                0.1,
            ) else {
                continue;
            };
            let spec = ScenarioSpec::i3n(rng.random_range(-0.2..0.5), law).unwrap();
            let rep = analyze_i3n(&p, &spec).unwrap();
            if rep.regime != AsymptoticRegime::CoP || rep.disease_free_is_la {
                continue;
            }
            n_i3n += 1;
            let q = I3nQuadratic::new(&p, &spec);
            let residual = q.eval(rep.interior.unwrap().i);
            (spec, rep, residual)
        } else {
            let spec = ScenarioSpec::ibin(rng.random_range(0.0..1.5), &news_law()).unwrap();
            let rep = analyze_ibin(&p, &spec).unwrap();
            if rep.regime != AsymptoticRegime::CoP || rep.disease_free_is_la {
                continue;
            }
            n_ibin += 1;
            let i = rep.interior.unwrap().i;
            (spec, rep, equilibrium_condition(i, &p, &spec))
        };
        let eq = rep.interior.unwrap();
        in_range &= eq.i > 0.0 && eq.i <= upper;
        worst_res = worst_res.max(poly.abs()).max(equilibrium_condition(eq.i, &p, &spec).abs());
        let oracle = bisection_oracle(|i| equilibrium_condition(i, &p, &spec), upper, eq.i).ok_or("oracle found no root")?;
        worst_oracle = worst_oracle.max((oracle - eq.i).abs());
        let i0 = (eq.i * rng.random_range(0.5..1.5)).min(0.95);
        let init = EpiState::new(i0, (eq.r * rng.random_range(0.5..1.0)).min(1.0 - i0));
        let run = simulate_coupled(&p, &spec, init, &cfg).unwrap();
        worst_conv = worst_conv.max((run.last_state().i - eq.i).abs());
    }
    check(
        worst_res < 1e-10 && worst_oracle < 1e-9 && worst_conv < 1e-5 && in_range,
        format!(
            "10 I3N + 10 IBIN CoP sets: residual {worst_res:.2e}, |i* - bisection| {worst_oracle:.2e}, |i(T) - i*| {worst_conv:.2e}, in (0, 1/c]: {in_range}"
        ),
    )
}

fn ibin(b: f64, a: f64, u: f64, pr: f64, li: f64) -> (SirsParams, ScenarioSpec) {
    (SirsParams::new(b, a, pr, li).unwrap(), ScenarioSpec::ibin(u, &news_law()).unwrap())
}

const PCO: [(f64, f64, f64, f64, f64); 3] = [(0.3, 0.2, 2.0, 0.5, 0.02), (0.25, 0.2, 1.5, 0.9, 0.02), (0.3, 0.2, 2.5, 0.8, 0.03)];
const COP: [(f64, f64, f64, f64, f64); 3] = [(0.5, 0.2, 3.0, 0.5, 0.05), (0.3, 0.2, 4.0, 0.5, 0.05), (0.5, 0.4, 3.0, 0.3, 0.05)];

fn limit_cycles() -> Outcome {
    let cfg = IntegratorConfig::new(0.05, 6000.0).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for &(b, a, u, pr, li) in &PCO {
        let (p, spec) = ibin(b, a, u, pr, li);
        let rep = analyze_ibin(&p, &spec).unwrap();
        let drive = rep.conditions["oscillation_drive"] > rep.conditions["oscillation_damping"];
        let c = detect_cycle(&simulate_coupled(&p, &spec, EpiState::new(0.15, 0.3), &cfg).unwrap().traj).unwrap();
        ok &= drive && c.is_periodic && c.n_cycles_observed >= 3;
        notes.push(format!("periodic T={:.1}", c.period));
    }
    for &(b, a, u, pr, li) in &COP {
        let (p, spec) = ibin(b, a, u, pr, li);
        let rep = analyze_ibin(&p, &spec).unwrap();
        let c = detect_cycle(&simulate_coupled(&p, &spec, EpiState::new(0.15, 0.3), &cfg).unwrap().traj).unwrap();
        ok &= rep.regime == AsymptoticRegime::CoP && c.outcome == CycleOutcome::Converged;
        notes.push(c.outcome.as_str().to_string());
    }
    check(ok, format!("3 PCo + 3 CoP sets: {}", notes.join(", ")))
}

fn reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut exact = true;
    for _ in 0..1000 {
        let s = random_simplex(&mut rng, 0.0);
        let p = SirsParams::new(
            rng.random_range(0.05..1.5),
            rng.random_range(0.05..1.0),
            rng.random_range(0.01..0.9),
            rng.random_range(0.001..0.3),
        )
        .unwrap();
        let Ok(law) = OffspringLaw::new(
            rng.random_range(1.0..12.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..3.0),
            20,
            2.0,
            0.05,
            0.1,
        ) else {
            continue;
        };
        let w = rng.random_range(-0.5..0.5);
        let u = rng.random_range(-1.0..3.0);
        let ibin = ScenarioSpec::ibin(u, &law).unwrap();
        exact &= coupled_rhs(s, &p, &ScenarioSpec::combined(w, 0.0, law).unwrap())
            == coupled_rhs(s, &p, &ScenarioSpec::i3n(w, law).unwrap());
        exact &= coupled_rhs(s, &p, &ScenarioSpec::combined(0.0, u, ibin.news).unwrap()) == coupled_rhs(s, &p, &ibin);
        exact &= coupled_rhs(s, &p, &ScenarioSpec::i3n(0.0, law).unwrap()) == sirs_rhs(s, &p);
    }

    let cfg = IntegratorConfig::new(0.05, 6000.0).unwrap();
    let (mut worst_i, mut worst_period) = (0.0f64, 0.0f64);
    for &(b, a, u, pr, li) in &PCO {
        let (p, spec) = ibin(b, a, u, pr, li);
        let comb = ScenarioSpec::balanced_with_ibin(u, news_law()).unwrap();
        let ri = analyze_ibin(&p, &spec).unwrap().interior.unwrap().i;
        let rc = analyze_combined(&p, &comb).unwrap().interior.unwrap().i;
        worst_i = worst_i.max((ri - rc).abs());
        let init = EpiState::new(0.2, 0.3);
        let ci = detect_cycle(&simulate_coupled(&p, &spec, init, &cfg).unwrap().traj).unwrap();
        let cc = detect_cycle(&simulate_coupled(&p, &comb, init, &cfg).unwrap().traj).unwrap();
        if !(ci.is_periodic && cc.is_periodic) {
            return Err(format!("balanced pair not periodic: {ci:?} {cc:?}"));
        }
        worst_period = worst_period.max((ci.period / cc.period - 1.0).abs());
    }
    check(
        exact && worst_i < 1e-9 && worst_period < 0.02,
        format!("3 reduction chains exact over 1000 states: {exact}; balanced pair |di*| {worst_i:.2e}, period mismatch {:.3}%", worst_period * 100.0),
    )
}

fn fitting() -> Outcome {
    let news = OffspringLaw::new(10.0, 0.7, 0.2, 1.2, 20, 2.0, 0.05, 0.1).unwrap();
    let p = SirsParams::new(0.2, 0.1, 0.2, 0.01).unwrap();
    let spec = ScenarioSpec::i3n(0.0, news).unwrap();
    let cfg = IntegratorConfig::new(0.01, 60.0).unwrap();
    let init = EpiState::new(1e-3, 0.0);
    let times: Vec<f64> = (0..=120).map(|k| k as f64 * 0.5).collect();
    let bounds = LevelBounds::new(-1.0, 1.0).unwrap();

    let truth = InfluenceSchedule::new(vec![20.0, 40.0], vec![0.4, -0.3, 0.1]).unwrap();
    let run = simulate_with_schedule(&p, &spec, &truth, init, &cfg).unwrap();
    let series = HistoricalSeries::from_trajectory(&run.traj, times.clone()).unwrap();
    let rep = fit_schedule(&series, &p, &spec, &truth.breakpoints, bounds, init, &cfg).unwrap();
    let worst = rep
        .schedule
        .levels
        .iter()
        .zip(&truth.levels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let single = simulate_with_schedule(&p, &spec, &InfluenceSchedule::constant(0.25), init, &cfg).unwrap();
    let series = HistoricalSeries::from_trajectory(&single.traj, times).unwrap();
    let self_fit = fit_schedule(&series, &p, &spec, &[], bounds, init, &cfg).unwrap();
    check(
        worst < 1e-3 && rep.rmse < 1e-4 && self_fit.rmse < 1e-8,
        format!(
            "3-segment worst level error {worst:.2e}, RMSE {:.2e}; self-fit RMSE {:.2e}",
            rep.rmse, self_fit.rmse
        ),
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn reproducibility() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let hist = dir.path().join("history.csv");
    let mut text = String::from("t,value\n");
    for k in 0..=60 {
        let t = k as f64;
        text.push_str(&format!("{t},{}\n", 0.001 + 0.004 * t / 60.0));
    }
    fs::write(&hist, text).map_err(|e| e.to_string())?;
    let runs: [(&str, &str, &[&str]); 6] = [
        ("simulate-news", "news_fig1.toml", &["--jobs", "2"]),
        ("simulate", "ibin_pco.toml", &[]),
        ("simulate", "i3n_cop.toml", &[]),
        ("hybrid", "hybrid_interplay.toml", &[]),
        ("fit", "fit_desk.toml", &["--history", hist.to_str().unwrap()]),
        ("limit-cycle", "limit_cycle.toml", &["--jobs", "3"]),
    ];
    for (k, (cmd, cfg, extra)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{k}_{rep}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_infodemic"))
                .arg(cmd)
                .arg("--config")
                .arg(configs().join(cfg))
                .arg("--out")
                .arg(&out)
                .args(*extra)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} {cfg} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(fs::read(&out).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{cmd} {cfg}: reruns differ"));
        }
    }
    check(true, format!("{} CLI runs repeated with byte-identical CSV", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("ode-approximation", ode_approximation),
        ("theta-limit", theta_limit),
        ("closed-forms", closed_forms),
        ("sirs-equilibria", sirs_equilibria),
        ("i3n-ibin-equilibria", coupled_equilibria),
        ("limit-cycles", limit_cycles),
        ("scenario-reductions", reductions),
        ("fitting", fitting),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {name}: {tag} ({detail}) [{:.1} s]", k + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
