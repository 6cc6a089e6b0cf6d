use std::io::Write;
use std::path::{Path, PathBuf};

use infodemic::branching::{simulate_news_with, NewsState};
use infodemic::coupled::{analyze, detect_cycle, simulate_coupled, simulate_hybrid, MIN_CYCLE_SAMPLES};
use infodemic::fit::{fit_schedule, HistoricalSeries, LevelBounds};
use infodemic::news_ode::{limit_cycle, ode_reference, sup_gap, theta_star};
use infodemic::sirs::check_b2_invariance;
use rayon::prelude::*;

use crate::config::{sampling, RunConfig};
use crate::error::CliError;
use crate::output::{num, write_manifest, Table};

/// Everything a command needs after flags have been applied.
pub struct Context {
    pub config: RunConfig,
    pub jobs: usize,
    pub history: Option<PathBuf>,
}

impl Context {
    fn out(&self) -> Option<&Path> {
        self.config.output_path.as_deref()
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", self.jobs)))
    }

    /// Writes the table and manifest, then the summary lines. Summaries go
    /// to stderr when the table itself occupies stdout.
    fn finish(&self, command: &str, table: &Table, summary: &[(String, String)]) -> Result<(), CliError> {
        table.emit(self.out())?;
        if let Some(out) = self.out() {
            write_manifest(out, command, &self.config)?;
            print_lines(std::io::stdout().lock(), summary)?;
        } else {
            print_lines(std::io::stderr().lock(), summary)?;
        }
        Ok(())
    }
}

fn print_lines<W: Write>(mut w: W, lines: &[(String, String)]) -> Result<(), CliError> {
    for (k, v) in lines {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

fn kv(k: impl Into<String>, v: impl ToString) -> (String, String) {
    (k.into(), v.to_string())
}

pub fn simulate_news(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let law = cfg.news_law()?;
    let run = cfg.news_run()?;
    let eta = cfg.news_eta()?;
    let init = NewsState::new(run.psi0, run.theta0);
    let mode = sampling(run.sampling);
    if run.replicas == 0 {
        return Err(CliError::Config("key `news_run.replicas` must be at least 1".into()));
    }
    if !(run.ode_dt > 0.0) {
        return Err(CliError::Config("key `news_run.ode_dt` must be positive".into()));
    }

    let path = simulate_news_with(&law, eta, run.eps, run.n_steps, init, cfg.seed, mode)?;
    let reference = ode_reference(&law, eta, run.eps, run.n_steps, init, run.ode_dt)?;
    let gaps: Vec<f64> = ctx.pool()?.install(|| {
        (0..run.replicas)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed.wrapping_add(k);
                let p = simulate_news_with(&law, eta, run.eps, run.n_steps, init, seed, mode)?;
                Ok(sup_gap(&p, &reference))
            })
            .collect::<Result<Vec<f64>, infodemic::Error>>()
    })?;

    let mut table = Table::new(&["step", "psi_stochastic", "theta_stochastic", "psi_ode", "theta_ode", "regime"]);
    for (k, ((s, o), r)) in path.states.iter().zip(&reference).zip(&path.regimes).enumerate() {
        table.push(vec![
            k.to_string(),
            num(s.psi),
            num(s.theta),
            num(o.psi),
            num(o.theta),
            r.as_str().to_string(),
        ]);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let summary = vec![
        kv("eta", num(eta)),
        kv("sup_gap", num(gaps[0])),
        kv("replicas", run.replicas),
        kv("mean_sup_gap", num(mean)),
        kv("saturations", path.saturation_count()),
    ];
    ctx.finish("simulate-news", &table, &summary)
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let params = cfg.sirs_params()?;
    let spec = cfg.scenario_spec()?;
    let integ = cfg.integrator_config()?;
    let init = cfg.init_state()?;
    let run = simulate_coupled(&params, &spec, init, &integ)?;

    let mut table = Table::new(&["t", "i", "r", "beta"]);
    for ((t, x), b) in run.traj.times.iter().zip(&run.traj.states).zip(&run.beta) {
        table.push(vec![num(*t), num(x[0]), num(x[1]), num(*b)]);
    }
    let last = run.last_state();
    let inv = check_b2_invariance(&run.traj);
    let mut summary = vec![
        kv("samples", run.traj.len()),
        kv("final_i", num(last.i)),
        kv("final_r", num(last.r)),
        kv("simplex_invariant", inv.holds),
    ];
    if run.traj.len() >= MIN_CYCLE_SAMPLES {
        let c = detect_cycle(&run.traj)?;
        summary.push(kv("cycle", c.outcome.as_str()));
        summary.push(kv("periodic", c.is_periodic));
        summary.push(kv("period", num(c.period)));
        summary.push(kv("amplitude_i", num(c.amplitude_i)));
        summary.push(kv("cycles_observed", c.n_cycles_observed));
    }
    ctx.finish("simulate", &table, &summary)
}

pub fn hybrid(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let params = cfg.sirs_params()?;
    let spec = cfg.scenario_spec()?;
    let init = cfg.init_state()?;
    let hcfg = cfg.hybrid_config()?;
    let samples = simulate_hybrid(&params, &spec, init, &hcfg, cfg.seed)?;

    let mut table = Table::new(&["t", "i", "r", "beta", "theta_max"]);
    for s in &samples {
        table.push(vec![
            num(s.t),
            num(s.state.i),
            num(s.state.r),
            num(s.beta),
            num(s.window_theta_max),
        ]);
    }
    let last = samples.last().expect("hybrid run has samples");
    let summary = vec![
        kv("samples", samples.len()),
        kv("final_i", num(last.state.i)),
        kv("final_r", num(last.state.r)),
        kv("news_cycles", last.completed_cycles),
    ];
    ctx.finish("hybrid", &table, &summary)
}

pub fn analyze_cmd(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let params = cfg.sirs_params()?;
    let spec = cfg.scenario_spec()?;
    let rep = analyze(&params, &spec)?;

    let mut lines = vec![
        kv("scenario", rep.kind.as_str()),
        kv("regime", rep.regime.as_str()),
        kv("disease_free_la", rep.disease_free_is_la),
    ];
    match rep.interior {
        Some(eq) => {
            lines.push(kv("interior", "present"));
            lines.push(kv("interior_i", num(eq.i)));
            lines.push(kv("interior_r", num(eq.r)));
            lines.push(kv("residual", num(rep.residual(&params, &spec))));
        }
        None => lines.push(kv("interior", "none")),
    }
    lines.push(kv("interior_count", rep.all_interior.len()));
    for (k, s) in rep.all_interior.iter().enumerate() {
        lines.push(kv(format!("equilibrium_{k}_i"), num(s.i)));
    }
    let (lo, hi) = rep.jacobian_eigen_realparts;
    lines.push(kv("eigen_re_min", num(lo)));
    lines.push(kv("eigen_re_max", num(hi)));
    lines.push(kv("jacobian_det", num(rep.jacobian_determinant)));
    if let Some(b) = rep.bendixson_no_cycle {
        lines.push(kv("bendixson_no_cycle", b));
    }
    for (name, v) in &rep.conditions {
        lines.push(kv(format!("condition.{name}"), num(*v)));
    }
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{} scenario: regime {}, disease-free state {}",
        rep.kind.as_str(),
        rep.regime.as_str(),
        if rep.disease_free_is_la { "locally attracting" } else { "not attracting" }
    )?;
    print_lines(out, &lines)
}

/// Reads a `t,value` CSV. Row numbers in errors count data rows from 1.
pub fn load_history(path: &Path) -> Result<HistoricalSeries, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("history header: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(CliError::Input(format!(
            "history header must be `t,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::Input(format!("history row {row}: {e}")))?;
        let field = |j: usize, name: &str| -> Result<f64, CliError> {
            rec.get(j)
                .ok_or_else(|| CliError::Input(format!("history row {row}: missing `{name}`")))?
                .parse::<f64>()
                .map_err(|e| CliError::Input(format!("history row {row}: bad `{name}`: {e}")))
        };
        let t = field(0, "t")?;
        let v = field(1, "value")?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(CliError::Input(format!(
                    "history row {row}: time {t} does not increase (previous {prev})"
                )));
            }
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Input(format!("history row {row}: value {v} outside [0, 1]")));
        }
        times.push(t);
        values.push(v);
    }
    Ok(HistoricalSeries::new(times, values)?)
}

pub fn fit(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let history = ctx
        .history
        .as_deref()
        .ok_or_else(|| CliError::Config("fit needs --history <csv>".into()))?;
    let series = load_history(history)?;
    let params = cfg.sirs_params()?;
    let spec = cfg.scenario_spec()?;
    let integ = cfg.integrator_config()?;
    let init = cfg.init_state()?;
    let section = cfg.fit_section()?;
    let bounds = LevelBounds::new(section.w_min, section.w_max)?;
    let rep = fit_schedule(&series, &params, &spec, &section.breakpoints, bounds, init, &integ)?;

    let end = *series.times.last().expect("series is nonempty");
    let mut table = Table::new(&["t_start", "t_end", "w_bar"]);
    for (k, w) in rep.schedule.levels.iter().enumerate() {
        let (a, b) = rep.schedule.segment_bounds(k, end);
        table.push(vec![num(a), num(b), num(*w)]);
    }
    let mut summary = vec![kv("rmse", num(rep.rmse))];
    for (k, (s, b)) in rep.segment_rmse.iter().zip(&rep.baseline_rmse).enumerate() {
        summary.push(kv(format!("segment_{k}_rmse"), num(*s)));
        summary.push(kv(format!("segment_{k}_baseline_rmse"), num(*b)));
    }
    ctx.finish("fit", &table, &summary)
}

pub fn limit_cycle_cmd(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let law = cfg.news_law()?;
    let etas = cfg.limit_cycle_section()?.etas.clone();
    if etas.is_empty() {
        return Err(CliError::Config("key `limit_cycle.etas` is empty".into()));
    }
    let results: Vec<_> = ctx
        .pool()?
        .install(|| etas.par_iter().map(|&eta| limit_cycle(eta, &law)).collect());

    let mut table = Table::new(&[
        "eta",
        "theta_02",
        "psi_01",
        "nu_1",
        "nu_2",
        "period",
        "theta_star",
        "transient_bound",
        "status",
    ]);
    let mut found = 0;
    for (&eta, res) in etas.iter().zip(&results) {
        let star = num(theta_star(eta, law.a));
        match res {
            Ok(lc) => {
                found += 1;
                table.push(vec![
                    num(eta),
                    num(lc.theta_02),
                    num(lc.psi_01),
                    num(lc.nu_1),
                    num(lc.nu_2),
                    num(lc.period()),
                    star,
                    num(lc.transient_bound(&law)),
                    "cycle".into(),
                ]);
            }
            Err(_) => {
                let blank = String::new;
                table.push(vec![
                    num(eta),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                    star,
                    blank(),
                    "no-cycle".into(),
                ]);
            }
        }
    }
    let summary = vec![kv("etas", etas.len()), kv("cycles_found", found)];
    ctx.finish("limit-cycle", &table, &summary)
}
