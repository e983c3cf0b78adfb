//! `resilient`: analysis, simulation, sweeps and DoS generation for
//! sampled-data loops under denial-of-service.
//!
//! Exit codes: 0 success, 1 bad input, 2 an analysed bound is infeasible,
//! 3 a certified property failed in simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use resilient_core::dos::{gen_greedy_adversary, gen_periodic, gen_random_budgeted, DosBudget, DosSequence};
use resilient_core::guarantee::{
    theorem1_bounds, theorem2_bounds, theorem3_lyapunov_sampled, LyapunovConstants, PlantConstants, Report,
    SamplingRobustness, TrajectoryConstants,
};
use resilient_core::scenario::{BudgetSection, Resolved, Scenario};
use resilient_core::sim::{check_onset_snapshots, check_update_rule, run, verify_ges, SimConfig};
use resilient_core::trigger::{plant_delta2, LogicKind};
use resilient_core::InputMode;

#[derive(Parser)]
#[command(name = "resilient", version, about = "Resilient event/self-triggered control under DoS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute envelopes, the Riccati inter-sample bound and every certificate.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Also write the `name = value` report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate the scenario, write the trace CSV and check certificates.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate certificates and simulate over a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a budgeted DoS sequence file.
    GenDos {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0.1)]
        min_duration: f64,
        /// First onset (periodic).
        #[arg(long, default_value_t = 0.0)]
        onset: f64,
        /// Jammer period (periodic); defaults to `kappa·tau`.
        #[arg(long)]
        period: Option<f64>,
        /// Jammed fraction of each period (periodic); defaults to `1/tau`.
        #[arg(long)]
        duty: Option<f64>,
        /// Period of the attempts the greedy jammer targets; defaults to `min_duration`.
        #[arg(long)]
        attempt_period: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Tau,
    Sigma,
    Delta1,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Periodic,
    Random,
    Greedy,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze { config, report } => analyze(&config, report.as_deref()),
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Sweep { config, param, from, to, steps, out } => sweep(&config, param, from, to, steps, &out),
        Command::GenDos { kind, kappa, tau, seed, horizon, min_duration, onset, period, duty, attempt_period, out } => {
            gen_dos(kind, kappa, tau, seed, horizon, min_duration, onset, period, duty, attempt_period, &out)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> anyhow::Result<(Scenario, Resolved)> {
    let scenario = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    let resolved = scenario.resolve(path.parent()).with_context(|| format!("resolving {}", path.display()))?;
    Ok((scenario, resolved))
}

/// A-priori sampling robustness for the configured logic: the longest gap
/// the logic can leave after a lost packet, against the shortest jam.
fn a_priori_robustness(config: &SimConfig) -> anyhow::Result<SamplingRobustness> {
    let tau_star = config.dos.min_duration().unwrap_or(f64::INFINITY);
    let delta_star = match config.logic {
        LogicKind::IdealEvent => 0.0,
        LogicKind::EventTime | LogicKind::PureTime => config.trigger.delta1,
        LogicKind::SelfTrigger => config.trigger.delta2,
    };
    Ok(SamplingRobustness::new(delta_star, tau_star)?)
}

struct Certificates {
    trajectory: TrajectoryConstants,
    lyapunov: LyapunovConstants,
}

fn certificates(resolved: &Resolved, robustness: &SamplingRobustness) -> anyhow::Result<Certificates> {
    let c = &resolved.config;
    let pc = PlantConstants::compute(&c.plant)?;
    let sigma = c.trigger.sigma;
    let trajectory = if c.logic == LogicKind::IdealEvent {
        theorem1_bounds(&pc, sigma, &c.budget)
    } else {
        theorem2_bounds(&pc, sigma, &c.budget, robustness)
    };
    let lyap_robustness = if c.logic == LogicKind::IdealEvent { SamplingRobustness::ideal() } else { *robustness };
    let lyapunov = theorem3_lyapunov_sampled(&c.plant, &resolved.q, sigma, &c.budget, &lyap_robustness)?;
    Ok(Certificates { trajectory, lyapunov })
}

fn analysis_report(resolved: &Resolved) -> anyhow::Result<(Report, bool)> {
    let c = &resolved.config;
    let pc = PlantConstants::compute(&c.plant)?;
    let sigma = c.trigger.sigma;
    let robustness = a_priori_robustness(c)?;
    let ideal = theorem1_bounds(&pc, sigma, &c.budget);
    let sampled = theorem2_bounds(&pc, sigma, &c.budget, &robustness);
    let lyap = theorem3_lyapunov_sampled(&c.plant, &resolved.q, sigma, &c.budget, &SamplingRobustness::ideal())?;
    let lyap_sampled = theorem3_lyapunov_sampled(&c.plant, &resolved.q, sigma, &c.budget, &robustness)?;
    let riccati = plant_delta2(&c.plant, sigma)?;

    let mut r = Report::new();
    r.push("mu", pc.decay.mu);
    r.push("lambda", pc.decay.lambda);
    r.push("theta", pc.growth.theta);
    r.push("rho", pc.growth.rho);
    r.push("rho_star", ideal.rho_star);
    r.push("phi_norm", pc.phi_norm);
    r.push("bk_norm", pc.bk_norm);
    r.push("sigma", sigma);
    r.push("delta1", c.trigger.delta1);
    r.push("delta2", c.trigger.delta2);
    r.push("delta2_riccati", riccati);
    r.push("delta2_computed", resolved.computed_delta2.is_some());
    r.push("kappa", c.budget.kappa);
    r.push("tau", c.budget.tau);
    r.push("sigma_feasible_trajectory", ideal.sigma_margin() > 0.0);
    r.push("sigma_feasible_lyapunov", lyap.gamma1 - sigma * lyap.gamma2 > 0.0);
    r.push("ideal_tau_min", ideal.tau_min);
    r.push("ideal_alpha", ideal.alpha);
    r.push("ideal_beta", ideal.beta);
    r.push("ideal_feasible", ideal.is_feasible());
    r.push("delta_star_bound", robustness.delta_star);
    r.push("tau_star", robustness.tau_star);
    r.push("inflation", robustness.inflation);
    r.push("sampled_tau_min", sampled.tau_min);
    r.push("sampled_alpha", sampled.alpha);
    r.push("sampled_beta", sampled.beta);
    r.push("sampled_feasible", sampled.is_feasible());
    r.push("lyapunov_alpha1", lyap.alpha1);
    r.push("lyapunov_alpha2", lyap.alpha2);
    r.push("lyapunov_gamma1", lyap.gamma1);
    r.push("lyapunov_gamma2", lyap.gamma2);
    r.push("lyapunov_omega1", lyap.omega1_l);
    r.push("lyapunov_omega2", lyap.omega2_l);
    r.push("lyapunov_tau_min", lyap.tau_min);
    r.push("lyapunov_alpha", lyap.alpha);
    r.push("lyapunov_beta", lyap.beta);
    r.push("lyapunov_feasible", lyap.is_feasible());
    r.push("lyapunov_sampled_tau_min", lyap_sampled.tau_min);
    r.push("lyapunov_sampled_feasible", lyap_sampled.is_feasible());
    let all = ideal.is_feasible() && sampled.is_feasible() && lyap.is_feasible() && lyap_sampled.is_feasible();
    Ok((r, all))
}

fn analyze(config: &Path, report: Option<&Path>) -> anyhow::Result<u8> {
    let (_, resolved) = load(config)?;
    let (r, feasible) = analysis_report(&resolved)?;
    print!("{}", r.to_text());
    if let Some(path) = report {
        std::fs::write(path, r.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if feasible { 0 } else { 2 })
}

fn verdict_text(certified: bool, holds: bool) -> &'static str {
    match (certified, holds) {
        (false, _) => "uncertified",
        (true, true) => "holds",
        (true, false) => "violated",
    }
}

fn simulate(config: &Path, out: &Path) -> anyhow::Result<u8> {
    let (_, resolved) = load(config)?;
    let c = &resolved.config;
    let trace = run(c)?;
    std::fs::write(out, trace.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    let m = trace.robustness(&c.dos)?;
    let certs = certificates(&resolved, &m.summary)?;
    let hold_mode = c.plant.input_mode == InputMode::HoldLast;
    let rule_certified = hold_mode && (matches!(c.logic, LogicKind::EventTime | LogicKind::IdealEvent) || c.trigger.check_against(&c.plant).is_ok());

    let mut r = Report::new();
    r.push("diverged", trace.diverged);
    r.push("samples", trace.samples.len());
    r.push("attempts", trace.attempts.len());
    r.push("successes", trace.attempts.iter().filter(|a| a.success).count());
    r.push("delta_star", m.summary.delta_star);
    r.push("tau_star", m.summary.tau_star);
    r.push("xi_horizon", c.dos.xi_measure(c.horizon));
    r.push("xi_bar_horizon", m.xi_bar(c.horizon));

    let mut violated = false;
    let t = &certs.trajectory;
    let t_cert = hold_mode && rule_certified && t.is_feasible();
    let tv = verify_ges(&trace, t.alpha, t.beta);
    r.push("trajectory_alpha", t.alpha);
    r.push("trajectory_beta", t.beta);
    r.push("trajectory_ges", verdict_text(t_cert, !trace.diverged && tv.holds()));
    r.push("trajectory_worst_ratio", tv.worst_ratio);
    violated |= t_cert && (trace.diverged || !tv.holds());

    let l = &certs.lyapunov;
    let l_cert = hold_mode && rule_certified && l.is_feasible();
    let lv = verify_ges(&trace, l.alpha, l.beta);
    r.push("lyapunov_alpha", l.alpha);
    r.push("lyapunov_beta", l.beta);
    r.push("lyapunov_ges", verdict_text(l_cert, !trace.diverged && lv.holds()));
    r.push("lyapunov_worst_ratio", lv.worst_ratio);
    violated |= l_cert && (trace.diverged || !lv.holds());

    let rule = check_update_rule(&trace, c.trigger.sigma, &m, c.crossing_tol);
    r.push("update_rule", verdict_text(rule_certified, rule.holds()));
    violated |= rule_certified && !rule.holds();
    let onsets = check_onset_snapshots(&trace, c.trigger.sigma, &m);
    r.push("onset_snapshots", verdict_text(rule_certified, onsets.holds()));
    r.push("onset_snapshots_exempt", onsets.exempt);
    violated |= rule_certified && !onsets.holds();

    if let Some(d2) = resolved.computed_delta2 {
        r.push("delta2_computed", d2);
    }
    print!("{}", r.to_text());
    Ok(if violated { 3 } else { 0 })
}

fn sweep(config: &Path, param: SweepParam, from: f64, to: f64, steps: usize, out: &Path) -> anyhow::Result<u8> {
    if steps < 2 {
        bail!("--steps must be at least 2");
    }
    let (scenario, resolved) = load(config)?;
    let base_dir = config.parent().map(Path::to_path_buf);
    let fallback_budget = {
        let b = resolved.config.budget;
        BudgetSection { kappa: b.kappa, tau: b.tau }
    };
    let values: Vec<f64> = (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect();
    let mut rows: Vec<(f64, String)> = values
        .par_iter()
        .map(|&v| {
            let mut s = scenario.clone();
            match param {
                SweepParam::Tau => {
                    let mut b = s.budget.unwrap_or(fallback_budget);
                    b.tau = v;
                    s.budget = Some(b);
                }
                SweepParam::Sigma => s.trigger.sigma = v,
                SweepParam::Delta1 => {
                    s.trigger.delta1 = v;
                    s.sim.record_step = s.sim.record_step.min(v / 4.0);
                }
            }
            (v, sweep_row(&s, base_dir.as_deref()))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut csv = String::from("value,tau_min,alpha,beta,ges_observed\n");
    for (v, row) in rows {
        let _ = writeln!(csv, "{v},{row}");
    }
    std::fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    print!("{csv}");
    Ok(0)
}

/// One sweep row: certificate of the configured logic (a-priori robustness)
/// and whether the simulated state decayed (`‖x(T)‖ < ‖x(0)‖`, no divergence).
fn sweep_row(s: &Scenario, base_dir: Option<&Path>) -> String {
    let Ok(resolved) = s.resolve(base_dir) else {
        return "nan,nan,nan,invalid".into();
    };
    let cert = a_priori_robustness(&resolved.config).and_then(|rb| certificates(&resolved, &rb));
    let (tau_min, alpha, beta) = match cert {
        Ok(c) => (c.trajectory.tau_min, c.trajectory.alpha, c.trajectory.beta),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    let observed = match run(&resolved.config) {
        Ok(trace) => {
            let first = trace.samples.first().map_or(0.0, |x| x.x_norm);
            let last = trace.samples.last().map_or(0.0, |x| x.x_norm);
            u8::from(!trace.diverged && (last < first || first == 0.0)).to_string()
        }
        Err(_) => "invalid".into(),
    };
    format!("{tau_min},{alpha},{beta},{observed}")
}

#[allow(clippy::too_many_arguments)]
fn gen_dos(
    kind: GenKind,
    kappa: f64,
    tau: f64,
    seed: u64,
    horizon: f64,
    min_duration: f64,
    onset: f64,
    period: Option<f64>,
    duty: Option<f64>,
    attempt_period: Option<f64>,
    out: &Path,
) -> anyhow::Result<u8> {
    let budget = DosBudget::new(kappa, tau)?;
    let (seq, budget) = match kind {
        GenKind::Periodic => {
            let duty = duty.unwrap_or(1.0 / tau);
            let period = period.unwrap_or(kappa / duty);
            gen_periodic(onset, period, duty, horizon)?
        }
        GenKind::Random => (gen_random_budgeted(&budget, min_duration, seed, horizon)?, budget),
        GenKind::Greedy => {
            let step = attempt_period.unwrap_or(min_duration);
            if !(step > 0.0) {
                bail!("--attempt-period must be positive");
            }
            let times: Vec<f64> = (0..=(horizon / step).floor() as usize).map(|i| i as f64 * step).collect();
            (gen_greedy_adversary(&budget, min_duration, &times)?, budget)
        }
    };
    let text = seq.to_text(Some(&budget));
    let (back, header) = DosSequence::parse_text(&text)?;
    let header = header.context("generated file lost its budget header")?;
    if back != seq {
        bail!("generated sequence does not survive serialization");
    }
    if let Err(v) = back.check_slow_average(&header, horizon) {
        bail!("generated sequence exceeds its budget at t = {}", v.t);
    }
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("intervals = {}", seq.len());
    println!("kappa = {}", header.kappa);
    println!("tau = {}", header.tau);
    Ok(0)
}
