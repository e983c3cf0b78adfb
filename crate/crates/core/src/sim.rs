//! Hybrid closed-loop simulator and trace verifiers.
//!
//! Between transmission attempts the state is advanced exactly with the
//! zero-order-hold transition of [`LtiPlant`]; attempts succeed iff the
//! channel is not jammed at that instant. The trace keeps a row at every
//! `record_step` grid point, every DoS breakpoint and every attempt (a row
//! before and one after the jump of the held sample).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::dos::{DosBudget, DosSequence};
use crate::error::{Error, Result};
use crate::guarantee::{LyapunovConstants, RobustnessMeasurement, measure_robustness};
use crate::matrix::Vector;
use crate::plant::{HoldTransition, InputMode, LoopState, LtiPlant};
use crate::trigger::{
    next_update_event_time, next_update_ideal, next_update_pure_time, next_update_self_trigger, LogicKind,
    TriggerConfig,
};

/// `‖x‖` above which a run is declared divergent and stopped.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
pub const DEFAULT_CROSSING_TOL: f64 = 1e-9;
/// Multiplicative slack of the envelope and update-rule checks.
pub const CHECK_SLACK: f64 = 1e-6;
/// Multiplicative slack of the onset snapshot check.
pub const ONSET_SLACK: f64 = 1e-9;

const CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub plant: LtiPlant,
    pub logic: LogicKind,
    pub trigger: TriggerConfig,
    pub dos: DosSequence,
    pub budget: DosBudget,
    pub x0: Vector,
    pub horizon: f64,
    pub record_step: f64,
    pub crossing_tol: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.state_dim();
        if self.x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, plant has {n} states", self.x0.len())));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Input(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.record_step > 0.0) || self.record_step > self.trigger.delta1 / 4.0 * (1.0 + 1e-12) {
            return Err(Error::Input(format!(
                "record_step {} must lie in (0, delta1/4 = {}]",
                self.record_step,
                self.trigger.delta1 / 4.0
            )));
        }
        if !(self.crossing_tol > 0.0) {
            return Err(Error::Input(format!("crossing_tol {} must be positive", self.crossing_tol)));
        }
        if let Err(v) = self.dos.check_slow_average(&self.budget, self.horizon) {
            return Err(Error::Input(format!(
                "DoS sequence exceeds its budget at t = {}: jammed {} > {}",
                v.t, v.xi, v.bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vector,
    pub u: Vector,
    pub e_norm: f64,
    pub x_norm: f64,
    pub jammed: bool,
    /// Post-jump row of a transmission attempt.
    pub attempt: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attempt {
    pub t: f64,
    pub success: bool,
}

/// State at a DoS onset `h_n` together with the sample held at that time.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetSnapshot {
    pub index: usize,
    pub t: f64,
    pub x: Vector,
    pub x_held: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub state_dim: usize,
    pub input_dim: usize,
    pub samples: Vec<Sample>,
    pub attempts: Vec<Attempt>,
    pub dos_onsets: Vec<OnsetSnapshot>,
    pub diverged: bool,
    /// First attempt the logic had scheduled past the end of the run.
    pub next_scheduled: Option<f64>,
}

impl Trace {
    /// Attempt times followed by the pending one, as used for `Δ_{S_n}`.
    pub fn attempt_times(&self) -> Vec<f64> {
        self.attempts.iter().map(|a| a.t).chain(self.next_scheduled).collect()
    }

    pub fn robustness(&self, seq: &DosSequence) -> Result<RobustnessMeasurement> {
        measure_robustness(&self.attempt_times(), seq)
    }

    /// Gaps between consecutive successful attempts.
    pub fn inter_success_gaps(&self) -> Vec<f64> {
        let succ: Vec<f64> = self.attempts.iter().filter(|a| a.success).map(|a| a.t).collect();
        succ.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        cols.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        cols.extend(["e_norm", "x_norm", "jammed", "attempt", "success"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.16e}", s.t);
            for v in s.x.iter().chain(s.u.iter()).chain([s.e_norm, s.x_norm].iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{},{},{}", s.jammed as u8, s.attempt as u8, s.success as u8);
        }
        out
    }
}

/// Exact hold transitions, cached by step length.
struct Propagator<'a> {
    plant: &'a LtiPlant,
    dos: &'a DosSequence,
    held: HashMap<u64, HoldTransition>,
    free: HashMap<u64, HoldTransition>,
}

impl<'a> Propagator<'a> {
    fn new(plant: &'a LtiPlant, dos: &'a DosSequence) -> Self {
        Self { plant, dos, held: HashMap::new(), free: HashMap::new() }
    }

    fn transition(&mut self, dt: f64, hold_active: bool) -> &HoldTransition {
        let plant = self.plant;
        let cache = if hold_active { &mut self.held } else { &mut self.free };
        if cache.len() > CACHE_LIMIT {
            cache.clear();
        }
        cache.entry(dt.to_bits()).or_insert_with(|| {
            let coupling = if hold_active {
                plant.bk().as_dmatrix().clone()
            } else {
                nalgebra::DMatrix::zeros(plant.state_dim(), plant.state_dim())
            };
            HoldTransition::compute(plant.a().as_dmatrix(), &coupling, dt)
        })
    }

    fn hold_active_at(&self, t: f64) -> bool {
        self.plant.input_mode == InputMode::HoldLast || !self.dos.is_jammed(t)
    }

    /// Advances from `t0` to `t1`, splitting at DoS breakpoints when the
    /// input is dropped during jams.
    fn advance(&mut self, x: &Vector, x_held: &Vector, t0: f64, t1: f64) -> Vector {
        if t1 <= t0 {
            return x.clone();
        }
        let mut cuts = vec![t0];
        if self.plant.input_mode == InputMode::ZeroDuringDos {
            for iv in self.dos.intervals() {
                for b in [iv.onset, iv.end()] {
                    if b > t0 && b < t1 {
                        cuts.push(b);
                    }
                }
            }
        }
        cuts.push(t1);
        cuts.dedup();
        let mut x = x.clone();
        for w in cuts.windows(2) {
            let active = self.hold_active_at(w[0]);
            x = self.transition(w[1] - w[0], active).apply(&x, x_held);
        }
        x
    }

    fn gap(&self, x: &Vector, x_held: &Vector, sigma: f64) -> f64 {
        (x_held - x).norm() - sigma * x.norm()
    }

    /// Grid scan of `‖e‖ − σ‖x‖` from `t_from`, then bisection of the first
    /// sign change. Returns the last time found with the gap still negative.
    #[allow(clippy::too_many_arguments)]
    fn crossing(
        &mut self,
        x_from: &Vector,
        x_held: &Vector,
        sigma: f64,
        delta1: f64,
        t_from: f64,
        t_max: f64,
        tol: f64,
    ) -> Option<f64> {
        if !(t_max > t_from) || (x_from.norm() == 0.0 && x_held.norm() == 0.0) {
            return None;
        }
        let step = (delta1 / 8.0).min((t_max - t_from) / 64.0);
        let mut t = t_from;
        let mut x = x_from.clone();
        while t < t_max {
            let t_next = (t + step).min(t_max);
            let x_next = self.advance(&x, x_held, t, t_next);
            if self.gap(&x_next, x_held, sigma) >= 0.0 {
                let (mut lo, mut hi) = (t, t_next);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    let xm = self.advance(&x, x_held, t, mid);
                    if self.gap(&xm, x_held, sigma) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(if lo > t_from { lo } else { hi });
            }
            t = t_next;
            x = x_next;
        }
        None
    }
}

/// First time after `t_from` at which `‖x_held − x(t)‖ = σ‖x(t)‖`, with the
/// held sample applied throughout. The grid step is
/// `min(Δ₁/8, (t_max − t_from)/64)` and the crossing is bisected to `tol`;
/// the returned time is the last one found with `‖e‖ < σ‖x‖`.
#[allow(clippy::too_many_arguments)]
pub fn find_event_crossing(
    plant: &LtiPlant,
    x_from: &Vector,
    x_held: &Vector,
    sigma: f64,
    delta1: f64,
    t_from: f64,
    t_max: f64,
    tol: f64,
) -> Result<Option<f64>> {
    let n = plant.state_dim();
    if x_from.len() != n || x_held.len() != n {
        return Err(Error::Dimension(format!("state vectors must have length {n}")));
    }
    if !(delta1 > 0.0) || !(tol > 0.0) {
        return Err(Error::Input("delta1 and tol must be positive".into()));
    }
    let empty = DosSequence::empty();
    let mut hold_plant = plant.clone();
    hold_plant.input_mode = InputMode::HoldLast;
    Ok(Propagator::new(&hold_plant, &empty).crossing(x_from, x_held, sigma, delta1, t_from, t_max, tol))
}

fn sample(plant: &LtiPlant, state: &LoopState, jammed: bool, attempt: bool, success: bool) -> Sample {
    let u = if jammed && plant.input_mode == InputMode::ZeroDuringDos {
        Vector::zeros(plant.input_dim())
    } else {
        plant.control(&state.x_held)
    };
    Sample {
        t: state.t,
        x: state.x.clone(),
        u,
        e_norm: state.error_vector().norm(),
        x_norm: state.x.norm(),
        jammed,
        attempt,
        success,
    }
}

/// Runs the closed loop from `x0` over `[0, horizon]`.
pub fn run(config: &SimConfig) -> Result<Trace> {
    config.validate()?;
    let plant = &config.plant;
    let dos = &config.dos;
    let trig = &config.trigger;
    let horizon = config.horizon;
    let mut prop = Propagator::new(plant, dos);

    let breakpoints: Vec<f64> = dos.breakpoints().into_iter().filter(|&b| b > 0.0 && b < horizon).collect();
    let mut bp_idx = 0;
    let mut grid_idx: u64 = 1;
    let mut onset_idx = 0;

    let mut state = LoopState::initial(config.x0.clone());
    let mut next_attempt = 0.0;
    let mut trace = Trace {
        state_dim: plant.state_dim(),
        input_dim: plant.input_dim(),
        samples: Vec::new(),
        attempts: Vec::new(),
        dos_onsets: Vec::new(),
        diverged: false,
        next_scheduled: None,
    };

    loop {
        let t = state.t;
        let jammed = dos.is_jammed(t);
        while let Some(iv) = dos.intervals().get(onset_idx) {
            if iv.onset > t {
                break;
            }
            trace.dos_onsets.push(OnsetSnapshot { index: onset_idx, t, x: state.x.clone(), x_held: state.x_held.clone() });
            onset_idx += 1;
        }

        if t == next_attempt && t <= horizon {
            trace.samples.push(sample(plant, &state, jammed, false, false));
            let success = !jammed;
            if success {
                state.x_held = state.x.clone();
                state.t_held = Some(t);
            }
            state.last_attempt_failed = !success;
            trace.attempts.push(crate::sim::Attempt { t, success });
            trace.samples.push(sample(plant, &state, jammed, true, success));

            next_attempt = match config.logic {
                LogicKind::PureTime => next_update_pure_time(&state, trig),
                LogicKind::SelfTrigger => next_update_self_trigger(&state, plant, trig)?,
                LogicKind::EventTime => next_update_event_time(&state, trig, |cap| {
                    prop.crossing(&state.x, &state.x_held, trig.sigma, trig.delta1, t, cap.min(horizon), config.crossing_tol)
                }),
                LogicKind::IdealEvent => next_update_ideal(&state, trig, dos, |cap| {
                    prop.crossing(&state.x, &state.x_held, trig.sigma, trig.delta1, t, cap.min(horizon), config.crossing_tol)
                }),
            };
            if !(next_attempt > t) {
                return Err(Error::Input(format!("update logic produced a non-increasing attempt time at t = {t}")));
            }
        } else {
            trace.samples.push(sample(plant, &state, jammed, false, false));
        }

        if t >= horizon {
            break;
        }
        let grid_t = grid_idx as f64 * config.record_step;
        let mut t_next = next_attempt.min(grid_t).min(horizon);
        if let Some(&b) = breakpoints.get(bp_idx) {
            t_next = t_next.min(b);
        }
        state.x = prop.advance(&state.x, &state.x_held, t, t_next);
        state.t = t_next;
        while grid_idx as f64 * config.record_step <= t_next {
            grid_idx += 1;
        }
        while breakpoints.get(bp_idx).is_some_and(|&b| b <= t_next) {
            bp_idx += 1;
        }
        if !(state.x.norm() <= DIVERGENCE_THRESHOLD) {
            trace.diverged = true;
            trace.samples.push(sample(plant, &state, dos.is_jammed(t_next), false, false));
            break;
        }
    }
    if next_attempt > state.t {
        trace.next_scheduled = Some(next_attempt);
    }
    Ok(trace)
}

/// Outcome of [`verify_ges`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GesVerdict {
    /// Largest `‖x(t)‖ / (αe^{−βt}‖x(0)‖)` over the trace.
    pub worst_ratio: f64,
    /// First sample breaking the envelope, with its ratio.
    pub first_violation: Option<(f64, f64)>,
}

impl GesVerdict {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks `‖x(t)‖ ≤ αe^{−βt}‖x(0)‖` at every sample, slack `1 + 1e−6`.
pub fn verify_ges(trace: &Trace, alpha: f64, beta: f64) -> GesVerdict {
    let x0 = trace.samples.first().map_or(0.0, |s| s.x_norm);
    let mut worst_ratio: f64 = 0.0;
    let mut first_violation = None;
    for s in &trace.samples {
        let bound = alpha * (-beta * s.t).exp() * x0;
        let ratio = if s.x_norm == 0.0 { 0.0 } else { s.x_norm / bound };
        worst_ratio = worst_ratio.max(ratio);
        if first_violation.is_none() && !(s.x_norm <= bound * (1.0 + CHECK_SLACK)) {
            first_violation = Some((s.t, ratio));
        }
    }
    GesVerdict { worst_ratio, first_violation }
}

/// Counts of a per-sample or per-snapshot check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckVerdict {
    pub checked: usize,
    pub exempt: usize,
    /// Time and offending ratio of the first violation.
    pub first_violation: Option<(f64, f64)>,
}

impl CheckVerdict {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// `‖e‖ ≤ σ‖x‖` at every sample outside the stretched jams; samples within
/// `time_slack` of a stretched jam are exempt, and so is the start-up row
/// recorded before the first attempt (nothing is held yet).
pub fn check_update_rule(trace: &Trace, sigma: f64, measurement: &RobustnessMeasurement, time_slack: f64) -> CheckVerdict {
    let mut v = CheckVerdict { checked: 0, exempt: 0, first_violation: None };
    let first_attempt = trace.attempts.first().map_or(f64::INFINITY, |a| a.t);
    for (i, s) in trace.samples.iter().enumerate() {
        let start_up = s.t < first_attempt || (i == 0 && s.t == first_attempt && !s.attempt);
        if start_up || measurement.in_stretched(s.t, time_slack) {
            v.exempt += 1;
            continue;
        }
        v.checked += 1;
        if v.first_violation.is_none() && !(s.e_norm <= sigma * s.x_norm * (1.0 + CHECK_SLACK)) {
            v.first_violation = Some((s.t, s.e_norm / (sigma * s.x_norm)));
        }
    }
    v
}

/// `‖x(t_{k(h_n)})‖ ≤ (1+σ)‖x(h_n)‖` at every DoS onset. Onsets that fall in an
/// earlier stretched jam are exempt, since the update rule need not hold there.
pub fn check_onset_snapshots(trace: &Trace, sigma: f64, measurement: &RobustnessMeasurement) -> CheckVerdict {
    let iv = measurement.sequence().intervals();
    let mut v = CheckVerdict { checked: 0, exempt: 0, first_violation: None };
    for snap in &trace.dos_onsets {
        let covered = (0..snap.index).any(|m| snap.t < iv[m].end() + measurement.stretch[m]);
        if covered && snap.t > 0.0 {
            v.exempt += 1;
            continue;
        }
        v.checked += 1;
        let held = snap.x_held.norm();
        let bound = (1.0 + sigma) * snap.x.norm() * (1.0 + ONSET_SLACK);
        if v.first_violation.is_none() && !(held <= bound) {
            v.first_violation = Some((snap.t, held / ((1.0 + sigma) * snap.x.norm())));
        }
    }
    v
}

/// `V(x(t)) ≤ e^{−ω₁(t−s)}V(x(s))` on every segment outside the stretched
/// jams, with `s` the first sample in the segment; additive slack
/// `1e−6·V(x(s))`.
pub fn check_lyapunov_decay(trace: &Trace, lyap: &LyapunovConstants, measurement: &RobustnessMeasurement, horizon: f64) -> CheckVerdict {
    let mut v = CheckVerdict { checked: 0, exempt: 0, first_violation: None };
    let samples = &trace.samples;
    for (a, b) in measurement.free_segments(horizon) {
        let start = samples.partition_point(|s| s.t < a);
        let Some(first) = samples.get(start) else { continue };
        if first.t >= b {
            continue;
        }
        let v0 = lyap.lyapunov_value(&first.x);
        for s in samples[start..].iter().take_while(|s| s.t < b) {
            v.checked += 1;
            let bound = (-lyap.omega1_l * (s.t - first.t)).exp() * v0;
            let val = lyap.lyapunov_value(&s.x);
            if v.first_violation.is_none() && !(val <= bound + CHECK_SLACK * v0) {
                v.first_violation = Some((s.t, val / bound));
            }
        }
    }
    v.exempt = samples.len() - v.checked;
    v
}

/// `|Ξ̄(t)| ≤ |Ξ(t)|(1+Δ*/τ*)` at every DoS breakpoint, every stretched end
/// and the horizon.
pub fn check_xi_bar(measurement: &RobustnessMeasurement, horizon: f64) -> CheckVerdict {
    let seq = measurement.sequence();
    let infl = measurement.summary.inflation;
    let mut points: Vec<f64> = seq.breakpoints();
    points.extend(seq.intervals().iter().zip(&measurement.stretch).map(|(iv, d)| iv.end() + d));
    points.push(horizon);
    points.retain(|&t| t <= horizon);
    points.sort_by(f64::total_cmp);
    let mut v = CheckVerdict { checked: 0, exempt: 0, first_violation: None };
    for t in points {
        v.checked += 1;
        let bar = measurement.xi_bar(t);
        let cap = seq.xi_measure(t) * infl;
        if v.first_violation.is_none() && !(bar <= cap * (1.0 + 1e-12) + 1e-12) {
            v.first_violation = Some((t, bar / cap));
        }
    }
    v
}
