//! Control-update policies that adapt the sampling rate to DoS, and the
//! Riccati-based bound on event-triggered inter-sample times.

use serde::{Deserialize, Serialize};

use crate::dos::DosSequence;
use crate::error::{Error, Result};
use crate::matrix::{spectral_norm, Vector};
use crate::plant::{HoldTransition, LoopState, LtiPlant};

/// `‖x(t_k)‖` below this is treated as the zero state.
pub const ZERO_STATE_THRESHOLD: f64 = 1e-12;
/// Event-driven searches give up after `Δ₂·EVENT_CAP_FACTOR`.
pub const EVENT_CAP_FACTOR: f64 = 1e6;

/// Which update policy drives the transmission attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicKind {
    /// Event-triggered while acknowledged, periodic `Δ₁` after a lost packet.
    EventTime,
    /// Period `Δ₂` while acknowledged, `Δ₁` after a lost packet.
    PureTime,
    /// Period chosen in `[Δ₁, Δ₂]` from a model-based state prediction.
    SelfTrigger,
    /// Event-triggered with continuous retries: an update lands exactly when
    /// the jam ends.
    IdealEvent,
}

/// Map from `‖χ‖` into `[0, 1]` used by the self-triggered policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Varphi {
    #[default]
    Zero,
    /// `min(1, scale·s)`.
    SaturatedLinear { scale: f64 },
}

impl Varphi {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Varphi::Zero => 0.0,
            Varphi::SaturatedLinear { scale } => (scale * s).clamp(0.0, 1.0),
        }
    }
}

/// State predictor used by the self-triggered policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// `[e^{Φs} + ∫₀ˢ e^{Φ(s−r)} BK dr]·x(t₁)`.
    #[default]
    ClosedLoopConvolution,
    /// Alternative, not the published rule: propagate the actual held-input
    /// dynamics, `e^{As}x + ∫₀ˢ e^{Ar} dr BK·x`.
    HeldInputFlow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConfig {
    pub sigma: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub varphi: Varphi,
    pub predictor: Predictor,
}

impl TriggerConfig {
    pub fn new(sigma: f64, delta1: f64, delta2: f64, varphi: Varphi) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Input(format!("sigma {sigma} must be > 0")));
        }
        if !(delta1 > 0.0) || !(delta1 <= delta2) || !delta2.is_finite() {
            return Err(Error::Input(format!("need 0 < delta1 ({delta1}) <= delta2 ({delta2})")));
        }
        if let Varphi::SaturatedLinear { scale } = varphi {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::Input(format!("varphi scale {scale} must be > 0")));
            }
        }
        Ok(Self { sigma, delta1, delta2, varphi, predictor: Predictor::default() })
    }

    /// Checks `Δ₂` against the Riccati bound for this plant.
    pub fn check_against(&self, plant: &LtiPlant) -> Result<()> {
        let limit = plant_delta2(plant, self.sigma)?;
        if self.delta2 > limit * (1.0 + 1e-12) {
            return Err(Error::Input(format!(
                "delta2 {} exceeds the admissible inter-sample bound {limit}",
                self.delta2
            )));
        }
        Ok(())
    }
}

fn riccati_rhs(a: f64, c: f64, phi: f64) -> f64 {
    a + (a + c) * phi + c * phi * phi
}

fn rk4_step(a: f64, c: f64, phi: f64, h: f64) -> f64 {
    let k1 = riccati_rhs(a, c, phi);
    let k2 = riccati_rhs(a, c, phi + 0.5 * h * k1);
    let k3 = riccati_rhs(a, c, phi + 0.5 * h * k2);
    let k4 = riccati_rhs(a, c, phi + h * k3);
    phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn rk4_double(a: f64, c: f64, phi: f64, h: f64) -> f64 {
    rk4_step(a, c, rk4_step(a, c, phi, 0.5 * h), 0.5 * h)
}

/// Time at which `φ̇ = ‖Φ‖ + (‖Φ‖+‖BK‖)φ + ‖BK‖φ²`, `φ(0) = 0`, reaches `sigma`.
///
/// Step-doubling RK4 until the level is bracketed, then bisection inside the
/// bracketing step.
pub fn riccati_delta2(phi_norm: f64, bk_norm: f64, sigma: f64) -> Result<f64> {
    if !(phi_norm > 0.0) || !phi_norm.is_finite() {
        return Err(Error::Input(format!("‖Φ‖ = {phi_norm} must be positive")));
    }
    if !(bk_norm >= 0.0) || !(sigma > 0.0) {
        return Err(Error::Input("need ‖BK‖ >= 0 and sigma > 0".into()));
    }
    let (a, c) = (phi_norm, bk_norm);
    const TOL: f64 = 1e-15;
    let mut t = 0.0;
    let mut phi = 0.0;
    let mut h = 0.01 * sigma / riccati_rhs(a, c, sigma);
    loop {
        let coarse = rk4_step(a, c, phi, h);
        let fine = rk4_double(a, c, phi, h);
        let err = (fine - coarse).abs() / 15.0;
        if err > TOL * (1.0 + fine.abs()) && h > 1e-14 * (t + h) {
            h *= 0.5;
            continue;
        }
        if fine >= sigma {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-16 * (t + hi) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if rk4_double(a, c, phi, mid) >= sigma {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(t + 0.5 * (lo + hi));
        }
        t += h;
        phi = fine;
        if err < 0.1 * TOL * (1.0 + fine.abs()) {
            h *= 1.5;
        }
    }
}

/// [`riccati_delta2`] with the norms of the plant's `Φ` and `BK`.
pub fn plant_delta2(plant: &LtiPlant, sigma: f64) -> Result<f64> {
    riccati_delta2(spectral_norm(plant.closed_loop_matrix()), spectral_norm(plant.bk()), sigma)
}

/// Event/time-driven rule: `t_k + Δ₁` after a lost packet or at the zero
/// state, otherwise the first time `‖e‖ = σ‖x‖` as reported by `find_event`
/// (which receives the search deadline).
pub fn next_update_event_time(
    state: &LoopState,
    config: &TriggerConfig,
    find_event: impl FnOnce(f64) -> Option<f64>,
) -> f64 {
    if state.last_attempt_failed || state.x.norm() < ZERO_STATE_THRESHOLD {
        return state.t + config.delta1;
    }
    let cap = state.t + config.delta2 * EVENT_CAP_FACTOR;
    find_event(cap).map_or(cap, |t| t.min(cap))
}

/// Purely time-driven rule.
pub fn next_update_pure_time(state: &LoopState, config: &TriggerConfig) -> f64 {
    if state.last_attempt_failed {
        state.t + config.delta1
    } else {
        state.t + config.delta2
    }
}

/// Model-based prediction of `x(t2)` from `x(t1)`.
pub fn predict_state(plant: &LtiPlant, x_at_t1: &Vector, t1: f64, t2: f64, predictor: Predictor) -> Result<Vector> {
    if !(t2 >= t1) {
        return Err(Error::Input(format!("prediction needs t2 ({t2}) >= t1 ({t1})")));
    }
    if x_at_t1.len() != plant.state_dim() {
        return Err(Error::Dimension(format!("state must have length {}", plant.state_dim())));
    }
    if t2 == t1 {
        return Ok(x_at_t1.clone());
    }
    let drift = match predictor {
        Predictor::ClosedLoopConvolution => plant.closed_loop_matrix(),
        Predictor::HeldInputFlow => plant.a(),
    };
    let tr = HoldTransition::compute(drift.as_dmatrix(), plant.bk().as_dmatrix(), t2 - t1);
    Ok(tr.apply(x_at_t1, x_at_t1))
}

/// Self-triggered rule `t_k + Δ₂ − (Δ₂ − Δ₁)·varphi(‖χ(t_k, t_last)‖)`.
pub fn next_update_self_trigger(state: &LoopState, plant: &LtiPlant, config: &TriggerConfig) -> Result<f64> {
    let chi_norm = match state.t_held {
        None => 0.0,
        Some(t_held) => predict_state(plant, &state.x_held, t_held, state.t, config.predictor)?.norm(),
    };
    let w = config.varphi.eval(chi_norm);
    let step = config.delta2 - (config.delta2 - config.delta1) * w;
    Ok(state.t + step.clamp(config.delta1, config.delta2))
}

/// Continuous-retry rule: on a lost packet the next update lands when the
/// jam (including abutting intervals) is over.
pub fn next_update_ideal(
    state: &LoopState,
    config: &TriggerConfig,
    dos: &DosSequence,
    find_event: impl FnOnce(f64) -> Option<f64>,
) -> f64 {
    if state.last_attempt_failed {
        let mut t = state.t;
        while let Some((_, iv)) = dos.interval_at(t) {
            t = iv.end();
        }
        return t;
    }
    if state.x.norm() < ZERO_STATE_THRESHOLD {
        return state.t + config.delta1;
    }
    let cap = state.t + config.delta2 * EVENT_CAP_FACTOR;
    find_event(cap).map_or(cap, |t| t.min(cap))
}
