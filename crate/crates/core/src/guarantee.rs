//! Stability certificates for the loop under DoS.
//!
//! Two families of global-exponential-stability (GES) constants are
//! computed here:
//!
//! * the trajectory-based family, built from the decay envelope of
//!   `Φ = A + BK`, the growth envelope of `A` and the growth-rate surrogate
//!   `ρ*`; with ideal retries ([`theorem1_bounds`]) or with finite sampling
//!   rate ([`theorem2_bounds`]), where every DoS interval is stretched by the
//!   longest inter-attempt gap that started inside it;
//! * the Lyapunov-based family ([`theorem3_lyapunov`]) from `ΦᵀP + PΦ + Q = 0`.
//!
//! The symbols `ω₁, ω₂` mean different things in the two families, so the
//! Lyapunov ones carry an `_l` suffix.
//!
//! A Gronwall-type bound with impulsive product terms, which underlies the
//! trajectory-based certificate, is exposed as [`gronwall_bound`].

use crate::dos::DosSequence;
use crate::error::{Error, Result};
use crate::matrix::{growth_envelope, spectral_norm, symmetric_eigen_range, solve_lyapunov, DecayEnvelope, GrowthEnvelope, RealMatrix};
use crate::plant::LtiPlant;
use crate::dos::DosBudget;

/// Plant-level quantities every certificate needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConstants {
    pub decay: DecayEnvelope,
    pub growth: GrowthEnvelope,
    pub phi_norm: f64,
    pub bk_norm: f64,
}

impl PlantConstants {
    pub fn compute(plant: &LtiPlant) -> Result<Self> {
        Ok(Self {
            decay: plant.decay(),
            growth: growth_envelope(plant.a())?,
            phi_norm: spectral_norm(plant.closed_loop_matrix()),
            bk_norm: spectral_norm(plant.bk()),
        })
    }
}

/// `ω*(ζ) = ω₂[(1+σ) + θ + θ(1+σ)‖BK‖/ζ]/(λ+ζ)`.
pub fn omega_star(zeta: f64, lambda: f64, omega2: f64, sigma: f64, theta: f64, bk_norm: f64) -> f64 {
    omega2 * ((1.0 + sigma) + theta + theta * (1.0 + sigma) * bk_norm / zeta) / (lambda + zeta)
}

/// Smallest `ζ ≥ rho_floor` with `ω*(ζ) ≤ 1`.
///
/// `ω*` is strictly decreasing on `ζ > 0`, so this is a bracket expansion
/// followed by bisection. The returned value always satisfies `ω* ≤ 1`.
pub fn rho_star(lambda: f64, omega2: f64, sigma: f64, theta: f64, bk_norm: f64, rho_floor: f64) -> f64 {
    let w = |z: f64| omega_star(z, lambda, omega2, sigma, theta, bk_norm);
    let start = rho_floor.max(1e-12);
    if w(start) <= 1.0 {
        return rho_floor;
    }
    let mut lo = start;
    let mut hi = (2.0 * start).max(1.0);
    while w(hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if w(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `δ_n(t) = e^{(λ+ρ*)τ_n(t)} − 1`.
pub fn delta_n_of_t(lambda: f64, rho_star: f64, tau_n_t: f64) -> f64 {
    ((lambda + rho_star) * tau_n_t).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    /// `λ − σμ‖BK‖ ≤ 0` (or `γ₁ − σγ₂ ≤ 0` for the Lyapunov family).
    SigmaTooLarge,
    /// The DoS budget's `τ` does not exceed `tau_min`.
    TauTooSmall,
}

/// Trajectory-based GES constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConstants {
    pub mu: f64,
    pub lambda: f64,
    pub theta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub bk_norm: f64,
    /// `μ‖BK‖`.
    pub omega2: f64,
    /// `σω₂`.
    pub omega3: f64,
    /// `θ(1+σ)‖BK‖`.
    pub theta1: f64,
    pub rho_star: f64,
    /// `1 + Δ*/τ*`; exactly 1 for ideal retries.
    pub inflation: f64,
    pub kappa: f64,
    pub tau: f64,
    pub tau_min: f64,
    pub alpha: f64,
    pub beta: f64,
    pub verdict: Feasibility,
}

impl TrajectoryConstants {
    pub fn theta2_at(&self, rho: f64) -> f64 {
        self.theta + self.theta1 / rho
    }

    pub fn omega4_at(&self, rho: f64) -> f64 {
        self.omega2 * (1.0 + self.sigma) + self.omega2 * self.theta2_at(rho)
    }

    pub fn omega_star_at(&self, zeta: f64) -> f64 {
        self.omega4_at(zeta) / (self.lambda + zeta)
    }

    /// `ω₁ = μ‖x(0)‖`; depends on the trajectory.
    pub fn omega1(&self, x0_norm: f64) -> f64 {
        self.mu * x0_norm
    }

    /// Decay margin `λ − σμ‖BK‖` left before any DoS.
    pub fn sigma_margin(&self) -> f64 {
        self.lambda - self.sigma * self.mu * self.bk_norm
    }

    pub fn is_feasible(&self) -> bool {
        self.verdict == Feasibility::Feasible
    }
}

fn trajectory_common(pc: &PlantConstants, sigma: f64, budget: &DosBudget) -> TrajectoryConstants {
    let DecayEnvelope { mu, lambda } = pc.decay;
    let GrowthEnvelope { theta, rho } = pc.growth;
    let omega2 = mu * pc.bk_norm;
    let rs = rho_star(lambda, omega2, sigma, theta, pc.bk_norm, rho);
    TrajectoryConstants {
        mu,
        lambda,
        theta,
        rho,
        sigma,
        bk_norm: pc.bk_norm,
        omega2,
        omega3: sigma * omega2,
        theta1: theta * (1.0 + sigma) * pc.bk_norm,
        rho_star: rs,
        inflation: 1.0,
        kappa: budget.kappa,
        tau: budget.tau,
        tau_min: f64::INFINITY,
        alpha: f64::NAN,
        beta: f64::NAN,
        verdict: Feasibility::SigmaTooLarge,
    }
}

fn verdict(margin: f64, tau: f64, tau_min: f64) -> Feasibility {
    if !(margin > 0.0) {
        Feasibility::SigmaTooLarge
    } else if !(tau > tau_min) {
        Feasibility::TauTooSmall
    } else {
        Feasibility::Feasible
    }
}

/// Certificate for ideal retries (an update lands as soon as a jam ends).
pub fn theorem1_bounds(pc: &PlantConstants, sigma: f64, budget: &DosBudget) -> TrajectoryConstants {
    let mut c = trajectory_common(pc, sigma, budget);
    let margin = c.sigma_margin();
    let rate = c.lambda + c.rho_star;
    if margin > 0.0 {
        c.tau_min = rate / margin;
    }
    c.alpha = c.mu * (budget.kappa * rate).exp();
    c.beta = margin - rate / budget.tau;
    c.verdict = verdict(margin, budget.tau, c.tau_min);
    c
}

/// Certificate under finite sampling rate, inflated by `1 + Δ*/τ*`.
pub fn theorem2_bounds(pc: &PlantConstants, sigma: f64, budget: &DosBudget, robustness: &SamplingRobustness) -> TrajectoryConstants {
    let mut c = trajectory_common(pc, sigma, budget);
    let infl = robustness.inflation;
    c.inflation = infl;
    let margin = c.sigma_margin();
    let rate = c.lambda + c.rho_star;
    if margin > 0.0 {
        c.tau_min = rate / margin * infl;
    }
    c.alpha = c.mu * (rate * infl * budget.kappa).exp();
    c.beta = margin - rate * infl / budget.tau;
    c.verdict = verdict(margin, budget.tau, c.tau_min);
    c
}

/// `Δ*` (longest inter-attempt gap started inside a DoS interval),
/// `τ*` (shortest DoS interval) and the resulting inflation `1 + Δ*/τ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRobustness {
    pub delta_star: f64,
    pub tau_star: f64,
    pub inflation: f64,
}

impl SamplingRobustness {
    pub fn new(delta_star: f64, tau_star: f64) -> Result<Self> {
        if !(delta_star >= 0.0) || !(tau_star > 0.0) {
            return Err(Error::Input(format!("need delta_star >= 0 ({delta_star}) and tau_star > 0 ({tau_star})")));
        }
        let inflation = if tau_star.is_infinite() { 1.0 } else { 1.0 + delta_star / tau_star };
        Ok(Self { delta_star, tau_star, inflation })
    }

    /// Ideal retries: no extra delay.
    pub fn ideal() -> Self {
        Self { delta_star: 0.0, tau_star: f64::INFINITY, inflation: 1.0 }
    }

    /// A-priori worst case: every gap after a lost packet is at most
    /// `delta_star`, and no jam is shorter than `tau_star`.
    pub fn worst_case(delta_star: f64, tau_star: f64) -> Result<Self> {
        Self::new(delta_star, tau_star)
    }
}

/// Per-interval stretch `Δ_{S_n}` measured from an attempt log.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessMeasurement {
    seq: DosSequence,
    /// `Δ_{S_n}` for every interval, 0 when no attempt fell inside it.
    pub stretch: Vec<f64>,
    pub summary: SamplingRobustness,
}

/// Measures `Δ_{S_n}`, `Δ*` and `τ*` from sorted attempt times.
///
/// An attempt's gap is the time to the next attempt, so the last attempt of
/// the log only contributes when a later (possibly pending) time follows it.
pub fn measure_robustness(attempts: &[f64], seq: &DosSequence) -> Result<RobustnessMeasurement> {
    if attempts.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("attempt times must be sorted".into()));
    }
    let mut stretch = vec![0.0; seq.len()];
    for w in attempts.windows(2) {
        if let Some((n, _)) = seq.interval_at(w[0]) {
            stretch[n] = f64::max(stretch[n], w[1] - w[0]);
        }
    }
    let delta_star = stretch.iter().copied().fold(0.0, f64::max);
    let tau_star = seq.min_duration().unwrap_or(f64::INFINITY);
    Ok(RobustnessMeasurement { seq: seq.clone(), stretch, summary: SamplingRobustness::new(delta_star, tau_star)? })
}

impl RobustnessMeasurement {
    /// `|Ξ̄(t)|`: every jam stretched by its `Δ_{S_n}`, summed up to `t`.
    pub fn xi_bar(&self, t: f64) -> f64 {
        match self.seq.last_onset_index(t) {
            None => 0.0,
            Some(last) => {
                let iv = self.seq.intervals();
                let full: f64 = (0..last).map(|n| iv[n].duration + self.stretch[n]).sum();
                full + (iv[last].duration + self.stretch[last]).min(t - iv[last].onset)
            }
        }
    }

    /// Whether `t` lies in some stretched interval `[h_n, h_n + τ_n + Δ_{S_n})`,
    /// widened by `slack` on both ends.
    pub fn in_stretched(&self, t: f64, slack: f64) -> bool {
        self.seq
            .intervals()
            .iter()
            .zip(&self.stretch)
            .any(|(iv, d)| t >= iv.onset - slack && t < iv.end() + d + slack)
    }

    /// Maximal intervals of `[0, horizon]` outside every stretched jam.
    pub fn free_segments(&self, horizon: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cursor = 0.0;
        for (iv, d) in self.seq.intervals().iter().zip(&self.stretch) {
            if iv.onset >= horizon {
                break;
            }
            if iv.onset > cursor {
                out.push((cursor, iv.onset));
            }
            cursor = f64::max(cursor, iv.end() + d);
        }
        if cursor < horizon {
            out.push((cursor, horizon));
        }
        out
    }

    pub fn sequence(&self) -> &DosSequence {
        &self.seq
    }
}

/// Lyapunov-based GES constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConstants {
    pub p: RealMatrix,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    /// `‖KᵀBᵀP + PBK‖`.
    pub gamma2: f64,
    pub sigma: f64,
    /// `(γ₁ − γ₂σ)/α₂`.
    pub omega1_l: f64,
    /// `γ₂(2+σ)/α₁`.
    pub omega2_l: f64,
    pub inflation: f64,
    pub tau_min: f64,
    pub alpha: f64,
    pub beta: f64,
    pub verdict: Feasibility,
}

impl LyapunovConstants {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Feasibility::Feasible
    }

    /// `V(x) = xᵀPx`.
    pub fn lyapunov_value(&self, x: &crate::matrix::Vector) -> f64 {
        x.dot(&(self.p.as_dmatrix() * x))
    }
}

/// Lyapunov certificate for ideal retries.
pub fn theorem3_lyapunov(plant: &LtiPlant, q: &RealMatrix, sigma: f64, budget: &DosBudget) -> Result<LyapunovConstants> {
    theorem3_lyapunov_sampled(plant, q, sigma, budget, &SamplingRobustness::ideal())
}

/// Lyapunov certificate with jams stretched by `1 + Δ*/τ*`: the exponents
/// multiplying `|Ξ|` pick up the inflation factor, as in [`theorem2_bounds`].
pub fn theorem3_lyapunov_sampled(
    plant: &LtiPlant,
    q: &RealMatrix,
    sigma: f64,
    budget: &DosBudget,
    robustness: &SamplingRobustness,
) -> Result<LyapunovConstants> {
    let phi = plant.closed_loop_matrix();
    let p = solve_lyapunov(phi, q)?;
    let (alpha1, alpha2) = symmetric_eigen_range(&p)?;
    let (gamma1, _) = symmetric_eigen_range(q)?;
    let pbk = p.mul(plant.bk())?;
    let gamma2 = spectral_norm(&pbk.transpose().add(&pbk)?);
    let omega1_l = (gamma1 - gamma2 * sigma) / alpha2;
    let omega2_l = gamma2 * (2.0 + sigma) / alpha1;
    let infl = robustness.inflation;
    let margin = gamma1 - sigma * gamma2;
    let tau_min = if margin > 0.0 { (omega1_l + omega2_l) / omega1_l * infl } else { f64::INFINITY };
    let sum = omega1_l + omega2_l;
    let alpha = ((budget.kappa * sum * infl).exp() * alpha2 / alpha1).sqrt();
    let beta = (omega1_l - sum * infl / budget.tau) / 2.0;
    Ok(LyapunovConstants {
        p,
        alpha1,
        alpha2,
        gamma1,
        gamma2,
        sigma,
        omega1_l,
        omega2_l,
        inflation: infl,
        tau_min,
        alpha,
        beta,
        verdict: verdict(margin, budget.tau, tau_min),
    })
}

/// Nondecreasing, nonnegative piecewise-linear function given by knots;
/// constant outside the knot range.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    knots: Vec<(f64, f64)>,
}

impl Tabulated {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Input("tabulated function needs at least one knot".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1) {
            return Err(Error::Input("knots must have increasing abscissae and nondecreasing values".into()));
        }
        if knots[0].1 < 0.0 {
            return Err(Error::Input("tabulated values must be nonnegative".into()));
        }
        Ok(Self { knots })
    }

    pub fn constant(v: f64) -> Result<Self> {
        Self::new(vec![(0.0, v)])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|&(x, _)| x <= t);
        if i == 0 {
            return k[0].1;
        }
        if i == k.len() {
            return k[k.len() - 1].1;
        }
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }
}

/// One impulse time `ℓ_k` with its gain `δ_k(·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Impulse {
    pub at: f64,
    pub gain: Tabulated,
}

/// `ω₁·e^{ω₂(t−ℓ₀)}·∏_{ℓ₀<ℓ_k<t} (1 + δ_k(t))`.
pub fn gronwall_bound(omega1: f64, omega2: f64, ell0: f64, impulses: &[Impulse], t: f64) -> Result<f64> {
    if impulses.first().is_some_and(|i| i.at < ell0) || impulses.windows(2).any(|w| !(w[1].at > w[0].at)) {
        return Err(Error::Input("impulse times must satisfy ell0 <= ell1 < ell2 < ...".into()));
    }
    if !(omega2 >= 0.0) {
        return Err(Error::Input(format!("omega2 {omega2} must be >= 0")));
    }
    let product: f64 = impulses
        .iter()
        .filter(|i| i.at > ell0 && i.at < t)
        .map(|i| 1.0 + i.gain.eval(t))
        .product();
    Ok(omega1 * (omega2 * (t - ell0)).exp() * product)
}

/// Flat `name = value` report, one entry per line, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, value: impl std::fmt::Display) {
        self.entries.push((name.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse { line: i + 1, message: "expected `name = value`".into() })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }
}
