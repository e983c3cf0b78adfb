//! Denial-of-service signals: representation, measure, budget validation
//! and generators.
//!
//! A DoS sequence is a list of right-open jamming intervals
//! `H_n = [h_n, h_n + τ_n)`. The budget `(κ, τ)` bounds the total jammed
//! time up to `t` by `κ + t/τ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative tolerance used when comparing jammed time against the budget.
pub const BUDGET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosInterval {
    pub onset: f64,
    pub duration: f64,
}

impl DosInterval {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.end()
    }
}

/// Ordered, non-overlapping jamming intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DosSequence {
    intervals: Vec<DosInterval>,
}

impl DosSequence {
    pub fn new(intervals: Vec<DosInterval>) -> Result<Self> {
        for (i, iv) in intervals.iter().enumerate() {
            if !(iv.onset >= 0.0) || !iv.onset.is_finite() {
                return Err(Error::Input(format!("interval {i}: onset {} must be >= 0", iv.onset)));
            }
            if !(iv.duration > 0.0) || !iv.duration.is_finite() {
                return Err(Error::Input(format!("interval {i}: duration {} must be > 0", iv.duration)));
            }
        }
        for (i, w) in intervals.windows(2).enumerate() {
            if w[1].onset < w[0].end() {
                return Err(Error::Input(format!(
                    "interval {} starts at {} before interval {i} ends at {}",
                    i + 1,
                    w[1].onset,
                    w[0].end()
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(onset, duration)| DosInterval { onset, duration }).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[DosInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Index of the last onset strictly before `t`; `None` plays the role of −1.
    pub fn last_onset_index(&self, t: f64) -> Option<usize> {
        let count = self.intervals.partition_point(|iv| iv.onset < t);
        count.checked_sub(1)
    }

    pub fn is_jammed(&self, t: f64) -> bool {
        let count = self.intervals.partition_point(|iv| iv.onset <= t);
        count > 0 && self.intervals[count - 1].contains(t)
    }

    /// The interval containing `t`, if any.
    pub fn interval_at(&self, t: f64) -> Option<(usize, DosInterval)> {
        let count = self.intervals.partition_point(|iv| iv.onset <= t);
        let i = count.checked_sub(1)?;
        let iv = self.intervals[i];
        iv.contains(t).then_some((i, iv))
    }

    /// `τ_n(t) = min{τ_n, t − h_n}`, the part of interval `n` elapsed by `t`.
    pub fn elapsed_in(&self, n: usize, t: f64) -> f64 {
        let iv = self.intervals[n];
        iv.duration.min(t - iv.onset).max(0.0)
    }

    /// Total jammed time `|Ξ(t)|` up to `t`.
    pub fn xi_measure(&self, t: f64) -> f64 {
        match self.last_onset_index(t) {
            None => 0.0,
            Some(last) => {
                let full: f64 = self.intervals[..last].iter().map(|iv| iv.duration).sum();
                full + self.elapsed_in(last, t)
            }
        }
    }

    pub fn min_duration(&self) -> Option<f64> {
        self.intervals.iter().map(|iv| iv.duration).reduce(f64::min)
    }

    /// Onsets and ends, sorted, deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(2 * self.intervals.len());
        for iv in &self.intervals {
            for t in [iv.onset, iv.end()] {
                if out.last() != Some(&t) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Checks `|Ξ(t)| ≤ κ + t/τ` over `[0, horizon]`.
    ///
    /// `|Ξ|` is piecewise linear with kinks only at onsets and ends, so the
    /// excess over the (linear) bound is maximised at one of those points or
    /// at the horizon.
    pub fn check_slow_average(&self, budget: &DosBudget, horizon: f64) -> std::result::Result<(), SlowAverageViolation> {
        let mut points: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .filter(|&t| t <= horizon)
            .collect();
        points.push(horizon);
        for t in points {
            let xi = self.xi_measure(t);
            let bound = budget.bound(t);
            if xi > bound + BUDGET_TOL * bound.max(1.0) {
                return Err(SlowAverageViolation { t, xi, bound });
            }
        }
        Ok(())
    }

    /// Plain-text form: optional `# kappa=<v> tau=<v>` header, then one
    /// `h tau` pair per line.
    pub fn to_text(&self, budget: Option<&DosBudget>) -> String {
        let mut s = String::new();
        if let Some(b) = budget {
            let _ = writeln!(s, "# kappa={} tau={}", b.kappa, b.tau);
        }
        for iv in &self.intervals {
            let _ = writeln!(s, "{} {}", iv.onset, iv.duration);
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<(Self, Option<DosBudget>)> {
        let mut budget = None;
        let mut intervals = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if rest.contains("kappa=") {
                    budget = Some(parse_budget_header(rest, line_no)?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: line_no, message: format!("expected `h tau`, got `{line}`") });
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse { line: line_no, message: format!("`{s}`: {e}") })
            };
            intervals.push(DosInterval { onset: num(fields[0])?, duration: num(fields[1])? });
        }
        let seq = Self::new(intervals).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        Ok((seq, budget))
    }
}

fn parse_budget_header(rest: &str, line: usize) -> Result<DosBudget> {
    let mut kappa = None;
    let mut tau = None;
    for tok in rest.split_whitespace() {
        let parse = |v: &str| {
            v.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{v}`: {e}") })
        };
        if let Some(v) = tok.strip_prefix("kappa=") {
            kappa = Some(parse(v)?);
        } else if let Some(v) = tok.strip_prefix("tau=") {
            tau = Some(parse(v)?);
        }
    }
    match (kappa, tau) {
        (Some(k), Some(t)) => DosBudget::new(k, t).map_err(|e| Error::Parse { line, message: e.to_string() }),
        _ => Err(Error::Parse { line, message: "header needs both kappa= and tau=".into() }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowAverageViolation {
    pub t: f64,
    pub xi: f64,
    pub bound: f64,
}

/// Witness `(κ, τ)` for `|Ξ(t)| ≤ κ + t/τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosBudget {
    pub kappa: f64,
    pub tau: f64,
}

impl DosBudget {
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Input(format!("kappa {kappa} must be finite and >= 0")));
        }
        if !(tau > 0.0) {
            return Err(Error::Input(format!("tau {tau} must be > 0")));
        }
        Ok(Self { kappa, tau })
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.kappa + t / self.tau
    }

    /// Only budgets with `τ > 1` leave a nonzero fraction of time for updates.
    pub fn permits_stability(&self) -> bool {
        self.tau > 1.0
    }

    /// Longest interval starting at `onset` the budget admits, given the
    /// jammed time `xi_before` accumulated so far.
    fn max_duration_at(&self, onset: f64, xi_before: f64) -> f64 {
        (self.kappa + onset / self.tau - xi_before) / (1.0 - 1.0 / self.tau)
    }
}

/// Periodic jammer: `[onset + k·period, onset + k·period + duty·period)` for
/// every onset before `horizon`. Returns the sequence together with the
/// budget it satisfies, `κ = duty·period`, `τ = 1/duty`.
pub fn gen_periodic(onset: f64, period: f64, duty: f64, horizon: f64) -> Result<(DosSequence, DosBudget)> {
    if !(duty > 0.0 && duty < 1.0) {
        return Err(Error::Input(format!("duty {duty} must lie in (0, 1)")));
    }
    if !(period > 0.0) || !(onset >= 0.0) {
        return Err(Error::Input("period must be > 0 and onset >= 0".into()));
    }
    let mut intervals = Vec::new();
    let mut k = 0u64;
    loop {
        let h = onset + k as f64 * period;
        if h >= horizon {
            break;
        }
        intervals.push(DosInterval { onset: h, duration: duty * period });
        k += 1;
    }
    Ok((DosSequence::new(intervals)?, DosBudget::new(duty * period, 1.0 / duty)?))
}

/// Seeded random attacker that spends as much of the budget as it can.
///
/// Gaps are drawn uniformly from `[0, 2·τ·min_duration]` and durations from
/// `[min_duration, 3·min_duration]`; a duration the budget cannot afford is
/// clipped to the affordable maximum, and the interval is dropped when that
/// maximum is below `min_duration`.
pub fn gen_random_budgeted(budget: &DosBudget, min_duration: f64, seed: u64, horizon: f64) -> Result<DosSequence> {
    if !budget.permits_stability() {
        return Err(Error::Generation(format!("budget tau {} must exceed 1", budget.tau)));
    }
    if !(min_duration > 0.0) || !(horizon > 0.0) {
        return Err(Error::Generation("min_duration and horizon must be positive".into()));
    }
    if budget.max_duration_at(horizon, 0.0) < min_duration {
        return Err(Error::Generation(format!(
            "budget kappa={} tau={} cannot fit an interval of length {min_duration} before {horizon}",
            budget.kappa, budget.tau
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut intervals = Vec::new();
    let mut cursor = 0.0;
    let mut xi = 0.0;
    loop {
        let gap = rng.random_range(0.0..2.0 * budget.tau * min_duration);
        let want = min_duration * rng.random_range(1.0..3.0);
        let onset = cursor + gap;
        if onset >= horizon {
            break;
        }
        let duration = want.min(budget.max_duration_at(onset, xi));
        if duration >= min_duration {
            intervals.push(DosInterval { onset, duration });
            xi += duration;
            cursor = onset + duration;
        } else {
            cursor = onset;
        }
    }
    DosSequence::new(intervals)
}

/// Jams the earliest attempt times it can afford with intervals of length
/// `min_duration` starting exactly at the attempt.
pub fn gen_greedy_adversary(budget: &DosBudget, min_duration: f64, attempt_times: &[f64]) -> Result<DosSequence> {
    if !(min_duration > 0.0) {
        return Err(Error::Generation("min_duration must be positive".into()));
    }
    if attempt_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input("attempt times must be sorted".into()));
    }
    let mut intervals: Vec<DosInterval> = Vec::new();
    let mut xi = 0.0;
    for &a in attempt_times {
        if intervals.last().is_some_and(|iv| a < iv.end()) {
            continue;
        }
        let end = a + min_duration;
        let allowed = budget.bound(end);
        if xi + min_duration <= allowed - BUDGET_TOL * allowed.max(1.0) {
            intervals.push(DosInterval { onset: a, duration: min_duration });
            xi += min_duration;
        }
    }
    DosSequence::new(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two() -> DosSequence {
        DosSequence::from_pairs(&[(1.0, 1.0), (3.0, 0.5)]).unwrap()
    }

    #[test]
    fn last_onset_examples() {
        let s = two();
        assert_eq!(s.last_onset_index(0.5), None);
        assert_eq!(s.last_onset_index(1.0), None);
        assert_eq!(s.last_onset_index(2.0), Some(0));
        assert_eq!(s.last_onset_index(10.0), Some(1));
        assert_eq!(DosSequence::empty().last_onset_index(3.0), None);
    }

    #[test]
    fn jammed_examples() {
        let s = DosSequence::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert!(s.is_jammed(1.0));
        assert!(s.is_jammed(1.999));
        assert!(!s.is_jammed(2.0));
        assert!(!s.is_jammed(0.999));
        assert!(!DosSequence::empty().is_jammed(1.0));
    }

    #[test]
    fn xi_examples() {
        let s = two();
        assert_abs_diff_eq!(s.xi_measure(5.0), 1.5);
        assert_abs_diff_eq!(s.xi_measure(1.5), 0.5);
        assert_abs_diff_eq!(s.xi_measure(0.5), 0.0);
        assert_abs_diff_eq!(s.xi_measure(3.2), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn rejects_overlap_and_bad_durations() {
        assert!(DosSequence::from_pairs(&[(1.0, 1.0), (1.5, 1.0)]).is_err());
        assert!(DosSequence::from_pairs(&[(1.0, 0.0)]).is_err());
        assert!(DosSequence::from_pairs(&[(-1.0, 1.0)]).is_err());
        // Abutting intervals are allowed.
        assert!(DosSequence::from_pairs(&[(1.0, 1.0), (2.0, 1.0)]).is_ok());
    }

    #[test]
    fn slow_average_examples() {
        let s = two();
        // Breakpoint scan by hand: at t=2, |Ξ| = 1 > 0 + 2/3.
        let v = s.check_slow_average(&DosBudget::new(0.0, 3.0).unwrap(), 10.0).unwrap_err();
        assert_eq!(v.t, 2.0);
        assert_eq!(v.xi, 1.0);
        assert!(s.check_slow_average(&DosBudget::new(1.0, 3.0).unwrap(), 10.0).is_ok());
        assert!(DosSequence::empty().check_slow_average(&DosBudget::new(0.0, 100.0).unwrap(), 10.0).is_ok());
    }

    #[test]
    fn slow_average_with_small_tau_checks_onsets() {
        // τ < 1: the bound outgrows |Ξ|; a late onset cannot violate it.
        let s = DosSequence::from_pairs(&[(5.0, 1.0)]).unwrap();
        assert!(s.check_slow_average(&DosBudget::new(0.0, 0.5).unwrap(), 10.0).is_ok());
    }

    #[test]
    fn periodic_examples() {
        let (s, b) = gen_periodic(0.0, 1.0, 0.2, 3.0).unwrap();
        assert_eq!(s.intervals().len(), 3);
        for (k, iv) in s.intervals().iter().enumerate() {
            assert_eq!(iv.onset, k as f64);
            assert_abs_diff_eq!(iv.duration, 0.2);
        }
        assert!(s.check_slow_average(&b, 3.0).is_ok());
        let (s, b) = gen_periodic(0.3, 2.0, 0.01, 1000.0).unwrap();
        assert!(s.check_slow_average(&b, 1000.0).is_ok());
        assert!((s.xi_measure(1000.0) - 10.0).abs() < 0.03);
        assert!(gen_periodic(0.0, 1.0, 1.0, 3.0).is_err());
        assert!(gen_periodic(0.0, 1.0, 0.0, 3.0).is_err());
    }

    #[test]
    fn random_generator_is_deterministic_and_admissible() {
        let b = DosBudget::new(1.0, 4.0).unwrap();
        for seed in 0..50 {
            let s = gen_random_budgeted(&b, 0.2, seed, 100.0).unwrap();
            assert!(s.check_slow_average(&b, 200.0).is_ok());
            assert!(s.intervals().iter().all(|iv| iv.duration >= 0.2));
            assert_eq!(s, gen_random_budgeted(&b, 0.2, seed, 100.0).unwrap());
        }
    }

    #[test]
    fn random_generator_tight_budget() {
        let b = DosBudget::new(0.0, 10.0).unwrap();
        let s = gen_random_budgeted(&b, 0.1, 7, 10.0).unwrap();
        assert!(s.xi_measure(10.0) <= 1.0 + 1e-12);
        assert!(matches!(gen_random_budgeted(&b, 5.0, 7, 10.0), Err(Error::Generation(_))));
        assert!(gen_random_budgeted(&DosBudget::new(1.0, 0.5).unwrap(), 0.1, 1, 10.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let none = gen_greedy_adversary(&DosBudget::new(0.0, 1e12).unwrap(), 0.1, &[1.0, 2.0, 3.0]).unwrap();
        assert!(none.is_empty());
        let one = gen_greedy_adversary(&DosBudget::new(10.0, 2.0).unwrap(), 0.5, &[5.0]).unwrap();
        assert_eq!(one.intervals(), &[DosInterval { onset: 5.0, duration: 0.5 }]);
        assert!(one.is_jammed(5.0));

        let attempts: Vec<f64> = (0..200).map(|k| k as f64 * 0.25).collect();
        let b = DosBudget::new(0.5, 3.0).unwrap();
        let s = gen_greedy_adversary(&b, 0.3, &attempts).unwrap();
        assert!(!s.is_empty());
        assert!(s.check_slow_average(&b, 60.0).is_ok());
        assert!(gen_greedy_adversary(&b, 0.3, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = DosSequence::from_pairs(&[(0.1, 0.30000000000000004), (1.0 / 3.0, 1e-7)]);
        // Overlapping, so build a valid one instead.
        assert!(s.is_err());
        let s = DosSequence::from_pairs(&[(0.1, 0.2), (1.0 / 3.0 + 1.0, 1e-7), (7.25, 2.0 / 3.0)]).unwrap();
        let b = DosBudget::new(0.7, 13.0 / 3.0).unwrap();
        let text = s.to_text(Some(&b));
        assert!(text.starts_with("# kappa=0.7 tau="));
        let (back, bb) = DosSequence::parse_text(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(bb, Some(b));
        let (back, bb) = DosSequence::parse_text(&s.to_text(None)).unwrap();
        assert_eq!(back, s);
        assert_eq!(bb, None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = DosSequence::parse_text("# kappa=1 tau=2\n0 1\n3 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = DosSequence::parse_text("0 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
