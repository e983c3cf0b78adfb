//! LTI process under sample-and-hold state feedback.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{decay_envelope, expm, DecayEnvelope, RealMatrix, Vector};

/// What the actuator applies while the channel is jammed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Keep applying `K·x_held` from the last received sample.
    #[default]
    HoldLast,
    /// Apply zero input while jammed; the last received sample is re-applied
    /// once the jam ends.
    ZeroDuringDos,
}

/// `ẋ = Ax + Bu` with `u = K·x_held`.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    a: RealMatrix,
    b: RealMatrix,
    k: RealMatrix,
    phi: RealMatrix,
    bk: RealMatrix,
    decay: DecayEnvelope,
    pub input_mode: InputMode,
}

impl LtiPlant {
    /// Validates dimensions and requires `Φ = A + BK` to admit a decay envelope.
    pub fn new(a: RealMatrix, b: RealMatrix, k: RealMatrix, input_mode: InputMode) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::Dimension(format!("A must be square, got {}x{}", a.rows(), a.cols())));
        }
        if b.rows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.rows())));
        }
        let m = b.cols();
        if k.rows() != m || k.cols() != n {
            return Err(Error::Dimension(format!(
                "K must be {m}x{n}, got {}x{}",
                k.rows(),
                k.cols()
            )));
        }
        let bk = b.mul(&k)?;
        let phi = a.add(&bk)?;
        let decay = decay_envelope(&phi)?;
        Ok(Self { a, b, k, phi, bk, decay, input_mode })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn a(&self) -> &RealMatrix {
        &self.a
    }

    pub fn b(&self) -> &RealMatrix {
        &self.b
    }

    pub fn k(&self) -> &RealMatrix {
        &self.k
    }

    /// `Φ = A + BK`.
    pub fn closed_loop_matrix(&self) -> &RealMatrix {
        &self.phi
    }

    pub fn bk(&self) -> &RealMatrix {
        &self.bk
    }

    /// The decay envelope of `Φ` computed at construction.
    pub fn decay(&self) -> DecayEnvelope {
        self.decay
    }

    pub fn control(&self, x_held: &Vector) -> Vector {
        self.k.as_dmatrix() * x_held
    }

    /// Transition over `dt` of `ẋ = Ax + BK·x_held` with `x_held` constant.
    pub fn hold_transition(&self, dt: f64) -> Result<HoldTransition> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Input(format!("step {dt} must be positive and finite")));
        }
        Ok(HoldTransition::compute(self.a.as_dmatrix(), self.bk.as_dmatrix(), dt))
    }

    /// Exact state after `dt` with the held sample applied throughout.
    pub fn exact_hold_step(&self, x0: &Vector, x_held: &Vector, dt: f64) -> Result<Vector> {
        let n = self.state_dim();
        if x0.len() != n || x_held.len() != n {
            return Err(Error::Dimension(format!("state vectors must have length {n}")));
        }
        Ok(self.hold_transition(dt)?.apply(x0, x_held))
    }
}

/// `x(dt) = flow·x0 + held_gain·x_held`, read off the exponential of the
/// augmented generator `[[A, BK], [0, 0]]`.
#[derive(Debug, Clone)]
pub struct HoldTransition {
    pub flow: DMatrix<f64>,
    pub held_gain: DMatrix<f64>,
}

impl HoldTransition {
    pub(crate) fn compute(drift: &DMatrix<f64>, coupling: &DMatrix<f64>, dt: f64) -> Self {
        let n = drift.nrows();
        let mut gen = DMatrix::<f64>::zeros(2 * n, 2 * n);
        gen.view_mut((0, 0), (n, n)).copy_from(&(drift * dt));
        gen.view_mut((0, n), (n, n)).copy_from(&(coupling * dt));
        let e = expm(&gen);
        Self {
            flow: e.view((0, 0), (n, n)).into_owned(),
            held_gain: e.view((0, n), (n, n)).into_owned(),
        }
    }

    pub fn apply(&self, x0: &Vector, x_held: &Vector) -> Vector {
        &self.flow * x0 + &self.held_gain * x_held
    }

    /// State after the step with zero input.
    pub fn apply_free(&self, x0: &Vector) -> Vector {
        &self.flow * x0
    }
}

/// Loop state as seen right after handling the attempt at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub t: f64,
    pub x: Vector,
    /// Last successfully transmitted sample; zero before the first success.
    pub x_held: Vector,
    /// Time of the last success, `None` before the first one.
    pub t_held: Option<f64>,
    pub last_attempt_failed: bool,
}

impl LoopState {
    pub fn initial(x0: Vector) -> Self {
        let n = x0.len();
        Self { t: 0.0, x: x0, x_held: Vector::zeros(n), t_held: None, last_attempt_failed: false }
    }

    /// `e = x_held − x`.
    pub fn error_vector(&self) -> Vector {
        &self.x_held - &self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64, b: f64, k: f64) -> LtiPlant {
        LtiPlant::new(
            RealMatrix::new(1, 1, &[a]).unwrap(),
            RealMatrix::new(1, 1, &[b]).unwrap(),
            RealMatrix::new(1, 1, &[k]).unwrap(),
            InputMode::HoldLast,
        )
        .unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn closed_loop_matrix_examples() {
        let p = LtiPlant::new(
            RealMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            RealMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            RealMatrix::from_rows(&[vec![-1.0, -2.0]]).unwrap(),
            InputMode::HoldLast,
        )
        .unwrap();
        let expected = RealMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -2.0]]).unwrap();
        assert_eq!(p.closed_loop_matrix(), &expected);

        assert_eq!(scalar(1.0, 1.0, -2.0).closed_loop_matrix()[(0, 0)], -1.0);
        // K = 0 gives Φ = A (stable A needed for construction).
        assert_eq!(scalar(-0.5, 1.0, 0.0).closed_loop_matrix()[(0, 0)], -0.5);
    }

    #[test]
    fn rejects_bad_plants() {
        let a = RealMatrix::identity(2);
        let b = RealMatrix::zeros(2, 1);
        assert!(matches!(
            LtiPlant::new(a.clone(), b.clone(), RealMatrix::zeros(1, 3), InputMode::HoldLast),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            LtiPlant::new(a, b, RealMatrix::zeros(1, 2), InputMode::HoldLast),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn hold_step_examples() {
        // A = 0, BK = 0: nothing moves. Build it by hand since Φ = 0 is not Hurwitz.
        let t = HoldTransition::compute(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), 3.0);
        assert_eq!(t.apply(&v(&[1.0, -2.0]), &v(&[5.0, 5.0])), v(&[1.0, -2.0]));

        let p = scalar(-1.0, 1.0, 0.0);
        let x = p.exact_hold_step(&v(&[1.0]), &v(&[42.0]), 1.0).unwrap();
        assert_abs_diff_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-15);

        // Pure integrator of a constant: A = 0, BK = 1.
        let t = HoldTransition::compute(&DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0), 2.0);
        assert_abs_diff_eq!(t.apply(&v(&[0.0]), &v(&[1.0]))[0], 2.0, epsilon = 1e-15);

        assert!(p.exact_hold_step(&v(&[1.0]), &v(&[0.0]), 0.0).is_err());
        assert!(p.exact_hold_step(&v(&[1.0]), &v(&[0.0]), -1.0).is_err());
        assert!(p.exact_hold_step(&v(&[1.0, 2.0]), &v(&[0.0]), 1.0).is_err());
    }

    #[test]
    fn error_vector_examples() {
        let mut s = LoopState::initial(v(&[1.0, 0.0]));
        // Start-up under DoS: nothing held yet, so e = −x.
        assert_eq!(s.error_vector(), v(&[-1.0, 0.0]));
        s.x_held = v(&[0.0, 1.0]);
        assert_eq!(s.error_vector(), v(&[-1.0, 1.0]));
        s.x_held = s.x.clone();
        assert_eq!(s.error_vector(), v(&[0.0, 0.0]));
    }
}
