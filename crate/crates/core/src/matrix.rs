//! Dense linear-algebra kernel: matrix exponential, norms, Lyapunov solves
//! and the exponential envelopes that certify `‖e^{Mt}‖` bounds.
//!
//! Storage and factorizations (LU, symmetric eigen, Schur) come from
//! `nalgebra`; the exponential, the spectral-norm iteration, the vectorized
//! Lyapunov solve and the envelope construction live here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::ops::Index;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Number of grid points used when validating an envelope.
pub const ENVELOPE_GRID_POINTS: usize = 200;
/// Multiplicative slack allowed by envelope validation.
pub const ENVELOPE_SLACK: f64 = 1e-9;

const SPECTRAL_TOL: f64 = 1e-12;
const SPECTRAL_MAX_ITER: usize = 10_000;

/// Dense real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix(DMatrix<f64>);

impl RealMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix must have at least one row and column".into()));
        }
        if rows * cols != entries.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged row lists".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(r, c, &flat)
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Dimension("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.0.is_square()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn mul(&self, rhs: &RealMatrix) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self(&self.0 * &rhs.0))
    }

    pub fn add(&self, rhs: &RealMatrix) -> Result<Self> {
        if self.0.shape() != rhs.0.shape() {
            return Err(Error::Dimension("cannot add matrices of different shapes".into()));
        }
        Ok(Self(&self.0 + &rhs.0))
    }

    pub fn sub(&self, rhs: &RealMatrix) -> Result<Self> {
        if self.0.shape() != rhs.0.shape() {
            return Err(Error::Dimension("cannot subtract matrices of different shapes".into()));
        }
        Ok(Self(&self.0 - &rhs.0))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(&self.0 * k)
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols()
            )));
        }
        Ok(&self.0 * v)
    }

    /// Largest absolute entry difference to another matrix of equal shape.
    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

fn require_square(m: &RealMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} must be square, got {}x{}", m.rows(), m.cols())))
    }
}

// Padé [13/13] coefficients and the scaling threshold for double precision.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA_13: f64 = 5.371920351148152;

/// `e^M` by scaling and squaring around a degree-13 Padé approximant.
///
/// Input is assumed square and finite; callers going through [`mat_exp`]
/// get that checked.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm1 = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if norm1 == 0.0 {
        return ident;
    }
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `e^{Mt}`.
pub fn mat_exp(m: &RealMatrix, t: f64) -> Result<RealMatrix> {
    require_square(m, "exponentiated matrix")?;
    if !t.is_finite() {
        return Err(Error::Input(format!("time {t} is not finite")));
    }
    RealMatrix::from_dmatrix(expm(&(m.as_dmatrix() * t)))
}

fn largest_symmetric_eigenvalue(g: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(g.clone()).eigenvalues.max()
}

/// Spectral norm on raw storage; see [`spectral_norm`].
pub fn spectral_norm_dense(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    // Start from the column of MᵀM with the largest norm: deterministic and
    // never zero unless M is.
    let (j, best) = g
        .column_iter()
        .enumerate()
        .map(|(j, c)| (j, c.norm()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if best == 0.0 {
        return 0.0;
    }
    let mut v: DVector<f64> = g.column(j) / best;
    for _ in 0..SPECTRAL_MAX_ITER {
        let w = &g * &v;
        let lam = v.dot(&w);
        let residual = (&w - &v * lam).norm();
        if residual <= SPECTRAL_TOL * lam.abs() {
            return lam.max(0.0).sqrt();
        }
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
    }
    // Near-degenerate leading singular values: fall back to a direct solve.
    largest_symmetric_eigenvalue(&g).max(0.0).sqrt()
}

/// Largest singular value, via power iteration on `MᵀM`.
pub fn spectral_norm(m: &RealMatrix) -> f64 {
    spectral_norm_dense(m.as_dmatrix())
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn log_norm(m: &RealMatrix) -> Result<f64> {
    require_square(m, "log-norm argument")?;
    let a = m.as_dmatrix();
    let sym = (a + a.transpose()) * 0.5;
    Ok(largest_symmetric_eigenvalue(&sym))
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_eigen_range(m: &RealMatrix) -> Result<(f64, f64)> {
    require_square(m, "symmetric matrix")?;
    let e = SymmetricEigen::new(m.as_dmatrix().clone()).eigenvalues;
    Ok((e.min(), e.max()))
}

/// Largest real part over the eigenvalues of `M`.
pub fn spectral_abscissa(m: &RealMatrix) -> Result<f64> {
    require_square(m, "matrix")?;
    let eig = m.as_dmatrix().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &RealMatrix) -> Result<bool> {
    Ok(spectral_abscissa(m)? < 0.0)
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

/// Solves `ΦᵀP + PΦ + Q = 0` for the symmetric `P`.
///
/// Uses the vectorized `n²×n²` system, which is fine at the plant sizes this
/// crate targets (n ≤ 8).
pub fn solve_lyapunov(phi: &RealMatrix, q: &RealMatrix) -> Result<RealMatrix> {
    require_square(phi, "Phi")?;
    require_square(q, "Q")?;
    let n = phi.rows();
    if q.rows() != n {
        return Err(Error::Dimension(format!("Q is {}x{}, Phi is {n}x{n}", q.rows(), q.cols())));
    }
    if !is_symmetric(q.as_dmatrix()) {
        return Err(Error::Input("Q must be symmetric".into()));
    }
    let (q_min, _) = symmetric_eigen_range(q)?;
    if q_min <= 0.0 {
        return Err(Error::Input(format!("Q must be positive definite (min eigenvalue {q_min})")));
    }
    let abscissa = spectral_abscissa(phi)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }

    let pt = phi.as_dmatrix().transpose();
    let ident = DMatrix::<f64>::identity(n, n);
    let lhs = ident.kronecker(&pt) + pt.kronecker(&ident);
    // Column-major vec(Q).
    let rhs = -DVector::from_column_slice(q.as_dmatrix().as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = phi.as_dmatrix().transpose() * &p + &p * phi.as_dmatrix() + q.as_dmatrix();
    let q_norm = spectral_norm(q);
    // Frobenius bounds the spectral norm from above; power iteration on a
    // round-off-level residual would not converge.
    let res_norm = residual.norm();
    if res_norm > 1e-8 * q_norm {
        return Err(Error::Singular(format!(
            "Lyapunov residual {res_norm:e} exceeds 1e-8·‖Q‖ = {:e}",
            1e-8 * q_norm
        )));
    }
    RealMatrix::from_dmatrix(p)
}

/// `‖e^{Φt}‖ ≤ mu·e^{−lambda·t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub mu: f64,
    pub lambda: f64,
}

impl DecayEnvelope {
    pub fn bound(&self, t: f64) -> f64 {
        self.mu * (-self.lambda * t).exp()
    }

    /// Checks the defining inequality on a log-spaced grid over `[0, 50/lambda]`.
    pub fn validate_against(&self, phi: &RealMatrix) -> Result<()> {
        validate_on_grid(phi, 50.0 / self.lambda, |t| self.bound(t))
    }
}

/// `‖e^{At}‖ ≤ theta·e^{rho·t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthEnvelope {
    pub theta: f64,
    pub rho: f64,
}

impl GrowthEnvelope {
    pub fn bound(&self, t: f64) -> f64 {
        self.theta * (self.rho * t).exp()
    }

    pub fn validate_against(&self, a: &RealMatrix) -> Result<()> {
        validate_on_grid(a, 50.0 / self.rho.max(1.0), |t| self.bound(t))
    }
}

/// `t = 0` followed by log-spaced points up to `t_end`.
pub fn envelope_grid(t_end: f64) -> Vec<f64> {
    let lo = (t_end * 1e-6).ln();
    let hi = t_end.ln();
    let k = ENVELOPE_GRID_POINTS - 1;
    std::iter::once(0.0)
        .chain((0..k).map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp()))
        .collect()
}

fn validate_on_grid(m: &RealMatrix, t_end: f64, bound: impl Fn(f64) -> f64) -> Result<()> {
    for t in envelope_grid(t_end) {
        let norm = spectral_norm_dense(&expm(&(m.as_dmatrix() * t)));
        let b = bound(t);
        if norm > b * (1.0 + ENVELOPE_SLACK) {
            return Err(Error::EnvelopeViolation { t, norm, bound: b });
        }
    }
    Ok(())
}

/// Lyapunov-based decay certificate with `Q = I`:
/// `mu = sqrt(α₂/α₁)`, `lambda = 1/(2α₂)` where α₁, α₂ are the extreme
/// eigenvalues of `P`. Grid-validated before being returned.
pub fn decay_envelope(phi: &RealMatrix) -> Result<DecayEnvelope> {
    let p = solve_lyapunov(phi, &RealMatrix::identity(phi.rows()))?;
    let (a1, a2) = symmetric_eigen_range(&p)?;
    if a1 <= 0.0 {
        return Err(Error::Singular(format!("Lyapunov solution not positive definite ({a1})")));
    }
    let env = DecayEnvelope { mu: (a2 / a1).sqrt().max(1.0), lambda: 1.0 / (2.0 * a2) };
    env.validate_against(phi)?;
    Ok(env)
}

/// `theta = 1`, `rho = max(0, log_norm(A))`, grid-validated.
pub fn growth_envelope(a: &RealMatrix) -> Result<GrowthEnvelope> {
    let env = GrowthEnvelope { theta: 1.0, rho: log_norm(a)?.max(0.0) };
    env.validate_against(a)?;
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&RealMatrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(e, RealMatrix::identity(2));
    }

    #[test]
    fn exp_of_nilpotent() {
        let n = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        for t in [0.3, 1.0, 7.5] {
            let e = mat_exp(&n, t).unwrap();
            assert!(e.max_abs_diff(&m(&[&[1.0, t], &[0.0, 1.0]])) < 1e-12);
        }
    }

    #[test]
    fn exp_of_diagonal_matches_scalar_series() {
        // Oracle: truncated scalar series per diagonal entry.
        fn series(x: f64) -> f64 {
            let (mut term, mut sum) = (1.0, 1.0);
            for k in 1..60 {
                term *= x / k as f64;
                sum += term;
            }
            sum
        }
        let e = mat_exp(&RealMatrix::diag(&[-1.0, -2.0]).unwrap(), 1.0).unwrap();
        assert!((e[(0, 0)] - series(-1.0)).abs() < 1e-14);
        assert!((e[(1, 1)] - series(-2.0)).abs() < 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matches!(mat_exp(&RealMatrix::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
        assert!(matches!(mat_exp(&RealMatrix::identity(2), f64::NAN), Err(Error::Input(_))));
        assert!(RealMatrix::new(1, 1, &[f64::INFINITY]).is_err());
        assert!(RealMatrix::new(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn exp_large_norm_is_scaled() {
        let a = m(&[&[-30.0, 40.0], &[-40.0, -30.0]]);
        // e^{At} for [[a, b], [-b, a]] is e^{a t}·rotation(b t).
        let t = 0.7;
        let e = mat_exp(&a, t).unwrap();
        let r = (-30.0 * t).exp();
        assert!((e[(0, 0)] - r * (40.0 * t).cos()).abs() < 1e-10 * r);
        assert!((e[(0, 1)] - r * (40.0 * t).sin()).abs() < 1e-10 * r);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(&RealMatrix::identity(3)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_norm(&RealMatrix::diag(&[3.0, -5.0]).unwrap()), 5.0, epsilon = 1e-12);
        // 2x2 SVD oracle: singular values of [[0,2],[0,0]] are {2, 0}.
        assert_abs_diff_eq!(spectral_norm(&m(&[&[0.0, 2.0], &[0.0, 0.0]])), 2.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&RealMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn spectral_norm_near_degenerate_falls_back() {
        let a = RealMatrix::diag(&[1.0, 1.0 - 1e-9, 0.3]).unwrap();
        assert_abs_diff_eq!(spectral_norm(&a), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_norm_examples() {
        assert_abs_diff_eq!(log_norm(&RealMatrix::diag(&[-1.0, -1.0]).unwrap()).unwrap(), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_norm(&RealMatrix::diag(&[0.5, -3.0]).unwrap()).unwrap(), 0.5, epsilon = 1e-14);
        // Symmetric part [[0,2],[2,0]] has characteristic polynomial λ² − 4.
        assert_abs_diff_eq!(log_norm(&m(&[&[0.0, 4.0], &[0.0, 0.0]])).unwrap(), 2.0, epsilon = 1e-14);
        assert!(log_norm(&RealMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&RealMatrix::diag(&[-1.0, -1.0]).unwrap(), &RealMatrix::diag(&[2.0, 2.0]).unwrap()).unwrap();
        assert!(p.max_abs_diff(&RealMatrix::identity(2)) < 1e-14);
        let p = solve_lyapunov(&m(&[&[-3.0]]), &m(&[&[6.0]])).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_errors() {
        let q = RealMatrix::identity(2);
        assert!(matches!(solve_lyapunov(&RealMatrix::identity(2), &q), Err(Error::NotHurwitz { .. })));
        let asym = m(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(solve_lyapunov(&RealMatrix::diag(&[-1.0, -1.0]).unwrap(), &asym), Err(Error::Input(_))));
        let indefinite = RealMatrix::diag(&[1.0, -1.0]).unwrap();
        assert!(matches!(solve_lyapunov(&RealMatrix::diag(&[-1.0, -1.0]).unwrap(), &indefinite), Err(Error::Input(_))));
        assert!(matches!(solve_lyapunov(&RealMatrix::identity(2), &RealMatrix::identity(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn decay_envelope_examples() {
        let env = decay_envelope(&RealMatrix::diag(&[-1.0, -1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(env.mu, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(env.lambda, 1.0, epsilon = 1e-12);
        for a in [0.2, 1.0, 7.0] {
            let env = decay_envelope(&m(&[&[-a]])).unwrap();
            assert_abs_diff_eq!(env.mu, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(env.lambda, a, epsilon = 1e-12 * a);
        }
        assert!(matches!(decay_envelope(&m(&[&[0.1]])), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn decay_envelope_non_normal() {
        let phi = m(&[&[-1.0, 10.0], &[0.0, -2.0]]);
        let env = decay_envelope(&phi).unwrap();
        assert!(env.mu > 1.0);
        // A direct grid check with an independent time grid.
        for i in 0..400 {
            let t = i as f64 * 0.05;
            let n = spectral_norm(&mat_exp(&phi, t).unwrap());
            assert!(n <= env.bound(t) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn envelope_validation_catches_bad_certificates() {
        let phi = m(&[&[-1.0, 10.0], &[0.0, -2.0]]);
        let bad = DecayEnvelope { mu: 1.0, lambda: 1.0 };
        assert!(matches!(bad.validate_against(&phi), Err(Error::EnvelopeViolation { .. })));
    }

    #[test]
    fn growth_envelope_examples() {
        assert_eq!(growth_envelope(&RealMatrix::zeros(2, 2)).unwrap(), GrowthEnvelope { theta: 1.0, rho: 0.0 });
        assert_eq!(growth_envelope(&RealMatrix::diag(&[-1.0, -1.0]).unwrap()).unwrap(), GrowthEnvelope { theta: 1.0, rho: 0.0 });
        let g = growth_envelope(&m(&[&[0.0, 4.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(g.theta, 1.0);
        assert_abs_diff_eq!(g.rho, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn grid_shape() {
        let g = envelope_grid(10.0);
        assert_eq!(g.len(), ENVELOPE_GRID_POINTS);
        assert_eq!(g[0], 0.0);
        assert!((g[g.len() - 1] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
