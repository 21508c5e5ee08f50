//! Scalar 2×2 block algebra.
//!
//! Every matrix in the coupled model has the form `B ⊗ I_d` where `B` is a
//! real 2×2 matrix, so all 2d-dimensional linear algebra collapses onto the
//! four entries of `B`. The tensor factor stays implicit; [`Block2::apply`]
//! materializes the action on a pair of d-vectors when a sampler needs it.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SINGULAR_REL: f64 = 1e-300;

/// A 2×2 real matrix standing for `B ⊗ I_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Block2 {
    pub const IDENTITY: Block2 = Block2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Block2 = Block2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Block2 { a11, a12, a21, a22 }
    }

    pub const fn symmetric(a11: f64, a12: f64, a22: f64) -> Self {
        Block2::new(a11, a12, a12, a22)
    }

    pub const fn diag(a11: f64, a22: f64) -> Self {
        Block2::new(a11, 0.0, 0.0, a22)
    }

    pub fn scalar(s: f64) -> Self {
        Block2::diag(s, s)
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: [f64; 2], v: [f64; 2]) -> Self {
        Block2::new(u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn is_symmetric(&self) -> bool {
        self.a12 == self.a21
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.a12 == 0.0
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn transpose(&self) -> Self {
        Block2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(&self, s: f64) -> Self {
        Block2::new(s * self.a11, s * self.a12, s * self.a21, s * self.a22)
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22)
            .sqrt()
    }

    /// `self · X · selfᵀ`, the congruence used for covariance propagation.
    pub fn congruence(&self, x: &Block2) -> Block2 {
        *self * *x * self.transpose()
    }

    /// Contraction `Σ_ij self_ij · other_ij`.
    pub fn contract(&self, other: &Block2) -> f64 {
        self.a11 * other.a11 + self.a12 * other.a12 + self.a21 * other.a21 + self.a22 * other.a22
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Action of `self ⊗ I_d` on the stacked vector `(x, y)`.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), y.len());
        let ox = x
            .iter()
            .zip(y)
            .map(|(a, b)| self.a11 * a + self.a12 * b)
            .collect();
        let oy = x
            .iter()
            .zip(y)
            .map(|(a, b)| self.a21 * a + self.a22 * b)
            .collect();
        (ox, oy)
    }

    /// Max absolute entry difference.
    pub fn max_diff(&self, other: &Block2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn inverse(&self) -> Result<Block2> {
        block_inverse(*self)
    }
}

impl Add for Block2 {
    type Output = Block2;
    fn add(self, o: Block2) -> Block2 {
        Block2::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }
}

impl Sub for Block2 {
    type Output = Block2;
    fn sub(self, o: Block2) -> Block2 {
        Block2::new(
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
        )
    }
}

impl Neg for Block2 {
    type Output = Block2;
    fn neg(self) -> Block2 {
        self.scale(-1.0)
    }
}

impl Mul for Block2 {
    type Output = Block2;
    fn mul(self, o: Block2) -> Block2 {
        Block2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Mul<f64> for Block2 {
    type Output = Block2;
    fn mul(self, s: f64) -> Block2 {
        self.scale(s)
    }
}

/// Eigen-structure of a symmetric block.
///
/// `tau_plus`/`tau_minus` are the decay rates `-2λ±`; they are positive for a
/// stable relaxation matrix and are the preferred parametrization downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDecomposition {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
    pub tau_plus: f64,
    pub tau_minus: f64,
}

impl ModeDecomposition {
    pub fn projector_plus(&self) -> Block2 {
        Block2::outer(self.v_plus, self.v_plus)
    }

    pub fn projector_minus(&self) -> Block2 {
        Block2::outer(self.v_minus, self.v_minus)
    }

    /// `f(λ₊) P₊ + f(λ₋) P₋`.
    pub fn functional(&self, f: impl Fn(f64) -> f64) -> Block2 {
        self.projector_plus().scale(f(self.lambda_plus))
            + self.projector_minus().scale(f(self.lambda_minus))
    }
}

/// Common/difference-mode basis `(1, ±1)/√2`.
pub const V_PLUS: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
pub const V_MINUS: [f64; 2] = [
    std::f64::consts::FRAC_1_SQRT_2,
    -std::f64::consts::FRAC_1_SQRT_2,
];

fn check_finite(m: &Block2) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite block entries {m:?}")))
    }
}

/// Eigendecomposition of a symmetric block.
///
/// Equal diagonals (the coupled-OU case) always use the exact common and
/// difference vectors, so `λ± = a11 ± a12`. Otherwise the eigenvector with the
/// larger overlap on `(1,1)` is labelled `+`.
pub fn spectral_decompose(m: Block2) -> Result<ModeDecomposition> {
    check_finite(&m)?;
    if !m.is_symmetric() {
        return Err(Error::UnsupportedShape(format!(
            "spectral decomposition needs a symmetric block, got {m:?}"
        )));
    }
    let (lambda_plus, lambda_minus, v_plus, v_minus) = if m.a11 == m.a22 {
        (m.a11 + m.a12, m.a11 - m.a12, V_PLUS, V_MINUS)
    } else {
        let phi = 0.5 * (2.0 * m.a12).atan2(m.a11 - m.a22);
        let (s, c) = phi.sin_cos();
        let e1 = [c, s];
        let e2 = [-s, c];
        let l1 = m.a11 * c * c + 2.0 * m.a12 * s * c + m.a22 * s * s;
        let l2 = m.a11 * s * s - 2.0 * m.a12 * s * c + m.a22 * c * c;
        let overlap = |e: [f64; 2]| e[0] + e[1];
        let orient = |e: [f64; 2], sign: f64| {
            if sign < 0.0 {
                [-e[0], -e[1]]
            } else {
                e
            }
        };
        let (lp, vp, lm, vm) = if overlap(e1).abs() >= overlap(e2).abs() {
            (l1, e1, l2, e2)
        } else {
            (l2, e2, l1, e1)
        };
        let vp = orient(vp, overlap(vp));
        let vm = orient(vm, vm[0] - vm[1]);
        (lp, lm, vp, vm)
    };
    Ok(ModeDecomposition {
        lambda_plus,
        lambda_minus,
        v_plus,
        v_minus,
        tau_plus: -2.0 * lambda_plus,
        tau_minus: -2.0 * lambda_minus,
    })
}

/// `exp(m t)`.
///
/// Symmetric blocks go through the spectral decomposition (written as
/// `e^{at}(cosh(bt) I + sinh(bt) J)` when the diagonal is constant); lower-triangular
/// blocks with equal diagonal use `exp(-βt)(I + N t)` with `N` nilpotent.
pub fn mat_exp(m: Block2, t: f64) -> Result<Block2> {
    check_finite(&m)?;
    if !t.is_finite() {
        return Err(Error::invalid(format!("non-finite time {t}")));
    }
    if t == 0.0 {
        return Ok(Block2::IDENTITY);
    }
    if m.is_symmetric() && m.a11 == m.a22 {
        let e = (m.a11 * t).exp();
        let (c, s) = ((m.a12 * t).cosh(), (m.a12 * t).sinh());
        return Ok(Block2::symmetric(e * c, e * s, e * c));
    }
    if m.is_symmetric() {
        let modes = spectral_decompose(m)?;
        return Ok(modes.functional(|l| (l * t).exp()));
    }
    if m.is_lower_triangular() && m.a11 == m.a22 {
        let e = (m.a11 * t).exp();
        return Ok(Block2::new(e, 0.0, e * m.a21 * t, e));
    }
    Err(Error::UnsupportedShape(format!(
        "matrix exponential implemented for symmetric or equal-diagonal lower-triangular blocks, got {m:?}"
    )))
}

pub fn block_inverse(m: Block2) -> Result<Block2> {
    check_finite(&m)?;
    let det = m.det();
    let scale = m.max_abs().powi(2);
    if det == 0.0 || det.abs() < SINGULAR_REL * scale || !det.is_finite() {
        return Err(Error::SingularMatrix { det });
    }
    Ok(Block2::new(m.a22, -m.a12, -m.a21, m.a11).scale(1.0 / det))
}

/// Conditional variance of the second channel given the first, and the
/// regression gain, for a symmetric positive-definite block.
pub fn schur_conditional(c: Block2) -> Result<(f64, f64)> {
    check_finite(&c)?;
    if c.a11 <= 0.0 || c.det() <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("{c:?}")));
    }
    let gain = c.a12 / c.a11;
    Ok((c.a22 - c.a12 * gain, gain))
}

/// Lower Cholesky factor of a symmetric positive-definite block.
pub fn cholesky(c: Block2) -> Result<Block2> {
    let (cond, gain) = schur_conditional(c)?;
    let l11 = c.a11.sqrt();
    Ok(Block2::new(l11, 0.0, gain * l11, cond.sqrt()))
}
