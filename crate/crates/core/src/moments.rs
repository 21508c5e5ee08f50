//! Exact first and second moments of the forward process.

use serde::{Deserialize, Serialize};

use crate::blockmat::{self, Block2};
use crate::error::{Error, Result};
use crate::schedule::ScheduleSpec;

/// Cross-channel coupling of the relaxation matrix.
///
/// `Scheduled` is anisotropic coupling whose strength follows a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Coupling {
    Symmetric { g: f64 },
    Anisotropic { g: f64 },
    Scheduled(ScheduleSpec),
}

/// Parameters of `dZ = M Z dt + Σ_W dW`.
///
/// `noise_corr` is the correlation `ρ` between the two channels' Wiener
/// increments, so that `Σ_W Σ_Wᵀ = σ_W² [[1, ρ], [ρ, 1]]`. It is zero in the
/// standard model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub beta: f64,
    pub coupling: Coupling,
    pub sigma_w2: f64,
    #[serde(default)]
    pub noise_corr: f64,
    pub dim: usize,
}

impl ModelSpec {
    pub fn symmetric(beta: f64, g: f64, sigma_w2: f64, dim: usize) -> Self {
        ModelSpec { beta, coupling: Coupling::Symmetric { g }, sigma_w2, noise_corr: 0.0, dim }
    }

    pub fn anisotropic(beta: f64, g: f64, sigma_w2: f64, dim: usize) -> Self {
        ModelSpec { beta, coupling: Coupling::Anisotropic { g }, sigma_w2, noise_corr: 0.0, dim }
    }

    pub fn scheduled(beta: f64, schedule: ScheduleSpec, sigma_w2: f64, dim: usize) -> Self {
        ModelSpec { beta, coupling: Coupling::Scheduled(schedule), sigma_w2, noise_corr: 0.0, dim }
    }

    pub fn with_noise_corr(mut self, rho: f64) -> Self {
        self.noise_corr = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.sigma_w2.is_finite() && self.sigma_w2 > 0.0) {
            return Err(Error::invalid(format!(
                "sigma_w2 must be positive, got {}",
                self.sigma_w2
            )));
        }
        if !(self.noise_corr.is_finite() && self.noise_corr.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "noise correlation must lie in (-1, 1), got {}",
                self.noise_corr
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        match self.coupling {
            Coupling::Symmetric { g } => {
                if !g.is_finite() {
                    return Err(Error::invalid("coupling must be finite"));
                }
                if self.beta <= g.abs() {
                    return Err(Error::invalid(format!(
                        "symmetric coupling needs beta > |g| (beta = {}, g = {g})",
                        self.beta
                    )));
                }
            }
            Coupling::Anisotropic { g } => {
                if !g.is_finite() {
                    return Err(Error::invalid("coupling must be finite"));
                }
            }
            Coupling::Scheduled(s) => s.validate()?,
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.coupling, Coupling::Symmetric { .. })
    }

    /// Coupling strength at forward time `t`.
    pub fn g_at(&self, t: f64) -> f64 {
        match self.coupling {
            Coupling::Symmetric { g } | Coupling::Anisotropic { g } => g,
            Coupling::Scheduled(s) => s.value_unchecked(t),
        }
    }

    pub fn drift_at(&self, t: f64) -> Block2 {
        let b = self.beta;
        match self.coupling {
            Coupling::Symmetric { g } => Block2::symmetric(-b, g, -b),
            _ => Block2::new(-b, 0.0, self.g_at(t), -b),
        }
    }

    /// The constant relaxation matrix; scheduled coupling has none.
    pub fn drift(&self) -> Result<Block2> {
        match self.coupling {
            Coupling::Scheduled(_) => Err(Error::UnsupportedShape(
                "time-dependent coupling has no closed-form moments; integrate with moments_ode"
                    .into(),
            )),
            _ => Ok(self.drift_at(0.0)),
        }
    }

    /// `Σ_W Σ_Wᵀ`.
    pub fn noise(&self) -> Block2 {
        Block2::symmetric(self.sigma_w2, self.sigma_w2 * self.noise_corr, self.sigma_w2)
    }

    /// Lower Cholesky factor of [`noise`](Self::noise).
    pub fn noise_factor(&self) -> Block2 {
        let s = self.sigma_w2.sqrt();
        let r = self.noise_corr;
        Block2::new(s, 0.0, s * r, s * (1.0 - r * r).sqrt())
    }

    pub fn horizon(&self) -> Option<f64> {
        match self.coupling {
            Coupling::Scheduled(s) => Some(s.horizon),
            _ => None,
        }
    }
}

/// Component means of the initial mixture `½N(μ, Σ₀) + ½N(−μ, Σ₀)`.
///
/// All squared norms are per dimension (`|μ_x|²/d` and so on).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeanSpec {
    /// Common- and difference-mode norms, with `μ₊ ⟂ μ₋`.
    Modes { m_plus2: f64, m_minus2: f64 },
    /// Channel norms and the angle between `μ_x` and `μ_y`.
    Angled { m_x2: f64, m_y2: f64, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureInit {
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub means: MeanSpec,
}

impl MixtureInit {
    pub fn modes(sigma2: f64, m_plus2: f64, m_minus2: f64) -> Self {
        MixtureInit { sigma2_x: sigma2, sigma2_y: sigma2, means: MeanSpec::Modes { m_plus2, m_minus2 } }
    }

    pub fn angled(sigma2: f64, m_x2: f64, m_y2: f64, theta: f64) -> Self {
        MixtureInit {
            sigma2_x: sigma2,
            sigma2_y: sigma2,
            means: MeanSpec::Angled { m_x2, m_y2, theta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma2_x", self.sigma2_x), ("sigma2_y", self.sigma2_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let norms = match self.means {
            MeanSpec::Modes { m_plus2, m_minus2 } => [m_plus2, m_minus2],
            MeanSpec::Angled { m_x2, m_y2, theta } => {
                if !(0.0..=std::f64::consts::PI).contains(&theta) {
                    return Err(Error::invalid(format!("theta must lie in [0, pi], got {theta}")));
                }
                [m_x2, m_y2]
            }
        };
        if norms.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::invalid(format!("squared mean norms must be non-negative, got {norms:?}")));
        }
        Ok(())
    }

    /// Equal channel variances, the case the mode analysis covers.
    pub fn isotropic_variance(&self) -> Option<f64> {
        (self.sigma2_x == self.sigma2_y).then_some(self.sigma2_x)
    }

    pub fn cov0(&self) -> Block2 {
        Block2::diag(self.sigma2_x, self.sigma2_y)
    }

    pub fn mean_pair(&self) -> MeanPair {
        match self.means {
            MeanSpec::Modes { m_plus2, m_minus2 } => {
                let a = (0.5 * m_plus2).sqrt();
                let b = (0.5 * m_minus2).sqrt();
                MeanPair { x: [a, b], y: [a, -b] }
            }
            MeanSpec::Angled { m_x2, m_y2, theta } => {
                let (s, c) = theta.sin_cos();
                let my = m_y2.sqrt();
                MeanPair { x: [m_x2.sqrt(), 0.0], y: [my * c, my * s] }
            }
        }
    }
}

/// Per-dimension channel means, written in the two-dimensional plane that
/// contains them. The d-dimensional means are `√d (p₀ e₀ + p₁ e₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanPair {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl MeanPair {
    pub const ZERO: MeanPair = MeanPair { x: [0.0; 2], y: [0.0; 2] };

    /// `(Φ ⊗ I) μ`.
    pub fn propagate(&self, phi: &Block2) -> MeanPair {
        let mix = |a: f64, b: f64| {
            [a * self.x[0] + b * self.y[0], a * self.x[1] + b * self.y[1]]
        };
        MeanPair { x: mix(phi.a11, phi.a12), y: mix(phi.a21, phi.a22) }
    }

    /// Per-dimension Gram matrix `[[μ_x·μ_x, μ_x·μ_y], [μ_y·μ_x, μ_y·μ_y]] / d`.
    pub fn gram(&self) -> Block2 {
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        Block2::symmetric(dot(self.x, self.x), dot(self.x, self.y), dot(self.y, self.y))
    }

    pub fn is_zero(&self) -> bool {
        self.x == [0.0; 2] && self.y == [0.0; 2]
    }

    /// Full d-dimensional means.
    pub fn materialize(&self, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if dim < 2 && (self.x[1] != 0.0 || self.y[1] != 0.0) {
            return Err(Error::invalid(
                "means that are not collinear need dimension at least 2",
            ));
        }
        let scale = (dim as f64).sqrt();
        let fill = |p: [f64; 2]| {
            let mut v = vec![0.0; dim];
            v[0] = scale * p[0];
            if dim > 1 {
                v[1] = scale * p[1];
            }
            v
        };
        Ok((fill(self.x), fill(self.y)))
    }
}

/// Moments of the forward marginal at time `t`.
///
/// `s` is the drifted initial covariance, `q` the accumulated noise and
/// `c = s + q` the covariance of each mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub t: f64,
    pub propagator: Block2,
    pub mean: MeanPair,
    pub s: Block2,
    pub q: Block2,
    pub c: Block2,
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("time must be finite and non-negative, got {t}")))
    }
}

/// `(1 - e^{-τt}) / τ`, accurate for small `τt` and equal to `t` at `τ = 0`.
pub(crate) fn relax_integral(tau: f64, t: f64) -> f64 {
    if tau == 0.0 {
        t
    } else {
        -(-tau * t).exp_m1() / tau
    }
}

/// Regularized lower incomplete gamma `P(n, x)` for integer `n`, i.e.
/// `1 - e^{-x} Σ_{j<n} x^j/j!`.
pub(crate) fn gamma_p_int(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // e^{-x} Σ_{j≥n} x^j/j!, free of cancellation for small x.
        let mut term = 1.0;
        for j in 1..=n {
            term *= x / j as f64;
        }
        let mut sum = 0.0;
        let mut j = n;
        while term > 1e-18 * sum || sum == 0.0 {
            sum += term;
            j += 1;
            term *= x / j as f64;
            if j > n + 60 {
                break;
            }
        }
        return (-x).exp() * sum;
    }
    let mut term = 1.0;
    let mut partial = 1.0;
    for j in 1..n {
        term *= x / j as f64;
        partial += term;
    }
    1.0 - (-x).exp() * partial
}

pub fn propagator(spec: &ModelSpec, t: f64) -> Result<Block2> {
    check_time(t)?;
    blockmat::mat_exp(spec.drift()?, t)
}

/// `μ(t) = e^{Mt} μ(0)`.
pub fn mean_at(spec: &ModelSpec, mu0: &MeanPair, t: f64) -> Result<MeanPair> {
    Ok(mu0.propagate(&propagator(spec, t)?))
}

/// `Q(t) = ∫₀ᵗ e^{Ms} Σ_WΣ_Wᵀ e^{Mᵀs} ds`.
pub fn transition_cov(spec: &ModelSpec, t: f64) -> Result<Block2> {
    check_time(t)?;
    let drift = spec.drift()?;
    if t == 0.0 {
        return Ok(Block2::ZERO);
    }
    let sw2 = spec.sigma_w2;
    let rho = spec.noise_corr;
    match spec.coupling {
        Coupling::Symmetric { .. } => {
            let modes = blockmat::spectral_decompose(drift)?;
            let (sp, sm) = (sw2 * (1.0 + rho), sw2 * (1.0 - rho));
            Ok(modes.projector_plus().scale(sp * relax_integral(modes.tau_plus, t))
                + modes.projector_minus().scale(sm * relax_integral(modes.tau_minus, t)))
        }
        Coupling::Anisotropic { g } => {
            let b = spec.beta;
            let x = 2.0 * b * t;
            let u = -(-x).exp_m1();
            let k = gamma_p_int(2, x);
            let h = gamma_p_int(3, x);
            Ok(aniso_q(b, g, sw2, rho, u, k, h))
        }
        Coupling::Scheduled(_) => unreachable!("drift() rejects scheduled coupling"),
    }
}

fn aniso_q(b: f64, g: f64, sw2: f64, rho: f64, u: f64, k: f64, h: f64) -> Block2 {
    let q11 = sw2 * u / (2.0 * b);
    let q12 = sw2 * (g * k / (4.0 * b * b) + rho * u / (2.0 * b));
    let q22 = sw2 * (u / (2.0 * b) + g * g * h / (4.0 * b * b * b) + 2.0 * rho * g * k / (4.0 * b * b));
    Block2::symmetric(q11, q12, q22)
}

/// Covariance of the forward process started at the origin, as `t → ∞`.
///
/// For scheduled coupling the terminal coupling value is used.
pub fn stationary_cov(spec: &ModelSpec) -> Result<Block2> {
    spec.validate()?;
    let sw2 = spec.sigma_w2;
    let rho = spec.noise_corr;
    let b = spec.beta;
    match spec.coupling {
        Coupling::Symmetric { g } => {
            let modes = blockmat::spectral_decompose(Block2::symmetric(-b, g, -b))?;
            Ok(modes.projector_plus().scale(sw2 * (1.0 + rho) / modes.tau_plus)
                + modes.projector_minus().scale(sw2 * (1.0 - rho) / modes.tau_minus))
        }
        Coupling::Anisotropic { g } => Ok(aniso_q(b, g, sw2, rho, 1.0, 1.0, 1.0)),
        Coupling::Scheduled(s) => Ok(aniso_q(b, s.value_unchecked(s.horizon), sw2, rho, 1.0, 1.0, 1.0)),
    }
}

/// Closed-form moments at time `t` for constant coupling.
pub fn diffusion_kernel(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<MomentState> {
    let phi = propagator(spec, t)?;
    let q = transition_cov(spec, t)?;
    let s = phi.congruence(&init.cov0());
    Ok(MomentState { t, propagator: phi, mean: init.mean_pair().propagate(&phi), s, q, c: s + q })
}

/// Eigenvalues `(c₊, c₋)` of `C(t)` under symmetric coupling.
pub fn mode_kernels(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    let Coupling::Symmetric { g } = spec.coupling else {
        return Err(Error::UnsupportedShape("mode kernels need symmetric coupling".into()));
    };
    let Some(sigma2) = init.isotropic_variance() else {
        return Err(Error::UnsupportedShape(
            "mode kernels need equal channel variances".into(),
        ));
    };
    let b = spec.beta;
    let (tp, tm) = (2.0 * (b - g), 2.0 * (b + g));
    let (sp, sm) = (spec.sigma_w2 * (1.0 + spec.noise_corr), spec.sigma_w2 * (1.0 - spec.noise_corr));
    let c = |tau: f64, s: f64| sigma2 * (-tau * t).exp() + s * relax_integral(tau, t);
    Ok((c(tp, sp), c(tm, sm)))
}

/// `K(t) = C⁻¹ (M + σ_W² C⁻¹)⁻¹ C⁻¹` for anisotropic coupling, assembled from
/// the explicit numerators and `D(t)`.
pub fn kernel_k(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<Block2> {
    let Coupling::Anisotropic { g } = spec.coupling else {
        return Err(Error::UnsupportedShape("explicit K(t) is for anisotropic coupling".into()));
    };
    if spec.noise_corr != 0.0 {
        return Err(Error::UnsupportedShape(
            "explicit K(t) assumes uncorrelated channel noise".into(),
        ));
    }
    let c = diffusion_kernel(spec, init, t)?.c;
    let (b, sw2) = (spec.beta, spec.sigma_w2);
    let (c11, c12, c22) = (c.a11, c.a12, c.a22);
    let delta = c.det();
    let d = b * b * delta - b * sw2 * (c11 + c22) + g * sw2 * c12 + sw2 * sw2;
    let scale = (b * b * delta).abs() + (b * sw2 * (c11 + c22)).abs() + (g * sw2 * c12).abs() + sw2 * sw2;
    if d.abs() <= 1e-13 * scale {
        return Err(Error::DegenerateDrift { t });
    }
    let n11 = sw2 * c22 - b * (c22 * c22 + c12 * c12) + g * c12 * c22;
    let n12 = c12 * (b * (c11 + c22) - g * c12 - sw2);
    let n21 = b * c12 * (c11 + c22) - sw2 * c12 - g * c11 * c22;
    let n22 = sw2 * c11 - b * (c11 * c11 + c12 * c12) + g * c11 * c12;
    Ok(Block2::new(n11, n12, n21, n22).scale(1.0 / (delta * d)))
}

/// `K(t)` by direct composition of 2×2 inverses.
pub fn kernel_k_direct(spec: &ModelSpec, c: &Block2, t: f64) -> Result<Block2> {
    let cinv = blockmat::block_inverse(*c)?;
    let a = spec.drift_at(t) + cinv.scale(spec.sigma_w2);
    let ainv = blockmat::block_inverse(a).map_err(|_| Error::DegenerateDrift { t })?;
    Ok(cinv * ainv * cinv)
}

/// Moments on `grid` by RK4 integration of `Φ̇ = MΦ` and the Lyapunov
/// equation `Q̇ = MQ + QMᵀ + Σ_WΣ_Wᵀ`.
///
/// Each grid interval is split at schedule breakpoints and integrated in one
/// RK4 step per piece with the drift frozen at the piece midpoint.
pub fn moments_ode(spec: &ModelSpec, init: &MixtureInit, grid: &[f64]) -> Result<Vec<MomentState>> {
    spec.validate()?;
    init.validate()?;
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::invalid("grid must start at t = 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid must be finite and strictly increasing"));
    }
    let breaks = match spec.coupling {
        Coupling::Scheduled(s) => s.breakpoints(),
        _ => Vec::new(),
    };
    let noise = spec.noise();
    let cov0 = init.cov0();
    let mu0 = init.mean_pair();
    let snapshot = |t: f64, phi: Block2, q: Block2| {
        let s = phi.congruence(&cov0);
        MomentState { t, propagator: phi, mean: mu0.propagate(&phi), s, q, c: s + q }
    };

    let mut phi = Block2::IDENTITY;
    let mut q = Block2::ZERO;
    let mut out = Vec::with_capacity(grid.len());
    out.push(snapshot(0.0, phi, q));
    for w in grid.windows(2) {
        let mut cuts = vec![w[0]];
        cuts.extend(breaks.iter().copied().filter(|b| *b > w[0] && *b < w[1]));
        cuts.push(w[1]);
        for piece in cuts.windows(2) {
            let h = piece[1] - piece[0];
            let m = spec.drift_at(0.5 * (piece[0] + piece[1]));
            (phi, q) = rk4_step(m, noise, phi, q, h);
        }
        out.push(snapshot(w[1], phi, q));
    }
    Ok(out)
}

fn rk4_step(m: Block2, noise: Block2, phi: Block2, q: Block2, h: f64) -> (Block2, Block2) {
    let fp = |p: Block2| m * p;
    let fq = |x: Block2| m * x + x * m.transpose() + noise;
    let k1 = fp(phi);
    let k2 = fp(phi + k1 * (0.5 * h));
    let k3 = fp(phi + k2 * (0.5 * h));
    let k4 = fp(phi + k3 * h);
    let phi_next = phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let l1 = fq(q);
    let l2 = fq(q + l1 * (0.5 * h));
    let l3 = fq(q + l2 * (0.5 * h));
    let l4 = fq(q + l3 * h);
    let q_next = q + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
    (phi_next, q_next)
}
