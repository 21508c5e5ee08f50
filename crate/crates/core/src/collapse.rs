//! Collapse onto training points, viewed as Random Energy Model condensation.
//!
//! With `n = e^{2αd}` training points the empirical posterior condenses once
//! the kernel entropy `¼ log(det C / det Q)` drops to `α`.

use serde::{Deserialize, Serialize};

use crate::blockmat;
use crate::error::{Error, Result};
use crate::moments::{self, Coupling, MixtureInit, ModelSpec};
use crate::roots;
use crate::speciation::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseParams {
    /// Entropy density `log n / (2d)`.
    pub alpha: f64,
    pub spec: ModelSpec,
    pub init: MixtureInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseKind {
    JointSymmetric,
    ModePlus,
    ModeMinus,
    JointAniso,
    ConditionalYGivenX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub t_c: f64,
    pub residual: f64,
    pub kind: CollapseKind,
}

/// `log n / (2d)`.
pub fn alpha_from_counts(n: u64, d: usize) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("need at least one sample and one dimension"));
    }
    Ok((n as f64).ln() / (2.0 * d as f64))
}

impl CollapseParams {
    /// Symmetric-coupling parameters with data variance `ratio · σ_W²`.
    pub fn from_ratio(alpha: f64, ratio: f64, spec: ModelSpec) -> Self {
        let sigma2 = ratio * spec.sigma_w2;
        CollapseParams { alpha, spec, init: MixtureInit::modes(sigma2, 0.0, 0.0) }
    }

    /// `σ² / σ_W²`.
    pub fn ratio(&self) -> f64 {
        self.init.sigma2_x / self.spec.sigma_w2
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.init.validate()?;
        if !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        if self.alpha <= 0.0 {
            return Err(Error::NoCollapse(self.alpha));
        }
        Ok(())
    }

    /// Per-mode `(τ, σ²/s)` for symmetric coupling.
    fn modes(&self) -> Result<[(f64, f64); 2]> {
        let Coupling::Symmetric { g } = self.spec.coupling else {
            return Err(Error::UnsupportedShape("mode collapse needs symmetric coupling".into()));
        };
        let Some(sigma2) = self.init.isotropic_variance() else {
            return Err(Error::UnsupportedShape("mode collapse needs equal channel variances".into()));
        };
        let b = self.spec.beta;
        let sw2 = self.spec.sigma_w2;
        let rho = self.spec.noise_corr;
        Ok([
            (2.0 * (b - g), sigma2 / (sw2 * (1.0 + rho))),
            (2.0 * (b + g), sigma2 / (sw2 * (1.0 - rho))),
        ])
    }
}

/// `χ± = (σ²/s±) τ± / (e^{τ± t} − 1)`.
pub fn chi(params: &CollapseParams, t: f64) -> Result<(f64, f64)> {
    params.spec.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("chi needs t > 0, got {t}")));
    }
    let [p, m] = params.modes()?;
    let f = |(tau, ratio): (f64, f64)| ratio * tau / (tau * t).exp_m1();
    Ok((f(p), f(m)))
}

/// Scaled cumulant generating function `Λ_t(β)` of the kernel energies.
pub fn cgf(params: &CollapseParams, beta_rem: f64, t: f64) -> Result<f64> {
    let (cp, cm) = chi(params, t)?;
    let mut total = 0.0;
    for x in [cp, cm] {
        let arg = 1.0 + beta_rem * x;
        if !(arg > 0.0) {
            return Err(Error::CgfDomain(arg));
        }
        total -= 0.25 * arg.ln() + 0.25 * beta_rem * (1.0 + x) / arg;
    }
    Ok(total)
}

/// `log((1+χ₊)(1+χ₋)) − 4α`, decreasing in `t`.
fn joint_excess(params: &CollapseParams, t: f64) -> Result<f64> {
    let (cp, cm) = chi(params, t)?;
    Ok(cp.ln_1p() + cm.ln_1p() - 4.0 * params.alpha)
}

/// Root of `(1+χ₊)(1+χ₋) = e^{4α}`, solved in log space.
pub fn collapse_time_symmetric(params: &CollapseParams) -> Result<CollapseResult> {
    params.validate()?;
    let lo = 1e-12 / params.spec.beta;
    let hi = collapse_bound(params)? + 1.0 / params.spec.beta;
    let t_c = roots::bisect(|t| joint_excess(params, t), lo, hi, 0.0, roots::MAX_BISECTIONS)?;
    let residual = joint_excess(params, t_c)?.abs();
    Ok(CollapseResult { t_c, residual, kind: CollapseKind::JointSymmetric })
}

/// `t_C± = (1/τ±) log(1 + (σ²/s±) τ± / (e^{2α} − 1))`.
pub fn collapse_time_mode(params: &CollapseParams, mode: Mode) -> Result<CollapseResult> {
    params.validate()?;
    let [p, m] = params.modes()?;
    let ((tau, ratio), kind) = match mode {
        Mode::Plus => (p, CollapseKind::ModePlus),
        Mode::Minus => (m, CollapseKind::ModeMinus),
    };
    let denom = (2.0 * params.alpha).exp_m1();
    let t_c = (ratio * tau / denom).ln_1p() / tau;
    let chi_t = ratio * tau / (tau * t_c).exp_m1();
    let residual = (chi_t.ln_1p() - 2.0 * params.alpha).abs();
    Ok(CollapseResult { t_c, residual, kind })
}

/// `t_max = (σ²/s) / (e^{2α} − 1)`, using the larger per-mode ratio.
pub fn collapse_bound(params: &CollapseParams) -> Result<f64> {
    params.validate()?;
    let [p, m] = params.modes()?;
    Ok(p.1.max(m.1) / (2.0 * params.alpha).exp_m1())
}

fn first_positive<F>(mut f: F, beta: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut t = 1e-12 / beta;
    for _ in 0..40 {
        if let Ok(v) = f(t) {
            if v.is_finite() && v > 0.0 {
                return Ok(t);
            }
        }
        t *= 10.0;
    }
    Err(Error::NoBracket { lo: 1e-12 / beta, hi: t })
}

fn first_negative<F>(mut f: F, start: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut t = start;
    for _ in 0..200 {
        if f(t)? < 0.0 {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::NoBracket { lo: start, hi: t })
}

fn solve<F>(mut f: F, beta: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let lo = first_positive(&mut f, beta)?;
    let hi = first_negative(&mut f, lo.max(1.0 / beta))?;
    let t = roots::bisect(&mut f, lo, hi, 0.0, roots::MAX_BISECTIONS)?;
    let residual = f(t)?.abs();
    Ok((t, residual))
}

/// Root of `α = ¼ log(det C(t) / det Q(t))`.
pub fn collapse_time_det(params: &CollapseParams) -> Result<CollapseResult> {
    params.validate()?;
    let f = |t: f64| {
        let st = moments::diffusion_kernel(&params.spec, &params.init, t)?;
        let dq = st.q.det();
        if !(dq > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("Q({t})")));
        }
        Ok(0.25 * (st.c.det().ln() - dq.ln()) - params.alpha)
    };
    let (t_c, residual) = solve(f, params.spec.beta)?;
    let kind = if params.spec.is_symmetric() { CollapseKind::JointSymmetric } else { CollapseKind::JointAniso };
    Ok(CollapseResult { t_c, residual, kind })
}

/// Root of `α = ½ log(C_{y|x}(t) / Q_{y|x}(t))` for anisotropic coupling.
pub fn collapse_time_conditional(params: &CollapseParams) -> Result<CollapseResult> {
    params.validate()?;
    if !matches!(params.spec.coupling, Coupling::Anisotropic { .. }) {
        return Err(Error::UnsupportedShape("conditional collapse needs anisotropic coupling".into()));
    }
    let f = |t: f64| {
        let st = moments::diffusion_kernel(&params.spec, &params.init, t)?;
        let (cy, _) = blockmat::schur_conditional(st.c)?;
        let (qy, _) = blockmat::schur_conditional(st.q)?;
        Ok(0.5 * (cy.ln() - qy.ln()) - params.alpha)
    };
    let (t_c, residual) = solve(f, params.spec.beta)?;
    Ok(CollapseResult { t_c, residual, kind: CollapseKind::ConditionalYGivenX })
}
