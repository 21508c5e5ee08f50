//! Speciation: where the reverse drift acquires extra fixed points.
//!
//! `κ(t) = μᵀ C⁻¹ (M + Σ C⁻¹)⁻¹ Σ C⁻¹ μ` per dimension, with `Σ = Σ_WΣ_Wᵀ`.
//! The reverse dynamics splits into class clusters once `κ` crosses one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmat::{self, Block2, V_MINUS, V_PLUS};
use crate::error::{Error, Result};
use crate::moments::{self, Coupling, MixtureInit, ModelSpec};
use crate::roots;

const SCAN_POINTS: usize = 512;
const ZOOM_POINTS: usize = 64;
const ZOOM_ROUNDS: usize = 6;
const MAX_BISECTIONS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Speciates,
    NoSpeciation,
    Unstable,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Speciates => "speciates",
            Regime::NoSpeciation => "no_speciation",
            Regime::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciationResult {
    pub t_s: Option<f64>,
    pub kappa0: f64,
    pub sup_kappa: f64,
    pub regime: Regime,
    /// First time in the search window where the reverse drift stops confining.
    pub unstable_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plus,
    Minus,
}

/// `C⁻¹ (M + Σ C⁻¹)⁻¹ Σ C⁻¹`, after checking that `M + Σ C⁻¹` confines.
pub fn reverse_gain(spec: &ModelSpec, c: &Block2, t: f64) -> Result<Block2> {
    let cinv = blockmat::block_inverse(*c)?;
    let noise = spec.noise();
    let a = spec.drift_at(t) + noise * cinv;
    if !(a.trace() > 0.0 && a.det() > 0.0) {
        return Err(Error::UnstableAtTime { t });
    }
    Ok(cinv * blockmat::block_inverse(a)? * noise * cinv)
}

/// Per-dimension `κ(t)`.
pub fn kappa(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<f64> {
    let st = moments::diffusion_kernel(spec, init, t)?;
    let gram = st.mean.gram();
    if matches!(spec.coupling, Coupling::Anisotropic { .. }) && spec.noise_corr == 0.0 {
        // Confinement check shares the generic route.
        reverse_gain(spec, &st.c, t)?;
        let k = moments::kernel_k(spec, init, t)?;
        return Ok(spec.sigma_w2 * gram.contract(&k));
    }
    Ok(gram.contract(&reverse_gain(spec, &st.c, t)?))
}

fn mode_norms(init: &MixtureInit) -> (f64, f64) {
    let g0 = init.mean_pair().gram();
    let quad = |v: [f64; 2]| {
        let w = g0.mul_vec(v);
        v[0] * w[0] + v[1] * w[1]
    };
    (quad(V_PLUS), quad(V_MINUS))
}

/// `κ` as a sum of per-mode signal-to-noise ratios.
pub fn kappa_symmetric_closed(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<f64> {
    let Coupling::Symmetric { g } = spec.coupling else {
        return Err(Error::UnsupportedShape("closed-form kappa needs symmetric coupling".into()));
    };
    let (cp, cm) = moments::mode_kernels(spec, init, t)?;
    let (mp2, mm2) = mode_norms(init);
    let b = spec.beta;
    let terms = [
        (-b + g, 2.0 * (b - g), spec.sigma_w2 * (1.0 + spec.noise_corr), cp, mp2),
        (-b - g, 2.0 * (b + g), spec.sigma_w2 * (1.0 - spec.noise_corr), cm, mm2),
    ];
    let mut kappa = 0.0;
    for (lambda, tau, s, c, m2) in terms {
        let confine = lambda * c + s;
        if confine <= 0.0 {
            return Err(Error::UnstableAtTime { t });
        }
        kappa += s * (-tau * t).exp() * m2 / (c * confine);
    }
    Ok(kappa)
}

/// `κ(0)` for anisotropic coupling and equal channel variances.
pub fn kappa0_aniso(spec: &ModelSpec, init: &MixtureInit) -> Result<f64> {
    let (a, b) = kappa0_aniso_coeffs(spec, init)?;
    Ok(a - spec.g_at(0.0) * b)
}

/// `κ(0) = a − g·b`; returns `(a, b)`.
fn kappa0_aniso_coeffs(spec: &ModelSpec, init: &MixtureInit) -> Result<(f64, f64)> {
    if spec.is_symmetric() {
        return Err(Error::UnsupportedShape("kappa0_aniso needs anisotropic coupling".into()));
    }
    let Some(sigma2) = init.isotropic_variance() else {
        return Err(Error::UnsupportedShape("kappa0_aniso needs equal channel variances".into()));
    };
    let r = spec.sigma_w2 / sigma2;
    let gap = r - spec.beta;
    if gap.abs() <= 1e-12 * r.abs().max(spec.beta) {
        return Err(Error::DegenerateRate(spec.beta));
    }
    let g0 = init.mean_pair().gram();
    Ok((
        r * (g0.a11 + g0.a22) / (sigma2 * gap),
        r * g0.a12 / (sigma2 * gap * gap),
    ))
}

/// Coupling at which `κ(0) = 1`, defined when the alignment term is positive.
/// Alignment below round-off of `cos θ` (as at `θ = π/2`) counts as none.
pub fn g_crit0(spec: &ModelSpec, init: &MixtureInit) -> Result<Option<f64>> {
    let (a, b) = kappa0_aniso_coeffs(spec, init)?;
    Ok((b > 1e-12 * a.abs().max(1.0)).then(|| (a - 1.0) / b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Largest admissible data variance, `min± s±/(β ∓ g)`.
    pub sigma2_bound: f64,
    pub drift_stable: bool,
    pub first_violation: Option<f64>,
}

/// Mode-wise confinement of the reverse drift for symmetric coupling, checked
/// against the variance bound and pointwise on a time grid.
pub fn stability_check(spec: &ModelSpec, init: &MixtureInit, t_window: Option<f64>) -> Result<StabilityVerdict> {
    let Coupling::Symmetric { g } = spec.coupling else {
        return Err(Error::UnsupportedShape("stability check needs symmetric coupling".into()));
    };
    let Some(sigma2) = init.isotropic_variance() else {
        return Err(Error::UnsupportedShape("stability check needs equal channel variances".into()));
    };
    let b = spec.beta;
    let sp = spec.sigma_w2 * (1.0 + spec.noise_corr);
    let sm = spec.sigma_w2 * (1.0 - spec.noise_corr);
    let drift_stable = b > g.abs();
    let bound = |s: f64, rate: f64| if rate > 0.0 { s / rate } else { f64::INFINITY };
    let sigma2_bound = bound(sp, b - g).min(bound(sm, b + g));
    if !drift_stable {
        return Ok(StabilityVerdict { stable: false, sigma2_bound, drift_stable, first_violation: Some(0.0) });
    }
    let window = t_window.unwrap_or(10.0 / b);
    let mut first_violation = None;
    for i in 0..1024 {
        let t = window * i as f64 / 1023.0;
        let (cp, cm) = moments::mode_kernels(spec, init, t)?;
        if (-b + g) * cp + sp <= 0.0 || (-b - g) * cm + sm <= 0.0 {
            first_violation = Some(t);
            break;
        }
    }
    let stable = sigma2 < sigma2_bound && first_violation.is_none();
    Ok(StabilityVerdict { stable, sigma2_bound, drift_stable, first_violation })
}

/// Largest `t` in `(0, window]` with `κ(t) = 1`.
///
/// A 512-point scan locates the supremum, which is refined by repeated zooms
/// around the best point; the last downward crossing is then bisected.
pub fn speciation_time(spec: &ModelSpec, init: &MixtureInit, t_max_search: Option<f64>) -> Result<SpeciationResult> {
    spec.validate()?;
    init.validate()?;
    let window = t_max_search.unwrap_or(10.0 / spec.beta);
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::invalid(format!("search window must be positive, got {window}")));
    }
    if init.mean_pair().is_zero() {
        return Ok(SpeciationResult {
            t_s: None,
            kappa0: 0.0,
            sup_kappa: 0.0,
            regime: Regime::NoSpeciation,
            unstable_at: None,
        });
    }

    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(SCAN_POINTS + ZOOM_ROUNDS * ZOOM_POINTS);
    for i in 0..SCAN_POINTS {
        let t = window * i as f64 / (SCAN_POINTS - 1) as f64;
        match kappa(spec, init, t) {
            Ok(k) => pts.push((t, k)),
            Err(Error::UnstableAtTime { t }) => {
                return Ok(SpeciationResult {
                    t_s: None,
                    kappa0: pts.first().map_or(f64::NAN, |p| p.1),
                    sup_kappa: pts.iter().map(|p| p.1).fold(f64::NAN, f64::max),
                    regime: Regime::Unstable,
                    unstable_at: Some(t),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let kappa0 = pts[0].1;

    let mut step = window / (SCAN_POINTS - 1) as f64;
    let (mut best_t, _) = argmax(&pts);
    for _ in 0..ZOOM_ROUNDS {
        let lo = (best_t - step).max(0.0);
        let hi = (best_t + step).min(window);
        for j in 0..ZOOM_POINTS {
            let t = lo + (hi - lo) * j as f64 / (ZOOM_POINTS - 1) as f64;
            pts.push((t, kappa(spec, init, t)?));
        }
        step = (hi - lo) / (ZOOM_POINTS - 1) as f64;
        best_t = argmax(&pts).0;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sup_kappa = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    if sup_kappa <= 1.0 + 1e-12 {
        return Ok(SpeciationResult { t_s: None, kappa0, sup_kappa, regime: Regime::NoSpeciation, unstable_at: None });
    }
    let last = pts.len() - 1;
    if pts[last].1 >= 1.0 {
        return Err(Error::NoBracket { lo: pts[last].0, hi: window });
    }
    let i = pts.iter().rposition(|p| p.1 >= 1.0).expect("sup exceeds one");
    let (lo, hi) = (pts[i].0, pts[i + 1].0);
    let t_s = roots::bisect(|t| Ok(kappa(spec, init, t)? - 1.0), lo, hi, 0.0, MAX_BISECTIONS)?;
    Ok(SpeciationResult { t_s: Some(t_s), kappa0, sup_kappa, regime: Regime::Speciates, unstable_at: None })
}

fn argmax(pts: &[(f64, f64)]) -> (f64, f64) {
    pts.iter().copied().fold((0.0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best })
}

/// Closed-form speciation time when only one eigenmode carries signal.
///
/// With `x = e^{-τt}` and `B = σ² − s/τ`, `κ = 1` reduces to
/// `τB²x² + 2sm²x − s²/τ = 0`, whose positive root is taken in the
/// rationalized form `x = s / (τ (m² + √(m⁴ + B²)))`, regular at `B = 0`.
pub fn speciation_time_pure_mode(spec: &ModelSpec, init: &MixtureInit, mode: Mode) -> Result<f64> {
    spec.validate()?;
    init.validate()?;
    let verdict = stability_check(spec, init, None)?;
    if !verdict.stable {
        return Err(Error::UnstableAtTime { t: verdict.first_violation.unwrap_or(0.0) });
    }
    let Coupling::Symmetric { g } = spec.coupling else {
        unreachable!("stability_check rejects other couplings")
    };
    let sigma2 = init.sigma2_x;
    let (mp2, mm2) = mode_norms(init);
    let (m2, other, tau, s) = match mode {
        Mode::Plus => (mp2, mm2, 2.0 * (spec.beta - g), spec.sigma_w2 * (1.0 + spec.noise_corr)),
        Mode::Minus => (mm2, mp2, 2.0 * (spec.beta + g), spec.sigma_w2 * (1.0 - spec.noise_corr)),
    };
    if !(m2 > 0.0) || other > 1e-14 * m2 {
        return Err(Error::invalid("pure-mode formula needs signal in the chosen mode only"));
    }
    let b = sigma2 - s / tau;
    let x = s / (tau * (m2 + (m2 * m2 + b * b).sqrt()));
    if x > 1.0 {
        return Err(Error::NoSpeciation(format!("kappa(0) < 1 (root e^(-tau t) = {x})")));
    }
    Ok(-x.ln() / tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub g: f64,
    pub theta: f64,
    pub regime: Option<Regime>,
    pub t_s: Option<f64>,
    pub kappa0: Option<f64>,
    pub sup_kappa: Option<f64>,
    /// `κ(0) = 1` boundary for this angle.
    pub g_crit: Option<f64>,
    pub error: Option<String>,
}

/// Regimes over a `(g, θ)` grid for anisotropic coupling, g-major order.
///
/// Cells are evaluated in parallel and failures are recorded per cell.
pub fn phase_diagram(
    spec: &ModelSpec,
    init: &MixtureInit,
    g_grid: &[f64],
    theta_grid: &[f64],
    t_max_search: Option<f64>,
) -> Result<Vec<PhaseCell>> {
    if spec.is_symmetric() {
        return Err(Error::UnsupportedShape("phase diagram sweeps anisotropic coupling".into()));
    }
    let (m_x2, m_y2) = match init.means {
        moments::MeanSpec::Angled { m_x2, m_y2, .. } => (m_x2, m_y2),
        moments::MeanSpec::Modes { .. } => {
            let g0 = init.mean_pair().gram();
            (g0.a11, g0.a22)
        }
    };
    let cells: Vec<(f64, f64)> = g_grid
        .iter()
        .flat_map(|&g| theta_grid.iter().map(move |&th| (g, th)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(g, theta)| {
            let cell_spec = ModelSpec { coupling: Coupling::Anisotropic { g }, ..*spec };
            let cell_init = MixtureInit { means: moments::MeanSpec::Angled { m_x2, m_y2, theta }, ..*init };
            let g_crit = g_crit0(&cell_spec, &cell_init).ok().flatten();
            let mut cell = PhaseCell {
                g,
                theta,
                regime: None,
                t_s: None,
                kappa0: None,
                sup_kappa: None,
                g_crit,
                error: None,
            };
            match speciation_time(&cell_spec, &cell_init, t_max_search) {
                Ok(r) => {
                    cell.regime = Some(r.regime);
                    cell.t_s = r.t_s;
                    cell.kappa0 = Some(r.kappa0);
                    cell.sup_kappa = Some(r.sup_kappa);
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect())
}
