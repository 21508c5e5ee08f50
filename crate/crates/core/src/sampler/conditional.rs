//! Exact conditional `P_t(y | x)` and the conditional generation experiment.
//!
//! Each joint component `N(±μ(t), C(t) ⊗ I)` conditions to a Gaussian in `y`
//! with mean `±μ_y + (C₁₂/C₁₁)(x ∓ μ_x)` and variance `C_{y|x}`, weighted by how
//! well `x` fits that component.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmat;
use crate::error::{Error, Result};
use crate::moments::{self, MixtureInit, ModelSpec, MomentState};
use crate::rng;
use crate::schedule::{ScheduleKind, ScheduleSpec};

use super::scores::{log_sum_exp, softmax};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Everything the conditional needs at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct CondFrame {
    pub t: f64,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub c11: f64,
    pub gain: f64,
    pub cyx: f64,
}

struct CondEval {
    log_w: [f64; 2],
    means: [Vec<f64>; 2],
}

impl CondFrame {
    pub fn new(state: &MomentState, dim: usize) -> Result<Self> {
        let (cyx, gain) = blockmat::schur_conditional(state.c)?;
        let (mx, my) = state.mean.materialize(dim)?;
        Ok(CondFrame { t: state.t, mx, my, c11: state.c.a11, gain, cyx })
    }

    /// Frame from the closed-form moments (constant coupling).
    pub fn at(spec: &ModelSpec, init: &MixtureInit, t: f64) -> Result<Self> {
        CondFrame::new(&moments::diffusion_kernel(spec, init, t)?, spec.dim)
    }

    pub fn dim(&self) -> usize {
        self.mx.len()
    }

    /// Component weights in log space (normalized) and conditional means.
    fn eval(&self, x: &[f64]) -> CondEval {
        let mut log_w = [0.0; 2];
        let mut means = [Vec::new(), Vec::new()];
        for (k, s) in [1.0, -1.0].into_iter().enumerate() {
            let mut r2 = 0.0;
            let mut m = Vec::with_capacity(x.len());
            for i in 0..x.len() {
                let dx = x[i] - s * self.mx[i];
                r2 += dx * dx;
                m.push(s * self.my[i] + self.gain * dx);
            }
            log_w[k] = -0.5 * r2 / self.c11;
            means[k] = m;
        }
        let z = log_sum_exp(&log_w);
        CondEval { log_w: [log_w[0] - z, log_w[1] - z], means }
    }

    fn component_logs(&self, e: &CondEval, y: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for k in 0..2 {
            let r2: f64 = y.iter().zip(&e.means[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            out[k] = e.log_w[k] - 0.5 * r2 / self.cyx;
        }
        out
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::invalid("conditional arguments do not match the frame dimension"));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        let e = self.eval(x);
        let d = self.dim() as f64;
        Ok(log_sum_exp(&self.component_logs(&e, y)) - 0.5 * d * (LN_2PI + self.cyx.ln()))
    }

    /// `∇_y log P_t(y | x)`.
    pub fn score(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        let e = self.eval(x);
        let r = softmax(&self.component_logs(&e, y));
        Ok((0..y.len())
            .map(|i| (r[0] * (e.means[0][i] - y[i]) + r[1] * (e.means[1][i] - y[i])) / self.cyx)
            .collect())
    }

    /// One draw of `y ~ P_t(· | x)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid("conditioning point does not match the frame dimension"));
        }
        let e = self.eval(x);
        let k = if rng.random::<f64>() < e.log_w[0].exp() { 0 } else { 1 };
        let sd = self.cyx.sqrt();
        Ok(e.means[k].iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect())
    }
}

pub fn conditional_score(spec: &ModelSpec, init: &MixtureInit, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
    CondFrame::at(spec, init, t)?.score(x, y)
}

pub fn conditional_log_density(spec: &ModelSpec, init: &MixtureInit, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    CondFrame::at(spec, init, t)?.log_density(x, y)
}

/// Conditional generation of `y` given an exactly simulated `x` path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub dim: usize,
    pub trials: usize,
    pub steps: usize,
    pub horizon: f64,
    pub beta: f64,
    pub sigma_w2: f64,
    pub sigma2: f64,
    /// Per-dimension `|μ_x|²/d = |μ_y|²/d`.
    pub m2: f64,
    pub theta: f64,
    pub g0: f64,
    pub schedule: ScheduleKind,
    /// Switch time; `None` means `horizon / 2`.
    pub t0: Option<f64>,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            dim: 32,
            trials: 2000,
            steps: 800,
            horizon: 2.0,
            beta: 1.0,
            sigma_w2: 2.0,
            sigma2: 1.0,
            m2: 0.25,
            theta: 0.0,
            g0: 0.0,
            schedule: ScheduleKind::Constant,
            t0: None,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec { kind: self.schedule, g0: self.g0, t0: self.t0.unwrap_or(0.5 * self.horizon), horizon: self.horizon }
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec::scheduled(self.beta, self.schedule_spec(), self.sigma_w2, self.dim)
    }

    pub fn init(&self) -> MixtureInit {
        MixtureInit::angled(self.sigma2, self.m2, self.m2, self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.steps == 0 {
            return Err(Error::invalid("trials and steps must be positive"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("conditional experiment needs dimension at least 2"));
        }
        self.model().validate()?;
        self.init().validate()
    }
}

/// One trial's conditioning sample and generated target.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPair {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

/// Outcome of a batch of trials; failed trials are counted, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBatch {
    pub pairs: Vec<ToyPair>,
    pub failed: usize,
}

/// Runs `config.trials` independent trials.
///
/// Each trial draws `(X₀, Y₀)` from the mixture, simulates `X` forward with
/// exact OU transitions, draws `Ỹ_T ~ P_T(· | X_T)` and integrates
/// `Ỹ ← Ỹ + h (βỸ − g(t) X_t + σ_W² ∇_y log P_t(Ỹ | X_t)) + σ_W √h ξ`
/// back to `t = 0`, the last step without noise. Trial `i` uses random stream
/// `i`, so runs that differ only in coupling share their random numbers.
pub fn conditional_reverse_sample(config: &ToyConfig) -> Result<ToyBatch> {
    config.validate()?;
    let spec = config.model();
    let init = config.init();
    let n = config.steps;
    let h = config.horizon / n as f64;
    let grid: Vec<f64> = (0..=n).map(|j| config.horizon * j as f64 / n as f64).collect();
    let frames = moments::moments_ode(&spec, &init, &grid)?
        .iter()
        .map(|s| CondFrame::new(s, config.dim))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<ToyPair>> = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, &spec, &init, &frames, h, i as u64))
        .collect();
    let mut pairs = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(p) => pairs.push(p),
            Err(_) => failed += 1,
        }
    }
    Ok(ToyBatch { pairs, failed })
}

fn run_trial(
    config: &ToyConfig,
    spec: &ModelSpec,
    init: &MixtureInit,
    frames: &[CondFrame],
    h: f64,
    index: u64,
) -> Result<ToyPair> {
    let mut rng = rng::stream(config.seed, index);
    let (z0, _) = super::sample_mixture(init, config.dim, &mut rng)?;
    let n = config.steps;
    let b = config.beta;
    let decay = (-b * h).exp();
    let step_sd = (config.sigma_w2 * moments::relax_integral(2.0 * b, h)).sqrt();
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(z0.x.clone());
    for j in 0..n {
        let next: Vec<f64> = xs[j].iter().map(|v| decay * v + step_sd * rng.sample::<f64, _>(StandardNormal)).collect();
        xs.push(next);
    }
    let mut y = frames[n].sample(&xs[n], &mut rng)?;
    let sw = config.sigma_w2.sqrt();
    let sh = h.sqrt();
    for k in 0..n {
        let j = n - k;
        let t = frames[j].t;
        let g = spec.g_at(t);
        let s = frames[j].score(&xs[j], &y).map_err(|e| e.at_step(k))?;
        let noisy = k + 1 < n;
        for i in 0..y.len() {
            y[i] += h * (b * y[i] - g * xs[j][i] + config.sigma_w2 * s[i]);
            if noisy {
                y[i] += sw * sh * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("trial {index} diverged")));
    }
    let x0 = xs.swap_remove(0);
    Ok(ToyPair { x0, y0: y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::dot;
    use crate::sampler::scores::softmax as sm;

    fn random_vec<R: Rng>(rng: &mut R, d: usize, s: f64) -> Vec<f64> {
        (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn decoupled_reduces_to_y_mixture() {
        let spec = ModelSpec::anisotropic(1.0, 0.0, 2.0, 3);
        let init = MixtureInit::angled(1.0, 0.5, 0.7, 0.9);
        let mut r = rng::stream(1, 0);
        let x = random_vec(&mut r, 3, 1.0);
        let y = random_vec(&mut r, 3, 1.0);
        let t = 0.3;
        let f = CondFrame::at(&spec, &init, t).unwrap();
        assert!(f.gain.abs() < 1e-15);
        // With g = 0 the y score is that of ½N(±μ_y(t), C₂₂) reweighted by x.
        let e = f.eval(&x);
        let lw = [e.log_w[0], e.log_w[1]];
        let comp: Vec<f64> = [1.0, -1.0]
            .iter()
            .zip(lw)
            .map(|(s, l)| l - 0.5 * (0..3).map(|i| (y[i] - s * f.my[i]).powi(2)).sum::<f64>() / f.cyx)
            .collect();
        let w = sm(&comp);
        let got = f.score(&x, &y).unwrap();
        for i in 0..3 {
            let want = (w[0] * f.my[i] - w[1] * f.my[i] - y[i]) / f.cyx;
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn score_vanishes_at_dominant_center() {
        let spec = ModelSpec::anisotropic(1.0, 0.8, 2.0, 4);
        let init = MixtureInit::angled(0.2, 4.0, 4.0, 0.4);
        let f = CondFrame::at(&spec, &init, 0.05).unwrap();
        let x = f.mx.clone();
        let y = f.eval(&x).means[0].clone();
        let s = f.score(&x, &y).unwrap();
        assert!(dot(&s, &s).sqrt() < 1e-8);
    }

    #[test]
    fn score_matches_finite_difference() {
        let spec = ModelSpec::anisotropic(1.0, 1.2, 2.0, 5);
        let init = MixtureInit::angled(1.0, 0.6, 0.9, 2.0);
        let mut r = rng::stream(2, 0);
        for _ in 0..20 {
            let t = r.random_range(0.01..2.0);
            let f = CondFrame::at(&spec, &init, t).unwrap();
            let x = random_vec(&mut r, 5, 1.5);
            let y = random_vec(&mut r, 5, 1.5);
            let s = f.score(&x, &y).unwrap();
            let hh = 1e-5;
            let mut err: f64 = 0.0;
            for i in 0..5 {
                let mut p = y.clone();
                let mut m = y.clone();
                p[i] += hh;
                m[i] -= hh;
                let num = (f.log_density(&x, &p).unwrap() - f.log_density(&x, &m).unwrap()) / (2.0 * hh);
                err = err.max((num - s[i]).abs());
            }
            assert!(err / dot(&s, &s).sqrt().max(1.0) < 1e-6, "err {err}");
        }
    }

    #[test]
    fn conditional_samples_have_the_right_moments() {
        let spec = ModelSpec::anisotropic(1.0, 0.0, 2.0, 2);
        let init = MixtureInit::angled(1.0, 0.0, 0.0, 0.0);
        let f = CondFrame::at(&spec, &init, 0.7).unwrap();
        let mut r = rng::stream(3, 0);
        let x = vec![0.4, -0.2];
        let n = 20_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let y = f.sample(&x, &mut r).unwrap();
            s2 += dot(&y, &y);
        }
        let var = s2 / (2 * n) as f64;
        assert!((var - f.cyx).abs() < 4.0 * f.cyx * (1.0 / n as f64).sqrt());
    }

    #[test]
    fn toy_batch_is_deterministic() {
        let cfg = ToyConfig { dim: 4, trials: 16, steps: 50, g0: 0.5, seed: 9, ..ToyConfig::default() };
        let a = conditional_reverse_sample(&cfg).unwrap();
        let b = conditional_reverse_sample(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failed, 0);
        assert_eq!(a.pairs.len(), 16);
    }

    #[test]
    fn decoupled_toy_reproduces_the_y_marginal() {
        // With g ≡ 0 the generated targets follow the data mixture:
        // per-coordinate second moment σ² + m².
        let cfg = ToyConfig { dim: 8, trials: 1500, steps: 400, m2: 1.0, seed: 4, ..ToyConfig::default() };
        let batch = conditional_reverse_sample(&cfg).unwrap();
        let n = (batch.pairs.len() * cfg.dim) as f64;
        let m2: f64 = batch.pairs.iter().map(|p| dot(&p.y0, &p.y0)).sum::<f64>() / n;
        let want = cfg.sigma2 + cfg.m2;
        // Var(y²) = 2σ⁴ + 4σ²m² per coordinate; coordinates in a trial share a sign.
        let se = ((2.0 + 4.0 * cfg.m2) / n).sqrt() * 3.0;
        assert!((m2 - want).abs() < 4.0 * se + 0.02, "second moment {m2}, want {want}");
    }
}
