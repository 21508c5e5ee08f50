//! Exact score fields: population mixture, empirical data, and the per-mode
//! product mixture.

use crate::blockmat::{self, Block2};
use crate::error::{Error, Result};
use crate::moments::{self, Coupling, MixtureInit, ModelSpec};

use super::{dot, State};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `∇_z log p_t(z)` at forward time `t`.
pub trait ScoreField: Sync {
    fn score(&self, z: &State, t: f64) -> Result<State>;
}

/// `log cosh a` without overflow.
fn log_cosh(a: f64) -> f64 {
    let b = a.abs();
    b + (-2.0 * b).exp().ln_1p() - std::f64::consts::LN_2
}

/// Score of the two-component population mixture `½N(±μ(t), C(t))`.
#[derive(Debug, Clone)]
pub struct PopulationScore {
    spec: ModelSpec,
    init: MixtureInit,
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
}

struct PopEval {
    w: State,
    mu: State,
    mu_c: State,
    a: f64,
    c: Block2,
}

impl PopulationScore {
    pub fn new(spec: ModelSpec, init: MixtureInit) -> Result<Self> {
        spec.validate()?;
        init.validate()?;
        spec.drift()?;
        let (mean_x, mean_y) = init.mean_pair().materialize(spec.dim)?;
        Ok(PopulationScore { spec, init, mean_x, mean_y })
    }

    pub fn means(&self) -> (&[f64], &[f64]) {
        (&self.mean_x, &self.mean_y)
    }

    fn eval(&self, z: &State, t: f64) -> Result<PopEval> {
        if z.dim() != self.spec.dim {
            return Err(Error::invalid(format!("state has dimension {}, model has {}", z.dim(), self.spec.dim)));
        }
        let st = moments::diffusion_kernel(&self.spec, &self.init, t)?;
        if !(st.c.a11 > 0.0 && st.c.det() > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("C({t})")));
        }
        let cinv = blockmat::block_inverse(st.c)?;
        let w = z.apply(&cinv);
        let mu = State { x: self.mean_x.clone(), y: self.mean_y.clone() }.apply(&st.propagator);
        let mu_c = mu.apply(&cinv);
        let a = mu_c.dot(z);
        Ok(PopEval { w, mu, mu_c, a, c: st.c })
    }

    pub fn log_density(&self, z: &State, t: f64) -> Result<f64> {
        let e = self.eval(z, t)?;
        let d = z.dim() as f64;
        Ok(-0.5 * z.dot(&e.w) - 0.5 * e.mu.dot(&e.mu_c) + log_cosh(e.a) - d * LN_2PI - 0.5 * d * e.c.det().ln())
    }
}

impl ScoreField for PopulationScore {
    fn score(&self, z: &State, t: f64) -> Result<State> {
        let e = self.eval(z, t)?;
        let mut s = e.mu_c;
        let th = e.a.tanh();
        for v in s.x.iter_mut().chain(s.y.iter_mut()) {
            *v *= th;
        }
        s.axpy(-1.0, &e.w);
        Ok(s)
    }
}

pub fn population_score(spec: &ModelSpec, init: &MixtureInit, z: &State, t: f64) -> Result<State> {
    PopulationScore::new(*spec, *init)?.score(z, t)
}

pub fn population_log_density(spec: &ModelSpec, init: &MixtureInit, z: &State, t: f64) -> Result<f64> {
    PopulationScore::new(*spec, *init)?.log_density(z, t)
}

/// Score of the forward-diffused empirical distribution of `points`.
#[derive(Debug, Clone)]
pub struct EmpiricalScore {
    spec: ModelSpec,
    points: Vec<State>,
}

struct EmpEval {
    log_k: Vec<f64>,
    residuals: Vec<State>,
    q: Block2,
}

impl EmpiricalScore {
    pub fn new(spec: ModelSpec, points: Vec<State>) -> Result<Self> {
        spec.validate()?;
        spec.drift()?;
        if points.is_empty() {
            return Err(Error::invalid("empirical score needs at least one point"));
        }
        if points.iter().any(|p| p.dim() != spec.dim || !p.is_finite()) {
            return Err(Error::invalid("training points must be finite with the model dimension"));
        }
        Ok(EmpiricalScore { spec, points })
    }

    pub fn points(&self) -> &[State] {
        &self.points
    }

    fn eval(&self, z: &State, t: f64) -> Result<EmpEval> {
        if !(t > 0.0) {
            return Err(Error::KernelDegenerate { t });
        }
        let q = moments::transition_cov(&self.spec, t)?;
        let qinv = blockmat::block_inverse(q).map_err(|_| Error::KernelDegenerate { t })?;
        let phi = moments::propagator(&self.spec, t)?;
        let mut log_k = Vec::with_capacity(self.points.len());
        let mut residuals = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let mut r = p.apply(&phi);
            r.axpy(-1.0, z);
            let qr = r.apply(&qinv);
            log_k.push(-0.5 * r.dot(&qr));
            residuals.push(qr);
        }
        Ok(EmpEval { log_k, residuals, q })
    }

    /// Posterior weights over training points at `(z, t)`.
    pub fn weights(&self, z: &State, t: f64) -> Result<Vec<f64>> {
        Ok(softmax(&self.eval(z, t)?.log_k))
    }

    /// Score and posterior weights.
    pub fn score_and_weights(&self, z: &State, t: f64) -> Result<(State, Vec<f64>)> {
        let e = self.eval(z, t)?;
        let w = softmax(&e.log_k);
        let mut s = State::zeros(z.dim());
        for (wi, r) in w.iter().zip(&e.residuals) {
            s.axpy(*wi, r);
        }
        Ok((s, w))
    }

    pub fn log_density(&self, z: &State, t: f64) -> Result<f64> {
        let e = self.eval(z, t)?;
        let d = z.dim() as f64;
        let n = e.log_k.len() as f64;
        Ok(log_sum_exp(&e.log_k) - n.ln() - d * LN_2PI - 0.5 * d * e.q.det().ln())
    }
}

impl ScoreField for EmpiricalScore {
    fn score(&self, z: &State, t: f64) -> Result<State> {
        Ok(self.score_and_weights(z, t)?.0)
    }
}

pub fn empirical_score(points: &[State], spec: &ModelSpec, z: &State, t: f64) -> Result<(State, Vec<f64>)> {
    EmpiricalScore::new(*spec, points.to_vec())?.score_and_weights(z, t)
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Score when the common and difference modes carry independent two-point
/// labels: `u ~ ½N(±μ_u, σ²I)` and `v ~ ½N(±μ_v, σ²I)`, with `μ_u, μ_v` along
/// the first coordinate of their mode.
///
/// Symmetric coupling with any noise correlation keeps the modes independent,
/// so the score factorizes.
#[derive(Debug, Clone)]
pub struct ModeMixtureScore {
    spec: ModelSpec,
    sigma2: f64,
    mean_u: f64,
    mean_v: f64,
}

impl ModeMixtureScore {
    pub fn new(spec: ModelSpec, sigma2: f64, m_u2: f64, m_v2: f64) -> Result<Self> {
        spec.validate()?;
        if !spec.is_symmetric() {
            return Err(Error::UnsupportedShape("mode mixture needs symmetric coupling".into()));
        }
        if !(sigma2 > 0.0 && m_u2 >= 0.0 && m_v2 >= 0.0) {
            return Err(Error::invalid("mode mixture needs sigma2 > 0 and non-negative norms"));
        }
        let scale = (spec.dim as f64).sqrt();
        Ok(ModeMixtureScore { spec, sigma2, mean_u: scale * m_u2.sqrt(), mean_v: scale * m_v2.sqrt() })
    }

    /// Full-dimensional `(μ_u, μ_v)`.
    pub fn mode_means(&self) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; self.spec.dim];
        let mut v = vec![0.0; self.spec.dim];
        u[0] = self.mean_u;
        v[0] = self.mean_v;
        (u, v)
    }

    /// `(decay of the mean, variance, noise rate)` per mode at time `t`.
    fn mode_params(&self, t: f64) -> [(f64, f64, f64); 2] {
        let Coupling::Symmetric { g } = self.spec.coupling else { unreachable!() };
        let b = self.spec.beta;
        let rho = self.spec.noise_corr;
        let one = |tau: f64, s: f64, m: f64| {
            let c = self.sigma2 * (-tau * t).exp() + s * moments::relax_integral(tau, t);
            ((-0.5 * tau * t).exp() * m, c, s)
        };
        [
            one(2.0 * (b - g), self.spec.sigma_w2 * (1.0 + rho), self.mean_u),
            one(2.0 * (b + g), self.spec.sigma_w2 * (1.0 - rho), self.mean_v),
        ]
    }

    pub fn log_density(&self, z: &State, t: f64) -> Result<f64> {
        let (u, v) = z.modes();
        let d = z.dim() as f64;
        let mut total = 0.0;
        for (w, (m, c, _)) in [u, v].iter().zip(self.mode_params(t)) {
            let a = m * w[0] / c;
            total += -0.5 * dot(w, w) / c - 0.5 * m * m / c + log_cosh(a) - 0.5 * d * (LN_2PI + c.ln());
        }
        Ok(total)
    }
}

impl ScoreField for ModeMixtureScore {
    fn score(&self, z: &State, t: f64) -> Result<State> {
        if z.dim() != self.spec.dim {
            return Err(Error::invalid("state dimension does not match the model"));
        }
        let (mut u, mut v) = z.modes();
        for (w, (m, c, _)) in [&mut u, &mut v].into_iter().zip(self.mode_params(t)) {
            let th = (m * w[0] / c).tanh();
            for x in w.iter_mut() {
                *x = -*x / c;
            }
            w[0] += th * m / c;
        }
        Ok(State::from_modes(&u, &v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sampler::sample_gaussian;
    use rand::Rng;

    fn fd_check<F, S>(logp: F, score: S, z: &State, tol: f64)
    where
        F: Fn(&State) -> f64,
        S: Fn(&State) -> State,
    {
        let s = score(z);
        let h = 1e-5;
        let mut num = State::zeros(z.dim());
        for i in 0..z.dim() {
            for ch in 0..2 {
                let mut p = z.clone();
                let mut m = z.clone();
                let (pp, mm, slot) = if ch == 0 {
                    (&mut p.x[i], &mut m.x[i], &mut num.x[i])
                } else {
                    (&mut p.y[i], &mut m.y[i], &mut num.y[i])
                };
                *pp += h;
                *mm -= h;
                *slot = (logp(&p) - logp(&m)) / (2.0 * h);
            }
        }
        let err = num.distance(&s) / s.norm().max(1.0);
        assert!(err < tol, "relative error {err}");
    }

    #[test]
    fn population_score_examples() {
        let spec = ModelSpec::symmetric(1.0, 0.3, 2.0, 3);
        let init = MixtureInit::modes(1.0, 1.0, 0.5);
        let s = population_score(&spec, &init, &State::zeros(3), 0.4).unwrap();
        assert!(s.norm() == 0.0);
        let flat = MixtureInit::modes(1.0, 0.0, 0.0);
        let z = State::new(vec![0.3, -1.0, 2.0], vec![0.5, 0.1, -0.7]).unwrap();
        let s = population_score(&spec, &flat, &z, 0.4).unwrap();
        let c = moments::diffusion_kernel(&spec, &flat, 0.4).unwrap().c;
        let want = z.apply(&blockmat::block_inverse(c).unwrap());
        let mut diff = s.clone();
        diff.axpy(1.0, &want);
        assert!(diff.norm() < 1e-14);
    }

    #[test]
    fn population_matches_finite_difference() {
        let mut r = rng::stream(11, 0);
        let spec = ModelSpec::anisotropic(1.0, 0.8, 2.0, 4);
        let init = MixtureInit::angled(1.0, 0.7, 0.4, 1.1);
        let ps = PopulationScore::new(spec, init).unwrap();
        for _ in 0..10 {
            let t: f64 = r.random_range(0.0..2.0);
            let z = sample_gaussian(&Block2::scalar(2.0), 4, &mut r).unwrap();
            fd_check(|z| ps.log_density(z, t).unwrap(), |z| ps.score(z, t).unwrap(), &z, 1e-6);
        }
    }

    #[test]
    fn empirical_examples() {
        let spec = ModelSpec::symmetric(1.0, 0.2, 2.0, 2);
        let p = State::new(vec![1.0, -1.0], vec![0.5, 2.0]).unwrap();
        let z = State::new(vec![0.2, 0.3], vec![-0.1, 0.4]).unwrap();
        let (s, w) = empirical_score(&[p.clone()], &spec, &z, 0.5).unwrap();
        assert_eq!(w, vec![1.0]);
        let phi = moments::propagator(&spec, 0.5).unwrap();
        let q = moments::transition_cov(&spec, 0.5).unwrap();
        let mut r = p.apply(&phi);
        r.axpy(-1.0, &z);
        let want = r.apply(&blockmat::block_inverse(q).unwrap());
        assert!(s.distance(&want) < 1e-14);

        let (_, w) = empirical_score(&[p.clone(), p.clone(), z.clone()], &spec, &z, 0.5).unwrap();
        assert_eq!(w[0], w[1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(empirical_score(&[p], &spec, &z, 0.0), Err(Error::KernelDegenerate { .. })));
    }

    #[test]
    fn empirical_matches_finite_difference() {
        let mut r = rng::stream(12, 0);
        let spec = ModelSpec::anisotropic(1.0, 0.5, 2.0, 3);
        let pts: Vec<State> = (0..6).map(|_| sample_gaussian(&Block2::IDENTITY, 3, &mut r).unwrap()).collect();
        let es = EmpiricalScore::new(spec, pts).unwrap();
        for _ in 0..10 {
            let t: f64 = r.random_range(0.2..2.0);
            let z = sample_gaussian(&Block2::IDENTITY, 3, &mut r).unwrap();
            fd_check(|z| es.log_density(z, t).unwrap(), |z| es.score(z, t).unwrap(), &z, 1e-6);
        }
    }

    #[test]
    fn mode_mixture_matches_finite_difference() {
        let mut r = rng::stream(13, 0);
        let spec = ModelSpec::symmetric(1.0, 0.0, 2.0, 3).with_noise_corr(-0.5);
        let ms = ModeMixtureScore::new(spec, 0.5, 0.25, 0.6).unwrap();
        for _ in 0..10 {
            let t: f64 = r.random_range(0.0..2.0);
            let z = sample_gaussian(&Block2::IDENTITY, 3, &mut r).unwrap();
            fd_check(|z| ms.log_density(z, t).unwrap(), |z| ms.score(z, t).unwrap(), &z, 1e-6);
        }
    }
}
