//! Forward Euler–Maruyama, reverse-time SDE, and probability-flow ODE.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::blockmat::Block2;
use crate::error::{Error, Result};
use crate::moments::ModelSpec;

use super::{Record, Recorder, ScoreField, State, TimeGrid, Trajectory};

fn add_noise<R: Rng + ?Sized>(z: &mut State, factor: &Block2, scale: f64, rng: &mut R) {
    for i in 0..z.dim() {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        z.x[i] += scale * factor.a11 * a;
        z.y[i] += scale * (factor.a21 * a + factor.a22 * b);
    }
}

fn check_start(spec: &ModelSpec, z: &State) -> Result<()> {
    if z.dim() != spec.dim || !z.is_finite() {
        return Err(Error::invalid("start state must be finite with the model dimension"));
    }
    Ok(())
}

/// Euler–Maruyama for `dZ = M(t) Z dt + Σ_W dW` from `start` at `t = 0`.
pub fn forward_sample<R: Rng + ?Sized>(
    spec: &ModelSpec,
    start: State,
    grid: TimeGrid,
    rng: &mut R,
    record: &Record,
) -> Result<Trajectory> {
    spec.validate()?;
    check_start(spec, &start)?;
    let h = grid.step();
    let factor = spec.noise_factor();
    let mut rec = Recorder::new(record);
    let mut z = start;
    rec.observe(0, 0.0, &z);
    for k in 0..grid.steps {
        let drift = z.apply(&spec.drift_at(grid.forward_time(k)));
        z.axpy(h, &drift);
        add_noise(&mut z, &factor, h.sqrt(), rng);
        rec.observe(k + 1, grid.forward_time(k + 1), &z);
    }
    Ok(rec.finish(grid.horizon, z))
}

/// Reverse-time Euler–Maruyama from `start` at reverse step `from_step`
/// down to `t = 0`:
/// `z ← z + h (−M(t_k) z + Σ ∇log p_{t_k}(z)) + Σ_W √h ξ`.
///
/// The last step is taken without noise, so the returned state is the
/// denoised endpoint.
pub fn reverse_sample<R: Rng + ?Sized>(
    spec: &ModelSpec,
    score: &dyn ScoreField,
    grid: TimeGrid,
    start: State,
    from_step: usize,
    rng: &mut R,
    record: &Record,
) -> Result<Trajectory> {
    spec.validate()?;
    check_start(spec, &start)?;
    if from_step > grid.steps {
        return Err(Error::invalid(format!("start step {from_step} beyond {} steps", grid.steps)));
    }
    let h = grid.step();
    let noise = spec.noise();
    let factor = spec.noise_factor();
    let mut rec = Recorder::new(record);
    let mut z = start;
    rec.observe(from_step, grid.reverse_time(from_step), &z);
    for k in from_step..grid.steps {
        let t = grid.reverse_time(k);
        let s = score.score(&z, t).map_err(|e| e.at_step(k))?;
        let mut drift = s.apply(&noise);
        drift.axpy(-1.0, &z.apply(&spec.drift_at(t)));
        z.axpy(h, &drift);
        if k + 1 < grid.steps {
            add_noise(&mut z, &factor, h.sqrt(), rng);
        }
        rec.observe(k + 1, grid.reverse_time(k + 1), &z);
    }
    Ok(rec.finish(0.0, z))
}

/// RK4 integration of the probability-flow ODE
/// `dz/ds = −M(t) z + ½ Σ ∇log p_t(z)` with `t = T − s`.
pub fn flow_sample(
    spec: &ModelSpec,
    score: &dyn ScoreField,
    grid: TimeGrid,
    start: State,
    record: &Record,
) -> Result<Trajectory> {
    spec.validate()?;
    check_start(spec, &start)?;
    let h = grid.step();
    let half_noise = spec.noise().scale(0.5);
    let field = |z: &State, t: f64| -> Result<State> {
        let mut f = score.score(z, t)?.apply(&half_noise);
        f.axpy(-1.0, &z.apply(&spec.drift_at(t)));
        Ok(f)
    };
    let mut rec = Recorder::new(record);
    let mut z = start;
    rec.observe(0, grid.horizon, &z);
    for k in 0..grid.steps {
        let t = grid.reverse_time(k);
        let stage = |z: &State, t: f64| field(z, t).map_err(|e| e.at_step(k));
        let k1 = stage(&z, t)?;
        let mut z2 = z.clone();
        z2.axpy(0.5 * h, &k1);
        let k2 = stage(&z2, t - 0.5 * h)?;
        let mut z3 = z.clone();
        z3.axpy(0.5 * h, &k2);
        let k3 = stage(&z3, t - 0.5 * h)?;
        let mut z4 = z.clone();
        z4.axpy(h, &k3);
        let k4 = stage(&z4, (t - h).max(0.0))?;
        z.axpy(h / 6.0, &k1);
        z.axpy(h / 3.0, &k2);
        z.axpy(h / 3.0, &k3);
        z.axpy(h / 6.0, &k4);
        rec.observe(k + 1, grid.reverse_time(k + 1), &z);
    }
    Ok(rec.finish(0.0, z))
}
