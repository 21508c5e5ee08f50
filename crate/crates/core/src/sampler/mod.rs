//! Exact-score sampling of the coupled process.
//!
//! Forward time runs `0 → T`; reverse integrators walk the same clock
//! backwards on `t_k = T (1 − k/steps)`.

mod conditional;
mod noise;
mod scores;
mod sde;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blockmat::Block2;
use crate::error::{Error, Result};
use crate::moments::MixtureInit;

pub use crate::schedule::{ScheduleKind, ScheduleSpec};
pub use conditional::{
    conditional_log_density, conditional_reverse_sample, conditional_score, CondFrame, ToyBatch, ToyConfig, ToyPair,
};
pub use noise::mode_shaped_noise;
pub use scores::{
    empirical_score, population_log_density, population_score, EmpiricalScore, ModeMixtureScore,
    PopulationScore, ScoreField,
};
pub use sde::{flow_sample, forward_sample, reverse_sample};

/// A point `(x, y) ∈ R^{2d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl State {
    pub fn zeros(dim: usize) -> Self {
        State { x: vec![0.0; dim], y: vec![0.0; dim] }
    }

    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("channel lengths differ: {} vs {}", x.len(), y.len())));
        }
        Ok(State { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// `(B ⊗ I) z`.
    pub fn apply(&self, b: &Block2) -> State {
        let (x, y) = b.apply(&self.x, &self.y);
        State { x, y }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &State) {
        for (s, o) in self.x.iter_mut().zip(&other.x) {
            *s += a * o;
        }
        for (s, o) in self.y.iter_mut().zip(&other.y) {
            *s += a * o;
        }
    }

    pub fn dot(&self, other: &State) -> f64 {
        dot(&self.x, &other.x) + dot(&self.y, &other.y)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &State) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.norm()
    }

    /// Common and difference modes `((x+y)/√2, (x−y)/√2)`.
    pub fn modes(&self) -> (Vec<f64>, Vec<f64>) {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = self.x.iter().zip(&self.y).map(|(a, b)| r * (a + b)).collect();
        let v = self.x.iter().zip(&self.y).map(|(a, b)| r * (a - b)).collect();
        (u, v)
    }

    /// Inverse of [`modes`](Self::modes).
    pub fn from_modes(u: &[f64], v: &[f64]) -> State {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        State {
            x: u.iter().zip(v).map(|(a, b)| r * (a + b)).collect(),
            y: u.iter().zip(v).map(|(a, b)| r * (a - b)).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Draw from `N(0, cov ⊗ I_d)`.
pub fn sample_gaussian<R: Rng + ?Sized>(cov: &Block2, dim: usize, rng: &mut R) -> Result<State> {
    let l = crate::blockmat::cholesky(*cov)?;
    let mut z = State::zeros(dim);
    for i in 0..dim {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        z.x[i] = l.a11 * a;
        z.y[i] = l.a21 * a + l.a22 * b;
    }
    Ok(z)
}

/// Draw from the initial mixture; returns the point and its component sign.
pub fn sample_mixture<R: Rng + ?Sized>(init: &MixtureInit, dim: usize, rng: &mut R) -> Result<(State, f64)> {
    let (mx, my) = init.mean_pair().materialize(dim)?;
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let (sx, sy) = (init.sigma2_x.sqrt(), init.sigma2_y.sqrt());
    let mut z = State::zeros(dim);
    for i in 0..dim {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        z.x[i] = sign * mx[i] + sx * a;
        z.y[i] = sign * my[i] + sy * b;
    }
    Ok((z, sign))
}

/// Uniform step grid on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("need at least one step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Forward time at forward step `k`.
    pub fn forward_time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    /// Forward time reached after `k` reverse steps.
    pub fn reverse_time(&self, k: usize) -> f64 {
        self.horizon * (self.steps - k) as f64 / self.steps as f64
    }

    /// Reverse step index whose time is closest to `t`.
    pub fn reverse_index(&self, t: f64) -> usize {
        let k = (self.steps as f64 * (1.0 - t / self.horizon)).round();
        k.clamp(0.0, self.steps as f64) as usize
    }
}

/// What a sampler keeps besides the final state.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Record {
    #[default]
    Final,
    All,
    /// Snapshot the state reached after each listed step count into the scan
    /// cache.
    Scan(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub state: State,
}

/// A sampled path. `times[i]` is the forward-clock time of `states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub scan_cache: Vec<Snapshot>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn into_final(mut self) -> State {
        self.states.pop().expect("trajectory holds at least one state")
    }

    pub fn snapshot(&self, step: usize) -> Option<&Snapshot> {
        self.scan_cache.iter().find(|s| s.step == step)
    }
}

pub(crate) struct Recorder<'a> {
    record: &'a Record,
    traj: Trajectory,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(record: &'a Record) -> Self {
        Recorder { record, traj: Trajectory { times: Vec::new(), states: Vec::new(), scan_cache: Vec::new() } }
    }

    pub(crate) fn observe(&mut self, step: usize, t: f64, z: &State) {
        match self.record {
            Record::Final => {}
            Record::All => {
                self.traj.times.push(t);
                self.traj.states.push(z.clone());
            }
            Record::Scan(steps) => {
                if steps.contains(&step) {
                    self.traj.scan_cache.push(Snapshot { step, t, state: z.clone() });
                }
            }
        }
    }

    pub(crate) fn finish(mut self, t: f64, z: State) -> Trajectory {
        if !matches!(self.record, Record::All) {
            self.traj.times.push(t);
            self.traj.states.push(z);
        }
        self.traj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_round_trip() {
        let z = State::new(vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        let (u, v) = z.modes();
        let back = State::from_modes(&u, &v);
        assert!(back.distance(&z) < 1e-15);
    }

    #[test]
    fn grid_indices() {
        let g = TimeGrid::new(2.0, 800).unwrap();
        assert_eq!(g.reverse_time(0), 2.0);
        assert_eq!(g.reverse_time(800), 0.0);
        assert_eq!(g.reverse_index(1.0), 400);
        assert_eq!(g.forward_time(400), 1.0);
    }
}
