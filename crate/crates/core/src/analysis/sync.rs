//! Deterministic stabilization curves: cosine to the final sample per mode and
//! per channel, synchronization gaps and the ghosting index.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::moments;
use crate::rng;
use crate::sampler::{flow_sample, sample_gaussian, ModeMixtureScore, Record, TimeGrid};

use super::clone::CloneConfig;
use super::metrics::{cosine_to_final, ghosting_index, sync_gap};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncCurves {
    pub g: f64,
    pub times: Vec<f64>,
    pub cos_u: Vec<f64>,
    pub cos_v: Vec<f64>,
    pub cos_a: Vec<f64>,
    pub cos_b: Vec<f64>,
    pub ghosting: Vec<f64>,
    /// `(τ, Δt(τ))`.
    pub gaps: Vec<(f64, Option<f64>)>,
}

/// Probability-flow paths from `paths` stationary starts, with the model of
/// [`CloneConfig`] at coupling `g`.
pub fn sync_diagnostics(config: &CloneConfig, g: f64, paths: usize, taus: &[f64]) -> Result<SyncCurves> {
    config.validate()?;
    let spec = config.model(g);
    let score = ModeMixtureScore::new(spec, config.sigma2, config.m_u2, config.m_v2)?;
    let grid = TimeGrid::new(config.horizon, config.steps)?;
    let cov = moments::stationary_cov(&spec)?;
    let runs = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(config.seed, p);
            let start = sample_gaussian(&cov, spec.dim, &mut r)?;
            flow_sample(&spec, &score, grid, start, &Record::All)
        })
        .collect::<Result<Vec<_>>>()?;
    let times = runs.first().map(|t| t.times.clone()).unwrap_or_default();
    let mut series: [Vec<Vec<Vec<f64>>>; 4] = Default::default();
    for traj in &runs {
        let mut per = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for z in &traj.states {
            let (u, v) = z.modes();
            per[0].push(u);
            per[1].push(v);
            per[2].push(z.x.clone());
            per[3].push(z.y.clone());
        }
        for (s, p) in series.iter_mut().zip(per) {
            s.push(p);
        }
    }
    let [cos_u, cos_v, cos_a, cos_b] = [0, 1, 2, 3].map(|i| cosine_to_final(&series[i]));
    let (cos_u, cos_v, cos_a, cos_b) = (cos_u?, cos_v?, cos_a?, cos_b?);
    let ghosting = ghosting_index(&cos_u, &cos_a, &cos_b)?;
    let gaps = taus
        .iter()
        .map(|&tau| Ok((tau, sync_gap(&times, &cos_u, &cos_v, tau)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyncCurves { g, times, cos_u, cos_v, cos_a, cos_b, ghosting, gaps })
}
