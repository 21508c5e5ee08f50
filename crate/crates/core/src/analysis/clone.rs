//! Clone-agreement speciation diagnostics on the per-mode mixture.
//!
//! A master reverse path is cached at the scan times. From each cached state
//! two clones run to `t = 0` with independent noise, and each mode's label is
//! the sign of the final state's projection on that mode's mean. The fraction
//! of agreeing clone pairs, corrected by the agreement of fully independent
//! runs, falls from 1 to 0 as the scan time moves past the mode's speciation.
//!
//! Coupling enters through the noise: channel noise with `Cov = −g` gives the
//! common mode noise rate `σ_W²(1 − g)` and the difference mode `σ_W²(1 + g)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{self, ModelSpec};
use crate::rng;
use crate::sampler::{reverse_sample, sample_gaussian, ModeMixtureScore, Record, State, TimeGrid};

use super::metrics::{excess, last_crossing, wilson_interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloneConfig {
    pub dim: usize,
    pub beta: f64,
    pub sigma_w2: f64,
    pub sigma2: f64,
    pub m_u2: f64,
    pub m_v2: f64,
    pub horizon: f64,
    pub steps: usize,
    pub scan_times: Vec<f64>,
    pub g_values: Vec<f64>,
    pub repeats: usize,
    pub batch: usize,
    pub threshold: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        CloneConfig {
            dim: 16,
            beta: 1.0,
            sigma_w2: 2.0,
            sigma2: 0.5,
            m_u2: 0.25,
            m_v2: 0.25,
            horizon: 2.5,
            steps: 500,
            scan_times: (0..12).map(|i| 0.05 + 1.15 * i as f64 / 11.0).collect(),
            g_values: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            repeats: 5,
            batch: 128,
            threshold: 0.55,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl CloneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.batch == 0 || self.scan_times.is_empty() || self.g_values.is_empty() {
            return Err(Error::invalid("repeats, batch, scan times and g values must be non-empty"));
        }
        if self.m_u2 <= 0.0 || self.m_v2 <= 0.0 {
            return Err(Error::UndefinedLabel("mode means must be non-zero to define labels".into()));
        }
        let grid = TimeGrid::new(self.horizon, self.steps)?;
        if self.scan_times.iter().any(|t| !(0.0..=grid.horizon).contains(t)) {
            return Err(Error::invalid("scan times must lie in [0, horizon]"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0 && self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("threshold and confidence must lie in (0, 1)"));
        }
        for &g in &self.g_values {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::invalid(format!("mode-shaped noise needs 0 <= g < 1, got {g}")));
            }
            ModeMixtureScore::new(self.model(g), self.sigma2, self.m_u2, self.m_v2)?;
        }
        Ok(())
    }

    pub fn model(&self, g: f64) -> ModelSpec {
        ModelSpec::symmetric(self.beta, 0.0, self.sigma_w2, self.dim).with_noise_corr(-g)
    }

    fn pairs(&self) -> usize {
        self.repeats * self.batch
    }
}

/// Agreement of one mode against scan time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementCurve {
    pub scan_times: Vec<f64>,
    pub agree: Vec<u64>,
    pub n: u64,
    pub phi_raw: Vec<f64>,
    pub wilson_low: Vec<f64>,
    pub wilson_high: Vec<f64>,
    pub baseline: f64,
    pub baseline_n: u64,
    pub phi_excess: Vec<f64>,
    pub excess_low: Vec<f64>,
    pub excess_high: Vec<f64>,
    /// Speciation time; `None` when censored.
    pub crossing: Option<f64>,
    /// Crossings of the lower and upper excess bounds.
    pub crossing_low: Option<f64>,
    pub crossing_high: Option<f64>,
}

impl AgreementCurve {
    pub fn build(
        scan_times: Vec<f64>,
        agree: Vec<u64>,
        n: u64,
        baseline_agree: u64,
        baseline_n: u64,
        threshold: f64,
        confidence: f64,
    ) -> Result<Self> {
        if agree.len() != scan_times.len() || baseline_n == 0 {
            return Err(Error::invalid("agreement counts do not match the scan grid"));
        }
        let baseline = baseline_agree as f64 / baseline_n as f64;
        if baseline >= 1.0 {
            return Err(Error::UndefinedLabel("independent runs always agree".into()));
        }
        let phi_raw: Vec<f64> = agree.iter().map(|&k| k as f64 / n as f64).collect();
        let bounds = agree.iter().map(|&k| wilson_interval(k, n, confidence)).collect::<Result<Vec<_>>>()?;
        let wilson_low: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let wilson_high: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        let ex = |v: &[f64]| v.iter().map(|p| excess(*p, baseline)).collect::<Vec<_>>();
        let phi_excess = ex(&phi_raw);
        let excess_low = ex(&wilson_low);
        let excess_high = ex(&wilson_high);
        let crossing = last_crossing(&scan_times, &phi_excess, threshold)?;
        let crossing_low = last_crossing(&scan_times, &excess_low, threshold)?;
        let crossing_high = last_crossing(&scan_times, &excess_high, threshold)?;
        Ok(AgreementCurve {
            scan_times,
            agree,
            n,
            phi_raw,
            wilson_low,
            wilson_high,
            baseline,
            baseline_n,
            phi_excess,
            excess_low,
            excess_high,
            crossing,
            crossing_low,
            crossing_high,
        })
    }

    /// Half the width of the crossing interval; `None` if either bound is censored.
    pub fn crossing_half_width(&self) -> Option<f64> {
        Some(0.5 * (self.crossing_high? - self.crossing_low?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloneResult {
    pub g: f64,
    pub u: AgreementCurve,
    pub v: AgreementCurve,
}

impl CloneResult {
    /// `t_spec_u − t_spec_v`.
    pub fn gap(&self) -> Option<f64> {
        Some(self.u.crossing? - self.v.crossing?)
    }

    /// Sum of the two crossing half-widths: the gap is resolved when it
    /// exceeds this.
    pub fn combined_half_width(&self) -> Option<f64> {
        Some(self.u.crossing_half_width()? + self.v.crossing_half_width()?)
    }
}

fn labels(z: &State) -> [bool; 2] {
    let (u, v) = z.modes();
    [u[0] >= 0.0, v[0] >= 0.0]
}

const MASTER: u64 = 0;
const BASELINE: u64 = u64::MAX;

fn clone_label(scan: usize, clone: usize) -> u64 {
    1 + 2 * scan as u64 + clone as u64
}

/// Runs the protocol for one coupling value.
///
/// Random streams depend only on the seed and on the role of each run, so
/// different couplings share their random numbers.
pub fn clone_agreement(config: &CloneConfig, g: f64) -> Result<CloneResult> {
    config.validate()?;
    let spec = config.model(g);
    let score = ModeMixtureScore::new(spec, config.sigma2, config.m_u2, config.m_v2)?;
    let grid = TimeGrid::new(config.horizon, config.steps)?;
    let cov = moments::stationary_cov(&spec)?;
    let scan_steps: Vec<usize> = config.scan_times.iter().map(|&t| grid.reverse_index(t)).collect();
    let scan_times: Vec<f64> = scan_steps.iter().map(|&k| grid.reverse_time(k)).collect();
    let n_scan = scan_steps.len();

    let per_path: Vec<Result<Vec<[bool; 2]>>> = (0..config.pairs() as u64)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(rng::child_seed(config.seed, MASTER), p);
            let start = sample_gaussian(&cov, spec.dim, &mut r)?;
            let master = reverse_sample(&spec, &score, grid, start, 0, &mut r, &Record::Scan(scan_steps.clone()))?;
            let mut out = Vec::with_capacity(n_scan);
            for (s, &step) in scan_steps.iter().enumerate() {
                let snap = master
                    .snapshot(step)
                    .ok_or_else(|| Error::invalid(format!("scan step {step} was not cached")))?;
                let mut lab = [[false; 2]; 2];
                for (c, l) in lab.iter_mut().enumerate() {
                    let mut rc = rng::stream(rng::child_seed(config.seed, clone_label(s, c)), p);
                    let fin = reverse_sample(&spec, &score, grid, snap.state.clone(), step, &mut rc, &Record::Final)?;
                    *l = labels(fin.final_state());
                }
                out.push([lab[0][0] == lab[1][0], lab[0][1] == lab[1][1]]);
            }
            Ok(out)
        })
        .collect();

    let mut agree = [vec![0u64; n_scan], vec![0u64; n_scan]];
    for path in per_path {
        for (s, a) in path?.iter().enumerate() {
            for m in 0..2 {
                agree[m][s] += a[m] as u64;
            }
        }
    }

    let baseline_pairs = 4 * config.pairs() as u64;
    let indep: Vec<Result<[bool; 2]>> = (0..baseline_pairs)
        .into_par_iter()
        .map(|q| {
            let mut lab = [[false; 2]; 2];
            for (c, l) in lab.iter_mut().enumerate() {
                let mut r = rng::stream(rng::child_seed(config.seed, BASELINE - c as u64), q);
                let start = sample_gaussian(&cov, spec.dim, &mut r)?;
                let fin = reverse_sample(&spec, &score, grid, start, 0, &mut r, &Record::Final)?;
                *l = labels(fin.final_state());
            }
            Ok([lab[0][0] == lab[1][0], lab[0][1] == lab[1][1]])
        })
        .collect();
    let mut base = [0u64; 2];
    for a in indep {
        let a = a?;
        for m in 0..2 {
            base[m] += a[m] as u64;
        }
    }

    let n = config.pairs() as u64;
    let [agree_u, agree_v] = agree;
    let curve = |a: Vec<u64>, b: u64| {
        AgreementCurve::build(scan_times.clone(), a, n, b, baseline_pairs, config.threshold, config.confidence)
    };
    Ok(CloneResult { g, u: curve(agree_u, base[0])?, v: curve(agree_v, base[1])? })
}

/// [`clone_agreement`] for every configured coupling.
pub fn run_clone_experiment(config: &CloneConfig) -> Result<Vec<CloneResult>> {
    config.validate()?;
    config.g_values.iter().map(|&g| clone_agreement(config, g)).collect()
}
