//! The conditional generation sweep over angle, coupling and schedule.

use serde::{Deserialize, Serialize};

use crate::blockmat::Block2;
use crate::error::{Error, Result};
use crate::moments::{MixtureInit, MomentState};
use crate::sampler::{conditional_reverse_sample, dot, CondFrame, ToyConfig, ToyPair};
use crate::schedule::ScheduleKind;

use super::metrics::wilson_interval;

/// Quality of generated targets against the data at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyMetrics {
    pub accuracy: f64,
    pub correct: u64,
    pub mse: f64,
    pub nll: f64,
    pub n: u64,
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Alignment accuracy, `½ mean ‖ỹ₀ − s(x₀) μ_y‖²` and `mean −log P₀(ỹ₀ | x₀)`.
pub fn toy_metrics(pairs: &[ToyPair], init: &MixtureInit, dim: usize) -> Result<ToyMetrics> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to score"));
    }
    let at_zero = MomentState {
        t: 0.0,
        propagator: Block2::IDENTITY,
        mean: init.mean_pair(),
        s: init.cov0(),
        q: Block2::ZERO,
        c: init.cov0(),
    };
    let frame = CondFrame::new(&at_zero, dim)?;
    let (mut correct, mut sq, mut nll) = (0u64, 0.0, 0.0);
    for p in pairs {
        let sx = sign(dot(&p.x0, &frame.mx));
        if sign(dot(&p.y0, &frame.my)) == sx {
            correct += 1;
        }
        sq += p.y0.iter().zip(&frame.my).map(|(y, m)| (y - sx * m).powi(2)).sum::<f64>();
        nll -= frame.log_density(&p.x0, &p.y0)?;
    }
    let n = pairs.len() as f64;
    Ok(ToyMetrics { accuracy: correct as f64 / n, correct, mse: 0.5 * sq / n, nll: nll / n, n: pairs.len() as u64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyExperimentConfig {
    /// Shared settings; its `theta`, `g0` and `schedule` are overridden per cell.
    pub base: ToyConfig,
    pub thetas: Vec<f64>,
    pub g0s: Vec<f64>,
    pub schedules: Vec<ScheduleKind>,
    #[serde(default = "default_conf")]
    pub confidence: f64,
}

fn default_conf() -> f64 {
    0.95
}

impl Default for ToyExperimentConfig {
    fn default() -> Self {
        ToyExperimentConfig {
            base: ToyConfig::default(),
            thetas: (0..9).map(|i| std::f64::consts::PI * i as f64 / 8.0).collect(),
            g0s: vec![0.2, 0.5, 1.0],
            schedules: vec![ScheduleKind::Constant, ScheduleKind::Late, ScheduleKind::Early],
            confidence: 0.95,
        }
    }
}

impl ToyExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.g0s.is_empty() || self.schedules.is_empty() {
            return Err(Error::invalid("sweep axes must be non-empty"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence must lie in (0, 1)"));
        }
        for &theta in &self.thetas {
            for &g0 in &self.g0s {
                ToyConfig { theta, g0, ..self.base }.validate()?;
            }
        }
        Ok(())
    }
}

/// One sweep cell, as differences against the uncoupled run at the same angle.
///
/// The accuracy interval is the Wilson interval of the cell's accuracy,
/// shifted by the baseline accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyRow {
    pub theta: f64,
    pub g0: f64,
    pub schedule: ScheduleKind,
    pub d_accuracy: f64,
    pub d_mse: f64,
    pub d_nll: f64,
    pub acc_ci_lo: f64,
    pub acc_ci_hi: f64,
    pub n: u64,
    pub failed: usize,
    pub error: Option<String>,
}

impl ToyRow {
    fn failed_cell(theta: f64, g0: f64, schedule: ScheduleKind, err: &Error) -> Self {
        ToyRow {
            theta,
            g0,
            schedule,
            d_accuracy: f64::NAN,
            d_mse: f64::NAN,
            d_nll: f64::NAN,
            acc_ci_lo: f64::NAN,
            acc_ci_hi: f64::NAN,
            n: 0,
            failed: 0,
            error: Some(err.to_string()),
        }
    }
}

fn run_cell(cfg: &ToyConfig) -> Result<(ToyMetrics, usize)> {
    let batch = conditional_reverse_sample(cfg)?;
    Ok((toy_metrics(&batch.pairs, &cfg.init(), cfg.dim)?, batch.failed))
}

/// Runs one cell and its baseline.
pub fn run_toy_cell(base: &ToyConfig, confidence: f64) -> Result<ToyRow> {
    let (b, _) = run_cell(&ToyConfig { g0: 0.0, schedule: ScheduleKind::Constant, ..*base })?;
    let (m, failed) = run_cell(base)?;
    row(base, &b, &m, failed, confidence)
}

fn row(cfg: &ToyConfig, b: &ToyMetrics, m: &ToyMetrics, failed: usize, confidence: f64) -> Result<ToyRow> {
    let (lo, hi) = wilson_interval(m.correct, m.n, confidence)?;
    Ok(ToyRow {
        theta: cfg.theta,
        g0: cfg.g0,
        schedule: cfg.schedule,
        d_accuracy: m.accuracy - b.accuracy,
        d_mse: m.mse - b.mse,
        d_nll: m.nll - b.nll,
        acc_ci_lo: lo - b.accuracy,
        acc_ci_hi: hi - b.accuracy,
        n: m.n,
        failed,
        error: None,
    })
}

/// Full sweep, θ-major then g0 then schedule. Failed cells are reported in
/// their row and the sweep continues.
pub fn run_toy_experiment(config: &ToyExperimentConfig) -> Result<Vec<ToyRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &theta in &config.thetas {
        let base = ToyConfig { theta, g0: 0.0, schedule: ScheduleKind::Constant, ..config.base };
        let baseline = run_cell(&base);
        for &g0 in &config.g0s {
            for &schedule in &config.schedules {
                let cfg = ToyConfig { theta, g0, schedule, ..config.base };
                let r = baseline
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|(b, _)| run_cell(&cfg).and_then(|(m, f)| row(&cfg, b, &m, f, config.confidence)));
                rows.push(r.unwrap_or_else(|e| ToyRow::failed_cell(theta, g0, schedule, &e)));
            }
        }
    }
    Ok(rows)
}
