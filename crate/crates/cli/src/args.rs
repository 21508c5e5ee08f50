//! Subcommand arguments. Each struct is also its config-file schema; every
//! field is optional so that the file can fill in what the flags leave out.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oudiff_core::{MixtureInit, ModelSpec, ScheduleKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "oudiff", version, about = "Phase transitions and exact-score sampling for coupled OU diffusions")]
pub struct Cli {
    /// JSON file with the subcommand's parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Validate and print the resolved parameters without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Master seed; falls back to the config file, then OUDIFF_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file (default: standard output).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Speciation time from κ(t) = 1.
    Speciation(SpeciationArgs),
    /// REM collapse times and the collapse bound.
    Collapse(CollapseArgs),
    /// Regimes over a (g, θ) grid for anisotropic coupling, as CSV.
    PhaseDiagram(PhaseArgs),
    /// Forward, reverse-SDE or probability-flow samples, as CSV.
    Sample(SampleArgs),
    /// Conditional generation sweep over angle, coupling and schedule, as CSV.
    ToyConditional(ToyArgs),
    /// Clone-agreement speciation curves per mode, as CSV.
    CloneSpeciation(CloneArgs),
    /// Confinement of the reverse drift for symmetric coupling.
    Stability(StabilityArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Speciation(_) => "speciation",
            Command::Collapse(_) => "collapse",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::Sample(_) => "sample",
            Command::ToyConditional(_) => "toy-conditional",
            Command::CloneSpeciation(_) => "clone-speciation",
            Command::Stability(_) => "stability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    Symmetric,
    Anisotropic,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub g: Option<f64>,
    #[arg(long, value_enum)]
    pub coupling: Option<CouplingKind>,
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    /// Correlation of the two channels' noise.
    #[arg(long, allow_negative_numbers = true)]
    pub noise_corr: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
}

impl ModelArgs {
    pub fn build(&self, default_coupling: CouplingKind, default_dim: usize) -> ModelSpec {
        let (b, g, sw2) = (self.beta.unwrap_or(1.0), self.g.unwrap_or(0.0), self.sigma_w2.unwrap_or(2.0));
        let dim = self.dim.unwrap_or(default_dim);
        let spec = match self.coupling.unwrap_or(default_coupling) {
            CouplingKind::Symmetric => ModelSpec::symmetric(b, g, sw2, dim),
            CouplingKind::Anisotropic => ModelSpec::anisotropic(b, g, sw2, dim),
        };
        spec.with_noise_corr(self.noise_corr.unwrap_or(0.0))
    }
}

/// Initial mixture. Mode norms are used unless a channel norm or angle is given.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct InitArgs {
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub m_plus2: Option<f64>,
    #[arg(long)]
    pub m_minus2: Option<f64>,
    #[arg(long)]
    pub m_x2: Option<f64>,
    #[arg(long)]
    pub m_y2: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
}

impl InitArgs {
    pub fn build(&self) -> MixtureInit {
        let s2 = self.sigma2.unwrap_or(1.0);
        if self.m_x2.is_some() || self.m_y2.is_some() || self.theta.is_some() {
            MixtureInit::angled(s2, self.m_x2.unwrap_or(1.0), self.m_y2.unwrap_or(1.0), self.theta.unwrap_or(0.0))
        } else {
            MixtureInit::modes(s2, self.m_plus2.unwrap_or(1.0), self.m_minus2.unwrap_or(0.0))
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeciationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    /// Search window for t (default 10/β).
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CollapseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Entropy density log n / (2d).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Data variance over noise variance, σ² / σ_W².
    #[arg(long)]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub g_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub g_max: Option<f64>,
    #[arg(long)]
    pub g_points: Option<usize>,
    /// Uniform angles on [0, π].
    #[arg(long)]
    pub theta_points: Option<usize>,
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMethod {
    Forward,
    Sde,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Population,
    Empirical,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long, value_enum)]
    pub method: Option<SampleMethod>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreKind>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Training points for the empirical score.
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Per-dimension squared norm of both channel means.
    #[arg(long)]
    pub m2: Option<f64>,
    /// Schedule switch time (default horizon/2).
    #[arg(long)]
    pub t0: Option<f64>,
    /// Angles, comma separated (default: 9 uniform points on [0, π]).
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub g0s: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub schedules: Option<Vec<ScheduleKind>>,
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CloneArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub m_u2: Option<f64>,
    #[arg(long)]
    pub m_v2: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub scan_times: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub g_values: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Also write crossing times and their intervals as JSON here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub init: InitArgs,
    #[arg(long)]
    pub window: Option<f64>,
}
