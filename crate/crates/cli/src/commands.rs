use std::path::PathBuf;

use oudiff_core::analysis::{
    run_clone_experiment, run_toy_experiment, CloneConfig, CloneResult, ToyExperimentConfig,
};
use oudiff_core::collapse::{self, CollapseParams};
use oudiff_core::moments;
use oudiff_core::rng;
use oudiff_core::sampler::{
    flow_sample, forward_sample, reverse_sample, sample_gaussian, sample_mixture, EmpiricalScore, PopulationScore,
    Record, ScoreField, State, TimeGrid, ToyConfig,
};
use oudiff_core::speciation::{self, Mode, Regime};
use oudiff_core::{Coupling, Error, MixtureInit, ModelSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::config::FileConfig;
use crate::error::CliError;
use crate::output::{num, opt, write_csv, write_json};

pub struct Ctx {
    pub seed: u64,
    pub dry_run: bool,
    pub output: Option<PathBuf>,
    pub file: FileConfig,
}

impl Ctx {
    fn out(&self) -> Option<&std::path::Path> {
        self.output.as_deref()
    }

    /// Prints the resolved parameters; true when the command should stop there.
    fn dry<T: Serialize>(&self, command: &str, params: &T) -> Result<bool, CliError> {
        if !self.dry_run {
            return Ok(false);
        }
        #[derive(Serialize)]
        struct Resolved<'a, T> {
            command: &'a str,
            seed: u64,
            params: &'a T,
        }
        write_json(&Resolved { command, seed: self.seed, params }, None)?;
        Ok(true)
    }
}

pub fn run(command: &Command, ctx: &Ctx) -> Result<(), CliError> {
    match command {
        Command::Speciation(a) => speciation_cmd(&ctx.file.resolve(a)?, ctx),
        Command::Collapse(a) => collapse_cmd(&ctx.file.resolve(a)?, ctx),
        Command::PhaseDiagram(a) => phase_cmd(&ctx.file.resolve(a)?, ctx),
        Command::Sample(a) => sample_cmd(&ctx.file.resolve(a)?, ctx),
        Command::ToyConditional(a) => toy_cmd(&ctx.file.resolve(a)?, ctx),
        Command::CloneSpeciation(a) => clone_cmd(&ctx.file.resolve(a)?, ctx),
        Command::Stability(a) => stability_cmd(&ctx.file.resolve(a)?, ctx),
    }
}

#[derive(Serialize)]
struct ModelParams {
    model: ModelSpec,
    init: MixtureInit,
    window: Option<f64>,
}

#[derive(Serialize)]
struct SpeciationOut {
    t_s: Option<f64>,
    regime: Regime,
    kappa0: f64,
    sup_kappa: f64,
    unstable_at: Option<f64>,
}

fn speciation_cmd(a: &SpeciationArgs, ctx: &Ctx) -> Result<(), CliError> {
    let model = a.model.build(CouplingKind::Symmetric, 1);
    let init = a.init.build();
    model.validate()?;
    init.validate()?;
    if ctx.dry("speciation", &ModelParams { model, init, window: a.window })? {
        return Ok(());
    }
    let r = speciation::speciation_time(&model, &init, a.window)?;
    write_json(
        &SpeciationOut { t_s: r.t_s, regime: r.regime, kappa0: r.kappa0, sup_kappa: r.sup_kappa, unstable_at: r.unstable_at },
        ctx.out(),
    )?;
    if r.regime == Regime::Unstable {
        return Err(CliError::Unstable(format!(
            "reverse drift loses confinement at t = {}",
            r.unstable_at.unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SymmetricCollapseOut {
    t_c: f64,
    t_c_plus: f64,
    t_c_minus: f64,
    t_c_det: f64,
    t_max: f64,
    residual: f64,
}

#[derive(Serialize)]
struct AnisoCollapseOut {
    t_c: f64,
    t_c_conditional: f64,
    residual: f64,
}

fn collapse_cmd(a: &CollapseArgs, ctx: &Ctx) -> Result<(), CliError> {
    let model = a.model.build(CouplingKind::Symmetric, 1);
    let params = CollapseParams::from_ratio(a.alpha.unwrap_or(1.0), a.ratio.unwrap_or(1.0), model);
    model.validate()?;
    if !(params.alpha > 0.0 && params.init.sigma2_x > 0.0) {
        return Err(CliError::Invalid("alpha and ratio must be positive".into()));
    }
    if ctx.dry("collapse", &params)? {
        return Ok(());
    }
    match model.coupling {
        Coupling::Symmetric { .. } => {
            let joint = collapse::collapse_time_symmetric(&params)?;
            let out = SymmetricCollapseOut {
                t_c: joint.t_c,
                t_c_plus: collapse::collapse_time_mode(&params, Mode::Plus)?.t_c,
                t_c_minus: collapse::collapse_time_mode(&params, Mode::Minus)?.t_c,
                t_c_det: collapse::collapse_time_det(&params)?.t_c,
                t_max: collapse::collapse_bound(&params)?,
                residual: joint.residual,
            };
            write_json(&out, ctx.out())
        }
        _ => {
            let joint = collapse::collapse_time_det(&params)?;
            let cond = collapse::collapse_time_conditional(&params)?;
            write_json(&AnisoCollapseOut { t_c: joint.t_c, t_c_conditional: cond.t_c, residual: joint.residual }, ctx.out())
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Serialize)]
struct PhaseParams {
    model: ModelSpec,
    init: MixtureInit,
    g_grid: Vec<f64>,
    theta_grid: Vec<f64>,
    window: Option<f64>,
}

fn phase_cmd(a: &PhaseArgs, ctx: &Ctx) -> Result<(), CliError> {
    if a.model.coupling == Some(CouplingKind::Symmetric) {
        return Err(CliError::Invalid("phase diagram sweeps anisotropic coupling".into()));
    }
    let model = a.model.build(CouplingKind::Anisotropic, 1);
    let mut init_args = a.init.clone();
    init_args.theta.get_or_insert(0.0);
    let init = init_args.build();
    model.validate()?;
    init.validate()?;
    let g_grid = linspace(a.g_min.unwrap_or(0.0), a.g_max.unwrap_or(3.0), a.g_points.unwrap_or(31));
    let theta_grid = linspace(0.0, std::f64::consts::PI, a.theta_points.unwrap_or(9));
    if g_grid.is_empty() || theta_grid.is_empty() {
        return Err(CliError::Invalid("grids need at least one point".into()));
    }
    if ctx.dry("phase-diagram", &PhaseParams { model, init, g_grid: g_grid.clone(), theta_grid: theta_grid.clone(), window: a.window })? {
        return Ok(());
    }
    let cells = speciation::phase_diagram(&model, &init, &g_grid, &theta_grid, a.window)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            if let Some(e) = &c.error {
                eprintln!("cell g = {}, theta = {}: {e}", c.g, c.theta);
            }
            vec![
                num(c.g),
                num(c.theta),
                c.regime.map(|r| r.name().to_string()).unwrap_or_else(|| "error".into()),
                opt(c.t_s),
                opt(c.kappa0),
                opt(c.g_crit),
            ]
        })
        .collect();
    write_csv(&["g", "theta", "regime", "t_s", "kappa0", "g_crit"], &rows, ctx.out())
}

#[derive(Serialize)]
struct SampleParams {
    model: ModelSpec,
    init: MixtureInit,
    method: SampleMethod,
    score: ScoreKind,
    paths: usize,
    grid: TimeGrid,
    n_train: usize,
}

fn sample_cmd(a: &SampleArgs, ctx: &Ctx) -> Result<(), CliError> {
    let model = a.model.build(CouplingKind::Symmetric, 8);
    let init = a.init.build();
    model.validate()?;
    init.validate()?;
    let p = SampleParams {
        model,
        init,
        method: a.method.unwrap_or(SampleMethod::Sde),
        score: a.score.unwrap_or(ScoreKind::Population),
        paths: a.paths.unwrap_or(100),
        grid: TimeGrid::new(a.horizon.unwrap_or(3.0), a.steps.unwrap_or(800))?,
        n_train: a.n_train.unwrap_or(16),
    };
    if p.paths == 0 || p.n_train == 0 {
        return Err(CliError::Invalid("paths and n_train must be positive".into()));
    }
    let score: Box<dyn ScoreField> = match p.score {
        ScoreKind::Population => Box::new(PopulationScore::new(model, init)?),
        ScoreKind::Empirical => {
            let train_seed = rng::child_seed(ctx.seed, 1);
            let points = (0..p.n_train as u64)
                .map(|i| sample_mixture(&init, model.dim, &mut rng::stream(train_seed, i)).map(|s| s.0))
                .collect::<Result<Vec<_>, _>>()?;
            Box::new(EmpiricalScore::new(model, points)?)
        }
    };
    if ctx.dry("sample", &p)? {
        return Ok(());
    }
    let cov = moments::stationary_cov(&model)?;
    let finals: Vec<Result<State, Error>> = (0..p.paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(ctx.seed, i);
            let traj = match p.method {
                SampleMethod::Forward => {
                    let (z0, _) = sample_mixture(&init, model.dim, &mut r)?;
                    forward_sample(&model, z0, p.grid, &mut r, &Record::Final)?
                }
                SampleMethod::Sde => {
                    let z = sample_gaussian(&cov, model.dim, &mut r)?;
                    reverse_sample(&model, score.as_ref(), p.grid, z, 0, &mut r, &Record::Final)?
                }
                SampleMethod::Flow => {
                    let z = sample_gaussian(&cov, model.dim, &mut r)?;
                    flow_sample(&model, score.as_ref(), p.grid, z, &Record::Final)?
                }
            };
            Ok(traj.into_final())
        })
        .collect();
    let mut rows = Vec::with_capacity(p.paths * model.dim);
    for (i, z) in finals.into_iter().enumerate() {
        let z = z?;
        for k in 0..z.dim() {
            rows.push(vec![i.to_string(), k.to_string(), num(z.x[k]), num(z.y[k])]);
        }
    }
    write_csv(&["path", "coord", "x", "y"], &rows, ctx.out())
}

fn toy_cmd(a: &ToyArgs, ctx: &Ctx) -> Result<(), CliError> {
    let d = ToyExperimentConfig::default();
    let base = ToyConfig {
        dim: a.dim.unwrap_or(d.base.dim),
        trials: a.trials.unwrap_or(d.base.trials),
        steps: a.steps.unwrap_or(d.base.steps),
        horizon: a.horizon.unwrap_or(d.base.horizon),
        beta: a.beta.unwrap_or(d.base.beta),
        sigma_w2: a.sigma_w2.unwrap_or(d.base.sigma_w2),
        sigma2: a.sigma2.unwrap_or(d.base.sigma2),
        m2: a.m2.unwrap_or(d.base.m2),
        t0: a.t0,
        seed: ctx.seed,
        ..d.base
    };
    let cfg = ToyExperimentConfig {
        base,
        thetas: a.thetas.clone().unwrap_or(d.thetas),
        g0s: a.g0s.clone().unwrap_or(d.g0s),
        schedules: a.schedules.clone().unwrap_or(d.schedules),
        confidence: a.confidence.unwrap_or(d.confidence),
    };
    cfg.validate()?;
    if ctx.dry("toy-conditional", &cfg)? {
        return Ok(());
    }
    let rows: Vec<Vec<String>> = run_toy_experiment(&cfg)?
        .iter()
        .map(|r| {
            if let Some(e) = &r.error {
                eprintln!("cell theta = {}, g0 = {}, {}: {e}", r.theta, r.g0, r.schedule.name());
            } else if r.failed > 0 {
                eprintln!("cell theta = {}, g0 = {}, {}: {} failed trials", r.theta, r.g0, r.schedule.name(), r.failed);
            }
            vec![
                num(r.theta),
                num(r.g0),
                r.schedule.name().to_string(),
                num(r.d_accuracy),
                num(r.d_mse),
                num(r.d_nll),
                num(r.acc_ci_lo),
                num(r.acc_ci_hi),
                r.n.to_string(),
            ]
        })
        .collect();
    write_csv(
        &["theta", "g0", "schedule", "d_accuracy", "d_mse", "d_nll", "acc_ci_lo", "acc_ci_hi", "n"],
        &rows,
        ctx.out(),
    )
}

#[derive(Serialize)]
struct CloneSummary {
    g: f64,
    t_spec_u: Option<f64>,
    t_spec_u_ci: [Option<f64>; 2],
    t_spec_v: Option<f64>,
    t_spec_v_ci: [Option<f64>; 2],
    gap: Option<f64>,
    combined_half_width: Option<f64>,
    baseline_u: f64,
    baseline_v: f64,
}

impl From<&CloneResult> for CloneSummary {
    fn from(r: &CloneResult) -> Self {
        CloneSummary {
            g: r.g,
            t_spec_u: r.u.crossing,
            t_spec_u_ci: [r.u.crossing_low, r.u.crossing_high],
            t_spec_v: r.v.crossing,
            t_spec_v_ci: [r.v.crossing_low, r.v.crossing_high],
            gap: r.gap(),
            combined_half_width: r.combined_half_width(),
            baseline_u: r.u.baseline,
            baseline_v: r.v.baseline,
        }
    }
}

fn clone_cmd(a: &CloneArgs, ctx: &Ctx) -> Result<(), CliError> {
    let d = CloneConfig::default();
    let cfg = CloneConfig {
        dim: a.dim.unwrap_or(d.dim),
        beta: a.beta.unwrap_or(d.beta),
        sigma_w2: a.sigma_w2.unwrap_or(d.sigma_w2),
        sigma2: a.sigma2.unwrap_or(d.sigma2),
        m_u2: a.m_u2.unwrap_or(d.m_u2),
        m_v2: a.m_v2.unwrap_or(d.m_v2),
        horizon: a.horizon.unwrap_or(d.horizon),
        steps: a.steps.unwrap_or(d.steps),
        scan_times: a.scan_times.clone().unwrap_or(d.scan_times),
        g_values: a.g_values.clone().unwrap_or(d.g_values),
        repeats: a.repeats.unwrap_or(d.repeats),
        batch: a.batch.unwrap_or(d.batch),
        threshold: a.threshold.unwrap_or(d.threshold),
        confidence: a.confidence.unwrap_or(d.confidence),
        seed: ctx.seed,
    };
    cfg.validate()?;
    if ctx.dry("clone-speciation", &cfg)? {
        return Ok(());
    }
    let results = run_clone_experiment(&cfg)?;
    let mut rows = Vec::new();
    for r in &results {
        for i in 0..r.u.scan_times.len() {
            rows.push(vec![
                num(r.g),
                num(r.u.scan_times[i]),
                num(r.u.phi_raw[i]),
                num(r.u.wilson_low[i]),
                num(r.u.wilson_high[i]),
                num(r.u.phi_excess[i]),
                num(r.v.phi_raw[i]),
                num(r.v.wilson_low[i]),
                num(r.v.wilson_high[i]),
                num(r.v.phi_excess[i]),
            ]);
        }
    }
    write_csv(
        &["g", "scan_t", "phi_u", "phi_u_lo", "phi_u_hi", "phi_u_ex", "phi_v", "phi_v_lo", "phi_v_hi", "phi_v_ex"],
        &rows,
        ctx.out(),
    )?;
    if let Some(path) = &a.summary {
        let summary: Vec<CloneSummary> = results.iter().map(CloneSummary::from).collect();
        write_json(&summary, Some(path))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StabilityOut {
    stable: bool,
    sigma2: f64,
    sigma2_bound: f64,
    drift_stable: bool,
    first_violation: Option<f64>,
}

fn stability_cmd(a: &StabilityArgs, ctx: &Ctx) -> Result<(), CliError> {
    if a.model.coupling == Some(CouplingKind::Anisotropic) {
        return Err(CliError::Invalid("stability check needs symmetric coupling".into()));
    }
    let model = a.model.build(CouplingKind::Symmetric, 1);
    let init = a.init.build();
    // Unstable couplings are what this command reports on, so only the
    // parameters that do not involve g are validated up front.
    ModelSpec { coupling: Coupling::Symmetric { g: 0.0 }, ..model }.validate()?;
    init.validate()?;
    if ctx.dry("stability", &ModelParams { model, init, window: a.window })? {
        return Ok(());
    }
    let v = speciation::stability_check(&model, &init, a.window)?;
    write_json(
        &StabilityOut {
            stable: v.stable,
            sigma2: init.sigma2_x,
            sigma2_bound: v.sigma2_bound,
            drift_stable: v.drift_stable,
            first_violation: v.first_violation,
        },
        ctx.out(),
    )?;
    if !v.stable {
        return Err(CliError::Unstable(format!(
            "reverse drift is not confining (sigma2 bound {})",
            v.sigma2_bound
        )));
    }
    Ok(())
}
