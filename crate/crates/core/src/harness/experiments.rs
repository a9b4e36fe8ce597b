//! Seeded multi-trial drivers. Each trial draws from its own `(seed, lane)`
//! stream, so results do not depend on scheduling or thread count.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{
    ExperimentConfig, FilterConfig, HeavytailConfig, ReconstructConfig, ReplicateConfig, SweepRankConfig,
    SweepReluConfig,
};
use crate::error::Result;
use crate::filtering::{build_prior, run_filter_with, sample_noise, FilterOptions, NoiseModel};
use crate::linalg;
use crate::online::run_online;
use crate::readout::{rrmse, PreparedStates, Readout};
use crate::replication::{build_replica, lorenz_orbit, project, rollout, table1_from_prepared, Table1Diagnostics};
use crate::reservoir::{synthesize_params, ActivationKind, EsnParams, ReluInverseRule};
use crate::rng::{split, stream, Lane};
use crate::trajectory::Trajectory;

const GRID_NOISE_LANE: u64 = 100;
const GRID_FILTER_LANE: u64 = 200;
const GRID_FILTER_FIXED_LANE: u64 = 300;
const GRID_SOLVER_LANE: u64 = 400;

/// Piecewise test signal: three regimes of 400 steps, `t` is 1-based.
pub fn piecewise_input(t: usize) -> f64 {
    let tf = t as f64;
    if t < 400 {
        (PI * tf / 50.0).cos()
    } else if t < 800 {
        (PI * tf / 100.0).cos() + (PI * tf / 25.0).sin()
    } else {
        (PI * tf / 50.0).cos().powi(9)
    }
}

fn scalar_series(len: usize, f: impl Fn(usize) -> f64) -> Result<Trajectory> {
    let values: Vec<f64> = (1..=len).map(f).collect();
    Trajectory::from_scalars(&values)
}

fn add(a: &Trajectory, b: &Trajectory) -> Result<Trajectory> {
    Trajectory::new(a.matrix() + b.matrix())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructRecord {
    pub seed: u64,
    pub truth: Vec<f64>,
    pub output: Vec<f64>,
    pub update_norms: Vec<f64>,
}

impl ReconstructRecord {
    /// RRMSE over the last `window` steps.
    pub fn tail_rrmse(&self, window: usize) -> Result<f64> {
        let start = self.truth.len().saturating_sub(window);
        rrmse(&Trajectory::from_scalars(&self.output[start..])?, &Trajectory::from_scalars(&self.truth[start..])?)
    }

    /// Mean update norm over steps `1..=split` and `split+1..`.
    pub fn update_norm_halves(&self, split: usize) -> (f64, f64) {
        let split = split.min(self.update_norms.len());
        (mean(&self.update_norms[..split]), mean(&self.update_norms[split..]))
    }
}

pub fn reconstruct_trial(cfg: &ReconstructConfig, seed: u64) -> Result<ReconstructRecord> {
    let mut rng = stream(seed, Lane::Params);
    let params =
        synthesize_params(1, cfg.n_r, cfg.input_variance, cfg.spectral_radius, ActivationKind::Tanh, &mut rng)?;
    let inputs = scalar_series(cfg.steps, piecewise_input)?;
    let states = params.drive_from_zero(&inputs)?;
    let run = run_online(&params, &states, cfg.rls, &mut stream(seed, Lane::Solver))?;
    Ok(ReconstructRecord { seed, truth: inputs.row(0), output: run.outputs.row(0), update_norms: run.update_norms })
}

pub fn run_reconstruct(cfg: &ExperimentConfig) -> Result<Vec<ReconstructRecord>> {
    cfg.seeds.par_iter().map(|&s| reconstruct_trial(&cfg.reconstruct, s)).collect()
}

/// Summary statistics of an autonomous rollout against held-out truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutChecks {
    pub max_abs_supervised: f64,
    pub max_abs_unsupervised: f64,
    /// Largest per-coordinate `|Δmean|/std` or `|Δstd|/std` of the
    /// unsupervised rollout against the truth.
    pub moment_mismatch_unsupervised: f64,
    pub moment_mismatch_supervised: f64,
    /// Distance between the two projected rollouts at the final step.
    pub terminal_gap: f64,
}

impl RolloutChecks {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("max_abs_supervised", self.max_abs_supervised),
            ("max_abs_unsupervised", self.max_abs_unsupervised),
            ("moment_mismatch_supervised", self.moment_mismatch_supervised),
            ("moment_mismatch_unsupervised", self.moment_mismatch_unsupervised),
            ("terminal_gap", self.terminal_gap),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub seed: u64,
    pub diagnostics: Table1Diagnostics,
    pub checks: RolloutChecks,
    /// `(truth, supervised, unsupervised)` projected test orbits.
    pub orbits: Option<[Trajectory; 3]>,
}

fn moment_mismatch(estimate: &Trajectory, truth: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..truth.dim() {
        let stats = |xs: Vec<f64>| {
            let m = mean(&xs);
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
            (m, var.sqrt())
        };
        let (mt, st) = stats(truth.row(i));
        let (me, se) = stats(estimate.row(i));
        worst = worst.max((me - mt).abs() / st).max((se - st).abs() / st);
    }
    worst
}

fn max_abs(t: &Trajectory) -> f64 {
    t.matrix().iter().fold(0.0, |a, &b| a.max(b.abs()))
}

pub fn replicate_trial(cfg: &ReplicateConfig, seed: u64) -> Result<ReplicateRecord> {
    let mut rng = stream(seed, Lane::Params);
    let params =
        synthesize_params(3, cfg.n_r, cfg.input_variance, cfg.spectral_radius, ActivationKind::Tanh, &mut rng)?;
    let orbit = lorenz_orbit(&cfg.lorenz, cfg.train_steps + cfg.test_steps)?;
    let orbit = Trajectory::new(orbit.matrix() * cfg.input_scale)?;
    let train = orbit.window(0, cfg.train_steps)?;
    let test = orbit.window(cfg.train_steps, cfg.train_steps + cfg.test_steps)?;

    let states = params.drive_from_zero(&train)?;
    let prepared = PreparedStates::new(&states)?;
    let diagnostics = table1_from_prepared(&params, &train, &prepared)?;
    let supervised = prepared.supervised(&train)?;
    let unsupervised = prepared.unsupervised_fullrank(&params, &mut stream(seed, Lane::Solver))?;

    let r_start: DVector<f64> = states.column(cfg.train_steps).into_owned();
    let roll = |readout: &Readout| -> Result<Trajectory> {
        let replica = build_replica(&params, readout)?;
        project(readout, &rollout(&replica, &r_start, cfg.test_steps)?)
    };
    let sup = roll(&supervised)?;
    let uns = roll(&unsupervised)?;
    let last = cfg.test_steps - 1;
    let checks = RolloutChecks {
        max_abs_supervised: max_abs(&sup),
        max_abs_unsupervised: max_abs(&uns),
        moment_mismatch_supervised: moment_mismatch(&sup, &test),
        moment_mismatch_unsupervised: moment_mismatch(&uns, &test),
        terminal_gap: (sup.column(last) - uns.column(last)).norm(),
    };
    Ok(ReplicateRecord { seed, diagnostics, checks, orbits: cfg.emit_orbits.then_some([test, sup, uns]) })
}

pub fn run_replicate(cfg: &ExperimentConfig) -> Result<Vec<ReplicateRecord>> {
    cfg.seeds.par_iter().map(|&s| replicate_trial(&cfg.replicate, s)).collect()
}

/// Stage labels used in the filtering tables.
pub mod stage {
    pub const INPUT: &str = "input";
    pub const BEFORE: &str = "before";
    pub const AFTER: &str = "after";
    pub const AFTER_NON_ADAPTIVE: &str = "after_non_adaptive";
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRecord {
    pub seed: u64,
    /// Test-time noise variance (or degrees of freedom for heavy tails).
    pub level: f64,
    pub stage: &'static str,
    pub rrmse: f64,
}

/// Common body of the Gaussian and heavy-tailed filtering experiments.
struct FilterSetup<'a> {
    n_r: usize,
    input_variance: f64,
    spectral_radius: f64,
    period: f64,
    train_steps: usize,
    test_steps: usize,
    train_noise_variance: f64,
    members: usize,
    alpha_r: f64,
    non_adaptive: bool,
    /// `(level, model)` per grid point.
    grid: &'a [(f64, NoiseModel)],
}

fn filter_trial(setup: &FilterSetup<'_>, seed: u64) -> Result<Vec<FilterRecord>> {
    let mut rng = stream(seed, Lane::Params);
    let params =
        synthesize_params(1, setup.n_r, setup.input_variance, setup.spectral_radius, ActivationKind::Tanh, &mut rng)?;
    let clean = |len: usize| scalar_series(len, |t| (2.0 * PI * t as f64 / setup.period).cos());

    let train_clean = clean(setup.train_steps)?;
    let train_noise = sample_noise(
        NoiseModel::Gaussian { variance: setup.train_noise_variance },
        1,
        setup.train_steps,
        &mut stream(seed, Lane::TrainNoise),
    )?;
    let train_states = params.drive_from_zero(&add(&train_clean, &train_noise)?)?;
    let prior = build_prior(&params, &train_states, &mut stream(seed, Lane::Solver))?;
    let readout = prior.readout();

    let truth = clean(setup.test_steps)?;
    let mut out = Vec::new();
    for (k, &(level, model)) in setup.grid.iter().enumerate() {
        let k = k as u64;
        let noise = sample_noise(model, 1, setup.test_steps, &mut split(seed, GRID_NOISE_LANE + k))?;
        let noisy = add(&truth, &noise)?;
        // r_1 .. r_T paired with d_1 .. d_T; r_{T+1} is unused.
        let states = params.drive_from_zero(&noisy)?.window(0, setup.test_steps)?;
        let before = readout.project(&states)?;
        let mut push = |stage, est: &Trajectory| -> Result<()> {
            out.push(FilterRecord { seed, level, stage, rrmse: rrmse(est, &truth)? });
            Ok(())
        };
        push(stage::INPUT, &noisy)?;
        push(stage::BEFORE, &before)?;
        let opts = FilterOptions { members: setup.members, alpha_r: setup.alpha_r, initial_obs_cov: None };
        let filtered = run_filter_with(&prior, &states, &opts, &mut split(seed, GRID_FILTER_LANE + k))?;
        push(stage::AFTER, &readout.project(&filtered.means)?)?;
        if setup.non_adaptive {
            let opts = FilterOptions { alpha_r: 0.0, ..opts };
            let filtered = run_filter_with(&prior, &states, &opts, &mut split(seed, GRID_FILTER_FIXED_LANE + k))?;
            push(stage::AFTER_NON_ADAPTIVE, &readout.project(&filtered.means)?)?;
        }
    }
    Ok(out)
}

fn collect_flat<T: Send>(per_seed: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

pub fn filter_seed(cfg: &FilterConfig, seed: u64) -> Result<Vec<FilterRecord>> {
    let grid: Vec<(f64, NoiseModel)> =
        cfg.test_noise_variances.iter().map(|&v| (v, NoiseModel::Gaussian { variance: v })).collect();
    let setup = FilterSetup {
        n_r: cfg.n_r,
        input_variance: cfg.input_variance,
        spectral_radius: cfg.spectral_radius,
        period: cfg.period,
        train_steps: cfg.train_steps,
        test_steps: cfg.test_steps,
        train_noise_variance: cfg.train_noise_variance,
        members: cfg.members,
        alpha_r: cfg.alpha_r,
        non_adaptive: cfg.non_adaptive,
        grid: &grid,
    };
    filter_trial(&setup, seed)
}

pub fn run_filter(cfg: &ExperimentConfig) -> Result<Vec<FilterRecord>> {
    collect_flat(cfg.seeds.par_iter().map(|&s| filter_seed(&cfg.filter, s)).collect())
}

pub fn heavytail_seed(cfg: &HeavytailConfig, seed: u64) -> Result<Vec<FilterRecord>> {
    let grid: Vec<(f64, NoiseModel)> =
        cfg.nus.iter().map(|&nu| (nu, NoiseModel::StudentT { nu, scale: cfg.noise_scale })).collect();
    let setup = FilterSetup {
        n_r: cfg.n_r,
        input_variance: cfg.input_variance,
        spectral_radius: cfg.spectral_radius,
        period: cfg.period,
        train_steps: cfg.train_steps,
        test_steps: cfg.test_steps,
        train_noise_variance: cfg.train_noise_variance,
        members: cfg.members,
        alpha_r: cfg.alpha_r,
        non_adaptive: false,
        grid: &grid,
    };
    filter_trial(&setup, seed)
}

pub fn run_filter_heavytail(cfg: &ExperimentConfig) -> Result<Vec<FilterRecord>> {
    collect_flat(cfg.seeds.par_iter().map(|&s| heavytail_seed(&cfg.filter_heavytail, s)).collect())
}

pub mod rule {
    pub const SUPERVISED: &str = "supervised";
    pub const FIXED_ALPHA: &str = "fixed_alpha";
    pub const EMPIRICAL_NEGATIVE: &str = "empirical_negative";
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluRecord {
    pub seed: u64,
    pub variance: f64,
    pub rule: &'static str,
    /// `None` for rules without a constant.
    pub alpha: Option<f64>,
    pub rrmse: f64,
}

pub fn sweep_relu_trial(cfg: &SweepReluConfig, seed: u64, variance_index: usize) -> Result<Vec<ReluRecord>> {
    let variance = cfg.input_variances[variance_index];
    let lane = GRID_NOISE_LANE + variance_index as u64;
    let relu = |rule| ActivationKind::Relu { surrogate: rule };
    let base = synthesize_params(
        1,
        cfg.n_r,
        variance,
        cfg.spectral_radius,
        relu(ReluInverseRule::EmpiricalNegative),
        &mut split(seed, lane),
    )?;
    let total = cfg.washout + cfg.steps;
    let inputs = scalar_series(total, |t| (PI * t as f64 / 50.0).cos())?;
    let states = base.drive_from_zero(&inputs)?.window(cfg.washout, total + 1)?;
    let inputs = inputs.window(cfg.washout, total)?;
    let prepared = PreparedStates::new(&states)?;
    let regressors = Trajectory::new(prepared.regressors().into_owned())?;
    let score = |readout: &Readout| rrmse(&readout.project(&regressors)?, &inputs);

    let mut out = vec![ReluRecord {
        seed,
        variance,
        rule: rule::SUPERVISED,
        alpha: None,
        rrmse: score(&prepared.supervised(&inputs)?)?,
    }];
    let mut solver = split(seed, GRID_SOLVER_LANE + variance_index as u64);
    out.push(ReluRecord {
        seed,
        variance,
        rule: rule::EMPIRICAL_NEGATIVE,
        alpha: None,
        rrmse: score(&prepared.unsupervised_fullrank(&base, &mut solver)?)?,
    });
    for &alpha in &cfg.alphas {
        let params = base.with_activation(relu(ReluInverseRule::fixed_alpha(alpha)?));
        out.push(ReluRecord {
            seed,
            variance,
            rule: rule::FIXED_ALPHA,
            alpha: Some(alpha),
            rrmse: score(&prepared.unsupervised_fullrank(&params, &mut solver)?)?,
        });
    }
    Ok(out)
}

pub fn run_sweep_relu(cfg: &ExperimentConfig) -> Result<Vec<ReluRecord>> {
    let jobs: Vec<(u64, usize)> =
        cfg.seeds.iter().flat_map(|&s| (0..cfg.sweep_relu.input_variances.len()).map(move |v| (s, v))).collect();
    collect_flat(jobs.par_iter().map(|&(s, v)| sweep_relu_trial(&cfg.sweep_relu, s, v)).collect())
}

pub mod method {
    pub const SUPERVISED: &str = "supervised";
    pub const GENERAL: &str = "unsupervised_general";
    pub const FULL_RANK: &str = "unsupervised_fullrank";
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRecord {
    pub seed: u64,
    pub noise_std: f64,
    pub rank: usize,
    pub method: &'static str,
    pub rrmse: f64,
}

/// One `(seed, σ)` point. The same noise realisation `z` is scaled by every
/// σ so the grid isolates the noise level.
pub fn sweep_rank_point(
    cfg: &SweepRankConfig,
    params: &EsnParams,
    z: &Trajectory,
    seed: u64,
    index: usize,
) -> Result<Vec<RankRecord>> {
    let sigma = cfg.noise_stds[index];
    let total = cfg.warmup + cfg.steps;
    let inputs = Trajectory::new(DMatrix::from_fn(1, total, |_, k| {
        (PI * (k + 1) as f64 / 50.0).sin() + sigma * z.matrix()[(0, k)]
    }))?;
    let states = params.drive_from_zero(&inputs)?.window(cfg.warmup, total + 1)?;
    let inputs = inputs.window(cfg.warmup, total)?;
    let prepared = match cfg.pinv_rel_tolerance {
        Some(tol) => PreparedStates::with_tolerance(&states, tol)?,
        None => PreparedStates::new(&states)?,
    };
    let regressors = prepared.regressors().into_owned();
    let rank = linalg::rank_default(&regressors)?;
    let regressors = Trajectory::new(regressors)?;

    let mut solver = split(seed, GRID_SOLVER_LANE + index as u64);
    let readouts = [
        (method::SUPERVISED, prepared.supervised(&inputs)?),
        (method::GENERAL, prepared.unsupervised_general(params, &mut solver)?),
        (method::FULL_RANK, prepared.unsupervised_fullrank(params, &mut solver)?),
    ];
    readouts
        .iter()
        .map(|(m, w)| {
            Ok(RankRecord { seed, noise_std: sigma, rank, method: m, rrmse: rrmse(&w.project(&regressors)?, &inputs)? })
        })
        .collect()
}

pub fn run_sweep_rank(cfg: &ExperimentConfig) -> Result<Vec<RankRecord>> {
    let sc = &cfg.sweep_rank;
    let setups: Vec<(u64, EsnParams, Trajectory)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let params = synthesize_params(
                1,
                sc.n_r,
                sc.input_variance,
                sc.spectral_radius,
                ActivationKind::Tanh,
                &mut stream(seed, Lane::Params),
            )?;
            let z = sample_noise(
                NoiseModel::Gaussian { variance: 1.0 },
                1,
                sc.warmup + sc.steps,
                &mut stream(seed, Lane::TrainNoise),
            )?;
            Ok((seed, params, z))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..setups.len()).flat_map(|i| (0..sc.noise_stds.len()).map(move |k| (i, k))).collect();
    collect_flat(
        jobs.par_iter()
            .map(|&(i, k)| {
                let (seed, params, z) = &setups[i];
                sweep_rank_point(sc, params, z, *seed, k)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_regimes() {
        assert!((piecewise_input(100) - 1.0).abs() < 1e-15);
        assert!((piecewise_input(1) - (PI / 50.0).cos()).abs() < 1e-15);
        let t = 500.0;
        assert!((piecewise_input(500) - ((PI * t / 100.0).cos() + (PI * t / 25.0).sin())).abs() < 1e-15);
        assert!((piecewise_input(900) - (PI * 900.0 / 50.0).cos().powi(9)).abs() < 1e-15);
        assert!((piecewise_input(1200) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moment_mismatch_of_truth_is_zero() {
        let t = Trajectory::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(moment_mismatch(&t, &t), 0.0);
        let shifted = Trajectory::from_scalars(&[2.0, 3.0, 4.0]).unwrap();
        assert!((moment_mismatch(&shifted, &t) - 1.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
