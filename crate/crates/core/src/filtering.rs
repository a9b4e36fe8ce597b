//! Noise filtering of reservoir states with an ensemble Kalman filter whose
//! process model is the unsupervised replica, plus the input-noise models.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::readout::{PreparedStates, Readout};
use crate::replication::{build_replica, ReplicatedMap};
use crate::reservoir::EsnParams;
use crate::trajectory::Trajectory;

/// Additive noise on the network input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian {
        variance: f64,
    },
    /// `scale · t_ν`; `nu = ∞` is the Gaussian limit.
    StudentT {
        nu: f64,
        scale: f64,
    },
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { variance } if !(variance >= 0.0) => {
                Err(Error::InvalidArgument(format!("noise variance must be non-negative, got {variance}")))
            }
            NoiseModel::StudentT { nu, .. } if !(nu > 0.0) => {
                Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {nu}")))
            }
            NoiseModel::StudentT { scale, .. } if !(scale >= 0.0) => {
                Err(Error::InvalidArgument(format!("noise scale must be non-negative, got {scale}")))
            }
            _ => Ok(()),
        }
    }
}

/// `count` i.i.d. noise vectors of dimension `dim`.
pub fn sample_noise<R: Rng + ?Sized>(model: NoiseModel, dim: usize, count: usize, rng: &mut R) -> Result<Trajectory> {
    model.validate()?;
    let m = match model {
        NoiseModel::Gaussian { variance } => {
            let std = variance.sqrt();
            DMatrix::from_fn(dim, count, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
        }
        NoiseModel::StudentT { nu, scale } if nu.is_infinite() => DMatrix::from_fn(dim, count, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        }),
        NoiseModel::StudentT { nu, scale } => {
            let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            DMatrix::from_fn(dim, count, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                let c: f64 = chi.sample(rng);
                scale * z / (c / nu).sqrt()
            })
        }
    };
    Trajectory::new(m)
}

/// Prior knowledge for filtering, learned from a low-noise run only.
#[derive(Debug, Clone)]
pub struct FilterPrior {
    readout: Readout,
    replica: ReplicatedMap,
    q_hat: DMatrix<f64>,
    q_factor: DMatrix<f64>,
}

impl FilterPrior {
    /// Assembles a prior from parts; `q_hat` must be symmetric PSD.
    pub fn new(readout: Readout, replica: ReplicatedMap, q_hat: DMatrix<f64>) -> Result<Self> {
        let n = replica.dim();
        if q_hat.shape() != (n, n) {
            return Err(Error::shape("FilterPrior (Q)", format!("({n}, {n})"), format!("{:?}", q_hat.shape())));
        }
        let q_hat = linalg::symmetrize(&q_hat);
        if linalg::min_symmetric_eigenvalue(&q_hat) < -1e-10 {
            return Err(Error::InvalidArgument("model noise covariance is not PSD".into()));
        }
        let q_factor = linalg::sampling_factor(&q_hat);
        Ok(Self { readout, replica, q_hat, q_factor })
    }

    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn replica(&self) -> &ReplicatedMap {
        &self.replica
    }

    pub fn q_hat(&self) -> &DMatrix<f64> {
        &self.q_hat
    }

    pub fn dim(&self) -> usize {
        self.replica.dim()
    }
}

/// Full-rank unsupervised readout, its replica, and the uncentred second
/// moment `Q̂ = (1/T) Σ w_t w_tᵀ` of the one-step residuals
/// `w_t = r_{t+1} − f̂(r_t)`.
pub fn build_prior<R: Rng + ?Sized>(params: &EsnParams, states: &Trajectory, rng: &mut R) -> Result<FilterPrior> {
    let prepared = PreparedStates::new(states)?;
    let readout = prepared.unsupervised_fullrank(params, rng)?;
    let replica = build_replica(params, &readout)?;
    let residuals = prepared.successors() - replica.apply_columns(&prepared.regressors().into_owned());
    let q_hat = (&residuals * residuals.transpose()) / prepared.pairs() as f64;
    FilterPrior::new(readout, replica, q_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    ensemble: DMatrix<f64>,
    obs_cov: DMatrix<f64>,
    alpha_r: f64,
    t: usize,
}

impl FilterState {
    /// Ensemble columns are particles.
    pub fn new(ensemble: DMatrix<f64>, obs_cov: DMatrix<f64>, alpha_r: f64) -> Result<Self> {
        let n = ensemble.nrows();
        if ensemble.ncols() < 2 {
            return Err(Error::InvalidArgument("ensemble needs at least two particles".into()));
        }
        if obs_cov.shape() != (n, n) {
            return Err(Error::shape("FilterState (R)", format!("({n}, {n})"), format!("{:?}", obs_cov.shape())));
        }
        if !(0.0..=1.0).contains(&alpha_r) {
            return Err(Error::InvalidArgument(format!("alpha_R must lie in [0, 1], got {alpha_r}")));
        }
        Ok(Self { ensemble, obs_cov, alpha_r, t: 0 })
    }

    /// `M` particles from `N(0, I)` and `R₀ = I`.
    pub fn standard<R: Rng + ?Sized>(dim: usize, members: usize, alpha_r: f64, rng: &mut R) -> Result<Self> {
        let ensemble = DMatrix::from_fn(dim, members, |_, _| StandardNormal.sample(rng));
        Self::new(ensemble, DMatrix::identity(dim, dim), alpha_r)
    }

    pub fn ensemble(&self) -> &DMatrix<f64> {
        &self.ensemble
    }

    /// Current observation-noise estimate `R_t`.
    pub fn obs_cov(&self) -> &DMatrix<f64> {
        &self.obs_cov
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn members(&self) -> usize {
        self.ensemble.ncols()
    }
}

fn centred(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = m.column_mean();
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    (mean, c)
}

fn gaussian_block<R: Rng + ?Sized>(factor: &DMatrix<f64>, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let z = DMatrix::from_fn(factor.ncols(), cols, |_, _| StandardNormal.sample(rng));
    factor * z
}

/// One forecast/analysis cycle of the perturbed-observation EnKF with
/// adaptive observation covariance. Returns the filtered mean.
pub fn enkf_update<R: Rng + ?Sized>(
    state: &mut FilterState,
    prior: &FilterPrior,
    observation: DVectorView<'_, f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = prior.dim();
    if observation.len() != n || state.ensemble.nrows() != n {
        return Err(Error::shape("enkf_step", n, observation.len().min(state.ensemble.nrows())));
    }
    let m = state.members();
    let norm = 1.0 / (m as f64 - 1.0);

    // forecast particles and perturbed observations
    let forecast = prior.replica.apply_columns(&state.ensemble) + gaussian_block(&prior.q_factor, m, rng);
    let r_factor = linalg::sampling_factor(&state.obs_cov);
    let perturbations = gaussian_block(&r_factor, m, rng);
    let perturbed = &forecast + &perturbations;

    let (_, fc) = centred(&forecast);
    let (_, pc) = centred(&perturbed);
    let cross = (&fc * pc.transpose()) * norm;
    let mut auto = (&pc * pc.transpose()) * norm;

    let jitter = 1e-9 * auto.trace() / n as f64;
    for i in 0..n {
        auto[(i, i)] += jitter;
    }
    let chol = auto
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("innovation covariance singular at step {}", state.t + 1)))?;
    // K = U V⁻¹  ⇔  Kᵀ = V⁻¹ Uᵀ
    let gain = chol.solve(&cross.transpose()).transpose();

    let mut innovations = -perturbed;
    for mut col in innovations.column_iter_mut() {
        col += &observation;
    }
    let analysis = forecast + gain * innovations;

    let (mean, ac) = centred(&analysis);
    let posterior_cov = (&ac * ac.transpose()) * norm;
    let innovation = observation - &mean;
    if state.alpha_r > 0.0 {
        let a = state.alpha_r;
        state.obs_cov = &state.obs_cov * (1.0 - a) + (&innovation * innovation.transpose() + posterior_cov) * a;
        state.obs_cov = linalg::symmetrize(&state.obs_cov);
    }
    if mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "enkf_step", index: state.t + 1 });
    }
    state.ensemble = analysis;
    state.t += 1;
    Ok(mean)
}

/// Value-style wrapper around [`enkf_update`].
pub fn enkf_step<R: Rng + ?Sized>(
    state: &FilterState,
    prior: &FilterPrior,
    observation: &DVector<f64>,
    rng: &mut R,
) -> Result<(FilterState, DVector<f64>)> {
    let mut next = state.clone();
    let mean = enkf_update(&mut next, prior, observation.as_view(), rng)?;
    Ok((next, mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOptions {
    pub members: usize,
    pub alpha_r: f64,
    /// `R₀`; identity when `None`.
    pub initial_obs_cov: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub means: Trajectory,
    pub final_state: FilterState,
}

/// Filters noisy reservoir states; returns the filtered means for every
/// observation. Never sees any input series.
pub fn run_filter<R: Rng + ?Sized>(
    prior: &FilterPrior,
    observations: &Trajectory,
    members: usize,
    alpha_r: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let opts = FilterOptions { members, alpha_r, initial_obs_cov: None };
    Ok(run_filter_with(prior, observations, &opts, rng)?.means)
}

pub fn run_filter_with<R: Rng + ?Sized>(
    prior: &FilterPrior,
    observations: &Trajectory,
    opts: &FilterOptions,
    rng: &mut R,
) -> Result<FilterRun> {
    let n = prior.dim();
    if observations.dim() != n {
        return Err(Error::shape("run_filter", n, observations.dim()));
    }
    let mut state = FilterState::standard(n, opts.members, opts.alpha_r, rng)?;
    if let Some(r0) = &opts.initial_obs_cov {
        state = FilterState::new(state.ensemble, r0.clone(), opts.alpha_r)?;
    }
    let mut means = DMatrix::zeros(n, observations.len());
    for t in 0..observations.len() {
        let mean = enkf_update(&mut state, prior, observations.column(t), rng)?;
        means.set_column(t, &mean);
    }
    Ok(FilterRun { means: Trajectory::new(means)?, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::readout::Provenance;
    use crate::reservoir::ActivationKind;
    use crate::rng::split;

    fn scalar_prior(a: f64, q: f64) -> FilterPrior {
        let replica = ReplicatedMap::new(
            DMatrix::from_element(1, 1, a),
            ActivationKind::Identity,
            Provenance::UnsupervisedFullRank,
        )
        .unwrap();
        FilterPrior::new(
            Readout::new(DMatrix::from_element(1, 1, 1.0), Provenance::UnsupervisedFullRank).unwrap(),
            replica,
            DMatrix::from_element(1, 1, q),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_zero_variance_is_zero() {
        let t = sample_noise(NoiseModel::Gaussian { variance: 0.0 }, 2, 10, &mut split(0, 0)).unwrap();
        assert!(t.matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_model_validation() {
        let mut rng = split(0, 0);
        assert!(sample_noise(NoiseModel::Gaussian { variance: -1.0 }, 1, 1, &mut rng).is_err());
        assert!(sample_noise(NoiseModel::StudentT { nu: 0.0, scale: 1.0 }, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn prior_rejects_indefinite_q() {
        let replica =
            ReplicatedMap::new(DMatrix::identity(1, 1), ActivationKind::Identity, Provenance::Online).unwrap();
        let readout = Readout::zeros(1, 1, Provenance::Online);
        assert!(FilterPrior::new(readout, replica, DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(FilterState::new(DMatrix::zeros(2, 1), DMatrix::identity(2, 2), 0.1).is_err());
        assert!(FilterState::new(DMatrix::zeros(2, 3), DMatrix::identity(2, 2), 1.5).is_err());
        assert!(FilterState::new(DMatrix::zeros(2, 3), DMatrix::identity(3, 3), 0.1).is_err());
    }

    #[test]
    fn no_adaptation_keeps_identity_covariance() {
        let prior = scalar_prior(0.9, 0.1);
        let mut state = FilterState::standard(1, 50, 0.0, &mut split(1, 5)).unwrap();
        let mut rng = split(1, 6);
        for t in 0..20 {
            let obs = DVector::from_element(1, (t as f64).sin());
            enkf_update(&mut state, &prior, obs.as_view(), &mut rng).unwrap();
            assert_eq!(state.obs_cov(), &DMatrix::identity(1, 1));
        }
        assert_eq!(state.t(), 20);
    }

    #[test]
    fn trust_the_model_limit() {
        // Q = 0, huge R, identity dynamics, all particles at the observation:
        // the mean stays at the observation up to Monte-Carlo error.
        let prior = scalar_prior(1.0, 0.0);
        let obs = DVector::from_element(1, 0.7);
        let m = 400;
        let state = FilterState::new(DMatrix::from_element(1, m, 0.7), DMatrix::from_element(1, 1, 1e4), 0.0).unwrap();
        let (_, mean) = enkf_step(&state, &prior, &obs, &mut split(9, 5)).unwrap();
        assert!((mean[0] - 0.7).abs() < 1e-6, "mean {}", mean[0]);
    }

    #[test]
    fn adaptive_covariance_stays_psd() {
        let prior = scalar_prior(0.5, 0.01);
        let mut rng = split(4, 5);
        let mut state = FilterState::standard(1, 20, 0.3, &mut rng).unwrap();
        for t in 0..200 {
            let obs = DVector::from_element(1, if t % 7 == 0 { 5.0 } else { -0.2 });
            enkf_update(&mut state, &prior, obs.as_view(), &mut rng).unwrap();
            assert!(state.obs_cov()[(0, 0)] > 0.0);
        }
    }
}
