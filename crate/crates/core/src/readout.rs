//! Closed-form readouts: supervised least squares and the two unsupervised
//! forms that recover the input-reconstruction readout from reservoir states
//! and the fixed network parameters alone.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reservoir::{ActivationKind, EsnParams};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `D R⁺`, needs the inputs.
    Supervised,
    /// `A⁺[σ⁻¹(R₂) − B R₁] R₁⁺`.
    UnsupervisedGeneral,
    /// `A⁺[σ⁻¹(R₂) R₁⁺ − B]`, exact when `R₁` has full row rank.
    UnsupervisedFullRank,
    /// Recursive least squares iterate.
    Online,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Supervised => "supervised",
            Provenance::UnsupervisedGeneral => "unsupervised_general",
            Provenance::UnsupervisedFullRank => "unsupervised_fullrank",
            Provenance::Online => "online",
        }
    }
}

/// Linear map from reservoir state to reconstructed input.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    weights: DMatrix<f64>,
    provenance: Provenance,
}

impl Readout {
    pub fn new(weights: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if weights.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("{} readout is not finite", provenance.as_str())));
        }
        Ok(Self { weights, provenance })
    }

    pub fn zeros(n_in: usize, n_r: usize, provenance: Provenance) -> Self {
        Self { weights: DMatrix::zeros(n_in, n_r), provenance }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_r(&self) -> usize {
        self.weights.ncols()
    }

    /// Column-wise `W r_t`.
    pub fn project(&self, states: &Trajectory) -> Result<Trajectory> {
        if states.dim() != self.n_r() {
            return Err(Error::shape("project", self.n_r(), states.dim()));
        }
        Trajectory::new(&self.weights * states.matrix())
    }
}

/// State matrix `R₁ = R_{1,T}` together with its pseudoinverse, so that
/// several readouts on the same run share one SVD.
#[derive(Debug, Clone)]
pub struct PreparedStates {
    states: DMatrix<f64>,
    regressors_pinv: DMatrix<f64>,
    rel_tolerance: f64,
}

impl PreparedStates {
    /// `states` holds `r_1 .. r_{T+1}`; the regressors are its first `T`
    /// columns.
    pub fn new(states: &Trajectory) -> Result<Self> {
        let cols = states.len().saturating_sub(1);
        Self::with_tolerance(states, linalg::default_rel_tolerance(states.dim(), cols))
    }

    pub fn with_tolerance(states: &Trajectory, rel_tolerance: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidArgument("need at least two states (r_1, r_2) to solve a readout".into()));
        }
        let t = states.len() - 1;
        let regressors = states.matrix().columns(0, t).into_owned();
        let regressors_pinv = linalg::pinv(&regressors, rel_tolerance)?;
        Ok(Self { states: states.matrix().clone(), regressors_pinv, rel_tolerance })
    }

    /// Number of regression pairs `T`.
    pub fn pairs(&self) -> usize {
        self.states.ncols() - 1
    }

    pub fn regressors(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.states.columns(0, self.pairs())
    }

    pub fn successors(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.states.columns(1, self.pairs())
    }

    pub fn regressors_pinv(&self) -> &DMatrix<f64> {
        &self.regressors_pinv
    }

    pub fn rel_tolerance(&self) -> f64 {
        self.rel_tolerance
    }

    /// `W_D = D R₁⁺` for inputs `d_1 .. d_T`.
    pub fn supervised(&self, inputs: &Trajectory) -> Result<Readout> {
        if inputs.len() != self.pairs() {
            return Err(Error::shape("solve_supervised (length)", self.pairs(), inputs.len()));
        }
        Readout::new(inputs.matrix() * &self.regressors_pinv, Provenance::Supervised)
    }

    /// `σ⁻¹(R₂)` column by column.
    pub fn inverted_successors<R: Rng + ?Sized>(
        &self,
        activation: ActivationKind,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        activation.invert_columns(&self.successors().into_owned(), rng)
    }

    fn check_params(&self, params: &EsnParams) -> Result<()> {
        if params.n_r() != self.states.nrows() {
            return Err(Error::shape("unsupervised readout (state dim)", params.n_r(), self.states.nrows()));
        }
        Ok(())
    }

    /// `A⁺[σ⁻¹(R₂) − B R₁] R₁⁺`.
    pub fn unsupervised_general<R: Rng + ?Sized>(&self, params: &EsnParams, rng: &mut R) -> Result<Readout> {
        self.check_params(params)?;
        let mut pre = self.inverted_successors(params.activation(), rng)?;
        pre.gemm(-1.0, params.recurrence(), &self.regressors(), 1.0);
        let reconstructed_inputs = params.input_pinv() * pre;
        Readout::new(reconstructed_inputs * &self.regressors_pinv, Provenance::UnsupervisedGeneral)
    }

    /// `A⁺[σ⁻¹(R₂) R₁⁺ − B]`.
    pub fn unsupervised_fullrank<R: Rng + ?Sized>(&self, params: &EsnParams, rng: &mut R) -> Result<Readout> {
        self.check_params(params)?;
        let b_hat = self.least_squares_recurrence(params.activation(), rng)?;
        Readout::new(params.input_pinv() * (b_hat - params.recurrence()), Provenance::UnsupervisedFullRank)
    }

    /// Minimiser of the unsupervised loss, `B̂ = σ⁻¹(R₂) R₁⁺`.
    pub fn least_squares_recurrence<R: Rng + ?Sized>(
        &self,
        activation: ActivationKind,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        Ok(self.inverted_successors(activation, rng)? * &self.regressors_pinv)
    }
}

/// `W_D = D_{1,T} R_{1,T}⁺`; `states` holds exactly `r_1 .. r_T`.
pub fn solve_supervised(inputs: &Trajectory, states: &Trajectory) -> Result<Readout> {
    if inputs.len() != states.len() {
        return Err(Error::shape("solve_supervised (length)", states.len(), inputs.len()));
    }
    let pinv = linalg::pinv_default(states.matrix())?;
    Readout::new(inputs.matrix() * pinv, Provenance::Supervised)
}

/// Unsupervised readout from `r_1 .. r_{T+1}` without any input data.
pub fn solve_unsupervised_general<R: Rng + ?Sized>(
    params: &EsnParams,
    states: &Trajectory,
    rng: &mut R,
) -> Result<Readout> {
    PreparedStates::new(states)?.unsupervised_general(params, rng)
}

/// Full-row-rank form of [`solve_unsupervised_general`].
pub fn solve_unsupervised_fullrank<R: Rng + ?Sized>(
    params: &EsnParams,
    states: &Trajectory,
    rng: &mut R,
) -> Result<Readout> {
    PreparedStates::new(states)?.unsupervised_fullrank(params, rng)
}

/// `Σ_t ‖σ⁻¹(r_{t+1}) − B̂ r_t‖²` over all consecutive pairs of `states`.
///
/// Only deterministic inverses are accepted; the empirical ReLU surrogate
/// would make the loss a random variable.
pub fn ul_loss(activation: ActivationKind, states: &Trajectory, b_hat: &DMatrix<f64>) -> Result<f64> {
    if activation.is_stochastic_inverse() {
        return Err(Error::InvalidArgument("ul_loss needs a deterministic inverse activation".into()));
    }
    let n = states.dim();
    if b_hat.shape() != (n, n) {
        return Err(Error::shape("ul_loss (B_hat)", format!("({n}, {n})"), format!("{:?}", b_hat.shape())));
    }
    if states.len() < 2 {
        return Err(Error::InvalidArgument("ul_loss needs at least two states".into()));
    }
    let t = states.len() - 1;
    let m = states.matrix();
    // The deterministic branches never touch the rng.
    let mut unused = crate::rng::split(0, 0);
    let mut residual = activation.invert_columns(&m.columns(1, t).into_owned(), &mut unused)?;
    residual.gemm(-1.0, b_hat, &m.columns(0, t), 1.0);
    Ok(residual.norm_squared())
}

/// `V = W⁺ + (I − W⁺W) Ξ`. When `W` has full row rank, `W V = I`.
pub fn right_inverse_family(readout: &Readout, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let w = readout.weights();
    let (n_in, n_r) = w.shape();
    if xi.nrows() != n_r {
        return Err(Error::shape("right_inverse_family (Xi rows)", n_r, xi.nrows()));
    }
    if xi.ncols() != n_in {
        return Err(Error::shape("right_inverse_family (Xi cols)", n_in, xi.ncols()));
    }
    let w_pinv = linalg::pinv_default(w)?;
    let projector = DMatrix::identity(n_r, n_r) - &w_pinv * w;
    Ok(w_pinv + projector * xi)
}

/// Relative RMSE normalised by the truth's centred energy, so predicting the
/// time-mean scores exactly 1.
pub fn rrmse(estimate: &Trajectory, truth: &Trajectory) -> Result<f64> {
    if estimate.dim() != truth.dim() || estimate.len() != truth.len() {
        return Err(Error::shape(
            "rrmse",
            format!("({}, {})", truth.dim(), truth.len()),
            format!("({}, {})", estimate.dim(), estimate.len()),
        ));
    }
    let mean = truth.mean();
    let mut centred = truth.matrix().clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let denom = centred.norm_squared();
    if denom == 0.0 {
        return Err(Error::Numeric("rrmse undefined for a constant truth series".into()));
    }
    Ok(((estimate.matrix() - truth.matrix()).norm_squared() / denom).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegularityReport {
    pub rank_a: usize,
    pub rank_r: usize,
    pub activation_invertible: bool,
    /// (i) invertible σ, (ii) full column rank A, (iii) full row rank R.
    pub conditions_met: (bool, bool, bool),
}

/// Checks the three regularity conditions behind the unsupervised solves.
/// `rank_tolerance` is relative to the largest singular value; `None` uses
/// the same default as the pseudoinverse.
pub fn regularity_report(
    params: &EsnParams,
    states: &Trajectory,
    rank_tolerance: Option<f64>,
) -> Result<RegularityReport> {
    let a = params.input_matrix();
    let r = states.matrix();
    let tol_a = rank_tolerance.unwrap_or_else(|| linalg::default_rel_tolerance(a.nrows(), a.ncols()));
    let tol_r = rank_tolerance.unwrap_or_else(|| linalg::default_rel_tolerance(r.nrows(), r.ncols()));
    let rank_a = linalg::rank(a, tol_a)?;
    let rank_r = linalg::rank(r, tol_r)?;
    let invertible = params.activation().is_invertible();
    Ok(RegularityReport {
        rank_a,
        rank_r,
        activation_invertible: invertible,
        conditions_met: (invertible, rank_a == params.n_in(), rank_r == params.n_r()),
    })
}
