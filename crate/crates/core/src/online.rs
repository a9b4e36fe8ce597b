//! Recursive least squares for the unsupervised readout.
//!
//! The recursion fits `B̂` in `σ⁻¹(r_{t+1}) ≈ B̂ r_t` one pair at a time and
//! exposes the readout `(W_R)_t = A⁺(B̂_t − B)`. No input sample is read.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::readout::{Provenance, Readout};
use crate::reservoir::EsnParams;
use crate::trajectory::Trajectory;

/// Starting point of the recurrence estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlsInit {
    /// `B̂₁ = B`, so the first readout is zero.
    #[default]
    TrueRecurrence,
    /// `B̂₁ = 0`; replication needs only σ, not `B`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlsConfig {
    pub init: RlsInit,
    /// Forgetting factor in (0, 1]; 1 disables forgetting.
    pub forgetting: f64,
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self { init: RlsInit::TrueRecurrence, forgetting: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    b_hat: DMatrix<f64>,
    precision: DMatrix<f64>,
    t: usize,
    forgetting: f64,
}

impl RlsState {
    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    /// Running estimate `P_t` of the inverse state correlation.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// 1-based index of the next pair to be processed.
    pub fn t(&self) -> usize {
        self.t
    }
}

/// `B̂₁ = B`, `P₁ = I`, `t = 1`.
pub fn rls_init(params: &EsnParams) -> RlsState {
    rls_init_with(params, RlsConfig::default()).expect("default config is valid")
}

pub fn rls_init_with(params: &EsnParams, cfg: RlsConfig) -> Result<RlsState> {
    if !(cfg.forgetting > 0.0 && cfg.forgetting <= 1.0) {
        return Err(Error::InvalidArgument(format!("forgetting factor must be in (0, 1], got {}", cfg.forgetting)));
    }
    let n = params.n_r();
    let b_hat = match cfg.init {
        RlsInit::TrueRecurrence => params.recurrence().clone(),
        RlsInit::Zero => DMatrix::zeros(n, n),
    };
    Ok(RlsState { b_hat, precision: DMatrix::identity(n, n), t: 1, forgetting: cfg.forgetting })
}

/// Gain and innovation of one update, kept so callers can measure the
/// readout change without forming the readouts.
#[derive(Debug, Clone)]
pub struct RlsIncrement {
    pub gain: DVector<f64>,
    pub innovation: DVector<f64>,
    /// `B̂_t r_t` before the update.
    pub prediction: DVector<f64>,
}

/// In-place RLS update on the pair `(r_t, r_{t+1})`.
pub fn rls_update<R: Rng + ?Sized>(
    state: &mut RlsState,
    params: &EsnParams,
    r_t: DVectorView<'_, f64>,
    r_next: DVectorView<'_, f64>,
    rng: &mut R,
) -> Result<RlsIncrement> {
    let n = params.n_r();
    if r_t.len() != n || r_next.len() != n {
        return Err(Error::shape("rls_step", n, if r_t.len() != n { r_t.len() } else { r_next.len() }));
    }
    if state.b_hat.nrows() != n {
        return Err(Error::shape("rls_step (state)", n, state.b_hat.nrows()));
    }
    let target = params.activation().invert(r_next, rng)?;
    let prediction = &state.b_hat * r_t;
    let innovation = target - &prediction;

    let p_r = &state.precision * r_t;
    let denom = state.forgetting + r_t.dot(&p_r);
    let gain = &p_r / denom;

    // P ← (P − g (P r)ᵀ) / λ, then restore symmetry.
    state.precision.ger(-1.0, &gain, &p_r, 1.0);
    if state.forgetting != 1.0 {
        state.precision /= state.forgetting;
    }
    let p = &mut state.precision;
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }

    state.b_hat.ger(1.0, &innovation, &gain, 1.0);
    state.t += 1;
    Ok(RlsIncrement { gain, innovation, prediction })
}

/// Value-style wrapper around [`rls_update`].
pub fn rls_step<R: Rng + ?Sized>(
    state: &RlsState,
    params: &EsnParams,
    r_t: &DVector<f64>,
    r_next: &DVector<f64>,
    rng: &mut R,
) -> Result<RlsState> {
    let mut next = state.clone();
    rls_update(&mut next, params, r_t.as_view(), r_next.as_view(), rng)?;
    Ok(next)
}

/// `(W_R)_t = A⁺(B̂_t − B)`.
pub fn readout_at(state: &RlsState, params: &EsnParams) -> Readout {
    let w = params.input_pinv() * (&state.b_hat - params.recurrence());
    Readout::new(w, Provenance::Online).expect("finite RLS state")
}

/// Per-step trace of an online run over `r_1 .. r_{T+1}`.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    /// Column `t` is `(W_R)_t r_t`, the readout *before* seeing `r_{t+1}`.
    pub outputs: Trajectory,
    /// `‖(W_R)_{t+1} − (W_R)_t‖_F` for `t = 1 .. T`.
    pub update_norms: Vec<f64>,
    pub final_state: RlsState,
}

/// Runs RLS over every consecutive pair of `states`.
pub fn run_online<R: Rng + ?Sized>(
    params: &EsnParams,
    states: &Trajectory,
    cfg: RlsConfig,
    rng: &mut R,
) -> Result<OnlineRun> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument("online run needs at least two states".into()));
    }
    if states.dim() != params.n_r() {
        return Err(Error::shape("run_online", params.n_r(), states.dim()));
    }
    let pairs = states.len() - 1;
    let a_pinv = params.input_pinv();
    let mut state = rls_init_with(params, cfg)?;
    let mut outputs = DMatrix::zeros(params.n_in(), pairs);
    let mut update_norms = Vec::with_capacity(pairs);
    for t in 0..pairs {
        let r_t = states.column(t);
        let inc = rls_update(&mut state, params, r_t, states.column(t + 1), rng)?;
        // (W_R)_t r_t = A⁺ (B̂_t r_t − B r_t)
        let out = a_pinv * (&inc.prediction - params.recurrence() * r_t);
        outputs.set_column(t, &out);
        // The update A⁺ v gᵀ is rank one.
        update_norms.push((a_pinv * &inc.innovation).norm() * inc.gain.norm());
    }
    Ok(OnlineRun { outputs: Trajectory::new(outputs)?, update_norms, final_state: state })
}

/// Minimum eigenvalue of the symmetric precision estimate.
pub fn precision_min_eigenvalue(state: &RlsState) -> f64 {
    linalg::min_symmetric_eigenvalue(&state.precision)
}
