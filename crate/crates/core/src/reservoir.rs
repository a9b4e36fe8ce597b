//! Echo state network dynamics `r_{t+1} = σ(A d_t + B r_t)`, activation
//! functions with their (surrogate) inverses, and random parameter synthesis.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::trajectory::Trajectory;

/// Largest magnitude handed to `atanh` after clamping.
pub const TANH_CLAMP: f64 = 1.0 - 1e-15;
/// Entries further than this outside (-1, 1) cannot come from a tanh layer.
pub const TANH_DOMAIN_SLACK: f64 = 1e-12;

/// Stand-in for the missing inverse of ReLU on its zero set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ReluInverseRule {
    /// Zeros map to a fixed negative constant.
    FixedAlpha { alpha: f64 },
    /// Zeros map to draws from the empirical distribution of `-r_i` over the
    /// positive entries of the same state vector.
    EmpiricalNegative,
}

impl ReluInverseRule {
    pub fn fixed_alpha(alpha: f64) -> Result<Self> {
        if !(alpha < 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "surrogate ReLU constant must be strictly negative, got {alpha}"
            )));
        }
        Ok(Self::FixedAlpha { alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Tanh,
    Relu { surrogate: ReluInverseRule },
}

impl ActivationKind {
    /// Whether the activation has a true inverse (as opposed to a surrogate).
    pub fn is_invertible(&self) -> bool {
        matches!(self, ActivationKind::Identity | ActivationKind::Tanh)
    }

    /// Whether inverting consumes randomness.
    pub fn is_stochastic_inverse(&self) -> bool {
        matches!(self, ActivationKind::Relu { surrogate: ReluInverseRule::EmpiricalNegative })
    }

    #[inline]
    pub fn apply_scalar(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Relu { .. } => x.max(0.0),
        }
    }

    /// Element-wise σ.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.apply_scalar(v))
    }

    pub fn apply_in_place(&self, x: &mut DVector<f64>) {
        if *self != ActivationKind::Identity {
            x.apply(|v| *v = self.apply_scalar(*v));
        }
    }

    /// Element-wise σ⁻¹, or the surrogate inverse for ReLU. Only the
    /// `EmpiricalNegative` rule draws from `rng`.
    pub fn invert<R: Rng + ?Sized>(&self, r: DVectorView<'_, f64>, rng: &mut R) -> Result<DVector<f64>> {
        match *self {
            ActivationKind::Identity => Ok(r.into_owned()),
            ActivationKind::Tanh => {
                let mut out = DVector::zeros(r.len());
                for (i, (&x, o)) in r.iter().zip(out.iter_mut()).enumerate() {
                    *o = atanh_clamped(x).ok_or(Error::Domain { function: "atanh", index: i, value: x })?;
                }
                Ok(out)
            }
            ActivationKind::Relu { surrogate: ReluInverseRule::FixedAlpha { alpha } } => {
                Ok(r.map(|x| if x > 0.0 { x } else { alpha }))
            }
            ActivationKind::Relu { surrogate: ReluInverseRule::EmpiricalNegative } => {
                let pool: Vec<f64> = r.iter().filter(|&&x| x > 0.0).map(|&x| -x).collect();
                Ok(r.map(|x| if x > 0.0 { x } else { pool.choose(rng).copied().unwrap_or(0.0) }))
            }
        }
    }

    /// Column-wise inverse of a state matrix. Domain errors report the
    /// column-major flat position of the offending entry.
    pub fn invert_columns<R: Rng + ?Sized>(&self, states: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(states.nrows(), states.ncols());
        for (k, col) in states.column_iter().enumerate() {
            let inv = self.invert(col, rng).map_err(|e| match e {
                Error::Domain { function, index, value } => {
                    Error::Domain { function, index: k * states.nrows() + index, value }
                }
                other => other,
            })?;
            out.set_column(k, &inv);
        }
        Ok(out)
    }
}

fn atanh_clamped(x: f64) -> Option<f64> {
    if !x.is_finite() || x.abs() >= 1.0 + TANH_DOMAIN_SLACK {
        return None;
    }
    Some(x.clamp(-TANH_CLAMP, TANH_CLAMP).atanh())
}

/// Free function form of [`ActivationKind::apply`].
pub fn activation_apply(kind: ActivationKind, x: &DVector<f64>) -> DVector<f64> {
    kind.apply(x)
}

/// Free function form of [`ActivationKind::invert`].
pub fn activation_invert<R: Rng + ?Sized>(kind: ActivationKind, r: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    kind.invert(r.as_view(), rng)
}

/// Fixed network description: input map `A` (n_r × n_in), recurrence `B`
/// (n_r × n_r) and the activation.
#[derive(Debug, Clone)]
pub struct EsnParams {
    input: DMatrix<f64>,
    recurrence: DMatrix<f64>,
    activation: ActivationKind,
    input_pinv: OnceLock<DMatrix<f64>>,
}

impl PartialEq for EsnParams {
    fn eq(&self, other: &Self) -> bool {
        self.input == other.input && self.recurrence == other.recurrence && self.activation == other.activation
    }
}

impl EsnParams {
    pub fn new(input: DMatrix<f64>, recurrence: DMatrix<f64>, activation: ActivationKind) -> Result<Self> {
        let n_r = input.nrows();
        if n_r == 0 || input.ncols() == 0 {
            return Err(Error::InvalidArgument("A must be non-empty".into()));
        }
        if recurrence.shape() != (n_r, n_r) {
            return Err(Error::shape(
                "EsnParams::new (B)",
                format!("({n_r}, {n_r})"),
                format!("{:?}", recurrence.shape()),
            ));
        }
        if input.iter().chain(recurrence.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("A and B must be finite".into()));
        }
        Ok(Self { input, recurrence, activation, input_pinv: OnceLock::new() })
    }

    pub fn n_in(&self) -> usize {
        self.input.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.input.nrows()
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.input
    }

    pub fn recurrence(&self) -> &DMatrix<f64> {
        &self.recurrence
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    /// Same weights under a different activation.
    pub fn with_activation(&self, activation: ActivationKind) -> Self {
        Self {
            input: self.input.clone(),
            recurrence: self.recurrence.clone(),
            activation,
            input_pinv: self.input_pinv.clone(),
        }
    }

    /// `A⁺`, computed once.
    pub fn input_pinv(&self) -> &DMatrix<f64> {
        self.input_pinv.get_or_init(|| linalg::pinv_default(&self.input).expect("A is finite by construction"))
    }

    fn check_step(&self, d: usize, r: usize) -> Result<()> {
        if d != self.n_in() {
            return Err(Error::shape("step (input)", self.n_in(), d));
        }
        if r != self.n_r() {
            return Err(Error::shape("step (state)", self.n_r(), r));
        }
        Ok(())
    }

    /// One update `σ(A d + B r)`.
    pub fn step(&self, d: DVectorView<'_, f64>, r: DVectorView<'_, f64>) -> Result<DVector<f64>> {
        self.check_step(d.len(), r.len())?;
        let mut next = &self.input * d;
        next.gemv(1.0, &self.recurrence, &r, 1.0);
        self.activation.apply_in_place(&mut next);
        Ok(next)
    }

    /// Drives the network through `inputs` starting from `r1`; returns the
    /// `T + 1` states `r_1 .. r_{T+1}`.
    pub fn drive(&self, inputs: &Trajectory, r1: &DVector<f64>) -> Result<Trajectory> {
        if inputs.dim() != self.n_in() {
            return Err(Error::shape("drive (inputs)", self.n_in(), inputs.dim()));
        }
        if r1.len() != self.n_r() {
            return Err(Error::shape("drive (initial state)", self.n_r(), r1.len()));
        }
        let steps = inputs.len();
        let mut states = DMatrix::zeros(self.n_r(), steps + 1);
        states.set_column(0, r1);
        for t in 0..steps {
            let next = self.step(inputs.column(t), states.column(t))?;
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { context: "drive", index: t + 2 });
            }
            states.set_column(t + 1, &next);
        }
        Trajectory::new(states)
    }

    /// [`drive`](Self::drive) from the zero state.
    pub fn drive_from_zero(&self, inputs: &Trajectory) -> Result<Trajectory> {
        self.drive(inputs, &DVector::zeros(self.n_r()))
    }
}

pub fn step(params: &EsnParams, d: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    params.step(d.as_view(), r.as_view())
}

pub fn drive(params: &EsnParams, inputs: &Trajectory, r1: &DVector<f64>) -> Result<Trajectory> {
    params.drive(inputs, r1)
}

const SPECTRAL_RETRIES: usize = 3;

/// Random parameters: `A_ij ~ N(0, input_variance)` and
/// `B = (target / ρ(B₀)) B₀` with `(B₀)_ij ~ N(0, 1)`, so `ρ(B) = target`.
pub fn synthesize_params<R: Rng + ?Sized>(
    n_in: usize,
    n_r: usize,
    input_variance: f64,
    target_spectral_radius: f64,
    activation: ActivationKind,
    rng: &mut R,
) -> Result<EsnParams> {
    if n_in == 0 || n_r == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(input_variance > 0.0) {
        return Err(Error::InvalidArgument(format!("input variance must be positive, got {input_variance}")));
    }
    if !(target_spectral_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target spectral radius must be positive, got {target_spectral_radius}"
        )));
    }
    let input_dist = Normal::new(0.0, input_variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let input = DMatrix::from_fn(n_r, n_in, |_, _| input_dist.sample(rng));
    for _ in 0..=SPECTRAL_RETRIES {
        let base = DMatrix::from_fn(n_r, n_r, |_, _| StandardNormal.sample(rng));
        let rho = linalg::spectral_radius(&base)?;
        if rho > 0.0 && rho.is_finite() {
            let recurrence = base * (target_spectral_radius / rho);
            return EsnParams::new(input, recurrence, activation);
        }
    }
    Err(Error::Numeric("random recurrence matrix had zero spectral radius".into()))
}
