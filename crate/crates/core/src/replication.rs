//! Autonomous replicas `r ↦ σ((A W + B) r)` of the input-generating system,
//! the Lorenz-63 ground truth, and the readout-gap diagnostics.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::readout::{PreparedStates, Provenance, Readout};
use crate::reservoir::{ActivationKind, EsnParams};
use crate::trajectory::Trajectory;

/// Closed-loop network with the readout fed back as input.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedMap {
    b_hat: DMatrix<f64>,
    activation: ActivationKind,
    source: Provenance,
}

impl ReplicatedMap {
    pub fn new(b_hat: DMatrix<f64>, activation: ActivationKind, source: Provenance) -> Result<Self> {
        if !b_hat.is_square() {
            return Err(Error::shape("ReplicatedMap", "square matrix", format!("{:?}", b_hat.shape())));
        }
        if b_hat.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("replica matrix is not finite".into()));
        }
        Ok(Self { b_hat, activation, source })
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn source(&self) -> Provenance {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.b_hat.nrows()
    }

    /// `σ(B̂ r)`
    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut next = &self.b_hat * r;
        self.activation.apply_in_place(&mut next);
        next
    }

    /// Applies the map to every column of `states`.
    pub fn apply_columns(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        let mut next = &self.b_hat * states;
        if self.activation != ActivationKind::Identity {
            next.apply(|v| *v = self.activation.apply_scalar(*v));
        }
        next
    }
}

/// `B̂ = A W + B`.
pub fn build_replica(params: &EsnParams, readout: &Readout) -> Result<ReplicatedMap> {
    if readout.weights().shape() != (params.n_in(), params.n_r()) {
        return Err(Error::shape(
            "build_replica",
            format!("({}, {})", params.n_in(), params.n_r()),
            format!("{:?}", readout.weights().shape()),
        ));
    }
    let b_hat = params.input_matrix() * readout.weights() + params.recurrence();
    ReplicatedMap::new(b_hat, params.activation(), readout.provenance())
}

/// Autonomous orbit `r̂_1 = r1, r̂_{t+1} = σ(B̂ r̂_t)` of length `steps`.
pub fn rollout(replica: &ReplicatedMap, r1: &DVector<f64>, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one step".into()));
    }
    if r1.len() != replica.dim() {
        return Err(Error::shape("rollout", replica.dim(), r1.len()));
    }
    let mut out = DMatrix::zeros(replica.dim(), steps);
    out.set_column(0, r1);
    let mut r = r1.clone();
    for t in 1..steps {
        r = replica.apply(&r);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "rollout", index: t + 1 });
        }
        out.set_column(t, &r);
    }
    Trajectory::new(out)
}

/// Column-wise `W r̂_t`.
pub fn project(readout: &Readout, states: &Trajectory) -> Result<Trajectory> {
    readout.project(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub x1: [f64; 3],
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0, dt: 0.02, x1: [1.0, 1.0, 1.0] }
    }
}

impl LorenzConfig {
    pub fn vector_field(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.sigma * (x.y - x.x), x.x * (self.rho - x.z) - x.y, x.x * x.y - self.beta * x.z)
    }

    /// One classical RK4 step of size `h`.
    pub fn rk4_step(&self, x: &Vector3<f64>, h: f64) -> Vector3<f64> {
        let k1 = self.vector_field(x);
        let k2 = self.vector_field(&(x + k1 * (h / 2.0)));
        let k3 = self.vector_field(&(x + k2 * (h / 2.0)));
        let k4 = self.vector_field(&(x + k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

/// `steps` samples of the discrete map `x ↦ RK4_dt(x)` starting at `x1`.
pub fn lorenz_orbit(cfg: &LorenzConfig, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("orbit needs at least one step".into()));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", cfg.dt)));
    }
    let mut out = DMatrix::zeros(3, steps);
    let mut x = Vector3::from(cfg.x1);
    out.set_column(0, &x);
    for t in 1..steps {
        x = cfg.rk4_step(&x, cfg.dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "lorenz_orbit", index: t + 1 });
        }
        out.set_column(t, &x);
    }
    Trajectory::new(out)
}

/// Frobenius-norm error budget comparing supervised and unsupervised readouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Diagnostics {
    /// `‖W_R − W_D‖_F` with the full-rank unsupervised form.
    pub readout_gap: f64,
    /// Same gap with the general unsupervised form.
    pub readout_gap_general: f64,
    /// `‖tanh(atanh(R)) − R‖_F`
    pub tanh_roundtrip: f64,
    /// `‖R R⁺ − I‖_F`
    pub state_pinv_residual: f64,
    /// `‖A⁺ A − I‖_F`
    pub input_pinv_residual: f64,
}

impl Table1Diagnostics {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("readout_gap", self.readout_gap),
            ("readout_gap_general", self.readout_gap_general),
            ("tanh_roundtrip", self.tanh_roundtrip),
            ("state_pinv_residual", self.state_pinv_residual),
            ("input_pinv_residual", self.input_pinv_residual),
        ]
    }
}

/// `inputs` holds `d_1 .. d_T`, `states` holds `r_1 .. r_{T+1}`.
pub fn table1_diagnostics(params: &EsnParams, inputs: &Trajectory, states: &Trajectory) -> Result<Table1Diagnostics> {
    let prepared = PreparedStates::new(states)?;
    table1_from_prepared(params, inputs, &prepared)
}

/// [`table1_diagnostics`] reusing an already computed `R₁⁺`.
pub fn table1_from_prepared(
    params: &EsnParams,
    inputs: &Trajectory,
    prepared: &PreparedStates,
) -> Result<Table1Diagnostics> {
    if params.activation() != ActivationKind::Tanh {
        return Err(Error::InvalidArgument("table1 diagnostics are defined for tanh networks".into()));
    }
    // tanh inversion is deterministic; this stream is never advanced.
    let mut rng = crate::rng::split(0, 0);
    table1_with_rng(params, inputs, prepared, &mut rng)
}

fn table1_with_rng<R: Rng + ?Sized>(
    params: &EsnParams,
    inputs: &Trajectory,
    prepared: &PreparedStates,
    rng: &mut R,
) -> Result<Table1Diagnostics> {
    let supervised = prepared.supervised(inputs)?;
    let full = prepared.unsupervised_fullrank(params, rng)?;
    let general = prepared.unsupervised_general(params, rng)?;

    let r = prepared.regressors();
    let inverted = ActivationKind::Tanh.invert_columns(&r.into_owned(), rng)?;
    let tanh_roundtrip = (inverted.map(f64::tanh) - r).norm();

    let n_r = params.n_r();
    let state_pinv_residual = (r * prepared.regressors_pinv() - DMatrix::identity(n_r, n_r)).norm();
    let n_in = params.n_in();
    let input_pinv_residual = (params.input_pinv() * params.input_matrix() - DMatrix::identity(n_in, n_in)).norm();

    Ok(Table1Diagnostics {
        readout_gap: linalg::frobenius_distance(full.weights(), supervised.weights()),
        readout_gap_general: linalg::frobenius_distance(general.weights(), supervised.weights()),
        tanh_roundtrip,
        state_pinv_residual,
        input_pinv_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_readout_replica_is_recurrence() {
        let b = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.1);
        let p = EsnParams::new(DMatrix::from_element(3, 1, 0.2), b.clone(), ActivationKind::Tanh).unwrap();
        let replica = build_replica(&p, &Readout::zeros(1, 3, Provenance::Supervised)).unwrap();
        assert_eq!(replica.b_hat(), &b);
        assert_eq!(replica.source(), Provenance::Supervised);
        assert!(build_replica(&p, &Readout::zeros(2, 3, Provenance::Supervised)).is_err());
    }

    #[test]
    fn stable_linear_replica_decays_geometrically() {
        let replica = ReplicatedMap::new(
            DMatrix::identity(2, 2) * 0.5,
            ActivationKind::Identity,
            Provenance::UnsupervisedFullRank,
        )
        .unwrap();
        let orbit = rollout(&replica, &DVector::from_vec(vec![1.0, -2.0]), 30).unwrap();
        for t in 0..30 {
            let expected = 0.5f64.powi(t as i32);
            assert!((orbit.column(t)[0] - expected).abs() < 1e-15);
            assert!((orbit.column(t)[1] + 2.0 * expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rollout_edges() {
        let replica =
            ReplicatedMap::new(DMatrix::identity(2, 2) * 3.0, ActivationKind::Tanh, Provenance::Online).unwrap();
        let r1 = DVector::from_vec(vec![0.1, 0.2]);
        let one = rollout(&replica, &r1, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.column(0), r1.column(0));
        let long = rollout(&replica, &r1, 50).unwrap();
        assert!(long.matrix().iter().all(|x| x.abs() < 1.0));
        assert!(rollout(&replica, &r1, 0).is_err());

        let blowup =
            ReplicatedMap::new(DMatrix::identity(1, 1) * 1e200, ActivationKind::Identity, Provenance::Online).unwrap();
        let err = rollout(&blowup, &DVector::from_vec(vec![1.0]), 5).unwrap_err();
        assert_eq!(err, Error::NonFinite { context: "rollout", index: 3 });
    }

    #[test]
    fn project_zero_readout() {
        let states = Trajectory::new(DMatrix::from_element(4, 5, 0.3)).unwrap();
        let out = project(&Readout::zeros(2, 4, Provenance::Online), &states).unwrap();
        assert_eq!(out.matrix(), &DMatrix::zeros(2, 5));
    }

    #[test]
    fn lorenz_first_column_is_initial_state() {
        let orbit = lorenz_orbit(&LorenzConfig::default(), 1).unwrap();
        assert_eq!(orbit.matrix().as_slice(), &[1.0, 1.0, 1.0]);
        assert!(lorenz_orbit(&LorenzConfig::default(), 0).is_err());
        let bad = LorenzConfig { dt: 0.0, ..Default::default() };
        assert!(lorenz_orbit(&bad, 3).is_err());
    }
}
