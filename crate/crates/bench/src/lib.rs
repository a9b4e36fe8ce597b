//! Shared fixtures for the criterion benches.

use resin_core::rng::{stream, Lane};
use resin_core::{synthesize_params, ActivationKind, DMatrix, EsnParams, Trajectory};

/// Tanh network driven by a two-tone scalar input.
pub struct Fixture {
    pub params: EsnParams,
    pub inputs: Trajectory,
    pub states: Trajectory,
}

pub fn fixture(n_r: usize, steps: usize) -> Fixture {
    let params = synthesize_params(1, n_r, 0.02, 0.9, ActivationKind::Tanh, &mut stream(0, Lane::Params))
        .expect("valid parameters");
    let inputs = Trajectory::new(DMatrix::from_fn(1, steps, |_, t| {
        let t = t as f64;
        (t / 8.0).sin() + 0.5 * (t / 3.0).cos()
    }))
    .expect("finite inputs");
    let states = params.drive_from_zero(&inputs).expect("bounded states");
    Fixture { params, inputs, states }
}
