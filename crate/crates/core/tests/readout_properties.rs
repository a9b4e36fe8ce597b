use proptest::prelude::*;
use rand::Rng;
use resin_core::rng::split;
use resin_core::{
    linalg, rrmse, solve_supervised, solve_unsupervised_fullrank, solve_unsupervised_general, synthesize_params,
    ActivationKind, DMatrix, EsnParams, Trajectory,
};

fn noisy_run(seed: u64, n_in: usize, n_r: usize, steps: usize) -> (EsnParams, Trajectory, Trajectory) {
    let mut rng = split(seed, 1);
    let params = synthesize_params(n_in, n_r, 0.05, 0.9, ActivationKind::Tanh, &mut rng).unwrap();
    let inputs = Trajectory::new(DMatrix::from_fn(n_in, steps, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let states = params.drive_from_zero(&inputs).unwrap();
    (params, inputs, states)
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    linalg::frobenius_distance(a, b) / b.norm()
}

// The unsupervised solvers only ever see parameters and states.
#[test]
fn unsupervised_solvers_take_no_inputs() {
    type Solver = fn(&EsnParams, &Trajectory, &mut resin_core::rng::Stream) -> resin_core::Result<resin_core::Readout>;
    let general: Solver = solve_unsupervised_general;
    let full: Solver = solve_unsupervised_fullrank;
    let (params, _, states) = noisy_run(0, 1, 8, 60);
    let mut rng = split(0, 4);
    assert!(general(&params, &states, &mut rng).is_ok());
    assert!(full(&params, &states, &mut rng).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inputs_are_recovered_from_consecutive_states(seed in 0u64..10_000, n_in in 1usize..4, n_r in 4usize..30) {
        let (params, inputs, states) = noisy_run(seed, n_in, n_r, 80);
        let pinv = params.input_pinv();
        for t in 0..inputs.len() {
            let pre = states.column(t + 1).map(f64::atanh) - params.recurrence() * states.column(t);
            let d = pinv * pre;
            prop_assert!((d - inputs.column(t)).amax() < 1e-8);
        }
    }

    #[test]
    fn unsupervised_readouts_equal_supervised(seed in 0u64..10_000, n_r in 4usize..40) {
        let (params, inputs, states) = noisy_run(seed, 1, n_r, 4 * n_r + 20);
        let regressors = states.window(0, inputs.len()).unwrap();
        let sup = solve_supervised(&inputs, &regressors).unwrap();
        let mut rng = split(seed, 4);
        let general = solve_unsupervised_general(&params, &states, &mut rng).unwrap();
        let full = solve_unsupervised_fullrank(&params, &states, &mut rng).unwrap();
        prop_assert!(relative_gap(general.weights(), sup.weights()) < 1e-6);
        prop_assert!(relative_gap(full.weights(), general.weights()) < 1e-6);
    }

    #[test]
    fn rrmse_scales_with_the_error(
        truth in proptest::collection::vec(-5.0f64..5.0, 3..40),
        noise in proptest::collection::vec(-1.0f64..1.0, 40),
        k in 0.0f64..10.0,
    ) {
        let spread = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - truth.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let estimate: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e).collect();
        let scaled: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + k * e).collect();
        let d = Trajectory::from_scalars(&truth).unwrap();
        let base = rrmse(&Trajectory::from_scalars(&estimate).unwrap(), &d).unwrap();
        let got = rrmse(&Trajectory::from_scalars(&scaled).unwrap(), &d).unwrap();
        prop_assert!((got - k * base).abs() <= 1e-12 * (1.0 + k * base));
    }
}

#[test]
fn supervised_readout_minimises_squared_error() {
    let (_, inputs, states) = noisy_run(11, 2, 12, 60);
    let regressors = states.window(0, inputs.len()).unwrap();
    let w = solve_supervised(&inputs, &regressors).unwrap();
    let loss = |m: &DMatrix<f64>| (m * regressors.matrix() - inputs.matrix()).norm_squared();
    let best = loss(w.weights());
    let mut rng = split(11, 9);
    for _ in 0..100 {
        let scale = 10f64.powf(rng.random_range(-6.0..0.0));
        let delta = DMatrix::from_fn(2, 12, |_, _| scale * rng.random_range(-1.0..1.0));
        assert!(loss(&(w.weights() + delta)) >= best * (1.0 - 1e-12));
    }
}
