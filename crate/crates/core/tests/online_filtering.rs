use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use resin_core::filtering::{run_filter_with, FilterOptions};
use resin_core::online::{precision_min_eigenvalue, rls_init_with, rls_update};
use resin_core::rng::split;
use resin_core::{
    readout_at, sample_noise, synthesize_params, ActivationKind, DMatrix, FilterPrior, NoiseModel, PreparedStates,
    Provenance, Readout, ReplicatedMap, RlsConfig, Trajectory,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // RLS from B̂₁ = B, P₁ = I is ridge regression pulled towards B.
    #[test]
    fn rls_equals_unit_prior_ridge(seed in 0u64..10_000, n_r in 2usize..8, steps in 5usize..60) {
        let mut rng = split(seed, 1);
        let params = synthesize_params(2, n_r, 0.3, 0.9, ActivationKind::Tanh, &mut rng).unwrap();
        let inputs = Trajectory::new(DMatrix::from_fn(2, steps, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let states = params.drive_from_zero(&inputs).unwrap();
        let mut state = rls_init_with(&params, RlsConfig::default()).unwrap();
        let mut solver = split(seed, 4);
        for t in 0..steps {
            rls_update(&mut state, &params, states.column(t), states.column(t + 1), &mut solver).unwrap();
            let p = state.precision();
            prop_assert!((p - p.transpose()).amax() < 1e-8);
        }
        prop_assert!(precision_min_eigenvalue(&state) > 0.0);

        let r1 = states.matrix().columns(0, steps).into_owned();
        let y = states.matrix().columns(1, steps).map(f64::atanh);
        let gram = DMatrix::identity(n_r, n_r) + &r1 * r1.transpose();
        let rhs = params.recurrence() + &y * r1.transpose();
        let ridge = gram.lu().solve(&rhs.transpose()).unwrap().transpose();
        prop_assert!((state.b_hat() - &ridge).norm() < 1e-8);
    }
}

// The unit prior's pull shrinks as data accumulate, so the online readout
// approaches the batch unsupervised readout.
#[test]
fn online_readout_approaches_batch_estimate() {
    let mut rng = split(8, 1);
    let params = synthesize_params(6, 6, 0.2, 0.9, ActivationKind::Tanh, &mut rng).unwrap();
    let inputs = Trajectory::new(DMatrix::from_fn(6, 3000, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let states = params.drive_from_zero(&inputs).unwrap();
    let mut solver = split(8, 4);
    let mut gap_at = |steps: usize| {
        let mut state = rls_init_with(&params, RlsConfig::default()).unwrap();
        for t in 0..steps {
            rls_update(&mut state, &params, states.column(t), states.column(t + 1), &mut solver).unwrap();
        }
        let head = states.window(0, steps + 1).unwrap();
        let batch = PreparedStates::new(&head).unwrap().unsupervised_fullrank(&params, &mut solver).unwrap();
        (readout_at(&state, &params).weights() - batch.weights()).norm() / batch.weights().norm()
    };
    let (early, late) = (gap_at(300), gap_at(3000));
    assert!(late < 0.2 * early, "gap {early} after 300 steps, {late} after 3000");
}

fn scalar_prior(a: f64, q: f64) -> FilterPrior {
    let replica =
        ReplicatedMap::new(DMatrix::from_element(1, 1, a), ActivationKind::Identity, Provenance::UnsupervisedFullRank)
            .unwrap();
    let readout = Readout::new(DMatrix::from_element(1, 1, 1.0), Provenance::UnsupervisedFullRank).unwrap();
    FilterPrior::new(readout, replica, DMatrix::from_element(1, 1, q)).unwrap()
}

// With a large ensemble the filtered mean tracks the exact Kalman mean to
// within a few standard deviations of the ensemble sampling error.
#[test]
fn large_ensemble_tracks_kalman_filter() {
    let (a, q, r) = (0.8_f64, 0.2_f64, 0.5_f64);
    let mut rng = split(21, 3);
    let mut x = 0.0;
    let obs: Vec<f64> = (0..50)
        .map(|_| {
            let (w, v): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            x = a * x + q.sqrt() * w;
            x + r.sqrt() * v
        })
        .collect();
    let opts = FilterOptions { members: 20_000, alpha_r: 0.0, initial_obs_cov: Some(DMatrix::from_element(1, 1, r)) };
    let run = run_filter_with(&scalar_prior(a, q), &Trajectory::from_scalars(&obs).unwrap(), &opts, &mut split(21, 5))
        .unwrap();
    let (mut m, mut p) = (0.0, 1.0);
    for (t, &y) in obs.iter().enumerate() {
        let (mf, pf) = (a * m, a * a * p + q);
        let k = pf / (pf + r);
        m = mf + k * (y - mf);
        p = (1.0 - k) * pf;
        let err = (run.means.matrix()[(0, t)] - m).abs();
        assert!(err < 0.05, "step {t}: {err}");
    }
}

#[test]
fn student_t_noise_has_expected_spread() {
    let mut rng = split(2, 3);
    let gauss = sample_noise(NoiseModel::StudentT { nu: f64::INFINITY, scale: 2.0 }, 1, 40_000, &mut rng).unwrap();
    let var = gauss.matrix().norm_squared() / 40_000.0;
    assert!((var - 4.0).abs() < 0.15, "{var}");
    // Var(t_ν) = ν / (ν − 2)
    let t5 = sample_noise(NoiseModel::StudentT { nu: 5.0, scale: 1.0 }, 1, 200_000, &mut rng).unwrap();
    let var = t5.matrix().norm_squared() / 200_000.0;
    assert!((var - 5.0 / 3.0).abs() < 0.1, "{var}");
    // t_1 is Cauchy: the median of |x| is 1.
    let t1 = sample_noise(NoiseModel::StudentT { nu: 1.0, scale: 1.0 }, 1, 20_001, &mut rng).unwrap();
    let mut abs: Vec<f64> = t1.matrix().iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    assert!((abs[10_000] - 1.0).abs() < 0.05, "{}", abs[10_000]);
}
