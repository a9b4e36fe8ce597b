use resin_core::harness::{run_and_write, run_tables, Experiment, ExperimentConfig};

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default().with_seed_count(3);
    cfg.sweep_relu.steps = 300;
    cfg.sweep_relu.alphas = vec![-0.1, -1.0];
    cfg.filter.n_r = 10;
    cfg.filter.train_steps = 400;
    cfg.filter.test_steps = 200;
    cfg.filter.members = 40;
    cfg.filter.test_noise_variances = vec![0.1, 1.0];
    cfg
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = tiny();
    for experiment in [Experiment::SweepRelu, Experiment::Filter] {
        let one = in_pool(1, || run_tables(experiment, &cfg).unwrap());
        let many = in_pool(4, || run_tables(experiment, &cfg).unwrap());
        assert_eq!(one, many, "{}", experiment.name());
    }
}

#[test]
fn seeds_change_results_and_reruns_do_not() {
    let cfg = tiny();
    let a = run_tables(Experiment::SweepRelu, &cfg).unwrap();
    assert_eq!(a, run_tables(Experiment::SweepRelu, &cfg).unwrap());
    let mut shifted = cfg.clone();
    shifted.seeds = vec![10, 11, 12];
    assert_ne!(a[0].rows, run_tables(Experiment::SweepRelu, &shifted).unwrap()[0].rows);
}

#[test]
fn written_tables_have_headers_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.output_dir = dir.path().to_path_buf();
    let paths = run_and_write(Experiment::Filter, &cfg).unwrap();
    let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"filter.csv".to_string()), "{names:?}");
    assert!(names.contains(&"filter_summary.csv".to_string()), "{names:?}");
    let text = std::fs::read_to_string(dir.path().join("filter.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("seed,sigma2,stage,rrmse"));
    // 3 seeds x 2 levels x 4 stages
    assert_eq!(lines.count(), 24);
}
