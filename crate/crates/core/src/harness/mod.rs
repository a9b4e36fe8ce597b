//! Experiment drivers behind the `resin` binary: configuration, seeded
//! multi-trial execution and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;

pub use config::{logspace, Experiment, ExperimentConfig, Scale};
pub use experiments::{
    piecewise_input, run_filter, run_filter_heavytail, run_reconstruct, run_replicate, run_sweep_rank, run_sweep_relu,
    FilterRecord, RankRecord, ReconstructRecord, ReluRecord, ReplicateRecord, RolloutChecks,
};
pub use output::{format_float, summarize, Cell, Table};

use crate::error::Result;

/// Per-step series of the online run, melted to `(seed, t, quantity, value)`
/// so the shared summariser applies.
fn reconstruct_long(records: &[ReconstructRecord]) -> Table {
    let mut t = Table::new("reconstruct.csv", vec!["seed", "t", "quantity", "value"]);
    for r in records {
        for k in 0..r.truth.len() {
            t.push(vec![r.seed.into(), (k + 1).into(), "output".into(), r.output[k].into()]);
            t.push(vec![r.seed.into(), (k + 1).into(), "update_norm".into(), r.update_norms[k].into()]);
        }
    }
    t
}

/// Runs `experiment` and returns its data tables followed by their summaries.
pub fn run_tables(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    cfg.validate()?;
    let mut tables = Vec::new();
    match experiment {
        Experiment::Reconstruct => {
            let records = run_reconstruct(cfg)?;
            tables.push(output::reconstruct_table(&records));
            tables.push(summarize(&reconstruct_long(&records), "value"));
        }
        Experiment::Replicate => {
            let records = run_replicate(cfg)?;
            let t1 = output::table1_table(&records);
            tables.push(summarize(&t1, "value"));
            tables.push(t1);
            tables.extend(output::orbits_table(&records));
        }
        Experiment::Filter => {
            let t = output::filter_table(&run_filter(cfg)?);
            tables.push(summarize(&t, "rrmse"));
            tables.push(t);
        }
        Experiment::SweepRelu => {
            let t = output::relu_table(&run_sweep_relu(cfg)?);
            tables.push(summarize(&t, "rrmse"));
            tables.push(t);
        }
        Experiment::SweepRank => {
            let t = output::rank_table(&run_sweep_rank(cfg)?);
            let mut rank = Table::new("sweep_rank_rank.csv", vec!["seed", "noise_std", "rank_value"]);
            for row in t.rows.iter().filter(|r| r[3] == Cell::from(experiments::method::SUPERVISED)) {
                if let Cell::Int(k) = row[2] {
                    rank.push(vec![row[0].clone(), row[1].clone(), (k as f64).into()]);
                }
            }
            // rank varies per seed, so it is summarised separately
            tables.push(summarize(&drop_column(&t, "rank"), "rrmse"));
            tables.push(summarize(&rank, "rank_value"));
            tables.push(t);
        }
        Experiment::FilterHeavytail => {
            let t = output::heavytail_table(&run_filter_heavytail(cfg)?);
            tables.push(summarize(&t, "rrmse"));
            tables.push(t);
        }
    }
    Ok(tables)
}

fn drop_column(table: &Table, column: &str) -> Table {
    let drop = table.header.iter().position(|h| *h == column).expect("column present");
    let mut reduced = Table::new(
        table.file.clone(),
        table.header.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, h)| *h).collect(),
    );
    for row in &table.rows {
        reduced.push(row.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, c)| c.clone()).collect());
    }
    reduced
}

/// Runs `experiment` and writes every table under `cfg.output_dir`.
pub fn run_and_write(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    run_tables(experiment, cfg)?.iter().map(|t| t.write(&cfg.output_dir)).collect()
}
