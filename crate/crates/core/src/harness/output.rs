//! CSV emission. Rows are sorted before writing so output is independent of
//! trial scheduling; floats carry 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::experiments::{FilterRecord, RankRecord, ReconstructRecord, ReluRecord, ReplicateRecord};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn sort_key(&self) -> (u8, f64, &str) {
        match self {
            Cell::Int(v) => (0, *v as f64, ""),
            Cell::Float(v) => (0, *v, ""),
            Cell::Text(s) => (1, 0.0, s),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Scientific notation with 17 significant digits; `inf`/`-inf`/`NaN` as is.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { file: file.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            for (x, y) in a.iter().zip(b) {
                let ord = x.sort_key().partial_cmp(&y.sort_key()).unwrap_or(std::cmp::Ordering::Equal);
                if ord.is_ne() {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        });
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(&self.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Debug, Default)]
struct Moments {
    values: Vec<f64>,
}

impl Moments {
    fn cells(&self) -> Vec<Cell> {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let std = if self.values.len() > 1 {
            (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vec![mean.into(), std.into(), min.into(), max.into(), self.values.len().into()]
    }
}

/// Groups `table` by every column except `seed` and the value column and
/// reports mean, sample std, min and max across seeds.
pub fn summarize(table: &Table, value_column: &str) -> Table {
    let seed_idx = table.header.iter().position(|h| *h == "seed");
    let value_idx = table.header.iter().position(|h| *h == value_column).expect("value column present");
    let keys: Vec<usize> = (0..table.header.len()).filter(|&i| Some(i) != seed_idx && i != value_idx).collect();
    let mut groups: BTreeMap<Vec<String>, (Vec<Cell>, Moments)> = BTreeMap::new();
    for row in &table.rows {
        let key_cells: Vec<Cell> = keys.iter().map(|&i| row[i].clone()).collect();
        let entry = groups
            .entry(key_cells.iter().map(Cell::render).collect())
            .or_insert_with(|| (key_cells, Moments::default()));
        if let Cell::Float(v) = row[value_idx] {
            entry.1.values.push(v);
        }
    }
    let mut header: Vec<&'static str> = keys.iter().map(|&i| table.header[i]).collect();
    header.extend(["mean", "std", "min", "max", "count"]);
    let stem = table.file.trim_end_matches(".csv");
    let mut out = Table::new(format!("{stem}_summary.csv"), header);
    for (_, (mut cells, moments)) in groups {
        cells.extend(moments.cells());
        out.push(cells);
    }
    out.sort();
    out
}

pub fn reconstruct_table(records: &[ReconstructRecord]) -> Table {
    let mut t = Table::new("reconstruct.csv", vec!["seed", "t", "d", "output", "update_norm"]);
    for r in records {
        for k in 0..r.truth.len() {
            t.push(vec![
                r.seed.into(),
                (k + 1).into(),
                r.truth[k].into(),
                r.output[k].into(),
                r.update_norms[k].into(),
            ]);
        }
    }
    t.sort();
    t
}

pub fn table1_table(records: &[ReplicateRecord]) -> Table {
    let mut t = Table::new("table1.csv", vec!["seed", "metric", "value"]);
    for r in records {
        for (name, v) in r.diagnostics.rows().into_iter().chain(r.checks.rows()) {
            t.push(vec![r.seed.into(), name.into(), v.into()]);
        }
    }
    t.sort();
    t
}

/// Long format: one row per `(seed, t, source, coordinate)`.
pub fn orbits_table(records: &[ReplicateRecord]) -> Option<Table> {
    let mut t = Table::new("replicate_orbits.csv", vec!["seed", "t", "source", "coordinate", "value"]);
    let mut any = false;
    for r in records {
        let Some(orbits) = &r.orbits else { continue };
        any = true;
        for (source, orbit) in ["truth", "supervised", "unsupervised"].into_iter().zip(orbits) {
            for k in 0..orbit.len() {
                for i in 0..orbit.dim() {
                    t.push(vec![r.seed.into(), (k + 1).into(), source.into(), i.into(), orbit.matrix()[(i, k)].into()]);
                }
            }
        }
    }
    t.sort();
    any.then_some(t)
}

fn stage_table(file: &str, level: &'static str, records: &[FilterRecord]) -> Table {
    let mut t = Table::new(file, vec!["seed", level, "stage", "rrmse"]);
    for r in records {
        t.push(vec![r.seed.into(), r.level.into(), r.stage.into(), r.rrmse.into()]);
    }
    t.sort();
    t
}

pub fn filter_table(records: &[FilterRecord]) -> Table {
    stage_table("filter.csv", "sigma2", records)
}

pub fn heavytail_table(records: &[FilterRecord]) -> Table {
    stage_table("heavytail.csv", "nu", records)
}

pub fn relu_table(records: &[ReluRecord]) -> Table {
    let mut t = Table::new("sweep_relu.csv", vec!["seed", "variance", "rule", "alpha", "rrmse"]);
    for r in records {
        let alpha = r.alpha.map_or(Cell::Text(String::new()), Cell::Float);
        t.push(vec![r.seed.into(), r.variance.into(), r.rule.into(), alpha, r.rrmse.into()]);
    }
    t.sort();
    t
}

pub fn rank_table(records: &[RankRecord]) -> Table {
    let mut t = Table::new("sweep_rank.csv", vec!["seed", "noise_std", "rank", "method", "rrmse"]);
    for r in records {
        t.push(vec![r.seed.into(), r.noise_std.into(), r.rank.into(), r.method.into(), r.rrmse.into()]);
    }
    t.sort();
    t
}
