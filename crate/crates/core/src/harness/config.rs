//! Experiment configuration. Every field defaults to the published setup so
//! an empty config file reproduces it; `Scale::Small` shrinks the heavy
//! dimensions for CI.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::RlsConfig;
use crate::replication::LorenzConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Reconstruct,
    Replicate,
    Filter,
    SweepRelu,
    SweepRank,
    FilterHeavytail,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Reconstruct,
        Experiment::Replicate,
        Experiment::Filter,
        Experiment::SweepRelu,
        Experiment::SweepRank,
        Experiment::FilterHeavytail,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Reconstruct => "reconstruct",
            Experiment::Replicate => "replicate",
            Experiment::Filter => "filter",
            Experiment::SweepRelu => "sweep_relu",
            Experiment::SweepRank => "sweep_rank",
            Experiment::FilterHeavytail => "filter_heavytail",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Paper,
    Small,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "small" => Ok(Scale::Small),
            other => Err(Error::Config(format!("unknown scale '{other}' (expected paper|small)"))),
        }
    }
}

/// `count` points spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub n_r: usize,
    pub input_variance: f64,
    pub spectral_radius: f64,
    /// Length of the piecewise input.
    pub steps: usize,
    pub rls: RlsConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { n_r: 50, input_variance: 0.02, spectral_radius: 0.9, steps: 1200, rls: RlsConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub n_r: usize,
    /// Variance of the input weights. 4e-4 is a standard deviation of 0.02;
    /// at 0.02 the raw Lorenz coordinates drive tanh into exact saturation.
    pub input_variance: f64,
    pub spectral_radius: f64,
    pub train_steps: usize,
    pub test_steps: usize,
    /// Multiplies the Lorenz coordinates before they enter the network.
    pub input_scale: f64,
    pub lorenz: LorenzConfig,
    /// Write the projected test orbits (large at full scale).
    pub emit_orbits: bool,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            n_r: 500,
            input_variance: 4e-4,
            spectral_radius: 1.2,
            train_steps: 5000,
            test_steps: 2000,
            input_scale: 1.0,
            lorenz: LorenzConfig::default(),
            emit_orbits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_r: usize,
    pub input_variance: f64,
    pub spectral_radius: f64,
    /// Period of the clean input `cos(2πt / period)`.
    pub period: f64,
    pub train_steps: usize,
    pub test_steps: usize,
    pub train_noise_variance: f64,
    pub test_noise_variances: Vec<f64>,
    pub members: usize,
    pub alpha_r: f64,
    /// Also run with `alpha_R = 0` (no covariance adaptation).
    pub non_adaptive: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_r: 30,
            input_variance: 0.02,
            spectral_radius: 0.9,
            period: 100.0,
            train_steps: 5000,
            test_steps: 3000,
            train_noise_variance: 0.01,
            test_noise_variances: logspace(-2.0, 1.0, 10),
            members: 300,
            alpha_r: 0.01,
            non_adaptive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepReluConfig {
    pub n_r: usize,
    pub spectral_radius: f64,
    pub steps: usize,
    /// Steps driven from the zero state and discarded before fitting; the
    /// zero state itself carries no information about its paired input.
    pub washout: usize,
    pub input_variances: Vec<f64>,
    /// Negative constants tried for the fixed surrogate inverse.
    pub alphas: Vec<f64>,
}

impl Default for SweepReluConfig {
    fn default() -> Self {
        Self {
            n_r: 50,
            spectral_radius: 0.9,
            steps: 1200,
            washout: 100,
            input_variances: vec![0.01, 1.0, 2.0],
            alphas: logspace(-3.0, 1.0, 13).into_iter().map(|a| -a).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRankConfig {
    pub n_r: usize,
    pub input_variance: f64,
    pub spectral_radius: f64,
    pub warmup: usize,
    pub steps: usize,
    pub noise_stds: Vec<f64>,
    /// Relative cutoff for `R⁺`. The rank count always uses
    /// `max(rows, cols)·ε`; a looser cutoff here exposes the ill-conditioning
    /// of rank-deficient state matrices. `None` uses the rank convention.
    pub pinv_rel_tolerance: Option<f64>,
}

impl Default for SweepRankConfig {
    fn default() -> Self {
        Self {
            n_r: 100,
            input_variance: 0.02,
            spectral_radius: 0.9,
            warmup: 5000,
            steps: 5000,
            noise_stds: logspace(-15.0, 0.0, 20),
            pinv_rel_tolerance: Some(1e-15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeavytailConfig {
    pub n_r: usize,
    pub input_variance: f64,
    pub spectral_radius: f64,
    pub period: f64,
    pub train_steps: usize,
    pub test_steps: usize,
    pub train_noise_variance: f64,
    /// Degrees of freedom; `inf` is Gaussian.
    pub nus: Vec<f64>,
    /// Scale of the Student-t test noise.
    pub noise_scale: f64,
    pub members: usize,
    pub alpha_r: f64,
}

impl Default for HeavytailConfig {
    fn default() -> Self {
        Self {
            n_r: 50,
            input_variance: 0.02,
            spectral_radius: 0.9,
            period: 100.0,
            train_steps: 5000,
            test_steps: 3000,
            train_noise_variance: 0.01,
            nus: vec![1.0, 2.0, 5.0, f64::INFINITY],
            noise_scale: 1.0,
            members: 500,
            alpha_r: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub reconstruct: ReconstructConfig,
    pub replicate: ReplicateConfig,
    pub filter: FilterConfig,
    pub sweep_relu: SweepReluConfig,
    pub sweep_rank: SweepRankConfig,
    pub filter_heavytail: HeavytailConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            output_dir: PathBuf::from("results"),
            reconstruct: ReconstructConfig::default(),
            replicate: ReplicateConfig::default(),
            filter: FilterConfig::default(),
            sweep_relu: SweepReluConfig::default(),
            sweep_rank: SweepRankConfig::default(),
            filter_heavytail: HeavytailConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Seeds `0 .. count`.
    pub fn with_seed_count(mut self, count: usize) -> Self {
        self.seeds = (0..count as u64).collect();
        self
    }

    /// Shrinks network size, training length and ensemble size.
    /// n_r 500 → 100, T 5000 → 2000, M 300 → 100.
    pub fn scaled(mut self, scale: Scale) -> Self {
        if scale == Scale::Small {
            self.replicate.n_r = self.replicate.n_r.min(100);
            self.replicate.train_steps = self.replicate.train_steps.min(2000);
            self.filter.train_steps = self.filter.train_steps.min(2000);
            self.filter.members = self.filter.members.min(100);
            self.filter_heavytail.train_steps = self.filter_heavytail.train_steps.min(2000);
            self.filter_heavytail.members = self.filter_heavytail.members.min(100);
            self.sweep_rank.warmup = self.sweep_rank.warmup.min(2000);
            self.sweep_rank.steps = self.sweep_rank.steps.min(2000);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.seeds.is_empty() {
            return fail("seeds must be non-empty");
        }
        let positive = [
            ("reconstruct.input_variance", self.reconstruct.input_variance),
            ("replicate.input_variance", self.replicate.input_variance),
            ("filter.input_variance", self.filter.input_variance),
            ("sweep_rank.input_variance", self.sweep_rank.input_variance),
            ("filter_heavytail.input_variance", self.filter_heavytail.input_variance),
            ("reconstruct.spectral_radius", self.reconstruct.spectral_radius),
            ("replicate.spectral_radius", self.replicate.spectral_radius),
            ("filter.spectral_radius", self.filter.spectral_radius),
            ("sweep_relu.spectral_radius", self.sweep_relu.spectral_radius),
            ("sweep_rank.spectral_radius", self.sweep_rank.spectral_radius),
            ("filter_heavytail.spectral_radius", self.filter_heavytail.spectral_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let sizes = [
            ("reconstruct.n_r", self.reconstruct.n_r),
            ("reconstruct.steps", self.reconstruct.steps),
            ("replicate.n_r", self.replicate.n_r),
            ("replicate.train_steps", self.replicate.train_steps),
            ("replicate.test_steps", self.replicate.test_steps),
            ("filter.n_r", self.filter.n_r),
            ("filter.train_steps", self.filter.train_steps),
            ("filter.test_steps", self.filter.test_steps),
            ("sweep_relu.n_r", self.sweep_relu.n_r),
            ("sweep_relu.steps", self.sweep_relu.steps),
            ("sweep_rank.n_r", self.sweep_rank.n_r),
            ("sweep_rank.steps", self.sweep_rank.steps),
            ("filter_heavytail.n_r", self.filter_heavytail.n_r),
            ("filter_heavytail.train_steps", self.filter_heavytail.train_steps),
            ("filter_heavytail.test_steps", self.filter_heavytail.test_steps),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.filter.members < 2 || self.filter_heavytail.members < 2 {
            return fail("ensemble size must be at least 2");
        }
        for a in [self.filter.alpha_r, self.filter_heavytail.alpha_r] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha_r must lie in [0, 1], got {a}")));
            }
        }
        if self.filter.test_noise_variances.is_empty() {
            return fail("filter.test_noise_variances must be non-empty");
        }
        if self.filter.test_noise_variances.iter().chain([&self.filter.train_noise_variance]).any(|v| !(*v >= 0.0)) {
            return fail("noise variances must be non-negative");
        }
        if self.sweep_relu.input_variances.is_empty() || self.sweep_relu.alphas.is_empty() {
            return fail("sweep_relu grids must be non-empty");
        }
        if self.sweep_relu.input_variances.iter().any(|v| !(*v > 0.0)) {
            return fail("sweep_relu.input_variances must be positive");
        }
        if self.sweep_relu.alphas.iter().any(|a| !(*a < 0.0)) {
            return fail("sweep_relu.alphas must be strictly negative");
        }
        if self.sweep_rank.noise_stds.is_empty() {
            return fail("sweep_rank.noise_stds must be non-empty");
        }
        if self.sweep_rank.noise_stds.iter().any(|s| !(*s >= 0.0)) {
            return fail("sweep_rank.noise_stds must be non-negative");
        }
        if self.filter_heavytail.nus.is_empty() || self.filter_heavytail.nus.iter().any(|n| !(*n > 0.0)) {
            return fail("filter_heavytail.nus must be non-empty and positive");
        }
        if !(self.replicate.lorenz.dt > 0.0) {
            return fail("replicate.lorenz.dt must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default_setup() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.seeds.len(), 10);
        assert_eq!(cfg.replicate.n_r, 500);
        assert_eq!(cfg.filter.members, 300);
        assert_eq!(cfg.sweep_rank.noise_stds.len(), 20);
        assert!((cfg.sweep_rank.noise_stds[0] - 1e-15).abs() < 1e-30);
        assert!((cfg.sweep_rank.noise_stds[19] - 1.0).abs() < 1e-15);
        assert_eq!(cfg.filter.test_noise_variances.len(), 10);
    }

    #[test]
    fn nested_overrides_and_infinity() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seeds = [3, 4]
            [filter]
            members = 50
            alpha_r = 0.0
            [filter_heavytail]
            nus = [1.0, inf]
            [reconstruct.rls]
            init = "zero"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.filter.members, 50);
        assert_eq!(cfg.filter.n_r, 30);
        assert!(cfg.filter_heavytail.nus[1].is_infinite());
        assert_eq!(cfg.reconstruct.rls.init, crate::online::RlsInit::Zero);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "seeds = []",
            "[filter]\nmembers = 1",
            "[filter]\nalpha_r = 2.0",
            "[sweep_relu]\nalphas = [0.5]",
            "[sweep_rank]\nnoise_stds = []",
            "unknown_key = 1",
            "seeds = \"x\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn small_scale_factors() {
        let cfg = ExperimentConfig::default().scaled(Scale::Small);
        assert_eq!(cfg.replicate.n_r, 100);
        assert_eq!(cfg.replicate.train_steps, 2000);
        assert_eq!(cfg.filter.members, 100);
        assert_eq!("small".parse::<Scale>().unwrap(), Scale::Small);
        assert!("huge".parse::<Scale>().is_err());
        assert_eq!("sweep_rank".parse::<Experiment>().unwrap(), Experiment::SweepRank);
    }
}
