//! Run configuration: one TOML file naming the inputs and every tunable.
//! Relative paths resolve against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::baselines::DpConfig;
use crate::env::PenaltyConfig;
use crate::error::{Error, Result};
use crate::powerflow::OpfConfig;
use crate::scenario::ForecastErrorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub network: PathBuf,
    pub timeseries: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Defaults to `checkpoint.bin` inside `out_dir`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Optional scenario archive used as the test set instead of generating one.
    #[serde(default)]
    pub test_scenarios: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    /// Train and test on the forecast itself.
    Deterministic,
    /// Monte-Carlo scenarios around the forecast.
    Stochastic,
    /// Whole days of the series: the first `train_days` train, the rest test.
    Historical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: ScenarioMode,
    pub n_train: usize,
    pub n_test: usize,
    /// Scenarios scored to pick the returned weights: a separate stream in
    /// stochastic mode, the last training days in historical mode.
    pub n_validation: usize,
    pub train_days: usize,
    pub steps_per_day: usize,
    pub power_factor: f64,
    pub errors: ForecastErrorModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: ScenarioMode::Deterministic,
            n_train: 1500,
            n_test: 20,
            n_validation: 10,
            train_days: 100,
            steps_per_day: 24,
            power_factor: 0.9,
            errors: ForecastErrorModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub epochs: usize,
    pub battery_levels: usize,
    pub dt: f64,
    /// Fill the `avg_decision_ms` column (wall-clock, so not reproducible).
    pub timing: bool,
    /// Compute DP references for the gap column in `evaluate`.
    pub evaluate_gap: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            epochs: 1500,
            battery_levels: 9,
            dt: 1.0,
            timing: false,
            evaluate_gap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required so no run depends on the clock.
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub penalties: PenaltyConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub dp: DpConfig,
    #[serde(default)]
    pub opf: OpfConfig,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(line, e.message().to_string())
        })?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.network);
        fix(&mut self.paths.timeseries);
        fix(&mut self.paths.out_dir);
        if let Some(p) = &mut self.paths.checkpoint {
            fix(p);
        }
        if let Some(p) = &mut self.paths.test_scenarios {
            fix(p);
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("checkpoint.bin"))
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.paths.network, &self.paths.timeseries] {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} not found", p.display())));
            }
        }
        if let Some(p) = &self.paths.test_scenarios {
            if !p.is_file() {
                return Err(Error::Config(format!("scenario archive {} not found", p.display())));
            }
        }
        self.agent.validate()?;
        self.scenario.errors.validate()?;
        if !(self.scenario.power_factor > 0.0 && self.scenario.power_factor <= 1.0) {
            return Err(Error::Config("power_factor must be in (0, 1]".into()));
        }
        if self.scenario.mode == ScenarioMode::Stochastic && self.scenario.n_train == 0 {
            return Err(Error::Config("n_train must be >= 1".into()));
        }
        if self.scenario.steps_per_day == 0 {
            return Err(Error::Config("steps_per_day must be >= 1".into()));
        }
        if !(self.run.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        Ok(())
    }
}
