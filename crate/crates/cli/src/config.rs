//! Experiment configuration: a single TOML file with explicit seeds.

use anyhow::{anyhow, bail, Context, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use robust_games::bregman::TimeScaling;
use robust_games::divergence::FDivergence;
use robust_games::game::{DecisionSet, RobustGame, ScenarioSet};
use robust_games::games;
use robust_games::learning::{
    BaselineConfig, BaselineMethod, LearnerConfig, LearnerMode, Resample, StepSchedule,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSection,
    pub scenarios: ScenarioSection,
    pub learner: LearnerSection,
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub baseline: BaselineSection,
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Built-in game name, or the loss id when `bounds` makes it inline.
    pub name: String,
    #[serde(default = "default_divergence")]
    pub divergence: String,
    pub rho: f64,
    /// Inline definition: per-player [low, high] action bounds.
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
}

fn default_divergence() -> String {
    "kl".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub count: usize,
    pub distribution: String,
    pub seed: u64,
    /// Interval for the uniform distribution.
    #[serde(default)]
    pub low: Option<f64>,
    #[serde(default)]
    pub high: Option<f64>,
    /// Explicit atoms (distribution = "explicit").
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub mode: String,
    #[serde(default = "default_swarm")]
    pub swarm_size: usize,
    #[serde(default = "default_resample")]
    pub resample: String,
    pub seed: u64,
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default = "default_scaling")]
    pub scaling: String,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "default_beta_cap")]
    pub beta_cap: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_lambda_floor")]
    pub lambda_floor: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default)]
    pub init: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_swarm() -> usize {
    100
}
fn default_resample() -> String {
    "fresh".into()
}
fn default_generator() -> String {
    "sq_euclidean".into()
}
fn default_scaling() -> String {
    "capped_ideal".into()
}
fn default_beta_cap() -> f64 {
    4.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    5.0
}
fn default_substeps() -> usize {
    1
}
fn default_lambda_floor() -> f64 {
    0.05
}
fn default_lambda0() -> f64 {
    1.0
}
fn default_record_every() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            step: default_step(),
            schedule: default_schedule(),
            iters: default_iters(),
            record_every: default_record_every(),
        }
    }
}

fn default_step() -> f64 {
    1e-3
}
fn default_schedule() -> String {
    "constant".into()
}
fn default_iters() -> usize {
    5000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Grid resolution for the final equilibrium certificate.
    #[serde(default = "default_probe")]
    pub probe_resolution: usize,
}

fn default_eta() -> f64 {
    1e-3
}
fn default_probe() -> usize {
    41
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.scenarios.count == 0 {
            bail!("scenarios.count must be at least 1");
        }
        if games::scenario_dim(&self.game.name).is_none() {
            bail!(
                "unknown game '{}'; available: {}",
                self.game.name,
                games::GAME_NAMES.join(", ")
            );
        }
        FDivergence::by_name(&self.game.divergence)
            .ok_or_else(|| anyhow!("unknown divergence '{}'", self.game.divergence))?;
        for method in &self.baselines {
            BaselineMethod::by_name(method)
                .ok_or_else(|| anyhow!("unknown baseline method '{method}'"))?;
        }
        match self.learner.generator.as_str() {
            "sq_euclidean" | "neg_entropy" => {}
            other => bail!("unknown generator '{other}'"),
        }
        Ok(())
    }

    pub fn build_game(&self) -> Result<RobustGame> {
        let dim = games::scenario_dim(&self.game.name)
            .ok_or_else(|| anyhow!("unknown game '{}'", self.game.name))?;
        let scenarios = self.build_scenarios(dim)?;
        let divergence = FDivergence::by_name(&self.game.divergence)
            .ok_or_else(|| anyhow!("unknown divergence '{}'", self.game.divergence))?;
        let game = match &self.game.bounds {
            Some(bounds) => {
                if bounds.len() != 2 {
                    bail!("inline bounds must list exactly two players");
                }
                games::by_name_with_bounds(
                    &self.game.name,
                    divergence,
                    self.game.rho,
                    scenarios,
                    [
                        (bounds[0][0], bounds[0][1]),
                        (bounds[1][0], bounds[1][1]),
                    ],
                )?
            }
            None => games::by_name(&self.game.name, divergence, self.game.rho, scenarios)?,
        };
        // The built-in games have box decision sets; the entropy generator
        // only matches simplex sets.
        if self.learner.generator == "neg_entropy"
            && (0..game.n_players())
                .any(|j| matches!(game.decision_set(j), DecisionSet::Box { .. }))
        {
            bail!("generator 'neg_entropy' needs simplex decision sets");
        }
        Ok(game)
    }

    fn build_scenarios(&self, dim: usize) -> Result<ScenarioSet> {
        let section = &self.scenarios;
        let mut rng = ChaCha8Rng::seed_from_u64(section.seed);
        let points: Vec<Vec<f64>> = match section.distribution.as_str() {
            "standard_normal" => (0..section.count)
                .map(|_| (0..dim).map(|_| standard_normal(&mut rng)).collect())
                .collect(),
            "uniform" => {
                let low = section.low.ok_or_else(|| anyhow!("uniform needs 'low'"))?;
                let high = section.high.ok_or_else(|| anyhow!("uniform needs 'high'"))?;
                if low >= high {
                    bail!("uniform needs low < high");
                }
                (0..section.count)
                    .map(|_| (0..dim).map(|_| rng.gen_range(low..high)).collect())
                    .collect()
            }
            "explicit" => {
                let points = section
                    .points
                    .clone()
                    .ok_or_else(|| anyhow!("explicit distribution needs 'points'"))?;
                if points.iter().any(|p| p.len() != dim) {
                    bail!("explicit points must have dimension {dim}");
                }
                if let Some(weights) = &section.weights {
                    return Ok(ScenarioSet::weighted(points, weights.clone())?);
                }
                return Ok(ScenarioSet::empirical(points)?);
            }
            other => bail!("unknown scenario distribution '{other}'"),
        };
        Ok(ScenarioSet::empirical(points)?)
    }

    pub fn build_learner(&self) -> Result<LearnerConfig> {
        let section = &self.learner;
        let mode = match section.mode.as_str() {
            "deterministic" => LearnerMode::Deterministic,
            "single_particle" => LearnerMode::SingleParticle,
            "swarm" => LearnerMode::Swarm,
            other => bail!("unknown learner mode '{other}'"),
        };
        let resample = match section.resample.as_str() {
            "fresh" => Resample::FreshPerStep,
            "fixed" => Resample::FixedSample,
            other => bail!("unknown resample mode '{other}'"),
        };
        let scaling = match section.scaling.as_str() {
            "ideal" => TimeScaling::Ideal { beta0: section.beta0 },
            "capped_ideal" => TimeScaling::CappedIdeal {
                beta0: section.beta0,
                beta_cap: section.beta_cap,
            },
            "constant" => TimeScaling::Constant {
                alpha: section.alpha,
                beta0: section.beta0,
            },
            other => bail!("unknown scaling '{other}'"),
        };
        Ok(LearnerConfig {
            mode,
            swarm_size: section.swarm_size,
            resample,
            seed: section.seed,
            scaling,
            dt: section.dt,
            horizon: section.horizon,
            substeps: section.substeps,
            lambda_floor: section.lambda_floor,
            init_actions: section.init.clone(),
            lambda0: section.lambda0,
            record_every: section.record_every,
        })
    }

    pub fn build_baseline(&self, method: BaselineMethod) -> Result<BaselineConfig> {
        let schedule = match self.baseline.schedule.as_str() {
            "constant" => StepSchedule::Constant(self.baseline.step),
            "diminishing" => StepSchedule::Diminishing(self.baseline.step),
            other => bail!("unknown step schedule '{other}'"),
        };
        Ok(BaselineConfig {
            method,
            schedule,
            iters: self.baseline.iters,
            lambda_floor: self.learner.lambda_floor,
            init_actions: self.learner.init.clone(),
            lambda0: self.learner.lambda0,
            record_every: self.baseline.record_every,
        })
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
