//! Multi-player equilibrium learning on the dual-reduced objectives.
//!
//! Every player descends its augmented variable z_j = (a_j, λ_j, μ_j) along
//! the accelerated mirror flow, all players stepping simultaneously. The
//! driving gradient is either the exact expectation over the base scenarios
//! (deterministic mode) or the mean over per-player particle swarms drawn
//! i.i.d. from the base measure — the realized integrand gradient
//!
//! ```text
//! ∇_{z_j} h_j(z, ω) ,   h_j = λ(ρ + f(1)) + μ + λ f*((l_j − μ)/λ),
//! ```
//!
//! which is an unbiased estimator of the dual-objective gradient with
//! variance shrinking like 1/N in the swarm size.

use crate::bregman::{
    bregman_step_substepped, BregmanTrajectory, DynState, Generator, TimeScaling,
    TrajectorySample,
};
use crate::error::{Error, Result};
use crate::game::{dual_objective, AugmentedDecision, DecisionSet, RobustGame, LAMBDA_MIN};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Gradient source for a learning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerMode {
    /// Exact expectation over the base scenario measure.
    Deterministic,
    /// One fresh scenario draw per player per step.
    SingleParticle,
    /// Mean over `swarm_size` draws per player per step.
    Swarm,
}

/// Whether stochastic modes redraw particles each step or fix one sample for
/// the whole run (sample-average approximation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    FreshPerStep,
    FixedSample,
}

/// Configuration for [`run_learning`].
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    pub swarm_size: usize,
    pub resample: Resample,
    pub seed: u64,
    pub scaling: TimeScaling,
    pub dt: f64,
    pub horizon: f64,
    /// Internal RK4 substeps per dt.
    pub substeps: usize,
    /// Learning-time multiplier floor. Stays well above the structural
    /// [`LAMBDA_MIN`]: near λ = 0 the integrand gradient carries
    /// f*((l − μ)/λ) factors that overflow long before the perspective
    /// limit is reached.
    pub lambda_floor: f64,
    /// Initial actions; decision-set centers when absent.
    pub init_actions: Option<Vec<Vec<f64>>>,
    /// Initial multiplier λ₀.
    pub lambda0: f64,
    /// Record every k-th step.
    pub record_every: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            mode: LearnerMode::Swarm,
            swarm_size: 100,
            resample: Resample::FreshPerStep,
            seed: 0,
            scaling: TimeScaling::CappedIdeal { beta0: 0.0, beta_cap: 4.0 },
            dt: 1e-3,
            horizon: 5.0,
            substeps: 1,
            lambda_floor: 0.05,
            init_actions: None,
            lambda0: 1.0,
            record_every: 10,
        }
    }
}

impl LearnerConfig {
    fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return Err(Error::Structural("swarm_size must be at least 1".into()));
        }
        if self.horizon <= 0.0 || self.dt <= 0.0 {
            return Err(Error::Structural("horizon and dt must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Structural("substeps must be at least 1".into()));
        }
        if self.lambda_floor < LAMBDA_MIN {
            return Err(Error::Domain(format!(
                "lambda_floor must be at least {LAMBDA_MIN}"
            )));
        }
        Ok(())
    }
}

/// Joint state of all players: augmented decisions plus flow velocities.
#[derive(Debug, Clone)]
pub struct JointState {
    pub decisions: Vec<AugmentedDecision>,
    pub velocities: Vec<Vec<f64>>,
}

/// Output of a learning or baseline run.
#[derive(Debug, Clone)]
pub struct LearningOutput {
    pub trajectories: Vec<BregmanTrajectory>,
    pub final_state: JointState,
}

/// Gradient of the realized integrand h_j at one scenario, with respect to
/// z_j = (a_j, λ, μ):
///
/// ```text
/// ∂/∂a_j = f*'(ξ) ∇_{a_j} l_j
/// ∂/∂λ   = (ρ + f(1)) + f*(ξ) − ξ f*'(ξ)
/// ∂/∂μ   = 1 − f*'(ξ)            with ξ = (l_j − μ)/λ.
/// ```
pub fn integrand_gradient(
    game: &RobustGame,
    j: usize,
    profile: &[AugmentedDecision],
    omega: &[f64],
) -> Result<Vec<f64>> {
    let lambda = profile[j].lambda;
    if lambda < LAMBDA_MIN {
        return Err(Error::Domain(format!(
            "lambda = {lambda} is below the perspective floor {LAMBDA_MIN}"
        )));
    }
    let mu = profile[j].mu;
    let fam = game.divergence();
    let actions: Vec<Vec<f64>> = profile.iter().map(|d| d.action.clone()).collect();
    let loss = game.loss(j, &actions, omega);
    let xi = (loss - mu) / lambda;
    let conj = fam.conjugate(xi);
    let conj_prime = fam.conjugate_prime(xi);
    let action_grad = game.loss_grad_own(j, &actions, omega);

    let mut grad = Vec::with_capacity(action_grad.len() + 2);
    grad.extend(action_grad.iter().map(|&g| conj_prime * g));
    grad.push(game.rho() + fam.f_at_one() + conj - xi * conj_prime);
    grad.push(1.0 - conj_prime);
    Ok(grad)
}

/// Arithmetic mean of [`integrand_gradient`] over a particle swarm.
pub fn swarm_gradient(
    game: &RobustGame,
    j: usize,
    profile: &[AugmentedDecision],
    particles: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if particles.is_empty() {
        return Err(Error::Structural("swarm gradient needs at least one particle".into()));
    }
    let mut mean = integrand_gradient(game, j, profile, &particles[0])?;
    for omega in &particles[1..] {
        let g = integrand_gradient(game, j, profile, omega)?;
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    let inv = 1.0 / particles.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Exact gradient of the dual objective: the base-measure expectation of the
/// integrand gradient.
pub fn dual_objective_gradient(
    game: &RobustGame,
    j: usize,
    profile: &[AugmentedDecision],
) -> Result<Vec<f64>> {
    let points = game.base_scenarios().points();
    let weights = game.base_scenarios().weights();
    let mut total = vec![0.0; profile[j].action.len() + 2];
    for (omega, &w) in points.iter().zip(weights) {
        let g = integrand_gradient(game, j, profile, omega)?;
        for (t, v) in total.iter_mut().zip(g) {
            *t += w * v;
        }
    }
    Ok(total)
}

/// Per-player layout of the stacked state vector.
struct Layout {
    offsets: Vec<usize>,
    dims: Vec<usize>,
    total: usize,
}

impl Layout {
    fn of(game: &RobustGame) -> Self {
        let mut offsets = Vec::with_capacity(game.n_players());
        let mut dims = Vec::with_capacity(game.n_players());
        let mut total = 0;
        for j in 0..game.n_players() {
            offsets.push(total);
            let d = game.decision_set(j).dim();
            dims.push(d);
            total += d + 2;
        }
        Self { offsets, dims, total }
    }

    fn decisions(&self, z: &[f64], lambda_floor: f64) -> Vec<AugmentedDecision> {
        self.offsets
            .iter()
            .zip(&self.dims)
            .map(|(&off, &d)| AugmentedDecision {
                action: z[off..off + d].to_vec(),
                lambda: z[off + d].max(lambda_floor),
                mu: z[off + d + 1],
            })
            .collect()
    }
}

/// Stacked generator: the action block of each player follows its decision
/// geometry (entropy on simplices, Euclidean on boxes), the multiplier pair
/// is always Euclidean.
fn joint_generator(game: &RobustGame) -> Generator {
    let blocks: Vec<(Generator, usize)> = (0..game.n_players())
        .flat_map(|j| {
            let d = game.decision_set(j).dim();
            let action_gen = match game.decision_set(j) {
                DecisionSet::Simplex { .. } => Generator::NegEntropy,
                DecisionSet::Box { .. } => Generator::SqEuclidean,
            };
            [(action_gen, d), (Generator::SqEuclidean, 2)]
        })
        .collect();
    Generator::Blocked(blocks)
}

/// Clamp multipliers and project actions back onto the decision sets.
fn project_state(game: &RobustGame, layout: &Layout, z: &mut [f64], lambda_floor: f64) {
    for (j, (&off, &d)) in layout.offsets.iter().zip(&layout.dims).enumerate() {
        match game.decision_set(j) {
            DecisionSet::Box { .. } => {
                game.decision_set(j).project(&mut z[off..off + d]);
            }
            DecisionSet::Simplex { .. } => {
                // The entropy mirror map keeps the block in the simplex up to
                // integrator drift; renormalize away the residual.
                let block = &mut z[off..off + d];
                let mut sum = 0.0;
                for x in block.iter_mut() {
                    *x = x.max(1e-12);
                    sum += *x;
                }
                for x in block.iter_mut() {
                    *x /= sum;
                }
            }
        }
        z[off + d] = z[off + d].max(lambda_floor);
    }
}

fn initial_state(game: &RobustGame, config: &LearnerConfig, layout: &Layout) -> Result<Vec<f64>> {
    let actions: Vec<Vec<f64>> = match &config.init_actions {
        Some(a) => {
            if a.len() != game.n_players() {
                return Err(Error::Structural(format!(
                    "{} initial actions for {} players",
                    a.len(),
                    game.n_players()
                )));
            }
            a.clone()
        }
        None => (0..game.n_players())
            .map(|j| game.decision_set(j).center())
            .collect(),
    };
    let mut z = vec![0.0; layout.total];
    let weights = game.base_scenarios().weights();
    for (j, (&off, &d)) in layout.offsets.iter().zip(&layout.dims).enumerate() {
        if actions[j].len() != d {
            return Err(Error::Structural(format!(
                "player {j} initial action has dimension {}, expected {d}",
                actions[j].len()
            )));
        }
        z[off..off + d].copy_from_slice(&actions[j]);
        z[off + d] = config.lambda0.max(config.lambda_floor);
        // μ₀: the base-measure mean loss at the initial profile.
        let mean_loss: f64 = game
            .base_scenarios()
            .points()
            .iter()
            .zip(weights)
            .map(|(omega, &w)| w * game.loss(j, &actions, omega))
            .sum();
        z[off + d + 1] = mean_loss;
    }
    Ok(z)
}

/// Run synchronous Bregman learning for all players.
///
/// Identical seeds give bit-identical trajectories; each player draws from
/// its own pseudo-random stream.
pub fn run_learning(game: &RobustGame, config: &LearnerConfig) -> Result<LearningOutput> {
    config.validate()?;
    let layout = Layout::of(game);
    let gen = joint_generator(game);
    let n = game.n_players();

    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(j as u64 + 1);
            rng
        })
        .collect();
    let swarm = match config.mode {
        LearnerMode::Deterministic => 0,
        LearnerMode::SingleParticle => 1,
        LearnerMode::Swarm => config.swarm_size,
    };
    let fixed_particles: Option<Vec<Vec<Vec<f64>>>> = match (config.mode, config.resample) {
        (LearnerMode::Deterministic, _) | (_, Resample::FreshPerStep) => None,
        (_, Resample::FixedSample) => Some(
            (0..n)
                .map(|j| draw_particles(&mut rngs[j], game, swarm))
                .collect(),
        ),
    };

    let mut z = initial_state(game, config, &layout)?;
    let mut u = vec![0.0; layout.total];
    let steps = (config.horizon / config.dt).round() as usize;
    let mut trajectories = vec![BregmanTrajectory::default(); n];

    record(game, &layout, config, 0.0, &z, &u, &mut trajectories)?;
    for k in 0..steps {
        let t = k as f64 * config.dt;
        let particles: Vec<Vec<Vec<f64>>> = match (&fixed_particles, config.mode) {
            (_, LearnerMode::Deterministic) => Vec::new(),
            (Some(fixed), _) => fixed.clone(),
            (None, _) => (0..n)
                .map(|j| draw_particles(&mut rngs[j], game, swarm))
                .collect(),
        };

        let grad = |zc: &[f64]| -> Vec<f64> {
            let profile = layout.decisions(zc, config.lambda_floor);
            let mut g = vec![f64::NAN; layout.total];
            for j in 0..n {
                let block = match config.mode {
                    LearnerMode::Deterministic => dual_objective_gradient(game, j, &profile),
                    _ => swarm_gradient(game, j, &profile, &particles[j]),
                };
                match block {
                    Ok(b) => {
                        let off = layout.offsets[j];
                        g[off..off + b.len()].copy_from_slice(&b);
                    }
                    Err(_) => return vec![f64::NAN; layout.total],
                }
            }
            g
        };

        let state = DynState { t, z: z.clone(), u: u.clone() };
        let next = bregman_step_substepped(&gen, &config.scaling, &state, &grad, config.dt, config.substeps)
            .map_err(|e| {
                Error::Run(format!(
                    "learning diverged at t = {t}: {e}; last finite state had actions {:?}",
                    layout
                        .decisions(&z, config.lambda_floor)
                        .iter()
                        .map(|d| d.action.clone())
                        .collect::<Vec<_>>()
                ))
            })?;
        z = next.z;
        u = next.u;
        project_state(game, &layout, &mut z, config.lambda_floor);
        let t1 = (k + 1) as f64 * config.dt;
        if (k + 1) % config.record_every == 0 || k + 1 == steps {
            record(game, &layout, config, t1, &z, &u, &mut trajectories)?;
        }
    }

    let decisions = layout.decisions(&z, config.lambda_floor);
    let velocities: Vec<Vec<f64>> = layout
        .offsets
        .iter()
        .zip(&layout.dims)
        .map(|(&off, &d)| u[off..off + d + 2].to_vec())
        .collect();
    Ok(LearningOutput {
        trajectories,
        final_state: JointState { decisions, velocities },
    })
}

fn draw_particles(rng: &mut ChaCha8Rng, game: &RobustGame, count: usize) -> Vec<Vec<f64>> {
    let points = game.base_scenarios().points();
    let weights = game.base_scenarios().weights();
    (0..count)
        .map(|_| {
            let x: f64 = rng.gen();
            let mut acc = 0.0;
            for (p, &w) in points.iter().zip(weights) {
                acc += w;
                if x < acc {
                    return p.clone();
                }
            }
            points[points.len() - 1].clone()
        })
        .collect()
}

fn record(
    game: &RobustGame,
    layout: &Layout,
    config: &LearnerConfig,
    t: f64,
    z: &[f64],
    u: &[f64],
    trajectories: &mut [BregmanTrajectory],
) -> Result<()> {
    let profile = layout.decisions(z, config.lambda_floor);
    for j in 0..game.n_players() {
        let off = layout.offsets[j];
        let d = layout.dims[j];
        let objective = dual_objective(game, j, &profile)?;
        let sample = TrajectorySample {
            t,
            z: z[off..off + d + 2].to_vec(),
            u: u[off..off + d + 2].to_vec(),
            objective,
            lyapunov: None,
            bound: None,
        };
        if t == 0.0 {
            // Initial sample carries t = 0; push directly.
            trajectories[j].samples.push(sample);
        } else {
            trajectories[j].push(sample);
        }
    }
    Ok(())
}

/// Classical baselines for the same per-player objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Gradient,
    Nesterov,
}

impl BaselineMethod {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "gradient" => Some(BaselineMethod::Gradient),
            "nesterov" => Some(BaselineMethod::Nesterov),
            _ => None,
        }
    }
}

/// Step-size schedule for the baselines. `Diminishing(c)` uses c/(k+1),
/// the schedule under which the classical sublinear rates are visible on a
/// quadratic; `Constant` is the plain fixed-step method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    Diminishing(f64),
}

impl StepSchedule {
    fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(s) => s,
            StepSchedule::Diminishing(c) => c / (k + 1) as f64,
        }
    }

    fn base(&self) -> f64 {
        match *self {
            StepSchedule::Constant(s) | StepSchedule::Diminishing(s) => s,
        }
    }
}

/// Configuration for [`run_baseline`].
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub schedule: StepSchedule,
    pub iters: usize,
    pub lambda_floor: f64,
    pub init_actions: Option<Vec<Vec<f64>>>,
    pub lambda0: f64,
    pub record_every: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, schedule: StepSchedule, iters: usize) -> Self {
        Self {
            method,
            schedule,
            iters,
            lambda_floor: 0.05,
            init_actions: None,
            lambda0: 1.0,
            record_every: 10,
        }
    }
}

/// Simultaneous-play descent on every player's dual objective in
/// (a_j, λ_j, μ_j), with the same projections and clamps as the Bregman
/// runs. Iteration k is reported at t = k so trajectories are comparable.
pub fn run_baseline(game: &RobustGame, config: &BaselineConfig) -> Result<LearningOutput> {
    if config.schedule.base() <= 0.0 {
        return Err(Error::Domain("baseline step must be positive".into()));
    }
    let layout = Layout::of(game);
    let learner_defaults = LearnerConfig {
        init_actions: config.init_actions.clone(),
        lambda0: config.lambda0,
        lambda_floor: config.lambda_floor,
        ..LearnerConfig::default()
    };
    let mut z = initial_state(game, &learner_defaults, &layout)?;
    let mut z_prev = z.clone();
    let n = game.n_players();
    let mut trajectories = vec![BregmanTrajectory::default(); n];

    let full_gradient = |zc: &[f64]| -> Result<Vec<f64>> {
        let profile = layout.decisions(zc, config.lambda_floor);
        let mut g = vec![0.0; layout.total];
        for j in 0..n {
            let block = dual_objective_gradient(game, j, &profile)?;
            let off = layout.offsets[j];
            g[off..off + block.len()].copy_from_slice(&block);
        }
        Ok(g)
    };

    record_baseline(game, &layout, config, 0, &z, &z_prev, &mut trajectories)?;
    for k in 0..config.iters {
        let step = config.schedule.at(k);
        let next = match config.method {
            BaselineMethod::Gradient => {
                let g = full_gradient(&z)?;
                z.iter().zip(&g).map(|(&x, &gi)| x - step * gi).collect::<Vec<f64>>()
            }
            BaselineMethod::Nesterov => {
                let momentum = k as f64 / (k + 3) as f64;
                let y: Vec<f64> = z
                    .iter()
                    .zip(&z_prev)
                    .map(|(&x, &xp)| x + momentum * (x - xp))
                    .collect();
                let g = full_gradient(&y)?;
                y.iter().zip(&g).map(|(&x, &gi)| x - step * gi).collect::<Vec<f64>>()
            }
        };
        z_prev = std::mem::replace(&mut z, next);
        project_state(game, &layout, &mut z, config.lambda_floor);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Run(format!("baseline diverged at iteration {k}")));
        }
        if (k + 1) % config.record_every == 0 || k + 1 == config.iters {
            record_baseline(game, &layout, config, k + 1, &z, &z_prev, &mut trajectories)?;
        }
    }

    let decisions = layout.decisions(&z, config.lambda_floor);
    let velocities: Vec<Vec<f64>> = layout
        .offsets
        .iter()
        .zip(&layout.dims)
        .map(|(&off, &d)| {
            z[off..off + d + 2]
                .iter()
                .zip(&z_prev[off..off + d + 2])
                .map(|(&a, &b)| a - b)
                .collect()
        })
        .collect();
    Ok(LearningOutput {
        trajectories,
        final_state: JointState { decisions, velocities },
    })
}

fn record_baseline(
    game: &RobustGame,
    layout: &Layout,
    config: &BaselineConfig,
    k: usize,
    z: &[f64],
    z_prev: &[f64],
    trajectories: &mut [BregmanTrajectory],
) -> Result<()> {
    let profile = layout.decisions(z, config.lambda_floor);
    for j in 0..game.n_players() {
        let off = layout.offsets[j];
        let d = layout.dims[j];
        let objective = dual_objective(game, j, &profile)?;
        trajectories[j].samples.push(TrajectorySample {
            t: k as f64,
            z: z[off..off + d + 2].to_vec(),
            u: z[off..off + d + 2]
                .iter()
                .zip(&z_prev[off..off + d + 2])
                .map(|(&a, &b)| a - b)
                .collect(),
            objective,
            lyapunov: None,
            bound: None,
        });
    }
    Ok(())
}

/// Check a best-response pseudo-potential candidate on finite probe grids:
/// every grid-argmin of the candidate in player j's coordinate must also
/// grid-minimize player j's own objective, for every assignment of the other
/// players' probe actions.
pub fn pseudo_potential_check(
    n_players: usize,
    objective: &dyn Fn(usize, &[Vec<f64>]) -> f64,
    candidate: &dyn Fn(&[Vec<f64>]) -> f64,
    grids: &[Vec<Vec<f64>>],
    tol: f64,
) -> bool {
    assert_eq!(grids.len(), n_players, "one probe grid per player");
    for j in 0..n_players {
        let other_counts: Vec<usize> = (0..n_players)
            .filter(|&i| i != j)
            .map(|i| grids[i].len())
            .collect();
        let mut other_idx = vec![0usize; other_counts.len()];
        loop {
            // Assemble the fixed profile of the other players.
            let mut profile: Vec<Vec<f64>> = Vec::with_capacity(n_players);
            let mut credit = 0;
            for i in 0..n_players {
                if i == j {
                    profile.push(Vec::new());
                } else {
                    profile.push(grids[i][other_idx[credit]].clone());
                    credit += 1;
                }
            }
            let cand_vals: Vec<f64> = grids[j]
                .iter()
                .map(|a| {
                    profile[j] = a.clone();
                    candidate(&profile)
                })
                .collect();
            let obj_vals: Vec<f64> = grids[j]
                .iter()
                .map(|a| {
                    profile[j] = a.clone();
                    objective(j, &profile)
                })
                .collect();
            let cand_min = cand_vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let obj_min = obj_vals.iter().cloned().fold(f64::INFINITY, f64::min);
            for (cv, ov) in cand_vals.iter().zip(&obj_vals) {
                if *cv <= cand_min + tol && *ov > obj_min + tol {
                    return false;
                }
            }
            // Advance the mixed-radix index over the other players.
            let mut done = true;
            for d in 0..other_idx.len() {
                other_idx[d] += 1;
                if other_idx[d] < other_counts[d] {
                    done = false;
                    break;
                }
                other_idx[d] = 0;
            }
            if other_counts.is_empty() || done {
                break;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::FDivergence;
    use crate::game::{PlayerLoss, ScenarioSet};
    use crate::games;

    fn small_log_quadratic(n_scen: usize, seed: u64) -> RobustGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..n_scen)
            .map(|_| vec![standard_normal(&mut rng), standard_normal(&mut rng)])
            .collect();
        let scen = ScenarioSet::empirical(points).unwrap();
        games::log_quadratic(FDivergence::kl(), 0.1, scen).unwrap()
    }

    fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller from two uniforms.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn profile_at(actions: &[Vec<f64>], lambda: f64, mu: f64) -> Vec<AugmentedDecision> {
        actions
            .iter()
            .map(|a| AugmentedDecision::new(a.clone(), lambda, mu))
            .collect()
    }

    #[test]
    fn integrand_gradient_constant_loss_stationarity() {
        // Constant loss, mu = c: d/dmu = 0, d/dlambda = rho, d/da = 0.
        let points: Vec<Vec<f64>> = vec![vec![0.5], vec![-0.3]];
        let scen = ScenarioSet::empirical(points).unwrap();
        let bx = || crate::game::DecisionSet::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        };
        let c = 0.8;
        let game = RobustGame::new(
            vec![bx(), bx()],
            vec![
                PlayerLoss::with_grad(move |_, _| c, |_, _| vec![0.0]),
                PlayerLoss::with_grad(move |_, _| c, |_, _| vec![0.0]),
            ],
            FDivergence::kl(),
            0.3,
            scen,
        )
        .unwrap();
        let profile = profile_at(&[vec![0.2], vec![-0.4]], 1.0, c);
        let g = integrand_gradient(&game, 0, &profile, &[0.5]).unwrap();
        assert!(g[0].abs() < 1e-15);
        assert!((g[1] - 0.3).abs() < 1e-12, "d/dlambda = {}", g[1]);
        assert!(g[2].abs() < 1e-12, "d/dmu = {}", g[2]);
    }

    #[test]
    fn integrand_gradient_matches_finite_differences() {
        let game = small_log_quadratic(4, 11);
        let omega = game.base_scenarios().points()[1].clone();
        let actions = vec![vec![0.9], vec![-1.3]];
        let (lambda, mu) = (0.7, 0.25);
        let profile = profile_at(&actions, lambda, mu);
        let analytic = integrand_gradient(&game, 0, &profile, &omega).unwrap();

        let h_at = |a0: f64, lam: f64, m: f64| -> f64 {
            let acts = vec![vec![a0], vec![-1.3]];
            let fam = game.divergence();
            let loss = game.loss(0, &acts, &omega);
            let xi = (loss - m) / lam;
            lam * (game.rho() + fam.f_at_one()) + m + lam * fam.conjugate(xi)
        };
        let h = 1e-6;
        let fd = [
            (h_at(0.9 + h, lambda, mu) - h_at(0.9 - h, lambda, mu)) / (2.0 * h),
            (h_at(0.9, lambda + h, mu) - h_at(0.9, lambda - h, mu)) / (2.0 * h),
            (h_at(0.9, lambda, mu + h) - h_at(0.9, lambda, mu - h)) / (2.0 * h),
        ];
        for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            let rel = (a - f).abs() / f.abs().max(1.0);
            assert!(rel < 1e-6, "component {i}: analytic {a} vs fd {f}");
        }
    }

    #[test]
    fn swarm_gradient_single_particle_and_exhaustive_cases() {
        let game = small_log_quadratic(5, 3);
        let profile = profile_at(&[vec![0.5], vec![0.7]], 1.0, 0.1);
        let omega = game.base_scenarios().points()[2].clone();
        let single = swarm_gradient(&game, 0, &profile, std::slice::from_ref(&omega)).unwrap();
        let direct = integrand_gradient(&game, 0, &profile, &omega).unwrap();
        assert_eq!(single, direct);

        // Exhaustive weighted enumeration reproduces the deterministic
        // gradient: with uniform weights, pass each atom once.
        let all: Vec<Vec<f64>> = game.base_scenarios().points().to_vec();
        let exhaustive = swarm_gradient(&game, 0, &profile, &all).unwrap();
        let deterministic = dual_objective_gradient(&game, 0, &profile).unwrap();
        for (a, b) in exhaustive.iter().zip(&deterministic) {
            assert!((a - b).abs() < 1e-12);
        }

        assert!(swarm_gradient(&game, 0, &profile, &[]).is_err());
    }

    #[test]
    fn dual_gradient_matches_dual_objective_finite_differences() {
        let game = small_log_quadratic(6, 21);
        let profile = profile_at(&[vec![0.8], vec![-0.5]], 0.9, 0.3);
        let grad = dual_objective_gradient(&game, 0, &profile).unwrap();
        let h = 1e-6;
        let eval = |da: f64, dl: f64, dm: f64| {
            let mut p = profile.clone();
            p[0].action[0] += da;
            p[0].lambda += dl;
            p[0].mu += dm;
            dual_objective(&game, 0, &p).unwrap()
        };
        let fd = [
            (eval(h, 0.0, 0.0) - eval(-h, 0.0, 0.0)) / (2.0 * h),
            (eval(0.0, h, 0.0) - eval(0.0, -h, 0.0)) / (2.0 * h),
            (eval(0.0, 0.0, h) - eval(0.0, 0.0, -h)) / (2.0 * h),
        ];
        for (a, f) in grad.iter().zip(&fd) {
            assert!((a - f).abs() < 1e-5, "{a} vs {f}");
        }
    }

    #[test]
    fn swarm_estimator_is_unbiased_and_variance_scales() {
        let game = small_log_quadratic(64, 17);
        let profile = profile_at(&[vec![1.1], vec![0.6]], 0.8, 0.4);
        let exact = dual_objective_gradient(&game, 0, &profile).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let reps = 1000;
        let sample_mean_trace = |n: usize, rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
            let mut mean = vec![0.0; exact.len()];
            let mut sum_sq = vec![0.0; exact.len()];
            for _ in 0..reps {
                let parts = draw_particles(rng, &game, n);
                let g = swarm_gradient(&game, 0, &profile, &parts).unwrap();
                for ((m, s), v) in mean.iter_mut().zip(&mut sum_sq).zip(&g) {
                    *m += v;
                    *s += v * v;
                }
            }
            let mut var_trace = 0.0;
            for (m, s) in mean.iter_mut().zip(&sum_sq) {
                *m /= reps as f64;
                var_trace += s / reps as f64 - *m * *m;
            }
            (mean, var_trace)
        };

        let (mean8, var8) = sample_mean_trace(8, &mut rng);
        let (_, var32) = sample_mean_trace(32, &mut rng);
        // Unbiased within a 3-sigma Monte Carlo band, componentwise.
        for (i, (m, e)) in mean8.iter().zip(&exact).enumerate() {
            let se = (var8 / 8.0 / reps as f64).sqrt().max(1e-12);
            assert!(
                (m - e).abs() < 4.0 * se + 1e-9,
                "component {i}: mean {m} vs exact {e} (se {se})"
            );
        }
        let ratio = var8 / var32;
        assert!(
            (3.0..=5.3).contains(&ratio),
            "variance ratio {ratio} outside i.i.d. band"
        );
    }

    #[test]
    fn deterministic_learning_drives_the_convex_game_to_the_origin() {
        let game = small_log_quadratic(16, 9);
        let config = LearnerConfig {
            mode: LearnerMode::Deterministic,
            init_actions: Some(vec![vec![2.0], vec![-1.5]]),
            horizon: 5.0,
            ..LearnerConfig::default()
        };
        let out = run_learning(&game, &config).unwrap();
        for d in &out.final_state.decisions {
            assert!(d.action[0].abs() < 0.05, "final action {}", d.action[0]);
            assert!(d.lambda >= config.lambda_floor);
        }
        // Objectives were recorded and are finite.
        for traj in &out.trajectories {
            assert!(traj.samples.iter().all(|s| s.objective.is_finite()));
        }
    }

    #[test]
    fn stochastic_runs_are_seed_deterministic() {
        let game = small_log_quadratic(24, 31);
        let config = LearnerConfig {
            mode: LearnerMode::Swarm,
            swarm_size: 16,
            seed: 99,
            horizon: 0.5,
            init_actions: Some(vec![vec![1.0], vec![1.0]]),
            ..LearnerConfig::default()
        };
        let a = run_learning(&game, &config).unwrap();
        let b = run_learning(&game, &config).unwrap();
        for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(ta.samples.len(), tb.samples.len());
            for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
                assert_eq!(sa.z, sb.z, "trajectories diverged despite equal seeds");
            }
        }
    }

    #[test]
    fn single_particle_equals_swarm_of_one() {
        let game = small_log_quadratic(12, 41);
        let base = LearnerConfig {
            swarm_size: 1,
            seed: 7,
            horizon: 0.3,
            init_actions: Some(vec![vec![0.8], vec![0.4]]),
            ..LearnerConfig::default()
        };
        let swarm = run_learning(
            &game,
            &LearnerConfig { mode: LearnerMode::Swarm, ..base.clone() },
        )
        .unwrap();
        let single = run_learning(
            &game,
            &LearnerConfig { mode: LearnerMode::SingleParticle, ..base },
        )
        .unwrap();
        for (ta, tb) in swarm.trajectories.iter().zip(&single.trajectories) {
            for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
                assert_eq!(sa.z, sb.z);
            }
        }
    }

    #[test]
    fn fixed_sample_mode_freezes_the_objective_draw() {
        let game = small_log_quadratic(12, 43);
        let config = LearnerConfig {
            mode: LearnerMode::Swarm,
            swarm_size: 4,
            resample: Resample::FixedSample,
            seed: 3,
            horizon: 0.2,
            init_actions: Some(vec![vec![0.5], vec![0.5]]),
            ..LearnerConfig::default()
        };
        // Mostly a smoke test: the run completes and stays finite.
        let out = run_learning(&game, &config).unwrap();
        assert!(out
            .final_state
            .decisions
            .iter()
            .all(|d| d.action[0].is_finite()));
    }

    #[test]
    fn projection_safety_along_recorded_samples() {
        let game = small_log_quadratic(16, 53);
        let config = LearnerConfig {
            mode: LearnerMode::Swarm,
            swarm_size: 8,
            seed: 4,
            horizon: 1.0,
            init_actions: Some(vec![vec![9.9], vec![-9.9]]),
            ..LearnerConfig::default()
        };
        let out = run_learning(&game, &config).unwrap();
        for (j, traj) in out.trajectories.iter().enumerate() {
            let d = game.decision_set(j).dim();
            for s in &traj.samples {
                assert!(game.decision_set(j).contains(&s.z[..d], 1e-9));
                assert!(s.z[d] >= config.lambda_floor - 1e-12, "lambda below floor");
            }
        }
    }

    #[test]
    fn baseline_gradient_rate_on_a_quadratic() {
        // Diminishing steps c/(k+1) on a 1-D quadratic: the residual decays
        // like k^{-c}; c = 0.8 lands the doubling ratio around 0.57.
        let mut z: f64 = 1.0;
        let mut history = vec![z];
        for k in 0..9600 {
            let step = 0.8 / (k + 1) as f64;
            z -= step * z;
            history.push(z);
        }
        let envelope = |t: usize| -> f64 {
            history[t..(t + t / 5 + 1).min(history.len())]
                .iter()
                .cloned()
                .map(f64::abs)
                .fold(0.0, f64::max)
        };
        let ratio = envelope(8000) / envelope(4000);
        assert!(
            (0.3..=0.7).contains(&ratio),
            "gradient tail ratio {ratio} outside the O(1/t) band"
        );
    }

    #[test]
    fn baseline_nesterov_rate_on_a_quadratic() {
        // Same quadratic with momentum (k-1)/(k+2) and step 1.5/k: envelope
        // ratio near 0.25, the O(1/t^2) signature.
        let mut z: f64 = 1.0;
        let mut z_prev = z;
        let mut history = vec![z];
        for k in 1..=9600usize {
            let momentum = (k - 1) as f64 / (k + 2) as f64;
            let y = z + momentum * (z - z_prev);
            let step = 1.5 / k as f64;
            let next = y - step * y;
            z_prev = z;
            z = next;
            history.push(z);
        }
        let envelope = |t: usize| -> f64 {
            history[t..(t + t / 5 + 1).min(history.len())]
                .iter()
                .cloned()
                .map(f64::abs)
                .fold(0.0, f64::max)
        };
        let ratio = envelope(8000) / envelope(4000);
        assert!(
            (0.15..=0.35).contains(&ratio),
            "nesterov tail ratio {ratio} outside the O(1/t^2) band"
        );
    }

    #[test]
    fn baseline_runs_on_the_game_and_zero_gradient_is_stationary() {
        let game = small_log_quadratic(8, 61);
        // At the origin with matching mu the action gradient vanishes;
        // lambda still drifts to its floor, so probe only the action.
        let config = BaselineConfig {
            init_actions: Some(vec![vec![0.0], vec![0.0]]),
            ..BaselineConfig::new(BaselineMethod::Gradient, StepSchedule::Constant(0.05), 200)
        };
        let out = run_baseline(&game, &config).unwrap();
        for d in &out.final_state.decisions {
            assert!(d.action[0].abs() < 1e-12, "action moved: {}", d.action[0]);
        }

        let nesterov = BaselineConfig {
            init_actions: Some(vec![vec![1.5], vec![-1.0]]),
            ..BaselineConfig::new(BaselineMethod::Nesterov, StepSchedule::Constant(0.05), 3000)
        };
        let out = run_baseline(&game, &nesterov).unwrap();
        for d in &out.final_state.decisions {
            assert!(d.action[0].abs() < 0.05, "nesterov final {}", d.action[0]);
        }
    }

    #[test]
    fn pseudo_potential_identical_interest_and_counterexample() {
        // Identical-interest game: the shared objective is its own
        // pseudo-potential.
        let shared = |a: &[Vec<f64>]| (a[0][0] - 1.0).powi(2) + (a[1][0] + 0.5).powi(2);
        let grid: Vec<Vec<f64>> = (-8..=8).map(|i| vec![i as f64 / 4.0]).collect();
        let grids = vec![grid.clone(), grid.clone()];
        assert!(pseudo_potential_check(
            2,
            &|_j, a| shared(a),
            &shared,
            &grids,
            1e-6,
        ));

        // Candidate whose argmin differs from player 0's argmin.
        let bad_candidate = |a: &[Vec<f64>]| (a[0][0] + 2.0).powi(2) + (a[1][0] + 0.5).powi(2);
        assert!(!pseudo_potential_check(
            2,
            &|_j, a| shared(a),
            &bad_candidate,
            &grids,
            1e-6,
        ));
    }

    #[test]
    fn pseudo_potential_holds_for_the_log_quadratic_duals() {
        // Both players share the same loss, so player 0's dual objective is
        // a pseudo-potential for the pair (multipliers held fixed).
        let game = small_log_quadratic(6, 71);
        let (lambda, mu) = (1.0, 0.2);
        let objective = |j: usize, a: &[Vec<f64>]| {
            let profile = profile_at(a, lambda, mu);
            dual_objective(&game, j, &profile).unwrap()
        };
        let candidate = |a: &[Vec<f64>]| {
            let profile = profile_at(a, lambda, mu);
            dual_objective(&game, 0, &profile).unwrap()
        };
        let grid: Vec<Vec<f64>> = (-6..=6).map(|i| vec![i as f64 / 3.0]).collect();
        let grids = vec![grid.clone(), grid];
        assert!(pseudo_potential_check(2, &objective, &candidate, &grids, 1e-6));
    }
}
