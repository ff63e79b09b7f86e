//! Built-in robust games, registered by name for the experiment driver.
//!
//! Two instances ship with the crate:
//!
//! * `log_quadratic` — two players with the shared loss
//!   `log(1 + ω₁²a₁² + ω₂²a₂²)` on scalar actions. Every scenario gradient
//!   points away from the origin, so the robust equilibrium is (0, 0).
//! * `multimodal` — two players on the box [0, 10]² with the shared loss
//!   `log(20 + ω² − sin(a₁)sin(a₂)√(a₁a₂))`. The inner payoff term factors
//!   as s(a₁)s(a₂) with s(x) = sin(x)√x, whose best box value sits near
//!   x ≈ 7.917; the profile (7.917, 7.917) is the global robust equilibrium
//!   and (4.816, 4.816) a secondary local one.

use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::game::{DecisionSet, PlayerLoss, RobustGame, ScenarioSet};

/// Names accepted by [`by_name`].
pub const GAME_NAMES: [&str; 2] = ["log_quadratic", "multimodal"];

/// Scenario dimension each built-in game expects.
pub fn scenario_dim(name: &str) -> Option<usize> {
    match name {
        "log_quadratic" => Some(2),
        "multimodal" => Some(1),
        _ => None,
    }
}

/// Construct a built-in game over the given scenario set.
pub fn by_name(
    name: &str,
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
) -> Result<RobustGame> {
    match name {
        "log_quadratic" => log_quadratic(divergence, rho, scenarios),
        "multimodal" => multimodal(divergence, rho, scenarios),
        _ => Err(Error::Structural(format!("unknown game '{name}'"))),
    }
}

/// As [`by_name`] but with caller-supplied per-player action bounds, for
/// inline game definitions.
pub fn by_name_with_bounds(
    name: &str,
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
    bounds: [(f64, f64); 2],
) -> Result<RobustGame> {
    match name {
        "log_quadratic" => log_quadratic_in(divergence, rho, scenarios, bounds),
        "multimodal" => multimodal_in(divergence, rho, scenarios, bounds),
        _ => Err(Error::Structural(format!("unknown game '{name}'"))),
    }
}

/// Two-player game with loss log(1 + ω₁²a₁² + ω₂²a₂²) shared by both
/// players; actions are scalars boxed to [−10, 10].
pub fn log_quadratic(
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
) -> Result<RobustGame> {
    log_quadratic_in(divergence, rho, scenarios, [(-10.0, 10.0), (-10.0, 10.0)])
}

/// [`log_quadratic`] with custom action bounds.
pub fn log_quadratic_in(
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
    bounds: [(f64, f64); 2],
) -> Result<RobustGame> {
    check_scenario_dim(&scenarios, 2, "log_quadratic")?;
    let value = |a: &[Vec<f64>], w: &[f64]| {
        (1.0 + w[0] * w[0] * a[0][0] * a[0][0] + w[1] * w[1] * a[1][0] * a[1][0]).ln()
    };
    let grad = |j: usize| {
        move |a: &[Vec<f64>], w: &[f64]| -> Vec<f64> {
            let s = 1.0 + w[0] * w[0] * a[0][0] * a[0][0] + w[1] * w[1] * a[1][0] * a[1][0];
            vec![2.0 * w[j] * w[j] * a[j][0] / s]
        }
    };
    let bx = |j: usize| DecisionSet::Box {
        lower: vec![bounds[j].0],
        upper: vec![bounds[j].1],
    };
    RobustGame::new(
        vec![bx(0), bx(1)],
        vec![
            PlayerLoss::with_grad(value, grad(0)),
            PlayerLoss::with_grad(value, grad(1)),
        ],
        divergence,
        rho,
        scenarios,
    )
}

/// Inner payoff term of the multimodal game: sin(a₁)sin(a₂)√(a₁a₂).
pub fn multimodal_inner(a1: f64, a2: f64) -> f64 {
    half_term(a1) * half_term(a2)
}

/// s(x) = sin(x)√x on x ≥ 0 (zero below).
fn half_term(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.sin() * x.sqrt()
    }
}

/// s'(x) = √x cos(x) + sin(x)/(2√x); the limit at 0⁺ is 0.
fn half_term_prime(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        let r = x.sqrt();
        r * x.cos() + x.sin() / (2.0 * r)
    }
}

/// Two-player game with loss log(20 + ω² − sin(a₁)sin(a₂)√(a₁a₂)) shared by
/// both players; actions on [0, 10].
pub fn multimodal(
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
) -> Result<RobustGame> {
    multimodal_in(divergence, rho, scenarios, [(0.0, 10.0), (0.0, 10.0)])
}

/// [`multimodal`] with custom action bounds.
pub fn multimodal_in(
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
    bounds: [(f64, f64); 2],
) -> Result<RobustGame> {
    check_scenario_dim(&scenarios, 1, "multimodal")?;
    let value = |a: &[Vec<f64>], w: &[f64]| {
        (20.0 + w[0] * w[0] - multimodal_inner(a[0][0], a[1][0])).ln()
    };
    let grad = |j: usize| {
        move |a: &[Vec<f64>], w: &[f64]| -> Vec<f64> {
            let own = a[j][0];
            let other = a[1 - j][0];
            let denom = 20.0 + w[0] * w[0] - multimodal_inner(a[0][0], a[1][0]);
            vec![-half_term_prime(own) * half_term(other) / denom]
        }
    };
    let bx = |j: usize| DecisionSet::Box {
        lower: vec![bounds[j].0],
        upper: vec![bounds[j].1],
    };
    RobustGame::new(
        vec![bx(0), bx(1)],
        vec![
            PlayerLoss::with_grad(value, grad(0)),
            PlayerLoss::with_grad(value, grad(1)),
        ],
        divergence,
        rho,
        scenarios,
    )
}

fn check_scenario_dim(scenarios: &ScenarioSet, dim: usize, name: &str) -> Result<()> {
    if scenarios.points().iter().any(|p| p.len() != dim) {
        return Err(Error::Structural(format!(
            "{name} expects {dim}-dimensional scenarios"
        )));
    }
    Ok(())
}
