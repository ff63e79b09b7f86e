//! The distributionally robust game model and its dual-reduced per-player
//! objective.
//!
//! Each player j faces the worst-case expected loss over an f-divergence
//! ball of radius ρ around a base scenario measure. The inner supremum over
//! reweightings reduces, through the likelihood reformulation and Fenchel
//! conjugacy, to a finite-dimensional problem in two multipliers:
//!
//! ```text
//! inf_{λ ≥ 0, μ}  λ(ρ + f(1)) + μ + Σ_k w_k λ f*((l_j(a, ω_k) − μ)/λ)
//! ```
//!
//! This module owns the game types, the (λ, μ) solver, the worst-case
//! distribution recovery, the variance-based first-order approximation of
//! the robust value, equilibrium certification by grid probing, and the
//! mixed extension of finite games.

use crate::divergence::{DiscreteMeasure, FDivergence};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Multiplier floor: the dual integrand λ f*((l − μ)/λ) is a perspective
/// function, singular at λ = 0, so solves clamp λ here and flag the clamp.
pub const LAMBDA_MIN: f64 = 1e-8;

/// Upper cap for the adaptive λ bracket.
pub const LAMBDA_MAX: f64 = 1e8;

/// A finite weighted collection of scenario points.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ScenarioSet {
    /// Empirical set: uniform weight 1/N on each point.
    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Structural("scenario set must be nonempty".into()));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(Self { points, weights })
    }

    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Structural(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::Structural("scenario set must be nonempty".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "scenario weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.points.clone(), self.weights.clone())
            .expect("scenario set is a valid measure by construction")
    }
}

/// A player's feasible action set.
#[derive(Debug, Clone)]
pub enum DecisionSet {
    /// Axis-aligned box given by componentwise bounds.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Probability simplex of the given dimension (mixed strategies).
    Simplex { dim: usize },
}

impl DecisionSet {
    pub fn dim(&self) -> usize {
        match self {
            DecisionSet::Box { lower, .. } => lower.len(),
            DecisionSet::Simplex { dim } => *dim,
        }
    }

    /// Euclidean projection onto the set, in place.
    pub fn project(&self, a: &mut [f64]) {
        match self {
            DecisionSet::Box { lower, upper } => {
                for ((x, &lo), &hi) in a.iter_mut().zip(lower).zip(upper) {
                    *x = x.clamp(lo, hi);
                }
            }
            DecisionSet::Simplex { .. } => project_simplex(a),
        }
    }

    pub fn contains(&self, a: &[f64], tol: f64) -> bool {
        match self {
            DecisionSet::Box { lower, upper } => a
                .iter()
                .zip(lower)
                .zip(upper)
                .all(|((&x, &lo), &hi)| x >= lo - tol && x <= hi + tol),
            DecisionSet::Simplex { dim } => {
                a.len() == *dim
                    && a.iter().all(|&x| x >= -tol)
                    && (a.iter().sum::<f64>() - 1.0).abs() <= tol
            }
        }
    }

    /// Box midpoint or simplex barycenter; the default initial action.
    pub fn center(&self) -> Vec<f64> {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| 0.5 * (lo + hi))
                .collect(),
            DecisionSet::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based threshold).
pub fn project_simplex(a: &mut [f64]) {
    let mut sorted: Vec<f64> = a.to_vec();
    sorted.sort_by(|p, q| q.partial_cmp(p).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        }
    }
    for x in a.iter_mut() {
        *x = (*x - threshold).max(0.0);
    }
}

type LossFn = Arc<dyn Fn(&[Vec<f64>], &[f64]) -> f64 + Send + Sync>;
type LossGradFn = Arc<dyn Fn(&[Vec<f64>], &[f64]) -> Vec<f64> + Send + Sync>;

/// A player's scenario loss l_j(a, ω) with an optional analytic gradient in
/// the player's own action block.
#[derive(Clone)]
pub struct PlayerLoss {
    value: LossFn,
    grad_own: Option<LossGradFn>,
}

impl PlayerLoss {
    pub fn new(value: impl Fn(&[Vec<f64>], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            grad_own: None,
        }
    }

    pub fn with_grad(
        value: impl Fn(&[Vec<f64>], &[f64]) -> f64 + Send + Sync + 'static,
        grad_own: impl Fn(&[Vec<f64>], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad_own: Some(Arc::new(grad_own)),
        }
    }
}

/// A player's action joined with its dual multipliers (λ, μ).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDecision {
    pub action: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
}

impl AugmentedDecision {
    pub fn new(action: Vec<f64>, lambda: f64, mu: f64) -> Self {
        Self { action, lambda, mu }
    }
}

/// An n-player distributionally robust game.
#[derive(Clone)]
pub struct RobustGame {
    decision_sets: Vec<DecisionSet>,
    losses: Vec<PlayerLoss>,
    divergence: FDivergence,
    rho: f64,
    base_scenarios: ScenarioSet,
}

impl RobustGame {
    pub fn new(
        decision_sets: Vec<DecisionSet>,
        losses: Vec<PlayerLoss>,
        divergence: FDivergence,
        rho: f64,
        base_scenarios: ScenarioSet,
    ) -> Result<Self> {
        let n = decision_sets.len();
        if n < 2 {
            return Err(Error::Structural(format!(
                "a game needs at least two players, got {n}"
            )));
        }
        if losses.len() != n {
            return Err(Error::Structural(format!(
                "{n} decision sets but {} loss functions",
                losses.len()
            )));
        }
        if rho <= 0.0 {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        for (j, set) in decision_sets.iter().enumerate() {
            if let DecisionSet::Box { lower, upper } = set {
                if lower.len() != upper.len()
                    || lower.iter().zip(upper).any(|(lo, hi)| lo > hi)
                {
                    return Err(Error::Structural(format!(
                        "player {j} has inconsistent box bounds"
                    )));
                }
            }
        }
        Ok(Self {
            decision_sets,
            losses,
            divergence,
            rho,
            base_scenarios,
        })
    }

    pub fn n_players(&self) -> usize {
        self.decision_sets.len()
    }

    pub fn decision_set(&self, j: usize) -> &DecisionSet {
        &self.decision_sets[j]
    }

    pub fn divergence(&self) -> &FDivergence {
        &self.divergence
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn base_scenarios(&self) -> &ScenarioSet {
        &self.base_scenarios
    }

    pub fn loss(&self, j: usize, profile: &[Vec<f64>], omega: &[f64]) -> f64 {
        (self.losses[j].value)(profile, omega)
    }

    /// Gradient of l_j in player j's own action; analytic when supplied,
    /// otherwise central finite differences.
    pub fn loss_grad_own(&self, j: usize, profile: &[Vec<f64>], omega: &[f64]) -> Vec<f64> {
        if let Some(grad) = &self.losses[j].grad_own {
            return grad(profile, omega);
        }
        let dim = profile[j].len();
        let mut grad = vec![0.0; dim];
        let mut work = profile.to_vec();
        for d in 0..dim {
            let h = 1e-6 * (1.0 + profile[j][d].abs());
            work[j][d] = profile[j][d] + h;
            let up = (self.losses[j].value)(&work, omega);
            work[j][d] = profile[j][d] - h;
            let down = (self.losses[j].value)(&work, omega);
            work[j][d] = profile[j][d];
            grad[d] = (up - down) / (2.0 * h);
        }
        grad
    }

    /// Player j's loss at every base scenario atom.
    pub fn scenario_losses(&self, j: usize, profile: &[Vec<f64>]) -> Vec<f64> {
        self.base_scenarios
            .points()
            .iter()
            .map(|omega| self.loss(j, profile, omega))
            .collect()
    }
}

impl std::fmt::Debug for RobustGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RobustGame")
            .field("players", &self.n_players())
            .field("divergence", &self.divergence.name())
            .field("rho", &self.rho)
            .field("scenarios", &self.base_scenarios.len())
            .finish()
    }
}

/// Minimized dual objective with its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    pub lambda: f64,
    pub mu: f64,
    /// λ was pinned at [`LAMBDA_MIN`] with a positive λ-gradient: the
    /// divergence budget never binds (or binds degenerately) at this profile.
    pub clamped: bool,
}

/// The dual objective
/// λ(ρ + f(1)) + μ + Σ_k w_k λ f*((l_j(a, ω_k) − μ)/λ)
/// evaluated at player j's multipliers from `profile`.
pub fn dual_objective(
    game: &RobustGame,
    j: usize,
    profile: &[AugmentedDecision],
) -> Result<f64> {
    let lambda = profile[j].lambda;
    if lambda < LAMBDA_MIN {
        return Err(Error::Domain(format!(
            "lambda = {lambda} is below the perspective floor {LAMBDA_MIN}"
        )));
    }
    let actions: Vec<Vec<f64>> = profile.iter().map(|d| d.action.clone()).collect();
    let losses = game.scenario_losses(j, &actions);
    Ok(dual_objective_from_losses(
        &losses,
        game.base_scenarios.weights(),
        &game.divergence,
        game.rho,
        lambda,
        profile[j].mu,
    ))
}

fn dual_objective_from_losses(
    losses: &[f64],
    weights: &[f64],
    fam: &FDivergence,
    rho: f64,
    lambda: f64,
    mu: f64,
) -> f64 {
    let expected: f64 = losses
        .iter()
        .zip(weights)
        .map(|(&l, &w)| w * lambda * fam.conjugate((l - mu) / lambda))
        .sum();
    lambda * (rho + fam.f_at_one()) + mu + expected
}

/// Solve the inner (λ, μ) minimization for a fixed loss vector.
///
/// For the KL family μ has the closed form μ*(λ) = λ log Σ w e^{l/λ}
/// (evaluated with a max shift) and the optimal λ matches the tilt
/// divergence to ρ; other families get nested golden-section solves.
pub fn dual_solve(
    losses: &[f64],
    weights: &[f64],
    fam: &FDivergence,
    rho: f64,
) -> Result<DualSolution> {
    if losses.is_empty() || losses.len() != weights.len() {
        return Err(Error::Structural(format!(
            "losses ({}) and weights ({}) must be nonempty and equal length",
            losses.len(),
            weights.len()
        )));
    }
    if rho <= 0.0 {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if fam.name() == "kl" {
        dual_solve_kl(losses, weights, rho)
    } else {
        dual_solve_generic(losses, weights, fam, rho)
    }
}

fn dual_solve_kl(losses: &[f64], weights: &[f64], rho: f64) -> Result<DualSolution> {
    let lmax = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // μ*(λ) = λ log Σ w e^{l/λ}, max-shifted so exponents stay ≤ 0.
    let mu_star = |lambda: f64| -> f64 {
        let s: f64 = weights
            .iter()
            .zip(losses)
            .map(|(&w, &l)| w * ((l - lmax) / lambda).exp())
            .sum();
        lmax + lambda * s.ln()
    };
    // KL of the exponentially tilted measure against the base.
    let kl_tilt = |lambda: f64| -> f64 {
        let raw: Vec<f64> = weights
            .iter()
            .zip(losses)
            .map(|(&w, &l)| w * ((l - lmax) / lambda).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        raw.iter()
            .zip(losses)
            .map(|(&r, &l)| {
                let q = r / z;
                if q > 0.0 {
                    q * ((l - lmax) / lambda - z.ln())
                } else {
                    0.0
                }
            })
            .sum()
    };
    let value = |lambda: f64| lambda * rho + mu_star(lambda);

    // ∂value/∂λ = ρ − KL(tilt_λ || base); KL is decreasing in λ, so value is
    // convex with its minimum where the tilt exhausts the budget.
    if kl_tilt(LAMBDA_MIN) <= rho {
        let lambda = LAMBDA_MIN;
        return Ok(DualSolution {
            value: value(lambda),
            lambda,
            mu: mu_star(lambda),
            clamped: true,
        });
    }
    let mut hi = 1.0;
    while kl_tilt(hi) > rho {
        hi *= 2.0;
        if hi > LAMBDA_MAX {
            return Err(Error::Consistency(format!(
                "lambda bracket exceeded {LAMBDA_MAX} without matching the budget"
            )));
        }
    }
    let mut lo = LAMBDA_MIN;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kl_tilt(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-14 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok(DualSolution {
        value: value(lambda),
        lambda,
        mu: mu_star(lambda),
        clamped: false,
    })
}

fn dual_solve_generic(
    losses: &[f64],
    weights: &[f64],
    fam: &FDivergence,
    rho: f64,
) -> Result<DualSolution> {
    let lmin = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // For any family normalized so f'(1) = 0, the μ-optimality condition
    // Σ w f*'((l − μ)/λ) = 1 pins μ* into [min l, max l].
    let best_mu = |lambda: f64| -> (f64, f64) {
        let obj = |mu: f64| {
            dual_objective_from_losses(losses, weights, fam, rho, lambda, mu)
        };
        let (mu, v) = golden_min(obj, lmin - 1e-9, lmax + 1e-9, 1e-12);
        (mu, v)
    };
    let phi = |lambda: f64| best_mu(lambda).1;

    // Bracket the λ minimum: double until the profile turns upward.
    let mut hi = 1.0;
    while phi(2.0 * hi) <= phi(hi) {
        hi *= 2.0;
        if hi > LAMBDA_MAX {
            break;
        }
    }
    hi = (2.0 * hi).min(LAMBDA_MAX);
    // Golden section in log-λ; φ is convex, hence unimodal in any monotone
    // reparameterization.
    let (log_lambda, _) = golden_min(
        |t: f64| phi(t.exp()),
        LAMBDA_MIN.ln(),
        hi.ln(),
        1e-12,
    );
    let mut lambda = log_lambda.exp();
    // Detect the clamp: positive slope at the floor means the interior
    // minimum does not exist.
    let clamped = {
        let at_floor = phi(LAMBDA_MIN);
        let nearby = phi(LAMBDA_MIN * 4.0);
        if at_floor <= phi(lambda) {
            lambda = LAMBDA_MIN;
            nearby > at_floor
        } else {
            false
        }
    };
    let (mu, value) = best_mu(lambda);
    Ok(DualSolution {
        value,
        lambda,
        mu,
        clamped,
    })
}

/// Golden-section minimization of a unimodal function on [a, b].
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let scale = 1.0 + a.abs().max(b.abs());
    while b - a > tol * scale {
        if f1 > f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Worst-case expected loss of player j at a fixed action profile: the dual
/// objective minimized over (λ, μ). Strong duality on the inner problem makes
/// this equal to sup over the divergence ball of the expected loss.
pub fn robust_value_dual(
    game: &RobustGame,
    j: usize,
    actions: &[Vec<f64>],
) -> Result<DualSolution> {
    let losses = game.scenario_losses(j, actions);
    dual_solve(
        &losses,
        game.base_scenarios.weights(),
        &game.divergence,
        game.rho,
    )
}

/// The adversary's maximizing distribution m̃* recovered from the dual
/// multipliers: m̃*_k = w_k (f')⁻¹((l_k − μ*)/λ*).
///
/// The raw likelihood must integrate to 1 within 1e-6 (a consistency check
/// on the dual solve); the small residual is then renormalized away.
pub fn worst_case_distribution(
    game: &RobustGame,
    j: usize,
    actions: &[Vec<f64>],
) -> Result<DiscreteMeasure> {
    let losses = game.scenario_losses(j, actions);
    let weights = game.base_scenarios.weights();
    let sol = dual_solve(&losses, weights, &game.divergence, game.rho)?;
    let likelihood = crate::divergence::recover_likelihood(
        &game.divergence,
        &losses,
        sol.lambda,
        sol.mu,
    )?;
    let mut tilted: Vec<f64> = weights
        .iter()
        .zip(&likelihood)
        .map(|(&w, &l)| w * l)
        .collect();
    let total: f64 = tilted.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Consistency(format!(
            "recovered likelihood integrates to {total}; the dual solve is inaccurate"
        )));
    }
    for t in &mut tilted {
        *t /= total;
    }
    DiscreteMeasure::new(game.base_scenarios.points().to_vec(), tilted)
}

/// First-order expansion of the robust value around the empirical measure:
/// E[l_j] + sqrt(ρ_N · var[l_j]).
pub fn variance_approximation(
    game: &RobustGame,
    j: usize,
    actions: &[Vec<f64>],
    rho_n: f64,
) -> f64 {
    let losses = game.scenario_losses(j, actions);
    let weights = game.base_scenarios.weights();
    let mean: f64 = losses.iter().zip(weights).map(|(&l, &w)| w * l).sum();
    let var: f64 = losses
        .iter()
        .zip(weights)
        .map(|(&l, &w)| w * (l - mean) * (l - mean))
        .sum();
    mean + (rho_n * var).sqrt()
}

/// How unilateral deviations are probed during equilibrium certification.
#[derive(Debug, Clone)]
pub enum ProbeSpec {
    /// Dense grid with the given per-axis resolution; boxes of dimension ≤ 2.
    Grid { resolution: usize },
    /// Explicit candidate deviations, one list shared by all players.
    Points(Vec<Vec<f64>>),
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec::Grid { resolution: 200 }
    }
}

/// The most profitable deviation found for one player.
#[derive(Debug, Clone)]
pub struct DeviationRecord {
    pub player: usize,
    pub action: Vec<f64>,
    pub robust_value: f64,
    /// Positive when the deviation beats the candidate profile.
    pub improvement: f64,
}

/// Certificate produced by [`is_robust_equilibrium`].
#[derive(Debug, Clone)]
pub struct EquilibriumCertificate {
    pub equilibrium: bool,
    pub eta: f64,
    pub worst_deviations: Vec<DeviationRecord>,
    /// True when deviations were probed on a finite grid, so the verdict is
    /// only as fine as the grid.
    pub grid_limited: bool,
}

/// Check the equilibrium inequalities at `actions`: no player may improve its
/// robust value by more than `eta` through any probed unilateral deviation.
pub fn is_robust_equilibrium(
    game: &RobustGame,
    actions: &[Vec<f64>],
    eta: f64,
    probe: &ProbeSpec,
) -> Result<EquilibriumCertificate> {
    if eta <= 0.0 {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    let mut worst = Vec::with_capacity(game.n_players());
    let mut grid_limited = false;
    for j in 0..game.n_players() {
        let baseline = robust_value_dual(game, j, actions)?.value;
        let candidates: Vec<Vec<f64>> = match probe {
            ProbeSpec::Points(points) => points.clone(),
            ProbeSpec::Grid { resolution } => {
                grid_limited = true;
                grid_probe(game.decision_set(j), *resolution)?
            }
        };
        let mut record = DeviationRecord {
            player: j,
            action: actions[j].clone(),
            robust_value: baseline,
            improvement: 0.0,
        };
        let mut deviated = actions.to_vec();
        for candidate in candidates {
            deviated[j] = candidate;
            let value = robust_value_dual(game, j, &deviated)?.value;
            let improvement = baseline - value;
            if improvement > record.improvement {
                record = DeviationRecord {
                    player: j,
                    action: deviated[j].clone(),
                    robust_value: value,
                    improvement,
                };
            }
        }
        deviated[j] = actions[j].clone();
        worst.push(record);
    }
    let equilibrium = worst.iter().all(|r| r.improvement <= eta);
    Ok(EquilibriumCertificate {
        equilibrium,
        eta,
        worst_deviations: worst,
        grid_limited,
    })
}

fn grid_probe(set: &DecisionSet, resolution: usize) -> Result<Vec<Vec<f64>>> {
    let DecisionSet::Box { lower, upper } = set else {
        return Err(Error::Domain(
            "grid probing needs a box decision set; supply explicit probe points".into(),
        ));
    };
    let dim = lower.len();
    if dim > 2 {
        return Err(Error::Domain(format!(
            "grid probing supports boxes of dimension <= 2, got {dim}"
        )));
    }
    if resolution < 2 {
        return Err(Error::Structural("probe resolution must be at least 2".into()));
    }
    let axis = |d: usize| -> Vec<f64> {
        (0..resolution)
            .map(|i| lower[d] + (upper[d] - lower[d]) * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    Ok(match dim {
        1 => axis(0).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let (a0, a1) = (axis(0), axis(1));
            a0.iter()
                .flat_map(|&x| a1.iter().map(move |&y| vec![x, y]))
                .collect()
        }
    })
}

type TensorFn = Arc<dyn Fn(&[usize], &[f64]) -> f64 + Send + Sync>;

/// A player's loss over pure action profiles, possibly scenario-dependent.
#[derive(Clone)]
pub struct LossTensor {
    pub action_counts: Vec<usize>,
    entry: TensorFn,
}

impl LossTensor {
    pub fn new(
        action_counts: Vec<usize>,
        entry: impl Fn(&[usize], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            action_counts,
            entry: Arc::new(entry),
        }
    }

    pub fn entry(&self, profile: &[usize], omega: &[f64]) -> f64 {
        (self.entry)(profile, omega)
    }
}

/// Lift finite-action tensors to a robust game over mixed strategies: each
/// decision set becomes a simplex and each loss becomes the multilinear
/// expectation of the tensor under the mixed profile, per scenario.
pub fn mixed_extension(
    tensors: &[LossTensor],
    divergence: FDivergence,
    rho: f64,
    scenarios: ScenarioSet,
) -> Result<RobustGame> {
    let n = tensors.len();
    if n < 2 {
        return Err(Error::Structural(format!(
            "mixed extension needs at least two players, got {n}"
        )));
    }
    let counts = tensors[0].action_counts.clone();
    if counts.len() != n || counts.iter().any(|&c| c == 0) {
        return Err(Error::Structural(
            "tensor action counts must list one positive count per player".into(),
        ));
    }
    for (j, t) in tensors.iter().enumerate() {
        if t.action_counts != counts {
            return Err(Error::Structural(format!(
                "tensor {j} disagrees on the action counts"
            )));
        }
    }

    let decision_sets: Vec<DecisionSet> = counts
        .iter()
        .map(|&dim| DecisionSet::Simplex { dim })
        .collect();

    let losses: Vec<PlayerLoss> = (0..n)
        .map(|j| {
            let tensor = tensors[j].clone();
            let counts_v = counts.clone();
            let counts_g = counts.clone();
            let tensor_g = tensors[j].clone();
            PlayerLoss::with_grad(
                move |profile: &[Vec<f64>], omega: &[f64]| {
                    expect_tensor(&tensor, &counts_v, profile, omega)
                },
                move |profile: &[Vec<f64>], omega: &[f64]| {
                    expect_tensor_grad(&tensor_g, &counts_g, j, profile, omega)
                },
            )
        })
        .collect();

    RobustGame::new(decision_sets, losses, divergence, rho, scenarios)
}

fn expect_tensor(
    tensor: &LossTensor,
    counts: &[usize],
    profile: &[Vec<f64>],
    omega: &[f64],
) -> f64 {
    let mut total = 0.0;
    let mut idx = vec![0usize; counts.len()];
    loop {
        let mut p = 1.0;
        for (i, &k) in idx.iter().enumerate() {
            p *= profile[i][k];
        }
        if p != 0.0 {
            total += p * tensor.entry(&idx, omega);
        }
        if !next_index(&mut idx, counts) {
            return total;
        }
    }
}

fn expect_tensor_grad(
    tensor: &LossTensor,
    counts: &[usize],
    j: usize,
    profile: &[Vec<f64>],
    omega: &[f64],
) -> Vec<f64> {
    let mut grad = vec![0.0; counts[j]];
    let mut idx = vec![0usize; counts.len()];
    loop {
        let mut p = 1.0;
        for (i, &k) in idx.iter().enumerate() {
            if i != j {
                p *= profile[i][k];
            }
        }
        if p != 0.0 {
            grad[idx[j]] += p * tensor.entry(&idx, omega);
        }
        if !next_index(&mut idx, counts) {
            return grad;
        }
    }
}

fn next_index(idx: &mut [usize], counts: &[usize]) -> bool {
    for d in 0..idx.len() {
        idx[d] += 1;
        if idx[d] < counts[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// A game whose player-0 loss reads the scenario value directly, so the
    /// dual machinery can be driven by an arbitrary loss/weight table.
    fn table_game(values: &[f64], weights: &[f64], rho: f64) -> RobustGame {
        let points: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let scenarios = ScenarioSet::weighted(points, weights.to_vec()).unwrap();
        let unit_box = || DecisionSet::Box {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        RobustGame::new(
            vec![unit_box(), unit_box()],
            vec![
                PlayerLoss::new(|_, omega| omega[0]),
                PlayerLoss::new(|_, omega| omega[0]),
            ],
            FDivergence::kl(),
            rho,
            scenarios,
        )
        .unwrap()
    }

    fn unit_actions() -> Vec<Vec<f64>> {
        vec![vec![0.5], vec![0.5]]
    }

    #[test]
    fn game_validation() {
        let scenarios = ScenarioSet::empirical(vec![vec![0.0]]).unwrap();
        let result = RobustGame::new(
            vec![DecisionSet::Simplex { dim: 2 }],
            vec![PlayerLoss::new(|_, _| 0.0)],
            FDivergence::kl(),
            0.1,
            scenarios,
        );
        assert!(matches!(result, Err(Error::Structural(_))));
    }

    #[test]
    fn dual_objective_matches_log_quadratic_closed_form() {
        // For the log-quadratic loss under KL the integrand admits
        // lambda (rho - 1) + mu + lambda * S^{1/lambda} e^{-mu/lambda}.
        let scenarios = ScenarioSet::empirical(vec![vec![0.7, -1.2], vec![-0.3, 0.4]]).unwrap();
        let rho = 0.25;
        let game = RobustGame::new(
            vec![
                DecisionSet::Box { lower: vec![-10.0], upper: vec![10.0] },
                DecisionSet::Box { lower: vec![-10.0], upper: vec![10.0] },
            ],
            vec![
                PlayerLoss::new(|a, w| {
                    (1.0 + w[0] * w[0] * a[0][0] * a[0][0] + w[1] * w[1] * a[1][0] * a[1][0]).ln()
                }),
                PlayerLoss::new(|a, w| {
                    (1.0 + w[0] * w[0] * a[0][0] * a[0][0] + w[1] * w[1] * a[1][0] * a[1][0]).ln()
                }),
            ],
            FDivergence::kl(),
            rho,
            scenarios.clone(),
        )
        .unwrap();
        let (a1, a2, lambda, mu) = (1.3, -0.8, 0.7, 0.2);
        let profile = vec![
            AugmentedDecision::new(vec![a1], lambda, mu),
            AugmentedDecision::new(vec![a2], lambda, mu),
        ];
        let got = dual_objective(&game, 0, &profile).unwrap();
        let mut expected = lambda * (rho - 1.0) + mu;
        for (point, &w) in scenarios.points().iter().zip(scenarios.weights()) {
            let s = 1.0 + point[0] * point[0] * a1 * a1 + point[1] * point[1] * a2 * a2;
            expected += w * lambda * s.powf(1.0 / lambda) * (-mu / lambda).exp();
        }
        assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn dual_objective_rejects_lambda_below_floor() {
        let game = table_game(&[0.0, 1.0], &[0.5, 0.5], 0.1);
        let profile = vec![
            AugmentedDecision::new(vec![0.5], 1e-9, 0.0),
            AugmentedDecision::new(vec![0.5], 1.0, 0.0),
        ];
        assert!(matches!(
            dual_objective(&game, 0, &profile),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constant_loss_dual_value_is_the_constant() {
        let game = table_game(&[0.7, 0.7, 0.7], &[0.2, 0.5, 0.3], 0.5);
        let sol = robust_value_dual(&game, 0, &unit_actions()).unwrap();
        assert!((sol.value - 0.7).abs() < 1e-6, "value {}", sol.value);
        assert!(sol.clamped, "constant loss cannot bind the budget");
    }

    #[test]
    fn huge_budget_reaches_the_worst_atom() {
        let game = table_game(&[0.1, 0.9, 0.4], &[0.4, 0.3, 0.3], 1e3);
        let sol = robust_value_dual(&game, 0, &unit_actions()).unwrap();
        assert!((sol.value - 0.9).abs() < 1e-3, "value {}", sol.value);
    }

    #[test]
    fn single_scenario_dual_objective_at_matching_mu() {
        // One atom, mu = loss: conjugate at 0 is 1, so the objective is
        // lambda (rho - 1) + mu + lambda.
        let game = table_game(&[0.42], &[1.0], 0.3);
        let lambda = 0.9;
        let profile = vec![
            AugmentedDecision::new(vec![0.5], lambda, 0.42),
            AugmentedDecision::new(vec![0.5], lambda, 0.42),
        ];
        let got = dual_objective(&game, 0, &profile).unwrap();
        let expected = lambda * (0.3 - 1.0) + 0.42 + lambda;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_value_matches_primal_oracle_on_three_atoms() {
        let losses = [0.0, 1.0, 2.0];
        let weights = [1.0 / 3.0; 3];
        let game = table_game(&losses, &weights, 0.1);
        let sol = robust_value_dual(&game, 0, &unit_actions()).unwrap();
        let primal =
            oracle::primal_inner_sup(&losses, &weights, &FDivergence::kl(), 0.1).unwrap();
        assert!(
            (sol.value - primal.value).abs() <= 1e-4 * primal.value.abs().max(1.0),
            "dual {} vs primal {}",
            sol.value,
            primal.value
        );
    }

    #[test]
    fn strong_duality_on_random_instances() {
        let kl = FDivergence::kl();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..25 {
            let n = rng.gen_range(2..=6);
            let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let rho = 10f64.powf(rng.gen_range(-2.0..0.0));
            let dual = dual_solve(&losses, &weights, &kl, rho).unwrap();
            let primal = oracle::primal_inner_sup(&losses, &weights, &kl, rho).unwrap();
            let rel = (dual.value - primal.value).abs() / primal.value.abs().max(1.0);
            assert!(rel <= 1e-4, "gap {rel} on losses {losses:?} rho {rho}");
        }
    }

    #[test]
    fn dual_value_monotone_in_rho() {
        let losses = [0.3, 0.8, 0.1, 0.55];
        let weights = [0.25; 4];
        let kl = FDivergence::kl();
        let mut previous = f64::NEG_INFINITY;
        for rho in [0.01, 0.05, 0.1, 0.3, 1.0, 3.0] {
            let sol = dual_solve(&losses, &weights, &kl, rho).unwrap();
            assert!(
                sol.value >= previous - 1e-10,
                "value decreased at rho={rho}: {} < {previous}",
                sol.value
            );
            previous = sol.value;
        }
    }

    #[test]
    fn dual_value_sandwiched_between_mean_and_max() {
        let kl = FDivergence::kl();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let sol = dual_solve(&losses, &weights, &kl, 0.2).unwrap();
            let mean: f64 = losses.iter().zip(&weights).map(|(l, w)| l * w).sum();
            let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(sol.value >= mean - 1e-9 && sol.value <= max + 1e-9);
        }
    }

    #[test]
    fn generic_family_solver_agrees_with_primal_oracle() {
        let chi2 = FDivergence::chi_squared();
        let losses = [0.2, 0.9, 0.5];
        let weights = [0.3, 0.3, 0.4];
        for rho in [0.05, 0.2] {
            let dual = dual_solve(&losses, &weights, &chi2, rho).unwrap();
            let primal = oracle::primal_inner_sup(&losses, &weights, &chi2, rho).unwrap();
            assert!(
                (dual.value - primal.value).abs() < 2e-4,
                "chi2 rho={rho}: dual {} primal {}",
                dual.value,
                primal.value
            );
        }
    }

    #[test]
    fn worst_case_distribution_feasible_and_consistent() {
        let losses = [0.0, 1.0, 2.0];
        let weights = [1.0 / 3.0; 3];
        let rho = 0.1;
        let game = table_game(&losses, &weights, rho);
        let kl = FDivergence::kl();
        let tilted = worst_case_distribution(&game, 0, &unit_actions()).unwrap();

        let total: f64 = tilted.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        // Mass shifts toward the worst atom.
        assert!(tilted.weights()[2] > weights[2]);
        assert!(tilted.weights()[0] < weights[0]);

        // Complementary slackness: active budget is exhausted.
        let base = game.base_scenarios().to_measure();
        let achieved = crate::divergence::f_divergence(&kl, &tilted, &base).unwrap();
        assert!((achieved - rho).abs() < 1e-4, "divergence {achieved} vs rho {rho}");

        // Expected loss under the tilt equals the dual value.
        let sol = robust_value_dual(&game, 0, &unit_actions()).unwrap();
        let expected: f64 = tilted
            .weights()
            .iter()
            .zip(&losses)
            .map(|(&q, &l)| q * l)
            .sum();
        assert!((expected - sol.value).abs() < 1e-4);

        // And it matches the primal oracle's argmax atomwise.
        let primal = oracle::primal_inner_sup(&losses, &weights, &kl, rho).unwrap();
        for (a, b) in tilted.weights().iter().zip(&primal.weights) {
            assert!((a - b).abs() < 1e-3, "tilt {a} vs oracle {b}");
        }
    }

    #[test]
    fn worst_case_distribution_constant_loss_returns_base() {
        let game = table_game(&[0.4, 0.4], &[0.5, 0.5], 0.2);
        let tilted = worst_case_distribution(&game, 0, &unit_actions()).unwrap();
        for (&t, &w) in tilted.weights().iter().zip(game.base_scenarios().weights()) {
            assert!((t - w).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_approximation_examples() {
        let game = table_game(&[0.0, 1.0, 2.0], &[1.0 / 3.0; 3], 0.1);
        let v = variance_approximation(&game, 0, &unit_actions(), 0.01);
        let expected = 1.0 + (0.01f64 * (2.0 / 3.0)).sqrt();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.08165).abs() < 1e-5);

        let constant = table_game(&[0.7, 0.7], &[0.5, 0.5], 0.1);
        assert!((variance_approximation(&constant, 0, &unit_actions(), 0.5) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn variance_approximation_converges_to_dual_as_rho_shrinks() {
        let losses = [0.1, 0.6, 0.35, 0.9];
        let weights = [0.25; 4];
        let kl = FDivergence::kl();
        let mut previous = f64::INFINITY;
        for rho in [1e-2, 1e-3, 1e-4] {
            let dual = dual_solve(&losses, &weights, &kl, rho).unwrap().value;
            let mean: f64 = losses.iter().zip(&weights).map(|(l, w)| l * w).sum();
            let var: f64 = losses
                .iter()
                .zip(&weights)
                .map(|(l, w)| w * (l - mean) * (l - mean))
                .sum();
            let approx = mean + (rho * var).sqrt();
            let gap = (dual - approx).abs();
            assert!(gap < previous, "gap {gap} did not shrink at rho={rho}");
            previous = gap;
        }
    }

    #[test]
    fn equilibrium_certificate_on_a_convex_game() {
        // Loss increasing in |a_j| for every scenario: (0, 0) is the robust
        // equilibrium; anything else fails.
        let scenarios = ScenarioSet::empirical(vec![vec![1.0, 0.5], vec![0.5, 1.5]]).unwrap();
        let bx = || DecisionSet::Box {
            lower: vec![-2.0],
            upper: vec![2.0],
        };
        let loss = |a: &[Vec<f64>], w: &[f64]| {
            (1.0 + w[0] * w[0] * a[0][0] * a[0][0] + w[1] * w[1] * a[1][0] * a[1][0]).ln()
        };
        let game = RobustGame::new(
            vec![bx(), bx()],
            vec![PlayerLoss::new(loss), PlayerLoss::new(loss)],
            FDivergence::kl(),
            0.1,
            scenarios,
        )
        .unwrap();
        let probe = ProbeSpec::Grid { resolution: 41 };
        let cert =
            is_robust_equilibrium(&game, &[vec![0.0], vec![0.0]], 1e-6, &probe).unwrap();
        assert!(cert.equilibrium, "worst: {:?}", cert.worst_deviations);
        assert!(cert.grid_limited);

        let cert_off =
            is_robust_equilibrium(&game, &[vec![1.0], vec![0.5]], 1e-6, &probe).unwrap();
        assert!(!cert_off.equilibrium);
        assert!(cert_off.worst_deviations.iter().any(|r| r.improvement > 1e-3));
    }

    #[test]
    fn matching_pennies_mixed_extension_has_uniform_equilibrium() {
        // Zero-sum matching pennies: player 0 wins on a match. The robust
        // layer is irrelevant because the tensor ignores the scenario.
        let payoff = |idx: &[usize]| if idx[0] == idx[1] { -1.0 } else { 1.0 };
        let tensors = vec![
            LossTensor::new(vec![2, 2], move |idx, _| payoff(idx)),
            LossTensor::new(vec![2, 2], move |idx, _| -payoff(idx)),
        ];
        let scenarios = ScenarioSet::empirical(vec![vec![0.0], vec![1.0]]).unwrap();
        let game = mixed_extension(&tensors, FDivergence::kl(), 0.2, scenarios).unwrap();
        assert_eq!(game.n_players(), 2);
        assert!(matches!(game.decision_set(0), DecisionSet::Simplex { dim: 2 }));

        // Probe mixed deviations on a simplex grid.
        let probe: Vec<Vec<f64>> = (0..=20)
            .map(|i| {
                let p = i as f64 / 20.0;
                vec![p, 1.0 - p]
            })
            .collect();
        let uniform = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let cert =
            is_robust_equilibrium(&game, &uniform, 1e-6, &ProbeSpec::Points(probe)).unwrap();
        assert!(cert.equilibrium, "worst: {:?}", cert.worst_deviations);
    }

    #[test]
    fn mixed_extension_scenario_noise_raises_the_robust_value() {
        // Noise on one entry: the robust value must weakly dominate the
        // nominal expectation, cross-checked against the primal oracle.
        let tensors = vec![
            LossTensor::new(vec![2, 2], |idx, w: &[f64]| {
                if idx == [0, 0] {
                    1.0 + w[0]
                } else {
                    0.3
                }
            }),
            LossTensor::new(vec![2, 2], |_, _| 0.5),
        ];
        let scenarios =
            ScenarioSet::empirical(vec![vec![-0.5], vec![0.0], vec![0.5]]).unwrap();
        let rho = 0.1;
        let game = mixed_extension(&tensors, FDivergence::kl(), rho, scenarios).unwrap();
        let profile = vec![vec![0.6, 0.4], vec![0.7, 0.3]];
        let robust = robust_value_dual(&game, 0, &profile).unwrap();
        let losses = game.scenario_losses(0, &profile);
        let weights = game.base_scenarios().weights().to_vec();
        let nominal: f64 = losses.iter().zip(&weights).map(|(l, w)| l * w).sum();
        assert!(robust.value >= nominal - 1e-10);
        let primal =
            oracle::primal_inner_sup(&losses, &weights, &FDivergence::kl(), rho).unwrap();
        assert!((robust.value - primal.value).abs() < 1e-4);
    }

    #[test]
    fn mixed_extension_rejects_mismatched_tensors() {
        let tensors = vec![
            LossTensor::new(vec![2, 2], |_, _| 0.0),
            LossTensor::new(vec![2, 3], |_, _| 0.0),
        ];
        let scenarios = ScenarioSet::empirical(vec![vec![0.0]]).unwrap();
        assert!(matches!(
            mixed_extension(&tensors, FDivergence::kl(), 0.1, scenarios),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn simplex_projection_basics() {
        let mut v = vec![0.2, 0.3, 0.5];
        project_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut w = vec![2.0, -1.0];
        project_simplex(&mut w);
        assert_eq!(w, vec![1.0, 0.0]);
    }
}
