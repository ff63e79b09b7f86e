//! Bregman divergences, generator functions, time scalings, and the
//! accelerated second-order flow
//!
//! ```text
//! z̈ + (e^α − α̇) ż + e^{2α+β} g_zz⁻¹(z + e^{−α}ż) ∇l(z) = 0
//! ```
//!
//! integrated in mirror coordinates, where it is the first-order law
//!
//! ```text
//! w = ∇g(z + e^{−α} ż),   ẇ = −e^{α+β} ∇l(z),   ż = e^{α}(∇g⁻¹(w) − z).
//! ```
//!
//! For a convex objective and any scaling with β̇ ≤ e^α the Lyapunov function
//! V = d_g(z*, z + e^{−α}u) + e^{β}(l(z) − l(z*)) is non-increasing along the
//! flow, which yields the convergence bound l(z(t)) − l(z*) ≤ e^{−β(t)} c₀.
//! The equality choice β̇ = e^α with α(t) = t is the ideal scaling with its
//! e^{−e^t} decay.
//!
//! # Finite-precision caveat
//!
//! The ideal scaling buys its double-exponential rate with a stiffness that
//! also grows double-exponentially: the flow oscillates at frequency
//! ~ e^{α + β/2}. Explicit integration therefore needs ~ e^{β(T)/2} steps to
//! reach horizon T, which in f64 is feasible only to T ≈ 3.5. Past that
//! point use [`TimeScaling::CappedIdeal`], which freezes α and β once β hits
//! a cap; β̇ = 0 ≤ e^α keeps the convergence theorem valid while the
//! stiffness stops growing. [`stability_substeps`] picks the substep count
//! that keeps the explicit integrator inside its stability region.

use crate::error::{Error, Result};

/// A differentiable strictly convex generator for mirror geometry.
///
/// `SqEuclidean` gives the identity mirror map (plain accelerated gradient
/// flow); `NegEntropy` gives the simplex-interior mirror map whose inverse
/// is the normalized exponential, so simplex constraints never need a
/// projection. `Blocked` composes generators over contiguous coordinate
/// blocks, e.g. entropy on a mixed strategy next to a Euclidean multiplier
/// pair.
#[derive(Debug, Clone)]
pub enum Generator {
    /// g(x) = ½|x|².
    SqEuclidean,
    /// g(x) = Σ xᵢ log xᵢ on the positive orthant; mirror inverse is the
    /// normalized exponential (softmax), so trajectories live in the open
    /// simplex.
    NegEntropy,
    /// Contiguous blocks, each with its own generator.
    Blocked(Vec<(Generator, usize)>),
}

impl Generator {
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            Generator::SqEuclidean => Ok(0.5 * x.iter().map(|v| v * v).sum::<f64>()),
            Generator::NegEntropy => {
                let mut total = 0.0;
                for &v in x {
                    if v < 0.0 {
                        return Err(Error::Domain(format!(
                            "entropy generator evaluated at negative coordinate {v}"
                        )));
                    }
                    if v > 0.0 {
                        total += v * v.ln();
                    }
                }
                Ok(total)
            }
            Generator::Blocked(blocks) => {
                let mut total = 0.0;
                for (gen, slice) in split_blocks(blocks, x)? {
                    total += gen.value(slice)?;
                }
                Ok(total)
            }
        }
    }

    /// ∇g. The entropy gradient needs the relative interior (strictly
    /// positive coordinates).
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Generator::SqEuclidean => Ok(x.to_vec()),
            Generator::NegEntropy => x
                .iter()
                .map(|&v| {
                    if v <= 0.0 {
                        Err(Error::Domain(format!(
                            "entropy gradient needs strictly positive coordinates, got {v}"
                        )))
                    } else {
                        Ok(1.0 + v.ln())
                    }
                })
                .collect(),
            Generator::Blocked(blocks) => {
                let mut out = Vec::with_capacity(x.len());
                for (gen, slice) in split_blocks(blocks, x)? {
                    out.extend(gen.grad(slice)?);
                }
                Ok(out)
            }
        }
    }

    /// Mirror map ∇g⁻¹. For entropy this is the softmax, the inverse of the
    /// gradient restricted to the simplex.
    pub fn grad_inverse(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Generator::SqEuclidean => w.to_vec(),
            Generator::NegEntropy => softmax(w),
            Generator::Blocked(blocks) => {
                let mut out = Vec::with_capacity(w.len());
                let mut offset = 0;
                for (gen, len) in blocks {
                    out.extend(gen.grad_inverse(&w[offset..offset + len]));
                    offset += len;
                }
                out
            }
        }
    }

    /// Action of the inverse Hessian of g at `x` on `v`.
    pub fn hess_inv_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Generator::SqEuclidean => Ok(v.to_vec()),
            Generator::NegEntropy => Ok(x.iter().zip(v).map(|(&xi, &vi)| xi * vi).collect()),
            Generator::Blocked(blocks) => {
                let mut out = Vec::with_capacity(v.len());
                let mut offset = 0;
                for (gen, len) in blocks {
                    out.extend(gen.hess_inv_apply(
                        &x[offset..offset + len],
                        &v[offset..offset + len],
                    )?);
                    offset += len;
                }
                Ok(out)
            }
        }
    }

    /// Look up a generator by its config name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "sq_euclidean" => Some(Generator::SqEuclidean),
            "neg_entropy" => Some(Generator::NegEntropy),
            _ => None,
        }
    }
}

fn split_blocks<'a>(
    blocks: &'a [(Generator, usize)],
    x: &'a [f64],
) -> Result<Vec<(&'a Generator, &'a [f64])>> {
    let total: usize = blocks.iter().map(|(_, n)| n).sum();
    if total != x.len() {
        return Err(Error::Structural(format!(
            "blocked generator covers {total} coordinates but the point has {}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(blocks.len());
    let mut offset = 0;
    for (gen, len) in blocks {
        out.push((gen, &x[offset..offset + len]));
        offset += len;
    }
    Ok(out)
}

fn softmax(w: &[f64]) -> Vec<f64> {
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = w.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Bregman divergence d_g(y, x) = g(y) − g(x) − ⟨∇g(x), y − x⟩; nonnegative
/// by convexity of the generator.
pub fn bregman_divergence(gen: &Generator, y: &[f64], x: &[f64]) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::Structural(format!(
            "points of dimension {} and {}",
            y.len(),
            x.len()
        )));
    }
    let gx = gen.grad(x)?;
    let inner: f64 = gx.iter().zip(y.iter().zip(x)).map(|(g, (yi, xi))| g * (yi - xi)).sum();
    Ok(gen.value(y)? - gen.value(x)? - inner)
}

/// Time scaling (α, β) with β(t) = β(0) + ∫₀ᵗ e^{α(s)} ds, possibly frozen
/// past a stability cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeScaling {
    /// α(t) = t, β(t) = β₀ + e^t − 1. The e^{−e^t} regime.
    Ideal { beta0: f64 },
    /// Ideal until β reaches `beta_cap`, then both α and β freeze. The
    /// theorem's admissibility condition β̇ ≤ e^α keeps holding (β̇ = 0), so
    /// the bound e^{−β(t)} c₀ stays valid while the stiffness stops growing.
    CappedIdeal { beta0: f64, beta_cap: f64 },
    /// Constant α: plain exponential decay e^{−β₀ − e^a t}.
    Constant { alpha: f64, beta0: f64 },
}

impl TimeScaling {
    pub fn ideal() -> Self {
        TimeScaling::Ideal { beta0: 0.0 }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match *self {
            TimeScaling::Ideal { .. } => t,
            TimeScaling::CappedIdeal { .. } => t.min(self.cap_time()),
            TimeScaling::Constant { alpha, .. } => alpha,
        }
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        match *self {
            TimeScaling::Ideal { .. } => 1.0,
            TimeScaling::CappedIdeal { .. } => {
                if t < self.cap_time() {
                    1.0
                } else {
                    0.0
                }
            }
            TimeScaling::Constant { .. } => 0.0,
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match *self {
            TimeScaling::Ideal { beta0 } => beta0 + t.exp() - 1.0,
            TimeScaling::CappedIdeal { beta0, .. } => beta0 + self.alpha(t).exp() - 1.0,
            TimeScaling::Constant { alpha, beta0 } => beta0 + alpha.exp() * t,
        }
    }

    pub fn beta0(&self) -> f64 {
        match *self {
            TimeScaling::Ideal { beta0 }
            | TimeScaling::CappedIdeal { beta0, .. }
            | TimeScaling::Constant { beta0, .. } => beta0,
        }
    }

    /// Time at which a capped scaling freezes (infinite otherwise).
    pub fn cap_time(&self) -> f64 {
        match *self {
            TimeScaling::CappedIdeal { beta0, beta_cap } => (beta_cap - beta0 + 1.0).ln(),
            _ => f64::INFINITY,
        }
    }
}

/// Instantaneous flow state: position z and velocity u = ż.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    pub t: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl DynState {
    /// Rest state: u = 0.
    pub fn at_rest(t: f64, z: Vec<f64>) -> Self {
        let u = vec![0.0; z.len()];
        Self { t, z, u }
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub lyapunov: Option<f64>,
    pub bound: Option<f64>,
}

/// Time-stamped trajectory of one flow (or one player).
#[derive(Debug, Clone, Default)]
pub struct BregmanTrajectory {
    pub samples: Vec<TrajectorySample>,
}

impl BregmanTrajectory {
    pub fn push(&mut self, sample: TrajectorySample) {
        if let Some(last) = self.samples.last() {
            debug_assert!(sample.t > last.t, "samples must be strictly increasing in t");
        }
        self.samples.push(sample);
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }
}

/// Advance the flow by one explicit RK4 step of size `dt` in mirror
/// coordinates. `grad` is the objective gradient ∇l, evaluated wherever the
/// integrator stages need it; a stochastic caller passes a closure that
/// returns its fixed per-step sample gradient.
pub fn bregman_step(
    gen: &Generator,
    scaling: &TimeScaling,
    state: &DynState,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    dt: f64,
) -> Result<DynState> {
    bregman_step_substepped(gen, scaling, state, grad, dt, 1)
}

/// As [`bregman_step`] but splitting `dt` into `substeps` internal RK4
/// steps, which is how stiff phases of the ideal scaling stay inside the
/// explicit stability region.
pub fn bregman_step_substepped(
    gen: &Generator,
    scaling: &TimeScaling,
    state: &DynState,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    dt: f64,
    substeps: usize,
) -> Result<DynState> {
    if dt <= 0.0 {
        return Err(Error::Integration(format!("dt must be positive, got {dt}")));
    }
    if substeps == 0 {
        return Err(Error::Integration("substeps must be at least 1".into()));
    }
    let dim = state.z.len();
    let exp_alpha = |t: f64| scaling.alpha(t).exp();
    let exp_ab = |t: f64| -> Result<f64> {
        let e = scaling.alpha(t) + scaling.beta(t);
        if e > 700.0 {
            return Err(Error::Integration(format!(
                "e^(alpha+beta) overflows at t = {t}; shorten the horizon or cap the scaling"
            )));
        }
        Ok(e.exp())
    };

    // Mirror variable at the current state.
    let ea0 = exp_alpha(state.t);
    let y0: Vec<f64> = state
        .z
        .iter()
        .zip(&state.u)
        .map(|(&z, &u)| z + u / ea0)
        .collect();
    let mut w = gen.grad(&y0)?;
    let mut z = state.z.clone();

    let h = dt / substeps as f64;
    for s in 0..substeps {
        let t0 = state.t + s as f64 * h;
        // RK4 on (z, w):  ż = e^α (∇g⁻¹(w) − z),  ẇ = −e^{α+β} ∇l(z).
        let rhs = |t: f64, zc: &[f64], wc: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let ea = exp_alpha(t);
            let eab = exp_ab(t)?;
            let mirror = gen.grad_inverse(wc);
            let dz: Vec<f64> = mirror.iter().zip(zc).map(|(&m, &zi)| ea * (m - zi)).collect();
            let g = grad(zc);
            if g.len() != dim {
                return Err(Error::Structural(format!(
                    "gradient has dimension {}, state has {dim}",
                    g.len()
                )));
            }
            let dw: Vec<f64> = g.iter().map(|&gi| -eab * gi).collect();
            Ok((dz, dw))
        };
        let (k1z, k1w) = rhs(t0, &z, &w)?;
        let zt = add_scaled(&z, &k1z, h / 2.0);
        let wt = add_scaled(&w, &k1w, h / 2.0);
        let (k2z, k2w) = rhs(t0 + h / 2.0, &zt, &wt)?;
        let zt = add_scaled(&z, &k2z, h / 2.0);
        let wt = add_scaled(&w, &k2w, h / 2.0);
        let (k3z, k3w) = rhs(t0 + h / 2.0, &zt, &wt)?;
        let zt = add_scaled(&z, &k3z, h);
        let wt = add_scaled(&w, &k3w, h);
        let (k4z, k4w) = rhs(t0 + h, &zt, &wt)?;
        for i in 0..dim {
            z[i] += h / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i]);
            w[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
        if z.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!(
                "state left the finite range near t = {}; shorten the horizon or cap the scaling",
                t0 + h
            )));
        }
    }

    let t1 = state.t + dt;
    let ea1 = exp_alpha(t1);
    let mirror = gen.grad_inverse(&w);
    let u: Vec<f64> = mirror.iter().zip(&z).map(|(&m, &zi)| ea1 * (m - zi)).collect();
    Ok(DynState { t: t1, z, u })
}

/// Substep count keeping an explicit step of size `dt` stable at time `t`:
/// the flow's local frequency is e^{α+β/2}√L for curvature scale L, and the
/// z-relaxation rate is e^α.
pub fn stability_substeps(scaling: &TimeScaling, t: f64, dt: f64, curvature: f64) -> usize {
    let freq = (scaling.alpha(t) + scaling.beta(t) / 2.0).exp() * curvature.max(0.0).sqrt();
    let relax = scaling.alpha(t).exp();
    let rate = freq.max(relax);
    ((rate * dt / 0.5).ceil() as usize).max(1)
}

/// The Lyapunov function of the convergence proof:
/// V(z, u, t, z*) = d_g(z*, z + e^{−α}u) + e^{β} (l(z) − l(z*)).
pub fn lyapunov(
    gen: &Generator,
    scaling: &TimeScaling,
    state: &DynState,
    z_star: &[f64],
    objective: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    let ea = scaling.alpha(state.t).exp();
    let y: Vec<f64> = state
        .z
        .iter()
        .zip(&state.u)
        .map(|(&z, &u)| z + u / ea)
        .collect();
    let dist = bregman_divergence(gen, z_star, &y)?;
    let eb = scaling.beta(state.t).exp();
    Ok(dist + eb * (objective(&state.z) - objective(z_star)))
}

/// c₀ = V at the initial state; the constant in the convergence bound.
pub fn initial_constant(
    gen: &Generator,
    scaling: &TimeScaling,
    state0: &DynState,
    z_star: &[f64],
    objective: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    lyapunov(gen, scaling, state0, z_star, objective)
}

/// The convergence bound e^{−β(t)} c₀ of the Lyapunov argument.
pub fn convergence_bound(scaling: &TimeScaling, c0: f64, t: f64) -> f64 {
    (-scaling.beta(t)).exp() * c0
}

/// Time to reach precision η under the ideal scaling: log log(c₀/η).
pub fn time_to_precision_ideal(c0: f64, eta: f64) -> f64 {
    (c0 / eta).ln().ln()
}

/// Options for [`run_flow`].
#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Curvature scale L used to pick stability substeps; `None` runs plain
    /// fixed steps.
    pub curvature_hint: Option<f64>,
    /// Abort threshold on substeps per outer step.
    pub max_substeps: usize,
    /// Known minimizer: enables Lyapunov and bound columns in the samples.
    pub z_star: Option<Vec<f64>>,
    /// Record every k-th step (1 = every step).
    pub record_every: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            curvature_hint: None,
            max_substeps: 4_000_000,
            z_star: None,
            record_every: 1,
        }
    }
}

/// Integrate the flow of a deterministic objective over a horizon and record
/// a trajectory; the workhorse behind the bound-verification suites.
pub fn run_flow(
    gen: &Generator,
    scaling: &TimeScaling,
    z0: Vec<f64>,
    u0: Vec<f64>,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    objective: &dyn Fn(&[f64]) -> f64,
    opts: &FlowOptions,
) -> Result<BregmanTrajectory> {
    if opts.horizon <= 0.0 || opts.dt <= 0.0 {
        return Err(Error::Integration(
            "horizon and dt must both be positive".into(),
        ));
    }
    let c0 = match &opts.z_star {
        Some(zs) => Some(initial_constant(
            gen,
            scaling,
            &DynState {
                t: 0.0,
                z: z0.clone(),
                u: u0.clone(),
            },
            zs,
            objective,
        )?),
        None => None,
    };
    let mut state = DynState { t: 0.0, z: z0, u: u0 };
    let steps = (opts.horizon / opts.dt).round() as usize;
    let mut trajectory = BregmanTrajectory::default();
    for k in 0..steps {
        let substeps = match opts.curvature_hint {
            Some(curv) => {
                let n = stability_substeps(scaling, state.t + opts.dt, opts.dt, curv);
                if n > opts.max_substeps {
                    return Err(Error::Integration(format!(
                        "stiffness needs {n} substeps at t = {}; cap the scaling",
                        state.t
                    )));
                }
                n
            }
            None => 1,
        };
        state = bregman_step_substepped(gen, scaling, &state, grad, opts.dt, substeps)?;
        // Align the clock exactly to the grid so recorded times are clean.
        state.t = (k + 1) as f64 * opts.dt;
        if (k + 1) % opts.record_every == 0 || k + 1 == steps {
            let (lyap, bound) = match (&opts.z_star, c0) {
                (Some(zs), Some(c0)) => (
                    Some(lyapunov(gen, scaling, &state, zs, objective)?),
                    Some(convergence_bound(scaling, c0, state.t)),
                ),
                _ => (None, None),
            };
            trajectory.push(TrajectorySample {
                t: state.t,
                z: state.z.clone(),
                u: state.u.clone(),
                objective: objective(&state.z),
                lyapunov: lyap,
                bound,
            });
        }
    }
    Ok(trajectory)
}

fn add_scaled(base: &[f64], delta: &[f64], factor: f64) -> Vec<f64> {
    base.iter()
        .zip(delta)
        .map(|(&b, &d)| b + factor * d)
        .collect()
}
