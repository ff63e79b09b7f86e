//! Independent brute-force verifiers.
//!
//! Everything here is deliberately simple and self-contained: the primal
//! inner-sup solver, the triality inequality checker, and the exhaustive grid
//! optimizer certify the fast solver paths without sharing any code with
//! them. In particular nothing in this module evaluates a Legendre-Fenchel
//! conjugate or a dual multiplier formula.

use crate::divergence::FDivergence;
use crate::error::{Error, Result};

/// Result of a primal inner-sup solve: the worst-case expected loss and the
/// maximizing reweighted measure.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Maximize Σ_k q_k l_k over the f-divergence ball
/// { q : q in the simplex, Σ_k m_k f(q_k/m_k) − f(1) ≤ ρ }
/// by a log-barrier interior-point method with Newton steps.
///
/// Atom counts are expected at desk scale (≤ 12); each Newton step solves a
/// dense (n+1)-dimensional KKT system by Gaussian elimination.
pub fn primal_inner_sup(
    losses: &[f64],
    base_weights: &[f64],
    fam: &FDivergence,
    rho: f64,
) -> Result<PrimalSolution> {
    let n = losses.len();
    if n == 0 || base_weights.len() != n {
        return Err(Error::Structural(format!(
            "losses ({n}) and base weights ({}) must be nonempty and equal length",
            base_weights.len()
        )));
    }
    if rho <= 0.0 {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if n > 12 {
        return Err(Error::Structural(format!(
            "primal oracle is desk-scale only (got {n} atoms, max 12)"
        )));
    }

    // If all the mass can legally sit on the worst atom the ball constraint
    // never binds and the supremum is the max loss.
    let imax = argmax(losses);
    let vertex_div = divergence_of(fam, base_weights, &vertex(n, imax));
    if vertex_div <= rho {
        return Ok(PrimalSolution {
            value: losses[imax],
            weights: vertex(n, imax),
        });
    }

    let div = |q: &[f64]| divergence_of(fam, base_weights, q);
    // f''(x) by central differences of f'; generic over the family.
    let f2 = |x: f64| {
        let h = 1e-6 * x.max(1e-3);
        (fam.f_prime(x + h) - fam.f_prime(x - h)) / (2.0 * h)
    };

    // Central path: minimize  tau * (-l.q) - log(rho - D(q)) - sum log q_i
    // subject to 1.q = 1, starting from the strictly feasible base measure.
    let mut q: Vec<f64> = base_weights.to_vec();
    let mut tau = 1.0;
    while tau < 1e12 {
        tau *= 20.0;
        for _ in 0..60 {
            let slack = rho - div(&q);
            let gdiv: Vec<f64> = (0..n)
                .map(|i| fam.f_prime(q[i] / base_weights[i]))
                .collect();
            let grad: Vec<f64> = (0..n)
                .map(|i| -tau * losses[i] + gdiv[i] / slack - 1.0 / q[i])
                .collect();

            // KKT system [H 1; 1ᵀ 0] [dq; nu] = [-grad; 0]
            let dim = n + 1;
            let mut a = vec![0.0; dim * dim];
            for i in 0..n {
                for j in 0..n {
                    a[i * dim + j] = gdiv[i] * gdiv[j] / (slack * slack);
                }
                let hdiv = f2(q[i] / base_weights[i]) / base_weights[i];
                a[i * dim + i] += hdiv / slack + 1.0 / (q[i] * q[i]);
                a[i * dim + n] = 1.0;
                a[n * dim + i] = 1.0;
            }
            let mut rhs = vec![0.0; dim];
            for i in 0..n {
                rhs[i] = -grad[i];
            }
            let sol = solve_dense(&mut a, &mut rhs, dim).ok_or_else(|| {
                Error::Consistency("singular KKT system in primal oracle".into())
            })?;
            let dq = &sol[..n];

            let decrement: f64 = -grad.iter().zip(dq).map(|(g, d)| g * d).sum::<f64>();
            let barrier = |qv: &[f64]| -> f64 {
                if qv.iter().any(|&x| x <= 0.0) {
                    return f64::INFINITY;
                }
                let s = rho - div(qv);
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                -tau * dot(losses, qv) - s.ln() - qv.iter().map(|x| x.ln()).sum::<f64>()
            };
            let f0 = barrier(&q);
            let mut step = 1.0;
            while step > 1e-14 {
                let qn: Vec<f64> = q.iter().zip(dq).map(|(x, d)| x + step * d).collect();
                if barrier(&qn) < f0 - 1e-12 * step * decrement.abs() {
                    q = qn;
                    break;
                }
                step *= 0.5;
            }
            if decrement / 2.0 < 1e-14 {
                break;
            }
        }
    }
    Ok(PrimalSolution {
        value: dot(losses, &q),
        weights: q,
    })
}

/// Second, structurally independent primal method for ≤ 4 atoms: exhaustive
/// lattice search over the simplex (compositions of `SUBDIV`) followed by
/// zoomed local lattices around the incumbent.
pub fn primal_inner_sup_grid(
    losses: &[f64],
    base_weights: &[f64],
    fam: &FDivergence,
    rho: f64,
) -> Result<PrimalSolution> {
    const SUBDIV: usize = 50;
    let n = losses.len();
    if n == 0 || n > 4 || base_weights.len() != n {
        return Err(Error::Structural(format!(
            "grid oracle supports 1..=4 atoms with matching weights, got {n}"
        )));
    }
    if rho <= 0.0 {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }

    let feasible_value = |q: &[f64]| -> Option<f64> {
        if divergence_of(fam, base_weights, q) <= rho {
            Some(dot(losses, q))
        } else {
            None
        }
    };

    let mut best_q = base_weights.to_vec();
    let mut best_v = dot(losses, &best_q);

    // Global pass over the full simplex lattice.
    for comp in Compositions::new(SUBDIV, n) {
        let q: Vec<f64> = comp.iter().map(|&c| c as f64 / SUBDIV as f64).collect();
        if let Some(v) = feasible_value(&q) {
            if v > best_v {
                best_v = v;
                best_q = q;
            }
        }
    }

    // Zoom: re-grid a shrinking box around the incumbent, renormalized onto
    // the simplex.
    let mut width = 1.0;
    for _ in 0..4 {
        width /= 6.0;
        let lo: Vec<f64> = best_q.iter().map(|&x| (x - width).max(0.0)).collect();
        for comp in Compositions::new(SUBDIV, n) {
            let mut q: Vec<f64> = comp
                .iter()
                .zip(&lo)
                .map(|(&c, &l)| l + (c as f64 / SUBDIV as f64) * 2.0 * width)
                .collect();
            let s: f64 = q.iter().sum();
            if s <= 0.0 {
                continue;
            }
            for x in &mut q {
                *x /= s;
            }
            if let Some(v) = feasible_value(&q) {
                if v > best_v {
                    best_v = v;
                    best_q = q;
                }
            }
        }
    }
    Ok(PrimalSolution {
        value: best_v,
        weights: best_q,
    })
}

/// All six nested optimizations of a three-block tensor, computed exactly by
/// enumeration, together with the two inequality-chain verdicts.
#[derive(Debug, Clone)]
pub struct TrialityReport {
    /// sup_2 inf_{1,3}
    pub sup2_inf13: f64,
    /// inf_3 sup_2 inf_1
    pub inf3_sup2_inf1: f64,
    /// inf_{1,3} sup_2
    pub inf13_sup2: f64,
    /// sup_{1,3} inf_2
    pub sup13_inf2: f64,
    /// sup_3 inf_2 sup_1
    pub sup3_inf2_sup1: f64,
    /// inf_2 sup_{1,3}
    pub inf2_sup13: f64,
    pub chain_min_ok: bool,
    pub chain_max_ok: bool,
}

impl TrialityReport {
    pub fn ok(&self) -> bool {
        self.chain_min_ok && self.chain_max_ok
    }
}

/// Check both triality inequality chains on a finite tensor
/// `l3[i][j][k]` over grids A1 x A2 x A3:
///
/// ```text
/// sup_2 inf_{1,3}  ≤  inf_3 sup_2 inf_1  ≤  inf_{1,3} sup_2
/// sup_{1,3} inf_2  ≤  sup_3 inf_2 sup_1  ≤  inf_2 sup_{1,3}
/// ```
pub fn triality_check(l3: &[Vec<Vec<f64>>]) -> Result<TrialityReport> {
    let n1 = l3.len();
    if n1 == 0 || l3[0].is_empty() || l3[0][0].is_empty() {
        return Err(Error::Structural("triality tensor has an empty grid".into()));
    }
    let n2 = l3[0].len();
    let n3 = l3[0][0].len();
    if l3.iter().any(|p| p.len() != n2 || p.iter().any(|r| r.len() != n3)) {
        return Err(Error::Structural("ragged triality tensor".into()));
    }
    let at = |i: usize, j: usize, k: usize| l3[i][j][k];

    let sup2_inf13 = (0..n2)
        .map(|j| {
            (0..n1)
                .flat_map(|i| (0..n3).map(move |k| (i, k)))
                .map(|(i, k)| at(i, j, k))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let inf3_sup2_inf1 = (0..n3)
        .map(|k| {
            (0..n2)
                .map(|j| (0..n1).map(|i| at(i, j, k)).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);

    let inf13_sup2 = (0..n1)
        .flat_map(|i| (0..n3).map(move |k| (i, k)))
        .map(|(i, k)| {
            (0..n2)
                .map(|j| at(i, j, k))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);

    let sup13_inf2 = (0..n1)
        .flat_map(|i| (0..n3).map(move |k| (i, k)))
        .map(|(i, k)| {
            (0..n2)
                .map(|j| at(i, j, k))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let sup3_inf2_sup1 = (0..n3)
        .map(|k| {
            (0..n2)
                .map(|j| {
                    (0..n1)
                        .map(|i| at(i, j, k))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let inf2_sup13 = (0..n2)
        .map(|j| {
            (0..n1)
                .flat_map(|i| (0..n3).map(move |k| (i, k)))
                .map(|(i, k)| at(i, j, k))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);

    // Pure min/max of shared values: exact comparisons are safe.
    Ok(TrialityReport {
        sup2_inf13,
        inf3_sup2_inf1,
        inf13_sup2,
        sup13_inf2,
        sup3_inf2_sup1,
        inf2_sup13,
        chain_min_ok: sup2_inf13 <= inf3_sup2_inf1 && inf3_sup2_inf1 <= inf13_sup2,
        chain_max_ok: sup13_inf2 <= sup3_inf2_sup1 && sup3_inf2_sup1 <= inf2_sup13,
    })
}

/// Exhaustive grid scan for the global minimum of `objective` on a box, with
/// optional coordinate-descent refinement from the best cell. Dimensions
/// beyond 3 are rejected; this is a certification instrument, not a solver.
pub fn grid_global_min(
    objective: impl Fn(&[f64]) -> f64,
    lower: &[f64],
    upper: &[f64],
    resolution: usize,
    refine: bool,
) -> Result<(Vec<f64>, f64)> {
    let dim = lower.len();
    if dim == 0 || dim > 3 || upper.len() != dim {
        return Err(Error::Structural(format!(
            "grid oracle supports 1..=3 dimensions, got {dim}"
        )));
    }
    if resolution < 2 {
        return Err(Error::Structural("resolution must be at least 2".into()));
    }
    let coord = |d: usize, i: usize| {
        lower[d] + (upper[d] - lower[d]) * i as f64 / (resolution - 1) as f64
    };
    let mut best_x = lower.to_vec();
    let mut best_v = f64::INFINITY;
    let total = resolution.pow(dim as u32);
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        for d in 0..dim {
            x[d] = coord(d, rem % resolution);
            rem /= resolution;
        }
        let v = objective(&x);
        if v < best_v {
            best_v = v;
            best_x = x.clone();
        }
    }

    if refine {
        // Golden-section per coordinate within one grid cell of the incumbent.
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        for _sweep in 0..6 {
            for d in 0..dim {
                let cell = (upper[d] - lower[d]) / (resolution - 1) as f64;
                let mut a = (best_x[d] - cell).max(lower[d]);
                let mut b = (best_x[d] + cell).min(upper[d]);
                let eval = |t: f64| {
                    let mut y = best_x.clone();
                    y[d] = t;
                    objective(&y)
                };
                let mut x1 = b - INV_PHI * (b - a);
                let mut x2 = a + INV_PHI * (b - a);
                let mut f1 = eval(x1);
                let mut f2 = eval(x2);
                for _ in 0..60 {
                    if f1 > f2 {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = a + INV_PHI * (b - a);
                        f2 = eval(x2);
                    } else {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = b - INV_PHI * (b - a);
                        f1 = eval(x1);
                    }
                }
                let t = 0.5 * (a + b);
                let v = eval(t);
                if v < best_v {
                    best_v = v;
                    best_x[d] = t;
                }
            }
        }
    }
    Ok((best_x, best_v))
}

fn divergence_of(fam: &FDivergence, m: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&mi, &qi) in m.iter().zip(q) {
        if mi == 0.0 {
            if qi > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        total += mi * fam.f(qi / mi);
    }
    total - fam.f_at_one()
}

fn vertex(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on a row-major `dim x dim`
/// system. Returns `None` when a pivot degenerates.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], dim: usize) -> Option<Vec<f64>> {
    for col in 0..dim {
        let mut pivot = col;
        for row in (col + 1)..dim {
            if a[row * dim + col].abs() > a[pivot * dim + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * dim + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(col * dim + k, pivot * dim + k);
            }
            rhs.swap(col, pivot);
        }
        let diag = a[col * dim + col];
        for row in (col + 1)..dim {
            let factor = a[row * dim + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                a[row * dim + k] -= factor * a[col * dim + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = rhs[col];
        for k in (col + 1)..dim {
            acc -= a[col * dim + k] * x[k];
        }
        x[col] = acc / a[col * dim + col];
    }
    Some(x)
}

/// Iterator over all nonnegative integer tuples of length `parts` summing to
/// `total` (simplex lattice points).
struct Compositions {
    total: usize,
    state: Vec<usize>,
    done: bool,
}

impl Compositions {
    fn new(total: usize, parts: usize) -> Self {
        let mut state = vec![0; parts];
        state[parts - 1] = total;
        Self {
            total,
            state,
            done: parts == 0,
        }
    }
}

impl Iterator for Compositions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.state.clone();
        // Lexicographic successor: bump the rightmost non-terminal slot.
        let n = self.state.len();
        if n == 1 {
            self.done = true;
            return Some(out);
        }
        let mut i = n - 2;
        loop {
            let tail: usize = self.state[i + 1..].iter().sum();
            if tail > 0 {
                self.state[i] += 1;
                let used: usize = self.state[..=i].iter().sum();
                for s in &mut self.state[i + 1..] {
                    *s = 0;
                }
                self.state[n - 1] = self.total - used;
                return Some(out);
            }
            if i == 0 {
                self.done = true;
                return Some(out);
            }
            i -= 1;
        }
    }
}
