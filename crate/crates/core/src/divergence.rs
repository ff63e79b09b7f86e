//! f-divergence families, their Legendre-Fenchel conjugates, divergence
//! evaluation between discrete measures, and worst-case likelihood recovery.
//!
//! An f-divergence between probability measures is
//!
//! ```text
//! D_f(m̃ || m) = Σ_i m_i f(m̃_i / m_i) − f(1)
//! ```
//!
//! for a convex generator f on the nonnegative reals. The conjugate
//! f*(ξ) = sup_x [xξ − f(x)] drives the dual reduction of the worst-case
//! expectation: the inner supremum over reweightings collapses to a
//! two-multiplier problem whose integrand is λ f*((l − μ)/λ).
//!
//! Families are plain data: a bundle of scalar closures. The KL family
//! (f(x) = x log x − x, f* = exp) is the workhorse; chi-squared and Burg
//! are provided with their closed forms, and [`FDivergence::from_f`] builds
//! a family from f alone with a numeric conjugate fallback.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PartialFn = Arc<dyn Fn(f64) -> Option<f64> + Send + Sync>;

/// Default search interval for the numeric conjugate.
pub const CONJUGATE_SEARCH_BOUNDS: (f64, f64) = (0.0, 1e6);

/// A divergence family: the generator f, its derivative, f(1), the
/// Legendre-Fenchel conjugate f* and its derivative, and the inverse of f'
/// where it exists (the likelihood-recovery map).
#[derive(Clone)]
pub struct FDivergence {
    name: String,
    f: ScalarFn,
    f_prime: ScalarFn,
    f_at_one: f64,
    conjugate: ScalarFn,
    conjugate_prime: ScalarFn,
    f_prime_inverse: PartialFn,
}

impl fmt::Debug for FDivergence {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("FDivergence")
            .field("name", &self.name)
            .field("f_at_one", &self.f_at_one)
            .finish()
    }
}

impl FDivergence {
    /// Kullback-Leibler family: f(x) = x log x − x for x > 0, f(0) = 0.
    ///
    /// f(1) = −1, f'(x) = log x, f*(ξ) = e^ξ, (f')⁻¹ = exp.
    pub fn kl() -> Self {
        Self {
            name: "kl".to_string(),
            f: Arc::new(|x| {
                if x > 0.0 {
                    x * x.ln() - x
                } else if x == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }),
            f_prime: Arc::new(|x| x.ln()),
            f_at_one: -1.0,
            conjugate: Arc::new(f64::exp),
            conjugate_prime: Arc::new(f64::exp),
            f_prime_inverse: Arc::new(|y| Some(y.exp())),
        }
    }

    /// Pearson chi-squared family: f(x) = (x − 1)² on x ≥ 0.
    ///
    /// f*(ξ) = ξ + ξ²/4 for ξ ≥ −2 and −1 below (maximizer pinned at x = 0).
    pub fn chi_squared() -> Self {
        Self {
            name: "chi2".to_string(),
            f: Arc::new(|x| {
                if x >= 0.0 {
                    (x - 1.0) * (x - 1.0)
                } else {
                    f64::INFINITY
                }
            }),
            f_prime: Arc::new(|x| 2.0 * (x - 1.0)),
            f_at_one: 0.0,
            conjugate: Arc::new(|xi| if xi >= -2.0 { xi + xi * xi / 4.0 } else { -1.0 }),
            conjugate_prime: Arc::new(|xi| if xi >= -2.0 { 1.0 + xi / 2.0 } else { 0.0 }),
            f_prime_inverse: Arc::new(|y| if y >= -2.0 { Some(1.0 + y / 2.0) } else { None }),
        }
    }

    /// Burg entropy family: f(x) = x − 1 − log x on x > 0.
    ///
    /// f*(ξ) = −log(1 − ξ) for ξ < 1, +∞ otherwise.
    pub fn burg() -> Self {
        Self {
            name: "burg".to_string(),
            f: Arc::new(|x| {
                if x > 0.0 {
                    x - 1.0 - x.ln()
                } else {
                    f64::INFINITY
                }
            }),
            f_prime: Arc::new(|x| 1.0 - 1.0 / x),
            f_at_one: 0.0,
            conjugate: Arc::new(|xi| {
                if xi < 1.0 {
                    -(1.0 - xi).ln()
                } else {
                    f64::INFINITY
                }
            }),
            conjugate_prime: Arc::new(|xi| 1.0 / (1.0 - xi)),
            f_prime_inverse: Arc::new(|y| if y < 1.0 { Some(1.0 / (1.0 - y)) } else { None }),
        }
    }

    /// Build a family from the generator alone. The conjugate and its
    /// derivative fall back to the numeric maximization of xξ − f(x); the
    /// derivative uses the maximizer (envelope theorem). Likelihood recovery
    /// is available only when `f_prime_inverse` is supplied.
    pub fn from_f(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_at_one: f64,
        f_prime_inverse: Option<PartialFn>,
    ) -> Self {
        let f: ScalarFn = Arc::new(f);
        let fc = Arc::clone(&f);
        let fc2 = Arc::clone(&f);
        Self {
            name: name.into(),
            f,
            f_prime: Arc::new(f_prime),
            f_at_one,
            conjugate: Arc::new(move |xi| {
                numeric_conjugate(fc.as_ref(), xi, CONJUGATE_SEARCH_BOUNDS).value
            }),
            conjugate_prime: Arc::new(move |xi| {
                numeric_conjugate(fc2.as_ref(), xi, CONJUGATE_SEARCH_BOUNDS).maximizer
            }),
            f_prime_inverse: f_prime_inverse
                .unwrap_or_else(|| Arc::new(|_| None)),
        }
    }

    /// Look up a built-in family by its config name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "kl" => Some(Self::kl()),
            "chi2" => Some(Self::chi_squared()),
            "burg" => Some(Self::burg()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        (self.f_prime)(x)
    }

    pub fn f_at_one(&self) -> f64 {
        self.f_at_one
    }

    pub fn conjugate(&self, xi: f64) -> f64 {
        (self.conjugate)(xi)
    }

    pub fn conjugate_prime(&self, xi: f64) -> f64 {
        (self.conjugate_prime)(xi)
    }

    /// (f')⁻¹ evaluated at `y`, or `None` outside the invertibility domain.
    pub fn f_prime_inverse(&self, y: f64) -> Option<f64> {
        (self.f_prime_inverse)(y)
    }
}

/// A finitely supported probability measure. Support points are opaque
/// scenario values; weights form a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::Structural(format!(
                "support has {} points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::Structural("measure must have at least one atom".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { support, weights })
    }

    /// Uniform weights over the given support.
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Structural("measure must have at least one atom".into()));
        }
        let w = 1.0 / n as f64;
        Ok(Self {
            support,
            weights: vec![w; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// D_f(m̃ || m) = Σ_i m_i f(m̃_i / m_i) − f(1), with the convention
/// 0 · f(0/0) = 0 for atoms where both measures vanish.
///
/// `mt` must live on the same support as `m` and be absolutely continuous
/// with respect to it.
pub fn f_divergence(fam: &FDivergence, mt: &DiscreteMeasure, m: &DiscreteMeasure) -> Result<f64> {
    if mt.support() != m.support() {
        return Err(Error::Structural(
            "measures are defined on different supports".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (&wt, &w)) in mt.weights().iter().zip(m.weights()).enumerate() {
        if w == 0.0 {
            if wt > 0.0 {
                return Err(Error::Domain(format!(
                    "not absolutely continuous: atom {i} carries mass {wt} where the base has none"
                )));
            }
            continue; // 0 * f(0/0) = 0
        }
        total += w * fam.f(wt / w);
    }
    Ok(total - fam.f_at_one())
}

/// Outcome of the numeric conjugate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateEstimate {
    /// Grid-refined supremum of xξ − f(x).
    pub value: f64,
    /// Location of the supremum.
    pub maximizer: f64,
    /// Set when the maximizer sits at the edge of the search interval, which
    /// means the reported value may be truncated.
    pub at_boundary: bool,
}

/// Numeric Legendre-Fenchel conjugate: maximize xξ − f(x) over
/// `search_bounds` by a 1024-point log-spaced scan followed by golden-section
/// refinement. Used as a test oracle against closed forms.
pub fn conjugate_numeric(
    fam: &FDivergence,
    xi: f64,
    search_bounds: (f64, f64),
) -> ConjugateEstimate {
    numeric_conjugate(|x| fam.f(x), xi, search_bounds)
}

fn numeric_conjugate(f: impl Fn(f64) -> f64, xi: f64, (lo, hi): (f64, f64)) -> ConjugateEstimate {
    const GRID: usize = 1024;
    let objective = |x: f64| x * xi - f(x);

    // Log-spaced grid with the left endpoint included explicitly.
    let log_lo = lo.max(1e-12).ln();
    let log_hi = hi.ln();
    let mut best_x = lo;
    let mut best_v = objective(lo);
    let mut grid = Vec::with_capacity(GRID + 1);
    grid.push(lo);
    for k in 0..GRID {
        let x = (log_lo + (log_hi - log_lo) * k as f64 / (GRID - 1) as f64).exp();
        grid.push(x);
        let v = objective(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    let best_idx = grid
        .iter()
        .position(|&x| x == best_x)
        .unwrap_or(0);
    let a = if best_idx == 0 { lo } else { grid[best_idx - 1] };
    let b = if best_idx + 1 < grid.len() {
        grid[best_idx + 1]
    } else {
        hi
    };

    // Golden-section refinement; the objective is concave, so the bracketed
    // maximum is unique.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        }
    }
    let x_star = 0.5 * (a + b);
    let v_star = objective(x_star).max(best_v);
    let span = hi - lo;
    ConjugateEstimate {
        value: v_star,
        maximizer: x_star,
        at_boundary: (x_star - lo) < 1e-9 * span.max(1.0) || (hi - x_star) < 1e-9 * span.max(1.0),
    }
}

/// Recover the adversary's optimal likelihood atomwise:
/// L*_i = (f')⁻¹((l_i − μ)/λ).
///
/// The result is not normalized; whether Σ w_i L*_i = 1 holds is the
/// caller's feasibility check.
pub fn recover_likelihood(
    fam: &FDivergence,
    losses: &[f64],
    lambda: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    if lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "likelihood recovery needs lambda > 0, got {lambda}"
        )));
    }
    losses
        .iter()
        .map(|&l| {
            let y = (l - mu) / lambda;
            fam.f_prime_inverse(y).ok_or_else(|| {
                Error::Domain(format!(
                    "argument {y} lies outside the invertibility domain of f' for family {}",
                    fam.name
                ))
            })
        })
        .collect()
}
