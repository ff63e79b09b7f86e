//! Distributionally robust games over f-divergence ambiguity sets.
//!
//! Each player of a robust game minimizes its worst-case expected loss over
//! all reweightings of a base scenario measure within an f-divergence ball.
//! The library provides:
//!
//! * [`divergence`] — divergence families (KL, chi-squared, Burg), their
//!   Legendre-Fenchel conjugates, and worst-case likelihood recovery;
//! * [`game`] — the game model, the finite-dimensional dual reduction of the
//!   inner supremum, worst-case distributions, a variance-based first-order
//!   approximation, equilibrium certification, and mixed extensions of
//!   finite games;
//! * [`bregman`] — mirror-geometry generators, time scalings, and the
//!   accelerated second-order flow with its Lyapunov convergence bound;
//! * [`learning`] — synchronous multi-player learning with deterministic,
//!   single-particle, and particle-swarm gradients, plus classical
//!   gradient/Nesterov baselines;
//! * [`oracle`] — independent brute-force verifiers (primal interior-point
//!   and lattice solvers, triality enumeration, grid optimizers);
//! * [`games`] — the built-in `log_quadratic` and `multimodal` instances.

pub mod bregman;
pub mod divergence;
pub mod error;
pub mod game;
pub mod games;
pub mod learning;
pub mod oracle;

pub use error::{Error, Result};
