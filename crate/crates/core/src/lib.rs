//! Event-driven front tracking for 1-D strictly hyperbolic systems of
//! conservation laws with general nonlinear (possibly nonconvex) flux.
//!
//! The crate is organized around a single pipeline:
//!
//! - [`system`] — flux, Jacobian, eigenstructure and the global parameter
//!   `μ(u) = l̂·u` used to parametrize all wave curves; built-in test systems.
//! - [`nonlinearity`] — directional nonlinearity coefficients `π_j^(k)`,
//!   critical exponents, the nondegeneracy check and a degeneracy finder.
//! - [`oracles`] — independent ground truth: the Oleinik hull solver for
//!   scalar Riemann problems, a first-order finite-volume reference scheme,
//!   and L¹/rate utilities. Kept free of any dependency on the wave-curve
//!   machinery so it can serve as an oracle for it.
//! - [`wave_curves`] — rarefaction (integral) curves, Hugoniot continuation,
//!   and the composite wave curve with its monotone wave-speed function,
//!   built through the convex-hull characterization of the reduced flux.
//! - [`riemann`] — the full N-family Riemann solver, interaction potentials,
//!   generalized angles, and interaction-estimate predicates.
//! - [`front_tracking`] — the ε-approximate event-driven scheme: accurate and
//!   approximate interaction solvers, wave splitting, artificial fronts,
//!   speed perturbation, generation bookkeeping.
//! - [`functionals`] — Glimm-type functionals V, Q, Θ_ε, N, F, per-generation
//!   accounting and the entropy residual.
//! - [`graph`] — the parametrized-graph representation (σ, X, Φ-completion)
//!   of a front-tracking trajectory and its regularity checks.
//! - [`accept`] — the acceptance battery wired to the criteria the project
//!   ships with; run it via `cargo test -p hypertrack-core --test acceptance`
//!   or the `hypertrack accept` subcommand.

pub mod accept;
pub mod error;
pub mod front_tracking;
pub mod functionals;
pub mod graph;
pub mod nonlinearity;
pub mod oracles;
pub mod riemann;
pub mod system;
pub mod wave_curves;

pub use error::{Error, Result};
pub use system::{HyperbolicSystem, State};
