//! Numerical laboratory for coupled Toda-type systems on the unit disc.
//!
//! The crate discretizes the cyclic system
//!
//! ```text
//! Δu_j = 4 (2 e^{u_j} - e^{u_{j-1}} - e^{u_{j+1}}),   j = 1, …, r-1,
//! e^{u_0} = e^{u_r} = E · exp(-(u_1 + … + u_{r-1})),
//! ```
//!
//! on nested polar grids over subdiscs of the unit disc, where `E ≥ 0` is the
//! density of a subharmonic weight.  It provides Dirichlet solvers (damped
//! Newton and a monotone sub/supersolution iteration), disc-exhaustion and
//! mollification drivers, and a verification layer that machine-checks the
//! closed-form solutions, volume bounds, domination estimates, entropy/free
//! energy identities and the discrete distributional inequalities attached to
//! solutions.
//!
//! A minimal end-to-end solve:
//!
//! ```
//! use toda_disc::geometry::{make_grid, background};
//! use toda_disc::weights::{WeightKind, WeightModel};
//! use toda_disc::solver::{boundary_lm, solve_dirichlet, SolveOptions};
//!
//! let grid = make_grid(24, 16, 0.5).unwrap();
//! let bg = background(&grid);
//! let weight = WeightModel { kind: WeightKind::Zero, r: 2 };
//! let boundary = boundary_lm(&grid, 2);
//! let (state, report) = solve_dirichlet(&weight, &grid, &bg, &boundary,
//!                                       &SolveOptions::default()).unwrap();
//! assert!(report.converged);
//! // with zero weight the solution is the hyperbolic one: u_1 = -2 log(1-ρ²)
//! let rho = grid.rho(3);
//! let exact = -2.0 * (1.0 - rho * rho).ln();
//! assert!((state.u[0].values[grid.idx(3, 0)] - exact).abs() < 1e-2);
//! ```

pub mod analysis;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lemma_lab;
pub mod runner;
pub mod solver;
pub mod sparse;
pub mod toda_core;
pub mod weights;

pub use error::{Result, TodaError};
