//! Multi-agent coverage-control simulation for precision spraying.
//!
//! A fleet of spraying drones, modeled as a linear time-varying plant whose
//! mass and inertia deplete as solution is dispensed, covers a farm according
//! to a weed-density priority map. The density-driven controller steers each
//! drone so that the empirical measure of the fleet trajectories matches the
//! reference density in the 2-Wasserstein sense, using a closed-form
//! finite-horizon optimal control law. Lawn-mower and spectral multi-scale
//! coverage baselines, an agronomic dose/survival evaluation layer, and a
//! deterministic scenario runner with CSV/SVG export round out the crate.

pub mod agrosim;
pub mod baselines;
pub mod controller;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod geom;
pub mod runner;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
pub use geom::{Rect, Vec2};
