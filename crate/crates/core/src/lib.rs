//! Risk-averse multi-path air-ground rendezvous planning and simulation.
//!
//! A UAS must meet an uncertain human-driven ground vehicle that may take any
//! of `N` road paths, while a deterministic abort plan guarantees the aircraft
//! never runs out of energy. The crate provides the full planning stack plus a
//! mission simulator:
//!
//! - [`geometry`]: parametrized road paths, shared-prefix divergence table and
//!   reachability pruning as the driver commits to branches.
//! - [`traffic`]: historical speed profiles and the simulated ground-truth
//!   driver emitting noisy measurements.
//! - [`gpr`]: Gaussian-process learning of the driver deviation function,
//!   full regression and the sparse DTC approximation.
//! - [`numerics`]: adaptive Gauss-Kronrod quadrature, partial top-k selection
//!   and Gaussian lower-tail CVaR.
//! - [`sampler`]: cross-entropy search over rendezvous times with
//!   downside-risk-weighted energy costs.
//! - [`planner`]: the four-segment point-of-no-return optimal control problem
//!   and an independent plan checker.
//! - [`risk`]: the CVaR-gated go/abort decision on the extra-fuel
//!   distribution.
//! - [`mission`]: the outer control loop, branch execution, persistent-safety
//!   monitor and run logs.
//! - [`cli`]: scenario configs, Monte Carlo sweeps, benchmarks and CSV/JSON
//!   emission backing the `rdv` binary.
//!
//! Each major capability has a runnable demo under `examples/`; start with
//! `cargo run --release --example full_mission`.

pub mod cli;
pub mod geometry;
pub mod gpr;
pub mod mission;
pub mod numerics;
pub mod planner;
pub mod risk;
pub mod sampler;
pub mod traffic;

pub use geometry::{Path, PathMap, Point, ReachableSet};
pub use gpr::{Dataset, GpKind, GpModel, KernelConfig};
pub use traffic::{DeviationRule, DriverTruth, HistoricalProfile, Measurement};
