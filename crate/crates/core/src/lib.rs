//! Attractors and Hutchinson measures of generalized iterated function
//! systems.
//!
//! A GIFS of order `m` applies contractions `(R^d)^m -> R^d`; for `m = 1`
//! this is the classical IFS setting. The engine computes
//!
//! * attractors of finite IFS by certified Picard iteration ([`ifs`]),
//! * attractors of GIFS by iterating the evaluation map of induced IFS,
//!   with an Ostrowski error ledger certifying the total error of all
//!   subsampling, pruning and inexact inner solves ([`gifs`], [`report`]),
//! * Hutchinson measures of GIFS with probabilities, by generalized Markov
//!   operators in the Monge-Kantorovich metric ([`measure`]),
//! * experimental chaos-game orbits of induced systems ([`chaos`]).
//!
//! Compact sets are represented as finite point clouds ([`metric`]); every
//! solver reports how far its output can be from the exact object.
//!
//! All operations are pure functions of their inputs: no global state, no
//! interior mutability, deterministic output for identical inputs (including
//! random orbits, which are driven by an explicit counter-based seed).

pub mod chaos;
pub mod error;
pub mod gifs;
pub mod ifs;
pub mod measure;
pub mod metric;
pub mod report;
mod transport;

pub use chaos::{ergodic_average, random_orbit, Observable, OrbitConfig, SplitMix64};
pub use error::{Error, Result};
pub use gifs::{
    approximate_attractor, classical_gifs_iterate, evaluation_map, gifs_step, gifs_step_multi,
    induce_ifs, lipschitz_data, GifsSystem, LipschitzData, MultiAffineMap, OuterOptions, Schedule,
};
pub use ifs::{
    attractor, fractal_step, frobenius_norm, spectral_norm, AffineMap, Budgets, FiniteIfs,
    PruneSchedule,
};
pub use measure::{
    hutchinson_measure, joint_evaluation, joint_iterate, markov_step_gifsp, markov_step_induced,
    mk_distance, mk_distance_1d, mk_upper, DiscreteMeasure, GifsP, JointResult, MK_SUPPORT_CAP,
};
pub use metric::{
    beta_dense_subset, directed_distance, distance, hausdorff, prune_to_grid, Point, PointSet,
};
pub use report::{ConvergenceReport, LedgerRow, OstrowskiLedger};
