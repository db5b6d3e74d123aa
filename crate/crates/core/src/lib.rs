//! Budgeted information gathering on 2D occupancy worlds.
//!
//! A robot with a travel budget `B` and a horizon of `T` sensing steps visits
//! candidate nodes, raycasts against the (hidden) world and is rewarded by the
//! fraction of coverable surface it observes. This crate contains:
//!
//! * [`worldgen`]: world families, candidate node sampling and the dataset file format,
//! * [`sensor`]: the raycast measurement model and the evidence-grid belief,
//! * [`objective`]: coverage utility, marginal gain, travel cost and feasibility,
//! * [`planners`]: the clairvoyant GCB oracle, oracle value-to-go, heuristic baselines
//!   and an exhaustive solver for tiny instances,
//! * [`features`]: the 16-dimensional feature map shared by the heuristics and the learner,
//! * [`learner`]: a regression forest and the greedy learned policy,
//! * [`explore`]: imitation learning of the oracle with dataset aggregation, plus
//!   episode evaluation for any policy.

pub mod error;
pub mod explore;
pub mod features;
pub mod geometry;
pub mod learner;
pub mod objective;
mod par;
pub mod seed;
pub mod planners;
pub mod sensor;
pub mod worldgen;

pub use error::{Error, Result};
pub use geometry::Point;
