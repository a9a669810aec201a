//! Fair-delay multi-robot navigation.
//!
//! Circular robots share a 2D map with static obstacles and must each reach
//! a goal region. Every robot runs the same cooperative policy: a residual
//! navigation module on top of a dynamic-window controller, plus a binary
//! filter that decides, from exchanged patience messages, whether the robot
//! should move this step. The crate contains the simulator, the message
//! protocol and its counterfactual reward, a small autodiff stack, a
//! hybrid-reward soft actor-critic trainer with an actor/learner pipeline,
//! and the evaluation harness.

pub mod cli;
pub mod config;
pub mod dwa;
pub mod env;
pub mod eval;
pub mod geom2d;
pub mod io;
pub mod learn;
pub mod ncf2;
pub mod nets;
pub mod plot;
pub mod rng;
pub mod selftest;

pub use geom2d::{Action, Circle, CrashKind, Pose, WorldMap};
