//! Learn-then-distill: per-task goal-conditioned experts trained with
//! demonstration-guided RL, unified by behavior distillation, with a
//! lifelong-learning benchmark harness.

mod binio;
pub mod demo_rl;
pub mod distill;
pub mod envsuite;
pub mod error;
pub mod harness;
pub mod numkit;
pub mod ot_reward;
pub mod profile;
pub mod rng;

pub use error::{Error, Result};
