//! Invariant policy optimization (IPO) workbench.
//!
//! Two benchmark families share one training idea: each training domain owns
//! a policy, the deployed policy is the average of all of them, and the
//! per-domain policies take turns best-responding to that average.
//!
//! - [`lqr`]: output-feedback LQR with high-dimensional distractor
//!   observations, trained by analytic policy gradients.
//! - [`gridworld`] + [`nn`] + [`rl`]: a colored-keys DoorKey POMDP trained
//!   with PPO and with the IPO best-response loop.
//!
//! [`numlin`] holds the dense linear-algebra kernels the LQR side needs.

pub mod error;
pub mod gridworld;
pub mod lqr;
pub mod nn;
pub mod numlin;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
