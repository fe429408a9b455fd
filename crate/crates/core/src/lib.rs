//! Componentwise local differential privacy.
//!
//! Each coordinate of a data vector goes through its own channel with its own
//! level `alpha_j`. This crate provides those channels and an audit of their
//! privacy level, the contraction bounds relating divergences before and after
//! privatization, rate-optimal and adaptive private estimators for joint
//! moments and pointwise densities, the two-point lower-bound constructions,
//! and a Monte Carlo harness that checks convergence rates by slope fits.
//!
//! Conventions: total variation is the unnormalized L1 distance in `[0, 2]`;
//! divergences are in nats; `L(b)` is the centered Laplace law with scale `b`.

pub mod adaptive;
pub mod channels;
pub mod config;
pub mod contraction;
pub mod effective_privacy;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lowerbounds;
pub mod measures;
pub mod rng;
pub mod simdata;

pub use error::{Error, Result};
