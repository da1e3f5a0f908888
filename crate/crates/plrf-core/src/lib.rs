//! Power-law random features (PLRF) regression trained with one-pass signSGD, SGD and Adam.
//!
//! The crate covers the sampled problem instance ([`model`]), learning-rate schedules
//! ([`schedule`]), stochastic training ([`sampler`], [`optim`], [`trajectory`]), the mode-wise
//! deterministic dynamics ([`ode`]), closed-form loss laws ([`theory`]), compute-optimal
//! exponents with a minimax oracle ([`optimal`]) and envelope/slope fitting ([`fit`]).
//!
//! Builds without `std` (an allocator is required); disable default features for that.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod fit;
pub mod model;
pub mod ode;
pub mod optim;
pub mod optimal;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod theory;
pub mod trajectory;

mod linalg;

pub use error::{Error, Result};
pub use model::{build_instance, BuildOptions, PlrfInstance, PlrfParams};
pub use optim::{OptimizerConfig, OptimizerKind};
pub use schedule::{Schedule, ScheduleKind};
