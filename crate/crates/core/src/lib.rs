#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
