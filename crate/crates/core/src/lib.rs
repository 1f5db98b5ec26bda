//! Programmable string-transformation perturbation spaces for text classifiers, with
//! enumeration, interval abstraction, interval bound propagation, concrete attacks and
//! augmented abstract adversarial training.

pub mod abstraction;
pub mod attack;
pub mod cli;
pub mod data;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod ibp;
pub mod nn;
pub mod perturb;
pub mod train;

pub use error::{Error, Result};
