//! Value iteration, simulation and simulation-based policy search for
//! perishable inventory control.

pub mod config;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mdp;
pub mod policy_io;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod simopt;
pub mod tabular;
pub mod vi;

pub use error::{Error, Result};
