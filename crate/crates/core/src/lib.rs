//! Experimental design over networks: rate allocation that maximizes the
//! expected D-optimal utility of learners fed by Poisson data streams.

pub mod doptimal;
pub mod error;
pub mod gradest;
pub mod linalg;
pub mod lp;
pub mod netmodel;
pub mod rng;
pub mod optimize;
pub mod eval;
pub mod cli;
