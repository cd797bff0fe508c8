//! Monte Carlo laboratory for the random length worms percolation model and
//! the general Poisson zoo on `Z^d`, with the discrete potential theory
//! (Green function, capacity, equilibrium measure, Dirichlet energy) and a
//! certifier for good sequences of scales.

pub mod harness;
pub mod lattice;
pub mod lengths;
pub mod percolation;
pub mod potential;
pub mod rng;
pub mod scales;
pub mod stats;
pub mod walk;
pub mod worms;
