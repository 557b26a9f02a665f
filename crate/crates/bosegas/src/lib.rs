//! Finite-volume numerical laboratory for a gas of mutually repellent bosons.
//!
//! The canonical partition function of N bosons in a box is a symmetrized sum
//! of Brownian-bridge expectations. This crate computes it along three
//! independent routes and cross-validates them:
//!
//! * brute force over permutations ([`cycle_expansion::partition_bruteforce`]),
//! * the cycle expansion over integer partitions
//!   ([`cycle_expansion::partition_cycle`]),
//! * a marked Poisson point process with an exact dynamic-programming
//!   treatment of the total-mark-length constraint
//!   ([`poisson_field::estimate_partition_poisson`]).
//!
//! Around that core sit the closed-form ideal-gas free energy with its
//! condensation transition ([`ideal_gas`]), shift-averaged pairing identities
//! and Hamiltonian bounds for the stationary empirical field
//! ([`empirical_field`]), and a restricted variational principle over Poisson
//! candidates that yields certified upper bounds on the interacting free
//! energy ([`variational`]).
//!
//! All estimators draw from counter-derived random streams, so results are
//! bit-identical for a fixed seed regardless of thread count.

pub mod bridges;
pub mod cycle_expansion;
pub mod empirical_field;
pub mod estimator;
pub mod ideal_gas;
pub mod poisson_field;
pub mod potentials;
pub mod rng;
pub mod variational;

pub use bridges::{Bc, BoxSpec, Bridge, LengthWeights, Point, TimeGrid};
pub use estimator::{EstimatorResult, McParams};
pub use poisson_field::MarkedConfiguration;
pub use potentials::PairPotential;
