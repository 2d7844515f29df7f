//! Simulation and theory of a preferential neuron-activation process.
//!
//! * [`urn`] simulates the process with an exact indexed sampler.
//! * [`analytic`] holds the closed-form growth of working neurons.
//! * [`loss`] turns activation distributions into loss curves.
//! * [`estimators`] fits power laws, breakpoints and scaling curves.
//! * [`harness`] runs seeded replicate sweeps and writes reports.

pub mod analytic;
pub mod estimators;
pub mod harness;
pub mod loss;
pub mod urn;
