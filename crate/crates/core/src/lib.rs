//! Aerocapture guidance simulation toolkit.
//!
//! The crate bundles a 3-DOF flight model over a rotating oblate planet, a
//! fully numeric predictor-corrector aerocapture guidance (FNPAG), a Gaussian
//! mixture variational autoencoder used as a trajectory-mode indicator, the
//! risk-aware correction layer built on top of it, and Monte Carlo tooling.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod roots;
pub mod fnpag;
pub mod gmvae;
pub mod montecarlo;
pub mod pipag;
