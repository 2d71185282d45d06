//! Particle solvers for Wasserstein-regularized distributionally robust
//! optimization.
//!
//! The problem is `min_{φ∈Φ} max_Q E_Q[ℓ(f_φ, ξ)] - λ·D(Q, P)`. Distributions
//! `Q` are pushforwards of a fixed particle cloud `P` by parameterized
//! transport maps. The inner maximization runs a proximal (JKO-type) scheme
//! over map parameters; the outer loop is projected subgradient descent on φ.

pub mod diagnostics;
pub mod error;
pub mod jko;
pub mod measures;
pub mod objective;
pub mod solver;
pub mod testbeds;
pub mod transport;

pub use error::{Error, Result};
pub use measures::{ParticleCloud, ReferenceMeasure, RNG_NAME};
pub use objective::{
    Component, Constants, Constraint, DecisionModel, Discrepancy, LossKind, ModelKind, ProblemSpec,
};
pub use transport::TransportMap;
