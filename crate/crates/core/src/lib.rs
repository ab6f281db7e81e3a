//! Multimodal maximization with Gaussian-mixture search distributions.
//!
//! The optimizers anneal an entropy-regularized objective
//! `E_q[l] + omega H(q)` over a mixture `q` with natural-gradient steps.
//! As the temperature `omega` decreases, each component concentrates on a
//! distinct maximum of `l`, and the mixture weights approach values set by the
//! curvature at those maxima.

pub mod mixture;
pub mod objectives;
pub mod estimation;
pub mod optimizers;
pub mod bench;
pub mod experiment;

pub use mixture::{GaussianComponent, MixtureState, Point};
pub use objectives::{Objective, Problem, Tier};
