//! Variable-step-size super-convergent IMEX-Peer integrators.
//!
//! An `s`-stage IMEX-Peer method advances all stages of a block at once,
//!
//! ```text
//! w_n = P w_{n-1} + dt_n ( Qhat(σ) F0(w_{n-1}) + Rhat F0(w_n) + Q(σ) F1(w_{n-1}) + R F1(w_n) )
//! ```
//!
//! with constant `P`, `R`, `E2` and step-ratio dependent `Q(σ)`, `E1(σ)`.
//! `F0` is treated explicitly through extrapolation and `F1` implicitly with
//! one singly-diagonal Newton solve per stage.
//!
//! Modules:
//! - [`tableau`]: method data, the four shipped methods, text I/O, zero-stability.
//! - [`coeffs`]: σ-dependent matrices, stage/extrapolation defects, order conditions.
//! - [`stability`]: stability matrices, A-stability, `S_α` regions and their summaries.
//! - [`integrator`]: starting procedure, stage solves, error estimate, step-size control.
//! - [`problems`]: split right-hand sides used for testing and benchmarking.

pub mod coeffs;
pub mod integrator;
pub mod linalg;
pub mod problems;
pub mod stability;
pub mod tableau;





