//! Chebyshev pseudospectral solver for 2D transient diffusion with a
//! time-rotating anisotropic tensor, and Levenberg–Marquardt reconstruction
//! of the principal diffusivities `k11(x, y)`, `k22(x, y)` from snapshots.
//!
//! The pieces, bottom up: [`cheb`] (nodes, `D`, `P`), [`tensor`] (principal
//! fields and `θ(t)`), [`assembly`] (`M(t)` and `Sg(t)` with Robin closures),
//! [`forward`] (Crank–Nicolson), [`sensitivity`] (exact Jacobian), and
//! [`inversion`] (measurements, noise, LM). [`config`], [`io`] and [`cli`]
//! drive the `anisodiff` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cheb;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod manufactured;
pub mod sensitivity;
pub mod tensor;
