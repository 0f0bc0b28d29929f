//! Numerical laboratory for a collisionless kinetic equation coupled to a bath of
//! transverse wave modes.
//!
//! The coupled system consists of a phase-space density `f(t, x, v)` transported by
//! an external potential `V` plus a self-consistent potential `Φ`, where `Φ` is
//! produced by a wave field driven by the spatial density `ρ = ∫ f dv` through a
//! pair of form factors `σ₁` (spatial) and `σ₂` (transverse). Eliminating the wave
//! field turns the coupling into a causal memory term,
//!
//! ```text
//! Φ(t, x) = Φ₀(t, x) − ∫₀ᵗ p(t−s) (Σ ∗ ρ)(s, x) ds,      Σ = σ₁ ∗ σ₁,
//! ```
//!
//! with a kernel `p` determined by `σ₂` and the wave speed. This crate implements
//! that reformulation end to end: form-factor constructions and radial transforms
//! ([`formfactor`]), the memory kernel and its tail/limit constants ([`kernel`]),
//! potential assembly including a direct spectral wave solver used as an
//! equivalence oracle ([`potential`]), semi-Lagrangian transport with
//! characteristic tracing, Picard iteration, and an N-particle sampler
//! ([`transport`]), large-wave-speed asymptotics ([`asymptotics`]), and
//! conservation/distance diagnostics ([`diagnostics`]).

pub mod asymptotics;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod formfactor;
pub mod grid;
pub mod kernel;
pub mod potential;
pub mod quad;
pub mod runner;
pub mod snapshot;
pub mod special;
pub mod transport;
pub mod validate;

pub use error::{Error, Result};
