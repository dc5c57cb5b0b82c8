// SPDX-License-Identifier: Apache-2.0

//! Collisional decoherence of an infinitely massive particle in a dilute
//! thermal gas.
//!
//! The localization rate F(R) that governs
//! ∂ρ(R₁,R₂)/∂t = −F(R₁−R₂)ρ(R₁,R₂) is computed by three independent
//! routes (general scattering formula, per-collision replacement rule and
//! weak coupling), checked against a Monte Carlo simulation of wave-packet
//! collisions, and used to evolve position-space density matrices.

// `!(x > 0.0)` is used deliberately to reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dd;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod oracles;
pub mod quadrature;
pub mod rate;
pub mod scattering;
pub mod special;
pub mod thermal;
pub mod vec3;
pub mod wavepacket_mc;
pub mod weak_coupling;

pub use domain::{make_bath, BathSpec, EpsilonMode, Kinematics, UnitSystem};
pub use error::{Error, Result};
pub use scattering::{AmplitudeModel, LMax, PotentialModel};
pub use vec3::Vec3;
