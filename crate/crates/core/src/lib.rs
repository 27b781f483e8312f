//! Pseudo-spectral simulation of the parabolic-elliptic Keller-Segel equation with
//! incompressible advection on the unit torus `[-1/2, 1/2)^d`, `d = 2, 3`:
//!
//! ```text
//! ∂ρ/∂t + A (u·∇)ρ − Δρ + ∇·(ρ ∇(−Δ)⁻¹(ρ − ρ̄)) = 0
//! ```
//!
//! The crate is `no_std` + `alloc` when built without the default `std` feature.
//! File formats, configuration and the command-line driver live in the `ksmix` crate.
//!
//! Modules:
//! * [`spectral`]: grids, fields, Fourier coefficients and the Fourier-side calculus.
//! * [`flows`]: incompressible velocity fields (shears, cellular and multi-scale mixers).
//! * [`initdata`]: initial densities, cutoffs and the blow-up parameter recipe.
//! * [`solver`]: IMEX stepping of the full equation, semi-Lagrangian transport, trajectories.
//! * [`diagnostics`]: norms, thresholds, detectors and inequality ratios.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unused_must_use, rust_2018_idioms)]

extern crate alloc;

pub mod diagnostics;
mod error;
mod fft;
pub mod flows;
pub mod initdata;
pub(crate) mod interp;
pub(crate) mod math;
pub mod rng;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Grid, NormConvention, ScalarField, SpectralCoeffs};
