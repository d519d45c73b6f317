//! Exact-arithmetic engine for orbit invariants over a local field, a
//! constructive matching between twisted-symmetric and unitary orbit data,
//! orbital integrals realized as finite lattice counts, and the comparison
//! identities tying the two sides together — all at desk scale, with every
//! claim certified by exact digit arithmetic.
//!
//! Layout:
//! - [`localfield`]: k' = F_q((π)) and k = k'(j) with certified truncation.
//! - [`fqlin`]: dense linear algebra over the residue field F_q.
//! - [`residue`]: exact arithmetic in 𝔬'/π^N and 𝔬/π^N, Smith normal forms.
//! - [`matspace`]: orbit data, corner minors, anti-diagonal normal form,
//!   invariants.
//! - [`matching`]: the symmetric ↔ unitary transfer of orbit data with
//!   certificates.
//! - [`lattice`]: the finite quotient attached to a coefficient datum and the
//!   module-lattice counts M_i / N.
//! - [`orbital`]: independent brute-force orbital-integral oracles and the
//!   comparison harness.
//! - [`sample`]: seeded samplers for integral orbit data.
//! - [`whittaker`]: the unramified spherical-series identity over exact
//!   rationals.

// Index-form loops are deliberate here: row/column positions address several
// arrays at once in the elimination and enumeration kernels.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fqlin;
pub mod lattice;
pub mod localfield;
pub mod matching;
pub mod matspace;
pub mod orbital;
pub mod par;
pub mod residue;
pub mod sample;
pub mod whittaker;

pub use error::{Error, Result};
