//! Capra conjugacy for functions of the support mapping.
//!
//! A function of the support mapping is `x ↦ F(supp(x))` for a set function
//! `F : 2^V → [-∞, +∞]`, `V = {1,…,d}`. The crate evaluates its conjugates
//! and biconjugate under the Capra coupling `¢(x, y) = <x, y> / ‖x‖`, the
//! local norm families these formulas rely on, subdifferentials, and the
//! variational formulas and bounds that follow.

pub mod capra;
pub mod decomp;
pub mod engine;
pub mod error;
pub mod localnorms;
mod lp;
pub mod norms;
pub mod oracle;
pub mod par;
pub mod setfn;
pub mod subsets;
pub mod variational;
pub mod verify;

pub use error::{Error, Result};
pub use subsets::{ExtReal, SubsetMask, Vector};
