//! Species abundance and species accumulation modelling with mixed Poisson
//! partition processes.
//!
//! A survey observed on `[0, t0]` is summarised by its frequency of
//! frequencies ([`FrequencyOfFrequencies`]). Under a mixed Poisson partition
//! process the expected species accumulation curve `ψ(t)` is a Bernstein
//! function, and every quantity of interest (expected frequency counts, the
//! species abundance distribution, richness, Hill numbers) is a functional of
//! `ψ`. This crate provides
//!
//! - model-free estimators of `ψ` and its derivatives with diagnostic curves
//!   ([`nonparam`]),
//! - the parametric families LDR1, LDR2, RDR1 and Poisson–lognormal
//!   ([`models`]) with maximum likelihood fitting ([`fit`]),
//! - richness estimators and the truncated-Poisson test ([`richness`]),
//! - Hill numbers ([`hill`]) and parametric bootstrap intervals
//!   ([`bootstrap`]),
//! - simulation ([`simulate`]) and inference from accumulation curves alone
//!   ([`sac`]).
//!
//! ```
//! use sadsac::{datasets, fit, models::Family};
//!
//! let bird = datasets::bird();
//! let res = fit::mle(&bird, Family::Ldr1).unwrap();
//! assert!(res.converged);
//! ```

pub mod bootstrap;
pub mod data;
pub mod datasets;
mod error;
mod ext;
pub mod fit;
pub mod hill;
pub mod models;
pub mod nonparam;
pub mod optim;
pub mod quad;
pub mod richness;
pub mod rng;
pub mod sac;
pub mod simulate;

pub use data::{BinnedSac, FrequencyOfFrequencies, RhoAppearanceData, Summary};
pub use error::{Error, Result};
pub use ext::{json_f64, ExtendedNonnegReal};
pub use models::{Family, Model};

/// Crate version, embedded in serialized outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
