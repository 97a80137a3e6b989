//! Simple recurrent networks that learn artificial morphology, and the
//! two-phase transfer experiments built on them.
//!
//! - [`phonfeat`]: phonetic feature vectors and segment inventories
//! - [`langgen`]: roots, morphological rules, lexicons, splits, syllables
//! - [`srn`]: masked simple recurrent networks and a gradient checker
//! - [`percept`]: word perception (phones to root and inflections)
//! - [`produce`]: syllable-to-phone production
//! - [`xfer`]: experiment conditions, runs, statistics and CSV output

pub mod curve;
pub mod error;
pub mod langgen;
pub mod percept;
pub mod phonfeat;
pub mod produce;
pub mod srn;
pub mod xfer;

pub use error::{Error, Result};
