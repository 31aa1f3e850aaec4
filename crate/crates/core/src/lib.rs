//! Illumination-aware synthesis of nighttime weather degradations, image
//! quality metrics, and the sparse top-K routing math used to restore them.

// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel arrays are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod compose;
pub mod curation;
pub mod error;
pub mod fixtures;
pub mod flare;
pub mod imaging;
pub mod quality;
pub mod retinex;
pub mod routing;
pub mod weather;

pub use error::{Error, Result};
