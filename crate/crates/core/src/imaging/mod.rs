//! Image containers, filtering, resampling, seeded randomness and PNG I/O.

mod buffer;
mod filter;
pub mod io;
mod rng;

pub use buffer::{luminance, ImageRgb, Plane, LUMA_WEIGHTS};
pub use filter::{
    blur_radius, convolve2d, gaussian_blur, gaussian_kernel, gaussian_taps, resize_bilinear,
    Border, Kernel2d,
};
pub use rng::{derive_seed, SeededRng, GENERATOR_NAME};
