//! Full-reference (PSNR, SSIM, L1) and no-reference (NIQE) quality metrics.

mod fullref;
pub mod niqe;

pub use fullref::{l1_loss, psnr, ssim, SsimParams};
pub use niqe::{niqe_distance, niqe_fit, niqe_score, NiqeModel};
