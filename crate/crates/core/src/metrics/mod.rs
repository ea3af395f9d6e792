//! Image-quality metrics, ROI statistics, and Patlak graphical analysis.

mod image;
mod patlak;
mod roi;
mod stats;

pub use image::{psnr, ssim, ssim_window, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_TRUNCATE};
pub use patlak::{patlak_plot, roi_tac, PatlakPlot, Tac};
pub use roi::{cnr, cnr_improvement, RoiSet, REFERENCE_RADIUS, REFERENCE_SPHERES};
pub use stats::{ttest_independent, TTest};
