//! 8-bit grayscale PNG export for inspection. Never read back.

use std::path::Path;

use image::{GrayImage, Luma};

use super::grid::Grid;
use crate::error::{Error, Result};

/// Linear min-max map to `0..=255`. A constant grid maps to mid-gray.
pub fn to_gray8(grid: &Grid) -> Vec<u8> {
    let (lo, hi) = grid.min_max();
    to_gray8_with_range(grid, lo, hi)
}

pub fn to_gray8_with_range(grid: &Grid, lo: f64, hi: f64) -> Vec<u8> {
    let span = hi - lo;
    grid.values()
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                128
            } else {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            }
        })
        .collect()
}

pub fn write_png(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_vec(grid.width() as u32, grid.height() as u32, to_gray8(grid))
        .expect("buffer length matches dimensions");
    save_gray(&img, path)
}

pub(crate) fn save_gray(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image { context: format!("writing {}", path.display()), source })
}

pub(crate) fn gray_pixel(v: u8) -> Luma<u8> {
    Luma([v])
}
