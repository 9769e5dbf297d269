//! Randomness, grids, smoothing and the grid file format.

pub mod grid;
pub mod gridfile;
pub mod png;
pub mod rng;
pub mod smooth;

pub use grid::{frobenius_normalize, global_scale, Grid, Mask};
pub use gridfile::{read_grid_file, write_grid_file};
pub use png::write_png;
pub use rng::{draw_standard_normals, stream_id, Rng};
pub use smooth::{gaussian_smooth, Border, GaussianKernelSpec};
pub(crate) use smooth::reflect_index;
