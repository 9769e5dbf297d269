use serde::{Deserialize, Serialize};

use crate::foundation::{reflect_index, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Sobel,
    Laplace,
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
const LAPLACE: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];

/// Zero-sum 3x3 kernels applied to differences from the center pixel, so
/// flat regions give exactly zero.
fn correlate3(x: &Grid, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let (h, w) = x.dims();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let center = x.get(r, c);
            let mut acc = 0.0;
            for (dr, row) in k.iter().enumerate() {
                let rr = reflect_index(r as isize + dr as isize - 1, h);
                for (dc, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        acc += kv * (x.get(rr, reflect_index(c as isize + dc as isize - 1, w)) - center);
                    }
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Sobel gradient magnitude or absolute Laplacian, with reflected borders.
pub fn edge_baseline(kind: EdgeKind, sample: &Grid) -> Grid {
    let (h, w) = sample.dims();
    let values = match kind {
        EdgeKind::Sobel => {
            let gx = correlate3(sample, &SOBEL_X);
            let gy = correlate3(sample, &SOBEL_Y);
            gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
        }
        EdgeKind::Laplace => correlate3(sample, &LAPLACE).into_iter().map(f64::abs).collect(),
    };
    Grid::new(h, w, values).expect("finite filter response")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        for kind in [EdgeKind::Sobel, EdgeKind::Laplace] {
            assert!(edge_baseline(kind, &Grid::filled(6, 7, 0.3)).values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn sobel_on_a_vertical_step() {
        // Columns 0..4 are 0, 4..8 are 1. Hand convolution: the horizontal
        // kernel sums (1 + 2 + 1) * (right - left) = 4 on both columns
        // adjacent to the step and 0 elsewhere; the vertical kernel is 0.
        let x = Grid::from_fn(8, 8, |_, c| if c >= 4 { 1.0 } else { 0.0 });
        let s = edge_baseline(EdgeKind::Sobel, &x);
        for r in 0..8 {
            for c in 0..8 {
                let expect = if c == 3 || c == 4 { 4.0 } else { 0.0 };
                assert_eq!(s.get(r, c), expect, "({r}, {c})");
            }
        }
    }

    #[test]
    fn laplace_impulse_response_is_the_stencil() {
        let x = Grid::from_fn(5, 5, |r, c| if (r, c) == (2, 2) { 1.0 } else { 0.0 });
        let l = edge_baseline(EdgeKind::Laplace, &x);
        for r in 0..5 {
            for c in 0..5 {
                let (dr, dc) = (r as isize - 2, c as isize - 2);
                let expect = if dr.abs() <= 1 && dc.abs() <= 1 { LAPLACE[(dr + 1) as usize][(dc + 1) as usize].abs() } else { 0.0 };
                assert_eq!(l.get(r, c), expect);
            }
        }
    }
}
