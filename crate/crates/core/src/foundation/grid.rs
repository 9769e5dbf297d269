use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, row-major `height × width` real grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("grid dimensions must be positive, got {height}x{width}")));
        }
        let len = height
            .checked_mul(width)
            .ok_or_else(|| Error::Shape(format!("{height}x{width} overflows")))?;
        if values.len() != len {
            return Err(Error::Shape(format!(
                "{height}x{width} grid needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value {} at index {bad}", values[bad])));
        }
        Ok(Grid { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && value.is_finite());
        Grid { height, width, values: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0);
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Grid { height, width, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { height: self.height, width: self.width, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two grids with equal dimensions.
    pub fn zip_with(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_dims(other)?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn ensure_same_dims(&self, other: &Grid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "expected {}x{}, got {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Grid {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Support (`|v| > 0`) as a mask.
    pub fn support(&self) -> Mask {
        Mask { height: self.height, width: self.width, bits: self.values.iter().map(|&v| v != 0.0).collect() }
    }
}

/// Binary `height × width` mask, e.g. a ground-truth set of important pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(Error::Shape(format!("{height}x{width} mask with {} entries", bits.len())));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Mask { height, width, bits: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Mask::empty(height, width);
        for r in 0..height {
            for c in 0..width {
                m.bits[r * width + c] = f(r, c);
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.bits[row * self.width + col] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Indicator grid with 1.0 on the mask.
    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// True if any set pixel lies in the outermost row or column.
    pub fn touches_border(&self) -> bool {
        (0..self.height).any(|r| self.get(r, 0) || self.get(r, self.width - 1))
            || (0..self.width).any(|c| self.get(0, c) || self.get(self.height - 1, c))
    }
}

/// Scale `grid` to unit Frobenius norm.
pub fn frobenius_normalize(grid: &Grid) -> Result<Grid> {
    let norm = grid.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Normalization("grid is all zeros".into()));
    }
    Ok(grid.map(|v| v / norm))
}

/// Divide every grid by the largest absolute value found anywhere in the set.
pub fn global_scale(grids: &[Grid]) -> Result<Vec<Grid>> {
    let max = grids.iter().fold(0.0_f64, |m, g| m.max(g.max_abs()));
    if max == 0.0 {
        return Err(Error::Normalization("dataset is all zeros".into()));
    }
    Ok(grids.iter().map(|g| g.map(|v| v / max)).collect())
}
