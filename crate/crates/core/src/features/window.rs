//! Neighborhood windows and the secondary window statistics.

use crate::image::FatImage;

use super::FeatureError;

/// A small row-major grid of grays, usually a neighborhood window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl GrayGrid {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        assert_eq!(values.len(), width * height, "value count mismatch");
        Self { width, height, values }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }
}

/// Copies the `side`x`side` neighborhood centered at `(px, py)`; pixels
/// beyond the image border are handled as black.
pub fn window_at(img: &FatImage, px: usize, py: usize, side: usize) -> GrayGrid {
    assert!(side % 2 == 1 && side >= 3, "window side must be odd and >= 3");
    let q = (side / 2) as i64;
    let mut values = vec![0u8; side * side];
    for r in 0..side {
        let y = py as i64 - q + r as i64;
        if y < 0 || y >= img.height as i64 {
            continue;
        }
        let src_row = &img.gray[y as usize * img.width..(y as usize + 1) * img.width];
        for c in 0..side {
            let x = px as i64 - q + c as i64;
            if x >= 0 && x < img.width as i64 {
                values[r * side + c] = src_row[x as usize];
            }
        }
    }
    GrayGrid::new(side, side, values)
}

/// Geometric moment M(m, n) = sum over the grid of col^m * row^n * gray/255,
/// with 0-based indices.
pub fn geometric_moment(grid: &GrayGrid, m: u32, n: u32) -> f64 {
    let mut total = 0.0;
    for row in 0..grid.height {
        let rn = (row as f64).powi(n as i32);
        for col in 0..grid.width {
            let v = grid.get(row, col);
            if v != 0 {
                total += (col as f64).powi(m as i32) * rn * (v as f64 / 255.0);
            }
        }
    }
    total
}

/// Center of gravity (x_g, y_g) = (M(1,0)/M(0,0), M(0,1)/M(0,0)).
pub fn center_of_gravity(img: &FatImage) -> Result<(f64, f64), FeatureError> {
    let grid = GrayGrid::new(img.width, img.height, img.gray.clone());
    let m00 = geometric_moment(&grid, 0, 0);
    if m00 == 0.0 {
        return Err(FeatureError::UndefinedCenterOfGravity);
    }
    let m10 = geometric_moment(&grid, 1, 0);
    let m01 = geometric_moment(&grid, 0, 1);
    Ok((m10 / m00, m01 / m00))
}

/// Per-distance weights `beta^(1/(d+1))` for Chebyshev distances 0..=q.
pub fn csv_weights(q: usize, beta: f64) -> Vec<f64> {
    (0..=q).map(|d| beta.powf(1.0 / (d as f64 + 1.0))).collect()
}

/// Coefficient of smooth variation: every pixel weighted by
/// `beta^(1/(d+1))` where d is its Chebyshev distance to the window center,
/// applied to normalized grays.
pub fn csv(grid: &GrayGrid, beta: f64) -> f64 {
    assert_eq!(grid.width, grid.height, "CSV window must be square");
    assert!(grid.width % 2 == 1, "CSV window side must be odd");
    let q = grid.width / 2;
    let weights = csv_weights(q, beta);
    csv_with_weights(grid, &weights)
}

pub(super) fn csv_with_weights(grid: &GrayGrid, weights: &[f64]) -> f64 {
    let q = (grid.width / 2) as i64;
    let mut total = 0.0;
    for row in 0..grid.height {
        let dr = (row as i64 - q).abs();
        for col in 0..grid.width {
            let v = grid.get(row, col);
            if v != 0 {
                let d = dr.max((col as i64 - q).abs()) as usize;
                total += weights[d] * (v as f64 / 255.0);
            }
        }
    }
    total
}

/// Arithmetic mean of the window grays (out-of-bounds zeros included).
pub fn neighborhood_mean(grid: &GrayGrid) -> f64 {
    let sum: u64 = grid.values.iter().map(|&v| v as u64).sum();
    sum as f64 / grid.values.len() as f64
}
