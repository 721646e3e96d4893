//! Uniform rectangular cell-centered grid.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Uniform Cartesian grid over the rectangle `[0, lx] x [0, ly]` with
/// `nx x ny` cells. Scalars live at cell centers, velocity components on
/// cell faces (MAC arrangement).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 {
            return Err(FieldError::GridTooSmall { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(FieldError::BadExtent { lx, ly });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Cell volume (area in 2D), constant across the grid.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn ncells(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major cell index: x runs fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// x-coordinate of the center of cell column `i`.
    #[inline]
    pub fn cell_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    /// y-coordinate of the center of cell row `j`.
    #[inline]
    pub fn cell_y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    /// Smallest cell extent, used by CFL guards.
    #[inline]
    pub fn h_min(&self) -> f64 {
        self.hx().min(self.hy())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 2, 1.0, 1.0).is_err());
        assert!(Grid2D::new(4, 4, 1.0, 1.0).is_ok());
    }

    #[test]
    fn rejects_bad_extent() {
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 1.0, -2.0).is_err());
        assert!(Grid2D::new(8, 8, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn spacing_and_centers() {
        let g = Grid2D::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.25);
        assert_eq!(g.cell_x(0), 0.125);
        assert_eq!(g.cell_y(3), 0.875);
        assert_eq!(g.cell_volume(), 0.0625);
    }
}
