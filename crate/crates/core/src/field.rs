//! Cell-centered scalar fields and face-centered (MAC) vector fields.

use crate::error::FieldError;
use crate::grid::Grid2D;
use crate::ops::KahanSum;

/// Scalar field stored at cell centers, row-major (x fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, data: vec![0.0; grid.ncells()] }
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self { grid, data: vec![value; grid.ncells()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.ncells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.cell_x(i), grid.cell_y(j)));
            }
        }
        Self { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.grid.idx(i, j);
        &mut self.data[k]
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<(), FieldError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    /// Mean value over the domain, by compensated summation.
    pub fn mean(&self) -> f64 {
        let mut acc = KahanSum::new();
        for &v in &self.data {
            acc.add(v);
        }
        acc.value() / self.grid.ncells() as f64
    }

    /// L2 inner product with the cell measure: sum f g |cell|.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let mut acc = KahanSum::new();
        for (a, b) in self.data.iter().zip(&other.data) {
            acc.add(a * b);
        }
        acc.value() * self.grid.cell_volume()
    }

    /// L2 norm with the cell measure.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn shift(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a += c;
        }
    }
}

/// Vector field on the faces of a MAC grid: the u component lives on the
/// (nx+1) x ny vertical faces, the v component on the nx x (ny+1)
/// horizontal faces. Boundary-normal entries are owned by the callers;
/// no-slip/no-flux code keeps them at exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub grid: Grid2D,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            u: vec![0.0; (grid.nx + 1) * grid.ny],
            v: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    /// Index of the vertical face between cells (i-1,j) and (i,j); i in 0..=nx.
    #[inline]
    pub fn uidx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.grid.nx && j < self.grid.ny);
        j * (self.grid.nx + 1) + i
    }

    /// Index of the horizontal face between cells (i,j-1) and (i,j); j in 0..=ny.
    #[inline]
    pub fn vidx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.grid.nx && j <= self.grid.ny);
        j * self.grid.nx + i
    }

    pub fn same_grid(&self, other: &FaceField) -> Result<(), FieldError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    /// Zero the boundary-normal entries (no-penetration / no-flux walls).
    pub fn zero_boundary_normal(&mut self) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            let row = j * (nx + 1);
            self.u[row] = 0.0;
            self.u[row + nx] = 0.0;
        }
        for i in 0..nx {
            self.v[i] = 0.0;
            self.v[ny * nx + i] = 0.0;
        }
    }

    pub fn boundary_normal_max_abs(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut m = 0.0_f64;
        for j in 0..ny {
            m = m.max(self.u[j * (nx + 1)].abs());
            m = m.max(self.u[j * (nx + 1) + nx].abs());
        }
        for i in 0..nx {
            m = m.max(self.v[i].abs());
            m = m.max(self.v[ny * nx + i].abs());
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        let mu = self.u.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let mv = self.v.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        mu.max(mv)
    }

    /// Face inner product: sum over faces of u_f g_f |cell|. Together with
    /// the cell inner product this makes div and -grad exact adjoints.
    pub fn inner(&self, other: &FaceField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let mut acc = KahanSum::new();
        for (a, b) in self.u.iter().zip(&other.u) {
            acc.add(a * b);
        }
        for (a, b) in self.v.iter().zip(&other.v) {
            acc.add(a * b);
        }
        acc.value() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &FaceField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += c * b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::new(8, 6, 1.0, 1.5).unwrap()
    }

    #[test]
    fn mean_of_constant() {
        let f = ScalarField::constant(grid(), 0.3);
        assert_eq!(f.mean(), 0.3);
    }

    #[test]
    fn boundary_normal_zeroing() {
        let g = grid();
        let mut w = FaceField::zeros(g);
        for x in w.u.iter_mut() {
            *x = 1.0;
        }
        for x in w.v.iter_mut() {
            *x = -2.0;
        }
        w.zero_boundary_normal();
        assert_eq!(w.boundary_normal_max_abs(), 0.0);
        assert_eq!(w.u[w.uidx(1, 0)], 1.0);
        assert_eq!(w.v[w.vidx(0, 1)], -2.0);
    }

    #[test]
    fn grid_mismatch_detected() {
        let f = ScalarField::zeros(grid());
        let g = ScalarField::zeros(Grid2D::new(8, 8, 1.0, 1.0).unwrap());
        assert!(f.same_grid(&g).is_err());
    }
}
