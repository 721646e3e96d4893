//! Fast Neumann Poisson solver on the cell-centered grid.
//!
//! Solves `-div(grad u) = f` with zero-flux boundary faces and zero-mean
//! normalization, i.e. the discrete realization of the inverse Neumann
//! Laplacian on zero-mean fields. The five-point operator with reflected
//! ghosts is diagonalized by the DCT-II basis `cos(pi k (i+1/2)/n)` with
//! eigenvalues `(4/h^2) sin^2(pi k / (2n))`, so one forward DCT-II, a
//! spectral division and one inverse DCT-III per direction give a direct
//! solve. The same operator powers the H^-1 norm `sqrt(<f, N f>)` used by
//! the twin-trajectory contraction test.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::FieldError;
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::ops::{div, grad};

/// Relative compatibility tolerance: |mean(rhs)| <= REL * ||rhs||.
const MEAN_REL_TOL: f64 = 1e-10;
/// Residual guarantee of the direct solve.
const RESIDUAL_REL_TOL: f64 = 1e-11;

pub struct NeumannPoisson {
    grid: Grid2D,
    dct_x: Arc<dyn TransformType2And3<f64>>,
    dct_y: Arc<dyn TransformType2And3<f64>>,
    lam_x: Vec<f64>,
    lam_y: Vec<f64>,
}

impl NeumannPoisson {
    pub fn new(grid: Grid2D) -> Self {
        let mut planner = DctPlanner::new();
        let dct_x = planner.plan_dct2(grid.nx);
        let dct_y = planner.plan_dct2(grid.ny);
        let lam = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
                    4.0 * s * s / (h * h)
                })
                .collect()
        };
        Self {
            grid,
            dct_x,
            dct_y,
            lam_x: lam(grid.nx, grid.hx()),
            lam_y: lam(grid.ny, grid.hy()),
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Discrete eigenvalue of the mode `cos(pi k x / lx)` sampled at cell
    /// centers: `(2/hx^2)(1 - cos(pi k hx / lx))`.
    pub fn eigenvalue_x(&self, k: usize) -> f64 {
        self.lam_x[k]
    }

    fn dct2_rows(&self, data: &mut [f64]) {
        let nx = self.grid.nx;
        for row in data.chunks_mut(nx) {
            self.dct_x.process_dct2(row);
        }
    }

    fn dct3_rows(&self, data: &mut [f64]) {
        let nx = self.grid.nx;
        for row in data.chunks_mut(nx) {
            self.dct_x.process_dct3(row);
        }
    }

    fn columns<F: Fn(&Arc<dyn TransformType2And3<f64>>, &mut [f64])>(&self, data: &mut [f64], f: F) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            f(&self.dct_y, &mut col);
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }

    /// Apply the inverse Neumann Laplacian N: solves `-div(grad u) = rhs`
    /// with mean(u) = 0. Rejects rhss that violate the zero-mean
    /// compatibility condition.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField, FieldError> {
        if rhs.grid != self.grid {
            return Err(FieldError::GridMismatch);
        }
        let mean = rhs.mean();
        let norm = rhs.norm();
        if mean.abs() > MEAN_REL_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(FieldError::IncompatibleRhs { mean });
        }

        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut hat = rhs.data.clone();
        self.dct2_rows(&mut hat);
        self.columns(&mut hat, |t, col| t.process_dct2(col));

        for ky in 0..ny {
            for kx in 0..nx {
                let k = ky * nx + kx;
                let lam = self.lam_x[kx] + self.lam_y[ky];
                if kx == 0 && ky == 0 {
                    hat[k] = 0.0; // zero-mean normalization
                } else {
                    hat[k] /= lam;
                }
            }
        }

        self.dct3_rows(&mut hat);
        self.columns(&mut hat, |t, col| t.process_dct3(col));
        let scale = 4.0 / (nx as f64 * ny as f64);
        for v in hat.iter_mut() {
            *v *= scale;
        }
        let sol = ScalarField { grid: self.grid, data: hat };

        // Direct solves are exact to round-off; verify the contract anyway.
        if norm > 0.0 {
            let mut residual = div(&grad(&sol));
            residual.scale(-1.0);
            residual.axpy(-1.0, rhs);
            let rel = residual.norm() / norm;
            if rel > RESIDUAL_REL_TOL {
                return Err(FieldError::PoissonResidual { residual: rel, tol: RESIDUAL_REL_TOL });
            }
        }
        Ok(sol)
    }

    /// H^-1 norm of a zero-mean field: `sqrt(<f, N f>)`.
    pub fn hminus1_norm(&self, f: &ScalarField) -> Result<f64, FieldError> {
        let nf = self.solve(f)?;
        let q = f.inner(&nf);
        // N is SPD on zero-mean fields; tiny negative values are round-off.
        Ok(q.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::conjugate_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let p = NeumannPoisson::new(grid(16));
        let sol = p.solve(&ScalarField::zeros(grid(16))).unwrap();
        assert_eq!(sol.max_abs(), 0.0);
    }

    #[test]
    fn rejects_incompatible_rhs() {
        let p = NeumannPoisson::new(grid(8));
        let rhs = ScalarField::constant(grid(8), 1.0);
        match p.solve(&rhs) {
            Err(FieldError::IncompatibleRhs { mean }) => assert!((mean - 1.0).abs() < 1e-15),
            other => panic!("expected IncompatibleRhs, got {other:?}"),
        }
    }

    #[test]
    fn neumann_eigenfunction_identity() {
        // rhs = cos(pi x / lx) is a discrete eigenfunction; the solution is
        // rhs / lambda_h with lambda_h = (2/hx^2)(1 - cos(pi hx / lx)).
        let g = grid(32);
        let p = NeumannPoisson::new(g);
        let rhs = ScalarField::from_fn(g, |x, _| (std::f64::consts::PI * x / g.lx).cos());
        let hx = g.hx();
        let lam = 2.0 / (hx * hx) * (1.0 - (std::f64::consts::PI * hx / g.lx).cos());
        assert!((p.eigenvalue_x(1) - lam).abs() <= 1e-12 * lam);
        let sol = p.solve(&rhs).unwrap();
        for (s, r) in sol.data.iter().zip(&rhs.data) {
            assert!((s - r / lam).abs() < 1e-12, "{s} vs {}", r / lam);
        }
    }

    #[test]
    fn matches_conjugate_gradient_oracle() {
        // Independent path: CG on the same five-point operator.
        let g = grid(32);
        let p = NeumannPoisson::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut rhs = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let m = rhs.mean();
        rhs.shift(-m);

        let sol = p.solve(&rhs).unwrap();

        let mut matvec = |x: &[f64], y: &mut [f64]| {
            let xf = ScalarField { grid: g, data: x.to_vec() };
            let mut lap = div(&grad(&xf));
            lap.scale(-1.0);
            y.copy_from_slice(&lap.data);
        };
        let mut x = vec![0.0; g.ncells()];
        conjugate_gradients(&mut matvec, &rhs.data, &mut x, 1e-13, 20_000).unwrap();

        let mut diff = 0.0_f64;
        for (a, b) in sol.data.iter().zip(&x) {
            diff = diff.max((a - b).abs());
        }
        assert!(diff < 1e-9, "DCT vs CG max difference {diff}");
    }

    #[test]
    fn operator_is_symmetric_and_positive() {
        let g = grid(16);
        let p = NeumannPoisson::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut f = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let mut h = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let (mf, mh) = (f.mean(), h.mean());
        f.shift(-mf);
        h.shift(-mh);
        let nf = p.solve(&f).unwrap();
        let nh = p.solve(&h).unwrap();
        let a = f.inner(&nh);
        let b = h.inner(&nf);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30));
        assert!(f.inner(&nf) > 0.0);
    }

    #[test]
    fn hminus1_eigenfunction_and_scaling() {
        let g = grid(24);
        let p = NeumannPoisson::new(g);
        let f = ScalarField::from_fn(g, |x, _| (std::f64::consts::PI * x / g.lx).cos());
        let lam = p.eigenvalue_x(1);
        let norm = p.hminus1_norm(&f).unwrap();
        let expected = (f.inner(&f) / lam).sqrt();
        assert!((norm - expected).abs() <= 1e-12 * expected);

        let mut f2 = f.clone();
        f2.scale(2.0);
        let norm2 = p.hminus1_norm(&f2).unwrap();
        assert!((norm2 - 2.0 * norm).abs() <= 1e-12 * norm2);

        assert_eq!(p.hminus1_norm(&ScalarField::zeros(g)).unwrap(), 0.0);
    }
}
