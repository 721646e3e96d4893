//! Conservative finite-volume operators on the MAC grid.
//!
//! `grad` is the two-point face difference with zero boundary faces (no-flux),
//! `div` the conservative face-flux balance. With the cell and face inner
//! products of the field types, `<div F, f> + <F, grad f> = 0` holds exactly
//! for any F with zero boundary-normal entries; all conservation and mass
//! statements reduce to this telescoping identity.

use crate::error::FieldError;
use crate::field::{FaceField, ScalarField};

/// Compensated (Kahan) accumulator for reductions that feed tight
/// conservation tolerances.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Gradient at faces: interior two-point differences, boundary faces zero.
pub fn grad(f: &ScalarField) -> FaceField {
    let g = f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = FaceField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.u[j * (g.nx + 1) + i] = (f.at(i, j) - f.at(i - 1, j)) / hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.v[j * g.nx + i] = (f.at(i, j) - f.at(i, j - 1)) / hy;
        }
    }
    out
}

/// Divergence at cell centers: conservative face-flux balance.
pub fn div(w: &FaceField) -> ScalarField {
    let g = w.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let du = w.u[w.uidx(i + 1, j)] - w.u[w.uidx(i, j)];
            let dv = w.v[w.vidx(i, j + 1)] - w.v[w.vidx(i, j)];
            out.data[g.idx(i, j)] = du / hx + dv / hy;
        }
    }
    out
}

/// Arithmetic-mean interpolation of a cell field to faces. Boundary faces
/// copy the adjacent cell value (they multiply zero fluxes downstream).
pub fn to_faces(f: &ScalarField) -> FaceField {
    let g = f.grid;
    let mut out = FaceField::zeros(g);
    for j in 0..g.ny {
        out.u[j * (g.nx + 1)] = f.at(0, j);
        out.u[j * (g.nx + 1) + g.nx] = f.at(g.nx - 1, j);
        for i in 1..g.nx {
            out.u[j * (g.nx + 1) + i] = 0.5 * (f.at(i - 1, j) + f.at(i, j));
        }
    }
    for i in 0..g.nx {
        out.v[i] = f.at(i, 0);
        out.v[g.ny * g.nx + i] = f.at(i, g.ny - 1);
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.v[j * g.nx + i] = 0.5 * (f.at(i, j - 1) + f.at(i, j));
        }
    }
    out
}

/// Report of a conjugate-gradient solve.
#[derive(Clone, Copy, Debug)]
pub struct CgReport {
    pub iters: usize,
    pub residual: f64,
}

/// Unpreconditioned conjugate gradients for an SPD operator given as a
/// matvec closure over raw cell data. Deterministic: fixed iteration order,
/// serial reductions.
pub fn conjugate_gradients(
    matvec: &mut dyn FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<CgReport, (f64, f64)> {
    let n = rhs.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    matvec(x, &mut ap);
    for k in 0..n {
        r[k] = rhs[k] - ap[k];
    }
    let mut p = r.clone();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = KahanSum::new();
        for (x, y) in a.iter().zip(b) {
            acc.add(x * y);
        }
        acc.value()
    };
    let rhs_norm = dot(rhs, rhs).sqrt();
    let target = rel_tol * rhs_norm.max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok(CgReport { iters: 0, residual: rr.sqrt() });
    }
    for it in 1..=max_iters {
        matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err((rr.sqrt(), target));
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(CgReport { iters: it, residual: rr_new.sqrt() });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err((rr.sqrt(), target))
}

/// Check the zero-mean compatibility required by Neumann problems.
pub fn require_zero_mean(f: &ScalarField, rel: f64) -> Result<(), FieldError> {
    let mean = f.mean();
    let scale = f.norm() / f.grid.cell_volume().sqrt() / (f.grid.ncells() as f64).sqrt();
    if mean.abs() > rel * scale.max(f64::MIN_POSITIVE) {
        return Err(FieldError::IncompatibleRhs { mean });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn grid() -> Grid2D {
        Grid2D::new(8, 6, 2.0, 1.5).unwrap()
    }

    #[test]
    fn grad_of_constant_vanishes() {
        let f = ScalarField::constant(grid(), 3.7);
        let g = grad(&f);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn grad_of_linear_is_exact() {
        // f = x: interior x-faces carry slope 1 exactly (hand computation of
        // the two-point stencil), interior y-faces zero.
        let f = ScalarField::from_fn(grid(), |x, _| x);
        let g = grad(&f);
        for j in 0..f.grid.ny {
            for i in 1..f.grid.nx {
                assert!((g.u[g.uidx(i, j)] - 1.0).abs() < 1e-14);
            }
        }
        for j in 1..f.grid.ny {
            for i in 0..f.grid.nx {
                assert_eq!(g.v[g.vidx(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn divergence_telescopes_to_zero_total() {
        let g = grid();
        let mut w = FaceField::zeros(g);
        for (k, x) in w.u.iter_mut().enumerate() {
            *x = (k as f64 * 0.7).sin();
        }
        for (k, x) in w.v.iter_mut().enumerate() {
            *x = (k as f64 * 1.3).cos();
        }
        w.zero_boundary_normal();
        let d = div(&w);
        let total: f64 = d.mean() * g.ncells() as f64 * g.cell_volume();
        assert!(total.abs() < 1e-13, "total divergence {total}");
    }

    #[test]
    fn div_grad_adjointness_is_exact() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + y * y);
        let mut w = FaceField::zeros(g);
        for (k, x) in w.u.iter_mut().enumerate() {
            *x = ((k * 37 % 11) as f64 - 5.0) * 0.21;
        }
        for (k, x) in w.v.iter_mut().enumerate() {
            *x = ((k * 53 % 13) as f64 - 6.0) * 0.17;
        }
        w.zero_boundary_normal();
        let lhs = div(&w).inner(&f);
        let rhs = w.inner(&grad(&f));
        assert!(
            (lhs + rhs).abs() <= 1e-13 * (lhs.abs() + rhs.abs()).max(1.0),
            "<div F, f> = {lhs}, <F, grad f> = {rhs}"
        );
    }

    #[test]
    fn cg_solves_small_spd_system() {
        // 1D Dirichlet Laplacian, n=16.
        let n = 16;
        let mut matvec = |x: &[f64], y: &mut [f64]| {
            for k in 0..n {
                let left = if k > 0 { x[k - 1] } else { 0.0 };
                let right = if k + 1 < n { x[k + 1] } else { 0.0 };
                y[k] = 2.0 * x[k] - left - right;
            }
        };
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64 * 0.4).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = conjugate_gradients(&mut matvec, &rhs, &mut x, 1e-13, 200).unwrap();
        let mut ax = vec![0.0; n];
        matvec(&x, &mut ax);
        let err: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-11, "residual {err} after {} iters", rep.iters);
    }
}
