//! Discrete interaction kernels and bounded-domain convolution.
//!
//! The continuous operator is `(J*f)(x) = int_Omega J(x-y) f(y) dy` with an
//! even kernel J. On the uniform grid this becomes a discrete sum over cell
//! averages of J tabulated on the (2nx-1) x (2ny-1) lattice of cell offsets,
//! evaluated through zero-padded (non-circular) FFTs. Zero extension of f
//! outside the domain reproduces the Omega-restricted integral exactly, so
//! the ambient field `a = J * chi_Omega` carries the boundary-dependent
//! values the analysis works with.
//!
//! Constant fields are handled specially: `J*(f)` is computed as
//! `J*(f - mean) + mean * a`, which makes `J*c = c a` and
//! `grad(J)*c = c grad(a)` hold to the last bit and turns constant states
//! into exact discrete equilibria of the phase-field flux.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{FieldError, KernelError};
use crate::field::ScalarField;
use crate::grid::Grid2D;

/// Kernel families. All continuous families are even by construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `A exp(-r^2/w^2) / (pi w^2)`: unit-mass profile times the amplitude.
    Gaussian { width: f64 },
    /// `-j2 log(max(r, core_radius))`; `core_radius = 0` keeps the
    /// integrable log singularity and uses exact origin-cell quadrature.
    Log2d { strength: f64, #[serde(default)] core_radius: f64 },
    /// `A r^-exponent` for `r <= cutoff`, zero beyond.
    TruncatedPower { exponent: f64, cutoff: f64 },
    /// Cell averages read from a CSV of `(dx, dy, value)` triples on the
    /// padded offset lattice.
    Table { path: PathBuf },
}

/// Kernel specification: family, scale of the family `J_m(x) = m^4 J(m x)`
/// (d = 2), and a linear amplitude.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(KernelError::NonPositiveParameter { name, value })
            }
        };
        positive("scale", self.scale)?;
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(KernelError::NonPositiveParameter { name: "amplitude", value: self.amplitude });
        }
        match &self.family {
            KernelFamily::Gaussian { width } => positive("width", *width),
            KernelFamily::Log2d { strength, core_radius } => {
                positive("strength", *strength)?;
                if *core_radius < 0.0 || !core_radius.is_finite() {
                    return Err(KernelError::NonPositiveParameter {
                        name: "core_radius",
                        value: *core_radius,
                    });
                }
                Ok(())
            }
            KernelFamily::TruncatedPower { exponent, cutoff } => {
                positive("exponent", *exponent)?;
                positive("cutoff", *cutoff)?;
                if *exponent >= 2.0 {
                    return Err(KernelError::NonPositiveParameter {
                        name: "exponent (must be < 2 for an integrable 2D kernel)",
                        value: *exponent,
                    });
                }
                Ok(())
            }
            KernelFamily::Table { .. } => Ok(()),
        }
    }

    /// Pointwise kernel value, scale and amplitude applied.
    fn value(&self, x: f64, y: f64) -> f64 {
        let m = self.scale;
        let amp = self.amplitude * m.powi(4);
        let r = (x * x + y * y).sqrt() * m;
        match &self.family {
            KernelFamily::Gaussian { width } => {
                amp * (-r * r / (width * width)).exp() / (PI * width * width)
            }
            KernelFamily::Log2d { strength, core_radius } => {
                -amp * strength * r.max(*core_radius).ln()
            }
            KernelFamily::TruncatedPower { exponent, cutoff } => {
                if r <= *cutoff {
                    amp * r.powf(-exponent)
                } else {
                    0.0
                }
            }
            KernelFamily::Table { .. } => unreachable!("table kernels are not sampled pointwise"),
        }
    }

    /// Pointwise kernel gradient.
    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let m = self.scale;
        let amp = self.amplitude * m.powi(4);
        let r2 = x * x + y * y;
        let r = r2.sqrt() * m;
        match &self.family {
            KernelFamily::Gaussian { width } => {
                let w2 = width * width;
                let c = amp * (-r * r / w2).exp() / (PI * w2) * (-2.0 * m * m / w2);
                (c * x, c * y)
            }
            KernelFamily::Log2d { strength, core_radius } => {
                if r <= *core_radius || r2 == 0.0 {
                    (0.0, 0.0)
                } else {
                    // d/dx of -j2 log(m |x|) = -j2 x / |x|^2
                    let c = -amp * strength / r2;
                    (c * x, c * y)
                }
            }
            KernelFamily::TruncatedPower { exponent, cutoff } => {
                if r > *cutoff || r2 == 0.0 {
                    (0.0, 0.0)
                } else {
                    let c = -amp * exponent * r.powf(-exponent - 2.0) * m * m;
                    (c * x, c * y)
                }
            }
            KernelFamily::Table { .. } => unreachable!("table kernels are not sampled pointwise"),
        }
    }

    /// Antiderivative `G(rho) = int_0^rho J(r) r dr` of the radial profile,
    /// used by the polar quadrature of the origin cell.
    fn radial_antiderivative(&self, rho: f64) -> f64 {
        let m = self.scale;
        let amp = self.amplitude * m.powi(4);
        match &self.family {
            KernelFamily::Gaussian { width } => {
                let w2 = width * width;
                let s = rho * m;
                amp / (PI * w2) * (w2 / 2.0) * (1.0 - (-s * s / w2).exp()) / (m * m)
            }
            KernelFamily::Log2d { strength, core_radius } => {
                // int_0^rho log(max(m r, rc)) r dr, piecewise at r = rc/m.
                let lg = |s: f64| -> f64 {
                    // int_0^s log(m t) t dt = s^2/2 log(m s) - s^2/4
                    if s == 0.0 {
                        0.0
                    } else {
                        s * s / 2.0 * (m * s).ln() - s * s / 4.0
                    }
                };
                let rc = core_radius / m;
                let v = if rho <= rc {
                    rho * rho / 2.0 * core_radius.ln()
                } else if rc > 0.0 {
                    rc * rc / 2.0 * core_radius.ln() + lg(rho) - lg(rc)
                } else {
                    lg(rho)
                };
                -amp * strength * v
            }
            KernelFamily::TruncatedPower { exponent, cutoff } => {
                let rc = cutoff / m;
                let s = rho.min(rc);
                amp * m.powf(-exponent) * s.powf(2.0 - exponent) / (2.0 - exponent)
            }
            KernelFamily::Table { .. } => unreachable!(),
        }
    }

    fn is_singular_at_origin(&self) -> bool {
        match &self.family {
            KernelFamily::Log2d { core_radius, .. } => *core_radius == 0.0,
            KernelFamily::TruncatedPower { .. } => true,
            _ => false,
        }
    }

    /// Gauss points per direction for the cell quadrature.
    fn gauss_order(&self) -> usize {
        match self.family {
            // Low order near the integrable singularity, exact origin cell.
            KernelFamily::Log2d { .. } => 2,
            _ => 10,
        }
    }
}

const GAUSS10_X: [f64; 10] = [
    -0.9739065285171717,
    -0.8650633666889845,
    -0.6794095682990244,
    -0.4333953941292472,
    -0.1488743389816312,
    0.1488743389816312,
    0.4333953941292472,
    0.6794095682990244,
    0.8650633666889845,
    0.9739065285171717,
];
const GAUSS10_W: [f64; 10] = [
    0.0666713443086881,
    0.1494513491505806,
    0.2190863625159820,
    0.2692667193099963,
    0.2955242247147529,
    0.2955242247147529,
    0.2692667193099963,
    0.2190863625159820,
    0.1494513491505806,
    0.0666713443086881,
];
const GAUSS2_X: [f64; 2] = [-0.5773502691896258, 0.5773502691896258];
const GAUSS2_W: [f64; 2] = [1.0, 1.0];

fn gauss_rule(order: usize) -> (&'static [f64], &'static [f64]) {
    match order {
        2 => (&GAUSS2_X, &GAUSS2_W),
        _ => (&GAUSS10_X, &GAUSS10_W),
    }
}

/// Discrete kernel with FFT caches, ambient field and (H2) constants.
pub struct DiscreteKernel {
    grid: Grid2D,
    pnx: usize,
    pny: usize,
    /// Cell averages of J on offsets di in -(nx-1)..=nx-1, dj likewise;
    /// row-major with index (dj + ny - 1) * (2nx - 1) + (di + nx - 1).
    cell_avg: Vec<f64>,
    grad_table: (Vec<f64>, Vec<f64>),
    j_hat: Vec<Complex<f64>>,
    gx_hat: Vec<Complex<f64>>,
    gy_hat: Vec<Complex<f64>>,
    fft_fwd_x: Arc<dyn Fft<f64>>,
    fft_fwd_y: Arc<dyn Fft<f64>>,
    fft_inv_x: Arc<dyn Fft<f64>>,
    fft_inv_y: Arc<dyn Fft<f64>>,
    a: ScalarField,
    grad_a_x: ScalarField,
    grad_a_y: ScalarField,
    a_star: f64,
    a_low: f64,
    b_const: f64,
    sign_changing: bool,
    sigma: Option<f64>,
}

/// Summary constants, printable as JSON.
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub a_star: f64,
    pub a_low: f64,
    pub b_const: f64,
    pub sigma: Option<f64>,
    pub a_min: f64,
    pub a_max: f64,
    /// The kernel table takes both signs; (H2) bounds |J| so this is
    /// reported, not rejected.
    pub sign_changing: bool,
    /// `a(x) < 0` somewhere: the (H2) sign condition fails.
    pub negative_ambient: bool,
}

impl DiscreteKernel {
    pub fn build(spec: &KernelSpec, grid: Grid2D) -> Result<Self, KernelError> {
        spec.validate()?;
        let (nx, ny) = (grid.nx, grid.ny);
        let (tw, th) = (2 * nx - 1, 2 * ny - 1);

        let cell_avg = match &spec.family {
            KernelFamily::Table { path } => read_table(path, grid)?,
            _ => quadrature_table(spec, grid)?,
        };
        let mut cell_avg = cell_avg;
        symmetrize_even(&mut cell_avg, tw, th);
        for (k, v) in cell_avg.iter().enumerate() {
            if !v.is_finite() {
                let di = (k % tw) as i64 - (nx as i64 - 1);
                let dj = (k / tw) as i64 - (ny as i64 - 1);
                return Err(KernelError::NonFiniteQuadrature { di, dj });
            }
        }

        // Gradient table: analytic for continuous families, central
        // differences of the value table for tabulated kernels.
        let (mut gx, mut gy) = match &spec.family {
            KernelFamily::Table { .. } => table_gradient(&cell_avg, grid),
            _ => gradient_table(spec, grid)?,
        };
        antisymmetrize_odd(&mut gx, tw, th);
        antisymmetrize_odd(&mut gy, tw, th);

        let pnx = (2 * nx - 1).next_power_of_two();
        let pny = (2 * ny - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft_fwd_x = planner.plan_fft(pnx, FftDirection::Forward);
        let fft_fwd_y = planner.plan_fft(pny, FftDirection::Forward);
        let fft_inv_x = planner.plan_fft(pnx, FftDirection::Inverse);
        let fft_inv_y = planner.plan_fft(pny, FftDirection::Inverse);

        let spectrum = |table: &[f64]| -> Vec<Complex<f64>> {
            let mut buf = vec![Complex::new(0.0, 0.0); pnx * pny];
            for dj in -(ny as i64 - 1)..=(ny as i64 - 1) {
                for di in -(nx as i64 - 1)..=(nx as i64 - 1) {
                    let src = ((dj + ny as i64 - 1) as usize) * tw + (di + nx as i64 - 1) as usize;
                    let pi = ((di + pnx as i64) % pnx as i64) as usize;
                    let pj = ((dj + pny as i64) % pny as i64) as usize;
                    buf[pj * pnx + pi] = Complex::new(table[src], 0.0);
                }
            }
            fft2(&mut buf, pnx, pny, &fft_fwd_x, &fft_fwd_y);
            buf
        };

        let j_hat = spectrum(&cell_avg);
        let gx_hat = spectrum(&gx);
        let gy_hat = spectrum(&gy);
        let abs_hat = spectrum(&cell_avg.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let gnorm_hat =
            spectrum(&gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect::<Vec<_>>());

        let mut partial = Self {
            grid,
            pnx,
            pny,
            cell_avg,
            grad_table: (gx, gy),
            j_hat,
            gx_hat,
            gy_hat,
            fft_fwd_x,
            fft_fwd_y,
            fft_inv_x,
            fft_inv_y,
            a: ScalarField::zeros(grid),
            grad_a_x: ScalarField::zeros(grid),
            grad_a_y: ScalarField::zeros(grid),
            a_star: 0.0,
            a_low: 0.0,
            b_const: 0.0,
            sign_changing: false,
            sigma: None,
        };

        let ones = ScalarField::constant(grid, 1.0);
        partial.a = partial.conv_spectrum(&ones, &partial.j_hat.clone());
        partial.grad_a_x = partial.conv_spectrum(&ones, &partial.gx_hat.clone());
        partial.grad_a_y = partial.conv_spectrum(&ones, &partial.gy_hat.clone());
        let a_star_field = partial.conv_spectrum(&ones, &abs_hat);
        let b_field = partial.conv_spectrum(&ones, &gnorm_hat);
        partial.a_star = a_star_field.max();
        partial.a_low = partial.a.min();
        partial.b_const = b_field.max();
        partial.sign_changing =
            partial.cell_avg.iter().any(|&v| v < 0.0) && partial.cell_avg.iter().any(|&v| v > 0.0);
        partial.sigma = local_limit_sigma(spec).ok();
        Ok(partial)
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Ambient field `a = J * chi_Omega`.
    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    /// Cell-centered components of `grad(J) * chi_Omega`, built by the same
    /// discrete convolution as `convolve_grad` so constant states are exact
    /// equilibria.
    pub fn grad_a(&self) -> (&ScalarField, &ScalarField) {
        (&self.grad_a_x, &self.grad_a_y)
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    pub fn a_low(&self) -> f64 {
        self.a_low
    }

    pub fn b_const(&self) -> f64 {
        self.b_const
    }

    /// Cell-averaged kernel value at offset (di, dj); zero outside the table.
    pub fn cell_average(&self, di: i64, dj: i64) -> f64 {
        let (nx, ny) = (self.grid.nx as i64, self.grid.ny as i64);
        if di.abs() >= nx || dj.abs() >= ny {
            return 0.0;
        }
        self.cell_avg[((dj + ny - 1) as usize) * (2 * nx as usize - 1) + (di + nx - 1) as usize]
    }

    /// Cell-averaged kernel gradient at offset (di, dj); zero outside.
    pub fn grad_cell_average(&self, di: i64, dj: i64) -> (f64, f64) {
        let (nx, ny) = (self.grid.nx as i64, self.grid.ny as i64);
        if di.abs() >= nx || dj.abs() >= ny {
            return (0.0, 0.0);
        }
        let k = ((dj + ny - 1) as usize) * (2 * nx as usize - 1) + (di + nx - 1) as usize;
        (self.grad_table.0[k], self.grad_table.1[k])
    }

    pub fn report(&self) -> KernelReport {
        KernelReport {
            a_star: self.a_star,
            a_low: self.a_low,
            b_const: self.b_const,
            sigma: self.sigma,
            a_min: self.a.min(),
            a_max: self.a.max(),
            sign_changing: self.sign_changing,
            negative_ambient: self.a.min() < 0.0,
        }
    }

    fn conv_spectrum(&self, f: &ScalarField, spectrum: &[Complex<f64>]) -> ScalarField {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (pnx, pny) = (self.pnx, self.pny);
        let mut buf = vec![Complex::new(0.0, 0.0); pnx * pny];
        for j in 0..ny {
            for i in 0..nx {
                buf[j * pnx + i] = Complex::new(f.data[j * nx + i], 0.0);
            }
        }
        fft2(&mut buf, pnx, pny, &self.fft_fwd_x, &self.fft_fwd_y);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        fft2(&mut buf, pnx, pny, &self.fft_inv_x, &self.fft_inv_y);
        let scale = self.grid.cell_volume() / (pnx * pny) as f64;
        let mut out = ScalarField::zeros(self.grid);
        for j in 0..ny {
            for i in 0..nx {
                out.data[j * nx + i] = buf[j * pnx + i].re * scale;
            }
        }
        out
    }

    /// Zero-extension convolution `J*f`. The mean of f is routed through the
    /// cached ambient field so constant fields satisfy `J*c = c a` exactly.
    pub fn convolve(&self, f: &ScalarField) -> Result<ScalarField, FieldError> {
        if f.grid != self.grid {
            return Err(FieldError::GridMismatch);
        }
        let mean = f.mean();
        let mut out = if f.data.iter().all(|&v| v == mean) {
            ScalarField::zeros(self.grid)
        } else {
            let mut g = f.clone();
            g.shift(-mean);
            self.conv_spectrum(&g, &self.j_hat)
        };
        out.axpy(mean, &self.a);
        Ok(out)
    }

    /// Componentwise convolution with the cell-averaged kernel gradient,
    /// returned at cell centers.
    pub fn convolve_grad(&self, f: &ScalarField) -> Result<(ScalarField, ScalarField), FieldError> {
        if f.grid != self.grid {
            return Err(FieldError::GridMismatch);
        }
        let mean = f.mean();
        let (mut ox, mut oy) = if f.data.iter().all(|&v| v == mean) {
            (ScalarField::zeros(self.grid), ScalarField::zeros(self.grid))
        } else {
            let mut g = f.clone();
            g.shift(-mean);
            (self.conv_spectrum(&g, &self.gx_hat), self.conv_spectrum(&g, &self.gy_hat))
        };
        ox.axpy(mean, &self.grad_a_x);
        oy.axpy(mean, &self.grad_a_y);
        Ok((ox, oy))
    }
}

/// 2D complex FFT, rows then columns via transposes. rustfft processes each
/// contiguous chunk of plan length, so both passes run over contiguous rows.
fn fft2(
    buf: &mut [Complex<f64>],
    pnx: usize,
    pny: usize,
    fft_x: &Arc<dyn Fft<f64>>,
    fft_y: &Arc<dyn Fft<f64>>,
) {
    fft_x.process(buf);
    let mut t = vec![Complex::new(0.0, 0.0); pnx * pny];
    for j in 0..pny {
        for i in 0..pnx {
            t[i * pny + j] = buf[j * pnx + i];
        }
    }
    fft_y.process(&mut t);
    for j in 0..pny {
        for i in 0..pnx {
            buf[j * pnx + i] = t[i * pny + j];
        }
    }
}

fn symmetrize_even(table: &mut [f64], tw: usize, th: usize) {
    for dj in 0..th {
        for di in 0..tw {
            let k = dj * tw + di;
            let kr = (th - 1 - dj) * tw + (tw - 1 - di);
            if k < kr {
                let avg = 0.5 * (table[k] + table[kr]);
                table[k] = avg;
                table[kr] = avg;
            }
        }
    }
}

fn antisymmetrize_odd(table: &mut [f64], tw: usize, th: usize) {
    for dj in 0..th {
        for di in 0..tw {
            let k = dj * tw + di;
            let kr = (th - 1 - dj) * tw + (tw - 1 - di);
            if k < kr {
                let anti = 0.5 * (table[k] - table[kr]);
                table[k] = anti;
                table[kr] = -anti;
            } else if k == kr {
                table[k] = 0.0;
            }
        }
    }
}

/// Cell averages of J by tensor Gauss quadrature; singular families get an
/// exact polar treatment of the origin cell and near-origin subdivision for
/// narrow smooth kernels.
fn quadrature_table(spec: &KernelSpec, grid: Grid2D) -> Result<Vec<f64>, KernelError> {
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (tw, th) = ((2 * nx - 1) as usize, (2 * ny - 1) as usize);
    let (gx, gw) = gauss_rule(spec.gauss_order());

    // Effective width for subdivision decisions (narrow scaled gaussians).
    let narrow_scale = match &spec.family {
        KernelFamily::Gaussian { width } => Some(width / spec.scale),
        _ => None,
    };

    let rows: Vec<Vec<f64>> = (0..th)
        .into_par_iter()
        .map(|row| {
            let dj = row as i64 - (ny - 1);
            let mut out = vec![0.0; tw];
            for (col, slot) in out.iter_mut().enumerate() {
                let di = col as i64 - (nx - 1);
                let xc = di as f64 * hx;
                let yc = dj as f64 * hy;
                if di == 0 && dj == 0 && spec.is_singular_at_origin() {
                    *slot = origin_cell_average(spec, hx, hy);
                    continue;
                }
                // Subdivide cells where the kernel varies below the cell scale.
                let nsub = match narrow_scale {
                    Some(w) if w < 4.0 * hx.max(hy) => {
                        let r = (xc * xc + yc * yc).sqrt();
                        if r < 8.0 * w + 2.0 * hx.max(hy) {
                            8
                        } else {
                            1
                        }
                    }
                    _ => 1,
                };
                let mut acc = 0.0;
                let shx = hx / nsub as f64;
                let shy = hy / nsub as f64;
                for sx in 0..nsub {
                    for sy in 0..nsub {
                        let cx = xc - hx / 2.0 + (sx as f64 + 0.5) * shx;
                        let cy = yc - hy / 2.0 + (sy as f64 + 0.5) * shy;
                        let mut cell = 0.0;
                        for (p, wp) in gx.iter().zip(gw) {
                            for (q, wq) in gx.iter().zip(gw) {
                                cell += wp
                                    * wq
                                    * spec.value(cx + 0.5 * shx * p, cy + 0.5 * shy * q);
                            }
                        }
                        acc += cell * shx * shy / 4.0;
                    }
                }
                *slot = acc / (hx * hy);
            }
            out
        })
        .collect();

    Ok(rows.into_iter().flatten().collect())
}

fn gradient_table(spec: &KernelSpec, grid: Grid2D) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let (hx, hy) = (grid.hx(), grid.hy());
    let (tw, th) = ((2 * nx - 1) as usize, (2 * ny - 1) as usize);
    let (gxp, gw) = gauss_rule(spec.gauss_order());

    let narrow_scale = match &spec.family {
        KernelFamily::Gaussian { width } => Some(width / spec.scale),
        _ => None,
    };

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..th)
        .into_par_iter()
        .map(|row| {
            let dj = row as i64 - (ny - 1);
            let mut ox = vec![0.0; tw];
            let mut oy = vec![0.0; tw];
            for col in 0..tw {
                let di = col as i64 - (nx - 1);
                if di == 0 && dj == 0 && spec.is_singular_at_origin() {
                    // Odd integrand over a symmetric cell: exact zero.
                    continue;
                }
                let xc = di as f64 * hx;
                let yc = dj as f64 * hy;
                let nsub = match narrow_scale {
                    Some(w) if w < 4.0 * hx.max(hy) => {
                        let r = (xc * xc + yc * yc).sqrt();
                        if r < 8.0 * w + 2.0 * hx.max(hy) {
                            8
                        } else {
                            1
                        }
                    }
                    _ => 1,
                };
                let mut accx = 0.0;
                let mut accy = 0.0;
                let shx = hx / nsub as f64;
                let shy = hy / nsub as f64;
                for sx in 0..nsub {
                    for sy in 0..nsub {
                        let cx = xc - hx / 2.0 + (sx as f64 + 0.5) * shx;
                        let cy = yc - hy / 2.0 + (sy as f64 + 0.5) * shy;
                        for (p, wp) in gxp.iter().zip(gw) {
                            for (q, wq) in gxp.iter().zip(gw) {
                                let (dvx, dvy) =
                                    spec.gradient(cx + 0.5 * shx * p, cy + 0.5 * shy * q);
                                accx += wp * wq * dvx * shx * shy / 4.0;
                                accy += wp * wq * dvy * shx * shy / 4.0;
                            }
                        }
                    }
                }
                ox[col] = accx / (hx * hy);
                oy[col] = accy / (hx * hy);
            }
            (ox, oy)
        })
        .collect();

    let mut gx = Vec::with_capacity(tw * th);
    let mut gy = Vec::with_capacity(tw * th);
    for (ox, oy) in rows {
        gx.extend(ox);
        gy.extend(oy);
    }
    Ok((gx, gy))
}

/// Exact polar quadrature of the origin cell:
/// `int_cell J = 4 int_0^{pi/2} G(rho(theta)) dtheta` with
/// `rho(theta) = min(a/cos, b/sin)` and G the radial antiderivative.
/// The theta integrand is smooth on the two pieces split at atan(b/a).
fn origin_cell_average(spec: &KernelSpec, hx: f64, hy: f64) -> f64 {
    let a = hx / 2.0;
    let b = hy / 2.0;
    let split = (b / a).atan();
    let mut total = 0.0;
    for (lo, hi, is_first) in [(0.0, split, true), (split, PI / 2.0, false)] {
        let panels = 8;
        let dt = (hi - lo) / panels as f64;
        for panel in 0..panels {
            let mid = lo + (panel as f64 + 0.5) * dt;
            for (p, w) in GAUSS10_X.iter().zip(&GAUSS10_W) {
                let theta = mid + 0.5 * dt * p;
                let rho = if is_first { a / theta.cos() } else { b / theta.sin() };
                total += w * 0.5 * dt * spec.radial_antiderivative(rho);
            }
        }
    }
    4.0 * total / (hx * hy)
}

fn table_gradient(cell_avg: &[f64], grid: Grid2D) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let (tw, th) = ((2 * nx - 1) as usize, (2 * ny - 1) as usize);
    let (hx, hy) = (grid.hx(), grid.hy());
    let get = |di: i64, dj: i64| -> f64 {
        if di.abs() >= nx || dj.abs() >= ny {
            0.0
        } else {
            cell_avg[((dj + ny - 1) as usize) * tw + (di + nx - 1) as usize]
        }
    };
    let mut gx = vec![0.0; tw * th];
    let mut gy = vec![0.0; tw * th];
    for dj in -(ny - 1)..=(ny - 1) {
        for di in -(nx - 1)..=(nx - 1) {
            let k = ((dj + ny - 1) as usize) * tw + (di + nx - 1) as usize;
            gx[k] = (get(di + 1, dj) - get(di - 1, dj)) / (2.0 * hx);
            gy[k] = (get(di, dj + 1) - get(di, dj - 1)) / (2.0 * hy);
        }
    }
    (gx, gy)
}

fn read_table(path: &PathBuf, grid: Grid2D) -> Result<Vec<f64>, KernelError> {
    let text = std::fs::read_to_string(path).map_err(|e| KernelError::BadTable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let (hx, hy) = (grid.hx(), grid.hy());
    let tw = (2 * nx - 1) as usize;
    let mut table = vec![0.0; tw * (2 * ny as usize - 1)];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("dx") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(KernelError::BadTable {
                path: path.display().to_string(),
                reason: format!("line {}: expected dx,dy,value", lineno + 1),
            });
        }
        let parse = |s: &str| -> Result<f64, KernelError> {
            s.parse().map_err(|_| KernelError::BadTable {
                path: path.display().to_string(),
                reason: format!("line {}: bad number {s:?}", lineno + 1),
            })
        };
        let dx = parse(parts[0])?;
        let dy = parse(parts[1])?;
        let value = parse(parts[2])?;
        let di = (dx / hx).round() as i64;
        let dj = (dy / hy).round() as i64;
        if (di as f64 * hx - dx).abs() > 1e-9 * hx || (dj as f64 * hy - dy).abs() > 1e-9 * hy {
            return Err(KernelError::BadTable {
                path: path.display().to_string(),
                reason: format!("line {}: offset ({dx},{dy}) is not on the lattice", lineno + 1),
            });
        }
        if di.abs() >= nx || dj.abs() >= ny {
            return Err(KernelError::BadTable {
                path: path.display().to_string(),
                reason: format!("line {}: offset ({di},{dj}) outside the padded lattice", lineno + 1),
            });
        }
        table[((dj + ny - 1) as usize) * tw + (di + nx - 1) as usize] = value;
    }
    // Tabulated kernels must already be even; a symmetrized copy would
    // silently change the operator.
    for dj in -(ny - 1)..=(ny - 1) {
        for di in -(nx - 1)..=(nx - 1) {
            let k = ((dj + ny - 1) as usize) * tw + (di + nx - 1) as usize;
            let kr = ((-dj + ny - 1) as usize) * tw + (-di + nx - 1) as usize;
            let (f, b) = (table[k], table[kr]);
            if (f - b).abs() > 1e-12 * f.abs().max(b.abs()).max(1e-300) {
                return Err(KernelError::NotEven { di, dj, fwd: f, bwd: b });
            }
        }
    }
    Ok(table)
}

/// Local-limit coefficient `sigma = (2/d) int J(|z|^2) |z|^2 dz` for d = 2,
/// i.e. `2 pi int_0^inf J(r) r^3 dr`, by composite Gauss quadrature. The
/// value is invariant under the `m^{d+2} J(m x)` family scaling.
pub fn local_limit_sigma(spec: &KernelSpec) -> Result<f64, KernelError> {
    spec.validate()?;
    if spec.amplitude == 0.0 {
        return Ok(0.0);
    }
    let m = spec.scale;
    let r_max = match &spec.family {
        KernelFamily::Gaussian { width } => 14.0 * width / m,
        KernelFamily::Log2d { .. } => return Err(KernelError::DivergentSecondMoment),
        KernelFamily::TruncatedPower { cutoff, .. } => cutoff / m,
        KernelFamily::Table { .. } => {
            return Err(KernelError::BadTable {
                path: String::new(),
                reason: "sigma for table kernels is grid-dependent; use the discrete report".into(),
            })
        }
    };
    let panels = 400;
    let dr = r_max / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * dr;
        for (x, w) in GAUSS10_X.iter().zip(&GAUSS10_W) {
            let r = mid + 0.5 * dr * x;
            total += w * 0.5 * dr * spec.value(r, 0.0) * r * r * r;
        }
    }
    Ok(2.0 * PI * total)
}
