//! Time stepper for the convective nonlocal Cahn-Hilliard equation.
//!
//! Degenerate mode advances the flux form, in which the chemical potential
//! never appears: the face flux is
//!
//! `-[ mF''(phi_f) + m(phi_f) a_f ] grad(phi) - m(phi_f)(phi_f grad_a - gradJ*phi)_f`
//!
//! so only the bounded product `m F''` and the nonlocal drift enter, and
//! pure phases `phi = +-1` are exact equilibria because `m(+-1) = 0` kills
//! every term that could move them. Regularized mode uses the same
//! splitting with the eps-clamped coefficients and caches the (now
//! well-defined) chemical potential.
//!
//! The update is conservative finite-volume with the stiff symmetric
//! diffusion `D(phi^n) = mF'' + m a` lagged one step and solved implicitly
//! by conjugate gradients, while the nonlocal drift and the upwinded
//! convection stay explicit. Both explicit and implicit pieces are pure
//! flux divergences, so the mean of phi telescopes exactly; the CG Krylov
//! space preserves it to round-off regardless of the stopping point.

use crate::error::SolveError;
use crate::field::{FaceField, ScalarField};
use crate::kernel::DiscreteKernel;
use crate::material::{MaterialModel, RegularizedPotential};
use crate::ops::{conjugate_gradients, KahanSum};

/// Threshold below 1 at which F' evaluation is refused in degenerate mode.
pub const SINGULAR_DELTA: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChMode {
    Degenerate,
    Regularized { eps: f64 },
}

/// Order parameter state.
#[derive(Clone, Debug)]
pub struct ChState {
    pub phi: ScalarField,
    pub t: f64,
    /// Cached chemical potential, regularized mode only.
    pub mu: Option<ScalarField>,
}

impl ChState {
    pub fn new(phi: ScalarField) -> Self {
        Self { phi, t: 0.0, mu: None }
    }

    /// Overshoot beyond the physical interval: max(|phi| - 1)_+.
    pub fn overshoot(&self) -> f64 {
        self.phi.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs() - 1.0)).max(0.0)
    }
}

/// Kernel/material bundle for one mode.
pub struct ChProblem<'k> {
    pub kernel: &'k DiscreteKernel,
    pub material: MaterialModel,
    pub mode: ChMode,
    reg: Option<RegularizedPotential>,
}

impl<'k> ChProblem<'k> {
    pub fn new(
        kernel: &'k DiscreteKernel,
        material: MaterialModel,
        mode: ChMode,
    ) -> Result<Self, crate::error::MaterialError> {
        let reg = match mode {
            ChMode::Regularized { eps } => {
                Some(RegularizedPotential::new(&material.potential, eps)?)
            }
            ChMode::Degenerate => None,
        };
        Ok(Self { kernel, material, mode, reg })
    }

    pub fn regularized(&self) -> Option<&RegularizedPotential> {
        self.reg.as_ref()
    }

    /// Mobility coefficient at a face value of phi (clamped evaluation).
    pub fn mobility_coeff(&self, s: f64) -> f64 {
        match self.mode {
            ChMode::Degenerate => self.material.mobility.eval(s),
            ChMode::Regularized { eps } => self.material.mobility.eval_eps(s, eps),
        }
    }

    /// Symmetric diffusion coefficient `mF'' + m a` at a face.
    pub fn diffusion_coeff(&self, s: f64, a_face: f64) -> f64 {
        match self.mode {
            ChMode::Degenerate => {
                self.material.m_f_dd(s) + self.material.mobility.eval(s) * a_face
            }
            ChMode::Regularized { eps } => {
                let reg = self.reg.as_ref().expect("regularized mode");
                self.material.mobility.eval_eps(s, eps) * (reg.f_dd(s) + a_face)
            }
        }
    }

    /// F' for the chemical potential (regularized uses the clamped slope).
    fn f_prime(&self, s: f64) -> f64 {
        match self.mode {
            ChMode::Degenerate => self.material.potential.eval(s).map(|e| e.f_d).unwrap_or(f64::NAN),
            ChMode::Regularized { .. } => self.reg.as_ref().expect("regularized mode").f_d(s),
        }
    }
}

/// `mu = a phi - J*phi + F'(phi)`. In degenerate mode this refuses fields
/// that touch the singularity; the flux form never needs it.
pub fn chemical_potential(
    phi: &ScalarField,
    prob: &ChProblem,
) -> Result<ScalarField, SolveError> {
    if let ChMode::Degenerate = prob.mode {
        let max_abs = phi.max_abs();
        if max_abs >= 1.0 - SINGULAR_DELTA {
            return Err(SolveError::SingularPotential { max_abs, delta: SINGULAR_DELTA });
        }
    }
    let conv = prob.kernel.convolve(phi)?;
    let a = prob.kernel.a();
    let mut mu = ScalarField::zeros(phi.grid);
    for k in 0..phi.data.len() {
        mu.data[k] = a.data[k] * phi.data[k] - conv.data[k] + prob.f_prime(phi.data[k]);
    }
    Ok(mu)
}

/// Face coefficient tables for one step: diffusion coefficient and explicit
/// drift flux (the `+ m(phi grad_a - gradJ*phi)` part of the update).
struct FluxAssembly {
    diff_u: Vec<f64>,
    diff_v: Vec<f64>,
    drift: FaceField,
    max_diff: f64,
    max_drift: f64,
}

fn assemble_fluxes(phi: &ScalarField, prob: &ChProblem) -> Result<FluxAssembly, SolveError> {
    let g = phi.grid;
    let a = prob.kernel.a();
    let (gax, gay) = prob.kernel.grad_a();
    let (cgx, cgy) = prob.kernel.convolve_grad(phi)?;

    // Drift density at cells first: for constant phi the kernel identity
    // gradJ*c = c grad_a makes this exactly zero cellwise, and face
    // interpolation of zeros stays zero, so constants are bitwise
    // equilibria of the assembled flux.
    let n = g.ncells();
    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    for k in 0..n {
        wx[k] = phi.data[k] * gax.data[k] - cgx.data[k];
        wy[k] = phi.data[k] * gay.data[k] - cgy.data[k];
    }

    let mut drift = FaceField::zeros(g);
    let mut diff_u = vec![0.0; (g.nx + 1) * g.ny];
    let mut diff_v = vec![0.0; g.nx * (g.ny + 1)];
    let mut max_diff = 0.0_f64;
    let mut max_drift = 0.0_f64;

    for j in 0..g.ny {
        for i in 1..g.nx {
            let l = g.idx(i - 1, j);
            let r = g.idx(i, j);
            let phi_f = 0.5 * (phi.data[l] + phi.data[r]);
            let a_f = 0.5 * (a.data[l] + a.data[r]);
            let d = prob.diffusion_coeff(phi_f, a_f);
            let q = prob.mobility_coeff(phi_f) * (0.5 * (wx[l] + wx[r]));
            diff_u[j * (g.nx + 1) + i] = d;
            drift.u[j * (g.nx + 1) + i] = q;
            max_diff = max_diff.max(d.abs());
            max_drift = max_drift.max(q.abs());
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let l = g.idx(i, j - 1);
            let r = g.idx(i, j);
            let phi_f = 0.5 * (phi.data[l] + phi.data[r]);
            let a_f = 0.5 * (a.data[l] + a.data[r]);
            let d = prob.diffusion_coeff(phi_f, a_f);
            let q = prob.mobility_coeff(phi_f) * (0.5 * (wy[l] + wy[r]));
            diff_v[j * g.nx + i] = d;
            drift.v[j * g.nx + i] = q;
            max_diff = max_diff.max(d.abs());
            max_drift = max_drift.max(q.abs());
        }
    }
    Ok(FluxAssembly { diff_u, diff_v, drift, max_diff, max_drift })
}

/// Mass flux of the degenerate weak form,
/// `-m grad(a phi - J*phi) - m F'' grad(phi)` in expanded face form.
pub fn degenerate_flux(phi: &ScalarField, prob: &ChProblem) -> Result<FaceField, SolveError> {
    let asm = assemble_fluxes(phi, prob)?;
    let g = phi.grid;
    let mut flux = FaceField::zeros(g);
    let (hx, hy) = (g.hx(), g.hy());
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = j * (g.nx + 1) + i;
            let gradp = (phi.at(i, j) - phi.at(i - 1, j)) / hx;
            flux.u[k] = -asm.diff_u[k] * gradp - asm.drift.u[k];
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = j * g.nx + i;
            let gradp = (phi.at(i, j) - phi.at(i, j - 1)) / hy;
            flux.v[k] = -asm.diff_v[k] * gradp - asm.drift.v[k];
        }
    }
    Ok(flux)
}

/// Upwind convective face flux `u_f phi_up`, optionally MUSCL/van Leer
/// limited. Boundary faces carry zero flux (no-flux scalar walls).
fn convective_flux(phi: &ScalarField, u: &FaceField, limiter: bool) -> FaceField {
    let g = phi.grid;
    let mut fc = FaceField::zeros(g);
    let vl = |r: f64| (r + r.abs()) / (1.0 + r.abs());
    for j in 0..g.ny {
        for i in 1..g.nx {
            let uf = u.u[j * (g.nx + 1) + i];
            let (up, dn, upup) = if uf >= 0.0 {
                (phi.at(i - 1, j), phi.at(i, j), if i >= 2 { Some(phi.at(i - 2, j)) } else { None })
            } else {
                (phi.at(i, j), phi.at(i - 1, j), if i + 1 < g.nx { Some(phi.at(i + 1, j)) } else { None })
            };
            let mut face = up;
            if limiter {
                if let Some(uu) = upup {
                    let d = dn - up;
                    if d != 0.0 {
                        face = up + 0.5 * vl((up - uu) / d) * d;
                    }
                }
            }
            fc.u[j * (g.nx + 1) + i] = uf * face;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let vf = u.v[j * g.nx + i];
            let (up, dn, upup) = if vf >= 0.0 {
                (phi.at(i, j - 1), phi.at(i, j), if j >= 2 { Some(phi.at(i, j - 2)) } else { None })
            } else {
                (phi.at(i, j), phi.at(i, j - 1), if j + 1 < g.ny { Some(phi.at(i, j + 1)) } else { None })
            };
            let mut face = up;
            if limiter {
                if let Some(uu) = upup {
                    let d = dn - up;
                    if d != 0.0 {
                        face = up + 0.5 * vl((up - uu) / d) * d;
                    }
                }
            }
            fc.v[j * g.nx + i] = vf * face;
        }
    }
    fc
}

#[derive(Clone, Copy, Debug)]
pub struct ChParams {
    pub cfl_safety: f64,
    pub cg_rel_tol: f64,
    pub cg_max_iters: usize,
    pub limiter: bool,
}

impl Default for ChParams {
    fn default() -> Self {
        Self { cfl_safety: 0.8, cg_rel_tol: 1e-12, cg_max_iters: 20_000, limiter: false }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ChStepReport {
    pub cg_iters: usize,
    pub cg_residual: f64,
    pub dt_limit: f64,
    pub overshoot: f64,
    pub max_diffusion: f64,
    pub max_drift: f64,
}

/// One semi-implicit step. `u` must be (discretely) divergence-free; the
/// convective term is `div(u phi_up) - phi div(u)`, which is identical for
/// exactly solenoidal fields and makes constant states transparent to the
/// projection round-off carried by u.
pub fn ch_step(
    state: &ChState,
    u: &FaceField,
    dt: f64,
    prob: &ChProblem,
    params: &ChParams,
) -> Result<(ChState, ChStepReport), SolveError> {
    let g = state.phi.grid;
    if u.grid != g {
        return Err(SolveError::Field(crate::error::FieldError::GridMismatch));
    }
    assert!(dt > 0.0, "dt must be positive");
    let phi = &state.phi;

    let asm = assemble_fluxes(phi, prob)?;

    // Time-step guard.
    let h = g.h_min();
    let u_max = u.max_abs();
    let phi_scale = phi.max_abs().max(1e-12);
    let mut dt_limit = f64::INFINITY;
    if u_max > 0.0 {
        dt_limit = dt_limit.min(h / u_max);
    }
    if asm.max_diff > 0.0 {
        dt_limit = dt_limit.min(h * h / asm.max_diff);
    }
    if asm.max_drift > 0.0 {
        dt_limit = dt_limit.min(h / (asm.max_drift / phi_scale));
    }
    let dt_max = params.cfl_safety * dt_limit;
    if dt > dt_max {
        return Err(SolveError::CflViolation { dt, suggested: dt_max });
    }

    // Explicit part: phi^n + dt div(drift) - dt [div(u phi_up) - phi div(u)].
    let conv = convective_flux(phi, u, params.limiter);
    let (hx, hy) = (g.hx(), g.hy());
    let mut rhs = phi.clone();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.idx(i, j);
            let div_drift = (asm.drift.u[j * (g.nx + 1) + i + 1] - asm.drift.u[j * (g.nx + 1) + i])
                / hx
                + (asm.drift.v[(j + 1) * g.nx + i] - asm.drift.v[j * g.nx + i]) / hy;
            let div_conv = (conv.u[j * (g.nx + 1) + i + 1] - conv.u[j * (g.nx + 1) + i]) / hx
                + (conv.v[(j + 1) * g.nx + i] - conv.v[j * g.nx + i]) / hy;
            let div_u = (u.u[j * (g.nx + 1) + i + 1] - u.u[j * (g.nx + 1) + i]) / hx
                + (u.v[(j + 1) * g.nx + i] - u.v[j * g.nx + i]) / hy;
            rhs.data[c] += dt * (div_drift - (div_conv - phi.data[c] * div_u));
        }
    }

    // Implicit symmetric diffusion: (I - dt div(D grad)) phi^{n+1} = rhs.
    let nx = g.nx;
    let ny = g.ny;
    let diff_u = &asm.diff_u;
    let diff_v = &asm.diff_v;
    let mut matvec = |x: &[f64], y: &mut [f64]| {
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let fe = if i + 1 < nx {
                    diff_u[j * (nx + 1) + i + 1] * (x[c + 1] - x[c]) / hx
                } else {
                    0.0
                };
                let fw = if i > 0 {
                    diff_u[j * (nx + 1) + i] * (x[c] - x[c - 1]) / hx
                } else {
                    0.0
                };
                let fn_ = if j + 1 < ny {
                    diff_v[(j + 1) * nx + i] * (x[c + nx] - x[c]) / hy
                } else {
                    0.0
                };
                let fs = if j > 0 { diff_v[j * nx + i] * (x[c] - x[c - nx]) / hy } else { 0.0 };
                y[c] = x[c] - dt * ((fe - fw) / hx + (fn_ - fs) / hy);
            }
        }
    };

    let mut next = phi.data.clone();
    let report = conjugate_gradients(&mut matvec, &rhs.data, &mut next, params.cg_rel_tol, params.cg_max_iters)
        .map_err(|(residual, target)| SolveError::CgStalled {
            iters: params.cg_max_iters,
            residual,
            target,
        })?;

    let phi_next = ScalarField { grid: g, data: next };
    let mut new_state = ChState { phi: phi_next, t: state.t + dt, mu: None };
    if let ChMode::Regularized { .. } = prob.mode {
        new_state.mu = Some(chemical_potential(&new_state.phi, prob)?);
    }
    let overshoot = new_state.overshoot();
    Ok((
        new_state,
        ChStepReport {
            cg_iters: report.iters,
            cg_residual: report.residual,
            dt_limit: dt_max,
            overshoot,
            max_diffusion: asm.max_diff,
            max_drift: asm.max_drift,
        },
    ))
}

/// Residual of the phi-energy identity over one accepted step, with the
/// quadratic terms evaluated at the half-step field. When
/// `include_korteweg_work` is set the Korteweg exchange term
/// `int (a phi - J*phi) u . grad(phi)` is subtracted, which is the form the
/// coupled energy balance uses.
pub fn ch_energy_identity_residual(
    prev: &ChState,
    next: &ChState,
    u: &FaceField,
    dt: f64,
    prob: &ChProblem,
    include_korteweg_work: bool,
) -> f64 {
    let g = prev.phi.grid;
    let mut half = prev.phi.clone();
    for (h, n) in half.data.iter_mut().zip(&next.phi.data) {
        *h = 0.5 * (*h + n);
    }
    let ddt = 0.5 * (next.phi.inner(&next.phi) - prev.phi.inner(&prev.phi)) / dt;

    let a = prob.kernel.a();
    let (gax, gay) = prob.kernel.grad_a();
    let (cgx, cgy) = match prob.kernel.convolve_grad(&half) {
        Ok(v) => v,
        Err(_) => return f64::NAN,
    };
    let conv = match prob.kernel.convolve(&half) {
        Ok(v) => v,
        Err(_) => return f64::NAN,
    };
    let n = g.ncells();
    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    for k in 0..n {
        wx[k] = half.data[k] * gax.data[k] - cgx.data[k];
        wy[k] = half.data[k] * gay.data[k] - cgy.data[k];
    }

    let (hx, hy) = (g.hx(), g.hy());
    let vol = g.cell_volume();
    let mut chem = KahanSum::new();
    let mut ambient = KahanSum::new();
    let mut drift_dot = KahanSum::new();
    let mut korteweg = KahanSum::new();

    let mut face_terms = |l: usize, r: usize, grad: f64, w: f64, uf: f64| {
        let phi_f = 0.5 * (half.data[l] + half.data[r]);
        let a_f = 0.5 * (a.data[l] + a.data[r]);
        let m_fdd = match prob.mode {
            ChMode::Degenerate => prob.material.m_f_dd(phi_f),
            ChMode::Regularized { eps } => {
                prob.material.mobility.eval_eps(phi_f, eps)
                    * prob.regularized().expect("regularized mode").f_dd(phi_f)
            }
        };
        let m = prob.mobility_coeff(phi_f);
        chem.add(m_fdd * grad * grad * vol);
        ambient.add(a_f * m * grad * grad * vol);
        drift_dot.add(m * w * grad * vol);
        if include_korteweg_work {
            let pref = 0.5 * (a.data[l] * half.data[l] - conv.data[l])
                + 0.5 * (a.data[r] * half.data[r] - conv.data[r]);
            korteweg.add(pref * uf * grad * vol);
        }
    };

    for j in 0..g.ny {
        for i in 1..g.nx {
            let l = g.idx(i - 1, j);
            let r = g.idx(i, j);
            let grad = (half.data[r] - half.data[l]) / hx;
            face_terms(l, r, grad, 0.5 * (wx[l] + wx[r]), u.u[j * (g.nx + 1) + i]);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let l = g.idx(i, j - 1);
            let r = g.idx(i, j);
            let grad = (half.data[r] - half.data[l]) / hy;
            face_terms(l, r, grad, 0.5 * (wy[l] + wy[r]), u.v[j * g.nx + i]);
        }
    }

    ddt + chem.value() + ambient.value() + drift_dot.value() - korteweg.value()
}
