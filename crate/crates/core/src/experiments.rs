//! Canned verification experiments: regularization convergence, twin-run
//! H^-1 contraction, dt/h refinement, and the nonlocal-to-local limit.

use serde::Serialize;

use crate::ch::{ch_step, ChMode, ChParams, ChProblem, ChState};
use crate::config::{CouplingConfig, ModeConfig, SimConfig};
use crate::field::{FaceField, ScalarField};
use crate::grid::Grid2D;
use crate::kernel::{local_limit_sigma, DiscreteKernel, KernelSpec};
use crate::ops::KahanSum;
use crate::poisson::NeumannPoisson;
use crate::sim::{
    build_initial_phi, build_kernel, build_material, build_velocity, simulate_with, SimError,
    SimulateOptions,
};

/// Trajectory distance table of the eps-regularized runs against the
/// degenerate run on the same grid, seed and dt.
#[derive(Clone, Debug, Serialize)]
pub struct EpsStudy {
    pub rows: Vec<EpsRow>,
    pub strictly_decreasing: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    /// `||phi_eps - phi_deg||_{L^2(Q_T)}`.
    pub distance: f64,
    pub completed: bool,
}

pub fn experiment_epsilon(cfg: &SimConfig, eps_list: &[f64]) -> Result<EpsStudy, SimError> {
    if eps_list.is_empty() {
        return Err(SimError::Validation("eps list is empty".into()));
    }
    if eps_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(SimError::Validation("eps list must be strictly decreasing".into()));
    }
    let eps0 = cfg.potential.eps0();
    if eps_list.iter().any(|&e| e <= 0.0 || e > eps0) {
        return Err(SimError::Validation(format!("eps values must lie in (0, {eps0}]")));
    }

    let kernel = build_kernel(cfg)?;
    let material = build_material(cfg)?;
    let grid = kernel.grid();
    let phi0 = build_initial_phi(cfg, grid)?;
    let poisson = NeumannPoisson::new(grid);
    let u = match &cfg.coupling {
        CouplingConfig::ChOnly { velocity } => build_velocity(velocity, grid, false, &poisson)?,
        _ => FaceField::zeros(grid),
    };
    let params = ChParams { cfl_safety: cfg.cfl_safety, limiter: cfg.limiter, ..ChParams::default() };
    let steps = cfg.steps();

    let deg_prob = ChProblem::new(&kernel, material.clone(), ChMode::Degenerate)
        .map_err(|e| SimError::Validation(e.to_string()))?;

    let mut rows = Vec::new();
    for &eps in eps_list {
        let reg_prob = ChProblem::new(&kernel, material.clone(), ChMode::Regularized { eps })
            .map_err(|e| SimError::Validation(e.to_string()))?;
        // lockstep twin integration, accumulating the squared L2 distance
        let mut s_deg = ChState::new(phi0.clone());
        let mut s_reg = ChState::new(phi0.clone());
        let mut acc = KahanSum::new();
        let mut completed = true;
        for _ in 0..steps {
            let deg_next = match ch_step(&s_deg, &u, cfg.dt, &deg_prob, &params) {
                Ok((s, _)) => s,
                Err(_) => {
                    completed = false;
                    break;
                }
            };
            let reg_next = match ch_step(&s_reg, &u, cfg.dt, &reg_prob, &params) {
                Ok((s, _)) => s,
                Err(_) => {
                    completed = false;
                    break;
                }
            };
            let mut diff = reg_next.phi.clone();
            diff.axpy(-1.0, &deg_next.phi);
            acc.add(diff.inner(&diff) * cfg.dt);
            s_deg = deg_next;
            s_reg = reg_next;
        }
        rows.push(EpsRow { eps, distance: acc.value().max(0.0).sqrt(), completed });
    }
    let strictly_decreasing = rows.windows(2).all(|w| {
        w[0].completed && w[1].completed && w[1].distance < w[0].distance
    });
    Ok(EpsStudy { rows, strictly_decreasing })
}

/// Twin-trajectory H^-1 distance series with the fitted Gronwall constant.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionStudy {
    pub series: Vec<(f64, f64)>,
    /// Largest per-step growth rate of log ||delta phi||^2_{H^-1} divided
    /// by (1 + ||u||_inf^2); the Gronwall bound holds with this constant at
    /// every step by construction, so finiteness is the assertion.
    pub c5: f64,
    pub u_max: f64,
    pub initial_distance: f64,
}

pub fn experiment_contraction(
    cfg: &SimConfig,
    amplitude: f64,
    steps: usize,
) -> Result<ContractionStudy, SimError> {
    let velocity = match &cfg.coupling {
        CouplingConfig::ChOnly { velocity } => velocity.clone(),
        _ => {
            return Err(SimError::Validation(
                "contraction experiment requires ch-only coupling with a prescribed velocity".into(),
            ))
        }
    };
    let kernel = build_kernel(cfg)?;
    let material = build_material(cfg)?;
    let grid = kernel.grid();
    let poisson = NeumannPoisson::new(grid);
    let u = build_velocity(&velocity, grid, false, &poisson)?;
    let u_max = u.max_abs();

    let mode = match cfg.mode {
        ModeConfig::Degenerate => ChMode::Degenerate,
        ModeConfig::Regularized { epsilon } => ChMode::Regularized { eps: epsilon },
    };
    let prob = ChProblem::new(&kernel, material, mode)
        .map_err(|e| SimError::Validation(e.to_string()))?;
    let params = ChParams { cfl_safety: cfg.cfl_safety, limiter: cfg.limiter, ..ChParams::default() };

    let phi0 = build_initial_phi(cfg, grid)?;
    // zero-mean perturbation pattern, re-centered so the twin shares the
    // conserved mean exactly (the H^-1 norm requires it)
    let mut pert = ScalarField::from_fn(grid, |x, y| {
        amplitude
            * (2.0 * std::f64::consts::PI * x / grid.lx).cos()
            * (2.0 * std::f64::consts::PI * y / grid.ly).cos()
    });
    let m = pert.mean();
    pert.shift(-m);
    let mut phi_b = phi0.clone();
    phi_b.axpy(1.0, &pert);
    if (phi_b.mean() - phi0.mean()).abs() > 1e-12 {
        return Err(SimError::Validation("twin means do not match".into()));
    }

    let mut s_a = ChState::new(phi0);
    let mut s_b = ChState::new(phi_b);

    let distance_sq = |a: &ChState, b: &ChState| -> Result<f64, SimError> {
        let mut d = b.phi.clone();
        d.axpy(-1.0, &a.phi);
        if d.max_abs() == 0.0 {
            return Ok(0.0);
        }
        // remove the round-off mean so the Neumann solve stays compatible
        let dm = d.mean();
        d.shift(-dm);
        let n = poisson.hminus1_norm(&d).map_err(|e| SimError::Numerical(e.to_string()))?;
        Ok(n * n)
    };

    let d0 = distance_sq(&s_a, &s_b)?;
    let mut series = vec![(0.0, d0)];
    let mut c5 = 0.0_f64;
    for _ in 0..steps {
        let (na, _) = ch_step(&s_a, &u, cfg.dt, &prob, &params)?;
        let (nb, _) = ch_step(&s_b, &u, cfg.dt, &prob, &params)?;
        s_a = na;
        s_b = nb;
        let d = distance_sq(&s_a, &s_b)?;
        let (t_prev, d_prev) = *series.last().expect("nonempty");
        if d_prev > 0.0 && d > 0.0 {
            let rate = (d.ln() - d_prev.ln()) / cfg.dt;
            c5 = c5.max(rate / (1.0 + u_max * u_max));
        }
        series.push((t_prev + cfg.dt, d));
    }
    Ok(ContractionStudy { series, c5, u_max, initial_distance: d0.sqrt() })
}

/// One refinement level of the dt-halving study.
#[derive(Clone, Debug, Serialize)]
pub struct RefineRow {
    pub dt: f64,
    pub h: f64,
    pub accumulated_residual: f64,
    pub max_overshoot: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineStudy {
    pub rows: Vec<RefineRow>,
    /// log2 ratios of consecutive accumulated residuals.
    pub orders: Vec<f64>,
}

/// dt-halving at fixed grid: measures the convergence order of the
/// accumulated energy-identity residual.
pub fn experiment_refine_dt(cfg: &SimConfig, levels: usize) -> Result<RefineStudy, SimError> {
    let mut rows = Vec::new();
    for level in 0..levels {
        let mut c = cfg.clone();
        c.dt = cfg.dt / 2f64.powi(level as i32);
        let opts = SimulateOptions { write_files: false, ..Default::default() };
        let out = simulate_with(&c, &opts)?;
        rows.push(RefineRow {
            dt: c.dt,
            h: c.grid.lx / c.grid.nx as f64,
            accumulated_residual: out.summary.accumulated_energy_residual,
            max_overshoot: out.summary.max_overshoot,
        });
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].accumulated_residual / w[1].accumulated_residual).log2())
        .collect();
    Ok(RefineStudy { rows, orders })
}

/// Joint (h, dt) halving: tracks the overshoot trend for the boundedness
/// check. The spinodal seed is kept, so the coarse field is not a
/// restriction of the fine one; the trend statement is about scheme
/// refinement, not about one trajectory.
pub fn experiment_refine_space_time(
    cfg: &SimConfig,
    levels: usize,
) -> Result<RefineStudy, SimError> {
    let mut rows = Vec::new();
    for level in 0..levels {
        let f = 2usize.pow(level as u32);
        let mut c = cfg.clone();
        c.grid.nx = cfg.grid.nx * f;
        c.grid.ny = cfg.grid.ny * f;
        c.dt = cfg.dt / f as f64;
        let opts = SimulateOptions { write_files: false, ..Default::default() };
        let out = simulate_with(&c, &opts)?;
        rows.push(RefineRow {
            dt: c.dt,
            h: c.grid.lx / c.grid.nx as f64,
            accumulated_residual: out.summary.accumulated_energy_residual,
            max_overshoot: out.summary.max_overshoot,
        });
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].accumulated_residual / w[1].accumulated_residual).log2())
        .collect();
    Ok(RefineStudy { rows, orders })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitRow {
    pub scale: f64,
    pub nonlocal_energy: f64,
    pub dirichlet_target: f64,
    pub rel_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalLimitStudy {
    pub sigma: f64,
    pub rows: Vec<LocalLimitRow>,
    pub decreasing: bool,
}

/// Nonlocal-to-local limit: the scaled-family nonlocal energy
/// `iint J_m(x-y)(phi(x)-phi(y))^2` against `(sigma/2) int |grad phi|^2`
/// for a smooth interior bump.
pub fn experiment_local_limit(
    base: &KernelSpec,
    scales: &[f64],
    grid: Grid2D,
    bump_center: (f64, f64),
    bump_radius: f64,
) -> Result<LocalLimitStudy, SimError> {
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::Validation("scales must be increasing".into()));
    }
    let sigma = local_limit_sigma(base).map_err(|e| SimError::Validation(e.to_string()))?;

    // C^2 compactly supported bump.
    let phi = ScalarField::from_fn(grid, |x, y| {
        let r2 = ((x - bump_center.0) / bump_radius).powi(2)
            + ((y - bump_center.1) / bump_radius).powi(2);
        if r2 < 1.0 {
            (1.0 - r2).powi(3)
        } else {
            0.0
        }
    });
    let gphi = crate::ops::grad(&phi);
    let dirichlet = gphi.inner(&gphi);

    // interior-support precondition: distance to the boundary must exceed
    // five times the widest kernel in the list
    let widest = match &base.family {
        crate::kernel::KernelFamily::Gaussian { width } => {
            width / (base.scale * scales.first().copied().unwrap_or(1.0))
        }
        _ => {
            return Err(SimError::Validation(
                "the local-limit experiment is defined for the gaussian family".into(),
            ))
        }
    };
    let margin = (bump_center.0 - bump_radius)
        .min(grid.lx - bump_center.0 - bump_radius)
        .min(bump_center.1 - bump_radius)
        .min(grid.ly - bump_center.1 - bump_radius);
    if margin < 5.0 * widest {
        return Err(SimError::Validation(format!(
            "bump support is {margin:.3} from the boundary; needs at least {:.3}",
            5.0 * widest
        )));
    }

    let mut rows = Vec::new();
    for &m in scales {
        let mut spec = base.clone();
        spec.scale = base.scale * m;
        let kernel = DiscreteKernel::build(&spec, grid)?;
        let nl = 4.0 * crate::diagnostics::nonlocal_energy(&phi, &kernel);
        let target = 0.5 * sigma * dirichlet;
        let rel_gap = (nl - target).abs() / target.abs().max(1e-300);
        rows.push(LocalLimitRow { scale: m, nonlocal_energy: nl, dirichlet_target: target, rel_gap });
    }
    let decreasing = rows.windows(2).all(|w| w[1].rel_gap < w[0].rel_gap);
    Ok(LocalLimitStudy { sigma, rows, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::IcConfig;
    use crate::config::VelocityConfig;

    fn ch_only_config() -> SimConfig {
        SimConfig::from_json(
            r#"{
            "version": 1,
            "grid": {"nx": 16, "ny": 16, "lx": 1.0, "ly": 1.0},
            "kernel": {"family": "gaussian", "width": 0.1, "amplitude": 4.0},
            "potential": {"kind": "log", "theta": 0.5, "theta_c": 1.0},
            "mobility": {"kind": "degenerate-quadratic", "k1": 1.0},
            "mode": {"type": "degenerate"},
            "coupling": {"type": "ch-only", "velocity": {"type": "vortex", "max_speed": 1.0}},
            "dt": 2e-5,
            "t_end": 4e-4,
            "ic": {"type": "spinodal", "mean": 0.0, "amplitude": 0.3, "rng_seed": 11},
            "output": {"dir": "/tmp/nlchns-exp", "cadence_steps": 0}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn epsilon_study_constant_ic_has_zero_distances() {
        let mut cfg = ch_only_config();
        cfg.ic = IcConfig::Constant { value: 0.2 };
        cfg.coupling = CouplingConfig::ChOnly { velocity: VelocityConfig::Zero };
        let study = experiment_epsilon(&cfg, &[0.1, 0.05]).unwrap();
        for row in &study.rows {
            assert!(row.distance < 1e-13, "constant IC distance {}", row.distance);
        }
    }

    #[test]
    fn epsilon_study_rejects_bad_lists() {
        let cfg = ch_only_config();
        assert!(experiment_epsilon(&cfg, &[]).is_err());
        assert!(experiment_epsilon(&cfg, &[0.05, 0.1]).is_err());
        assert!(experiment_epsilon(&cfg, &[0.5, 0.1]).is_err());
    }

    #[test]
    fn contraction_zero_perturbation_stays_zero() {
        let cfg = ch_only_config();
        let study = experiment_contraction(&cfg, 0.0, 10).unwrap();
        assert_eq!(study.initial_distance, 0.0);
        for &(_, d) in &study.series {
            assert_eq!(d, 0.0, "identical twins must stay identical");
        }
    }

    #[test]
    fn contraction_amplitude_scaling() {
        let cfg = ch_only_config();
        let a = experiment_contraction(&cfg, 1e-3, 5).unwrap();
        let b = experiment_contraction(&cfg, 5e-4, 5).unwrap();
        let ratio = a.initial_distance / b.initial_distance;
        assert!((ratio - 2.0).abs() < 1e-9, "H^-1 norm is homogeneous: ratio {ratio}");
        assert!(a.c5.is_finite());
    }

    #[test]
    fn local_limit_constant_field_is_trivial() {
        let g = Grid2D::new(64, 64, 1.0, 1.0).unwrap();
        let base = KernelSpec {
            family: crate::kernel::KernelFamily::Gaussian { width: 0.02 },
            scale: 1.0,
            amplitude: 1.0,
        };
        // zero-radius bump is identically zero: both energy columns vanish
        let study = experiment_local_limit(&base, &[2.0, 4.0], g, (0.5, 0.5), 1e-6).unwrap();
        for row in &study.rows {
            assert_eq!(row.nonlocal_energy, 0.0);
            assert_eq!(row.dirichlet_target, 0.0);
        }
    }

    #[test]
    fn local_limit_rejects_boundary_hugging_bumps() {
        let g = Grid2D::new(32, 32, 1.0, 1.0).unwrap();
        let base = KernelSpec {
            family: crate::kernel::KernelFamily::Gaussian { width: 0.2 },
            scale: 1.0,
            amplitude: 1.0,
        };
        assert!(experiment_local_limit(&base, &[2.0], g, (0.5, 0.5), 0.45).is_err());
    }

    #[test]
    fn local_limit_amplitude_homogeneity() {
        let g = Grid2D::new(64, 64, 1.0, 1.0).unwrap();
        let mk = |amp: f64| KernelSpec {
            family: crate::kernel::KernelFamily::Gaussian { width: 0.04 },
            scale: 1.0,
            amplitude: amp,
        };
        let s1 = experiment_local_limit(&mk(1.0), &[2.0, 4.0], g, (0.5, 0.5), 0.2).unwrap();
        let s2 = experiment_local_limit(&mk(2.0), &[2.0, 4.0], g, (0.5, 0.5), 0.2).unwrap();
        for (a, b) in s1.rows.iter().zip(&s2.rows) {
            assert!((b.nonlocal_energy - 2.0 * a.nonlocal_energy).abs() <= 1e-10 * b.nonlocal_energy.abs());
            assert!((b.dirichlet_target - 2.0 * a.dirichlet_target).abs() <= 1e-10 * b.dirichlet_target.abs());
            assert!((a.rel_gap - b.rel_gap).abs() <= 1e-9, "gap is amplitude-invariant");
        }
    }
}
