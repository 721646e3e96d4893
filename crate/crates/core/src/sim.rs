//! Run orchestration: build the discrete problem from a config, alternate
//! the Navier-Stokes and Cahn-Hilliard steps (Lie splitting, velocity
//! first, Korteweg force lagged at phi^n), and stream diagnostics.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assumptions::{check_assumptions, AssumptionReport, CheckMode};
use crate::ch::{ch_step, ChMode, ChParams, ChProblem, ChState};
use crate::config::{
    CouplingConfig, ForcingConfig, IcConfig, ModeConfig, SimConfig, VelocityConfig,
};
use crate::diagnostics::{
    bounds_mass_report, dissipation_terms, energy, energy_identity_residual, entropy_balance,
    DiagnosticsRecord,
};
use crate::error::{KernelError, SolveError};
use crate::field::{FaceField, ScalarField};
use crate::grid::Grid2D;
use crate::kernel::DiscreteKernel;
use crate::material::MaterialModel;
use crate::ns::{korteweg_force, ns_step, NsParams, NsState};
use crate::poisson::NeumannPoisson;
use crate::snapshot;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// Malformed configuration or inputs: exit code 2.
    #[error("validation error: {0}")]
    Validation(String),
    /// Numerical failure during a run: exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<SolveError> for SimError {
    fn from(e: SolveError) -> Self {
        SimError::Numerical(e.to_string())
    }
}

impl From<KernelError> for SimError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NonFiniteQuadrature { .. } => SimError::Numerical(e.to_string()),
            other => SimError::Validation(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub steps_taken: usize,
    pub rejected_steps: usize,
    pub final_record: Option<DiagnosticsRecord>,
    pub max_mass_drift: f64,
    pub max_overshoot: f64,
    pub max_energy_residual: f64,
    pub accumulated_energy_residual: f64,
    pub energy_monotone_steps: usize,
    pub entropy_holds_steps: usize,
    pub flags: BTreeMap<String, bool>,
    pub c0: Option<f64>,
    pub c_entropy: Option<f64>,
    pub aborted: Option<String>,
}

/// Everything a run produces, kept in memory for the experiment drivers;
/// files are written when an output directory is configured.
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<DiagnosticsRecord>,
    pub phi: Option<ChState>,
    pub velocity: Option<NsState>,
    pub assumptions: Vec<AssumptionReport>,
    /// phi trajectory snapshots (step index, state), populated on request.
    pub phi_series: Vec<(usize, ScalarField)>,
}

pub fn build_kernel(cfg: &SimConfig) -> Result<DiscreteKernel, SimError> {
    let grid = Grid2D::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly)
        .map_err(|e| SimError::Validation(e.to_string()))?;
    Ok(DiscreteKernel::build(&cfg.kernel, grid)?)
}

pub fn build_material(cfg: &SimConfig) -> Result<MaterialModel, SimError> {
    MaterialModel::new(cfg.potential.clone(), cfg.mobility.clone())
        .map_err(|e| SimError::Validation(e.to_string()))
}

pub fn build_initial_phi(cfg: &SimConfig, grid: Grid2D) -> Result<ScalarField, SimError> {
    let phi = match &cfg.ic {
        IcConfig::Constant { value } => ScalarField::constant(grid, *value),
        IcConfig::PurePhase { sign } => ScalarField::constant(grid, *sign as f64),
        IcConfig::Spinodal { mean, amplitude, rng_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*rng_seed);
            let mut f = ScalarField::zeros(grid);
            for v in f.data.iter_mut() {
                *v = mean + amplitude * rng.gen_range(-1.0..1.0);
            }
            let drift = f.mean() - mean;
            f.shift(-drift);
            f
        }
        IcConfig::Snapshot { path } => snapshot::read_scalar(path)
            .map_err(|e| SimError::Validation(format!("ic snapshot: {e}")))?,
    };
    if phi.grid != grid {
        return Err(SimError::Validation("ic snapshot grid differs from config grid".into()));
    }
    if !phi.is_finite() {
        return Err(SimError::Validation("initial condition contains non-finite values".into()));
    }
    Ok(phi)
}

/// Discrete stream-function vortex: u = d(psi)/dy, v = -d(psi)/dx on faces
/// from corner values of `sin^2(pi x/lx) sin^2(pi y/ly)`, hence exactly
/// divergence-free with zero boundary-normal and tangential components.
pub fn vortex_velocity(grid: Grid2D, max_speed: f64) -> FaceField {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut psi = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            let sx = (std::f64::consts::PI * i as f64 / nx as f64).sin();
            let sy = (std::f64::consts::PI * j as f64 / ny as f64).sin();
            psi[j * (nx + 1) + i] = sx * sx * sy * sy;
        }
    }
    let mut w = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 0..=nx {
            w.u[j * (nx + 1) + i] = (psi[(j + 1) * (nx + 1) + i] - psi[j * (nx + 1) + i]) / grid.hy();
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            w.v[j * nx + i] = -(psi[j * (nx + 1) + i + 1] - psi[j * (nx + 1) + i]) / grid.hx();
        }
    }
    let m = w.max_abs();
    if m > 0.0 {
        let s = max_speed / m;
        for x in w.u.iter_mut().chain(w.v.iter_mut()) {
            *x *= s;
        }
    }
    w
}

pub fn build_velocity(
    spec: &VelocityConfig,
    grid: Grid2D,
    project_constant: bool,
    poisson: &NeumannPoisson,
) -> Result<FaceField, SimError> {
    match spec {
        VelocityConfig::Zero => Ok(FaceField::zeros(grid)),
        VelocityConfig::Vortex { max_speed } => Ok(vortex_velocity(grid, *max_speed)),
        VelocityConfig::Constant { ux, uy } => {
            let mut w = FaceField::zeros(grid);
            for j in 0..grid.ny {
                for i in 0..=grid.nx {
                    w.u[j * (grid.nx + 1) + i] = *ux;
                }
            }
            for j in 0..=grid.ny {
                for i in 0..grid.nx {
                    w.v[j * grid.nx + i] = *uy;
                }
            }
            if project_constant {
                // no-penetration walls cannot carry a uniform stream; take
                // the nearest solenoidal interior field instead
                w.zero_boundary_normal();
                let (p, _) = crate::ns::project(&w, poisson)?;
                Ok(p)
            } else {
                Ok(w)
            }
        }
        VelocityConfig::Table { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SimError::Validation(format!("velocity table {path:?}: {e}")))?;
            let mut w = FaceField::zeros(grid);
            read_face_table(&text, &mut w)
                .map_err(|e| SimError::Validation(format!("velocity table {path:?}: {e}")))?;
            Ok(w)
        }
    }
}

/// CSV rows `component,i,j,value` with component `u` or `v`.
fn read_face_table(text: &str, w: &mut FaceField) -> Result<(), String> {
    let (nx, ny) = (w.grid.nx, w.grid.ny);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("component") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("line {}: expected component,i,j,value", lineno + 1));
        }
        let i: usize = parts[1].parse().map_err(|_| format!("line {}: bad i", lineno + 1))?;
        let j: usize = parts[2].parse().map_err(|_| format!("line {}: bad j", lineno + 1))?;
        let v: f64 = parts[3].parse().map_err(|_| format!("line {}: bad value", lineno + 1))?;
        match parts[0] {
            "u" if i <= nx && j < ny => w.u[j * (nx + 1) + i] = v,
            "v" if i < nx && j <= ny => w.v[j * nx + i] = v,
            "u" | "v" => return Err(format!("line {}: face index out of range", lineno + 1)),
            other => return Err(format!("line {}: unknown component {other:?}", lineno + 1)),
        }
    }
    Ok(())
}

pub fn build_forcing(
    spec: &ForcingConfig,
    grid: Grid2D,
) -> Result<FaceField, SimError> {
    match spec {
        ForcingConfig::Zero => Ok(FaceField::zeros(grid)),
        ForcingConfig::Constant { fx, fy } => {
            let mut w = FaceField::zeros(grid);
            for j in 0..grid.ny {
                for i in 1..grid.nx {
                    w.u[j * (grid.nx + 1) + i] = *fx;
                }
            }
            for j in 1..grid.ny {
                for i in 0..grid.nx {
                    w.v[j * grid.nx + i] = *fy;
                }
            }
            Ok(w)
        }
        ForcingConfig::Table { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SimError::Validation(format!("forcing table {path:?}: {e}")))?;
            let mut w = FaceField::zeros(grid);
            read_face_table(&text, &mut w)
                .map_err(|e| SimError::Validation(format!("forcing table {path:?}: {e}")))?;
            w.zero_boundary_normal();
            Ok(w)
        }
    }
}

pub struct SimulateOptions {
    pub strict: bool,
    /// Keep every `keep_phi_every`-th phi state in memory (0 = none).
    pub keep_phi_every: usize,
    /// Write output files (CSV, snapshots, reports) to cfg.output.dir.
    pub write_files: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { strict: false, keep_phi_every: 0, write_files: true }
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    simulate_with(cfg, &SimulateOptions::default())
}

pub fn simulate_with(cfg: &SimConfig, opts: &SimulateOptions) -> Result<RunOutput, SimError> {
    cfg.validate().map_err(SimError::Validation)?;
    let grid = Grid2D::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly)
        .map_err(|e| SimError::Validation(e.to_string()))?;
    let kernel = build_kernel(cfg)?;
    let material = build_material(cfg)?;
    let mode = match cfg.mode {
        ModeConfig::Degenerate => ChMode::Degenerate,
        ModeConfig::Regularized { epsilon } => ChMode::Regularized { eps: epsilon },
    };

    // Hypothesis check first: warn-only unless strict.
    let mut assumptions = Vec::new();
    match mode {
        ChMode::Degenerate => {
            assumptions.push(check_assumptions(
                &cfg.potential,
                &cfg.mobility,
                &kernel,
                CheckMode::Degenerate,
            ));
            assumptions.push(check_assumptions(
                &cfg.potential,
                &cfg.mobility,
                &kernel,
                CheckMode::Regularity,
            ));
        }
        ChMode::Regularized { eps } => {
            assumptions.push(check_assumptions(
                &cfg.potential,
                &cfg.mobility,
                &kernel,
                CheckMode::Regularized { eps },
            ));
        }
    }
    let all_pass = assumptions.iter().all(|r| r.all_pass);
    if opts.strict && !all_pass {
        return Err(SimError::Validation(
            "assumption check failed under --strict; see the assumption report".into(),
        ));
    }

    let prob = ChProblem::new(&kernel, material, mode)
        .map_err(|e| SimError::Validation(e.to_string()))?;
    let poisson = NeumannPoisson::new(grid);

    let c0 = assumptions.iter().find_map(|r| r.c0());
    let c_entropy = c0.map(|c| crate::diagnostics::entropy_constant(&kernel, c));

    // Initial state.
    let phi0 = build_initial_phi(cfg, grid)?;
    let mut phi_state = ChState::new(phi0);
    if let ChMode::Regularized { .. } = mode {
        phi_state.mu = Some(crate::ch::chemical_potential(&phi_state.phi, &prob)?);
    }
    let mass0 = phi_state.phi.mean();

    let (ch_active, ns_active, nu, h_spec) = match &cfg.coupling {
        CouplingConfig::Coupled { nu, h } => (true, true, *nu, h.clone()),
        CouplingConfig::ChOnly { .. } => (true, false, 0.0, ForcingConfig::Zero),
        CouplingConfig::NsOnly { nu, h } => (false, true, *nu, h.clone()),
    };
    let h_force = build_forcing(&h_spec, grid)?;

    let prescribed_u = match &cfg.coupling {
        CouplingConfig::ChOnly { velocity } => {
            Some(build_velocity(velocity, grid, false, &poisson)?)
        }
        _ => None,
    };
    let mut ns_state = if ns_active {
        let u0 = build_velocity(&cfg.ic_velocity, grid, true, &poisson)?;
        let mut s = NsState::at_rest(grid, nu);
        s.u = u0;
        Some(s)
    } else {
        None
    };

    let ch_params = ChParams {
        cfl_safety: cfg.cfl_safety,
        limiter: cfg.limiter,
        ..ChParams::default()
    };
    let ns_params = NsParams { cfl_safety: cfg.cfl_safety, ..NsParams::default() };

    // Output plumbing.
    let out_dir: Option<PathBuf> = if opts.write_files { Some(cfg.output.dir.clone()) } else { None };
    let mut csv = match &out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| SimError::Validation(format!("output dir: {e}")))?;
            let mut f = std::fs::File::create(dir.join("diagnostics.csv"))
                .map_err(|e| SimError::Validation(format!("diagnostics.csv: {e}")))?;
            writeln!(f, "{}", DiagnosticsRecord::CSV_HEADER)
                .map_err(|e| SimError::Validation(e.to_string()))?;
            Some(f)
        }
        None => None,
    };
    if let Some(dir) = &out_dir {
        let json = serde_json::to_string_pretty(&assumptions).expect("serializable");
        std::fs::write(dir.join("assumptions.json"), json)
            .map_err(|e| SimError::Validation(e.to_string()))?;
        let report = serde_json::to_string_pretty(&kernel.report()).expect("serializable");
        std::fs::write(dir.join("kernel.json"), report)
            .map_err(|e| SimError::Validation(e.to_string()))?;
    }

    let steps = cfg.steps();
    let mut records: Vec<DiagnosticsRecord> = Vec::with_capacity(steps);
    let mut phi_series = Vec::new();
    if opts.keep_phi_every > 0 {
        phi_series.push((0usize, phi_state.phi.clone()));
    }

    let mut summary = RunSummary {
        steps_taken: 0,
        rejected_steps: 0,
        final_record: None,
        max_mass_drift: 0.0,
        max_overshoot: 0.0,
        max_energy_residual: 0.0,
        accumulated_energy_residual: 0.0,
        energy_monotone_steps: 0,
        entropy_holds_steps: 0,
        flags: BTreeMap::new(),
        c0,
        c_entropy,
        aborted: None,
    };

    let mut prev_energy = f64::INFINITY;
    let mut aborted = None;

    for step in 0..steps {
        let prev_phi = phi_state.clone();
        let prev_u = ns_state.as_ref().map(|s| s.u.clone());

        // Lie splitting: velocity first with the force lagged at phi^n.
        if let Some(ns) = ns_state.as_mut() {
            let force = if ch_active {
                korteweg_force(&phi_state.phi, &kernel).map_err(SolveError::Field)?
            } else {
                FaceField::zeros(grid)
            };
            match ns_step(ns, &force, &h_force, cfg.dt, &poisson, &ns_params) {
                Ok((next, _rep)) => *ns = next,
                Err(e) => {
                    summary.rejected_steps += 1;
                    aborted = Some(format!("step {step}: {e}"));
                    break;
                }
            }
        }

        if ch_active {
            let u_now = ns_state
                .as_ref()
                .map(|s| &s.u)
                .or(prescribed_u.as_ref())
                .expect("ch needs a velocity");
            match ch_step(&phi_state, u_now, cfg.dt, &prob, &ch_params) {
                Ok((next, _rep)) => phi_state = next,
                Err(e) => {
                    summary.rejected_steps += 1;
                    aborted = Some(format!("step {step}: {e}"));
                    break;
                }
            }
        } else {
            phi_state.t += cfg.dt;
        }

        // Diagnostics for the accepted step.
        let mass_rep = bounds_mass_report(&phi_state.phi);
        let u_next = ns_state.as_ref().map(|s| &s.u);
        let eb = energy(u_next, &phi_state.phi, &kernel, &prob);
        let diss = dissipation_terms(u_next, nu, &phi_state, &prob);
        let residual = if ch_active {
            energy_identity_residual(
                &prev_phi,
                &phi_state,
                prev_u.as_ref().filter(|_| ns_active),
                u_next.filter(|_| ns_active),
                nu,
                Some(&h_force),
                cfg.dt,
                &prob,
            )
        } else {
            0.0
        };
        let (entropy_lhs, entropy_rhs, entropy_m) = match (prob.mode, c0) {
            (ChMode::Regularized { eps }, Some(c0v)) if ch_active => {
                let (l, r) = entropy_balance(&prev_phi, &phi_state, cfg.dt, &prob, c0v);
                let vol = grid.cell_volume();
                let m: f64 = phi_state
                    .phi
                    .data
                    .iter()
                    .map(|&s| prob.material.entropy_eps(s, eps).0)
                    .sum::<f64>()
                    * vol;
                (l, r, m)
            }
            _ => {
                let vol = grid.cell_volume();
                let m: f64 = phi_state
                    .phi
                    .data
                    .iter()
                    .map(|&s| prob.material.entropy_clamped(s))
                    .sum::<f64>()
                    * vol;
                (f64::NAN, f64::NAN, m)
            }
        };

        let record = DiagnosticsRecord {
            t: phi_state.t,
            mass_mean: mass_rep.mean,
            overshoot: mass_rep.overshoot,
            e_total: eb.total,
            e_kin: eb.kinetic,
            e_nonlocal: eb.nonlocal,
            e_pot: eb.potential,
            visc_diss: diss.visc,
            chem_diss: diss.chem,
            residual_energy: residual,
            entropy_m,
            entropy_lhs,
            entropy_rhs,
            hminus1_twin: None,
        };
        if let Some(f) = csv.as_mut() {
            writeln!(f, "{}", record.csv_row()).map_err(|e| SimError::Numerical(e.to_string()))?;
        }

        summary.steps_taken += 1;
        summary.max_mass_drift = summary.max_mass_drift.max((mass_rep.mean - mass0).abs());
        summary.max_overshoot = summary.max_overshoot.max(mass_rep.overshoot);
        if residual.is_finite() {
            summary.max_energy_residual = summary.max_energy_residual.max(residual.abs());
            summary.accumulated_energy_residual += residual.abs() * cfg.dt;
        }
        if eb.total <= prev_energy + 1e-10 * prev_energy.abs().max(1.0) {
            summary.energy_monotone_steps += 1;
        }
        prev_energy = eb.total;
        if entropy_lhs.is_finite() {
            let scale = entropy_rhs.abs().max(entropy_m.abs()).max(1.0);
            if entropy_lhs <= entropy_rhs + cfg.tolerances.entropy_slack * scale {
                summary.entropy_holds_steps += 1;
            }
        }

        if opts.keep_phi_every > 0 && (step + 1) % opts.keep_phi_every == 0 {
            phi_series.push((step + 1, phi_state.phi.clone()));
        }
        if let Some(dir) = &out_dir {
            let cadence = cfg.output.cadence_steps;
            if cadence > 0 && (step + 1) % cadence == 0 {
                write_state_snapshots(dir, step + 1, &phi_state, ns_state.as_ref())
                    .map_err(|e| SimError::Numerical(e.to_string()))?;
            }
        }

        records.push(record);
    }

    if let Some(dir) = &out_dir {
        write_state_snapshots(dir, summary.steps_taken, &phi_state, ns_state.as_ref())
            .map_err(|e| SimError::Numerical(e.to_string()))?;
    }

    summary.final_record = records.last().copied();
    summary.aborted = aborted;
    let ch_records = ch_active && !records.is_empty();
    summary.flags.insert(
        "mass_conserved".into(),
        ch_records && summary.max_mass_drift <= cfg.tolerances.mass,
    );
    summary.flags.insert("completed".into(), summary.aborted.is_none());
    summary
        .flags
        .insert("assumptions_pass".into(), all_pass);
    summary.flags.insert(
        "entropy_inequality".into(),
        matches!(prob.mode, ChMode::Regularized { .. })
            && c0.is_some()
            && summary.entropy_holds_steps == summary.steps_taken,
    );

    if let Some(dir) = &out_dir {
        let json = serde_json::to_string_pretty(&summary).expect("serializable");
        std::fs::write(dir.join("summary.json"), json)
            .map_err(|e| SimError::Numerical(e.to_string()))?;
    }

    if let Some(msg) = &summary.aborted {
        // partial outputs are already on disk; surface the failure
        return Err(SimError::Numerical(format!(
            "aborted after {} steps ({} rejected): {msg}",
            summary.steps_taken, summary.rejected_steps
        )));
    }

    Ok(RunOutput {
        summary,
        records,
        phi: Some(phi_state),
        velocity: ns_state,
        assumptions,
        phi_series,
    })
}

fn write_state_snapshots(
    dir: &Path,
    step: usize,
    phi: &ChState,
    ns: Option<&NsState>,
) -> Result<(), snapshot::SnapshotError> {
    snapshot::write_scalar(&dir.join(format!("phi_{step:06}.bin")), &phi.phi)?;
    if let Some(ns) = ns {
        let g = ns.u.grid;
        snapshot::write_array(
            &dir.join(format!("u_{step:06}.bin")),
            &snapshot::SnapshotArray {
                cols: g.nx as u32 + 1,
                rows: g.ny as u32,
                lx: g.lx,
                ly: g.ly,
                data: ns.u.u.clone(),
            },
        )?;
        snapshot::write_array(
            &dir.join(format!("v_{step:06}.bin")),
            &snapshot::SnapshotArray {
                cols: g.nx as u32,
                rows: g.ny as u32 + 1,
                lx: g.lx,
                ly: g.ly,
                data: ns.u.v.clone(),
            },
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(dir: &Path) -> SimConfig {
        let json = format!(
            r#"{{
            "version": 1,
            "grid": {{"nx": 16, "ny": 16, "lx": 1.0, "ly": 1.0}},
            "kernel": {{"family": "gaussian", "width": 0.1, "amplitude": 4.0}},
            "potential": {{"kind": "log", "theta": 0.5, "theta_c": 1.0}},
            "mobility": {{"kind": "degenerate-quadratic", "k1": 1.0}},
            "mode": {{"type": "degenerate"}},
            "coupling": {{"type": "coupled", "nu": 0.1}},
            "dt": 2e-5,
            "t_end": 2e-4,
            "ic": {{"type": "constant", "value": 0.2}},
            "output": {{"dir": {:?}, "cadence_steps": 0}}
        }}"#,
            dir.to_str().unwrap()
        );
        SimConfig::from_json(&json).unwrap()
    }

    #[test]
    fn constant_ic_stays_put_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base_config(dir.path());
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.summary.steps_taken, 10);
        let phi = out.phi.unwrap();
        for v in &phi.phi.data {
            assert!((v - 0.2).abs() < 1e-13, "constant state moved: {v}");
        }
        assert!(dir.path().join("diagnostics.csv").exists());
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("assumptions.json").exists());
        assert!(dir.path().join(format!("phi_{:06}.bin", 10)).exists());
        assert!(out.summary.flags["mass_conserved"]);

        let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 11, "header plus one row per step");
    }

    #[test]
    fn bit_reproducible_given_seed() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg1 = base_config(dir1.path());
        cfg1.ic = IcConfig::Spinodal { mean: 0.1, amplitude: 0.05, rng_seed: 99 };
        let mut cfg2 = base_config(dir2.path());
        cfg2.ic = IcConfig::Spinodal { mean: 0.1, amplitude: 0.05, rng_seed: 99 };
        simulate(&cfg1).unwrap();
        simulate(&cfg2).unwrap();
        let a = std::fs::read_to_string(dir1.path().join("diagnostics.csv")).unwrap();
        let b = std::fs::read_to_string(dir2.path().join("diagnostics.csv")).unwrap();
        assert_eq!(a, b, "identical config and seed must give identical CSV");
        let sa = std::fs::read(dir1.path().join(format!("phi_{:06}.bin", 10))).unwrap();
        let sb = std::fs::read(dir2.path().join(format!("phi_{:06}.bin", 10))).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn ch_only_with_zero_velocity_matches_coupled_at_rest() {
        let dir1 = tempfile::tempdir().unwrap();
        let mut cfg = base_config(dir1.path());
        cfg.coupling = CouplingConfig::ChOnly { velocity: VelocityConfig::Zero };
        cfg.ic = IcConfig::Spinodal { mean: 0.0, amplitude: 0.05, rng_seed: 5 };
        let out = simulate(&cfg).unwrap();
        assert!(out.summary.flags["mass_conserved"]);
        for rec in &out.records {
            assert_eq!(rec.e_kin, 0.0, "velocity columns must be zero in ch-only mode");
        }
    }

    #[test]
    fn cfl_violation_aborts_with_numerical_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config(dir.path());
        cfg.dt = 0.05;
        cfg.t_end = 0.1;
        match simulate(&cfg) {
            Err(SimError::Numerical(msg)) => {
                assert!(msg.contains("CFL") || msg.contains("largest admissible"), "{msg}")
            }
            other => panic!("expected numerical failure, got {:?}", other.map(|_| ())),
        }
        // partial outputs exist
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn vortex_is_discretely_divergence_free() {
        let g = Grid2D::new(32, 32, 1.0, 1.0).unwrap();
        let w = vortex_velocity(g, 1.0);
        assert!((w.max_abs() - 1.0).abs() < 1e-12);
        let d = crate::ops::div(&w);
        assert!(d.max_abs() < 1e-11, "vortex divergence {}", d.max_abs());
        assert_eq!(w.boundary_normal_max_abs(), 0.0);
    }
}
