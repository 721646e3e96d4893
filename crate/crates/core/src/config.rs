//! JSON run configuration, versioned schema.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::kernel::KernelSpec;
use crate::material::{MobilitySpec, PotentialSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeConfig {
    Degenerate,
    Regularized { epsilon: f64 },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityConfig {
    #[default]
    Zero,
    Constant {
        ux: f64,
        uy: f64,
    },
    /// Interior recirculation from the discrete stream function
    /// `sin^2(pi x/lx) sin^2(pi y/ly)`, scaled to the requested max speed;
    /// exactly divergence-free and zero on the walls.
    Vortex {
        max_speed: f64,
    },
    Table {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    Zero,
    Constant {
        fx: f64,
        fy: f64,
    },
    Table {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingConfig {
    /// Full system: Navier-Stokes driven by the Korteweg force, then the
    /// order parameter transported by the new velocity.
    Coupled {
        nu: f64,
        #[serde(default)]
        h: ForcingConfig,
    },
    /// Order parameter only, transported by a prescribed velocity.
    ChOnly {
        #[serde(default)]
        velocity: VelocityConfig,
    },
    /// Navier-Stokes only; the order parameter is frozen. Comparison mode
    /// for the pure-phase equivalence check.
    NsOnly {
        nu: f64,
        #[serde(default)]
        h: ForcingConfig,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IcConfig {
    Constant { value: f64 },
    /// `mean + amplitude * uniform(-1,1)` i.i.d. per cell, re-centered to
    /// the exact mean; seeded, hence bit-reproducible.
    Spinodal { mean: f64, amplitude: f64, rng_seed: u64 },
    PurePhase { sign: i8 },
    Snapshot { path: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Snapshot every this many steps (0 = final state only).
    #[serde(default)]
    pub cadence_steps: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub mass: f64,
    pub projection_div: f64,
    pub poisson_residual: f64,
    pub entropy_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mass: 1e-12, projection_div: 1e-10, poisson_residual: 1e-11, entropy_slack: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub version: u32,
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    pub mobility: MobilitySpec,
    pub mode: ModeConfig,
    pub coupling: CouplingConfig,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    pub ic: IcConfig,
    #[serde(default)]
    pub ic_velocity: VelocityConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub limiter: bool,
}

fn default_cfl() -> f64 {
    0.8
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        crate::grid::Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
            .map_err(|e| format!("grid: {e}"))?;
        self.kernel.validate().map_err(|e| format!("kernel: {e}"))?;
        self.potential.validate().map_err(|e| format!("potential: {e}"))?;
        self.mobility.validate().map_err(|e| format!("mobility: {e}"))?;
        if let ModeConfig::Regularized { epsilon } = self.mode {
            let eps0 = self.potential.eps0();
            if !(epsilon > 0.0 && epsilon <= eps0) {
                return Err(format!("mode.epsilon: {epsilon} outside (0, {eps0}]"));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt: must be positive, got {}", self.dt));
        }
        if self.t_end < self.dt {
            return Err(format!("t_end: {} is below one step dt = {}", self.t_end, self.dt));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(format!("cfl_safety: {} outside (0, 1]", self.cfl_safety));
        }
        match &self.ic {
            IcConfig::Constant { value } => {
                if value.abs() > 1.0 {
                    return Err(format!("ic.value: {value} outside [-1, 1]"));
                }
            }
            IcConfig::Spinodal { mean, amplitude, .. } => {
                if mean.abs() > 1.0 {
                    return Err(format!("ic.mean: {mean} outside [-1, 1]"));
                }
                if *amplitude < 0.0 {
                    return Err(format!("ic.amplitude: {amplitude} negative"));
                }
            }
            IcConfig::PurePhase { sign } => {
                if *sign != 1 && *sign != -1 {
                    return Err(format!("ic.sign: {sign} must be +1 or -1"));
                }
            }
            IcConfig::Snapshot { .. } => {}
        }
        match &self.coupling {
            CouplingConfig::Coupled { nu, .. } | CouplingConfig::NsOnly { nu, .. } => {
                if !(*nu > 0.0) {
                    return Err(format!("coupling.nu: {nu} must be positive"));
                }
            }
            CouplingConfig::ChOnly { .. } => {}
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) + 1e-9).floor() as usize
    }
}
