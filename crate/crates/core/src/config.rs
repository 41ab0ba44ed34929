//! Scenario configuration and its TOML file format.
//!
//! Every key is optional; missing keys take the values of
//! [`ScenarioConfig::default`]. Example:
//!
//! ```toml
//! n_agents = 100
//! dim = 2
//! r_s = 0.3
//! gamma1 = 5.0
//! gamma2 = 2.0
//! dt = 0.01
//! t_max = 60.0
//! seed = 42
//! activation_radius = 2.0
//! goal_tolerance = 0.05
//! neighbor_input_model = "zero"     # zero | reciprocal
//! cij_variant = "paper"             # paper | derived
//! mode = "coordinated"              # decentralized | coordinated | oracle
//!
//! [sample_box]
//! min = -5.2
//! max = 5.2
//!
//! [bounds]
//! v_min = { x = -5.0, y = -5.0, z = -5.0 }
//! v_max = { x = 5.0, y = 5.0, z = 5.0 }
//! u_min = { x = -5.0, y = -5.0, z = -5.0 }
//! u_max = { x = 5.0, y = 5.0, z = 5.0 }
//! enforce_input = false
//!
//! [controller]
//! kp = 4.0
//! kd = 4.0
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::NominalController;
use crate::error::{Error, Result};
use crate::world::Bounds;

/// Largest time step accepted by [`ScenarioConfig::validate`].
pub const MAX_DT: f64 = 0.05;

/// Largest swarm the joint-enumeration mode accepts.
pub const ORACLE_MAX_AGENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborModel {
    /// The neighbor is assumed to apply no input.
    Zero,
    /// The neighbor is assumed to mirror the owner's nominal input.
    Reciprocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CijVariant {
    /// Offset with final coefficient `gamma2`.
    Paper,
    /// Offset with final coefficient `gamma1 * gamma2`, from expanding the
    /// second-order recursion.
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Decentralized,
    Coordinated,
    Oracle,
}

macro_rules! impl_str_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!("unknown {}: {other:?}", stringify!($ty))),
                }
            }
        }
    };
}

impl_str_enum!(NeighborModel { Zero => "zero", Reciprocal => "reciprocal" });
impl_str_enum!(CijVariant { Paper => "paper", Derived => "derived" });
impl_str_enum!(Mode { Decentralized => "decentralized", Coordinated => "coordinated", Oracle => "oracle" });

/// Sampling interval applied to every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub dim: u8,
    pub sample_box: SampleBox,
    pub r_s: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub activation_radius: f64,
    pub goal_tolerance: f64,
    pub neighbor_input_model: NeighborModel,
    pub cij_variant: CijVariant,
    pub mode: Mode,
    pub bounds: Bounds,
    pub controller: NominalController,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_agents: 100,
            dim: 2,
            sample_box: SampleBox { min: -5.2, max: 5.2 },
            r_s: 0.3,
            gamma1: 5.0,
            gamma2: 2.0,
            dt: 0.01,
            t_max: 60.0,
            seed: 42,
            activation_radius: 2.0,
            goal_tolerance: 0.05,
            neighbor_input_model: NeighborModel::Zero,
            cij_variant: CijVariant::Paper,
            mode: Mode::Coordinated,
            bounds: Bounds::default(),
            controller: NominalController::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_agents < 2 {
            return fail(format!("n_agents must be >= 2, got {}", self.n_agents));
        }
        if self.dim != 2 && self.dim != 3 {
            return fail(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if !(self.sample_box.min < self.sample_box.max) {
            return fail("sample_box.min must be < sample_box.max".into());
        }
        if !(self.r_s > 0.0) {
            return fail(format!("r_s must be positive, got {}", self.r_s));
        }
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return fail("gamma1 and gamma2 must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return fail(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt));
        }
        if !(self.t_max > 0.0) {
            return fail(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.activation_radius > self.r_s) {
            return fail("activation_radius must exceed r_s".into());
        }
        if !(self.goal_tolerance > 0.0) {
            return fail("goal_tolerance must be positive".into());
        }
        if !(self.controller.kp > 0.0 && self.controller.kd > 0.0) {
            return fail("controller gains must be positive".into());
        }
        if self.mode == Mode::Oracle && self.n_agents > ORACLE_MAX_AGENTS {
            return fail(format!("oracle mode limited to N ≤ {ORACLE_MAX_AGENTS}"));
        }
        self.bounds.validate()
    }
}
