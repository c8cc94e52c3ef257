//! Scenario configuration: a TOML key-value tree with full defaults, so an
//! empty file runs the standard three-drone weed-control scenario.
//!
//! The default density map is a reconstructed example (three Gaussian
//! patches on a 100 m x 100 m field); swap in surveyed components via
//! `[[field.components]]` for real use.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::agrosim::{HerbicideParams, SignConvention};
use crate::controller::ControlWeights;
use crate::density::{DensityField, GaussianComponent};
use crate::dynamics::{DroneParams, TankParams};
use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};

/// Which coverage method a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    D2oc,
    Lm,
    Smc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::D2oc => "d2oc",
            Method::Lm => "lm",
            Method::Smc => "smc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2oc" => Ok(Method::D2oc),
            "lm" => Ok(Method::Lm),
            "smc" => Ok(Method::Smc),
            other => Err(Error::config(
                "method",
                format!("unknown method `{other}` (expected d2oc|lm|smc)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// Evaluation-grid cell size in metres.
    pub cell_size: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            origin: [0.0, 0.0],
            size: [100.0, 100.0],
            cell_size: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub components: Vec<ComponentConfig>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        // Reconstructed example map: a dominant patch in the north-west, a
        // named secondary patch at (20, 40), and a broad third patch east.
        FieldConfig {
            components: vec![
                ComponentConfig {
                    mean: [12.0, 82.0],
                    covariance: [[64.0, 0.0], [0.0, 64.0]],
                    weight: 0.45,
                },
                ComponentConfig {
                    mean: [20.0, 40.0],
                    covariance: [[100.0, 0.0], [0.0, 100.0]],
                    weight: 0.35,
                },
                ComponentConfig {
                    mean: [70.0, 30.0],
                    covariance: [[144.0, 0.0], [0.0, 144.0]],
                    weight: 0.20,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroneConfig {
    pub mass: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub inertia_z: f64,
    pub max_thrust: f64,
    pub max_torque_rp: f64,
    pub max_torque_yaw: f64,
    pub max_speed: f64,
    pub max_angle_deg: f64,
    pub max_angular_rate_deg: f64,
    pub gravity: f64,
}

impl Default for DroneConfig {
    fn default() -> Self {
        DroneConfig {
            mass: 0.3,
            inertia_x: 0.2,
            inertia_y: 0.2,
            inertia_z: 0.4,
            max_thrust: 440.0,
            max_torque_rp: 81.4,
            max_torque_yaw: 5.5,
            max_speed: 7.0,
            max_angle_deg: 15.0,
            max_angular_rate_deg: 15.0,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TankConfig {
    /// Tank side length in m.
    pub side: f64,
    /// Distance from system mass center to tank bottom in m.
    pub mount_offset: f64,
    pub solution_density: f64,
    pub spray_rate: f64,
    /// Initial solution volume in m^3.
    pub initial_volume: f64,
    /// Tank height in m.
    pub height: f64,
}

impl Default for TankConfig {
    fn default() -> Self {
        TankConfig {
            side: 0.15,
            mount_offset: 0.2,
            solution_density: 1000.0,
            spray_rate: 1.4e-5,
            initial_volume: 8.0e-3,
            height: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HerbicideConfig {
    pub ld50: f64,
    pub concentration: f64,
    pub sign_convention: SignConvention,
}

impl Default for HerbicideConfig {
    fn default() -> Self {
        HerbicideConfig {
            ld50: 134.2,
            concentration: 495.3,
            sign_convention: SignConvention::AsWritten,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let w = ControlWeights::default();
        ControlConfig {
            q_diag: w.q.iter().copied().collect(),
            r_diag: w.r.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { horizon: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    /// Fourier cosine bases per axis.
    pub basis_count: usize,
    /// Spectral weight exponent in `(1 + |k|^2)^(-e)`.
    pub lambda_exponent: f64,
    /// Coarser grid used only to build the reference coefficients.
    pub coefficient_cell_size: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            basis_count: 40,
            lambda_exponent: 1.5,
            coefficient_cell_size: 0.5,
        }
    }
}

/// The complete run description. Every field has a default, so an empty
/// TOML file is a valid scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub method: Method,
    pub n_agents: usize,
    /// Mission length in seconds.
    pub operation_time: f64,
    /// Step size in seconds.
    pub dt: f64,
    /// Controller prediction horizon in steps.
    pub horizon: usize,
    pub n_sample_points: usize,
    /// Communication radius in metres; omit for centralized (unlimited).
    pub d_comm: Option<f64>,
    /// Flight altitude in m (sets the spray footprint).
    pub altitude: f64,
    /// Multiplier on the released active-ingredient mass.
    pub dose_scale: f64,
    /// Initial planar positions; defaults to domain corners then edge
    /// midpoints.
    pub initial_positions: Option<Vec<[f64; 2]>>,
    /// Steps between coverage-alignment transport samples; 0 disables,
    /// omit for one sample every tenth of the mission.
    pub wasserstein_sample_interval: Option<usize>,
    pub domain: DomainConfig,
    pub field: FieldConfig,
    pub drone: DroneConfig,
    pub tank: TankConfig,
    pub herbicide: HerbicideConfig,
    pub control: ControlConfig,
    pub mpc: MpcConfig,
    pub smc: SmcConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            method: Method::D2oc,
            n_agents: 3,
            operation_time: 180.0,
            dt: 0.1,
            horizon: 60,
            n_sample_points: 2000,
            d_comm: None,
            altitude: 1.5,
            dose_scale: 10.0,
            initial_positions: None,
            wasserstein_sample_interval: None,
            domain: DomainConfig::default(),
            field: FieldConfig::default(),
            drone: DroneConfig::default(),
            tank: TankConfig::default(),
            herbicide: HerbicideConfig::default(),
            control: ControlConfig::default(),
            mpc: MpcConfig::default(),
            smc: SmcConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Number of simulation steps.
    pub fn steps(&self) -> usize {
        (self.operation_time / self.dt).round() as usize
    }

    pub fn domain_rect(&self) -> Result<Rect> {
        Rect::new(
            Vec2::new(self.domain.origin[0], self.domain.origin[1]),
            Vec2::new(
                self.domain.origin[0] + self.domain.size[0],
                self.domain.origin[1] + self.domain.size[1],
            ),
        )
    }

    pub fn density_field(&self) -> Result<DensityField> {
        let components = self
            .field
            .components
            .iter()
            .map(|c| GaussianComponent {
                mean: Vec2::new(c.mean[0], c.mean[1]),
                covariance: Matrix2::new(
                    c.covariance[0][0],
                    c.covariance[0][1],
                    c.covariance[1][0],
                    c.covariance[1][1],
                ),
                weight: c.weight,
            })
            .collect();
        DensityField::new(components, self.domain_rect()?)
    }

    pub fn drone_params(&self) -> DroneParams {
        DroneParams {
            m_d: self.drone.mass,
            i_dx: self.drone.inertia_x,
            i_dy: self.drone.inertia_y,
            i_dz: self.drone.inertia_z,
            f_th_max: self.drone.max_thrust,
            tau_rp_max: self.drone.max_torque_rp,
            tau_y_max: self.drone.max_torque_yaw,
            v_max: self.drone.max_speed,
            angle_max: self.drone.max_angle_deg.to_radians(),
            omega_max: self.drone.max_angular_rate_deg.to_radians(),
            g: self.drone.gravity,
        }
    }

    pub fn tank_params(&self) -> TankParams {
        TankParams {
            l_l: self.tank.side,
            l_d: self.tank.mount_offset,
            rho_s: self.tank.solution_density,
            q_s: self.tank.spray_rate,
            h_s0: self.tank.initial_volume / (self.tank.side * self.tank.side),
            h_max: self.tank.height,
        }
    }

    pub fn herbicide_params(&self) -> HerbicideParams {
        HerbicideParams {
            ld50: self.herbicide.ld50,
            concentration: self.herbicide.concentration,
            sign_convention: self.herbicide.sign_convention,
        }
    }

    pub fn control_weights(&self) -> Result<ControlWeights> {
        if self.control.q_diag.len() != 12 {
            return Err(Error::config(
                "control.q_diag",
                format!("expected 12 entries, got {}", self.control.q_diag.len()),
            ));
        }
        if self.control.r_diag.len() != 4 {
            return Err(Error::config(
                "control.r_diag",
                format!("expected 4 entries, got {}", self.control.r_diag.len()),
            ));
        }
        ControlWeights::new(
            nalgebra::SVector::from_iterator(self.control.q_diag.iter().copied()),
            nalgebra::SVector::from_iterator(self.control.r_diag.iter().copied()),
        )
    }

    /// Initial agent positions: explicit from the config, else domain
    /// corners followed by edge midpoints.
    pub fn agent_positions(&self) -> Result<Vec<Vec2>> {
        let domain = self.domain_rect()?;
        if let Some(list) = &self.initial_positions {
            if list.len() != self.n_agents {
                return Err(Error::config(
                    "initial_positions",
                    format!("expected {} positions, got {}", self.n_agents, list.len()),
                ));
            }
            let mut out = Vec::with_capacity(list.len());
            for (i, p) in list.iter().enumerate() {
                let v = Vec2::new(p[0], p[1]);
                if !domain.contains(v) {
                    return Err(Error::config(
                        "initial_positions",
                        format!("position {i} = ({}, {}) is outside the domain", v.x, v.y),
                    ));
                }
                out.push(v);
            }
            return Ok(out);
        }
        let (lo, hi, c) = (domain.min, domain.max, domain.center());
        let defaults = [
            Vec2::new(lo.x, lo.y),
            Vec2::new(hi.x, lo.y),
            Vec2::new(lo.x, hi.y),
            Vec2::new(hi.x, hi.y),
            Vec2::new(c.x, lo.y),
            Vec2::new(c.x, hi.y),
            Vec2::new(lo.x, c.y),
            Vec2::new(hi.x, c.y),
        ];
        if self.n_agents > defaults.len() {
            return Err(Error::config(
                "initial_positions",
                format!(
                    "no default placement for {} agents; list positions explicitly",
                    self.n_agents
                ),
            ));
        }
        Ok(defaults[..self.n_agents].to_vec())
    }

    /// Steps between transport diagnostics; `0` disables them.
    pub fn wasserstein_interval(&self) -> usize {
        match self.wasserstein_sample_interval {
            Some(v) => v,
            None => (self.steps() / 10).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("n_agents", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be positive"));
        }
        if self.operation_time < 0.0 {
            return Err(Error::config("operation_time", "must be nonnegative"));
        }
        let steps_exact = self.operation_time / self.dt;
        if (steps_exact - steps_exact.round()).abs() > 1e-9 * steps_exact.max(1.0) {
            return Err(Error::config(
                "operation_time",
                format!("must be an integral number of steps, got {steps_exact}"),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.n_sample_points == 0 {
            return Err(Error::config("n_sample_points", "must be at least 1"));
        }
        if let Some(d) = self.d_comm {
            if !(d >= 0.0) {
                return Err(Error::config("d_comm", "must be nonnegative"));
            }
        }
        if !(self.domain.cell_size > 0.0) {
            return Err(Error::config("domain.cell_size", "must be positive"));
        }
        if !(self.dose_scale > 0.0) {
            return Err(Error::config("dose_scale", "must be positive"));
        }
        if self.smc.basis_count == 0 {
            return Err(Error::config("smc.basis_count", "must be at least 1"));
        }
        if self.mpc.horizon == 0 {
            return Err(Error::config("mpc.horizon", "must be at least 1"));
        }
        self.domain_rect()?;
        self.density_field()?;
        self.drone_params().validate()?;
        self.tank_params().validate()?;
        self.herbicide_params().validate()?;
        self.control_weights()?;
        self.agent_positions()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml(&text)
}
