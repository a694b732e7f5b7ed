//! Energy, carbon and tree-month estimates from logged runtime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_POWER: f64 = 0.3725;
/// kg CO2e per kWh, Germany.
pub const DEFAULT_LOCATION_INTENSITY: f64 = 0.3387;
/// kg CO2e one tree absorbs per month.
pub const DEFAULT_TREE_MONTH_CONSTANT: f64 = 0.9302;
pub const DEFAULT_PUE: f64 = 1.67;

fn default_memory_power() -> f64 {
    DEFAULT_MEMORY_POWER
}

fn default_pue() -> f64 {
    DEFAULT_PUE
}

fn default_usage() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub cores: u32,
    /// Watts per core.
    pub power_per_core: f64,
    #[serde(default = "default_usage")]
    pub usage: f64,
    /// GB.
    #[serde(default)]
    pub memory: f64,
    /// Watts per GB.
    #[serde(default = "default_memory_power")]
    pub memory_power: f64,
    #[serde(default = "default_pue")]
    pub pue: f64,
}

impl HardwareProfile {
    /// 48-core Xeon Platinum 9242 at its 350 W TDP, memory not counted.
    pub fn xeon_platinum_9242() -> Self {
        HardwareProfile {
            name: "xeon-platinum-9242".into(),
            cores: 48,
            power_per_core: 350.0 / 48.0,
            usage: 1.0,
            memory: 0.0,
            memory_power: DEFAULT_MEMORY_POWER,
            pue: DEFAULT_PUE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("hardware profile `{}`: {what}", self.name)));
        if !(self.power_per_core >= 0.0 && self.memory >= 0.0 && self.memory_power >= 0.0) {
            return bad("power and memory values must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.usage) {
            return bad("usage must be within [0, 1]");
        }
        if !(self.pue >= 1.0) {
            return bad("pue must be at least 1");
        }
        Ok(())
    }

    /// Average draw in watts, before PUE.
    pub fn watts(&self) -> f64 {
        self.cores as f64 * self.power_per_core * self.usage + self.memory * self.memory_power
    }
}

/// kWh for `runtime_h` hours on `profile`.
pub fn estimate_energy(runtime_h: f64, profile: &HardwareProfile) -> f64 {
    runtime_h * profile.pue * profile.watts() / 1000.0
}

/// kg CO2e.
pub fn estimate_carbon(energy_kwh: f64, intensity: f64) -> f64 {
    energy_kwh * intensity
}

pub fn to_tree_months(carbon_kg: f64, tree_month_constant: f64) -> Result<f64> {
    if !(tree_month_constant > 0.0) {
        return Err(Error::InvalidInput("tree-month constant must be positive".into()));
    }
    Ok(carbon_kg / tree_month_constant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub runtime_h: f64,
    pub energy_kwh: f64,
    pub carbon_kg: f64,
    pub tree_months: f64,
    pub intensity: f64,
}

impl EnergyEstimate {
    pub fn from_energy(runtime_h: f64, energy_kwh: f64, intensity: f64, tree_month_constant: f64) -> Result<Self> {
        let carbon_kg = estimate_carbon(energy_kwh, intensity);
        Ok(EnergyEstimate {
            runtime_h,
            energy_kwh,
            carbon_kg,
            tree_months: to_tree_months(carbon_kg, tree_month_constant)?,
            intensity,
        })
    }

    pub fn new(runtime_h: f64, profile: &HardwareProfile, intensity: f64, tree_month_constant: f64) -> Result<Self> {
        Self::from_energy(
            runtime_h,
            estimate_energy(runtime_h, profile),
            intensity,
            tree_month_constant,
        )
    }

    /// Sum of several estimates at the same intensity.
    pub fn combine(parts: &[EnergyEstimate], intensity: f64, tree_month_constant: f64) -> Result<Self> {
        let runtime_h = parts.iter().map(|p| p.runtime_h).sum();
        let energy = parts.iter().map(|p| p.energy_kwh).sum();
        Self::from_energy(runtime_h, energy, intensity, tree_month_constant)
    }
}
