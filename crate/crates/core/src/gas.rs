//! Gas model and free-stream conditions.
//!
//! Everything is dimensional (SI). The solver stores gauge pressure, so the
//! free-stream static pressure `p_inf` is carried here and added back wherever
//! the thermodynamic pressure is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Viscosity law used by the viscous flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ViscosityLaw {
    /// Constant dynamic viscosity in Pa·s. Zero gives an inviscid model.
    Constant { mu: f64 },
    /// Sutherland's law `mu_ref (T/T_ref)^1.5 (T_ref + S)/(T + S)`.
    Sutherland { mu_ref: f64, t_ref: f64, s: f64 },
}

impl ViscosityLaw {
    pub fn viscosity(&self, t: f64) -> f64 {
        self.viscosity_at(t)
    }

    pub fn viscosity_at<S: Real>(&self, t: S) -> S {
        match *self {
            ViscosityLaw::Constant { mu } => S::lift(mu),
            ViscosityLaw::Sutherland { mu_ref, t_ref, s } => {
                let c = S::lift;
                let r = t / c(t_ref);
                c(mu_ref) * r * r.sqrt() * c(t_ref + s) / (t + c(s))
            }
        }
    }

    pub fn is_inviscid(&self) -> bool {
        matches!(*self, ViscosityLaw::Constant { mu } if mu == 0.0)
    }
}

/// Calorically perfect gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub gamma: f64,
    /// Specific gas constant, J/(kg·K).
    pub gas_constant: f64,
    pub prandtl: f64,
    pub viscosity: ViscosityLaw,
}

impl GasModel {
    /// Inviscid air: gamma = 1.4, R = 287.05 J/(kg·K).
    pub fn air() -> Self {
        GasModel {
            gamma: 1.4,
            gas_constant: 287.05,
            prandtl: 0.72,
            viscosity: ViscosityLaw::Constant { mu: 0.0 },
        }
    }

    /// Air with a constant viscosity chosen so that `fs` has the requested Reynolds number.
    pub fn air_from_reynolds(fs: &FreestreamConditions) -> Result<Self> {
        let mut gas = GasModel::air();
        if !(fs.reynolds > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reynolds number must be positive for a viscous model, got {}",
                fs.reynolds
            )));
        }
        let mu = fs.density(&gas) * fs.speed(&gas) * fs.reference_length / fs.reynolds;
        gas.viscosity = ViscosityLaw::Constant { mu };
        gas.validate()?;
        Ok(gas)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.gas_constant > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gas constant must be positive, got {}",
                self.gas_constant
            )));
        }
        if !(self.prandtl > 0.0) {
            return Err(Error::InvalidConfig(format!("prandtl must be positive, got {}", self.prandtl)));
        }
        let bad = match self.viscosity {
            ViscosityLaw::Constant { mu } => !(mu >= 0.0) || !mu.is_finite(),
            ViscosityLaw::Sutherland { mu_ref, t_ref, s } => !(mu_ref >= 0.0 && t_ref > 0.0 && s >= 0.0),
        };
        if bad {
            return Err(Error::InvalidConfig(format!("invalid viscosity law {:?}", self.viscosity)));
        }
        Ok(())
    }

    /// Specific heat at constant pressure.
    pub fn cp(&self) -> f64 {
        self.gamma * self.gas_constant / (self.gamma - 1.0)
    }

    pub fn sound_speed(&self, t: f64) -> f64 {
        (self.gamma * self.gas_constant * t).sqrt()
    }

    pub fn is_viscous(&self) -> bool {
        !self.viscosity.is_inviscid()
    }
}

impl Default for GasModel {
    fn default() -> Self {
        GasModel::air()
    }
}

/// Free-stream conditions. Angle of attack is in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreestreamConditions {
    pub mach: f64,
    #[serde(default)]
    pub angle_of_attack: f64,
    #[serde(default = "default_p_inf")]
    pub p_inf: f64,
    #[serde(default = "default_t_inf")]
    pub t_inf: f64,
    /// Reynolds number based on `reference_length`. Ignored for inviscid runs.
    #[serde(default)]
    pub reynolds: f64,
    #[serde(default = "default_reference_length")]
    pub reference_length: f64,
}

fn default_p_inf() -> f64 {
    101325.0
}
fn default_t_inf() -> f64 {
    288.15
}
fn default_reference_length() -> f64 {
    1.0
}

impl FreestreamConditions {
    /// Standard sea-level pressure and temperature.
    pub fn standard(mach: f64, angle_of_attack: f64) -> Self {
        FreestreamConditions {
            mach,
            angle_of_attack,
            p_inf: default_p_inf(),
            t_inf: default_t_inf(),
            reynolds: 0.0,
            reference_length: 1.0,
        }
    }

    pub fn with_reynolds(mut self, reynolds: f64, reference_length: f64) -> Self {
        self.reynolds = reynolds;
        self.reference_length = reference_length;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.p_inf > 0.0
            && self.t_inf > 0.0
            && self.mach >= 0.0
            && self.angle_of_attack.is_finite()
            && self.reference_length > 0.0
            && self.reynolds >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid free-stream conditions {self:?}")))
        }
    }

    pub fn density(&self, gas: &GasModel) -> f64 {
        self.p_inf / (gas.gas_constant * self.t_inf)
    }

    pub fn sound_speed(&self, gas: &GasModel) -> f64 {
        gas.sound_speed(self.t_inf)
    }

    pub fn speed(&self, gas: &GasModel) -> f64 {
        self.mach * self.sound_speed(gas)
    }

    /// Free-stream velocity `(u, v)`.
    pub fn velocity(&self, gas: &GasModel) -> [f64; 2] {
        let q = self.speed(gas);
        let alpha = self.angle_of_attack.to_radians();
        [q * alpha.cos(), q * alpha.sin()]
    }

    /// Free-stream primitive vector `(p', u, v, T)`; gauge pressure is zero.
    pub fn primitive(&self, gas: &GasModel) -> [f64; 4] {
        let [u, v] = self.velocity(gas);
        [0.0, u, v, self.t_inf]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_density_and_sound_speed() {
        let gas = GasModel::air();
        let fs = FreestreamConditions::standard(0.15, 0.0);
        let rho = fs.density(&gas);
        assert!((rho - 101325.0 / (287.05 * 288.15)).abs() < 1e-15);
        assert!((rho - 1.2250).abs() < 1e-4);
        let a = fs.sound_speed(&gas);
        assert!((a - (1.4f64 * 287.05 * 288.15).sqrt()).abs() < 1e-12);
        let [u, v] = fs.velocity(&gas);
        assert!((u - 51.04).abs() < 0.01, "u = {u}");
        assert_eq!(v, 0.0);
    }

    #[test]
    fn reynolds_sets_viscosity() {
        let fs = FreestreamConditions::standard(0.15, 0.0).with_reynolds(1.0e4, 1.0);
        let gas = GasModel::air_from_reynolds(&fs).unwrap();
        let mu = gas.viscosity.viscosity(fs.t_inf);
        let re = fs.density(&gas) * fs.speed(&gas) * 1.0 / mu;
        assert!((re - 1.0e4).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_gas() {
        let mut gas = GasModel::air();
        gas.gamma = 1.0;
        assert!(gas.validate().is_err());
        let mut gas = GasModel::air();
        gas.viscosity = ViscosityLaw::Constant { mu: -1.0 };
        assert!(gas.validate().is_err());
    }

    #[test]
    fn sutherland_at_reference() {
        let law = ViscosityLaw::Sutherland { mu_ref: 1.716e-5, t_ref: 273.15, s: 110.4 };
        assert!((law.viscosity(273.15) - 1.716e-5).abs() < 1e-20);
        assert!(law.viscosity(300.0) > 1.716e-5);
    }
}
