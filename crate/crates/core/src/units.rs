//! Physical constants and the dimensionless internal unit system.
//!
//! Internally every computation runs with `hbar = c = 1` and the reference
//! momentum `k_star = 1`. Wave numbers are measured in units of `k_star`,
//! times in units of `1 / (c k_star)` and rates in units of `c k_star`. All
//! Planck-scale smallness is carried by the single coupling
//! `g = 8 pi G hbar k_star^2 / c^3`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// SI values of the constants entering the master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Gravitational constant, m^3 kg^-1 s^-2.
    pub g_newton: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
}

impl PhysicalConstants {
    /// CODATA 2018.
    pub const SI: PhysicalConstants = PhysicalConstants {
        g_newton: 6.674_30e-11,
        hbar: 1.054_571_817e-34,
        c: 299_792_458.0,
        k_b: 1.380_649e-23,
    };

    /// `G = hbar = c = k_B = 1`.
    pub const NATURAL: PhysicalConstants = PhysicalConstants {
        g_newton: 1.0,
        hbar: 1.0,
        c: 1.0,
        k_b: 1.0,
    };

    pub fn new(g_newton: f64, hbar: f64, c: f64, k_b: f64) -> Result<Self> {
        let all = [g_newton, hbar, c, k_b];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return domain(format!("physical constants must be finite and positive, got {all:?}"));
        }
        Ok(Self { g_newton, hbar, c, k_b })
    }

    /// Planck time `sqrt(G hbar / c^5)` in seconds.
    pub fn planck_time(&self) -> f64 {
        (self.g_newton * self.hbar / self.c.powi(5)).sqrt()
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// `8 pi G hbar k_star^2 / c^3`, the dimensionless bath coupling.
pub fn dimensionless_coupling(constants: &PhysicalConstants, k_star: f64) -> Result<f64> {
    if !(k_star.is_finite() && k_star > 0.0) {
        return domain(format!("reference momentum must be positive, got {k_star}"));
    }
    Ok(8.0 * PI * constants.g_newton * constants.hbar * k_star * k_star / constants.c.powi(3))
}

/// Reference scale of the internal units together with the resulting coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Reference momentum magnitude, 1/m.
    pub k_star: f64,
    /// Dimensionless coupling used by the dissipators.
    pub coupling: f64,
    pub constants: PhysicalConstants,
}

impl UnitSystem {
    pub fn new(constants: PhysicalConstants, k_star: f64) -> Result<Self> {
        let coupling = dimensionless_coupling(&constants, k_star)?;
        Ok(Self { k_star, coupling, constants })
    }

    /// Same reference scale with the coupling replaced. Used for runs where
    /// the physical coupling is too weak to move the state visibly.
    pub fn with_coupling(mut self, coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return domain(format!("coupling must be finite and non-negative, got {coupling}"));
        }
        self.coupling = coupling;
        Ok(self)
    }

    /// Reference angular frequency `c k_star`, 1/s.
    pub fn omega_star(&self) -> f64 {
        self.constants.c * self.k_star
    }

    pub fn to_physical_rate(&self, rate: f64) -> f64 {
        rate * self.omega_star()
    }

    pub fn to_internal_rate(&self, rate_per_s: f64) -> f64 {
        rate_per_s / self.omega_star()
    }

    pub fn to_physical_time(&self, t: f64) -> f64 {
        t / self.omega_star()
    }

    pub fn to_internal_time(&self, t_s: f64) -> f64 {
        t_s * self.omega_star()
    }

    pub fn to_physical_wavenumber(&self, k: f64) -> f64 {
        k * self.k_star
    }

    pub fn to_internal_wavenumber(&self, k_per_m: f64) -> f64 {
        k_per_m / self.k_star
    }
}

/// Converts an internal rate to 1/s.
pub fn to_physical_rate(rate: f64, units: &UnitSystem) -> f64 {
    units.to_physical_rate(rate)
}
