//! Thermal graviton bath: Planck occupation, hard mode cutoff and the mode
//! measure `d^3k / (2 (2 pi)^3 k)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::units::{PhysicalConstants, UnitSystem};

/// Exponent beyond which the occupation is returned as exactly zero.
const OCCUPATION_EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// Bath temperature, K.
    pub temperature: f64,
    /// Largest bath mode magnitude that contributes, 1/m.
    pub cutoff: f64,
}

impl BathSpec {
    pub fn new(temperature: f64, cutoff: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return domain(format!("temperature must be >= 0, got {temperature}"));
        }
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return domain(format!("cutoff must be positive, got {cutoff}"));
        }
        Ok(Self { temperature, cutoff })
    }

    pub fn vacuum(cutoff: f64) -> Result<Self> {
        Self::new(0.0, cutoff)
    }

    /// The same bath expressed in internal units of `units`.
    pub fn to_internal(&self, units: &UnitSystem) -> InternalBath {
        let c = &units.constants;
        InternalBath {
            theta: c.k_b * self.temperature / (c.hbar * c.c * units.k_star),
            cutoff: self.cutoff / units.k_star,
        }
    }
}

/// Mean graviton number per mode at angular frequency `omega` (1/s).
pub fn planck_occupation(omega: f64, spec: &BathSpec, constants: &PhysicalConstants) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return domain(format!("frequency must be positive, got {omega}"));
    }
    if spec.temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(occupation_from_exponent(
        constants.hbar * omega / (constants.k_b * spec.temperature),
    ))
}

fn occupation_from_exponent(x: f64) -> f64 {
    if x > OCCUPATION_EXPONENT_LIMIT {
        0.0
    } else {
        1.0 / x.exp_m1()
    }
}

/// Normalization of the bath mode measure, `1 / (2 (2 pi)^3)`.
pub fn measure_normalization() -> f64 {
    1.0 / (2.0 * (2.0 * PI).powi(3))
}

/// `1 / (2 (2 pi)^3 k)` for a mode of magnitude `k` below the cutoff.
pub fn mode_weight(k: f64, spec: &BathSpec) -> Result<f64> {
    if !(k > 0.0 && k <= spec.cutoff) {
        return domain(format!("bath mode magnitude {k} outside (0, {}]", spec.cutoff));
    }
    Ok(measure_normalization() / k)
}

/// Bath parameters in internal units: temperature as `k_B T / (hbar c k_star)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalBath {
    pub theta: f64,
    pub cutoff: f64,
}

impl InternalBath {
    pub fn vacuum(cutoff: f64) -> Self {
        Self { theta: 0.0, cutoff }
    }

    /// Occupation of a mode with internal magnitude `k` (frequency `k` when `c = 1`).
    pub fn occupation(&self, k: f64) -> f64 {
        if self.theta == 0.0 || k <= 0.0 {
            return 0.0;
        }
        occupation_from_exponent(k / self.theta)
    }

    pub fn admits(&self, k: f64) -> bool {
        k > 0.0 && k <= self.cutoff
    }
}
