//! Closed-form dissipation-rate bounds, measured rates and power-law fits.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::evolution::Trajectory;
use crate::photon::SpectralDensity;
use crate::units::{PhysicalConstants, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Photon,
    ScalarNonrelativistic,
    ScalarRelativistic,
    ScalarGeneral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BoundInputs {
    Photon { omega_star_per_s: f64 },
    Scalar { k_star_per_m: f64, mu_per_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    /// 1/s
    pub value: f64,
    pub regime: Regime,
    pub inputs: BoundInputs,
}

/// `t_P^2 omega_*^3`.
pub fn photon_rate_bound(omega_star: f64, constants: &PhysicalConstants) -> Result<RateBound> {
    if !(omega_star > 0.0 && omega_star.is_finite()) {
        return domain(format!("frequency must be positive, got {omega_star}"));
    }
    let tp = constants.planck_time();
    Ok(RateBound {
        value: tp * tp * omega_star.powi(3),
        regime: Regime::Photon,
        inputs: BoundInputs::Photon { omega_star_per_s: omega_star },
    })
}

/// `c^3 t_P^2 k_*^4 / sqrt(k_*^2 + mu^2)`; the regime label marks which
/// limit (`mu >> k_*` quartic, `mu << k_*` cubic) the inputs sit in.
pub fn scalar_rate_bound(k_star: f64, mu: f64, constants: &PhysicalConstants) -> Result<RateBound> {
    if !(k_star > 0.0 && k_star.is_finite()) {
        return domain(format!("k_star must be positive, got {k_star}"));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return domain(format!("mass wavenumber must be non-negative, got {mu}"));
    }
    let tp = constants.planck_time();
    let value = constants.c.powi(3) * tp * tp * k_star.powi(4) / k_star.hypot(mu);
    let regime = if mu >= 10.0 * k_star {
        Regime::ScalarNonrelativistic
    } else if mu <= 0.1 * k_star {
        Regime::ScalarRelativistic
    } else {
        Regime::ScalarGeneral
    };
    Ok(RateBound { value, regime, inputs: BoundInputs::Scalar { k_star_per_m: k_star, mu_per_m: mu } })
}

/// `-rho'/rho` at one node, sampled from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredRate {
    pub node: usize,
    /// Internal units.
    pub k: f64,
    /// Evaluation time `1 / k_star`, internal units.
    pub t: f64,
    pub rate_internal: f64,
    pub rate_per_s: f64,
    /// Largest rate over the recorded snapshots in `(0, 1 / k_star]`.
    pub interval_max_per_s: f64,
    pub interval_max_t: f64,
}

/// Initial dissipation rate at the node nearest `k_target` (1/m). The
/// derivative is re-evaluated with `rhs` on the recorded snapshots; the
/// trajectory must contain a snapshot at `t = 1 / k_star`, with `k_star` the
/// grid bound.
pub fn measured_initial_rate<F>(
    trajectory: &Trajectory<SpectralDensity>,
    k_target: f64,
    units: &UnitSystem,
    mut rhs: F,
) -> Result<MeasuredRate>
where
    F: FnMut(&SpectralDensity, f64) -> Result<Vec<f64>>,
{
    let first = trajectory.states.first().ok_or_else(|| Error::Structural("empty trajectory".into()))?;
    let horizon = 1.0 / first.k_star();
    let at = trajectory
        .times
        .iter()
        .position(|t| (t - horizon).abs() <= 1e-12 * horizon)
        .ok_or_else(|| Error::Domain(format!("trajectory has no snapshot at t = {horizon}")))?;
    let node = first.grid().nearest_magnitude(units.to_internal_wavenumber(k_target));

    let mut rate_at = |i: usize| -> Result<f64> {
        let s = &trajectory.states[i];
        let rho = s.values()[node];
        if !(rho.abs() >= 1e-300) {
            return Err(Error::UndefinedRate(format!("density {rho:e} at node {node} (t = {})", s.time)));
        }
        // +0.0 folds a signed zero from an exactly vanishing derivative
        Ok(-rhs(s, s.time)?[node] / rho + 0.0)
    };

    let rate = rate_at(at)?;
    let (mut best, mut best_t) = (rate, horizon);
    for i in 0..at {
        if trajectory.times[i] > 0.0 {
            let r = rate_at(i)?;
            if r > best {
                best = r;
                best_t = trajectory.times[i];
            }
        }
    }
    Ok(MeasuredRate {
        node,
        k: first.grid().nodes()[node].k,
        t: horizon,
        rate_internal: rate,
        rate_per_s: units.to_physical_rate(rate),
        interval_max_per_s: units.to_physical_rate(best),
        interval_max_t: best_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// `ln` of the prefactor.
    pub intercept: f64,
    /// Euclidean norm of the log-space residuals.
    pub residual_norm: f64,
}

/// Least-squares slope of `ln rate` against `ln x`.
pub fn fit_scaling_exponent(samples: &[(f64, f64)]) -> Result<ScalingFit> {
    if samples.len() < 3 {
        return domain(format!("need at least 3 samples, got {}", samples.len()));
    }
    if let Some((x, r)) = samples.iter().find(|(x, r)| !(*x > 0.0 && *r > 0.0 && x.is_finite() && r.is_finite())) {
        return domain(format!("non-positive sample ({x}, {r})"));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|(x, r)| (x.ln(), r.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return domain("all samples share one abscissa");
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual_norm = pts.iter().map(|p| (p.1 - intercept - exponent * p.0).powi(2)).sum::<f64>().sqrt();
    Ok(ScalingFit { exponent, intercept, residual_norm })
}
