use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{RunConfig, SpectrumKind};
use super::{num, CliError, CliResult, Output};
use crate::bath::BathSpec;
use crate::engine::{dissipator_parts, dissipator_rhs, CMatrix};
use crate::error::Result;
use crate::estimators::{
    fit_scaling_exponent, measured_initial_rate, photon_rate_bound, scalar_rate_bound, MeasuredRate, RateBound,
    ScalingFit,
};
use crate::evolution::{evolve, EvolveError, TimedMatrix, Trajectory};
use crate::exec::Execution;
use crate::grid::{build_grid, GridNode, MomentumGrid};
use crate::photon::{
    diagonal_density_rate, flat_spectrum, narrow_band_spectrum, photon_density_matrix, photon_mode_channels,
    prpg_rhs, ShellKernel, SpectralDensity,
};
use crate::tensor::{dyad, ee_contraction, TtBasis};
use crate::units::{PhysicalConstants, UnitSystem};

const TENSOR_TOLERANCE: f64 = 1e-12;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const MATRIX_TOLERANCE: f64 = 1e-10;
/// Fence for measured rate over bound: `[1e-3, 10]`.
const BOUND_FENCE: (f64, f64) = (1e-3, 10.0);

fn units_for(cfg: &RunConfig) -> Result<UnitSystem> {
    let u = UnitSystem::new(PhysicalConstants::SI, cfg.k_star_per_m)?;
    match cfg.coupling_override {
        Some(g) => u.with_coupling(g),
        None => Ok(u),
    }
}

/// Constants for the closed-form bounds. With an overridden coupling the
/// Newton constant is the one that coupling implies at `k_star`, so measured
/// rates and bounds stay comparable.
fn bound_constants(cfg: &RunConfig, units: &UnitSystem) -> PhysicalConstants {
    let c = units.constants;
    match cfg.coupling_override {
        Some(g) => PhysicalConstants {
            g_newton: g * c.c.powi(3) / (8.0 * std::f64::consts::PI * c.hbar * units.k_star.powi(2)),
            ..c
        },
        None => c,
    }
}

fn coupling_note(units: &UnitSystem) -> String {
    format!("dimensionless coupling g = {}", num(units.coupling))
}

// ---------------------------------------------------------------- check-tensors

#[derive(Debug, Serialize)]
struct InvariantReport {
    name: &'static str,
    max_violation: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct TensorSummary {
    n_vectors: usize,
    tolerance: f64,
    faulty_dyad_injected: bool,
    invariants: Vec<InvariantReport>,
    failed: Vec<&'static str>,
    all_passed: bool,
}

const INVARIANTS: [&str; 11] = [
    "projector_transversality",
    "projector_tracelessness",
    "projector_idempotence",
    "projector_symmetry",
    "polarization_completeness",
    "polarization_normalization",
    "polarization_transversality",
    "dyad_orthonormality",
    "ee_exchange_symmetry",
    "ee_nonnegative",
    "ee_collinear_null",
];

fn random_wave_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.05 {
            return v;
        }
    }
}

fn basis_for(k: Vector3<f64>, faulty: bool) -> Result<TtBasis> {
    let (e1, mut e2) = dyad(&k)?;
    if faulty {
        // tilt e2 towards e1: still unit and transverse, no longer orthogonal
        e2 = (e2 + 1e-3 * e1).normalize();
    }
    TtBasis::from_dyad(k, e1, e2)
}

fn basis_violations(b: &TtBasis) -> [f64; 8] {
    let n = b.k.normalize();
    let p4 = &b.p4;
    let mut v = [0.0f64; 8];
    for j in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let s: f64 = (0..3).map(|i| n[i] * p4.get(i, j, k, l)).sum();
                v[0] = v[0].max(s.abs());
            }
        }
    }
    for k in 0..3 {
        for l in 0..3 {
            let s: f64 = (0..3).map(|i| p4.get(i, i, k, l)).sum();
            v[1] = v[1].max(s.abs());
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut sq = 0.0;
                    for m in 0..3 {
                        for q in 0..3 {
                            sq += p4.get(i, j, m, q) * p4.get(m, q, k, l);
                        }
                    }
                    let x = p4.get(i, j, k, l);
                    v[2] = v[2].max((sq - x).abs());
                    v[3] = v[3].max((x - p4.get(j, i, k, l)).abs()).max((x - p4.get(k, l, i, j)).abs());
                    let c: f64 = b.e_tens.iter().map(|e| e[(i, j)] * e[(k, l)]).sum();
                    v[4] = v[4].max((c - 2.0 * x).abs());
                }
            }
        }
    }
    for a in 0..2 {
        for c in 0..2 {
            let dot = b.e_tens[a].component_mul(&b.e_tens[c]).sum();
            let want = if a == c { 2.0 } else { 0.0 };
            v[5] = v[5].max((dot - want).abs());
            let d = b.e_vec[a].dot(&b.e_vec[c]) - if a == c { 1.0 } else { 0.0 };
            v[7] = v[7].max(d.abs());
        }
        v[6] = v[6].max((b.e_tens[a] * n).norm()).max(b.e_tens[a].trace().abs());
        v[7] = v[7].max(b.e_vec[a].dot(&n).abs());
    }
    v
}

pub fn check_tensors(cfg: &RunConfig, out: &Output) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = [0.0f64; INVARIANTS.len()];
    for _ in 0..cfg.seed_count {
        let k = random_wave_vector(&mut rng);
        let kp = random_wave_vector(&mut rng);
        let b = basis_for(k, cfg.inject_faulty_dyad)?;
        let bp = basis_for(kp, cfg.inject_faulty_dyad)?;
        let bc = basis_for(2.3 * k, cfg.inject_faulty_dyad)?;
        let v = basis_violations(&b);
        for (w, x) in worst.iter_mut().zip(v) {
            *w = w.max(x);
        }
        let ab = ee_contraction(&b, &bp)?;
        let ba = ee_contraction(&bp, &b)?;
        worst[8] = worst[8].max((ab - ba).abs() / ab.abs().max(1.0));
        if ab < 0.0 {
            worst[9] = worst[9].max(-ab);
        }
        worst[10] = worst[10].max(ee_contraction(&b, &bc)?.abs());
    }
    let invariants: Vec<InvariantReport> = INVARIANTS
        .iter()
        .zip(worst)
        .map(|(name, m)| InvariantReport { name, max_violation: m, passed: m < TENSOR_TOLERANCE })
        .collect();
    let failed: Vec<&'static str> = invariants.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let rows: Vec<Vec<String>> = invariants
        .iter()
        .map(|r| vec![r.name.to_string(), num(r.max_violation), num(TENSOR_TOLERANCE), r.passed.to_string()])
        .collect();
    out.table(
        "check_tensors.csv",
        &[format!("{} random wave vectors, seed {}", cfg.seed_count, cfg.seed)],
        &["invariant", "max_violation", "tolerance", "passed"],
        &rows,
    )?;
    let summary = TensorSummary {
        n_vectors: cfg.seed_count,
        tolerance: TENSOR_TOLERANCE,
        faulty_dyad_injected: cfg.inject_faulty_dyad,
        all_passed: failed.is_empty(),
        failed: failed.clone(),
        invariants,
    };
    out.summary("check_tensors.json", &summary)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("tensor invariants violated: {}", failed.join(", "))))
    }
}

// ---------------------------------------------------------------- evolve-photon

fn initial_spectrum(cfg: &RunConfig, kind: SpectrumKind, grid: Arc<MomentumGrid>, k_star: f64) -> Result<SpectralDensity> {
    match kind {
        SpectrumKind::Flat => flat_spectrum(grid),
        SpectrumKind::NarrowBand => narrow_band_spectrum(
            grid,
            cfg.spectrum.center_per_k_star * k_star,
            cfg.spectrum.width_per_k_star * k_star,
        ),
    }
}

struct PhotonRun {
    trajectory: Trajectory<SpectralDensity>,
    rate: MeasuredRate,
    diverged: Option<String>,
}

/// Evolves one isotropic spectrum on a grid bounded by `k_star` (internal)
/// and measures the rate at the band center.
fn photon_run(cfg: &RunConfig, kind: SpectrumKind, units: &UnitSystem, k_star: f64) -> CliResult<(PhotonRun, ShellKernel)> {
    let g = &cfg.grid;
    let grid = Arc::new(build_grid(g.n_k, g.n_mu, g.n_phi, k_star)?);
    let kernel = ShellKernel::new(&grid, units)?;
    let initial = initial_spectrum(cfg, kind, grid, k_star)?;
    let t_end = cfg.t_end_per_c_k_star / k_star;
    let rhs = |s: &SpectralDensity, t: f64| kernel.rhs(s, t);
    let (trajectory, diverged) = match evolve(initial, t_end, cfg.n_steps, cfg.conservation_ceiling, rhs) {
        Ok(t) => (t, None),
        Err(EvolveError::Diverged { partial, time, error, ceiling }) => {
            let msg = format!("conservation error {error:e} above {ceiling:e} at t = {time}");
            (*partial, Some(msg))
        }
        Err(EvolveError::Failed(e)) => return Err(e.into()),
    };
    let k_target = units.to_physical_wavenumber(cfg.spectrum.center_per_k_star * k_star);
    let rate = if diverged.is_none() {
        measured_initial_rate(&trajectory, k_target, units, |s, t| kernel.rhs(s, t))?
    } else {
        MeasuredRate {
            node: 0,
            k: f64::NAN,
            t: f64::NAN,
            rate_internal: f64::NAN,
            rate_per_s: f64::NAN,
            interval_max_per_s: f64::NAN,
            interval_max_t: f64::NAN,
        }
    };
    Ok((PhotonRun { trajectory, rate, diverged }, kernel))
}

fn trajectory_rows(traj: &Trajectory<SpectralDensity>, kernel: &ShellKernel) -> Vec<Vec<String>> {
    let layout = kernel.layout();
    let m = layout.shell_size();
    let mut rows = Vec::new();
    for (i, s) in traj.states.iter().enumerate() {
        let clipped = s.clipped_values();
        for a in 0..layout.n_k {
            let node = a * m;
            rows.push(vec![
                num(traj.times[i]),
                num(s.grid().nodes()[node].k),
                num(clipped[node]),
                num(traj.conservation_error[i]),
            ]);
        }
    }
    rows
}

#[derive(Debug, Serialize)]
struct FlatCheck {
    reference_rate_per_s: f64,
    ratio: f64,
    ratio_interval_max: f64,
    threshold: f64,
    rate_negligible: bool,
}

#[derive(Debug, Serialize)]
struct EvolveSummary {
    spectrum: SpectrumKind,
    coupling: f64,
    n_nodes: usize,
    n_steps: usize,
    max_conservation_error: f64,
    min_rho_raw: f64,
    diverged: Option<String>,
    measured: MeasuredRate,
    bound: RateBound,
    ratio_to_bound: f64,
    within_order_unity: bool,
    flat: Option<FlatCheck>,
}

pub fn evolve_photon(cfg: &RunConfig, out: &Output) -> CliResult<()> {
    let units = units_for(cfg)?;
    let kind = cfg.spectrum.kind;
    let (run, kernel) = photon_run(cfg, kind, &units, 1.0)?;
    let notes = [
        "t in 1/(c k_star), k in k_star, rho in k_star^-3 (negative values clipped to 0)".to_string(),
        coupling_note(&units),
    ];
    out.table(
        "trajectory.csv",
        &notes,
        &["t", "k", "rho", "conservation_error"],
        &trajectory_rows(&run.trajectory, &kernel),
    )?;

    let bound = photon_rate_bound(units.omega_star() * cfg.spectrum.center_per_k_star, &bound_constants(cfg, &units))?;
    let ratio = run.rate.rate_per_s / bound.value;
    let within = (BOUND_FENCE.0..=BOUND_FENCE.1).contains(&ratio);
    let flat = if kind == SpectrumKind::Flat && run.diverged.is_none() {
        let (reference, _) = photon_run(cfg, SpectrumKind::NarrowBand, &units, 1.0)?;
        let r = reference.rate.rate_per_s;
        let ratio = (run.rate.rate_per_s / r).abs();
        Some(FlatCheck {
            reference_rate_per_s: r,
            ratio,
            ratio_interval_max: (run.rate.interval_max_per_s / reference.rate.interval_max_per_s).abs(),
            threshold: cfg.flat_threshold,
            rate_negligible: ratio < cfg.flat_threshold,
        })
    } else {
        None
    };
    let min_rho_raw = run
        .trajectory
        .states
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .fold(f64::INFINITY, f64::min);
    let summary = EvolveSummary {
        spectrum: kind,
        coupling: units.coupling,
        n_nodes: kernel.layout().n_k * kernel.layout().shell_size(),
        n_steps: cfg.n_steps,
        max_conservation_error: run.trajectory.max_conservation_error(),
        min_rho_raw,
        diverged: run.diverged.clone(),
        measured: run.rate,
        bound,
        ratio_to_bound: ratio,
        within_order_unity: within,
        flat,
    };
    out.summary("evolve_photon.json", &summary)?;

    if let Some(msg) = run.diverged {
        return Err(CliError::Diverged(msg));
    }
    match (&summary.flat, kind) {
        (Some(f), _) if !f.rate_negligible => Err(CliError::Check(format!(
            "flat-spectrum rate is {:e} of the narrow-band rate (threshold {:e})",
            f.ratio, f.threshold
        ))),
        (_, SpectrumKind::NarrowBand) if !within => {
            Err(CliError::Check(format!("rate/bound ratio {ratio:e} outside [1e-3, 10]")))
        }
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- scan-rates

#[derive(Debug, Serialize)]
struct ScalarScan {
    mu_per_m: f64,
    fit: ScalingFit,
    expected_exponent: Option<f64>,
    tolerance: Option<f64>,
    passed: Option<bool>,
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    k_star_per_m: Vec<f64>,
    photon_rates_per_s: Vec<f64>,
    photon_bounds_per_s: Vec<f64>,
    photon_fit: ScalingFit,
    photon_exponent_passed: bool,
    photon_fence_passed: bool,
    scalar: Vec<ScalarScan>,
    massless_identity_max_rel_error: f64,
}

pub fn scan_rates(cfg: &RunConfig, out: &Output) -> CliResult<()> {
    // one unit system for the whole scan: k_star varies in physical units
    let units = units_for(cfg)?;
    let constants = bound_constants(cfg, &units);
    let c = &constants;
    let center = cfg.spectrum.center_per_k_star;
    let mut photon_rows = Vec::new();
    let (mut ks, mut rates, mut bounds) = (vec![], vec![], vec![]);
    for &f in &cfg.scan.k_star_factors {
        let (run, _) = photon_run(cfg, SpectrumKind::NarrowBand, &units, f)?;
        if let Some(msg) = run.diverged {
            return Err(CliError::Diverged(format!("scan point k_star factor {f}: {msg}")));
        }
        let k = cfg.k_star_per_m * f;
        let b = photon_rate_bound(c.c * k * center, c)?.value;
        photon_rows.push(vec![num(k), num(run.rate.rate_per_s), num(b), num(run.rate.rate_per_s / b)]);
        ks.push(k);
        rates.push(run.rate.rate_per_s);
        bounds.push(b);
    }
    out.table(
        "photon_scan.csv",
        &[coupling_note(&units), "narrow-band spectrum scaled with k_star; rates at t = 1/(c k_star)".into()],
        &["k_star_per_m", "measured_rate_per_s", "bound_per_s", "ratio"],
        &photon_rows,
    )?;
    let samples: Vec<(f64, f64)> = cfg.scan.k_star_factors.iter().copied().zip(rates.iter().copied()).collect();
    let photon_fit = fit_scaling_exponent(&samples).map_err(|e| CliError::Check(format!("photon fit: {e}")))?;
    let photon_exponent_passed = (photon_fit.exponent - 3.0).abs() <= 0.1;
    let photon_fence_passed = rates
        .iter()
        .zip(&bounds)
        .all(|(r, b)| (BOUND_FENCE.0..=BOUND_FENCE.1).contains(&(r / b)));

    let mut scalar_rows = Vec::new();
    let mut scalar = Vec::new();
    let mut identity: f64 = 0.0;
    for &m in &cfg.scan.mu_per_k_star {
        let mu = m * cfg.k_star_per_m;
        let mut pts = Vec::new();
        for (&f, &k) in cfg.scan.k_star_factors.iter().zip(&ks) {
            let b = scalar_rate_bound(k, mu, c)?;
            if m == 0.0 {
                let p = photon_rate_bound(c.c * k, c)?.value;
                identity = identity.max((b.value / p - 1.0).abs());
            }
            scalar_rows.push(vec![num(mu), num(k), num(b.value)]);
            pts.push((f, b.value));
        }
        let fit = fit_scaling_exponent(&pts).map_err(|e| CliError::Check(format!("scalar fit: {e}")))?;
        let (expected, tol) = if m == 0.0 {
            (Some(3.0), Some(1e-6))
        } else if m >= 100.0 {
            (Some(4.0), Some(1e-2))
        } else {
            (None, None)
        };
        let passed = expected.zip(tol).map(|(e, t)| (fit.exponent - e).abs() <= t);
        scalar.push(ScalarScan { mu_per_m: mu, fit, expected_exponent: expected, tolerance: tol, passed });
    }
    out.table(
        "scalar_scan.csv",
        &["analytic scalar bound c^3 t_P^2 k^4 / sqrt(k^2 + mu^2) at fixed mu".into()],
        &["mu_per_m", "k_star_per_m", "bound_per_s"],
        &scalar_rows,
    )?;
    let summary = ScanSummary {
        k_star_per_m: ks,
        photon_rates_per_s: rates,
        photon_bounds_per_s: bounds,
        photon_fit,
        photon_exponent_passed,
        photon_fence_passed,
        scalar,
        massless_identity_max_rel_error: identity,
    };
    out.summary("scan_rates.json", &summary)?;

    let mut failures = Vec::new();
    if !photon_exponent_passed {
        failures.push(format!("photon exponent {} not within 3 +- 0.1", summary.photon_fit.exponent));
    }
    if !photon_fence_passed {
        failures.push("photon rate outside [bound/1e3, 10 bound]".to_string());
    }
    for s in &summary.scalar {
        if s.passed == Some(false) {
            failures.push(format!("scalar exponent {} at mu = {:e}/m", s.fit.exponent, s.mu_per_m));
        }
    }
    if identity > 1e-12 {
        failures.push(format!("massless scalar bound differs from photon bound by {identity:e}"));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}

// ---------------------------------------------------------------- engine-demo

#[derive(Debug, Serialize)]
struct ThermalCheck {
    theta: f64,
    vacuum_norm: f64,
    thermal_part_norm: f64,
    total_norm: f64,
    strictly_larger: bool,
}

#[derive(Debug, Serialize)]
struct EngineSummary {
    coupling: f64,
    dimension: usize,
    n_channels: usize,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    min_eigenvalue: f64,
    max_kernel_residual: f64,
    residual_tolerance: f64,
    thermal: Option<ThermalCheck>,
    diverged: Option<String>,
}

fn toy_grid(cfg: &RunConfig) -> Result<Arc<MomentumGrid>> {
    let nodes = cfg
        .toy
        .k_per_k_star
        .iter()
        .map(|v| GridNode::from_vector(&Vector3::from(*v)))
        .collect::<Result<Vec<_>>>()?;
    let k_max = nodes.iter().map(|n| n.k).fold(0.0, f64::max);
    let n = nodes.len();
    Ok(Arc::new(MomentumGrid::from_nodes(nodes, vec![1.0; n], k_max)?))
}

fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest relative difference, falling back to absolute where the kernel vanishes.
fn relative_residual(engine: &[f64], kernel: &[f64]) -> f64 {
    engine
        .iter()
        .zip(kernel)
        .map(|(e, k)| if *k == 0.0 { (e - k).abs() } else { ((e - k) / k).abs() })
        .fold(0.0, f64::max)
}

pub fn engine_demo(cfg: &RunConfig, out: &Output) -> CliResult<()> {
    let units = units_for(cfg)?;
    let grid = toy_grid(cfg)?;
    let density = SpectralDensity::new(grid.clone(), cfg.toy.populations.clone(), 0.0)?;
    let channels = photon_mode_channels(&grid)?;
    let cutoff = cfg.cutoff_per_k_star * cfg.k_star_per_m;
    if let Some(ch) = channels.iter().find(|ch| ch.k.norm() > cfg.cutoff_per_k_star) {
        return Err(CliError::Config(format!(
            "toy momentum transfer {} k_star exceeds the cutoff {}",
            ch.k.norm(),
            cfg.cutoff_per_k_star
        )));
    }
    let vacuum = BathSpec::vacuum(cutoff)?.to_internal(&units);
    let bath = BathSpec::new(cfg.temperature_k, cutoff)?.to_internal(&units);
    let rho0 = photon_density_matrix(&density)?;

    // engine diagonal against the kernel at sampled times in (0, 1/k_star]
    let n = cfg.toy.n_samples;
    let mut residual_rows = Vec::new();
    let mut max_residual: f64 = 0.0;
    for s in 1..=n {
        let t = s as f64 / n as f64;
        let eng = dissipator_rhs(&rho0, t, &channels, &vacuum, units.coupling, None)?;
        let eng = diagonal_density_rate(&eng, &grid);
        let ker = prpg_rhs(&density, t, &units)?;
        for (a, (e, k)) in eng.iter().zip(&ker).enumerate() {
            let r = relative_residual(&[*e], &[*k]);
            residual_rows.push(vec![num(t), a.to_string(), num(*e), num(*k), num(r)]);
        }
        max_residual = max_residual.max(relative_residual(&eng, &ker));
    }
    out.table(
        "kernel_residual.csv",
        &["t in 1/(c k_star); rates in c k_star, internal units".into(), coupling_note(&units)],
        &["t", "node", "engine_rate", "kernel_rate", "relative_residual"],
        &residual_rows,
    )?;

    let thermal = if cfg.temperature_k > 0.0 && units.coupling > 0.0 {
        let hot = dissipator_parts(&rho0, 1.0, &channels, &bath, units.coupling, None, Execution::default())?;
        let cold = dissipator_parts(&rho0, 1.0, &channels, &vacuum, units.coupling, None, Execution::default())?;
        let (v, tot) = (frobenius(&cold.total()), frobenius(&hot.total()));
        Some(ThermalCheck {
            theta: bath.theta,
            vacuum_norm: v,
            thermal_part_norm: frobenius(&hot.thermal),
            total_norm: tot,
            strictly_larger: tot > v,
        })
    } else {
        None
    };

    let start = TimedMatrix { state: rho0, time: 0.0 };
    let rhs = |s: &TimedMatrix, t: f64| dissipator_rhs(&s.state, t, &channels, &bath, units.coupling, None);
    let (traj, diverged) = match evolve(start, cfg.t_end_per_c_k_star, cfg.n_steps, cfg.conservation_ceiling, rhs) {
        Ok(t) => (t, None),
        Err(EvolveError::Diverged { partial, time, error, ceiling }) => {
            (*partial, Some(format!("trace error {error:e} above {ceiling:e} at t = {time}")))
        }
        Err(EvolveError::Failed(e)) => return Err(e.into()),
    };
    let herm: Vec<f64> = traj.states.iter().map(|s| s.state.hermiticity_error()).collect();
    let rows: Vec<Vec<String>> = (0..traj.times.len())
        .map(|i| {
            vec![num(traj.times[i]), num(traj.conservation_error[i]), num(herm[i]), num(traj.min_eigenvalue[i])]
        })
        .collect();
    out.table(
        "engine_demo.csv",
        &["t in 1/(c k_star)".into(), coupling_note(&units), format!("temperature_K = {}", cfg.temperature_k)],
        &["t", "trace_error", "hermiticity_error", "min_eigenvalue"],
        &rows,
    )?;

    let summary = EngineSummary {
        coupling: units.coupling,
        dimension: 2 * grid.len(),
        n_channels: channels.len(),
        max_trace_error: traj.max_conservation_error(),
        max_hermiticity_error: herm.iter().copied().fold(0.0, f64::max),
        min_eigenvalue: traj.min_eigenvalue.iter().copied().fold(f64::INFINITY, f64::min),
        max_kernel_residual: max_residual,
        residual_tolerance: RESIDUAL_TOLERANCE,
        thermal,
        diverged: diverged.clone(),
    };
    out.summary("engine_demo.json", &summary)?;

    if let Some(msg) = diverged {
        return Err(CliError::Diverged(msg));
    }
    let mut failures = Vec::new();
    if !(max_residual <= RESIDUAL_TOLERANCE) {
        failures.push(format!("engine/kernel residual {max_residual:e}"));
    }
    if summary.max_trace_error > MATRIX_TOLERANCE {
        failures.push(format!("trace error {:e}", summary.max_trace_error));
    }
    if summary.max_hermiticity_error > MATRIX_TOLERANCE {
        failures.push(format!("hermiticity error {:e}", summary.max_hermiticity_error));
    }
    if let Some(t) = &summary.thermal {
        if !t.strictly_larger {
            let why = if t.thermal_part_norm == 0.0 { " (occupation vanishes at this temperature)" } else { "" };
            failures.push(format!("thermal term does not increase the dissipator norm{why}"));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}
