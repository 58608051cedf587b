//! One-photon worked example: TT Maxwell stress matrix elements, the diagonal
//! kernel for incoherently polarized light, and initial spectra.
//!
//! With `rho(k)` the momentum density (`int d^3k rho = 1`) the diagonal part of
//! the master equation reads
//!
//! ```text
//! d rho(k)/dt = - sum_{k'} w(k') G(k, k') [ s(chi, t) rho(k) - s(chi', t) rho(k') ]
//! G(k, k')    = g k k' / (2 (2 pi)^3 |k' - k|) * sum_ls P_ijkl(k' - k) E^ls_ij E^ls_kl
//! chi  = |k' - k| + k' - k,   chi' = |k' - k| - k' + k,   s(x, t) = sin(x t) / x
//! ```
//!
//! `k`, `k'` share one node set and the coincident node is skipped, so the
//! flux between two nodes is antisymmetric and total probability is
//! conserved exactly by the semi-discrete equation.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::bath::measure_normalization;
use crate::engine::{BohrComponent, BohrOperator, CMatrix, DensityMatrix, ModeChannel, SYMMETRIC_PAIRS};
use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::grid::{MomentumGrid, ProductLayout};
use crate::tensor::{dyad, ee_from_dyads, photon_e_tensor, polarization_basis, transverse_projector, tt_projector};
use crate::units::UnitSystem;

/// Diagonal photon density on a momentum grid bounded by `k_star = grid.k_max()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    grid: Arc<MomentumGrid>,
    values: Vec<f64>,
    pub time: f64,
}

impl SpectralDensity {
    /// Validated construction: non-negative values with unit total probability.
    pub fn new(grid: Arc<MomentumGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structural(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return domain("spectral density values must be finite and non-negative");
        }
        let d = Self { grid, values, time };
        let p = d.total_probability();
        if (p - 1.0).abs() > 1e-10 {
            return domain(format!("spectral density integrates to {p}, expected 1"));
        }
        Ok(d)
    }

    /// State produced by time stepping; no invariants are enforced.
    pub fn from_evolved(grid: Arc<MomentumGrid>, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn k_star(&self) -> f64 {
        self.grid.k_max()
    }

    pub fn total_probability(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// Values clipped at zero, for reporting only.
    pub fn clipped_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(0.0)).collect()
    }

    /// One value per radial shell, if the grid is a product grid and the
    /// density is exactly constant on every shell.
    pub fn shell_values(&self) -> Option<Vec<f64>> {
        let layout = self.grid.layout()?;
        let m = layout.shell_size();
        let mut out = Vec::with_capacity(layout.n_k);
        for chunk in self.values.chunks(m) {
            if chunk.iter().any(|v| *v != chunk[0]) {
                return None;
            }
            out.push(chunk[0]);
        }
        Some(out)
    }
}

/// One evaluation of the kernel between `k` and `k'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSample {
    pub k: Vector3<f64>,
    pub k_prime: Vector3<f64>,
    pub chi: f64,
    pub chi_prime: f64,
    /// Measure, projector and E-contraction factor, including the coupling.
    pub geometric: f64,
    pub t: f64,
}

/// `sin(x t) / x`, equal to `t` at `x = 0`.
#[inline]
pub fn sinc_t(x: f64, t: f64) -> f64 {
    let y = x * t;
    if y.abs() < 1e-4 {
        let y2 = y * y;
        t * (1.0 - y2 / 6.0 + y2 * y2 / 120.0)
    } else {
        y.sin() / x
    }
}

/// `<k1, lam| tau_ij(k_diff, t) |k2, sig>` with the momentum delta resolved:
/// `-P_ijkl(k_diff) sqrt(k1 k2) E^{lam sig}_kl(k1, k2) exp(i (k1 - k2) t)`.
pub fn tau_photon_element(
    k1: &Vector3<f64>,
    lam: usize,
    k2: &Vector3<f64>,
    sig: usize,
    k_diff: &Vector3<f64>,
    t: f64,
) -> Result<Matrix3<Complex64>> {
    let scale = k1.norm().max(k2.norm()).max(1.0);
    if (k2 - k1 - k_diff).norm() > 1e-12 * scale {
        return Err(Error::Structural(format!(
            "momentum constraint k2 = k1 + k_diff violated by {:e}",
            (k2 - k1 - k_diff).norm()
        )));
    }
    let b1 = polarization_basis(k1)?;
    let b2 = polarization_basis(k2)?;
    let e = photon_e_tensor(&b1, lam, &b2, sig)?;
    let p4 = tt_projector(k_diff)?;
    let (m1, m2) = (k1.norm(), k2.norm());
    let amp = -(m1 * m2).sqrt();
    let phase = Complex64::from_polar(1.0, (m1 - m2) * t);
    Ok(p4.apply(&e).map(|v| phase * (amp * v)))
}

fn chis(k: &Vector3<f64>, kp: &Vector3<f64>) -> (f64, f64, f64) {
    let d = (kp - k).norm();
    let (m, mp) = (k.norm(), kp.norm());
    // clamp the triangle-inequality roundoff
    ((d + mp - m).max(0.0), (d - mp + m).max(0.0), d)
}

fn geometric_factor(
    k: &Vector3<f64>,
    kp: &Vector3<f64>,
    dk: &[Vector3<f64>; 2],
    dkp: &[Vector3<f64>; 2],
    coupling: f64,
) -> Result<(f64, f64, f64)> {
    let (chi, chi_p, dist) = chis(k, kp);
    if dist == 0.0 {
        return Err(Error::DegenerateDirection("coincident kernel momenta".into()));
    }
    let p = transverse_projector(&(kp - k))?;
    let ee = ee_from_dyads(dk, dkp, &p).max(0.0);
    let g = coupling * k.norm() * kp.norm() * measure_normalization() / dist * ee;
    Ok((g, chi, chi_p))
}

/// Kernel sample between two momenta. The restriction to `|k'| <= k_star` is
/// carried by the grid the kernel is summed over.
pub fn prpg_kernel(k: &Vector3<f64>, k_prime: &Vector3<f64>, t: f64, units: &UnitSystem) -> Result<KernelSample> {
    let (a1, a2) = dyad(k)?;
    let (b1, b2) = dyad(k_prime)?;
    let (geometric, chi, chi_prime) = geometric_factor(k, k_prime, &[a1, a2], &[b1, b2], units.coupling)?;
    Ok(KernelSample { k: *k, k_prime: *k_prime, chi, chi_prime, geometric, t })
}

fn grid_dyads(grid: &MomentumGrid) -> Result<Vec<[Vector3<f64>; 2]>> {
    grid.vectors().iter().map(|v| dyad(v).map(|(a, b)| [a, b])).collect()
}

fn rhs_at_node(
    i: usize,
    grid: &MomentumGrid,
    dyads: &[[Vector3<f64>; 2]],
    values: &[f64],
    t: f64,
    coupling: f64,
) -> Result<f64> {
    let vs = grid.vectors();
    let mut acc = 0.0;
    for j in 0..grid.len() {
        if j == i {
            continue;
        }
        let (g, chi, chi_p) = geometric_factor(&vs[i], &vs[j], &dyads[i], &dyads[j], coupling)?;
        acc += grid.weights()[j] * g * (sinc_t(chi, t) * values[i] - sinc_t(chi_p, t) * values[j]);
    }
    Ok(-acc)
}

/// Per-node time derivative by direct summation over all node pairs.
pub fn prpg_rhs(density: &SpectralDensity, t: f64, units: &UnitSystem) -> Result<Vec<f64>> {
    prpg_rhs_with(density, t, units, Execution::default())
}

pub fn prpg_rhs_with(density: &SpectralDensity, t: f64, units: &UnitSystem, exec: Execution) -> Result<Vec<f64>> {
    let grid = density.grid();
    let dyads = grid_dyads(grid)?;
    exec.map_range(grid.len(), |i| rhs_at_node(i, grid, &dyads, density.values(), t, units.coupling))
        .into_iter()
        .collect()
}

/// Shell-to-shell kernel for isotropic densities on a product grid.
///
/// Stores, for every ordered shell pair `(a, b)`, the node-pair coefficients
/// `w_i w_j G_ij` and frequencies `chi_ij` with `i` in `a` and `j` in `b`,
/// folded by the azimuthal rotation and both mirror symmetries of the grid.
/// At each time the matrix `S_ab(t) = sum c sin(chi t)/chi` is formed and
///
/// ```text
/// W_a d rho_a/dt = - sum_b [ S_ab(t) rho_a - S_ba(t) rho_b ],
/// ```
///
/// which conserves `sum_a W_a rho_a` identically.
#[derive(Debug, Clone)]
pub struct ShellKernel {
    layout: ProductLayout,
    shell_weights: Vec<f64>,
    /// Offsets into `coef`/`chi` for pair `a * n_k + b`.
    offsets: Vec<usize>,
    coef: Vec<f64>,
    chi: Vec<f64>,
    exec: Execution,
}

impl ShellKernel {
    pub fn new(grid: &MomentumGrid, units: &UnitSystem) -> Result<Self> {
        Self::with_execution(grid, units, Execution::default())
    }

    pub fn with_execution(grid: &MomentumGrid, units: &UnitSystem, exec: Execution) -> Result<Self> {
        let layout = grid
            .layout()
            .ok_or_else(|| Error::Structural("shell kernel needs a product grid".into()))?;
        let (nk, nmu, nphi) = (layout.n_k, layout.n_mu, layout.n_phi);
        let dyads = grid_dyads(grid)?;
        let vs = grid.vectors();
        let ws = grid.weights();
        let shell_weights: Vec<f64> =
            ws.chunks(layout.shell_size()).map(|c| c.iter().sum()).collect();

        // azimuthal sources l and nphi - l are mirror images about phi = 0
        let phi_sources: Vec<(usize, f64)> = (0..=nphi / 2)
            .map(|l| (l, if l == 0 || 2 * l == nphi { 1.0 } else { 2.0 }))
            .collect();
        let rings: Vec<(usize, f64)> = (0..nmu.div_ceil(2))
            .map(|m| (m, if 2 * m + 1 == nmu { 1.0 } else { 2.0 }))
            .collect();

        let per_target = exec.map_range(nk, |a| -> Result<Vec<Vec<(f64, f64)>>> {
            let mut by_source = vec![Vec::new(); nk];
            for &(m, ring_mult) in &rings {
                let i = layout.index(a, m, 0);
                for b in 0..nk {
                    for jm in 0..nmu {
                        for &(l, phi_mult) in &phi_sources {
                            let j = layout.index(b, jm, l);
                            if j == i {
                                continue;
                            }
                            let (g, chi, _) =
                                geometric_factor(&vs[i], &vs[j], &dyads[i], &dyads[j], units.coupling)?;
                            let c = nphi as f64 * ring_mult * phi_mult * ws[i] * ws[j] * g;
                            by_source[b].push((c, chi));
                        }
                    }
                }
            }
            Ok(by_source)
        });

        let mut offsets = Vec::with_capacity(nk * nk + 1);
        let mut coef = Vec::new();
        let mut chi = Vec::new();
        offsets.push(0);
        for row in per_target {
            for pairs in row? {
                for (c, x) in pairs {
                    coef.push(c);
                    chi.push(x);
                }
                offsets.push(coef.len());
            }
        }
        Ok(Self { layout, shell_weights, offsets, coef, chi, exec })
    }

    pub fn layout(&self) -> ProductLayout {
        self.layout
    }

    pub fn shell_weights(&self) -> &[f64] {
        &self.shell_weights
    }

    pub fn pair_count(&self) -> usize {
        self.coef.len()
    }

    /// Shell transfer matrix `S_ab(t)`, row-major.
    pub fn transfer_matrix(&self, t: f64) -> Vec<f64> {
        let nk = self.layout.n_k;
        let rows = self.exec.map_range(nk, |a| {
            (0..nk)
                .map(|b| {
                    let r = self.offsets[a * nk + b]..self.offsets[a * nk + b + 1];
                    self.coef[r.clone()]
                        .iter()
                        .zip(&self.chi[r])
                        .map(|(c, x)| c * sinc_t(*x, t))
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>()
        });
        rows.concat()
    }

    pub fn rhs_shells(&self, shell_values: &[f64], t: f64) -> Result<Vec<f64>> {
        let nk = self.layout.n_k;
        if shell_values.len() != nk {
            return Err(Error::Structural(format!("{} shell values for {nk} shells", shell_values.len())));
        }
        let s = self.transfer_matrix(t);
        Ok((0..nk)
            .map(|a| {
                let mut acc = 0.0;
                for b in 0..nk {
                    acc += s[a * nk + b] * shell_values[a] - s[b * nk + a] * shell_values[b];
                }
                -acc / self.shell_weights[a]
            })
            .collect())
    }

    /// Per-node derivative of an isotropic density.
    pub fn rhs(&self, density: &SpectralDensity, t: f64) -> Result<Vec<f64>> {
        if density.grid().layout() != Some(self.layout) {
            return Err(Error::Structural("density grid does not match the shell kernel".into()));
        }
        let shells = density
            .shell_values()
            .ok_or_else(|| Error::Structural("shell kernel needs a shell-constant density".into()))?;
        let d = self.rhs_shells(&shells, t)?;
        let m = self.layout.shell_size();
        Ok(d.iter().flat_map(|v| std::iter::repeat_n(*v, m)).collect())
    }
}

/// Constant density normalized over the grid, `3 / (4 pi k_star^3)` on a
/// product grid.
pub fn flat_spectrum(grid: Arc<MomentumGrid>) -> Result<SpectralDensity> {
    let v = 1.0 / grid.total_measure();
    let n = grid.len();
    SpectralDensity::new(grid, vec![v; n], 0.0)
}

/// Isotropic Gaussian in `|k|` about `center`, truncated by the grid and
/// renormalized. Exponents are taken relative to the node nearest `center`,
/// so very narrow bands collapse onto that shell instead of underflowing.
pub fn narrow_band_spectrum(grid: Arc<MomentumGrid>, center: f64, width: f64) -> Result<SpectralDensity> {
    if !(width > 0.0 && width.is_finite()) {
        return domain(format!("band width must be positive, got {width}"));
    }
    if !(center > 0.0 && center <= grid.k_max() * (1.0 + 1e-12)) {
        return domain(format!("band center {center} outside (0, {}]", grid.k_max()));
    }
    if width >= center {
        return domain(format!("band width {width} must be below the center {center}"));
    }
    let nearest = grid.nodes().iter().map(|n| (n.k - center).abs()).fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|n| {
            let d = n.k - center;
            (-(d * d - nearest * nearest) / (2.0 * width * width)).exp()
        })
        .collect();
    let norm: f64 = raw.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
    let values = raw.iter().map(|v| v / norm).collect();
    SpectralDensity::new(grid, values, 0.0)
}

/// Engine channels equivalent to the photon kernel on a small node set.
///
/// The Hilbert space is spanned by `|node, lambda>` at index `2 node + lambda - 1`.
/// Each ordered node pair `a -> b` is one bath channel with wave vector
/// `k_a - k_b`, weight `w_b / (2 (2 pi)^3 |k_a - k_b|)` and the single Bohr
/// frequency `|k_b| - |k_a|`.
pub fn photon_mode_channels(grid: &MomentumGrid) -> Result<Vec<ModeChannel>> {
    let n = grid.len();
    let d = 2 * n;
    let vs = grid.vectors();
    let mut channels = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let q = vs[a] - vs[b];
            let mut mats = vec![CMatrix::zeros(d, d); 6];
            for sig in 1..=2 {
                for lam in 1..=2 {
                    let el = tau_photon_element(&vs[b], sig, &vs[a], lam, &q, 0.0)?;
                    for (slot, ((i, j), _)) in SYMMETRIC_PAIRS.iter().enumerate() {
                        mats[slot][(2 * b + sig - 1, 2 * a + lam - 1)] = el[(*i, *j)];
                    }
                }
            }
            let freq = vs[b].norm() - vs[a].norm();
            let ops = mats
                .into_iter()
                .map(|m| BohrOperator::new(d, vec![BohrComponent { matrix: m, frequency: freq }]))
                .collect::<Result<Vec<_>>>()?;
            let tau: [BohrOperator; 6] = ops.try_into().expect("six symmetric slots");
            let weight = grid.weights()[b] * measure_normalization() / q.norm();
            channels.push(ModeChannel::new(q, tau, weight)?);
        }
    }
    Ok(channels)
}

/// `<node, lambda| rho |node, sigma> = w_node rho(node) delta_ls / 2`.
pub fn photon_density_matrix(density: &SpectralDensity) -> Result<DensityMatrix> {
    let n = density.grid().len();
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for (a, (v, w)) in density.values().iter().zip(density.grid().weights()).enumerate() {
        let p = Complex64::from(0.5 * v * w);
        m[(2 * a, 2 * a)] = p;
        m[(2 * a + 1, 2 * a + 1)] = p;
    }
    DensityMatrix::new(m)
}

/// Polarization-summed diagonal of an engine right-hand side, as a density rate.
pub fn diagonal_density_rate(rhs: &CMatrix, grid: &MomentumGrid) -> Vec<f64> {
    grid.weights()
        .iter()
        .enumerate()
        .map(|(a, w)| (rhs[(2 * a, 2 * a)].re + rhs[(2 * a + 1, 2 * a + 1)].re) / w)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::InternalBath;
    use crate::engine::dissipator_rhs;
    use crate::grid::{build_grid, GridNode};
    use crate::tensor::ee_contraction;
    use crate::units::PhysicalConstants;
    use std::f64::consts::PI;

    fn planck_units() -> UnitSystem {
        UnitSystem::new(PhysicalConstants::NATURAL, 1.0).unwrap()
    }

    fn two_node_grid(wa: f64, wb: f64) -> Arc<MomentumGrid> {
        let a = GridNode::from_vector(&Vector3::new(0.3, 0.1, 0.4)).unwrap();
        let b = GridNode::from_vector(&Vector3::new(-0.2, 0.5, 0.6)).unwrap();
        Arc::new(MomentumGrid::from_nodes(vec![a, b], vec![wa, wb], 1.0).unwrap())
    }

    #[test]
    fn tau_element_basic_properties() {
        let k1 = Vector3::new(0.2, -0.3, 0.5);
        let k2 = Vector3::new(-0.4, 0.1, 0.3);
        let q = k2 - k1;
        let at0 = tau_photon_element(&k1, 1, &k2, 2, &q, 0.0).unwrap();
        let at1 = tau_photon_element(&k1, 1, &k2, 2, &q, 1.3).unwrap();
        let phase = Complex64::from_polar(1.0, (k1.norm() - k2.norm()) * 1.3);
        assert!((at0.map(|z| z * phase) - at1).norm() < 1e-14);
        // transverse to the graviton momentum and symmetric
        assert!((at0 * q.map(Complex64::from)).norm() < 1e-14);
        assert!((at0 - at0.transpose()).norm() < 1e-14);
        // sqrt(k1 k2) scaling
        let dbl = tau_photon_element(&(2.0 * k1), 1, &(2.0 * k2), 2, &(2.0 * q), 0.0).unwrap();
        assert!((dbl - at0.map(|z| z * 2.0)).norm() < 1e-14);
        assert!(matches!(
            tau_photon_element(&k1, 1, &k2, 2, &(q * 1.01), 0.0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn tau_element_vanishes_for_collinear_photons() {
        let k1 = Vector3::new(0.1, 0.2, 0.3);
        let k2 = 2.5 * k1;
        for l in 1..=2 {
            for s in 1..=2 {
                let e = tau_photon_element(&k1, l, &k2, s, &(k2 - k1), 0.7).unwrap();
                assert!(e.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_collinear_and_exchange() {
        let u = planck_units();
        let s = prpg_kernel(&Vector3::new(0.0, 0.0, 0.3), &Vector3::new(0.0, 0.0, 0.8), 0.5, &u).unwrap();
        assert!(s.geometric.abs() < 1e-14);
        let k = Vector3::new(0.3, -0.1, 0.2);
        let kp = Vector3::new(-0.5, 0.2, 0.6);
        let a = prpg_kernel(&k, &kp, 0.5, &u).unwrap();
        let b = prpg_kernel(&kp, &k, 0.5, &u).unwrap();
        assert!((a.geometric - b.geometric).abs() < 1e-15);
        assert!((a.chi - b.chi_prime).abs() < 1e-15 && (a.chi_prime - b.chi).abs() < 1e-15);
        assert!(a.chi >= 0.0 && a.chi_prime >= 0.0 && a.geometric >= 0.0);
        assert!(matches!(prpg_kernel(&k, &k, 0.5, &u), Err(Error::DegenerateDirection(_))));
    }

    #[test]
    fn kernel_perpendicular_from_first_principles() {
        let u = planck_units();
        let (k, kp) = (Vector3::x(), Vector3::z());
        let s = prpg_kernel(&k, &kp, 2.0, &u).unwrap();
        let bk = polarization_basis(&k).unwrap();
        let bkp = polarization_basis(&kp).unwrap();
        let p4 = tt_projector(&(kp - k)).unwrap();
        let mut ee = 0.0;
        for l in 1..=2 {
            for sg in 1..=2 {
                let e = photon_e_tensor(&bk, l, &bkp, sg).unwrap();
                ee += p4.contract(&e, &e);
            }
        }
        let want = 8.0 * PI / (2.0 * (2.0 * PI).powi(3) * 2f64.sqrt()) * ee;
        assert!((s.geometric - want).abs() < 1e-14);
        assert!((ee - 4.25).abs() < 1e-12);
        assert!((s.chi - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rhs_vanishes_at_time_zero() {
        let u = planck_units();
        let g = Arc::new(build_grid(4, 3, 4, 1.0).unwrap());
        let d = narrow_band_spectrum(g.clone(), 0.9, 0.2).unwrap();
        assert!(prpg_rhs(&d, 0.0, &u).unwrap().iter().all(|v| *v == 0.0));
        let sk = ShellKernel::new(&g, &u).unwrap();
        assert!(sk.rhs(&d, 0.0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_rhs_conserves_probability() {
        let u = planck_units();
        let g = Arc::new(build_grid(5, 4, 6, 1.0).unwrap());
        // anisotropic density
        let vals: Vec<f64> = g.nodes().iter().map(|n| (1.0 + 0.8 * n.mu) * (1.0 + n.phi.cos() * 0.3)).collect();
        let norm: f64 = vals.iter().zip(g.weights()).map(|(v, w)| v * w).sum();
        let d = SpectralDensity::new(g.clone(), vals.iter().map(|v| v / norm).collect(), 0.0).unwrap();
        for t in [0.1, 0.7, 1.0, 3.0] {
            let r = prpg_rhs(&d, t, &u).unwrap();
            let flux: f64 = r.iter().zip(g.weights()).map(|(v, w)| v * w).sum();
            let scale: f64 = r.iter().zip(g.weights()).map(|(v, w)| (v * w).abs()).sum();
            assert!(flux.abs() < 1e-12 * scale.max(1e-300), "t={t} flux {flux} scale {scale}");
        }
    }

    #[test]
    fn shell_kernel_matches_direct_sum() {
        let u = planck_units();
        let g = Arc::new(build_grid(6, 5, 6, 1.0).unwrap());
        let d = narrow_band_spectrum(g.clone(), 1.0, 0.3).unwrap();
        let sk = ShellKernel::new(&g, &u).unwrap();
        let layout = g.layout().unwrap();
        for t in [0.3, 1.0] {
            let full = prpg_rhs(&d, t, &u).unwrap();
            let fast = sk.rhs(&d, t).unwrap();
            for (a, chunk) in full.chunks(layout.shell_size()).enumerate() {
                let ws = &g.weights()[a * layout.shell_size()..(a + 1) * layout.shell_size()];
                let avg: f64 = chunk.iter().zip(ws).map(|(v, w)| v * w).sum::<f64>() / sk.shell_weights()[a];
                let f = fast[a * layout.shell_size()];
                assert!((avg - f).abs() < 1e-12 * f.abs().max(1e-3), "shell {a}: {avg} vs {f}");
            }
        }
    }

    #[test]
    fn isotropic_density_gives_isotropic_rate() {
        let u = planck_units();
        let g = Arc::new(build_grid(4, 6, 8, 1.0).unwrap());
        let d = narrow_band_spectrum(g.clone(), 1.0, 0.2).unwrap();
        let r = prpg_rhs(&d, 1.0, &u).unwrap();
        let layout = g.layout().unwrap();
        for ik in 0..4 {
            let shell: Vec<f64> = (0..6)
                .flat_map(|m| (0..8).map(move |l| (m, l)))
                .map(|(m, l)| r[layout.index(ik, m, l)])
                .collect();
            let mean = shell.iter().sum::<f64>() / shell.len() as f64;
            // nodes on one ring are related by an exact grid rotation
            for m in 0..6 {
                let ring = &shell[m * 8..(m + 1) * 8];
                assert!(ring.iter().all(|v| (v - ring[0]).abs() < 1e-12 * mean.abs()));
            }
            // different rings agree to quadrature accuracy
            assert!(shell.iter().all(|v| (v - mean).abs() < 0.1 * mean.abs()), "shell {ik}: {shell:?}");
        }
    }

    #[test]
    fn shell_kernel_conserves_exactly() {
        let u = planck_units();
        let g = Arc::new(build_grid(8, 6, 8, 1.0).unwrap());
        let sk = ShellKernel::new(&g, &u).unwrap();
        let vals: Vec<f64> = (0..8).map(|a| 1.0 + a as f64 * 0.37).collect();
        for t in [0.2, 1.0, 2.5] {
            let r = sk.rhs_shells(&vals, t).unwrap();
            let flux: f64 = r.iter().zip(sk.shell_weights()).map(|(v, w)| v * w).sum();
            let scale: f64 = r.iter().zip(sk.shell_weights()).map(|(v, w)| (v * w).abs()).sum();
            assert!(flux.abs() < 1e-14 * scale);
        }
    }

    #[test]
    fn two_node_toy_matches_engine() {
        let u = planck_units();
        let g = two_node_grid(0.7, 1.3);
        let vals = vec![0.9 / 0.7, 0.1 / 1.3];
        let d = SpectralDensity::new(g.clone(), vals, 0.0).unwrap();
        let chans = photon_mode_channels(&g).unwrap();
        let rho = photon_density_matrix(&d).unwrap();
        let bath = InternalBath::vacuum(1.0);
        for t in [0.1, 0.55, 1.0] {
            let kernel = prpg_rhs(&d, t, &u).unwrap();
            let eng = dissipator_rhs(&rho, t, &chans, &bath, u.coupling, None).unwrap();
            let diag = diagonal_density_rate(&eng, &g);
            for (a, b) in kernel.iter().zip(&diag) {
                assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
            }
        }
        for ch in &chans {
            assert!(ch.transversality_violation(0.4) < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_normalization() {
        let g = Arc::new(build_grid(6, 4, 4, 1.0).unwrap());
        let f = flat_spectrum(g).unwrap();
        assert!((f.values()[0] - 3.0 / (4.0 * PI)).abs() < 1e-12);
        assert!((f.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_band_properties() {
        let g = Arc::new(build_grid(16, 2, 2, 1.0).unwrap());
        let d = narrow_band_spectrum(g.clone(), 1.0, 0.05).unwrap();
        assert!((d.total_probability() - 1.0).abs() < 1e-10);
        assert!(d.shell_values().is_some());
        let tiny = narrow_band_spectrum(g.clone(), 0.5, 1e-9).unwrap();
        let near = g.nearest_magnitude(0.5);
        let shell = g.layout().unwrap().shell_of(near);
        let sv = tiny.shell_values().unwrap();
        for (a, v) in sv.iter().enumerate() {
            if a != shell {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(narrow_band_spectrum(g.clone(), 0.5, 0.5).is_err());
        assert!(narrow_band_spectrum(g.clone(), 1.5, 0.1).is_err());
        assert!(narrow_band_spectrum(g, 0.5, 0.0).is_err());
    }

    #[test]
    fn flat_rate_negligible_at_small_times() {
        let u = planck_units();
        let g = Arc::new(build_grid(32, 16, 16, 1.0).unwrap());
        let sk = ShellKernel::new(&g, &u).unwrap();
        let flat = flat_spectrum(g.clone()).unwrap();
        let nb = narrow_band_spectrum(g.clone(), 1.0, 0.05).unwrap();
        let top = g.nearest_magnitude(1.0);
        let t = 0.01;
        let rf = sk.rhs(&flat, t).unwrap()[top] / flat.values()[top];
        let rn = sk.rhs(&nb, t).unwrap()[top] / nb.values()[top];
        assert!(rn < 0.0);
        assert!(rf.abs() < 1e-2 * rn.abs(), "flat {rf} narrow {rn}");
    }

    #[test]
    fn ee_contraction_consistent_with_kernel_helper() {
        let k = Vector3::new(0.3, 0.2, -0.4);
        let kp = Vector3::new(0.1, -0.6, 0.2);
        let a = polarization_basis(&k).unwrap();
        let b = polarization_basis(&kp).unwrap();
        let ee = ee_contraction(&a, &b).unwrap();
        let s = prpg_kernel(&k, &kp, 0.0, &planck_units()).unwrap();
        let want = 8.0 * PI * k.norm() * kp.norm() * measure_normalization() / (kp - k).norm() * ee;
        assert!((s.geometric - want).abs() < 1e-14 * want);
    }
}
