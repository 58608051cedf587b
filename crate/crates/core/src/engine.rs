//! Finite-dimensional realization of the gravitational master equation
//!
//! ```text
//! d rho/dt = -i [U, rho]
//!            - g sum_modes w { [tau_ij^+, tt_ij rho] + N(k) [tau_ij^+, [tt_ij, rho]] + h.c. }
//! ```
//!
//! in internal units (`hbar = c = 1`), where `tt_ij(k, t)` is the memory
//! transform of the interaction-picture TT stress operator `tau_ij(k, t)`.
//! Operators are given in Bohr form `sum_n M_n exp(i W_n t)`, which makes the
//! memory integral closed-form.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::bath::InternalBath;
use crate::error::{domain, Error, Result};
use crate::exec::Execution;

pub type CMatrix = DMatrix<Complex64>;

/// Independent components of a symmetric 3x3 index pair with their
/// multiplicity in the full nine-term sum.
pub const SYMMETRIC_PAIRS: [((usize, usize), f64); 6] = [
    ((0, 0), 1.0),
    ((1, 1), 1.0),
    ((2, 2), 1.0),
    ((0, 1), 2.0),
    ((0, 2), 2.0),
    ((1, 2), 2.0),
];

/// Slot of `(i, j)` in [`SYMMETRIC_PAIRS`].
pub fn pair_slot(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => panic!("index pair ({i}, {j}) out of range"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BohrComponent {
    pub matrix: CMatrix,
    /// Bohr frequency in internal units.
    pub frequency: f64,
}

/// `O(t) = sum_n M_n exp(i W_n t)` on a `d`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct BohrOperator {
    components: Vec<BohrComponent>,
    dim: usize,
}

impl BohrOperator {
    pub fn new(dim: usize, components: Vec<BohrComponent>) -> Result<Self> {
        for (n, c) in components.iter().enumerate() {
            if c.matrix.nrows() != dim || c.matrix.ncols() != dim {
                return Err(Error::Structural(format!(
                    "Bohr component {n} is {}x{}, expected {dim}x{dim}",
                    c.matrix.nrows(),
                    c.matrix.ncols()
                )));
            }
            if !c.frequency.is_finite() {
                return domain(format!("Bohr component {n} has non-finite frequency"));
            }
        }
        Ok(Self { components, dim })
    }

    pub fn zero(dim: usize) -> Self {
        Self { components: Vec::new(), dim }
    }

    pub fn single(matrix: CMatrix, frequency: f64) -> Result<Self> {
        let dim = matrix.nrows();
        Self::new(dim, vec![BohrComponent { matrix, frequency }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[BohrComponent] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    pub fn eval(&self, t: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            out += &c.matrix * Complex64::from_polar(1.0, c.frequency * t);
        }
        out
    }

    /// `O(t)^+ = sum_n M_n^+ exp(-i W_n t)`.
    pub fn adjoint_eval(&self, t: f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            out += c.matrix.adjoint() * Complex64::from_polar(1.0, -c.frequency * t);
        }
        out
    }
}

/// `sin(y) / y` with its removable point.
fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        let y2 = y * y;
        1.0 - y2 / 6.0 + y2 * y2 / 120.0
    } else {
        y.sin() / y
    }
}

/// `int_0^t exp(i x s) ds`, finite through `x = 0`.
pub(crate) fn phase_integral(x: f64, t: f64) -> Complex64 {
    Complex64::from_polar(t * sinc(0.5 * x * t), 0.5 * x * t)
}

/// Memory transform `int_0^t dt' O(t') exp(-i k (t - t'))` in closed form.
///
/// Each component contributes `M_n exp(-i k t) (exp(i (W_n + k) t) - 1) / (i (W_n + k))`,
/// which tends to `M_n t exp(i W_n t)` on resonance `W_n = -k`.
pub fn tilde_tau(op: &BohrOperator, k: f64, t: f64) -> Result<CMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("memory transform needs t >= 0, got {t}"));
    }
    let mut out = CMatrix::zeros(op.dim, op.dim);
    let lag = Complex64::from_polar(1.0, -k * t);
    for c in &op.components {
        out += &c.matrix * (lag * phase_integral(c.frequency + k, t));
    }
    Ok(out)
}

/// One bath mode: wave vector, TT stress components and integration weight
/// (quadrature weight times the mode measure).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeChannel {
    pub k: Vector3<f64>,
    /// Indexed by [`SYMMETRIC_PAIRS`].
    pub tau: [BohrOperator; 6],
    pub weight: f64,
}

impl ModeChannel {
    pub fn new(k: Vector3<f64>, tau: [BohrOperator; 6], weight: f64) -> Result<Self> {
        let dim = tau[0].dim();
        if tau.iter().any(|op| op.dim() != dim) {
            return Err(Error::Structural("channel components have mixed dimensions".into()));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return domain(format!("channel weight must be >= 0, got {weight}"));
        }
        Ok(Self { k, tau, weight })
    }

    pub fn dim(&self) -> usize {
        self.tau[0].dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &BohrOperator {
        &self.tau[pair_slot(i, j)]
    }

    /// Largest entry of `k_i tau_ij(t)` relative to `|k|`.
    pub fn transversality_violation(&self, t: f64) -> f64 {
        let n = self.k.norm();
        let evals: Vec<CMatrix> = self.tau.iter().map(|op| op.eval(t)).collect();
        let mut worst: f64 = 0.0;
        for j in 0..3 {
            let mut acc = CMatrix::zeros(self.dim(), self.dim());
            for i in 0..3 {
                acc += &evals[pair_slot(i, j)] * Complex64::from(self.k[i] / n);
            }
            worst = worst.max(acc.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        worst
    }
}

/// Reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub rho: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(Error::Structural(format!(
                "density matrix must be square and non-empty, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let dm = Self { rho };
        if dm.hermiticity_error() > 1e-12 {
            return domain("density matrix is not Hermitian");
        }
        if (dm.trace() - 1.0).abs() > 1e-12 {
            return domain(format!("density matrix trace is {}", dm.trace()));
        }
        if dm.min_eigenvalue() < -1e-10 {
            return domain(format!("density matrix has eigenvalue {}", dm.min_eigenvalue()));
        }
        Ok(dm)
    }

    /// Wraps a matrix produced by time stepping; nothing is checked.
    pub fn from_evolved(rho: CMatrix) -> Self {
        Self { rho }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// The three terms of the right-hand side, each Hermitian and traceless.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipatorParts {
    /// `-i [U, rho]`.
    pub unitary: CMatrix,
    /// Temperature-independent dissipator.
    pub vacuum: CMatrix,
    /// Term proportional to the Planck occupation.
    pub thermal: CMatrix,
}

impl DissipatorParts {
    pub fn total(&self) -> CMatrix {
        &self.unitary + &self.vacuum + &self.thermal
    }
}

fn check_inputs(rho: &DensityMatrix, channels: &[ModeChannel], self_gravity: Option<&CMatrix>) -> Result<()> {
    let d = rho.dim();
    if let Some(ch) = channels.iter().position(|c| c.dim() != d) {
        return Err(Error::Structural(format!(
            "channel {ch} acts on dimension {}, density matrix has {d}",
            channels[ch].dim()
        )));
    }
    if let Some(u) = self_gravity {
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::Structural("self-gravity operator has the wrong shape".into()));
        }
        let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if hermiticity_error(u) > 1e-12 * scale {
            return domain("self-gravity operator is not Hermitian");
        }
    }
    Ok(())
}

/// `(vacuum, thermal)` contribution of a single channel, before the `-g w` prefactor.
fn channel_terms(rho: &CMatrix, t: f64, ch: &ModeChannel, occupation: f64) -> Result<(CMatrix, CMatrix)> {
    let d = rho.nrows();
    let kmag = ch.k.norm();
    let mut vac = CMatrix::zeros(d, d);
    let mut th = CMatrix::zeros(d, d);
    for (slot, (_, mult)) in SYMMETRIC_PAIRS.iter().enumerate() {
        let op = &ch.tau[slot];
        if op.is_zero() {
            continue;
        }
        let dag = op.adjoint_eval(t);
        let mem = tilde_tau(op, kmag, t)?;
        let mem_rho = &mem * rho;
        let x = commutator(&dag, &mem_rho);
        vac += (&x + x.adjoint()) * Complex64::from(*mult);
        if occupation != 0.0 {
            let inner = &mem_rho - rho * &mem;
            let y = commutator(&dag, &inner);
            th += (&y + y.adjoint()) * Complex64::from(*mult * occupation);
        }
    }
    Ok((vac, th))
}

/// Right-hand side split into its unitary, vacuum and thermal parts.
pub fn dissipator_parts(
    rho: &DensityMatrix,
    t: f64,
    channels: &[ModeChannel],
    bath: &InternalBath,
    coupling: f64,
    self_gravity: Option<&CMatrix>,
    exec: Execution,
) -> Result<DissipatorParts> {
    check_inputs(rho, channels, self_gravity)?;
    let d = rho.dim();
    let per_channel = exec.map_range(channels.len(), |n| {
        let ch = &channels[n];
        let kmag = ch.k.norm();
        if !bath.admits(kmag) || ch.weight == 0.0 {
            return Ok(None);
        }
        channel_terms(&rho.rho, t, ch, bath.occupation(kmag)).map(|v| Some((ch.weight, v)))
    });
    let mut vacuum = CMatrix::zeros(d, d);
    let mut thermal = CMatrix::zeros(d, d);
    for item in per_channel {
        if let Some((w, (v, th))) = item? {
            let f = Complex64::from(-coupling * w);
            vacuum += v * f;
            thermal += th * f;
        }
    }
    let unitary = match self_gravity {
        Some(u) => commutator(u, &rho.rho) * Complex64::new(0.0, -1.0),
        None => CMatrix::zeros(d, d),
    };
    Ok(DissipatorParts { unitary, vacuum, thermal })
}

/// Full right-hand side of the master equation at time `t`.
pub fn dissipator_rhs(
    rho: &DensityMatrix,
    t: f64,
    channels: &[ModeChannel],
    bath: &InternalBath,
    coupling: f64,
    self_gravity: Option<&CMatrix>,
) -> Result<CMatrix> {
    dissipator_parts(rho, t, channels, bath, coupling, self_gravity, Execution::default()).map(|p| p.total())
}
