//! Transverse and transverse-traceless projectors, polarization bases, and the
//! photon polarization tensor `E^{ls}_{ij}(k, k')`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{domain, Error, Result};

/// Unit vector along `k`, or an error for a vanishing vector.
fn direction(k: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = k.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DegenerateDirection(format!("wave vector {k:?} has no direction")));
    }
    Ok(k / n)
}

/// `P_ij = delta_ij - k_i k_j / |k|^2`.
pub fn transverse_projector(k: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let n = direction(k)?;
    Ok(Matrix3::identity() - n * n.transpose())
}

/// Rank-4 TT projector `P_ijkl = (P_ik P_jl + P_il P_jk - P_ij P_kl) / 2`,
/// stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct TtProjector {
    data: [f64; 81],
}

impl TtProjector {
    pub fn from_transverse(p: &Matrix3<f64>) -> Self {
        let mut data = [0.0; 81];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        data[Self::offset(i, j, k, l)] =
                            0.5 * (p[(i, k)] * p[(j, l)] + p[(i, l)] * p[(j, k)] - p[(i, j)] * p[(k, l)]);
                    }
                }
            }
        }
        Self { data }
    }

    #[inline]
    fn offset(i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * 3 + j) * 3 + k) * 3 + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[Self::offset(i, j, k, l)]
    }

    /// `(P4 S)_ij = P_ijkl S_kl`.
    pub fn apply(&self, s: &Matrix3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| {
            let mut acc = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    acc += self.get(i, j, k, l) * s[(k, l)];
                }
            }
            acc
        })
    }

    /// `A_ij P_ijkl B_kl`.
    pub fn contract(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        a.component_mul(&self.apply(b)).sum()
    }
}

pub fn tt_projector(k: &Vector3<f64>) -> Result<TtProjector> {
    Ok(TtProjector::from_transverse(&transverse_projector(k)?))
}

/// Deterministic right-handed dyad `(e1, e2)` with `e1 x e2 = k_hat`.
pub fn dyad(k: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let n = direction(k)?;
    let c = Vector3::z().cross(&n);
    let cn = c.norm();
    if cn < 1e-12 {
        let s = n.z.signum();
        return Ok((Vector3::x(), Vector3::new(0.0, s, 0.0)));
    }
    let e1 = c / cn;
    let e2 = n.cross(&e1);
    Ok((e1, e2))
}

/// Projectors and polarization basis at one wave vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TtBasis {
    pub k: Vector3<f64>,
    pub p: Matrix3<f64>,
    pub p4: TtProjector,
    /// Polarization vectors `e^1`, `e^2`.
    pub e_vec: [Vector3<f64>; 2],
    /// `e^+ = e1 e1 - e2 e2` and `e^x = e1 e2 + e2 e1`.
    pub e_tens: [Matrix3<f64>; 2],
}

impl TtBasis {
    /// Builds the basis from a caller-supplied dyad without checking it.
    pub fn from_dyad(k: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64>) -> Result<Self> {
        let p = transverse_projector(&k)?;
        let p4 = TtProjector::from_transverse(&p);
        let plus = e1 * e1.transpose() - e2 * e2.transpose();
        let cross = e1 * e2.transpose() + e2 * e1.transpose();
        Ok(Self { k, p, p4, e_vec: [e1, e2], e_tens: [plus, cross] })
    }
}

pub fn polarization_basis(k: &Vector3<f64>) -> Result<TtBasis> {
    let (e1, e2) = dyad(k)?;
    TtBasis::from_dyad(*k, e1, e2)
}

/// Antisymmetric symbol on polarization labels, `eps_12 = +1`.
fn eps(a: usize, b: usize) -> f64 {
    match (a, b) {
        (0, 1) => 1.0,
        (1, 0) => -1.0,
        _ => 0.0,
    }
}

fn polarization_slot(label: usize) -> Result<usize> {
    match label {
        1 | 2 => Ok(label - 1),
        _ => domain(format!("polarization index must be 1 or 2, got {label}")),
    }
}

/// `E^{ls}_ij(k,k') = e^l_i(k) e^s_j(k') + eps_{l l'} eps_{s s'} e^{l'}_i(k) e^{s'}_j(k')`
/// with polarization labels `lam, sig` in `{1, 2}`.
pub fn photon_e_tensor(b1: &TtBasis, lam: usize, b2: &TtBasis, sig: usize) -> Result<Matrix3<f64>> {
    let (l, s) = (polarization_slot(lam)?, polarization_slot(sig)?);
    let mut e = b1.e_vec[l] * b2.e_vec[s].transpose();
    for lp in 0..2 {
        for sp in 0..2 {
            let f = eps(l, lp) * eps(s, sp);
            if f != 0.0 {
                e += f * b1.e_vec[lp] * b2.e_vec[sp].transpose();
            }
        }
    }
    Ok(e)
}

/// `sum_{l,s} P_ijkl(k' - k) E^{ls}_ij E^{ls}_kl`.
pub fn ee_contraction(b1: &TtBasis, b2: &TtBasis) -> Result<f64> {
    let q = b2.k - b1.k;
    let p = transverse_projector(&q).map_err(|_| {
        Error::DegenerateDirection("coincident wave vectors in ee_contraction".into())
    })?;
    Ok(ee_from_dyads(&b1.e_vec, &b2.e_vec, &p))
}

/// `E : P4 : E` for the transverse projector `p`, without forming the rank-4 array.
#[inline]
fn tt_norm_sq(e: &Matrix3<f64>, p: &Matrix3<f64>) -> f64 {
    let m = p * e * p;
    let tr = e.component_mul(p).sum();
    0.5 * (e.component_mul(&m).sum() + e.component_mul(&m.transpose()).sum() - tr * tr)
}

/// Hot-path form of [`ee_contraction`] on precomputed dyads and `P(k' - k)`.
///
/// `E^{22} = E^{11}` and `E^{21} = -E^{12}`, so the sum reduces to two norms.
#[inline]
pub(crate) fn ee_from_dyads(a: &[Vector3<f64>; 2], b: &[Vector3<f64>; 2], p: &Matrix3<f64>) -> f64 {
    let e11 = a[0] * b[0].transpose() + a[1] * b[1].transpose();
    let e12 = a[0] * b[1].transpose() - a[1] * b[0].transpose();
    2.0 * (tt_norm_sq(&e11, p) + tt_norm_sq(&e12, p))
}
