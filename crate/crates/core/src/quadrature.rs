//! Gauss–Jacobi rules for integer exponents.
//!
//! Nodes come from the eigenvalues of the symmetric Jacobi matrix and are then
//! polished with Newton steps on the orthonormal recurrence; weights use the
//! Christoffel sum `mu0 / sum_k q_k(x)^2`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights on `[-1, 1]` for the weight `(1 - x)^alpha (1 + x)^beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn recurrence(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let diag = (0..n)
        .map(|k| {
            if k == 0 {
                (beta - alpha) / (alpha + beta + 2.0)
            } else {
                let s = 2.0 * k as f64 + alpha + beta;
                (beta * beta - alpha * alpha) / (s * (s + 2.0))
            }
        })
        .collect();
    // off[k] couples q_{k} and q_{k+1}
    let off = (1..n)
        .map(|k| {
            let kf = k as f64;
            let s = 2.0 * kf + alpha + beta;
            (4.0 * kf * (kf + alpha) * (kf + beta) * (kf + alpha + beta)
                / (s * s * (s + 1.0) * (s - 1.0)))
                .sqrt()
        })
        .collect();
    (diag, off)
}

/// Orthonormal values `q_0..q_{n-1}` and `q_n`, `q_n'` (same scaling) at `x`.
fn orthonormal(x: f64, diag: &[f64], off: &[f64], n: usize) -> (f64, f64, f64) {
    let mut q_prev = 0.0;
    let mut q = 1.0;
    let mut dq_prev = 0.0;
    let mut dq = 0.0;
    let mut sum_sq = 1.0;
    for k in 0..n {
        let b_prev = if k == 0 { 0.0 } else { off[k - 1] };
        let b_next = if k + 1 < n { off[k] } else { 1.0 };
        let q_next = ((x - diag[k]) * q - b_prev * q_prev) / b_next;
        let dq_next = (q + (x - diag[k]) * dq - b_prev * dq_prev) / b_next;
        q_prev = q;
        q = q_next;
        dq_prev = dq;
        dq = dq_next;
        if k + 1 < n {
            sum_sq += q * q;
        }
    }
    (sum_sq, q, dq)
}

pub fn gauss_jacobi(n: usize, alpha: u32, beta: u32) -> GaussRule {
    assert!(n >= 1, "rule needs at least one node");
    let (a, b) = (f64::from(alpha), f64::from(beta));
    let mu0 = 2f64.powi((alpha + beta + 1) as i32) * factorial(alpha) * factorial(beta)
        / factorial(alpha + beta + 1);
    let (diag, off) = recurrence(n, a, b);

    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let weights = nodes
        .iter_mut()
        .map(|x| {
            for _ in 0..3 {
                let (_, q, dq) = orthonormal(*x, &diag, &off, n);
                if dq != 0.0 {
                    *x -= q / dq;
                }
            }
            let (sum_sq, _, _) = orthonormal(*x, &diag, &off, n);
            mu0 / sum_sq
        })
        .collect();
    GaussRule { nodes, weights }
}

pub fn gauss_legendre(n: usize) -> GaussRule {
    gauss_jacobi(n, 0, 0)
}
