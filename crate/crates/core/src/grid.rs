//! Spherical product grids for momentum-space integrals over a ball.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_legendre};

/// One quadrature node in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub k: f64,
    /// Cosine of the polar angle.
    pub mu: f64,
    pub phi: f64,
}

impl GridNode {
    pub fn vector(&self) -> Vector3<f64> {
        let s = (1.0 - self.mu * self.mu).max(0.0).sqrt();
        Vector3::new(self.k * s * self.phi.cos(), self.k * s * self.phi.sin(), self.k * self.mu)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        let k = v.norm();
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::DegenerateDirection(format!("node vector {v:?} has no direction")));
        }
        Ok(Self { k, mu: (v.z / k).clamp(-1.0, 1.0), phi: v.y.atan2(v.x) })
    }
}

/// Counts of a radial x polar x azimuthal product rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductLayout {
    pub n_k: usize,
    pub n_mu: usize,
    pub n_phi: usize,
}

impl ProductLayout {
    pub fn index(&self, ik: usize, imu: usize, iphi: usize) -> usize {
        (ik * self.n_mu + imu) * self.n_phi + iphi
    }

    pub fn shell_of(&self, node: usize) -> usize {
        node / (self.n_mu * self.n_phi)
    }

    pub fn shell_size(&self) -> usize {
        self.n_mu * self.n_phi
    }
}

/// Discretized ball `|k| <= k_max` with weights for `d^3k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    nodes: Vec<GridNode>,
    vectors: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    k_max: f64,
    layout: Option<ProductLayout>,
}

impl MomentumGrid {
    /// Grid from explicit nodes, e.g. few-mode toy systems.
    pub fn from_nodes(nodes: Vec<GridNode>, weights: Vec<f64>, k_max: f64) -> Result<Self> {
        if !(k_max > 0.0 && k_max.is_finite()) {
            return domain(format!("k_max must be positive, got {k_max}"));
        }
        if nodes.len() != weights.len() {
            return Err(Error::Structural(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.is_empty() {
            return domain("grid needs at least one node");
        }
        for n in &nodes {
            if !(n.k > 0.0 && n.k <= k_max * (1.0 + 1e-12)) {
                return domain(format!("node magnitude {} outside (0, {k_max}]", n.k));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return domain("weights must be positive");
        }
        let vectors = nodes.iter().map(GridNode::vector).collect();
        Ok(Self { nodes, vectors, weights, k_max, layout: None })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn layout(&self) -> Option<ProductLayout> {
        self.layout
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&GridNode) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * f(n)).sum()
    }

    /// Index of the node whose magnitude is closest to `k` (first on ties).
    pub fn nearest_magnitude(&self, k: f64) -> usize {
        let mut best = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if (n.k - k).abs() < (self.nodes[best].k - k).abs() {
                best = i;
            }
        }
        best
    }
}

/// Product rule on the ball of radius `k_max`.
///
/// The radial rule is Gauss–Jacobi with weight `k^2` on `(0, k_max)`, so the
/// Jacobian is integrated exactly for every `n_k`. Polar nodes are
/// Gauss–Legendre in `mu`; azimuth is the uniform trapezoid starting at 0.
pub fn build_grid(n_k: usize, n_mu: usize, n_phi: usize, k_max: f64) -> Result<MomentumGrid> {
    if n_k == 0 || n_mu == 0 || n_phi == 0 {
        return domain(format!("grid counts must be >= 1, got ({n_k}, {n_mu}, {n_phi})"));
    }
    if !(k_max > 0.0 && k_max.is_finite()) {
        return domain(format!("k_max must be positive, got {k_max}"));
    }
    let radial = gauss_jacobi(n_k, 0, 2);
    let polar = gauss_legendre(n_mu);
    let dphi = 2.0 * PI / n_phi as f64;
    // (1+x)^2 dx = (2k/kmax)^2 (2/kmax) dk
    let radial_scale = k_max.powi(3) / 8.0;

    let layout = ProductLayout { n_k, n_mu, n_phi };
    let n = n_k * n_mu * n_phi;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (x, wr) in radial.nodes.iter().zip(&radial.weights) {
        let k = 0.5 * k_max * (x + 1.0);
        for (mu, wm) in polar.nodes.iter().zip(&polar.weights) {
            for l in 0..n_phi {
                nodes.push(GridNode { k, mu: *mu, phi: dphi * l as f64 });
                weights.push(wr * radial_scale * wm * dphi);
            }
        }
    }
    let vectors = nodes.iter().map(GridNode::vector).collect();
    Ok(MomentumGrid { nodes, vectors, weights, k_max, layout: Some(layout) })
}
