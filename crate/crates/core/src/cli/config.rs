//! Run configuration. Every field has a default, so `{}` is a valid config;
//! unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_k: usize,
    pub n_mu: usize,
    pub n_phi: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_k: 32, n_mu: 16, n_phi: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    NarrowBand,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub kind: SpectrumKind,
    pub center_per_k_star: f64,
    pub width_per_k_star: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { kind: SpectrumKind::NarrowBand, center_per_k_star: 1.0, width_per_k_star: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Photon and scalar scan points, as multiples of `k_star_per_m`.
    pub k_star_factors: Vec<f64>,
    /// Fixed scalar masses for the bound scans, as multiples of `k_star_per_m`.
    pub mu_per_k_star: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { k_star_factors: vec![0.5, 1.0, 2.0], mu_per_k_star: vec![0.0, 1.0, 100.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    /// Photon momenta of the toy, in units of `k_star`.
    pub k_per_k_star: Vec<[f64; 3]>,
    /// Initial occupation probabilities, one per momentum.
    pub populations: Vec<f64>,
    /// Number of kernel comparison times in `(0, 1/k_star]`.
    pub n_samples: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            k_per_k_star: vec![[0.3, 0.1, 0.4], [-0.2, 0.5, 0.6]],
            populations: vec![0.8, 0.2],
            n_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub k_star_per_m: f64,
    pub spectrum: SpectrumConfig,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    /// Bath mode cutoff, in units of `k_star`.
    pub cutoff_per_k_star: f64,
    /// Replaces the physical dimensionless coupling `8 pi G hbar k_star^2 / c^3`.
    pub coupling_override: Option<f64>,
    /// Integration horizon in units of `1 / (c k_star)`.
    pub t_end_per_c_k_star: f64,
    pub n_steps: usize,
    /// Largest tolerated `|total probability - 1|` before a run is declared diverged.
    pub conservation_ceiling: f64,
    /// Flat-spectrum rate must stay below this fraction of the narrow-band rate.
    pub flat_threshold: f64,
    pub seed: u64,
    pub seed_count: usize,
    pub scan: ScanConfig,
    pub toy: ToyConfig,
    /// Test hook: perturb the polarization dyad in `check-tensors`.
    pub inject_faulty_dyad: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            k_star_per_m: 2.09e7,
            spectrum: SpectrumConfig::default(),
            temperature_k: 0.0,
            cutoff_per_k_star: 1.0,
            coupling_override: None,
            t_end_per_c_k_star: 1.0,
            n_steps: 200,
            conservation_ceiling: 1e-6,
            flat_threshold: 1e-2,
            seed: 20_251_014,
            seed_count: 200,
            scan: ScanConfig::default(),
            toy: ToyConfig::default(),
            inject_faulty_dyad: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        let g = &self.grid;
        if g.n_k == 0 || g.n_mu == 0 || g.n_phi == 0 {
            return Err("grid sizes must be at least 1".into());
        }
        positive("k_star_per_m", self.k_star_per_m)?;
        positive("spectrum.center_per_k_star", self.spectrum.center_per_k_star)?;
        positive("spectrum.width_per_k_star", self.spectrum.width_per_k_star)?;
        if self.spectrum.center_per_k_star > 1.0 {
            return Err("spectrum.center_per_k_star must not exceed 1".into());
        }
        if self.spectrum.width_per_k_star >= self.spectrum.center_per_k_star {
            return Err("spectrum.width_per_k_star must be below the center".into());
        }
        if !(self.temperature_k >= 0.0 && self.temperature_k.is_finite()) {
            return Err(format!("temperature_K must be >= 0, got {}", self.temperature_k));
        }
        positive("cutoff_per_k_star", self.cutoff_per_k_star)?;
        if let Some(c) = self.coupling_override {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(format!("coupling_override must be >= 0, got {c}"));
            }
        }
        positive("t_end_per_c_k_star", self.t_end_per_c_k_star)?;
        if self.n_steps == 0 {
            return Err("n_steps must be at least 1".into());
        }
        // the rate is read off the snapshot at t = 1 / (c k_star)
        let per_unit = self.n_steps as f64 / self.t_end_per_c_k_star;
        if self.t_end_per_c_k_star < 1.0 || (per_unit - per_unit.round()).abs() > 1e-9 * per_unit {
            return Err("t_end_per_c_k_star must be >= 1 with an integer number of steps per unit time".into());
        }
        positive("conservation_ceiling", self.conservation_ceiling)?;
        positive("flat_threshold", self.flat_threshold)?;
        if self.seed_count == 0 {
            return Err("seed_count must be at least 1".into());
        }
        if self.scan.k_star_factors.len() < 3 {
            return Err("scan.k_star_factors needs at least 3 points".into());
        }
        for f in &self.scan.k_star_factors {
            positive("scan.k_star_factors entry", *f)?;
        }
        for m in &self.scan.mu_per_k_star {
            if !(*m >= 0.0 && m.is_finite()) {
                return Err(format!("scan.mu_per_k_star entries must be >= 0, got {m}"));
            }
        }
        let toy = &self.toy;
        if toy.k_per_k_star.len() < 2 || toy.k_per_k_star.len() != toy.populations.len() {
            return Err("toy needs at least two momenta and one population per momentum".into());
        }
        if toy.populations.iter().any(|p| !(*p >= 0.0)) || (toy.populations.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err("toy.populations must be non-negative and sum to 1".into());
        }
        if toy.n_samples == 0 {
            return Err("toy.n_samples must be at least 1".into());
        }
        Ok(())
    }

    /// Config echoed into every output header.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
