//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use holedim::system::{Point, ToralSystem};
use holedim::{make_system, R0};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Float,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub matrix: Vec<Vec<i64>>,
    pub mode: Mode,
    /// denominator of exact base points
    pub q: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            matrix: vec![vec![2, 1], vec![1, 1]],
            mode: Mode::Float,
            q: 1_000_003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoleConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    /// radii of the dimension sweep
    pub radii: Vec<f64>,
}

impl Default for HoleConfig {
    fn default() -> Self {
        Self {
            center: vec![0.0, 0.0],
            radius: 0.15,
            radii: vec![0.08, 0.12, 0.16, 0.20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverConfig {
    pub base: Vec<f64>,
    pub t: Vec<u64>,
    pub k: Vec<u64>,
    pub radii: Vec<f64>,
    /// grid step is `r / delta_ratio`
    pub delta_ratio: f64,
    pub sample_count: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self {
            base: vec![0.31, 0.77],
            t: vec![2, 3, 4],
            k: vec![1, 2, 3],
            radii: vec![0.05, 0.1],
            delta_ratio: 200.0,
            sample_count: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MollifierConfig {
    pub d: Vec<usize>,
    pub ell: Vec<u32>,
    pub eps: Vec<f64>,
    pub radius: f64,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        Self {
            d: vec![1, 2],
            ell: vec![1, 2],
            eps: (4..=9).map(|j| 0.5f64.powi(j)).collect(),
            radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    /// fixed `λ′`; when absent it is derived from the fitted decay rate
    pub lambda_prime: Option<f64>,
    pub p: f64,
    pub ell: u32,
    pub k_em: u32,
    pub base: Vec<f64>,
    pub leaf_radius: f64,
    pub psi_radius: f64,
    pub eps: f64,
    pub t_max: u64,
    pub leaf_cells: u64,
    pub torus_points: u64,
    pub min_r_squared: f64,
    pub measure_base: Vec<f64>,
    pub measure_radii: Vec<f64>,
    /// grid step of the entry measure is `r · measure_delta_ratio`
    pub measure_delta_ratio: f64,
    /// times beyond `choose_t` included in the limit estimate
    pub measure_extra_t: u64,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            lambda_prime: None,
            p: 1.0,
            ell: 1,
            k_em: 1,
            base: vec![0.0, 0.0],
            leaf_radius: 0.1,
            psi_radius: 0.2,
            eps: 0.05,
            t_max: 20,
            leaf_cells: 1 << 22,
            torus_points: 2048,
            min_r_squared: 0.9,
            measure_base: vec![0.5, 0.5],
            measure_radii: vec![0.1, 0.2],
            measure_delta_ratio: 1e-5,
            measure_extra_t: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    pub base: Vec<f64>,
    /// observation step: "unit", "paper" or a positive integer
    pub observation: String,
    pub k_max: u64,
    pub refine: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            base: vec![0.5, 0.5],
            observation: "unit".into(),
            k_max: 14,
            refine: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub system: SystemConfig,
    pub hole: HoleConfig,
    pub cover: CoverConfig,
    pub mollifier: MollifierConfig,
    pub mixing: MixingConfig,
    pub dimension: DimensionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 0,
            out: PathBuf::from("out"),
            system: SystemConfig::default(),
            hole: HoleConfig::default(),
            cover: CoverConfig::default(),
            mollifier: MollifierConfig::default(),
            mixing: MixingConfig::default(),
            dimension: DimensionConfig::default(),
        }
    }
}

fn check_radius(field: &str, r: f64) -> Result<(), ConfigError> {
    if !(r > 0.0 && r < R0) {
        return Err(invalid(
            field,
            format!("radius {r} must satisfy 0 < radius < r0 = {R0}"),
        ));
    }
    Ok(())
}

fn check_point(field: &str, p: &[f64], m: usize) -> Result<(), ConfigError> {
    if p.len() != m {
        return Err(invalid(
            field,
            format!(
                "point has {} coordinates, system has dimension {m}",
                p.len()
            ),
        ));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(invalid(field, "coordinates must be finite"));
    }
    Ok(())
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(invalid(field, "list must not be empty"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Build the system and check every field against it.
    pub fn validate(&self) -> Result<ToralSystem<f64>, ConfigError> {
        let sys = make_system::<f64>(self.system.matrix.clone())
            .map_err(|e| invalid("system.matrix", e.to_string()))?;
        let m = sys.m();
        if self.system.mode == Mode::Exact && self.system.q < 2 {
            return Err(invalid("system.q", "exact mode needs q ≥ 2"));
        }
        check_point("hole.center", &self.hole.center, m)?;
        check_radius("hole.radius", self.hole.radius)?;
        for r in &self.hole.radii {
            check_radius("hole.radii", *r)?;
        }
        check_point("cover.base", &self.cover.base, m)?;
        nonempty("cover.t", &self.cover.t)?;
        nonempty("cover.k", &self.cover.k)?;
        nonempty("cover.radii", &self.cover.radii)?;
        if self.cover.t.contains(&0) {
            return Err(invalid("cover.t", "times must be at least 1"));
        }
        for r in &self.cover.radii {
            check_radius("cover.radii", *r)?;
        }
        if !(self.cover.delta_ratio >= 10.0) {
            return Err(invalid(
                "cover.delta_ratio",
                "grid step r/ratio must be at most r/10",
            ));
        }
        if self.cover.sample_count < 32 {
            return Err(invalid("cover.sample_count", "need at least 32 samples"));
        }
        nonempty("mollifier.d", &self.mollifier.d)?;
        nonempty("mollifier.ell", &self.mollifier.ell)?;
        if self.mollifier.eps.len() < 5 {
            return Err(invalid("mollifier.eps", "need at least 5 values of ε"));
        }
        if self.mollifier.d.iter().any(|&d| d == 0 || d > 3) {
            return Err(invalid("mollifier.d", "dimensions must lie in 1..=3"));
        }
        let mx = &self.mixing;
        if let Some(l) = mx.lambda_prime {
            if !(l > 0.0) {
                return Err(invalid(
                    "mixing.lambda_prime",
                    format!("λ′ = {l} must be positive"),
                ));
            }
        }
        if !(mx.p >= 1.0) {
            return Err(invalid("mixing.p", "p must be at least 1"));
        }
        check_point("mixing.base", &mx.base, m)?;
        check_point("mixing.measure_base", &mx.measure_base, m)?;
        check_radius("mixing.leaf_radius", mx.leaf_radius)?;
        check_radius("mixing.psi_radius", mx.psi_radius)?;
        if !(mx.eps > 0.0) || mx.leaf_radius + mx.eps >= R0 {
            return Err(invalid("mixing.eps", "need ε > 0 and leaf_radius + ε < r0"));
        }
        if mx.t_max < 5 {
            return Err(invalid(
                "mixing.t_max",
                "need at least 5 times for the decay fit",
            ));
        }
        if mx.leaf_cells < 4 || mx.torus_points < 2 {
            return Err(invalid(
                "mixing.leaf_cells",
                "quadrature grids are too small",
            ));
        }
        nonempty("mixing.measure_radii", &mx.measure_radii)?;
        for r in &mx.measure_radii {
            check_radius("mixing.measure_radii", *r)?;
        }
        if !(mx.measure_delta_ratio > 0.0 && mx.measure_delta_ratio < 0.1) {
            return Err(invalid(
                "mixing.measure_delta_ratio",
                "must lie in (0, 0.1)",
            ));
        }
        check_point("dimension.base", &self.dimension.base, m)?;
        self.observation()?;
        if self.dimension.k_max < 3 {
            return Err(invalid(
                "dimension.k_max",
                "need at least 3 observation steps",
            ));
        }
        if !(self.dimension.refine >= 1.0) {
            return Err(invalid("dimension.refine", "must be at least 1"));
        }
        Ok(sys)
    }

    /// Radii of the dimension sweep, which needs at least four.
    pub fn sweep_radii(&self) -> Result<&[f64], ConfigError> {
        if self.hole.radii.len() < 4 {
            return Err(invalid(
                "hole.radii",
                format!(
                    "the sweep needs at least 4 radii, got {}",
                    self.hole.radii.len()
                ),
            ));
        }
        Ok(&self.hole.radii)
    }

    pub fn observation(&self) -> Result<holedim::dimension::ObservationStep, ConfigError> {
        use holedim::dimension::ObservationStep;
        match self.dimension.observation.as_str() {
            "unit" => Ok(ObservationStep::Unit),
            "paper" => Ok(ObservationStep::PaperTime),
            other => match other.parse::<u64>() {
                Ok(t) if t >= 1 => Ok(ObservationStep::Fixed(t)),
                _ => Err(invalid(
                    "dimension.observation",
                    format!("expected \"unit\", \"paper\" or a positive integer, got {other:?}"),
                )),
            },
        }
    }

    /// A base point in the configured arithmetic mode.
    pub fn point(&self, coords: &[f64]) -> Point<f64> {
        match self.system.mode {
            Mode::Float => Point::float(coords.to_vec()),
            Mode::Exact => {
                let q = self.system.q;
                let nums = coords
                    .iter()
                    .map(|c| ((c.rem_euclid(1.0) * q as f64).round() as u64) % q)
                    .collect();
                Point::exact(nums, q).expect("numerators are reduced mod q")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn radius_bound_names_field() {
        let c = ExperimentConfig::from_toml("[hole]\nradius = 0.6\n").unwrap();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("hole.radius") && e.contains("0.25"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[hole]\nradiuss = 0.1\n").is_err());
    }

    #[test]
    fn exact_points_round_to_the_denominator() {
        let mut c = ExperimentConfig::default();
        c.system.mode = Mode::Exact;
        c.system.q = 1000;
        assert_eq!(
            c.point(&[0.5, 0.25]),
            Point::exact(vec![500, 250], 1000).unwrap()
        );
    }
}
