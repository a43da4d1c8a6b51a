use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use flowlip_core::fields::{CatalogField, FieldSpec, SampledGrid, SpaceTimePoint};
use flowlip_core::grid::Domain;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldConfig {
    Catalog(CatalogField),
    /// Sampled-field text file, relative to the config file.
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub t_max: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Scalar function on the spatial lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridFunction {
    Constant { value: f64 },
    Affine { slope: Vec<f64>, offset: f64 },
    /// `|x − center|^exponent`.
    AbsPow { center: Vec<f64>, exponent: f64 },
    /// 1 on the box `[lo, hi]`, 0 elsewhere.
    Indicator { lo: Vec<f64>, hi: Vec<f64> },
    /// `(1 − |x − center|²/r²)₊^degree`.
    Bump { center: Vec<f64>, radius: f64, degree: u32 },
}

impl GridFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            GridFunction::Constant { value } => *value,
            GridFunction::Affine { slope, offset } => offset + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            GridFunction::AbsPow { center, exponent } => {
                center.iter().zip(x).map(|(c, y)| (y - c).powi(2)).sum::<f64>().sqrt().powf(*exponent)
            }
            GridFunction::Indicator { lo, hi } => {
                if x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b) {
                    1.0
                } else {
                    0.0
                }
            }
            GridFunction::Bump { center, radius, degree } => {
                let r2 = center.iter().zip(x).map(|(c, y)| (y - c).powi(2)).sum::<f64>() / (radius * radius);
                if r2 >= 1.0 { 0.0 } else { (1.0 - r2).powi(*degree as i32) }
            }
        }
    }
}

/// Sample function on a flow tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    /// One constant per tube curve.
    Branch { values: Vec<f64> },
    /// `φ = x₀`.
    Time,
    /// `φ = ∛(x₀ − ∛x₁)`.
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    /// Space-time centre `(t, x̂)`.
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_radius: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
}

fn default_degree() -> u32 {
    3
}

fn default_true() -> bool {
    true
}

fn default_direction() -> i8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the invoked subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    pub field: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "default_true")]
    pub saturate: bool,

    /// `distance`: query pairs as full space-time points.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[Vec<f64>; 2]>,
    #[serde(default)]
    pub witness: bool,
    /// `lipschitz`, `extend`: multi-flow parameters of the tube curves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tube: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_ext: Option<f64>,
    /// `flow`, `certify`: start points (space-time for `flow`, spatial for `certify`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub starts: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_starts: Option<usize>,
    #[serde(default = "default_direction")]
    pub direction: i8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// `fbcheck`: curve file relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// `maximal`, `transport`: function on the lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<GridFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<TestConfig>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [
            ("h", self.h),
            ("dt", self.dt),
            ("ds", self.ds),
            ("epsilon", self.epsilon),
            ("l_ext", self.l_ext),
            ("duration", self.duration),
            ("tol", self.tol),
            ("p", self.p),
            ("p_tilde", self.p_tilde),
            ("cap", self.cap),
            ("dt_cfl", self.dt_cfl),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{name} must be positive")));
                }
            }
        }
        if self.schedule.iter().any(|l| !(*l > 0.0)) || self.schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("schedule must be positive and strictly decreasing"));
        }
        if self.direction != 1 && self.direction != -1 {
            return Err(invalid("direction must be 1 or -1"));
        }
        if let Some(d) = &self.domain {
            if d.lo.len() != d.hi.len() || d.lo.is_empty() || !(d.t_max > 0.0) {
                return Err(invalid("domain needs t_max > 0 and matching lo/hi"));
            }
        }
        if matches!(self.field, FieldConfig::Catalog(_)) && self.domain.is_none() {
            return Err(invalid("catalog fields need a domain"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn field_spec(&self, base: &Path) -> Result<FieldSpec, CliError> {
        match &self.field {
            FieldConfig::Catalog(c) => {
                let d = self.domain.as_ref().ok_or_else(|| invalid("catalog fields need a domain"))?;
                let dom = Domain::new(d.t_max, d.lo.clone(), d.hi.clone()).map_err(|e| invalid(e.to_string()))?;
                FieldSpec::catalog(c.clone(), dom).map_err(|e| invalid(e.to_string()))
            }
            FieldConfig::File(f) => {
                let path = base.join(f);
                let text = std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let grid = SampledGrid::parse(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                FieldSpec::sampled(grid).map_err(|e| invalid(e.to_string()))
            }
        }
    }

    pub fn need(&self, name: &str, v: Option<f64>) -> Result<f64, CliError> {
        v.ok_or_else(|| invalid(format!("missing {name}")))
    }

    pub fn points(&self, raw: &[Vec<f64>], dim: usize) -> Result<Vec<SpaceTimePoint>, CliError> {
        raw.iter()
            .map(|p| {
                if p.len() != dim + 1 {
                    return Err(invalid(format!("point {p:?} needs {} coordinates", dim + 1)));
                }
                Ok(SpaceTimePoint::from_slice(p))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_hash() {
        let text = r#"{"field":{"catalog":{"name":"cubic"}},"domain":{"t_max":1,"lo":[-1],"hi":[1]},
            "h":0.015625,"dt":0.015625,"schedule":[1,0.5],"pairs":[[[0,0],[1,0]]]}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn rejects_bad_numbers() {
        let text = r#"{"field":{"catalog":{"name":"shear"}},"domain":{"t_max":1,"lo":[-1],"hi":[1]},"schedule":[0.5,1]}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
        let text = r#"{"field":{"catalog":{"name":"shear"}},"h":-1}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
