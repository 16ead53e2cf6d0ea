//! System description files.
//!
//! A system spec is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "averaging pair",
//!   "dim": 1,
//!   "order": 2,
//!   "maps": [
//!     { "matrices": [[0.25], [0.25]], "offset": [0.0] },
//!     { "matrices": [[0.25], [0.25]], "offset": [0.5] }
//!   ],
//!   "probs": [0.5, 0.5]
//! }
//! ```
//!
//! Each map carries `order` flattened row-major `dim x dim` matrices and one
//! offset of length `dim`; `probs` is required only by the measure and chaos
//! commands. Validation reports every violation, not just the first.

use gifs_core::{spectral_norm, GifsP, GifsSystem, MultiAffineMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub matrices: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dim: usize,
    pub order: usize,
    pub maps: Vec<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
#[error("invalid system spec:\n  {}", violations.join("\n  "))]
pub struct SpecError {
    pub violations: Vec<String>,
}

/// Parses and fully validates a spec document, collecting all violations.
pub fn parse_spec(text: &str) -> Result<SystemSpec, SpecError> {
    let spec: SystemSpec = serde_json::from_str(text).map_err(|e| SpecError {
        violations: vec![format!("malformed JSON: {e}")],
    })?;
    let violations = validate(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(SpecError { violations })
    }
}

#[cfg(test)]
pub fn serialize_spec(spec: &SystemSpec) -> String {
    serde_json::to_string_pretty(spec).expect("spec serializes")
}

fn validate(spec: &SystemSpec) -> Vec<String> {
    let mut out = Vec::new();
    if spec.schema_version != SCHEMA_VERSION {
        out.push(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            spec.schema_version
        ));
    }
    if spec.dim == 0 {
        out.push("dim must be positive".into());
    }
    if spec.order == 0 {
        out.push("order must be positive".into());
    }
    if spec.maps.is_empty() {
        out.push("at least one map is required".into());
    }
    let d = spec.dim.max(1);
    for (j, map) in spec.maps.iter().enumerate() {
        if map.matrices.len() != spec.order {
            out.push(format!(
                "map {j}: {} matrices, expected order {}",
                map.matrices.len(),
                spec.order
            ));
            continue;
        }
        if map.offset.len() != spec.dim {
            out.push(format!(
                "map {j}: offset has {} entries, expected dim {}",
                map.offset.len(),
                spec.dim
            ));
            continue;
        }
        let mut bad_shape = false;
        for (i, m) in map.matrices.iter().enumerate() {
            if m.len() != d * d {
                out.push(format!(
                    "map {j}: matrix {i} has {} entries, expected {}",
                    m.len(),
                    d * d
                ));
                bad_shape = true;
            } else if m.iter().any(|c| !c.is_finite()) {
                out.push(format!("map {j}: matrix {i} has non-finite entries"));
                bad_shape = true;
            }
        }
        if map.offset.iter().any(|c| !c.is_finite()) {
            out.push(format!("map {j}: offset has non-finite entries"));
            bad_shape = true;
        }
        if bad_shape {
            continue;
        }
        let mut total = 0.0;
        let mut norms_ok = true;
        for m in &map.matrices {
            match spectral_norm(m, spec.dim) {
                Ok(a) => total += a,
                Err(e) => {
                    out.push(format!("map {j}: {e}"));
                    norms_ok = false;
                }
            }
        }
        if norms_ok && total >= 1.0 {
            out.push(format!(
                "map {j}: not contractive (sum of argument Lipschitz constants is {total})"
            ));
        }
    }
    if let Some(probs) = &spec.probs {
        if probs.len() != spec.maps.len() {
            out.push(format!(
                "{} probabilities for {} maps",
                probs.len(),
                spec.maps.len()
            ));
        }
        if probs.iter().any(|&q| !q.is_finite() || q <= 0.0) {
            out.push("probabilities must be strictly positive".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            out.push(format!("probabilities sum to {total}, expected 1"));
        }
    }
    out
}

impl SystemSpec {
    pub fn to_system(&self) -> anyhow::Result<GifsSystem> {
        let maps = self
            .maps
            .iter()
            .map(|m| MultiAffineMap::new(m.matrices.clone(), m.offset.clone()))
            .collect::<gifs_core::Result<Vec<_>>>()?;
        Ok(GifsSystem::new(maps)?)
    }

    pub fn to_gifsp(&self) -> anyhow::Result<GifsP> {
        let probs = self.probs.clone().ok_or_else(|| {
            anyhow::anyhow!("this command needs probabilities; add a `probs` array to the spec")
        })?;
        Ok(GifsP::new(self.to_system()?, probs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"schema_version":1,"dim":1,"order":1,"maps":[{"matrices":[[0.5]],"offset":[0.0]}]}"#
    }

    #[test]
    fn minimal_valid_spec() {
        let spec = parse_spec(minimal()).unwrap();
        let system = spec.to_system().unwrap();
        assert_eq!(system.n(), 1);
        assert!((system.maps()[0].arg_lips()[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn boundary_contraction_rejected() {
        let text = r#"{"schema_version":1,"dim":1,"order":2,
            "maps":[{"matrices":[[0.5],[0.5]],"offset":[0.0]}]}"#;
        let err = parse_spec(text).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("not contractive")));
    }

    #[test]
    fn bad_probs_rejected() {
        let text = r#"{"schema_version":1,"dim":1,"order":1,
            "maps":[{"matrices":[[0.5]],"offset":[0.0]},{"matrices":[[0.4]],"offset":[1.0]}],
            "probs":[0.6,0.5]}"#;
        let err = parse_spec(text).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("sum to 1.1")));
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"{"schema_version":3,"dim":1,"order":2,
            "maps":[{"matrices":[[0.6],[0.6]],"offset":[0.0,0.0]}],
            "probs":[0.5,0.6]}"#;
        let err = parse_spec(text).unwrap_err();
        assert!(err.violations.len() >= 3, "{:?}", err.violations);
    }

    #[test]
    fn round_trip() {
        let spec = SystemSpec {
            schema_version: 1,
            name: Some("averaging pair".into()),
            description: None,
            dim: 1,
            order: 2,
            maps: vec![
                MapSpec {
                    matrices: vec![vec![0.25], vec![0.25]],
                    offset: vec![0.0],
                },
                MapSpec {
                    matrices: vec![vec![0.25], vec![0.25]],
                    offset: vec![0.5],
                },
            ],
            probs: Some(vec![0.5, 0.5]),
        };
        let text = serialize_spec(&spec);
        let back = parse_spec(&text).unwrap();
        assert_eq!(spec, back);
    }
}
