//! JSON experiment configuration and the builders it drives.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counterexample::{
    build_counterexample_field, synthesize_config, synthesize_config_with_xi,
};
use crate::error::{LabError, Result};
use crate::kernel::{JumpKernel, SupportPattern, Triplet};
use crate::scale::{BallPiece, ScaleField};
use crate::space::{FiniteMMSpace, SpaceKind, DEFAULT_POINT_CAP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    pub scale: ScaleSpec,
    pub kernel: KernelSpec,
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Cantor {
        xi: f64,
        axes: usize,
        level: u32,
        #[serde(default)]
        point_cap: Option<usize>,
    },
    Grid {
        dim: usize,
        side: usize,
        #[serde(default)]
        point_cap: Option<usize>,
    },
    TwoPoint {
        gap: f64,
    },
    Custom {
        coords: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub beta: BetaSpec,
    #[serde(default = "default_t0")]
    pub t0: f64,
}

fn default_t0() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    Constant {
        value: f64,
    },
    Table {
        values: Vec<f64>,
        beta1: f64,
        beta2: f64,
    },
    Piecewise {
        pieces: Vec<BallPiece>,
        default: f64,
        slope: f64,
    },
    /// The counterexample field for `epsilon` on a Cantor product; `xi`
    /// defaults to the space's ratio.
    Counterexample {
        epsilon: f64,
        #[serde(default)]
        xi: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub builder: KernelBuilder,
    /// Truncation radius for the comparison checks.
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelBuilder {
    Constant {
        value: f64,
    },
    NearestNeighbor {
        value: f64,
    },
    CantorAxis,
    Cylindrical,
    StableLike {
        c: f64,
    },
    /// Upper-half entries `i < j`, mirrored.
    Triplets {
        entries: Vec<Triplet>,
        #[serde(default = "default_pattern")]
        pattern: SupportPattern,
    },
}

fn default_pattern() -> SupportPattern {
    SupportPattern::Full
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Pass,
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    #[serde(default)]
    pub mode: Option<CheckMode>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub radius_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub time_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    Plotdata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("hk-lab-out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![
        OutputFormat::Csv,
        OutputFormat::Json,
        OutputFormat::Plotdata,
    ]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a config, reporting the path of the first offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON form (after overrides).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn build_space(&self) -> Result<FiniteMMSpace> {
        match &self.space {
            SpaceSpec::Cantor {
                xi,
                axes,
                level,
                point_cap,
            } => FiniteMMSpace::cantor_product(
                *xi,
                *axes,
                *level,
                point_cap.unwrap_or(DEFAULT_POINT_CAP),
            ),
            SpaceSpec::Grid {
                dim,
                side,
                point_cap,
            } => FiniteMMSpace::grid(*dim, *side, point_cap.unwrap_or(DEFAULT_POINT_CAP)),
            SpaceSpec::TwoPoint { gap } => FiniteMMSpace::two_point(*gap),
            SpaceSpec::Custom { coords, weights } => {
                FiniteMMSpace::custom(coords.clone(), weights.clone())
            }
        }
        .map_err(|e| at_path("space", e))
    }

    pub fn build_scale(&self, space: &FiniteMMSpace) -> Result<ScaleField> {
        let t0 = self.scale.t0;
        match &self.scale.beta {
            BetaSpec::Constant { value } => ScaleField::constant(space.len(), *value, t0),
            BetaSpec::Table {
                values,
                beta1,
                beta2,
            } => {
                if values.len() != space.len() {
                    return Err(config_error(
                        "scale.beta.values",
                        format!("{} values for {} points", values.len(), space.len()),
                    ));
                }
                ScaleField::from_table(values.clone(), *beta1, *beta2, t0)
            }
            BetaSpec::Piecewise {
                pieces,
                default,
                slope,
            } => ScaleField::piecewise_by_ball(space, pieces, *default, *slope, t0),
            BetaSpec::Counterexample { epsilon, xi } => {
                let xi = xi.or(match space.kind() {
                    SpaceKind::Cantor { xi, .. } => Some(*xi),
                    _ => None,
                });
                match xi {
                    Some(xi) => synthesize_config_with_xi(*epsilon, xi),
                    None => synthesize_config(*epsilon),
                }
                .and_then(|config| build_counterexample_field(&config, space, t0))
                .map(|field| field.scale)
            }
        }
        .map_err(|e| at_path("scale", e))
    }

    pub fn build_kernel(&self, space: &FiniteMMSpace, scale: &ScaleField) -> Result<JumpKernel> {
        let n = space.len();
        match &self.kernel.builder {
            KernelBuilder::Constant { value } => JumpKernel::constant(n, *value),
            KernelBuilder::NearestNeighbor { value } => JumpKernel::nearest_neighbor(space, *value),
            KernelBuilder::CantorAxis => JumpKernel::cantor_axis(space, scale),
            KernelBuilder::Cylindrical => JumpKernel::cylindrical(space, scale),
            KernelBuilder::StableLike { c } => JumpKernel::stable_like(space, scale, *c),
            KernelBuilder::Triplets { entries, pattern } => {
                JumpKernel::from_triplets(n, entries, *pattern)
            }
        }
        .map_err(|e| at_path("kernel.builder", e))
    }
}

/// Attaches a config path to builder errors; point-cap errors pass through.
fn at_path(path: &str, e: LabError) -> LabError {
    match e {
        LabError::PointCap { .. } | LabError::Config { .. } => e,
        other => config_error(path, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"{
        "space": {"kind": "two_point", "gap": 1.0},
        "scale": {"beta": {"kind": "constant", "value": 1.0}},
        "kernel": {"builder": {"kind": "constant", "value": 1.0}},
        "checks": [{"name": "heat_kernel_check"}]
    }"#;

    #[test]
    fn parses_smoke_config() {
        let c = ExperimentConfig::from_json(SMOKE).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.output.formats.len(), 3);
        let s = c.build_space().unwrap();
        let scale = c.build_scale(&s).unwrap();
        let k = c.build_kernel(&s, &scale).unwrap();
        assert_eq!(k.j(0, 1), 1.0);
        assert_eq!(c.hash(), ExperimentConfig::from_json(SMOKE).unwrap().hash());
    }

    #[test]
    fn unknown_field_reports_path() {
        let bad = SMOKE.replace(r#""gap": 1.0"#, r#""gap": 1.0, "colour": 3"#);
        match ExperimentConfig::from_json(&bad) {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "space"),
            other => panic!("{other:?}"),
        }
        let bad = SMOKE.replace(r#""value": 1.0}}"#, r#""value": "x"}}"#);
        match ExperimentConfig::from_json(&bad) {
            Err(LabError::Config { path, .. }) => assert!(path.starts_with("scale.beta"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn point_cap_passes_through() {
        let text = r#"{
            "space": {"kind": "cantor", "xi": 0.5, "axes": 3, "level": 6, "point_cap": 100},
            "scale": {"beta": {"kind": "constant", "value": 1.0}},
            "kernel": {"builder": {"kind": "cantor_axis"}},
            "checks": []
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(c.build_space(), Err(LabError::PointCap { .. })));
    }

    #[test]
    fn bad_table_length() {
        let text = SMOKE.replacen(
            r#"{"kind": "constant", "value": 1.0}"#,
            r#"{"kind": "table", "values": [1.0], "beta1": 1.0, "beta2": 1.0}"#,
            1,
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        let s = c.build_space().unwrap();
        assert!(matches!(c.build_scale(&s), Err(LabError::Config { .. })));
    }

    #[test]
    fn counterexample_field_takes_the_space_ratio() {
        let text = r#"{
            "space": {"kind": "cantor", "xi": 0.3333333333333333, "axes": 2, "level": 2},
            "scale": {"beta": {"kind": "counterexample", "epsilon": 4.0}, "t0": 10.0},
            "kernel": {"builder": {"kind": "cantor_axis"}},
            "checks": []
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let s = c.build_space().unwrap();
        let scale = c.build_scale(&s).unwrap();
        assert!((scale.beta2() - 1.9814).abs() < 1e-4);
        let bad = text.replace(r#""epsilon": 4.0}"#, r#""epsilon": 4.0, "xi": 0.5}"#);
        let c = ExperimentConfig::from_json(&bad).unwrap();
        match c.build_scale(&s) {
            Err(LabError::Config { path, .. }) => assert_eq!(path, "scale"),
            other => panic!("{other:?}"),
        }
    }
}
