//! Model files: `{kind, params, J, beta, h, alpha}`.
//!
//! `h` is either one number (a uniform field) or one value per site.

use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};

use ising_lsi::{build_coupling, CouplingMatrix, Lattice, ModelSpec};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FieldSpec {
    Uniform(f64),
    PerSite(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
    #[serde(rename = "J", default = "unit")]
    coupling: f64,
    beta: Option<f64>,
    h: Option<FieldSpec>,
    alpha: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

/// A parsed model together with its normalised coupling matrix.
pub struct Model {
    pub spec: ModelSpec,
    pub coupling: CouplingMatrix,
}

impl Model {
    pub fn label(&self) -> String {
        self.spec.lattice.label()
    }

    pub fn sites(&self) -> usize {
        self.spec.sites()
    }
}

pub fn parse(text: &str, beta: Option<f64>, alpha: Option<f64>) -> Result<Model, CliError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("model file: {e}")))?;
    let mut object = file.params;
    object.insert("kind".into(), Value::String(file.kind.to_lowercase()));
    let lattice: Lattice = serde_json::from_value(Value::Object(object))
        .map_err(|e| CliError::Input(format!("model lattice: {e}")))?;
    let n = lattice.sites();
    let beta = beta
        .or(file.beta)
        .ok_or_else(|| CliError::Input("beta is required (model file or --beta)".into()))?;
    let field = match file.h {
        None => vec![0.0; n],
        Some(FieldSpec::Uniform(h)) => vec![h; n],
        Some(FieldSpec::PerSite(h)) => h,
    };
    let mut spec = ModelSpec::new(lattice, file.coupling, beta).with_field(field);
    if let Some(a) = alpha.or(file.alpha) {
        spec = spec.with_alpha(a);
    }
    let coupling = build_coupling(&spec)?;
    Ok(Model { spec, coupling })
}

pub fn load(path: &Path, beta: Option<f64>, alpha: Option<f64>) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, beta, alpha)
}
