//! JSON formats for networks, problem instances and outputs.
//!
//! Outputs are built as [`serde_json::Value`] trees, whose object maps are
//! ordered, so keys come out sorted; floats use shortest round-trip
//! formatting. Every output carries a `"schema"` tag.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hyperrect::HyperRectangle;
use crate::nn::{Activation, AffineMap, Layer, NeuralNetwork, ShallowNN};

pub const SCHEMA: &str = "barrier-cert/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindFile {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    kind: KindFile,
}

/// On-disk network: `{"layers": [{"W": [[..]], "b": [..], "kind": "relu"|"linear"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    layers: Vec<LayerFile>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<NeuralNetwork> {
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let map = AffineMap::new(l.w, l.b)
                    .map_err(|e| Error::InvalidNetwork(format!("layer {k}: {e}")))?;
                let kind = match l.kind {
                    KindFile::Relu => Activation::Relu,
                    KindFile::Linear => Activation::Linear,
                };
                Ok(Layer::new(map, kind))
            })
            .collect::<Result<Vec<_>>>()?;
        NeuralNetwork::new(layers)
    }
}

pub fn parse_network(text: &str) -> Result<NeuralNetwork> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidNetwork(format!("malformed network JSON: {e}")))?;
    file.into_network()
}

pub fn load_network(path: &Path) -> Result<NeuralNetwork> {
    parse_network(&read(path)?)
}

pub fn load_shallow(path: &Path) -> Result<ShallowNN> {
    ShallowNN::try_from(load_network(path)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

pub fn network_to_value(net: &NeuralNetwork) -> Value {
    let layers: Vec<Value> = net
        .layers()
        .iter()
        .map(|l| {
            json!({
                "W": l.map.rows(),
                "b": l.map.bias(),
                "kind": match l.kind {
                    Activation::Relu => "relu",
                    Activation::Linear => "linear",
                },
            })
        })
        .collect();
    json!({ "schema": SCHEMA, "layers": layers })
}

pub fn box_to_value(b: &HyperRectangle) -> Value {
    json!({ "lo": b.lo(), "hi": b.hi() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxFile {
    pub fn into_box(self) -> Result<HyperRectangle> {
        HyperRectangle::new(self.lo, self.hi)
    }
}

/// A network given either inline or as a path relative to the problem file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NetworkRef {
    Path(PathBuf),
    Inline(NetworkFile),
}

impl NetworkRef {
    fn resolve(self, base: &Path) -> Result<NeuralNetwork> {
        match self {
            NetworkRef::Path(p) => load_network(&base.join(p)),
            NetworkRef::Inline(f) => f.into_network(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LipschitzFile {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
struct ProblemFile {
    dynamics: NetworkRef,
    barrier: NetworkRef,
    safe_set: BoxFile,
    eps: f64,
    x0: Vec<f64>,
    #[serde(default)]
    lipschitz: Option<LipschitzFile>,
}

/// Lipschitz bound for the dynamics in the max norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    Auto,
    Given(f64),
}

/// A fully loaded certification problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub dynamics: NeuralNetwork,
    pub barrier: ShallowNN,
    pub safe_set: HyperRectangle,
    pub eps: f64,
    pub x0: Vec<f64>,
    pub lipschitz: Lipschitz,
}

impl ProblemInstance {
    pub fn validate(&self) -> Result<()> {
        let n = self.safe_set.dim();
        if self.dynamics.input_dim() != n || self.dynamics.output_dim() != n {
            return Err(Error::Dimension(format!(
                "dynamics map {}→{}, safe set has dimension {n}",
                self.dynamics.input_dim(),
                self.dynamics.output_dim()
            )));
        }
        if self.barrier.input_dim() != n {
            return Err(Error::Dimension(format!(
                "barrier takes {} inputs, safe set has dimension {n}",
                self.barrier.input_dim()
            )));
        }
        if self.x0.len() != n || !self.safe_set.contains(&self.x0) {
            return Err(Error::InvalidInput("x0 must lie in the safe set".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if let Lipschitz::Given(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid Lipschitz bound {l}")));
            }
        }
        Ok(())
    }
}

/// Parse a problem file; relative network paths resolve against `base`.
pub fn parse_problem(text: &str, base: &Path) -> Result<ProblemInstance> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("malformed problem JSON: {e}")))?;
    let lipschitz = match file.lipschitz {
        None => Lipschitz::Auto,
        Some(LipschitzFile::Value(v)) => Lipschitz::Given(v),
        Some(LipschitzFile::Keyword(k)) if k == "auto" => Lipschitz::Auto,
        Some(LipschitzFile::Keyword(k)) => {
            return Err(Error::InvalidInput(format!("lipschitz must be a number or \"auto\", got {k:?}")))
        }
    };
    let p = ProblemInstance {
        dynamics: file.dynamics.resolve(base)?,
        barrier: ShallowNN::try_from(file.barrier.resolve(base)?)?,
        safe_set: file.safe_set.into_box()?,
        eps: file.eps,
        x0: file.x0,
        lipschitz,
    };
    p.validate()?;
    Ok(p)
}

pub fn load_problem(path: &Path) -> Result<ProblemInstance> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_problem(&read(path)?, base)
}

#[derive(Debug, Clone, Deserialize)]
struct SubLevelProblemFile {
    barrier: NetworkRef,
    x0: Vec<f64>,
    next_state: Vec<f64>,
    lipschitz: f64,
    x_partial: Vec<BoxFile>,
}

/// A zero-sublevel check without reference dynamics: the decrease region
/// is given as boxes, and the successor of a seed `x` is `x + next_state`.
#[derive(Debug, Clone)]
pub struct SubLevelProblem {
    pub barrier: ShallowNN,
    pub x0: Vec<f64>,
    /// Coordinate-wise offset from a state to its successor.
    pub next_state: Vec<f64>,
    pub lipschitz: f64,
    pub x_partial: Vec<HyperRectangle>,
}

impl SubLevelProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.barrier.input_dim();
        if self.x0.len() != n || self.next_state.len() != n {
            return Err(Error::Dimension(format!(
                "barrier takes {n} inputs; x0 has {} and next_state {} entries",
                self.x0.len(),
                self.next_state.len()
            )));
        }
        if self.x_partial.is_empty() {
            return Err(Error::InvalidInput("x_partial must hold at least one box".into()));
        }
        if let Some(b) = self.x_partial.iter().find(|b| b.dim() != n) {
            return Err(Error::Dimension(format!("x_partial box of dimension {}, barrier takes {n}", b.dim())));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid Lipschitz bound {}", self.lipschitz)));
        }
        if self.x0.iter().chain(&self.next_state).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("x0 and next_state must be finite".into()));
        }
        Ok(())
    }

    /// Successor of `x` under the synthetic one-step map.
    pub fn successor(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.next_state).map(|(a, d)| a + d).collect()
    }
}

pub fn parse_sublevel_problem(text: &str, base: &Path) -> Result<SubLevelProblem> {
    let file: SubLevelProblemFile = serde_json::from_str(text)
        .map_err(|e| Error::InvalidInput(format!("malformed sublevel problem JSON: {e}")))?;
    let p = SubLevelProblem {
        barrier: ShallowNN::try_from(file.barrier.resolve(base)?)?,
        x0: file.x0,
        next_state: file.next_state,
        lipschitz: file.lipschitz,
        x_partial: file.x_partial.into_iter().map(BoxFile::into_box).collect::<Result<_>>()?,
    };
    p.validate()?;
    Ok(p)
}

pub fn load_sublevel_problem(path: &Path) -> Result<SubLevelProblem> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_sublevel_problem(&read(path)?, base)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialize");
    s.push('\n');
    s
}
