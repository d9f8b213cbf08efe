//! Evaluator interface and its line-delimited wire format.
//!
//! An external evaluator is started once per candidate. It receives one JSON
//! request line on stdin and answers with one JSON line on stdout:
//!
//! ```text
//! → {"run_id":"run-7","candidate_id":12,"generation":0,"budget_seconds":30.0,
//!    "params":{"lr_e0":0.0031,...},"genotype":[0.41,...]}
//! ← {"objective":0.0123}
//! ← {"error":"diverged"}
//! ```
//!
//! `budget_seconds` is `null` when no budget applies. `genotype` carries the
//! unit-cube coordinates behind `params`, so evaluators that work on the
//! genotype do not need to invert rounded parameters. The process must exit
//! with status 0 for the objective to count.

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Named values in dimension order, serialized as a JSON object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedValues(pub Vec<(String, f64)>);

impl NamedValues {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl From<Vec<(String, f64)>> for NamedValues {
    fn from(v: Vec<(String, f64)>) -> Self {
        Self(v)
    }
}

impl Serialize for NamedValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NamedValues {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = NamedValues;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map of parameter names to numbers")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    out.push((k, v));
                }
                Ok(NamedValues(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

/// One evaluation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub run_id: String,
    pub candidate_id: u64,
    pub generation: u64,
    pub budget_seconds: Option<f64>,
    pub params: NamedValues,
    pub genotype: Vec<f64>,
}

impl EvalRequest {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(line.trim_end()).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}

/// Result of one evaluation as seen by the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    Ok(f64),
    Failed(String),
    Timeout,
}

/// Anything that can score a candidate. Implementations are called
/// concurrently from several threads.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, request: &EvalRequest) -> EvalOutcome;
}

impl<F> Evaluator for F
where
    F: Fn(&EvalRequest) -> EvalOutcome + Send + Sync,
{
    fn evaluate(&self, request: &EvalRequest) -> EvalOutcome {
        self(request)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("objective is not a finite number")]
    NonFinite,
    #[error("response must contain exactly one of 'objective' or 'error'")]
    Shape,
}

/// Evaluator answer on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalResponse {
    Objective(f64),
    Error(String),
}

impl EvalResponse {
    pub fn to_line(&self) -> String {
        match self {
            EvalResponse::Objective(v) => serde_json::json!({ "objective": v }).to_string(),
            EvalResponse::Error(e) => serde_json::json!({ "error": e }).to_string(),
        }
    }

    pub fn from_line(line: &str) -> Result<Self, ProtocolError> {
        let value: serde_json::Value =
            serde_json::from_str(line.trim_end()).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let obj = value.as_object().ok_or(ProtocolError::Shape)?;
        match (obj.get("objective"), obj.get("error")) {
            (Some(v), None) => {
                let f = v.as_f64().ok_or(ProtocolError::NonFinite)?;
                if f.is_finite() {
                    Ok(EvalResponse::Objective(f))
                } else {
                    Err(ProtocolError::NonFinite)
                }
            }
            (None, Some(e)) => Ok(EvalResponse::Error(
                e.as_str().map(str::to_string).unwrap_or_else(|| e.to_string()),
            )),
            _ => Err(ProtocolError::Shape),
        }
    }
}
