//! Wire types and schema validation for the four model endpoints.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::DomainLabel;
use crate::text::Lang;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Classify,
    Ner,
    Extract,
    Entail,
}

impl Endpoint {
    pub const ALL: [Endpoint; 4] = [Endpoint::Classify, Endpoint::Ner, Endpoint::Extract, Endpoint::Entail];

    pub fn path(self) -> &'static str {
        match self {
            Endpoint::Classify => "/v1/classify",
            Endpoint::Ner => "/v1/ner",
            Endpoint::Extract => "/v1/extract",
            Endpoint::Entail => "/v1/entail",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Classify => "classify",
            Endpoint::Ner => "ner",
            Endpoint::Extract => "extract",
            Endpoint::Entail => "entail",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
    pub lang: Lang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub domain: DomainLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerRequest {
    pub text: String,
    pub lang: Lang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerMention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerResponse {
    pub mentions: Vec<NerMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub instruction: String,
    pub input: String,
    pub lang: Lang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailRequest {
    pub premise: String,
    pub hypothesis: String,
    pub lang: Lang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailResponse {
    pub entailment: f64,
}

/// Body of a 4xx reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("field `{field}`: {message}")]
pub struct SchemaViolation {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Copy)]
enum Kind {
    Str,
    Lang,
    Domain,
    Index,
    Score,
    Mentions,
}

const CLASSIFY_REQ: &[(&str, Kind)] = &[("text", Kind::Str), ("lang", Kind::Lang)];
const CLASSIFY_RESP: &[(&str, Kind)] = &[("domain", Kind::Domain), ("confidence", Kind::Score)];
const NER_REQ: &[(&str, Kind)] = &[("text", Kind::Str), ("lang", Kind::Lang)];
const NER_RESP: &[(&str, Kind)] = &[("mentions", Kind::Mentions)];
const MENTION: &[(&str, Kind)] = &[("start", Kind::Index), ("end", Kind::Index), ("surface", Kind::Str)];
const EXTRACT_REQ: &[(&str, Kind)] = &[("instruction", Kind::Str), ("input", Kind::Str), ("lang", Kind::Lang)];
const EXTRACT_RESP: &[(&str, Kind)] = &[("output", Kind::Str)];
const ENTAIL_REQ: &[(&str, Kind)] = &[("premise", Kind::Str), ("hypothesis", Kind::Str), ("lang", Kind::Lang)];
const ENTAIL_RESP: &[(&str, Kind)] = &[("entailment", Kind::Score)];

fn violation(field: &str, message: impl Into<String>) -> SchemaViolation {
    SchemaViolation { field: field.to_string(), message: message.into() }
}

fn check_object(v: &Value, fields: &[(&str, Kind)], prefix: &str) -> Result<(), SchemaViolation> {
    let obj = v
        .as_object()
        .ok_or_else(|| violation(if prefix.is_empty() { "$" } else { prefix }, "expected an object"))?;
    for &(name, kind) in fields {
        let path = if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        let value = obj.get(name).ok_or_else(|| violation(&path, "missing required field"))?;
        check_value(value, kind, &path)?;
    }
    Ok(())
}

fn check_value(v: &Value, kind: Kind, path: &str) -> Result<(), SchemaViolation> {
    match kind {
        Kind::Str => v.as_str().map(|_| ()).ok_or_else(|| violation(path, "expected a string")),
        Kind::Lang => {
            let s = v.as_str().ok_or_else(|| violation(path, "expected a string"))?;
            s.parse::<Lang>().map(|_| ()).map_err(|e| violation(path, e.to_string()))
        }
        Kind::Domain => {
            let s = v.as_str().ok_or_else(|| violation(path, "expected a string"))?;
            s.parse::<DomainLabel>().map(|_| ()).map_err(|e| violation(path, e.to_string()))
        }
        Kind::Index => v.as_u64().map(|_| ()).ok_or_else(|| violation(path, "expected a non-negative integer")),
        Kind::Score => {
            let x = v.as_f64().ok_or_else(|| violation(path, "expected a number"))?;
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(violation(path, format!("score {x} outside [0, 1]")))
            }
        }
        Kind::Mentions => {
            let arr = v.as_array().ok_or_else(|| violation(path, "expected an array"))?;
            for (i, m) in arr.iter().enumerate() {
                let p = format!("{path}[{i}]");
                check_object(m, MENTION, &p)?;
                let (s, e) = (m["start"].as_u64().unwrap_or(0), m["end"].as_u64().unwrap_or(0));
                if s >= e {
                    return Err(violation(&format!("{p}.end"), "end must be greater than start"));
                }
            }
            Ok(())
        }
    }
}

pub fn validate_request(endpoint: Endpoint, v: &Value) -> Result<(), SchemaViolation> {
    let fields = match endpoint {
        Endpoint::Classify => CLASSIFY_REQ,
        Endpoint::Ner => NER_REQ,
        Endpoint::Extract => EXTRACT_REQ,
        Endpoint::Entail => ENTAIL_REQ,
    };
    check_object(v, fields, "")
}

pub fn validate_response(endpoint: Endpoint, v: &Value) -> Result<(), SchemaViolation> {
    let fields = match endpoint {
        Endpoint::Classify => CLASSIFY_RESP,
        Endpoint::Ner => NER_RESP,
        Endpoint::Extract => EXTRACT_RESP,
        Endpoint::Entail => ENTAIL_RESP,
    };
    check_object(v, fields, "")
}
