//! Executes subjects under contract over a line-delimited JSON protocol on
//! the subprocess's stdin/stdout and records what each call did.

pub mod protocol;
pub mod reference;
mod session;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{SemanticType, Value};

pub use session::{Session, DEFAULT_CALL_DEADLINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Constructor,
    Method,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: SemanticType) -> Self {
        Param { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSignature {
    pub unit_name: String,
    pub unit_kind: UnitKind,
    pub params: Vec<Param>,
    #[serde(default)]
    pub observable_fields: Vec<Param>,
}

impl UnitSignature {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Parameter and observable-field names must each be unique.
    pub fn validate(&self) -> Result<(), String> {
        if self.unit_name.trim().is_empty() {
            return Err("unit name is empty".into());
        }
        for (label, list) in [("parameter", &self.params), ("observable field", &self.observable_fields)] {
            let mut seen = std::collections::BTreeSet::new();
            for p in list {
                if !seen.insert(p.name.as_str()) {
                    return Err(format!("duplicate {label} `{}` in `{}`", p.name, self.unit_name));
                }
            }
        }
        Ok(())
    }
}

/// How to launch a subject and what it exposes.
///
/// A `launch_command` whose first element is [`reference::REFERENCE_SUBJECT`]
/// is resolved to the bundled reference executable at spawn time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectDescriptor {
    pub subject_id: String,
    pub launch_command: Vec<String>,
    pub units: Vec<UnitSignature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_tag: Option<String>,
}

impl SubjectDescriptor {
    pub fn unit(&self, name: &str) -> Option<&UnitSignature> {
        self.units.iter().find(|u| u.unit_name == name)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.launch_command.is_empty() {
            return Err("launch command is empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for unit in &self.units {
            unit.validate()?;
            if !seen.insert(unit.unit_name.as_str()) {
                return Err(format!("duplicate unit `{}`", unit.unit_name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallOutcome {
    Returned { result: Value, post_state: BTreeMap<String, Value> },
    Raised { error_kind: String, message: String },
}

impl CallOutcome {
    pub fn is_timeout(&self) -> bool {
        matches!(self, CallOutcome::Raised { error_kind, .. } if error_kind == TIMEOUT_ERROR_KIND)
    }
}

pub const TIMEOUT_ERROR_KIND: &str = "timeout";

/// The evidence one execution of a unit leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: String,
    pub unit_name: String,
    pub args: BTreeMap<String, Value>,
    #[serde(default)]
    pub pre_state: BTreeMap<String, Value>,
    pub outcome: CallOutcome,
    pub duration_ms: u64,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("failed to launch `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("subject session is dead: {0}")]
    SessionDead(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("bad arguments for `{unit}`: {detail}")]
    BadArguments { unit: String, detail: String },
    #[error("invalid subject descriptor: {0}")]
    InvalidDescriptor(String),
}
