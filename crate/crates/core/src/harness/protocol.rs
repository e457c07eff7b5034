//! Wire messages. One JSON document per line, UTF-8, `\n` terminated.
//! Non-finite decimals travel as `"NaN"`, `"Infinity"`, `"-Infinity"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::UnitSignature;
use crate::lang::Value;

pub const PROTOCOL_VERSION: &str = "contractflow-subject/1";

/// Harness → subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello { protocol: String },
    Call { call_id: String, unit: String, args: BTreeMap<String, Value> },
    Shutdown,
}

/// Subject → harness, first line after `hello`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloReply {
    #[serde(rename = "type")]
    pub kind: String,
    pub protocol: String,
    #[serde(default)]
    pub subject_id: Option<String>,
    pub units: Vec<UnitSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    #[serde(default)]
    pub message: String,
}

/// Subject → harness, one per `call`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallReply {
    Returned {
        call_id: String,
        #[serde(default)]
        result: Value,
        post_state: BTreeMap<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pre_state: Option<BTreeMap<String, Value>>,
    },
    Raised {
        call_id: String,
        error: ErrorBody,
    },
}

impl CallReply {
    pub fn call_id(&self) -> &str {
        match self {
            CallReply::Returned { call_id, .. } | CallReply::Raised { call_id, .. } => call_id,
        }
    }
}
