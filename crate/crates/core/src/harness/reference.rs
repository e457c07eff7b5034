//! The bundled `Account` subject: a constructor that stores
//! `accountNumber`, `pin` and `balance`. The buggy variant stores whatever it
//! is given; the fixed one rejects inputs the contracts rule out.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::protocol::{CallReply, ErrorBody, HelloReply, Request, PROTOCOL_VERSION};
use super::{Param, SubjectDescriptor, UnitKind, UnitSignature};
use crate::lang::{SemanticType, Value};

/// Placeholder accepted as `launch_command[0]` for the bundled executable.
pub const REFERENCE_SUBJECT: &str = "@reference-subject";
pub const REFERENCE_EXE_ENV: &str = "CONTRACTFLOW_REFERENCE_SUBJECT";
pub const EXE_NAME: &str = "account-subject";
pub const ACCOUNT_NEW: &str = "Account.new";
pub const ILLEGAL_ARGUMENT: &str = "illegal_argument";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Buggy,
    Fixed,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Buggy => "buggy",
            Variant::Fixed => "fixed",
        }
    }
}

pub fn account_signature() -> UnitSignature {
    let fields = vec![
        Param::new("accountNumber", SemanticType::Text),
        Param::new("pin", SemanticType::Int),
        Param::new("balance", SemanticType::Decimal),
    ];
    UnitSignature {
        unit_name: ACCOUNT_NEW.into(),
        unit_kind: UnitKind::Constructor,
        params: fields.clone(),
        observable_fields: fields,
    }
}

pub fn reference_subject(variant: Variant) -> SubjectDescriptor {
    SubjectDescriptor {
        subject_id: format!("reference-account-{}", variant.as_str()),
        launch_command: vec![REFERENCE_SUBJECT.into(), "--variant".into(), variant.as_str().into()],
        units: vec![account_signature()],
        variant_tag: Some(variant.as_str().into()),
    }
}

/// Finds the `account-subject` executable: the env override, then next to
/// the running binary, then one directory up (test binaries live in
/// `target/<profile>/deps`), then `PATH`.
pub fn locate_executable() -> PathBuf {
    if let Some(path) = std::env::var_os(REFERENCE_EXE_ENV) {
        return PathBuf::from(path);
    }
    let file = format!("{EXE_NAME}{}", std::env::consts::EXE_SUFFIX);
    if let Ok(exe) = std::env::current_exe() {
        for dir in exe.ancestors().skip(1).take(2) {
            let candidate = dir.join(&file);
            if candidate.is_file() {
                return candidate;
            }
        }
    }
    PathBuf::from(file)
}

pub(crate) fn resolve_launch_command(argv: &[String]) -> Vec<String> {
    match argv.split_first() {
        Some((first, rest)) if first == REFERENCE_SUBJECT => {
            let mut out = vec![locate_executable().to_string_lossy().into_owned()];
            out.extend(rest.iter().cloned());
            out
        }
        _ => argv.to_vec(),
    }
}

/// Account constructor semantics, independent of the wire.
pub fn construct(
    variant: Variant,
    args: &BTreeMap<String, Value>,
) -> Result<BTreeMap<String, Value>, String> {
    let account_number = args.get("accountNumber").cloned().unwrap_or(Value::Null);
    let pin = args.get("pin").cloned().unwrap_or(Value::Null);
    let balance = args.get("balance").cloned().unwrap_or(Value::Null);
    if variant == Variant::Fixed {
        match &account_number {
            Value::Text(t) if !t.is_empty() => {}
            _ => return Err("account number must be non-empty".into()),
        }
        match pin {
            Value::Int(p) if (0..=9999).contains(&p) => {}
            _ => return Err("pin must be between 0 and 9999".into()),
        }
        let amount = match balance {
            Value::Decimal(d) => d,
            Value::Int(n) => n as f64,
            _ => return Err("balance must be a number".into()),
        };
        if !amount.is_finite() {
            return Err("balance must be finite".into());
        }
        if amount < 0.0 {
            return Err("balance must be non-negative".into());
        }
    }
    Ok(BTreeMap::from([
        ("accountNumber".to_string(), account_number),
        ("pin".to_string(), pin),
        ("balance".to_string(), balance),
    ]))
}

/// Serves the subject protocol until `shutdown` or end of input.
pub fn serve(variant: Variant, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    let signature = account_signature();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("account-subject: unreadable request: {e}");
                continue;
            }
        };
        let reply = match request {
            Request::Shutdown => return Ok(()),
            Request::Hello { protocol } => {
                if protocol != PROTOCOL_VERSION {
                    eprintln!("account-subject: harness speaks {protocol}");
                }
                serde_json::to_string(&HelloReply {
                    kind: "hello".into(),
                    protocol: PROTOCOL_VERSION.into(),
                    subject_id: Some(format!("reference-account-{}", variant.as_str())),
                    units: vec![signature.clone()],
                })
            }
            Request::Call { call_id, unit, args } => {
                let reply = if unit != signature.unit_name {
                    CallReply::Raised {
                        call_id,
                        error: ErrorBody { kind: "unknown_unit".into(), message: unit },
                    }
                } else {
                    match construct(variant, &args) {
                        Ok(post_state) => {
                            CallReply::Returned { call_id, result: Value::Null, post_state, pre_state: None }
                        }
                        Err(message) => CallReply::Raised {
                            call_id,
                            error: ErrorBody { kind: ILLEGAL_ARGUMENT.into(), message },
                        },
                    }
                };
                serde_json::to_string(&reply)
            }
        }
        .expect("replies serialize");
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(number: Value, pin: i64, balance: f64) -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("accountNumber".to_string(), number),
            ("pin".to_string(), Value::Int(pin)),
            ("balance".to_string(), Value::Decimal(balance)),
        ])
    }

    #[test]
    fn fixed_rejects_each_invalid_family() {
        let ok = Value::Text("ACC-1".into());
        let families = [
            args(Value::Text(String::new()), 1, 1.0),
            args(Value::Null, 1, 1.0),
            args(ok.clone(), -1, 1.0),
            args(ok.clone(), 10000, 1.0),
            args(ok.clone(), 1, -5.0),
            args(ok.clone(), 1, f64::NAN),
            args(ok.clone(), 1, f64::INFINITY),
            args(ok.clone(), 1, f64::NEG_INFINITY),
        ];
        for a in &families {
            assert!(construct(Variant::Fixed, a).is_err(), "{a:?}");
            assert!(construct(Variant::Buggy, a).is_ok(), "{a:?}");
        }
        let stored = construct(Variant::Fixed, &args(ok, 9999, 0.0)).unwrap();
        assert_eq!(stored["pin"], Value::Int(9999));
    }

    #[test]
    fn serve_speaks_the_protocol() {
        let input = concat!(
            r#"{"type":"hello","protocol":"contractflow-subject/1"}"#, "\n",
            r#"{"type":"call","call_id":"c1","unit":"Account.new","args":{"accountNumber":"A","pin":1,"balance":"NaN"}}"#, "\n",
            r#"{"type":"shutdown"}"#, "\n",
            r#"{"type":"call","call_id":"c2","unit":"Account.new","args":{}}"#, "\n",
        );
        let mut out = Vec::new();
        serve(Variant::Fixed, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(r#"{"type":"hello""#));
        let reply: CallReply = serde_json::from_str(lines[1]).unwrap();
        assert!(matches!(reply, CallReply::Raised { ref error, .. } if error.kind == ILLEGAL_ARGUMENT));
    }
}
