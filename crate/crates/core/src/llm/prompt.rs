use std::collections::BTreeSet;

use super::{LlmError, PromptRequest, Purpose};
use crate::lang::ContractClause;

pub const FORMAT_REMINDER: &str =
    "Reminder: answer with exactly one JSON document in the requested shape. Prose outside it is ignored.";

const DECOMPOSE_INTENT: &str = r#"You are planning the implementation of a software request.

Request:
{{intent}}

Split the request into an ordered list of small tasks. Each task produces one code unit: a constructor, a method, or a module. Give every task a short title, a one-sentence description and its unit kind. When the unit's signature is clear, include it.

Reply with one JSON document of this shape:
{"tasks": [{"key": "short-handle", "title": "...", "description": "...", "unit_kind": "constructor | method | module",
  "unit": {"unit_name": "Type.name", "unit_kind": "constructor | method",
           "params": [{"name": "...", "type": "int | decimal | text | bool"}],
           "observable_fields": [{"name": "...", "type": "int | decimal | text | bool"}]}}]}
"#;

const GENERATE_CONTRACTS: &str = r#"Write design-by-contract clauses for one code unit.

Unit: {{task_title}}
Signature: {{signature}}

Give preconditions (what callers must guarantee), postconditions (what holds after a successful return) and invariants (properties of the object's fields that always hold).
Expressions use C-style operators: && || ! == != < <= > >= + - * /. Refer to parameters by name, to fields as this.name, to the return value as result, and to a value on entry as old(expr). The literal null is available. Java-style checks such as x != null, x.isEmpty(), Double.isNaN(x) and Double.isInfinite(x) are accepted.

Reply with one JSON document of this shape:
{"clauses": [{"kind": "precondition | postcondition | invariant", "element": "parameter or field name", "contract_text": "expression"}]}
"#;

const GENERATE_CODE: &str = r#"Implement one code unit so that it satisfies every contract listed below.

Unit: {{task_title}}
Signature: {{signature}}

Approved contracts, one per line as `kind element: expression`:
```contracts
{{contracts}}
```

A call that violates a precondition must be rejected with an error of kind illegal_argument. After a successful call every postcondition and invariant must hold.

Reply with one JSON document of this shape:
{"subject": {"subject_id": "...", "launch_command": ["program", "arg"], "units": [...]}, "source": "full source text"}
The launched program must speak the contractflow-subject/1 line protocol on stdin and stdout.
"#;

const REPAIR_CODE: &str = r#"The implementation of one code unit failed runtime contract checking. Produce a corrected implementation.

Unit: {{task_title}}
Signature: {{signature}}

Approved contracts, one per line as `kind element: expression`:
```contracts
{{contracts}}
```

Failures observed when running the contract-derived tests:
```violations
{{violations}}
```

A call that violates a precondition must be rejected with an error of kind illegal_argument. After a successful call every postcondition and invariant must hold.

Reply with one JSON document of this shape:
{"subject": {"subject_id": "...", "launch_command": ["program", "arg"], "units": [...]}, "source": "full source text"}
The launched program must speak the contractflow-subject/1 line protocol on stdin and stdout.
"#;

pub fn template(template_id: &str) -> Option<&'static str> {
    match Purpose::parse(template_id)? {
        Purpose::DecomposeIntent => Some(DECOMPOSE_INTENT),
        Purpose::GenerateContracts => Some(GENERATE_CONTRACTS),
        Purpose::GenerateCode => Some(GENERATE_CODE),
        Purpose::RepairCode => Some(REPAIR_CODE),
    }
}

/// Lines of `kind element: normalized expression`, in the given order.
pub fn contracts_block(clauses: &[ContractClause]) -> String {
    clauses
        .iter()
        .map(|c| format!("{} {}: {}", c.kind, c.element, c.normalized_text()))
        .collect::<Vec<_>>()
        .join("\n")
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = after[..close].trim();
        let is_ident = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if is_ident {
            out.push(Piece::Text(&rest[..open]));
            out.push(Piece::Slot(name));
            rest = &after[close + 2..];
        } else {
            out.push(Piece::Text(&rest[..open + 2]));
            rest = after;
        }
    }
    out.push(Piece::Text(rest));
    out
}

pub fn render_prompt(request: &PromptRequest) -> Result<String, LlmError> {
    let template = template(&request.template_id).ok_or_else(|| LlmError::UnknownTemplate(request.template_id.clone()))?;
    let pieces = pieces(template);
    let mut missing: BTreeSet<String> = pieces
        .iter()
        .filter_map(|p| match p {
            Piece::Slot(name) if !request.variables.contains_key(*name) => Some(name.to_string()),
            _ => None,
        })
        .collect();
    if request.purpose == Purpose::RepairCode
        && request.variables.get("violations").is_none_or(|v| v.trim().is_empty())
    {
        missing.insert("violations".into());
    }
    if !missing.is_empty() {
        return Err(LlmError::MissingVariable(missing.into_iter().collect()));
    }
    let mut out = String::with_capacity(template.len());
    for piece in pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => out.push_str(&request.variables[name]),
        }
    }
    Ok(out)
}
