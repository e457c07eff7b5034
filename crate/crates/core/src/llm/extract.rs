use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use super::{LlmError, Purpose};
use crate::harness::{SubjectDescriptor, UnitSignature};
use crate::lang::{normalize, ClauseKind, Dialect};
use crate::registry::ClauseDraft;
use crate::trace::{TaskDraft, TaskUnitKind};

/// A clause as extracted: `contract_text` is normalized, `source_text` is
/// what the model wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedClause {
    pub kind: ClauseKind,
    pub element: String,
    pub contract_text: String,
    pub source_text: String,
}

impl ExtractedClause {
    /// The draft to propose; keeps the model's own wording as source text.
    pub fn draft(&self) -> ClauseDraft {
        ClauseDraft::new(self.kind, &self.element, &self.source_text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredPayload {
    TaskList(Vec<TaskDraft>),
    ClauseList(Vec<ExtractedClause>),
    CodeArtifact { subject: SubjectDescriptor, source: String },
}

impl StructuredPayload {
    /// The schema-shaped JSON document for this payload.
    pub fn to_json(&self) -> Json {
        match self {
            StructuredPayload::TaskList(tasks) => serde_json::json!({ "tasks": tasks }),
            StructuredPayload::ClauseList(clauses) => serde_json::json!({ "clauses": clauses }),
            StructuredPayload::CodeArtifact { subject, source } => {
                serde_json::json!({ "subject": subject, "source": source })
            }
        }
    }
}

/// Takes the first JSON object or array in `raw_text`, wherever it sits
/// (bare, fenced, surrounded by prose), and validates it against the
/// purpose's schema.
pub fn extract_payload(purpose: Purpose, raw_text: &str) -> Result<StructuredPayload, LlmError> {
    let doc = first_document(raw_text).ok_or(LlmError::NoPayload)?;
    match purpose {
        Purpose::DecomposeIntent => task_list(doc).map(StructuredPayload::TaskList),
        Purpose::GenerateContracts => clause_list(doc).map(StructuredPayload::ClauseList),
        Purpose::GenerateCode | Purpose::RepairCode => code_artifact(doc),
    }
}

fn first_document(text: &str) -> Option<Json> {
    text.char_indices().filter(|(_, c)| matches!(c, '{' | '[')).find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Json>();
        match stream.next() {
            Some(Ok(doc @ (Json::Object(_) | Json::Array(_)))) => Some(doc),
            _ => None,
        }
    })
}

fn schema(field: impl Into<String>, detail: impl Into<String>) -> LlmError {
    LlmError::Schema { field: field.into(), detail: detail.into() }
}

/// `{"<key>": [...]}` or a bare array.
fn items(doc: Json, key: &str) -> Result<Vec<Json>, LlmError> {
    match doc {
        Json::Array(items) => Ok(items),
        Json::Object(mut map) => match map.remove(key) {
            Some(Json::Array(items)) => Ok(items),
            Some(_) => Err(schema(key, "expected an array")),
            None => Err(schema(key, "missing")),
        },
        _ => Err(schema(key, "expected an object or array")),
    }
}

fn object(item: Json, field: &str) -> Result<Map<String, Json>, LlmError> {
    match item {
        Json::Object(map) => Ok(map),
        _ => Err(schema(field, "expected an object")),
    }
}

fn required_text(map: &Map<String, Json>, path: &str, name: &str) -> Result<String, LlmError> {
    match map.get(name) {
        Some(Json::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Json::String(_)) => Err(schema(format!("{path}.{name}"), "must not be empty")),
        Some(_) => Err(schema(format!("{path}.{name}"), "expected text")),
        None => Err(schema(format!("{path}.{name}"), "missing")),
    }
}

fn optional_text(map: &Map<String, Json>, path: &str, name: &str) -> Result<Option<String>, LlmError> {
    match map.get(name) {
        None | Some(Json::Null) => Ok(None),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(schema(format!("{path}.{name}"), "expected text")),
    }
}

fn task_list(doc: Json) -> Result<Vec<TaskDraft>, LlmError> {
    let mut out = Vec::new();
    for (i, item) in items(doc, "tasks")?.into_iter().enumerate() {
        let path = format!("tasks[{i}]");
        let map = object(item, &path)?;
        let title = required_text(&map, &path, "title")?;
        let description = optional_text(&map, &path, "description")?.unwrap_or_default();
        let kind_text = required_text(&map, &path, "unit_kind")?;
        let unit_kind = match kind_text.trim().to_ascii_lowercase().as_str() {
            "constructor" => TaskUnitKind::Constructor,
            "method" => TaskUnitKind::Method,
            "module" => TaskUnitKind::Module,
            other => return Err(schema(format!("{path}.unit_kind"), format!("`{other}` is not constructor, method or module"))),
        };
        let key = optional_text(&map, &path, "key")?;
        let unit = match map.get("unit") {
            None | Some(Json::Null) => None,
            Some(v) => {
                let unit: UnitSignature = serde_json::from_value(v.clone())
                    .map_err(|e| schema(format!("{path}.unit"), e.to_string()))?;
                unit.validate().map_err(|e| schema(format!("{path}.unit"), e))?;
                Some(unit)
            }
        };
        let order_index = match map.get("order_index") {
            None | Some(Json::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or_else(|| schema(format!("{path}.order_index"), "expected a non-negative integer"))?,
            ),
        };
        out.push(TaskDraft { key, title, description, order_index, unit_kind, unit });
    }
    Ok(out)
}

fn clause_list(doc: Json) -> Result<Vec<ExtractedClause>, LlmError> {
    let mut out = Vec::new();
    for (index, item) in items(doc, "clauses")?.into_iter().enumerate() {
        let path = format!("clauses[{index}]");
        let map = object(item, &path)?;
        let kind_text = required_text(&map, &path, "kind")?;
        let kind = ClauseKind::parse(&kind_text).ok_or_else(|| {
            schema(format!("{path}.kind"), format!("`{kind_text}` is not precondition, postcondition or invariant"))
        })?;
        let element = required_text(&map, &path, "element")?;
        let raw = required_text(&map, &path, "contract_text")?;
        let source_text = optional_text(&map, &path, "source_text")?.unwrap_or_else(|| raw.clone());
        let contract_text =
            normalize(&raw, Dialect::JavaLike).map_err(|source| LlmError::Normalization { index, source })?;
        out.push(ExtractedClause { kind, element, contract_text, source_text });
    }
    Ok(out)
}

fn code_artifact(doc: Json) -> Result<StructuredPayload, LlmError> {
    let mut map = object(doc, "$")?;
    let subject_json = map.remove("subject").ok_or_else(|| schema("subject", "missing"))?;
    let subject: SubjectDescriptor =
        serde_json::from_value(subject_json).map_err(|e| schema("subject", e.to_string()))?;
    subject.validate().map_err(|e| schema("subject", e))?;
    let source = match map.remove("source") {
        None | Some(Json::Null) => String::new(),
        Some(Json::String(s)) => s,
        Some(_) => return Err(schema("source", "expected text")),
    };
    Ok(StructuredPayload::CodeArtifact { subject, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prose_around_a_fenced_block() {
        let raw = "Sure! Here are the contracts:\n```json\n{\"clauses\": [\n  {\"kind\": \"precondition\", \"element\": \"balance\", \"contract_text\": \"!Double.isNaN(balance) && !Double.isInfinite(balance)\"}\n]}\n```\nLet me know.";
        let StructuredPayload::ClauseList(clauses) = extract_payload(Purpose::GenerateContracts, raw).unwrap() else {
            panic!()
        };
        assert_eq!(clauses[0].contract_text, "!is_nan(balance) && !is_infinite(balance)");
        assert_eq!(clauses[0].source_text, "!Double.isNaN(balance) && !Double.isInfinite(balance)");
    }

    #[test]
    fn no_block_and_bad_kind() {
        assert!(matches!(
            extract_payload(Purpose::GenerateContracts, "Sure! Here are the contracts:"),
            Err(LlmError::NoPayload)
        ));
        let raw = r#"[{"kind":"assumption","element":"x","contract_text":"x > 0"}]"#;
        match extract_payload(Purpose::GenerateContracts, raw) {
            Err(LlmError::Schema { field, .. }) => assert_eq!(field, "clauses[0].kind"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_valid_block_wins() {
        let raw = r#"[broken {"tasks":[{"title":"A","unit_kind":"method"}]} then {"tasks":[{"title":"B","unit_kind":"method"}]}"#;
        let StructuredPayload::TaskList(tasks) = extract_payload(Purpose::DecomposeIntent, raw).unwrap() else {
            panic!()
        };
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].title, "A");
    }

    #[test]
    fn unsupported_idiom_carries_the_index() {
        let raw = r#"{"clauses":[{"kind":"precondition","element":"a","contract_text":"a > 0"},{"kind":"precondition","element":"name","contract_text":"name.trim() != null"}]}"#;
        assert!(matches!(
            extract_payload(Purpose::GenerateContracts, raw),
            Err(LlmError::Normalization { index: 1, .. })
        ));
    }

    #[test]
    fn artifact_requires_a_valid_subject() {
        assert!(matches!(
            extract_payload(Purpose::GenerateCode, r#"{"source":"x"}"#),
            Err(LlmError::Schema { ref field, .. }) if field == "subject"
        ));
    }
}
