use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::analysis::free_identifiers;
use super::ast::Expr;
use super::normalize::normalize_expr;
use super::parser::{parse, NormalizeError, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Precondition,
    Postcondition,
    Invariant,
}

impl ClauseKind {
    pub fn parse(s: &str) -> Option<ClauseKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "precondition" => Some(ClauseKind::Precondition),
            "postcondition" => Some(ClauseKind::Postcondition),
            "invariant" => Some(ClauseKind::Invariant),
            _ => None,
        }
    }
}

impl fmt::Display for ClauseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClauseKind::Precondition => "precondition",
            ClauseKind::Postcondition => "postcondition",
            ClauseKind::Invariant => "invariant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClauseError {
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("{kind} may not use {construct}")]
    ForbiddenConstruct { kind: ClauseKind, construct: &'static str },
    #[error("invariant may only read `this.` fields, found `{0}`")]
    InvariantReadsParameter(String),
    #[error("`old(...)` may not be nested")]
    NestedOld,
    #[error("clause element is empty")]
    EmptyElement,
}

impl From<SyntaxError> for ClauseError {
    fn from(e: SyntaxError) -> Self {
        ClauseError::Normalize(NormalizeError::Syntax(e))
    }
}

/// One precondition, postcondition or invariant bound to an element of a
/// code unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClauseWire", into = "ClauseWire")]
pub struct ContractClause {
    pub clause_id: String,
    pub kind: ClauseKind,
    pub element: String,
    pub expr: Expr,
    pub source_text: String,
}

impl ContractClause {
    /// Normalizes `source_text` (Java-flavored or canonical) and checks the
    /// kind-specific restrictions.
    pub fn new(
        clause_id: impl Into<String>,
        kind: ClauseKind,
        element: impl Into<String>,
        source_text: impl Into<String>,
    ) -> Result<Self, ClauseError> {
        let source_text = source_text.into();
        let expr = normalize_expr(&source_text)?;
        Self::from_expr(clause_id, kind, element, expr, source_text)
    }

    pub fn from_expr(
        clause_id: impl Into<String>,
        kind: ClauseKind,
        element: impl Into<String>,
        expr: Expr,
        source_text: impl Into<String>,
    ) -> Result<Self, ClauseError> {
        let element = element.into();
        if element.trim().is_empty() {
            return Err(ClauseError::EmptyElement);
        }
        validate_for_kind(kind, &expr)?;
        Ok(ContractClause {
            clause_id: clause_id.into(),
            kind,
            element,
            expr,
            source_text: source_text.into(),
        })
    }

    pub fn normalized_text(&self) -> String {
        self.expr.to_string()
    }
}

pub fn validate_for_kind(kind: ClauseKind, expr: &Expr) -> Result<(), ClauseError> {
    let ids = free_identifiers(expr);
    let nested_old = expr.any(|e| matches!(e, Expr::Old(inner) if inner.any(|i| matches!(i, Expr::Old(_)))));
    if nested_old {
        return Err(ClauseError::NestedOld);
    }
    match kind {
        ClauseKind::Postcondition => Ok(()),
        ClauseKind::Precondition | ClauseKind::Invariant => {
            if ids.uses_old {
                return Err(ClauseError::ForbiddenConstruct { kind, construct: "`old(...)`" });
            }
            if ids.uses_result {
                return Err(ClauseError::ForbiddenConstruct { kind, construct: "`result`" });
            }
            if kind == ClauseKind::Invariant {
                if let Some(name) = ids.plain.into_iter().next() {
                    return Err(ClauseError::InvariantReadsParameter(name));
                }
            }
            Ok(())
        }
    }
}

/// Interchange form of a clause.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClauseWire {
    pub clause_id: String,
    pub kind: ClauseKind,
    pub element: String,
    pub source_text: String,
    pub normalized_text: String,
}

impl From<ContractClause> for ClauseWire {
    fn from(c: ContractClause) -> Self {
        ClauseWire {
            normalized_text: c.normalized_text(),
            clause_id: c.clause_id,
            kind: c.kind,
            element: c.element,
            source_text: c.source_text,
        }
    }
}

impl TryFrom<ClauseWire> for ContractClause {
    type Error = ClauseError;

    fn try_from(w: ClauseWire) -> Result<Self, Self::Error> {
        let expr = parse(&w.normalized_text)?;
        ContractClause::from_expr(w.clause_id, w.kind, w.element, expr, w.source_text)
    }
}
