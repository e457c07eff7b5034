use std::collections::BTreeSet;

use super::ast::Expr;
use super::parser::{parse_dialect, rewrite_null_tests, Dialect, NormalizeError};

/// Rewrites a contract written in `dialect` into canonical text.
///
/// `Dialect::Canonical` is the identity. For `Dialect::JavaLike` the source is
/// parsed with the Java member-call table, null tests become `is_null`, and
/// the tree is pretty-printed.
pub fn normalize(source: &str, dialect: Dialect) -> Result<String, NormalizeError> {
    match dialect {
        Dialect::Canonical => Ok(source.to_string()),
        Dialect::JavaLike => Ok(normalize_expr(source)?.to_string()),
    }
}

/// Parses Java-flavored (or canonical) text into a canonical tree.
pub fn normalize_expr(source: &str) -> Result<Expr, NormalizeError> {
    Ok(rewrite_null_tests(parse_dialect(source, Dialect::JavaLike)?))
}

/// One `this.X` → `X` substitution applied to a constructor precondition.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldRewrite {
    pub field: String,
    pub parameter: String,
}

/// In a constructor precondition the object does not exist yet, so
/// `this.X` can only mean the incoming parameter `X`. Fields without a
/// like-named parameter are left alone.
pub fn rewrite_constructor_precondition(
    expr: Expr,
    params: &BTreeSet<String>,
) -> (Expr, Vec<FieldRewrite>) {
    let mut rewrites: Vec<FieldRewrite> = Vec::new();
    let rewritten = expr.rewrite(&mut |e| match e {
        Expr::Field(name) if params.contains(&name) => {
            if !rewrites.iter().any(|r| r.field == name) {
                rewrites.push(FieldRewrite { field: name.clone(), parameter: name.clone() });
            }
            Expr::Ident(name)
        }
        other => other,
    });
    (rewritten, rewrites)
}
