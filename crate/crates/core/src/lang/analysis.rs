use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{BinaryOp, Expr};
use super::eval::{eval_value, Env};
use super::value::Value;

/// Identifiers an expression reads, by category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeIdentifiers {
    pub plain: BTreeSet<String>,
    pub this_fields: BTreeSet<String>,
    pub uses_old: bool,
    pub uses_result: bool,
}

pub fn free_identifiers(expr: &Expr) -> FreeIdentifiers {
    let mut ids = FreeIdentifiers::default();
    expr.walk(&mut |e| match e {
        Expr::Ident(name) => {
            ids.plain.insert(name.clone());
        }
        Expr::Field(name) => {
            ids.this_fields.insert(name.clone());
        }
        Expr::Old(_) => ids.uses_old = true,
        Expr::Result => ids.uses_result = true,
        _ => {}
    });
    ids
}

/// A comparison between a plain identifier and a constant, identifier on
/// the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub ident: String,
    pub cmp: BinaryOp,
    pub constant: Value,
}

/// Collects every `ident <cmp> constant` comparison in pre-order. `constant`
/// may be any identifier-free subexpression that folds to a number, text,
/// boolean or null. Anything else is skipped.
pub fn extract_atoms(expr: &Expr) -> Vec<Atom> {
    let mut atoms = Vec::new();
    expr.walk(&mut |e| {
        let Expr::Binary(op, l, r) = e else { return };
        if !op.is_comparison() {
            return;
        }
        let atom = match (l.as_ref(), r.as_ref()) {
            (Expr::Ident(name), other) => fold(other).map(|k| (name, *op, k)),
            (other, Expr::Ident(name)) => fold(other).map(|k| (name, op.flipped(), k)),
            _ => None,
        };
        if let Some((name, cmp, constant)) = atom {
            atoms.push(Atom { ident: name.clone(), cmp, constant });
        }
    });
    atoms
}

fn fold(expr: &Expr) -> Option<Value> {
    let reads_state =
        expr.any(|e| matches!(e, Expr::Ident(_) | Expr::Field(_) | Expr::Old(_) | Expr::Result));
    if reads_state {
        return None;
    }
    match eval_value(expr, &Env::new()).ok()? {
        v @ (Value::Int(_) | Value::Decimal(_) | Value::Text(_) | Value::Bool(_) | Value::Null) => {
            Some(v)
        }
        _ => None,
    }
}
