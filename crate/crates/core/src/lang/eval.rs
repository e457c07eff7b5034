//! Three-valued evaluation of contract expressions.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{BinaryOp, Builtin, Expr, UnaryOp};
use super::value::{numeric_cmp, Value};

/// Variable bindings an expression is evaluated under.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Env {
    #[serde(default)]
    pub bindings: BTreeMap<String, Value>,
    #[serde(default)]
    pub this_fields: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_fields: Option<BTreeMap<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_bindings(bindings: BTreeMap<String, Value>) -> Self {
        Env { bindings, ..Self::default() }
    }

    pub fn bind(mut self, name: impl Into<String>, value: Value) -> Self {
        self.bindings.insert(name.into(), value);
        self
    }

    pub fn field(mut self, name: impl Into<String>, value: Value) -> Self {
        self.this_fields.insert(name.into(), value);
        self
    }
}

/// Why an expression could be neither affirmed nor refuted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum Indeterminacy {
    UnboundIdentifier(String),
    TypeMismatch(String),
    DivisionByZero,
    Overflow(String),
}

impl fmt::Display for Indeterminacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Indeterminacy::UnboundIdentifier(name) => write!(f, "unbound identifier `{name}`"),
            Indeterminacy::TypeMismatch(detail) => write!(f, "type mismatch: {detail}"),
            Indeterminacy::DivisionByZero => f.write_str("division by zero"),
            Indeterminacy::Overflow(detail) => write!(f, "arithmetic overflow: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EvalOutcome {
    Holds,
    Violated { witness: Env },
    Indeterminate { reason: Indeterminacy },
}

impl EvalOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, EvalOutcome::Holds)
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, EvalOutcome::Violated { .. })
    }

    pub fn is_indeterminate(&self) -> bool {
        matches!(self, EvalOutcome::Indeterminate { .. })
    }
}

type Eval = Result<Value, Indeterminacy>;

/// Evaluates `expr` as a predicate under `env`.
pub fn evaluate(expr: &Expr, env: &Env) -> EvalOutcome {
    match eval_value(expr, env) {
        Ok(Value::Bool(true)) => EvalOutcome::Holds,
        Ok(Value::Bool(false)) => EvalOutcome::Violated { witness: env.clone() },
        Ok(other) => EvalOutcome::Indeterminate {
            reason: Indeterminacy::TypeMismatch(format!(
                "contract evaluated to {} instead of boolean",
                other.type_name()
            )),
        },
        Err(reason) => EvalOutcome::Indeterminate { reason },
    }
}

/// Evaluates `expr` to a value. Used directly for constant folding.
pub fn eval_value(expr: &Expr, env: &Env) -> Eval {
    Evaluator { env, in_old: false }.eval(expr)
}

struct Evaluator<'e> {
    env: &'e Env,
    in_old: bool,
}

impl Evaluator<'_> {
    fn eval(&self, expr: &Expr) -> Eval {
        match expr {
            Expr::Literal(lit) => Ok(lit.to_value()),
            Expr::Ident(name) => self
                .env
                .bindings
                .get(name)
                .cloned()
                .ok_or_else(|| Indeterminacy::UnboundIdentifier(name.clone())),
            Expr::Field(name) => {
                let fields = if self.in_old {
                    self.env
                        .old_fields
                        .as_ref()
                        .ok_or_else(|| Indeterminacy::UnboundIdentifier(format!("old(this.{name})")))?
                } else {
                    &self.env.this_fields
                };
                fields.get(name).cloned().ok_or_else(|| {
                    Indeterminacy::UnboundIdentifier(if self.in_old {
                        format!("old(this.{name})")
                    } else {
                        format!("this.{name}")
                    })
                })
            }
            Expr::Result => self
                .env
                .result
                .clone()
                .ok_or_else(|| Indeterminacy::UnboundIdentifier("result".into())),
            Expr::Old(inner) => {
                if self.env.old_fields.is_none() {
                    return Err(Indeterminacy::UnboundIdentifier(format!("old({inner})")));
                }
                Evaluator { env: self.env, in_old: true }.eval(inner)
            }
            Expr::Unary(UnaryOp::Not, inner) => match self.eval(inner)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(mismatch("!", &[&other])),
            },
            Expr::Unary(UnaryOp::Neg, inner) => match self.eval(inner)? {
                Value::Int(n) => n
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| Indeterminacy::Overflow(format!("-({n})"))),
                Value::Decimal(d) => Ok(Value::Decimal(-d)),
                other => Err(mismatch("unary -", &[&other])),
            },
            Expr::Binary(BinaryOp::And, l, r) => match self.eval(l)? {
                Value::Bool(false) => Ok(Value::Bool(false)),
                Value::Bool(true) => self.boolean(r, "&&"),
                other => Err(mismatch("&&", &[&other])),
            },
            Expr::Binary(BinaryOp::Or, l, r) => match self.eval(l)? {
                Value::Bool(true) => Ok(Value::Bool(true)),
                Value::Bool(false) => self.boolean(r, "||"),
                other => Err(mismatch("||", &[&other])),
            },
            Expr::Binary(op, l, r) => {
                let lhs = self.eval(l)?;
                let rhs = self.eval(r)?;
                if op.is_comparison() {
                    compare(*op, &lhs, &rhs).map(Value::Bool)
                } else {
                    arithmetic(*op, &lhs, &rhs)
                }
            }
            Expr::Call(builtin, args) => {
                let values = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                call_builtin(*builtin, &values)
            }
        }
    }

    fn boolean(&self, expr: &Expr, op: &str) -> Eval {
        match self.eval(expr)? {
            b @ Value::Bool(_) => Ok(b),
            other => Err(mismatch(op, &[&other])),
        }
    }
}

fn mismatch(op: &str, operands: &[&Value]) -> Indeterminacy {
    let types: Vec<&str> = operands.iter().map(|v| v.type_name()).collect();
    Indeterminacy::TypeMismatch(format!("`{op}` applied to {}", types.join(" and ")))
}

fn compare(op: BinaryOp, lhs: &Value, rhs: &Value) -> Result<bool, Indeterminacy> {
    if matches!(op, BinaryOp::Eq | BinaryOp::Ne) {
        let equal = match (lhs, rhs) {
            (Value::Null, Value::Null) => true,
            (Value::Null, _) | (_, Value::Null) => false,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => match numeric_cmp(lhs, rhs) {
                Some(ord) => ord == Some(Ordering::Equal),
                None => return Err(mismatch(op.symbol(), &[lhs, rhs])),
            },
        };
        return Ok(if op == BinaryOp::Eq { equal } else { !equal });
    }
    let ordering = match (lhs, rhs) {
        (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
        _ => numeric_cmp(lhs, rhs).ok_or_else(|| mismatch(op.symbol(), &[lhs, rhs]))?,
    };
    // Unordered (NaN) makes every ordering comparison false.
    let Some(ordering) = ordering else { return Ok(false) };
    Ok(match op {
        BinaryOp::Lt => ordering == Ordering::Less,
        BinaryOp::Le => ordering != Ordering::Greater,
        BinaryOp::Gt => ordering == Ordering::Greater,
        BinaryOp::Ge => ordering != Ordering::Less,
        _ => unreachable!("not an ordering comparison"),
    })
}

fn arithmetic(op: BinaryOp, lhs: &Value, rhs: &Value) -> Eval {
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => {
            let (a, b) = (*a, *b);
            if op == BinaryOp::Div && b == 0 {
                return Err(Indeterminacy::DivisionByZero);
            }
            let result = match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                BinaryOp::Div => a.checked_div(b),
                _ => unreachable!("not arithmetic"),
            };
            result
                .map(Value::Int)
                .ok_or_else(|| Indeterminacy::Overflow(format!("{a} {} {b}", op.symbol())))
        }
        (Value::Int(_) | Value::Decimal(_), Value::Int(_) | Value::Decimal(_)) => {
            let a = as_f64(lhs);
            let b = as_f64(rhs);
            if op == BinaryOp::Div && b == 0.0 {
                return Err(Indeterminacy::DivisionByZero);
            }
            Ok(Value::Decimal(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                _ => unreachable!("not arithmetic"),
            }))
        }
        _ => Err(mismatch(op.symbol(), &[lhs, rhs])),
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(n) => *n as f64,
        Value::Decimal(d) => *d,
        _ => unreachable!("checked numeric"),
    }
}

fn call_builtin(builtin: Builtin, args: &[Value]) -> Eval {
    let name = builtin.name();
    match builtin {
        Builtin::IsNull => Ok(Value::Bool(matches!(args[0], Value::Null))),
        Builtin::IsEmpty => match &args[0] {
            Value::Text(t) => Ok(Value::Bool(t.is_empty())),
            Value::List(items) => Ok(Value::Bool(items.is_empty())),
            Value::Map(entries) => Ok(Value::Bool(entries.is_empty())),
            other => Err(mismatch(name, &[other])),
        },
        Builtin::Len => match &args[0] {
            Value::Text(t) => Ok(Value::Int(t.chars().count() as i64)),
            Value::List(items) => Ok(Value::Int(items.len() as i64)),
            Value::Map(entries) => Ok(Value::Int(entries.len() as i64)),
            other => Err(mismatch(name, &[other])),
        },
        Builtin::IsNan | Builtin::IsInfinite | Builtin::IsFinite => match &args[0] {
            Value::Int(_) => Ok(Value::Bool(builtin == Builtin::IsFinite)),
            Value::Decimal(d) => Ok(Value::Bool(match builtin {
                Builtin::IsNan => d.is_nan(),
                Builtin::IsInfinite => d.is_infinite(),
                _ => d.is_finite(),
            })),
            other => Err(mismatch(name, &[other])),
        },
        Builtin::Abs => match &args[0] {
            Value::Int(n) => n
                .checked_abs()
                .map(Value::Int)
                .ok_or_else(|| Indeterminacy::Overflow(format!("abs({n})"))),
            Value::Decimal(d) => Ok(Value::Decimal(d.abs())),
            other => Err(mismatch(name, &[other])),
        },
        Builtin::Min | Builtin::Max => {
            let mut best = &args[0];
            for candidate in &args[1..] {
                let ord = numeric_cmp(candidate, best)
                    .ok_or_else(|| mismatch(name, &[best, candidate]))?;
                let Some(ord) = ord else {
                    // NaN poisons min/max as it does in IEEE arithmetic.
                    return Ok(Value::Decimal(f64::NAN));
                };
                let better = if builtin == Builtin::Min {
                    ord == Ordering::Less
                } else {
                    ord == Ordering::Greater
                };
                if better {
                    best = candidate;
                }
            }
            if !best.is_numeric() {
                return Err(mismatch(name, &[best]));
            }
            Ok(best.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn eval(src: &str, env: &Env) -> EvalOutcome {
        evaluate(&parse(src).unwrap(), env)
    }

    #[test]
    fn pin_in_range_holds() {
        let env = Env::new().bind("pin", Value::Int(1234));
        assert_eq!(eval("0 <= pin && pin <= 9999", &env), EvalOutcome::Holds);
    }

    #[test]
    fn nan_balance_violates_is_nan_guard() {
        let env = Env::new().bind("balance", Value::Decimal(f64::NAN));
        let outcome = eval("!is_nan(balance)", &env);
        assert!(matches!(outcome, EvalOutcome::Violated { ref witness } if witness == &env));
    }

    #[test]
    fn missing_field_is_indeterminate() {
        assert_eq!(
            eval("this.balance >= 0", &Env::new()),
            EvalOutcome::Indeterminate {
                reason: Indeterminacy::UnboundIdentifier("this.balance".into())
            }
        );
    }

    #[test]
    fn old_and_result_without_state_are_indeterminate() {
        let env = Env::new().field("balance", Value::Int(5));
        assert!(eval("old(this.balance) == this.balance", &env).is_indeterminate());
        assert!(eval("result == 1", &env).is_indeterminate());
        let mut with_old = env.clone();
        with_old.old_fields = Some(BTreeMap::from([("balance".to_string(), Value::Int(3))]));
        with_old.result = Some(Value::Int(2));
        assert!(eval("old(this.balance) + result == this.balance", &with_old).holds());
    }

    #[test]
    fn short_circuit_masks_right_operand() {
        assert!(eval("false && nope > 1", &Env::new()).is_violated());
        assert!(eval("true || 1 / 0 == 1", &Env::new()).holds());
        assert!(eval("true && nope > 1", &Env::new()).is_indeterminate());
    }

    #[test]
    fn division_by_zero_never_yields_infinity() {
        for src in ["1 / 0 > 0", "1.0 / 0.0 > 0", "1 / 0.0 > 0", "1.5 / 0 > 0"] {
            assert_eq!(
                eval(src, &Env::new()),
                EvalOutcome::Indeterminate { reason: Indeterminacy::DivisionByZero },
                "{src}"
            );
        }
    }

    #[test]
    fn nan_comparisons() {
        let env = Env::new().bind("x", Value::Decimal(f64::NAN));
        assert!(eval("x == x", &env).is_violated());
        assert!(eval("x != x", &env).holds());
        assert!(eval("x >= 0", &env).is_violated());
        assert!(eval("x < 0", &env).is_violated());
    }

    #[test]
    fn mixed_numeric_equality_promotes() {
        let env = Env::new().bind("a", Value::Int(100)).bind("b", Value::Decimal(100.0));
        assert!(eval("a == b", &env).holds());
        let big = Env::new()
            .bind("a", Value::Int((1 << 53) + 1))
            .bind("b", Value::Decimal(9_007_199_254_740_992.0));
        assert!(eval("a == b", &big).is_violated());
        assert!(eval("a > b", &big).holds());
    }

    #[test]
    fn type_mismatches() {
        let env = Env::new().bind("s", Value::Text("x".into()));
        assert!(matches!(
            eval("s > 1", &env),
            EvalOutcome::Indeterminate { reason: Indeterminacy::TypeMismatch(_) }
        ));
        assert!(eval("is_empty(null)", &Env::new()).is_indeterminate());
        assert!(eval("1 + 2", &Env::new()).is_indeterminate());
        assert!(eval("s == null", &env).is_violated());
    }

    #[test]
    fn builtins() {
        let env = Env::new()
            .bind("s", Value::Text("héllo".into()))
            .bind("n", Value::Int(-4))
            .bind("d", Value::Decimal(f64::NEG_INFINITY));
        for src in [
            "len(s) == 5",
            "!is_empty(s)",
            "abs(n) == 4",
            "min(n, 2, 7) == -4",
            "max(n, 2.5) == 2.5",
            "is_infinite(d) && !is_finite(d) && !is_nan(d)",
            "is_finite(n)",
            "!is_null(s)",
        ] {
            assert!(eval(src, &env).holds(), "{src}");
        }
        assert!(eval("abs(-9223372036854775808) > 0", &env).is_indeterminate());
    }

    #[test]
    fn overflow_is_indeterminate() {
        assert!(matches!(
            eval("9223372036854775807 + 1 > 0", &Env::new()),
            EvalOutcome::Indeterminate { reason: Indeterminacy::Overflow(_) }
        ));
    }

    #[test]
    fn non_boolean_result_is_indeterminate() {
        assert!(eval("1 + 1", &Env::new()).is_indeterminate());
    }
}
