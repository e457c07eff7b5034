use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::{format_decimal, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Decimal(f64),
    Text(String),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Null => Value::Null,
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(n) => Value::Int(*n),
            Literal::Decimal(d) => Value::Decimal(*d),
            Literal::Text(t) => Value::Text(t.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryOp {
    #[serde(rename = "||")]
    Or,
    #[serde(rename = "&&")]
    And,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "||",
            BinaryOp::And => "&&",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq
            | BinaryOp::Ne
            | BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }

    /// The comparator with operands swapped: `k <= x` is `x >= k`.
    pub fn flipped(self) -> BinaryOp {
        match self {
            BinaryOp::Lt => BinaryOp::Gt,
            BinaryOp::Le => BinaryOp::Ge,
            BinaryOp::Gt => BinaryOp::Lt,
            BinaryOp::Ge => BinaryOp::Le,
            other => other,
        }
    }
}

const UNARY_PRECEDENCE: u8 = 6;
const ATOM_PRECEDENCE: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    IsNull,
    IsEmpty,
    IsNan,
    IsInfinite,
    IsFinite,
    Len,
    Abs,
    Min,
    Max,
}

impl Builtin {
    pub const ALL: [Builtin; 9] = [
        Builtin::IsNull,
        Builtin::IsEmpty,
        Builtin::IsNan,
        Builtin::IsInfinite,
        Builtin::IsFinite,
        Builtin::Len,
        Builtin::Abs,
        Builtin::Min,
        Builtin::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::IsNull => "is_null",
            Builtin::IsEmpty => "is_empty",
            Builtin::IsNan => "is_nan",
            Builtin::IsInfinite => "is_infinite",
            Builtin::IsFinite => "is_finite",
            Builtin::Len => "len",
            Builtin::Abs => "abs",
            Builtin::Min => "min",
            Builtin::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Accepted argument counts as (min, max).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Min | Builtin::Max => (2, usize::MAX),
            _ => (1, 1),
        }
    }
}

/// A contract expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Literal),
    Ident(String),
    /// `this.<field>`
    Field(String),
    Old(Box<Expr>),
    Result,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn field(name: impl Into<String>) -> Expr {
        Expr::Field(name.into())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Literal(Literal::Int(n))
    }

    pub fn decimal(d: f64) -> Expr {
        Expr::Literal(Literal::Decimal(d))
    }

    pub fn boolean(b: bool) -> Expr {
        Expr::Literal(Literal::Bool(b))
    }

    pub fn text(t: impl Into<String>) -> Expr {
        Expr::Literal(Literal::Text(t.into()))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(e))
    }

    pub fn old(e: Expr) -> Expr {
        Expr::Old(Box::new(e))
    }

    pub fn call(builtin: Builtin, args: Vec<Expr>) -> Expr {
        Expr::Call(builtin, args)
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Old(inner) | Expr::Unary(_, inner) => inner.walk(visit),
            Expr::Binary(_, l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
            Expr::Literal(_) | Expr::Ident(_) | Expr::Field(_) | Expr::Result => {}
        }
    }

    pub fn any(&self, pred: impl Fn(&Expr) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= pred(e));
        found
    }

    /// Rebuilds the tree bottom-up, applying `f` to every node after its
    /// children have been rewritten.
    pub fn rewrite(self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Old(inner) => Expr::Old(Box::new(inner.rewrite(f))),
            Expr::Unary(op, inner) => Expr::Unary(op, Box::new(inner.rewrite(f))),
            Expr::Binary(op, l, r) => Expr::Binary(op, Box::new(l.rewrite(f)), Box::new(r.rewrite(f))),
            Expr::Call(b, args) => Expr::Call(b, args.into_iter().map(|a| a.rewrite(f)).collect()),
            leaf => leaf,
        };
        f(rebuilt)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Unary(..) => UNARY_PRECEDENCE,
            // A negative numeric literal prints with a leading `-`.
            Expr::Literal(Literal::Int(n)) if *n < 0 => UNARY_PRECEDENCE,
            Expr::Literal(Literal::Decimal(d)) if d.is_sign_negative() => UNARY_PRECEDENCE,
            _ => ATOM_PRECEDENCE,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            f.write_str("(")?;
            self.fmt_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Literal(lit) => fmt_literal(lit, f),
            Expr::Ident(name) => f.write_str(name),
            Expr::Field(name) => write!(f, "this.{name}"),
            Expr::Result => f.write_str("result"),
            Expr::Old(inner) => {
                f.write_str("old(")?;
                inner.fmt_at(f, 0)?;
                f.write_str(")")
            }
            Expr::Unary(op, inner) => {
                f.write_str(match op {
                    UnaryOp::Not => "!",
                    UnaryOp::Neg => "-",
                })?;
                // `-5` reparses as a literal and `--x` would lex oddly, so a
                // negation of a numeric literal or another unary is bracketed.
                let needs_parens = matches!(
                    (op, inner.as_ref()),
                    (UnaryOp::Neg, Expr::Literal(Literal::Int(_) | Literal::Decimal(_)))
                        | (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, _))
                );
                if needs_parens {
                    f.write_str("(")?;
                    inner.fmt_at(f, 0)?;
                    f.write_str(")")
                } else {
                    inner.fmt_at(f, UNARY_PRECEDENCE)
                }
            }
            Expr::Binary(op, l, r) => {
                let prec = op.precedence();
                l.fmt_at(f, prec)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_at(f, prec + 1)
            }
            Expr::Call(builtin, args) => {
                write!(f, "{}(", builtin.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    arg.fmt_at(f, 0)?;
                }
                f.write_str(")")
            }
        }
    }
}

fn fmt_literal(lit: &Literal, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match lit {
        Literal::Null => f.write_str("null"),
        Literal::Bool(b) => write!(f, "{b}"),
        Literal::Int(n) => write!(f, "{n}"),
        Literal::Decimal(d) => f.write_str(&format_decimal(*d)),
        Literal::Text(t) => {
            f.write_str("\"")?;
            for c in t.chars() {
                match c {
                    '"' => f.write_str("\\\"")?,
                    '\\' => f.write_str("\\\\")?,
                    '\n' => f.write_str("\\n")?,
                    '\t' => f.write_str("\\t")?,
                    '\r' => f.write_str("\\r")?,
                    c if c.is_control() => write!(f, "\\u{{{:x}}}", c as u32)?,
                    c => write!(f, "{c}")?,
                }
            }
            f.write_str("\"")
        }
    }
}

/// Canonical pretty-printing. The output re-parses to a structurally equal
/// tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}
