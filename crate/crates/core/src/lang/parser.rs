//! Recursive-descent parser for contract expressions.
//!
//! Precedence, loosest first: `||`, `&&`, comparisons, additive,
//! multiplicative, unary, call/access. All binary levels associate left.
//! The Java-flavored dialect additionally accepts the method-call idioms LLMs
//! tend to emit and maps them onto builtins while parsing.

use std::fmt;

use thiserror::Error;

use super::ast::{BinaryOp, Builtin, Expr, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    Canonical,
    JavaLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: expected {}, found {found}", .expected.join(" | "))]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unsupported idiom `{idiom}` at byte {offset}")]
    Unsupported { idiom: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Decimal(f64),
    Text(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Dot,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Decimal(d) => write!(f, "decimal {d}"),
            Tok::Text(t) => write!(f, "text {t:?}"),
            Tok::Ident(name) => write!(f, "`{name}`"),
            Tok::Op(op) => write!(f, "`{op}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    start: usize,
    end: usize,
}

const OPERATORS: [&str; 14] = [
    "&&", "||", "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "!", "%",
];

fn lex(src: &str, dialect: Dialect) -> Result<Vec<Spanned>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                Tok::Dot
            }
            b'"' => {
                let (text, next) = lex_text(src, i)?;
                i = next;
                Tok::Text(text)
            }
            b'0'..=b'9' | b'.' => {
                let (tok, next) = lex_number(src, i, dialect)?;
                i = next;
                tok
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            _ => {
                let rest = &src[i..];
                match OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                    // `%` is reserved: recognized so the error names it.
                    Some(&"%") | None => {
                        return Err(SyntaxError {
                            offset: i,
                            expected: vec!["token".into()],
                            found: format!("`{}`", rest.chars().next().unwrap_or(' ')),
                        })
                    }
                    Some(op) => {
                        i += op.len();
                        Tok::Op(op)
                    }
                }
            }
        };
        out.push(Spanned { tok, start, end: i });
    }
    out.push(Spanned { tok: Tok::Eof, start: src.len(), end: src.len() });
    Ok(out)
}

fn lex_text(src: &str, open: usize) -> Result<(String, usize), SyntaxError> {
    let mut text = String::new();
    let mut chars = src[open + 1..].char_indices();
    let err = |offset: usize, expected: &str| SyntaxError {
        offset,
        expected: vec![expected.into()],
        found: "end of input".into(),
    };
    while let Some((rel, c)) = chars.next() {
        let at = open + 1 + rel;
        match c {
            '"' => return Ok((text, at + 1)),
            '\\' => match chars.next() {
                Some((_, '"')) => text.push('"'),
                Some((_, '\\')) => text.push('\\'),
                Some((_, 'n')) => text.push('\n'),
                Some((_, 't')) => text.push('\t'),
                Some((_, 'r')) => text.push('\r'),
                Some((_, 'u')) => {
                    let rest = &src[at + 2..];
                    let close = rest.find('}').filter(|_| rest.starts_with('{'));
                    let code = close
                        .and_then(|close| u32::from_str_radix(&rest[1..close], 16).ok())
                        .and_then(char::from_u32);
                    match (code, close) {
                        (Some(ch), Some(close)) => {
                            text.push(ch);
                            for _ in 0..=close {
                                chars.next();
                            }
                        }
                        _ => {
                            return Err(SyntaxError {
                                offset: at,
                                expected: vec!["unicode escape `\\u{XXXX}`".into()],
                                found: "malformed escape".into(),
                            })
                        }
                    }
                }
                Some((_, other)) => {
                    return Err(SyntaxError {
                        offset: at,
                        expected: vec!["escape sequence".into()],
                        found: format!("`\\{other}`"),
                    })
                }
                None => return Err(err(src.len(), "`\"`")),
            },
            c => text.push(c),
        }
    }
    Err(err(src.len(), "`\"`"))
}

fn lex_number(src: &str, start: usize, dialect: Dialect) -> Result<(Tok, usize), SyntaxError> {
    let bytes = src.as_bytes();
    let mut i = start;
    let mut is_decimal = false;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        is_decimal = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            is_decimal = true;
            i = j;
        }
    }
    let digits = &src[start..i];
    let mut end = i;
    if dialect == Dialect::JavaLike && i < bytes.len() {
        match bytes[i] {
            b'L' | b'l' if !is_decimal => end = i + 1,
            b'd' | b'D' | b'f' | b'F' => {
                is_decimal = true;
                end = i + 1;
            }
            _ => {}
        }
    }
    if end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
        return Err(SyntaxError {
            offset: end,
            expected: vec!["operator".into()],
            found: format!("`{}`", &src[end..=end]),
        });
    }
    let tok = if is_decimal {
        Tok::Decimal(digits.parse().map_err(|_| SyntaxError {
            offset: start,
            expected: vec!["decimal literal".into()],
            found: format!("`{digits}`"),
        })?)
    } else {
        Tok::Int(digits.parse().map_err(|_| SyntaxError {
            offset: start,
            expected: vec!["integer literal within 64 bits".into()],
            found: format!("`{digits}`"),
        })?)
    };
    Ok((tok, end))
}

const EXPRESSION_START: [&str; 9] = [
    "identifier", "literal", "`(`", "`!`", "`-`", "`this`", "`old`", "`result`", "builtin call",
];

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Spanned>,
    pos: usize,
    dialect: Dialect,
}

/// Parses canonical contract syntax.
pub fn parse(source: &str) -> Result<Expr, SyntaxError> {
    match parse_dialect(source, Dialect::Canonical) {
        Ok(e) => Ok(e),
        Err(NormalizeError::Syntax(e)) => Err(e),
        // Canonical parsing never produces idiom errors.
        Err(NormalizeError::Unsupported { idiom, offset }) => Err(SyntaxError {
            offset,
            expected: vec!["canonical syntax".into()],
            found: idiom,
        }),
    }
}

pub(crate) fn parse_dialect(source: &str, dialect: Dialect) -> Result<Expr, NormalizeError> {
    if source.trim().is_empty() {
        return Err(SyntaxError {
            offset: 0,
            expected: EXPRESSION_START.iter().map(|s| s.to_string()).collect(),
            found: "end of input".into(),
        }
        .into());
    }
    let toks = lex(source, dialect)?;
    let mut parser = Parser { src: source, toks, pos: 0, dialect };
    let expr = parser.expr(0)?;
    parser.expect_eof()?;
    Ok(expr)
}

impl<'s> Parser<'s> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let here = self.peek();
        SyntaxError {
            offset: here.start,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: here.tok.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<Spanned, SyntaxError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn expect_eof(&self) -> Result<(), SyntaxError> {
        if self.peek().tok == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["operator", "end of input"]))
        }
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let Tok::Op(op) = self.peek().tok else { return None };
        Some(match op {
            "||" => BinaryOp::Or,
            "&&" => BinaryOp::And,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            _ => return None,
        })
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, NormalizeError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, NormalizeError> {
        match self.peek().tok {
            Tok::Op("!") => {
                self.bump();
                Ok(Expr::not(self.unary()?))
            }
            Tok::Op("-") => {
                self.bump();
                match self.peek().tok.clone() {
                    Tok::Int(n) => {
                        let at = self.bump().start;
                        let value = 0i64.checked_sub_unsigned(n).ok_or_else(|| SyntaxError {
                            offset: at,
                            expected: vec!["integer literal within 64 bits".into()],
                            found: format!("`-{n}`"),
                        })?;
                        self.postfix(Expr::int(value))
                    }
                    Tok::Decimal(d) => {
                        self.bump();
                        self.postfix(Expr::decimal(-d))
                    }
                    _ => Ok(Expr::neg(self.unary()?)),
                }
            }
            _ => {
                let start = self.peek().start;
                let primary = self.primary()?;
                self.postfix_from(primary, start)
            }
        }
    }

    fn postfix(&mut self, receiver: Expr) -> Result<Expr, NormalizeError> {
        let start = self.toks[self.pos.saturating_sub(1)].start;
        self.postfix_from(receiver, start)
    }

    /// Java-flavored member calls: `x.isEmpty()`, `Double.isNaN(x)`, ...
    fn postfix_from(&mut self, mut receiver: Expr, start: usize) -> Result<Expr, NormalizeError> {
        while self.peek().tok == Tok::Dot {
            if self.dialect == Dialect::Canonical {
                return Err(self.error(&["operator", "end of input"]).into());
            }
            self.bump();
            let name_tok = self.bump();
            let Tok::Ident(name) = name_tok.tok else {
                return Err(SyntaxError {
                    offset: name_tok.start,
                    expected: vec!["member name".into()],
                    found: name_tok.tok.to_string(),
                }
                .into());
            };
            let mut end = name_tok.end;
            let args = if self.peek().tok == Tok::LParen {
                self.bump();
                let args = self.args()?;
                end = self.toks[self.pos - 1].end;
                Some(args)
            } else {
                None
            };
            let idiom = &self.src[start..end];
            receiver = map_member(receiver, &name, args).ok_or_else(|| NormalizeError::Unsupported {
                idiom: idiom.to_string(),
                offset: start,
            })?;
        }
        Ok(receiver)
    }

    fn args(&mut self) -> Result<Vec<Expr>, NormalizeError> {
        let mut args = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr(0)?);
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.error(&["`,`", "`)`"]).into()),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, NormalizeError> {
        let here = self.peek().clone();
        match here.tok {
            Tok::Int(n) => {
                self.bump();
                let value = i64::try_from(n).map_err(|_| SyntaxError {
                    offset: here.start,
                    expected: vec!["integer literal within 64 bits".into()],
                    found: format!("`{n}`"),
                })?;
                Ok(Expr::int(value))
            }
            Tok::Decimal(d) => {
                self.bump();
                Ok(Expr::decimal(d))
            }
            Tok::Text(t) => {
                self.bump();
                Ok(Expr::text(t))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "true" => Ok(Expr::boolean(true)),
                    "false" => Ok(Expr::boolean(false)),
                    "null" => Ok(Expr::Literal(Literal::Null)),
                    "result" => Ok(Expr::Result),
                    "this" => {
                        self.expect(Tok::Dot, "`.`")?;
                        let field = self.bump();
                        match field.tok {
                            Tok::Ident(f) if !is_keyword(&f) => Ok(Expr::Field(f)),
                            other => Err(SyntaxError {
                                offset: field.start,
                                expected: vec!["field name".into()],
                                found: other.to_string(),
                            }
                            .into()),
                        }
                    }
                    "old" => {
                        self.expect(Tok::LParen, "`(`")?;
                        let inner = self.expr(0)?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(Expr::old(inner))
                    }
                    _ if self.peek().tok == Tok::LParen => self.call(name, here.start),
                    _ => Ok(Expr::Ident(name)),
                }
            }
            _ => Err(self.error(&EXPRESSION_START).into()),
        }
    }

    fn call(&mut self, name: String, start: usize) -> Result<Expr, NormalizeError> {
        self.bump();
        let args = self.args()?;
        let Some(builtin) = Builtin::from_name(&name) else {
            if self.dialect == Dialect::JavaLike {
                return Err(NormalizeError::Unsupported {
                    idiom: self.src[start..self.toks[self.pos - 1].end].to_string(),
                    offset: start,
                });
            }
            return Err(SyntaxError {
                offset: start,
                expected: Builtin::ALL.iter().map(|b| format!("`{}`", b.name())).collect(),
                found: format!("`{name}`"),
            }
            .into());
        };
        let (lo, hi) = builtin.arity();
        if args.len() < lo || args.len() > hi {
            let expected = if lo == hi {
                format!("{lo} argument(s) to `{}`", builtin.name())
            } else {
                format!("at least {lo} arguments to `{}`", builtin.name())
            };
            return Err(SyntaxError {
                offset: start,
                expected: vec![expected],
                found: format!("{} argument(s)", args.len()),
            }
            .into());
        }
        Ok(Expr::call(builtin, args))
    }
}

fn is_keyword(name: &str) -> bool {
    matches!(name, "true" | "false" | "null" | "result" | "this" | "old")
}

fn map_member(receiver: Expr, name: &str, args: Option<Vec<Expr>>) -> Option<Expr> {
    let args = args?;
    let static_owner = match &receiver {
        Expr::Ident(owner) => Some(owner.as_str()),
        _ => None,
    };
    let one = |args: &[Expr]| (args.len() == 1).then(|| args[0].clone());
    match (static_owner, name) {
        (Some("Double" | "Float"), "isNaN") => Some(Expr::call(Builtin::IsNan, vec![one(&args)?])),
        (Some("Double" | "Float"), "isInfinite") => {
            Some(Expr::call(Builtin::IsInfinite, vec![one(&args)?]))
        }
        (Some("Double" | "Float"), "isFinite") => {
            Some(Expr::call(Builtin::IsFinite, vec![one(&args)?]))
        }
        (Some("Math"), "abs") => Some(Expr::call(Builtin::Abs, vec![one(&args)?])),
        (Some("Math"), "min") if args.len() == 2 => Some(Expr::call(Builtin::Min, args)),
        (Some("Math"), "max") if args.len() == 2 => Some(Expr::call(Builtin::Max, args)),
        (Some("Objects"), "isNull") => Some(Expr::call(Builtin::IsNull, vec![one(&args)?])),
        (Some("Objects"), "nonNull") => {
            Some(Expr::not(Expr::call(Builtin::IsNull, vec![one(&args)?])))
        }
        (_, "isEmpty") if args.is_empty() => Some(Expr::call(Builtin::IsEmpty, vec![receiver])),
        (_, "length" | "size") if args.is_empty() => Some(Expr::call(Builtin::Len, vec![receiver])),
        (_, "equals") => Some(Expr::binary(BinaryOp::Eq, receiver, one(&args)?)),
        _ => None,
    }
}

/// Rewrites Java null tests into the `is_null` builtin.
pub(crate) fn rewrite_null_tests(expr: Expr) -> Expr {
    expr.rewrite(&mut |e| match e {
        Expr::Binary(op @ (BinaryOp::Eq | BinaryOp::Ne), l, r) => {
            let operand = match (*l, *r) {
                (Expr::Literal(Literal::Null), other) | (other, Expr::Literal(Literal::Null)) => {
                    Ok(other)
                }
                (l, r) => Err((l, r)),
            };
            match operand {
                Ok(Expr::Literal(Literal::Null)) => Expr::boolean(op == BinaryOp::Eq),
                Ok(x) => {
                    let test = Expr::call(Builtin::IsNull, vec![x]);
                    if op == BinaryOp::Eq {
                        test
                    } else {
                        Expr::not(test)
                    }
                }
                Err((l, r)) => Expr::binary(op, l, r),
            }
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pin_range_is_a_conjunction_of_comparisons() {
        let e = parse("0 <= pin && pin <= 9999").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::And,
                Expr::binary(BinaryOp::Le, Expr::int(0), Expr::ident("pin")),
                Expr::binary(BinaryOp::Le, Expr::ident("pin"), Expr::int(9999)),
            )
        );
    }

    #[test]
    fn boolean_literal() {
        assert_eq!(parse("true").unwrap(), Expr::boolean(true));
    }

    #[test]
    fn old_on_the_left_of_an_equality() {
        let expected = Expr::binary(
            BinaryOp::Eq,
            Expr::binary(BinaryOp::Add, Expr::old(Expr::field("balance")), Expr::ident("amount")),
            Expr::field("balance"),
        );
        assert_eq!(parse("old(this.balance) + amount == this.balance").unwrap(), expected);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse("a || b && c").unwrap(),
            Expr::binary(
                BinaryOp::Or,
                Expr::ident("a"),
                Expr::binary(BinaryOp::And, Expr::ident("b"), Expr::ident("c"))
            )
        );
        assert_eq!(
            parse("a - b - c").unwrap(),
            Expr::binary(
                BinaryOp::Sub,
                Expr::binary(BinaryOp::Sub, Expr::ident("a"), Expr::ident("b")),
                Expr::ident("c")
            )
        );
        assert_eq!(
            parse("-x * 2").unwrap(),
            Expr::binary(BinaryOp::Mul, Expr::neg(Expr::ident("x")), Expr::int(2))
        );
    }

    #[test]
    fn negative_literals_fold_including_i64_min() {
        assert_eq!(parse("-9223372036854775808").unwrap(), Expr::int(i64::MIN));
        assert_eq!(parse("-(5)").unwrap(), Expr::neg(Expr::int(5)));
        assert!(parse("9223372036854775808").is_err());
    }

    #[test]
    fn decimals_and_exponents() {
        assert_eq!(parse("1e12").unwrap(), Expr::decimal(1e12));
        assert_eq!(parse("2.5E-3").unwrap(), Expr::decimal(2.5e-3));
        assert_eq!(parse("100.0").unwrap(), Expr::decimal(100.0));
    }

    #[test]
    fn errors_carry_offset_and_expectations() {
        let err = parse("pin >= &&").unwrap_err();
        assert_eq!(err.offset, 7);
        assert!(err.expected.iter().any(|e| e == "identifier"));

        let err = parse("(a && b").unwrap_err();
        assert_eq!(err.offset, 7);
        assert_eq!(err.expected, vec!["`)`"]);

        let err = parse("frobnicate(x)").unwrap_err();
        assert!(err.expected.contains(&"`is_null`".to_string()));

        assert!(parse("").is_err());
        assert!(parse("   ").is_err());
        assert!(parse("x.isEmpty()").is_err());
        assert!(parse("is_null(a, b)").is_err());
        assert!(parse("a % 2").is_err());
        assert!(parse("\"open").is_err());
    }

    #[test]
    fn text_escapes() {
        assert_eq!(parse(r#""a\"b\\c\u{1f600}""#).unwrap(), Expr::text("a\"b\\c\u{1f600}"));
    }

    #[test]
    fn java_members_map_to_builtins() {
        let e = parse_dialect("!accountNumber.isEmpty()", Dialect::JavaLike).unwrap();
        assert_eq!(e, Expr::not(Expr::call(Builtin::IsEmpty, vec![Expr::ident("accountNumber")])));
        let e = parse_dialect("Double.isNaN(this.balance)", Dialect::JavaLike).unwrap();
        assert_eq!(e, Expr::call(Builtin::IsNan, vec![Expr::field("balance")]));
        let err = parse_dialect("name.trim().isEmpty()", Dialect::JavaLike).unwrap_err();
        assert_eq!(
            err,
            NormalizeError::Unsupported { idiom: "name.trim()".into(), offset: 0 }
        );
    }
}
