//! A second, deliberately naive evaluator for integer/boolean expressions,
//! plus a random generator that emits them as source text. Shares no code
//! with the library's parser or evaluator.

use std::collections::BTreeMap;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Or => "||",
            Op::And => "&&",
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
        }
    }

    fn prec(self) -> u8 {
        match self {
            Op::Or => 1,
            Op::And => 2,
            Op::Eq | Op::Ne | Op::Lt | Op::Le | Op::Gt | Op::Ge => 3,
            Op::Add | Op::Sub => 4,
            Op::Mul | Op::Div => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum O {
    Int(i64),
    Bool(bool),
    Var(String),
    Not(Box<O>),
    Neg(Box<O>),
    Bin(Op, Box<O>, Box<O>),
    Call(Func, Vec<O>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V {
    Int(i64),
    Bool(bool),
}

/// Three-valued verdict of a boolean root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Indeterminate,
}

pub type OEnv = BTreeMap<String, i64>;

/// `None` stands for every kind of indeterminacy.
pub fn eval(o: &O, env: &OEnv) -> Option<V> {
    match o {
        O::Int(n) => Some(V::Int(*n)),
        O::Bool(b) => Some(V::Bool(*b)),
        O::Var(name) => env.get(name).map(|n| V::Int(*n)),
        O::Not(inner) => match eval(inner, env)? {
            V::Bool(b) => Some(V::Bool(!b)),
            V::Int(_) => None,
        },
        O::Neg(inner) => match eval(inner, env)? {
            V::Int(n) => n.checked_neg().map(V::Int),
            V::Bool(_) => None,
        },
        O::Bin(Op::And, l, r) => match eval(l, env)? {
            V::Bool(false) => Some(V::Bool(false)),
            V::Bool(true) => match eval(r, env)? {
                V::Bool(b) => Some(V::Bool(b)),
                V::Int(_) => None,
            },
            V::Int(_) => None,
        },
        O::Bin(Op::Or, l, r) => match eval(l, env)? {
            V::Bool(true) => Some(V::Bool(true)),
            V::Bool(false) => match eval(r, env)? {
                V::Bool(b) => Some(V::Bool(b)),
                V::Int(_) => None,
            },
            V::Int(_) => None,
        },
        O::Bin(op, l, r) => {
            let a = eval(l, env)?;
            let b = eval(r, env)?;
            match (op, a, b) {
                (Op::Eq, V::Int(x), V::Int(y)) => Some(V::Bool(x == y)),
                (Op::Eq, V::Bool(x), V::Bool(y)) => Some(V::Bool(x == y)),
                (Op::Ne, V::Int(x), V::Int(y)) => Some(V::Bool(x != y)),
                (Op::Ne, V::Bool(x), V::Bool(y)) => Some(V::Bool(x != y)),
                (Op::Lt, V::Int(x), V::Int(y)) => Some(V::Bool(x < y)),
                (Op::Le, V::Int(x), V::Int(y)) => Some(V::Bool(x <= y)),
                (Op::Gt, V::Int(x), V::Int(y)) => Some(V::Bool(x > y)),
                (Op::Ge, V::Int(x), V::Int(y)) => Some(V::Bool(x >= y)),
                (Op::Add, V::Int(x), V::Int(y)) => x.checked_add(y).map(V::Int),
                (Op::Sub, V::Int(x), V::Int(y)) => x.checked_sub(y).map(V::Int),
                (Op::Mul, V::Int(x), V::Int(y)) => x.checked_mul(y).map(V::Int),
                (Op::Div, V::Int(x), V::Int(y)) => x.checked_div(y).map(V::Int),
                _ => None,
            }
        }
        O::Call(f, args) => {
            let mut ints = Vec::new();
            for a in args {
                match eval(a, env)? {
                    V::Int(n) => ints.push(n),
                    V::Bool(_) => return None,
                }
            }
            match f {
                Func::Abs => ints[0].checked_abs().map(V::Int),
                Func::Min => ints.iter().min().copied().map(V::Int),
                Func::Max => ints.iter().max().copied().map(V::Int),
            }
        }
    }
}

pub fn verdict(o: &O, env: &OEnv) -> Verdict {
    match eval(o, env) {
        Some(V::Bool(true)) => Verdict::Holds,
        Some(V::Bool(false)) => Verdict::Violated,
        _ => Verdict::Indeterminate,
    }
}

fn prec(o: &O) -> u8 {
    match o {
        O::Int(n) if *n < 0 => 6,
        O::Bin(op, ..) => op.prec(),
        O::Not(_) | O::Neg(_) => 6,
        _ => 7,
    }
}

/// Source text. `minimal` leans on precedence and left associativity;
/// otherwise every compound subterm is parenthesized.
pub fn print(o: &O, minimal: bool) -> String {
    print_at(o, 0, minimal)
}

fn print_at(o: &O, min: u8, minimal: bool) -> String {
    let body = match o {
        O::Int(n) => n.to_string(),
        O::Bool(b) => b.to_string(),
        O::Var(v) => v.clone(),
        O::Not(inner) => format!("!{}", print_at(inner, 7, minimal)),
        O::Neg(inner) => format!("-{}", print_at(inner, 7, minimal)),
        O::Bin(op, l, r) => {
            let p = op.prec();
            format!("{} {} {}", print_at(l, p, minimal), op.symbol(), print_at(r, p + 1, minimal))
        }
        O::Call(f, args) => {
            let name = match f {
                Func::Abs => "abs",
                Func::Min => "min",
                Func::Max => "max",
            };
            let args: Vec<String> = args.iter().map(|a| print_at(a, 0, minimal)).collect();
            format!("{name}({})", args.join(", "))
        }
    };
    let wrap = if minimal { prec(o) < min } else { prec(o) < 7 && min > 0 };
    if wrap {
        format!("({body})")
    } else {
        body
    }
}

pub const BOUND: [&str; 3] = ["x", "y", "z"];

fn gen_int_leaf(rng: &mut impl Rng) -> O {
    match rng.random_range(0..40) {
        0 => O::Int(i64::MAX),
        1 => O::Int(-i64::MAX),
        2..=4 => O::Int(0),
        5..=18 => O::Int(rng.random_range(-10..=10)),
        19 => O::Var("w".into()),
        _ => O::Var(BOUND[rng.random_range(0..BOUND.len())].into()),
    }
}

pub fn gen_int(rng: &mut impl Rng, depth: u32) -> O {
    if depth == 0 || rng.random_bool(0.3) {
        return gen_int_leaf(rng);
    }
    let d = depth - 1;
    match rng.random_range(0..10) {
        0 => O::Neg(Box::new(gen_int(rng, d))),
        1 => O::Call(Func::Abs, vec![gen_int(rng, d)]),
        2 => O::Call(if rng.random_bool(0.5) { Func::Min } else { Func::Max }, vec![gen_int(rng, d), gen_int(rng, d)]),
        _ => {
            let op = [Op::Add, Op::Sub, Op::Mul, Op::Div][rng.random_range(0..4)];
            O::Bin(op, Box::new(gen_int(rng, d)), Box::new(gen_int(rng, d)))
        }
    }
}

/// A boolean-rooted expression of nesting depth at most `depth`. About one
/// node in forty is deliberately ill-typed.
pub fn gen_bool(rng: &mut impl Rng, depth: u32) -> O {
    if depth == 0 {
        return if rng.random_ratio(1, 20) { gen_int_leaf(rng) } else { O::Bool(rng.random_bool(0.5)) };
    }
    let d = depth - 1;
    match rng.random_range(0..40) {
        0 => gen_int(rng, d),
        1..=3 => O::Bool(rng.random_bool(0.5)),
        4..=7 => O::Not(Box::new(gen_bool(rng, d))),
        8..=15 => O::Bin(Op::And, Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d))),
        16..=23 => O::Bin(Op::Or, Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d))),
        24..=25 => {
            let op = if rng.random_bool(0.5) { Op::Eq } else { Op::Ne };
            O::Bin(op, Box::new(gen_bool(rng, d)), Box::new(gen_bool(rng, d)))
        }
        _ => {
            let op = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge][rng.random_range(0..6)];
            O::Bin(op, Box::new(gen_int(rng, d)), Box::new(gen_int(rng, d)))
        }
    }
}

pub fn gen_env(rng: &mut impl Rng) -> OEnv {
    BOUND
        .iter()
        .map(|name| {
            let v = match rng.random_range(0..30) {
                0 => i64::MAX,
                1 => i64::MIN,
                2 => 0,
                _ => rng.random_range(-6..=6),
            };
            (name.to_string(), v)
        })
        .collect()
}

pub fn depth(o: &O) -> u32 {
    match o {
        O::Int(_) | O::Bool(_) | O::Var(_) => 0,
        O::Not(i) | O::Neg(i) => 1 + depth(i),
        O::Bin(_, l, r) => 1 + depth(l).max(depth(r)),
        O::Call(_, args) => 1 + args.iter().map(depth).max().unwrap_or(0),
    }
}
