//! The contract expression language: values, syntax, normalization of
//! Java-flavored LLM output, and three-valued evaluation.

mod analysis;
mod ast;
mod clause;
mod eval;
mod normalize;
mod parser;
mod value;

pub use analysis::{extract_atoms, free_identifiers, Atom, FreeIdentifiers};
pub use ast::{BinaryOp, Builtin, Expr, Literal, UnaryOp};
pub use clause::{validate_for_kind, ClauseError, ClauseKind, ClauseWire, ContractClause};
pub use eval::{eval_value, evaluate, Env, EvalOutcome, Indeterminacy};
pub use normalize::{normalize, normalize_expr, rewrite_constructor_precondition, FieldRewrite};
pub use parser::{parse, Dialect, NormalizeError, SyntaxError};
pub use value::{cmp_int_decimal, format_decimal, SemanticType, Value};
