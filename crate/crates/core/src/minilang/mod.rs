//! MiniLang: a small deterministic imperative language with built-in tests.
//!
//! A compilation unit holds `fn` definitions and `test` blocks. Values are
//! 64-bit wrapping integers, booleans and integer arrays (copied on
//! assignment). Every executed statement and every evaluated expression costs
//! one interpreter step; a test that runs out of steps ends with
//! [`TestStatus::BudgetExceeded`].
//!
//! ```text
//! fn add_one(a) { return a + 1; }
//! test adds { assert_eq(add_one(1), 2); }
//! ```

mod ast;
mod interp;
mod lexer;
mod parser;

pub use ast::*;
pub use interp::{
    list_tests, run_test, run_test_with, RunLimits, TestOutcome, TestStatus, Value, DEFAULT_MAX_CALL_DEPTH,
    DEFAULT_STEP_BUDGET,
};
pub use lexer::{lex, lex_lenient, Keyword, Punct, Token, TokenKind};
pub use parser::parse;

/// Functions callable without a definition.
pub const BUILTINS: [&str; 1] = ["len"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: u32, column: u32, message: String },
    #[error("duplicate {kind} `{name}` at line {line}")]
    Duplicate { kind: &'static str, name: String, line: u32 },
    #[error("line {line}: {message}")]
    Semantic { line: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("unknown test `{0}`")]
    UnknownTest(String),
    #[error("step budget must be positive")]
    ZeroBudget,
}
