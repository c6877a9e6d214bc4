//! Source-level mutant generation and application.
//!
//! Six operator kinds are supported: relational, arithmetic and logical
//! operator replacement, plus condition negation and replacement of an
//! `if`/`while` condition by `true` or `false`. Only function bodies are
//! mutated; test blocks never are. Every mutant is a single edit of one byte
//! range of the original source.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::minilang::{lex_lenient, walk_exprs, walk_stmts, BinOp, ExprKind, FunctionDef, Program, Span, StmtKind, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "ROR")]
    Ror,
    #[serde(rename = "AOR")]
    Aor,
    #[serde(rename = "LOR")]
    Lor,
    #[serde(rename = "COND_NEG")]
    CondNeg,
    #[serde(rename = "COND_TRUE")]
    CondTrue,
    #[serde(rename = "COND_FALSE")]
    CondFalse,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Ror,
        OperatorKind::Aor,
        OperatorKind::Lor,
        OperatorKind::CondNeg,
        OperatorKind::CondTrue,
        OperatorKind::CondFalse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Ror => "ROR",
            OperatorKind::Aor => "AOR",
            OperatorKind::Lor => "LOR",
            OperatorKind::CondNeg => "COND_NEG",
            OperatorKind::CondTrue => "COND_TRUE",
            OperatorKind::CondFalse => "COND_FALSE",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary operators in sub-operator id order.
const SUB_OPERATOR_TABLE: [BinOp; 13] = [
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Rem,
    BinOp::And,
    BinOp::Or,
];

/// Size of the sub-operator one-hot: 13 replacement operators plus the three
/// condition rewrites.
pub const SUB_OPERATOR_COUNT: usize = SUB_OPERATOR_TABLE.len() + 3;

/// Operator kind plus the concrete replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MutationOperator {
    pub kind: OperatorKind,
    /// Replacement binary operator for ROR/AOR/LOR.
    pub replacement: Option<BinOp>,
}

impl MutationOperator {
    pub fn sub_operator_id(&self) -> usize {
        match (self.kind, self.replacement) {
            (OperatorKind::CondNeg, _) => SUB_OPERATOR_TABLE.len(),
            (OperatorKind::CondTrue, _) => SUB_OPERATOR_TABLE.len() + 1,
            (OperatorKind::CondFalse, _) => SUB_OPERATOR_TABLE.len() + 2,
            (_, Some(op)) => SUB_OPERATOR_TABLE.iter().position(|o| *o == op).expect("table is total"),
            (_, None) => unreachable!("operator replacement without target"),
        }
    }

    pub fn sub_operator(&self) -> &'static str {
        match self.kind {
            OperatorKind::CondNeg => "neg",
            OperatorKind::CondTrue => "true",
            OperatorKind::CondFalse => "false",
            _ => self.replacement.expect("replacement operator").symbol(),
        }
    }

    pub fn from_parts(kind: OperatorKind, sub: &str) -> Option<Self> {
        let replacement = match kind {
            OperatorKind::CondNeg if sub == "neg" => None,
            OperatorKind::CondTrue if sub == "true" => None,
            OperatorKind::CondFalse if sub == "false" => None,
            OperatorKind::Ror => Some(BinOp::from_symbol(sub).filter(|o| o.is_relational())?),
            OperatorKind::Aor => Some(BinOp::from_symbol(sub).filter(|o| o.is_arithmetic())?),
            OperatorKind::Lor => Some(BinOp::from_symbol(sub).filter(|o| o.is_logical())?),
            _ => return None,
        };
        Some(MutationOperator { kind, replacement })
    }

    fn sort_key(&self) -> (usize, usize) {
        (self.kind.index(), self.sub_operator_id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutationError {
    #[error("mutant {id}: span {start}..{end} does not match the source")]
    SpanMismatch { id: String, start: usize, end: usize },
}

/// One application of a mutation operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MutantRecord", into = "MutantRecord")]
pub struct Mutant {
    pub id: String,
    pub project: String,
    pub operator: MutationOperator,
    pub function: String,
    pub line: u32,
    pub span: Span,
    pub before: Vec<String>,
    pub after: Vec<String>,
    /// Exact original text of `span`.
    pub before_text: String,
    /// Exact replacement text.
    pub after_text: String,
}

impl Mutant {
    fn new(project: &str, function: &str, line: u32, span: Span, operator: MutationOperator, before_text: &str, after_text: String) -> Self {
        let mut m = Mutant {
            id: String::new(),
            project: project.to_string(),
            operator,
            function: function.to_string(),
            line,
            span,
            before: token_texts(before_text),
            after: token_texts(&after_text),
            before_text: before_text.to_string(),
            after_text,
        };
        m.id = m.content_id();
        m
    }

    /// Content hash over every identifying field.
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.project.as_str(),
            self.operator.kind.name(),
            self.operator.sub_operator(),
            self.function.as_str(),
            &self.line.to_string(),
            &self.span.start.to_string(),
            &self.span.end.to_string(),
            &self.before.join(" "),
            &self.after.join(" "),
        ] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Byte range the replacement occupies in the mutated source.
    pub fn mutated_span(&self) -> Span {
        Span::new(self.span.start, self.span.start + self.after_text.len())
    }
}

/// Wire form of a mutant in `mutants.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MutantRecord {
    id: String,
    project: String,
    operator: OperatorKind,
    sub_operator: String,
    function: String,
    line: u32,
    span: [usize; 2],
    before: Vec<String>,
    after: Vec<String>,
    before_text: String,
    after_text: String,
}

impl From<Mutant> for MutantRecord {
    fn from(m: Mutant) -> Self {
        MutantRecord {
            id: m.id,
            project: m.project,
            operator: m.operator.kind,
            sub_operator: m.operator.sub_operator().to_string(),
            function: m.function,
            line: m.line,
            span: [m.span.start, m.span.end],
            before: m.before,
            after: m.after,
            before_text: m.before_text,
            after_text: m.after_text,
        }
    }
}

impl TryFrom<MutantRecord> for Mutant {
    type Error = String;

    fn try_from(r: MutantRecord) -> Result<Self, String> {
        let operator = MutationOperator::from_parts(r.operator, &r.sub_operator)
            .ok_or_else(|| format!("invalid sub_operator `{}` for {}", r.sub_operator, r.operator))?;
        if r.span[0] > r.span[1] {
            return Err(format!("inverted span {:?}", r.span));
        }
        Ok(Mutant {
            id: r.id,
            project: r.project,
            operator,
            function: r.function,
            line: r.line,
            span: Span::new(r.span[0], r.span[1]),
            before: r.before,
            after: r.after,
            before_text: r.before_text,
            after_text: r.after_text,
        })
    }
}

fn token_texts(text: &str) -> Vec<String> {
    lex_lenient(text).iter().map(Token::text).collect()
}

/// Every mutant of `program`, ordered by line, span, then operator.
pub fn generate_mutants(program: &Program) -> Vec<Mutant> {
    generate_project_mutants("", program)
}

/// As [`generate_mutants`], tagging (and hashing) each mutant with a project name.
pub fn generate_project_mutants(project: &str, program: &Program) -> Vec<Mutant> {
    let mut out = Vec::new();
    for f in &program.functions {
        function_mutants(project, program, f, &mut out);
    }
    out.sort_by(|a, b| {
        (a.line, a.span.start, a.span.end, a.operator.sort_key()).cmp(&(b.line, b.span.start, b.span.end, b.operator.sort_key()))
    });
    out.dedup_by(|a, b| a.id == b.id);
    out
}

fn function_mutants(project: &str, program: &Program, f: &FunctionDef, out: &mut Vec<Mutant>) {
    walk_exprs(&f.body, &mut |e| {
        let ExprKind::Binary { op, op_span, op_line, .. } = &e.kind else { return };
        let family: &[BinOp] = if op.is_relational() {
            &BinOp::RELATIONAL
        } else if op.is_arithmetic() {
            &BinOp::ARITHMETIC
        } else {
            &BinOp::LOGICAL
        };
        let kind = if op.is_relational() {
            OperatorKind::Ror
        } else if op.is_arithmetic() {
            OperatorKind::Aor
        } else {
            OperatorKind::Lor
        };
        for &to in family.iter().filter(|&&to| to != *op) {
            let operator = MutationOperator { kind, replacement: Some(to) };
            out.push(Mutant::new(project, &f.name, *op_line, *op_span, operator, program.slice(*op_span), to.symbol().to_string()));
        }
    });

    walk_stmts(&f.body, &mut |s| {
        let cond = match &s.kind {
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond,
            _ => return,
        };
        let text = program.slice(cond.span);
        let mut push = |kind, after: String| {
            let operator = MutationOperator { kind, replacement: None };
            out.push(Mutant::new(project, &f.name, cond.line, cond.span, operator, text, after));
        };
        push(OperatorKind::CondNeg, format!("!({text})"));
        if cond.kind != ExprKind::Bool(true) {
            push(OperatorKind::CondTrue, "true".to_string());
        }
        if cond.kind != ExprKind::Bool(false) {
            push(OperatorKind::CondFalse, "false".to_string());
        }
    });
}

/// Applies a mutant to the source it was generated from.
pub fn apply_mutant(source: &str, mutant: &Mutant) -> Result<String, MutationError> {
    let Span { start, end } = mutant.span;
    let mismatch = || MutationError::SpanMismatch { id: mutant.id.clone(), start, end };
    let original = source.get(start..end).ok_or_else(mismatch)?;
    if original != mutant.before_text || token_texts(original) != mutant.before {
        return Err(mismatch());
    }
    Ok(splice(source, mutant.span, &mutant.after_text))
}

/// Undoes [`apply_mutant`] on a mutated source, restoring the original bytes.
pub fn revert_mutant(mutated: &str, mutant: &Mutant) -> Result<String, MutationError> {
    let span = mutant.mutated_span();
    let mismatch = || MutationError::SpanMismatch { id: mutant.id.clone(), start: span.start, end: span.end };
    if mutated.get(span.start..span.end).ok_or_else(mismatch)? != mutant.after_text {
        return Err(mismatch());
    }
    Ok(splice(mutated, span, &mutant.before_text))
}

fn splice(text: &str, span: Span, replacement: &str) -> String {
    let mut out = String::with_capacity(text.len() + replacement.len());
    out.push_str(&text[..span.start]);
    out.push_str(replacement);
    out.push_str(&text[span.end..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;

    fn mutants_of(src: &str) -> Vec<Mutant> {
        generate_mutants(&parse(src).unwrap())
    }

    #[test]
    fn ror_site_yields_five_replacements() {
        let ms = mutants_of("fn f(a,b){ return a == b; }");
        let subs: Vec<_> = ms.iter().map(|m| m.operator.sub_operator()).collect();
        assert_eq!(subs, ["!=", "<", "<=", ">", ">="]);
        assert!(ms.iter().all(|m| m.operator.kind == OperatorKind::Ror && m.before == ["=="]));
    }

    #[test]
    fn aor_and_cond_rewrites() {
        let src = "fn f(a,b){ if (a == b) { return a + b; } return 0; }";
        let ms = mutants_of(src);
        let add_to_sub = ms.iter().find(|m| m.operator.sub_operator() == "-").unwrap();
        assert!(apply_mutant(src, add_to_sub).unwrap().contains("return a - b;"));
        let neg = ms.iter().find(|m| m.operator.kind == OperatorKind::CondNeg).unwrap();
        assert!(apply_mutant(src, neg).unwrap().contains("if (!(a == b))"));
        assert_eq!(neg.after, ["!", "(", "a", "==", "b", ")"]);
        // 5 ROR + 4 AOR + 3 condition rewrites.
        assert_eq!(ms.len(), 12);
    }

    #[test]
    fn nothing_to_mutate() {
        assert!(mutants_of("fn f(a){ let x = [a]; return x[0]; } test t{ assert_eq(1+1,2); }").is_empty());
    }

    #[test]
    fn literal_conditions_skip_identity_rewrites() {
        let ms = mutants_of("fn f(){ while (true) { return 1; } return 0; }");
        let kinds: Vec<_> = ms.iter().map(|m| m.operator.kind).collect();
        assert_eq!(kinds, [OperatorKind::CondNeg, OperatorKind::CondFalse]);
    }

    #[test]
    fn order_is_line_then_span_then_operator() {
        let ms = mutants_of("fn f(a,b){\n if (a < b && b > 0) { return a * b; }\n return 0;\n}");
        let keys: Vec<_> = ms.iter().map(|m| (m.line, m.span.start, m.span.end, m.operator.sort_key())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let ids: std::collections::HashSet<_> = ms.iter().map(|m| &m.id).collect();
        assert_eq!(ids.len(), ms.len());
    }

    #[test]
    fn stale_mutant_is_rejected() {
        let src = "fn f(a){ return a + 1; }";
        let m = &mutants_of(src)[0];
        assert!(matches!(apply_mutant("fn f(a){ return a * 1; }", m), Err(MutationError::SpanMismatch { .. })));
        assert!(apply_mutant("", m).is_err());
    }

    #[test]
    fn apply_then_revert_is_identity() {
        let src = "fn f(a){\n  while (a>0 // spans lines\n && a != 3) { a = a - 1; }\n  return a % 2;\n}".to_string();
        for m in mutants_of(&src) {
            let mutated = apply_mutant(&src, &m).unwrap();
            parse(&mutated).unwrap();
            assert_eq!(revert_mutant(&mutated, &m).unwrap(), src);
        }
    }

    #[test]
    fn jsonl_round_trip_and_ids_are_stable() {
        let ms = mutants_of("fn f(a){ if (a > 1) { return 1; } return a - 1; }");
        for m in &ms {
            let line = serde_json::to_string(m).unwrap();
            assert!(line.contains("\"sub_operator\""));
            let back: Mutant = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, m);
            assert_eq!(back.content_id(), m.id);
        }
        assert_eq!(ms, mutants_of("fn f(a){ if (a > 1) { return 1; } return a - 1; }"));
    }

    #[test]
    fn project_name_changes_ids() {
        let p = parse("fn f(a){ return a + 1; }").unwrap();
        assert_ne!(generate_project_mutants("x", &p)[0].id, generate_project_mutants("y", &p)[0].id);
    }
}
