use std::collections::HashMap;

/// Half-open byte range into the program's source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start, other.end)
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub const RELATIONAL: [BinOp; 6] = [BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge];
    pub const ARITHMETIC: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem];
    pub const LOGICAL: [BinOp; 2] = [BinOp::And, BinOp::Or];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Self::RELATIONAL
            .iter()
            .chain(Self::ARITHMETIC.iter())
            .chain(Self::LOGICAL.iter())
            .copied()
            .find(|op| op.symbol() == s)
    }

    pub fn is_relational(self) -> bool {
        Self::RELATIONAL.contains(&self)
    }

    pub fn is_arithmetic(self) -> bool {
        Self::ARITHMETIC.contains(&self)
    }

    pub fn is_logical(self) -> bool {
        Self::LOGICAL.contains(&self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Array(Vec<Expr>),
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Unary {
        op: UnOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinOp,
        op_span: Span,
        op_line: u32,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let { name: String, value: Expr },
    Assign { name: String, value: Expr },
    AssignIndex { name: String, index: Expr, value: Expr },
    If { cond: Expr, then_block: Vec<Stmt>, else_block: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Assert(Expr),
    AssertEq(Expr, Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    /// From `fn` through the closing brace.
    pub span: Span,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDef {
    pub name: String,
    pub body: Vec<Stmt>,
    pub span: Span,
    pub line: u32,
}

/// A parsed compilation unit.
#[derive(Debug, Clone)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
    pub tests: Vec<TestDef>,
    pub source_text: String,
    pub(crate) line_starts: Vec<usize>,
    pub(crate) fn_index: HashMap<String, usize>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.fn_index.get(name).map(|&i| &self.functions[i])
    }

    pub fn test(&self, name: &str) -> Option<&TestDef> {
        self.tests.iter().find(|t| t.name == name)
    }

    /// Source text of a span.
    pub fn slice(&self, span: Span) -> &str {
        &self.source_text[span.start..span.end]
    }

    /// 1-based (line, column) of a byte offset; columns count chars.
    pub fn line_col(&self, offset: usize) -> (u32, u32) {
        let line_idx = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let col = self.source_text[self.line_starts[line_idx]..offset].chars().count();
        (line_idx as u32 + 1, col as u32 + 1)
    }

    /// Number of lines in the source text.
    pub fn line_count(&self) -> u32 {
        self.line_starts.len() as u32
    }

    /// Byte range of a 1-based line, excluding its newline.
    pub fn line_span(&self, line: u32) -> Option<Span> {
        let idx = line.checked_sub(1)? as usize;
        let start = *self.line_starts.get(idx)?;
        let end = self
            .line_starts
            .get(idx + 1)
            .map(|&next| next - 1)
            .unwrap_or(self.source_text.len());
        Some(Span::new(start, end))
    }

    /// The function whose definition span contains `span`.
    pub fn enclosing_function(&self, span: Span) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.span.contains(&span))
    }
}

pub(crate) fn line_starts(text: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect()
}

/// Visits every expression in a statement list, pre-order.
pub fn walk_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for s in stmts {
        walk_stmt_exprs(s, f);
    }
}

fn walk_stmt_exprs<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &stmt.kind {
        StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => walk_expr(value, f),
        StmtKind::AssignIndex { index, value, .. } => {
            walk_expr(index, f);
            walk_expr(value, f);
        }
        StmtKind::If { cond, then_block, else_block } => {
            walk_expr(cond, f);
            walk_exprs(then_block, f);
            if let Some(e) = else_block {
                walk_exprs(e, f);
            }
        }
        StmtKind::While { cond, body } => {
            walk_expr(cond, f);
            walk_exprs(body, f);
        }
        StmtKind::Return(Some(e)) | StmtKind::Assert(e) | StmtKind::Expr(e) => walk_expr(e, f),
        StmtKind::Return(None) => {}
        StmtKind::AssertEq(a, b) => {
            walk_expr(a, f);
            walk_expr(b, f);
        }
    }
}

pub fn walk_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    match &expr.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
        ExprKind::Array(items) => items.iter().for_each(|e| walk_expr(e, f)),
        ExprKind::Index { base, index } => {
            walk_expr(base, f);
            walk_expr(index, f);
        }
        ExprKind::Call { args, .. } => args.iter().for_each(|e| walk_expr(e, f)),
        ExprKind::Unary { operand, .. } => walk_expr(operand, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, f);
            walk_expr(rhs, f);
        }
    }
}

/// Visits every statement, pre-order, descending into nested blocks.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { then_block, else_block, .. } => {
                walk_stmts(then_block, f);
                if let Some(e) = else_block {
                    walk_stmts(e, f);
                }
            }
            StmtKind::While { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}
